//! Time source for artifacts and events.
//!
//! The logical clock makes whole engagements bit-reproducible: every reading
//! advances a counter by one second from a fixed origin.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};

#[derive(Debug)]
pub enum Clock {
    System,
    Logical {
        origin: DateTime<Utc>,
        ticks: AtomicI64,
    },
}

impl Clock {
    pub fn system() -> Self {
        Clock::System
    }

    /// Logical clock starting at 2026-01-01T00:00:00Z.
    pub fn logical() -> Self {
        Self::logical_from(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap())
    }

    pub fn logical_from(origin: DateTime<Utc>) -> Self {
        Clock::Logical {
            origin,
            ticks: AtomicI64::new(0),
        }
    }

    pub fn is_logical(&self) -> bool {
        matches!(self, Clock::Logical { .. })
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Logical { origin, ticks } => {
                let t = ticks.fetch_add(1, Ordering::SeqCst);
                *origin + chrono::Duration::seconds(t)
            }
        }
    }
}
