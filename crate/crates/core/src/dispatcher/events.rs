//! Per-engagement event log: append-only, sequence-numbered, replayable.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskStarted,
    TaskDone,
    TaskError,
    TaskSkipped,
    EngagementDone,
    EngagementAborted,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TaskStarted => "task_started",
            EventKind::TaskDone => "task_done",
            EventKind::TaskError => "task_error",
            EventKind::TaskSkipped => "task_skipped",
            EventKind::EngagementDone => "engagement_done",
            EventKind::EngagementAborted => "engagement_aborted",
        }
    }

    pub fn is_task_terminal(self) -> bool {
        matches!(
            self,
            EventKind::TaskDone | EventKind::TaskError | EventKind::TaskSkipped
        )
    }

    pub fn is_engagement_terminal(self) -> bool {
        matches!(
            self,
            EventKind::EngagementDone | EventKind::EngagementAborted
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub engagement_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub event: EventKind,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub sequence_no: u64,
}

impl TaskEvent {
    /// The single-line JSON document used on the wire and on disk.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

#[derive(Debug, Default)]
struct LogState {
    events: Vec<TaskEvent>,
    running: bool,
}

#[derive(Debug)]
pub struct EventLog {
    engagement_id: String,
    state: Mutex<LogState>,
    changed: Condvar,
    path: Option<PathBuf>,
}

impl EventLog {
    pub fn in_memory(engagement_id: &str) -> Self {
        Self {
            engagement_id: engagement_id.to_string(),
            state: Mutex::new(LogState::default()),
            changed: Condvar::new(),
            path: None,
        }
    }

    /// Opens (or creates) a log persisted as newline-delimited JSON at `path`,
    /// loading any events already there.
    pub fn open(engagement_id: &str, path: &Path) -> std::io::Result<Self> {
        let mut events = Vec::new();
        if path.is_file() {
            for line in std::fs::read_to_string(path)?.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                let e: TaskEvent = serde_json::from_str(line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                events.push(e);
            }
        }
        Ok(Self {
            engagement_id: engagement_id.to_string(),
            state: Mutex::new(LogState {
                events,
                running: false,
            }),
            changed: Condvar::new(),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn engagement_id(&self) -> &str {
        &self.engagement_id
    }

    /// Assigns the next sequence number under the log lock, persists, then wakes subscribers.
    pub fn append(
        &self,
        event: EventKind,
        task_id: Option<&str>,
        detail: Option<String>,
        timestamp: DateTime<Utc>,
    ) -> TaskEvent {
        let mut st = self.state.lock().expect("event log poisoned");
        let e = TaskEvent {
            engagement_id: self.engagement_id.clone(),
            task_id: task_id.map(String::from),
            event,
            timestamp,
            detail,
            sequence_no: st.events.last().map_or(1, |l| l.sequence_no + 1),
        };
        if let Some(path) = &self.path {
            let written = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{}", e.to_line()));
            if let Err(err) = written {
                tracing::error!("cannot persist event to {}: {err}", path.display());
            }
        }
        st.events.push(e.clone());
        drop(st);
        self.changed.notify_all();
        e
    }

    pub fn set_running(&self, running: bool) {
        self.state.lock().expect("event log poisoned").running = running;
        self.changed.notify_all();
    }

    pub fn is_running(&self) -> bool {
        self.state.lock().expect("event log poisoned").running
    }

    pub fn events(&self) -> Vec<TaskEvent> {
        self.state
            .lock()
            .expect("event log poisoned")
            .events
            .clone()
    }

    pub fn last_sequence(&self) -> u64 {
        self.state
            .lock()
            .expect("event log poisoned")
            .events
            .last()
            .map_or(0, |e| e.sequence_no)
    }

    /// Events with `sequence_no > after`, waiting up to `timeout` for at least
    /// one while the engagement is running. The flag is true once the log is
    /// drained and the engagement is no longer running.
    pub fn wait_after(&self, after: u64, timeout: Duration) -> (Vec<TaskEvent>, bool) {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().expect("event log poisoned");
        loop {
            let fresh: Vec<TaskEvent> = st
                .events
                .iter()
                .filter(|e| e.sequence_no > after)
                .cloned()
                .collect();
            if !fresh.is_empty() {
                return (fresh, false);
            }
            if !st.running {
                return (Vec::new(), true);
            }
            let now = Instant::now();
            if now >= deadline {
                return (Vec::new(), false);
            }
            st = self
                .changed
                .wait_timeout(st, deadline - now)
                .expect("event log poisoned")
                .0;
        }
    }

    /// A blocking iterator: replays from sequence 1, then tails until the
    /// engagement stops running.
    pub fn subscribe(self: &Arc<Self>) -> Subscription {
        self.subscribe_after(0)
    }

    pub fn subscribe_after(self: &Arc<Self>, after: u64) -> Subscription {
        Subscription {
            log: Arc::clone(self),
            cursor: after,
            buffer: Vec::new(),
        }
    }
}

pub struct Subscription {
    log: Arc<EventLog>,
    cursor: u64,
    buffer: Vec<TaskEvent>,
}

impl Iterator for Subscription {
    type Item = TaskEvent;

    fn next(&mut self) -> Option<TaskEvent> {
        loop {
            if !self.buffer.is_empty() {
                let e = self.buffer.remove(0);
                self.cursor = e.sequence_no;
                return Some(e);
            }
            let (fresh, closed) = self.log.wait_after(self.cursor, Duration::from_millis(250));
            if closed {
                return None;
            }
            self.buffer = fresh;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_numbers_and_replay() {
        let log = Arc::new(EventLog::in_memory("e1"));
        log.set_running(true);
        let t = Utc::now();
        log.append(EventKind::TaskStarted, Some("a"), None, t);
        let sub = log.subscribe();
        let writer = {
            let log = log.clone();
            std::thread::spawn(move || {
                log.append(EventKind::TaskDone, Some("a"), None, t);
                log.append(EventKind::EngagementDone, None, None, t);
                log.set_running(false);
            })
        };
        let seen: Vec<u64> = sub.map(|e| e.sequence_no).collect();
        writer.join().unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
        let replay: Vec<u64> = log.subscribe().map(|e| e.sequence_no).collect();
        assert_eq!(replay, seen);
    }

    #[test]
    fn persisted_log_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let log = EventLog::open("e2", &path).unwrap();
        log.append(
            EventKind::TaskSkipped,
            Some("x"),
            Some("upstream".into()),
            Utc::now(),
        );
        let again = EventLog::open("e2", &path).unwrap();
        assert_eq!(again.events(), log.events());
        assert_eq!(again.last_sequence(), 1);
    }
}
