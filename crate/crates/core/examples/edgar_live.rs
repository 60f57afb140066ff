//! Fetches the latest 10-K for a ticker from SEC EDGAR and splits it into
//! sections. Needs network access and a contact string for the User-Agent:
//!
//! `EDGAR_USER_AGENT="Jane Doe jane@example.com" cargo run --example edgar_live -- AAPL`

use std::sync::Arc;

use analyst_pod::skills::filings::plain_text;
use analyst_pod::skills::{parse_sections, EdgarClient, ReqwestTransport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ticker = std::env::args().nth(1).unwrap_or_else(|| "NVDA".into());
    let Ok(agent) = std::env::var("EDGAR_USER_AGENT") else {
        eprintln!("set EDGAR_USER_AGENT to a contact string (name and email) to run this example");
        return Ok(());
    };
    let transport = ReqwestTransport::new(&agent)?.with_max_rate(5.0);
    let client = EdgarClient::new(Arc::new(transport));

    let (cik, name) = client.lookup_cik(&ticker)?;
    println!("{ticker}: {name} (CIK {cik})");
    let filing = client.latest_filing(&ticker, "10-K")?;
    println!(
        "{} {} filed {} for period {}",
        filing.form_type, filing.accession, filing.filed, filing.period
    );
    println!("{}", filing.url);
    let text = plain_text(&filing.body);
    for (section, start, end) in parse_sections(&text) {
        println!("  {section:<20} {} chars", end - start);
    }
    Ok(())
}
