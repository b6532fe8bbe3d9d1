//! Write a run's event log as JSON lines, read it back and let the oracle
//! recompute everything from the log alone. A tampered log is caught.

use convergence::metrics::{EventLog, LogEvent};
use convergence::sim::{oracle_verify, simulate, Scenario};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/mapping_bug.toml");
    let s = Scenario::from_toml(&std::fs::read_to_string(path)?)?;
    let (_, log) = simulate(&s)?;
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf)?;
    let back = EventLog::read_jsonl(&buf[..])?;
    println!("{} entries, {} bytes, digest {}", back.len(), buf.len(), back.digest());
    for c in oracle_verify(&back, &s)?.checks {
        println!("  [{}] {} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }

    let mut forged = EventLog::new();
    for e in back.entries() {
        let mut ev = e.event.clone();
        if let LogEvent::Sample { report } = &mut ev {
            report.inconsistent_keys = 0;
        }
        forged.push(e.time, ev);
    }
    let r = oracle_verify(&forged, &s)?;
    println!("forged samples: {}", r.check("samples").map_or("missing".into(), |c| c.detail.clone()));
    Ok(())
}
