//! A mapping bug that fails one key in ten: the queue retries each affected
//! key until it dead-letters, the dead letters are the signal, and after the
//! fix and a requeue everything converges.

use convergence::sim::{run_scenario, Scenario};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/mapping_bug.toml");
    let s = Scenario::from_toml(&std::fs::read_to_string(path)?)?;
    let (r, log) = run_scenario(&s)?;
    let dead = log.entries().iter().filter(|e| matches!(e.event, convergence::metrics::LogEvent::DeadLettered { .. })).count();
    println!("{dead} keys dead-lettered while the bug was live; fix at t={:?}", s.bug.as_ref().and_then(|b| b.fixed_at));
    println!("{:>6} {:>9} {:>9} {:>6}", "tick", "overall", "settled", "queue");
    for x in r.outcome.samples.iter().step_by(4) {
        println!("{:>6} {:>9.4} {:>9.4} {:>6}", x.at, x.overall_rate, x.settled_rate, x.queue_length);
    }
    println!("dead letters left {}, passed {}", r.outcome.dead_letters.len(), r.passed());
    Ok(())
}
