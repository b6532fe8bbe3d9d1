//! The switch-over trade-off on one scenario: a drained ramp freezes legacy
//! writes briefly and flips with nothing lost, a forced flip keeps writes
//! open and loses whatever was still in flight.

use convergence::ramp::RampMode;
use convergence::sim::{run_scenario, Scenario};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/many_to_many.toml");
    let base = Scenario::from_toml(&std::fs::read_to_string(path)?)?;
    for mode in [RampMode::Drained, RampMode::Forced] {
        let mut s = base.clone();
        s.ramp.as_mut().expect("scenario has a ramp").mode = mode;
        s.expect = Default::default();
        let (r, _) = run_scenario(&s)?;
        let sw = r.outcome.switch.expect("ramp reached");
        println!(
            "{mode:?}: {:?} at {}, unavailable {} ticks, lost updates {}, discrepancies after switch {} (oracle ok: {})",
            sw.outcome, sw.decided_at, sw.unavailability_window, sw.lost_updates, sw.post_switch_discrepancies, r.oracle.passed()
        );
    }
    Ok(())
}
