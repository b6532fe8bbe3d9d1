//! Bootstrap backfill shares a per-tick capacity with live dual writes and
//! only takes what live traffic leaves. Live write latency is the same with
//! and without the backfill running.

use convergence::sim::{simulate, BootstrapChoice, Scenario};

fn main() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/backfill_priority.toml");
    let with = Scenario::from_toml(&std::fs::read_to_string(path)?)?;
    let mut without = with.clone();
    without.pipeline.bootstrap = BootstrapChoice::Off;
    let (a, _) = simulate(&with)?;
    let (b, _) = simulate(&without)?;
    println!("capacity {} per tick", with.pipeline.limiter_capacity);
    println!("with bootstrap:    live latency {:?}", a.stats.live_latency.buckets());
    println!("without bootstrap: live latency {:?}", b.stats.live_latency.buckets());
    println!("identical: {}", a.stats.live_latency == b.stats.live_latency);
    if let Some(boot) = &a.bootstrap {
        println!("bootstrap {} records over {} ticks, peak backfill {} per tick, ticks over capacity {}", boot.records, boot.duration, a.stats.peak_backfill, a.stats.backfill_violations);
    }
    Ok(())
}
