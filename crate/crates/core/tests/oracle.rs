use convergence::metrics::{EventLog, LogEvent};
use convergence::ramp::{RampMode, RampPlan};
use convergence::schemas;
use convergence::sim::{oracle_verify, run_scenario, simulate, ttc_from_log, Burst, Scenario};

fn small() -> Scenario {
    let mut s = Scenario::default_scenario();
    s.name = "small".into();
    s.population.initial_records = 300;
    s.start = 600;
    s.end = 1400;
    s.workload.bursts = vec![Burst { at: 700, size: 200 }];
    s.ramp = Some(RampPlan { bulk_freeze_lead: 100, ..RampPlan::at(1300) });
    s.pipeline.offline_every = Some(120);
    s.pipeline.offline_cutoff = 60;
    s.metrics.sample_every = 20;
    s.expect = Default::default();
    s
}

fn rebuild(log: &EventLog, f: impl Fn(&mut LogEvent)) -> EventLog {
    let mut out = EventLog::new();
    for e in log.entries() {
        let mut ev = e.event.clone();
        f(&mut ev);
        out.push(e.time, ev);
    }
    out
}

#[test]
fn healthy_run_has_no_disagreements() {
    let s = small();
    let (r, _) = run_scenario(&s).unwrap();
    assert!(r.oracle.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    assert_eq!(r.oracle.final_inconsistent(), 0);
    assert!(r.oracle.samples_checked > 10);
    assert_eq!(r.oracle.attempts, r.outcome.attempts);
}

#[test]
fn forced_flip_lost_updates_match() {
    let mut s = small();
    s.ramp.as_mut().unwrap().mode = RampMode::Forced;
    let mut found_loss = false;
    for seed in 1..=6 {
        let (r, _) = run_scenario(&s.clone().with_seed(seed)).unwrap();
        let sw = r.outcome.switch.clone().unwrap();
        assert_eq!(sw.mode, RampMode::Forced);
        assert!(r.oracle.check("lost_updates").unwrap().passed, "seed {seed}");
        assert!(r.oracle.check("frozen_after_switch").unwrap().passed);
        found_loss |= sw.lost_updates > 0;
    }
    assert!(found_loss);
}

#[test]
fn tampered_logs_are_caught() {
    let s = small();
    let (_, log) = simulate(&s).unwrap();
    assert!(oracle_verify(&log, &s).unwrap().passed());

    let bumped = rebuild(&log, |e| {
        if let LogEvent::Sample { report } = e {
            report.queue_length += 1;
        }
    });
    assert!(!oracle_verify(&bumped, &s).unwrap().check("samples").unwrap().passed);

    let ttc = rebuild(&log, |e| {
        if let LogEvent::Sample { report } = e {
            report.window_ttc += 1;
        }
    });
    assert!(!oracle_verify(&ttc, &s).unwrap().check("samples").unwrap().passed);

    let wrong_settle = rebuild(&log, |e| {
        if let LogEvent::Settled { counter, .. } = e {
            *counter += 1000;
        }
    });
    assert!(!oracle_verify(&wrong_settle, &s).unwrap().check("settlement").unwrap().passed);

    let attempts = rebuild(&log, |e| {
        if let LogEvent::RunEnd { attempts, .. } = e {
            *attempts += 1;
        }
    });
    assert!(!oracle_verify(&attempts, &s).unwrap().check("attempts").unwrap().passed);
}

#[test]
fn log_survives_jsonl_round_trip() {
    let s = small();
    let (_, log) = simulate(&s).unwrap();
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    let back = EventLog::read_jsonl(&buf[..]).unwrap();
    assert_eq!(back.digest(), log.digest());
    assert_eq!(oracle_verify(&back, &s).unwrap(), oracle_verify(&log, &s).unwrap());
}

#[test]
fn ttc_needs_every_update_settled() {
    let schema = schemas::recruiting();
    let mut log = EventLog::new();
    log.push(10, LogEvent::Commit { key: convergence::domain::EntityKey::new("project", 1), counter: 1, value: Some(Default::default()) });
    assert_eq!(ttc_from_log(&log, &schema, 0, 20), None);
    assert_eq!(ttc_from_log(&EventLog::new(), &schema, 0, 20), Some(0));
}
