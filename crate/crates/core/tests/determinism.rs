use convergence::sim::{run_scenario, simulate, Scenario};

fn shipped() -> Vec<(String, String)> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn load(name: &str) -> Scenario {
    let (_, text) = shipped().into_iter().find(|(n, _)| n == name).unwrap();
    Scenario::from_toml(&text).unwrap()
}

#[test]
fn shipped_scenarios_round_trip_byte_identical() {
    let all = shipped();
    assert!(all.len() >= 8);
    for (name, text) in all {
        let s = Scenario::from_toml(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        s.validate().unwrap();
        let once = s.to_toml();
        assert_eq!(Scenario::from_toml(&once).unwrap().to_toml(), once, "{name}");
        assert_eq!(s.name, name);
    }
}

#[test]
fn equal_scenarios_give_identical_runs() {
    let s = load("mapping_bug");
    let (a, la) = run_scenario(&s).unwrap();
    let (b, lb) = run_scenario(&s).unwrap();
    assert_eq!(la.digest(), lb.digest());
    assert_eq!(la.entries(), lb.entries());
    assert_eq!(a, b);
    assert_eq!(a.passed(), b.passed());
    let (_, lc) = simulate(&s.clone().with_seed(99)).unwrap();
    assert_ne!(la.digest(), lc.digest());
}

#[test]
fn empty_scenario_reports_full_rates() {
    let (r, log) = run_scenario(&load("empty")).unwrap();
    assert!(r.passed());
    assert_eq!(r.outcome.attempts, 0);
    assert_eq!(r.outcome.attempts_ratio, None);
    assert!(!r.outcome.samples.is_empty());
    for s in &r.outcome.samples {
        assert_eq!((s.overall_rate, s.settled_rate, s.total_keys), (1.0, 1.0, 0));
    }
    assert!(log.len() >= 2);
}

#[test]
fn oracle_agrees_on_shipped_scenarios() {
    // the 100k-record scenarios run in the acceptance suite
    for name in ["empty", "catch_all", "mapping_bug", "many_to_many", "anti_resurrection"] {
        let (r, _) = run_scenario(&load(name)).unwrap();
        let failed: Vec<_> = r.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
    }
}
