use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use convergence::metrics::EventLog;
use convergence::sim::{oracle_verify, run_scenario, RunReport, Scenario};

#[derive(Parser)]
#[command(version, about = "Run, verify and report migration scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and check its assertions.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the event log, report and effective scenario.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay an event log through the oracle.
    Verify { eventlog: PathBuf, scenario: PathBuf },
    /// Print the report of an earlier run.
    Report { run_dir: PathBuf },
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::from_toml(&text).with_context(|| format!("in {}", path.display()))?)
}

fn run(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<bool> {
    let mut scenario = load_scenario(path)?;
    if let Some(s) = seed {
        scenario = scenario.with_seed(s);
    }
    let (report, log) = run_scenario(&scenario)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("scenario.toml"), scenario.to_toml())?;
        let mut w = BufWriter::new(File::create(dir.join("eventlog.jsonl"))?);
        log.write_jsonl(&mut w)?;
        w.flush()?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(dir.join("report.txt"), report.to_text())?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(report.passed())
}

fn verify(log_path: &Path, scenario_path: &Path) -> Result<bool> {
    let scenario = load_scenario(scenario_path)?;
    let file = File::open(log_path).with_context(|| format!("opening {}", log_path.display()))?;
    let log = EventLog::read_jsonl(BufReader::new(file))?;
    let oracle = oracle_verify(&log, &scenario)?;
    println!("{} entries, sha256 {}", log.len(), log.digest());
    println!("final diff over {} keys: {} inconsistent", oracle.final_keys, oracle.final_inconsistent());
    for c in &oracle.checks {
        println!("[{}] {:<28} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(oracle.passed())
}

fn report(dir: &Path) -> Result<bool> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: RunReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    print!("{}", report.to_text());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run { scenario, seed, out } => run(scenario, *seed, out.as_deref()),
        Cmd::Verify { eventlog, scenario } => verify(eventlog, scenario),
        Cmd::Report { run_dir } => report(run_dir),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
