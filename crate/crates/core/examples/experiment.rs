//! End-to-end experiment from a JSON config, writing CSV/JSON reports.
//!
//! cargo run --release --example experiment -- [config.json] [out-dir]

use std::path::PathBuf;

use td_lsys::experiment::{run_experiment, ExperimentConfig, RunOptions};

fn main() -> td_lsys::Result<()> {
    let mut args = std::env::args().skip(1);
    let config_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/paper-demo.json"));
    let out_dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("td-lsys-example"));
    let config = ExperimentConfig::load(&config_path)?;
    let report = run_experiment(
        &config,
        &RunOptions {
            out_dir: Some(out_dir),
            ..Default::default()
        },
    )?;
    println!("wrote {:?} to {}", report.files, report.out_dir.display());
    for check in &report.checks {
        println!("  [{}] {:?} {}", if check.passed { "ok" } else { "FAIL" }, check.kind, check.name);
    }
    println!("{} hard / {} statistical failures", report.hard_failures, report.statistical_failures);
    Ok(())
}
