use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use td_lsys::divergence::{self, OffPolicySpec};
use td_lsys::experiment::{run_experiment, ExperimentConfig, RunOptions, Stage};
use td_lsys::instances::{generate_random_mdp, RandomMdpSpec};
use td_lsys::mdp::MdpDocument;

#[derive(Parser)]
#[command(name = "td-lsys", version, about = "TD(0) as a stochastic linear system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to one stage: exact, mc, bounds, stein or divergence.
        #[arg(long)]
        only: Option<Stage>,
        /// Output directory (overrides TD_LSYS_OUT and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a seeded random ergodic MDP document.
    GenMdp {
        #[arg(long)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        reward_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        concentration: f64,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in demonstrations.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Off-policy divergence on the one-state, two-action MDP.
    Remark1 {
        #[arg(long)]
        epsilon: f64,
        /// Longest forced streak to tabulate.
        #[arg(long, default_value_t = 10)]
        max_n: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> td_lsys::Result<ExitCode> {
    match cli.command {
        Command::Run { config, only, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, &RunOptions { only, out_dir: out, seed })?;
            for check in report.failed_checks() {
                eprintln!("{:?} check failed: {} ({})", check.kind, check.name, check.detail);
            }
            println!(
                "wrote {} files to {}; {} hard / {} statistical failures",
                report.files.len(),
                report.out_dir.display(),
                report.hard_failures,
                report.statistical_failures
            );
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::GenMdp {
            states,
            actions,
            gamma,
            seed,
            reward_scale,
            concentration,
            out,
        } => {
            let spec = RandomMdpSpec {
                reward_scale,
                concentration,
                ..RandomMdpSpec::new(states, actions, gamma, seed)
            };
            let (mdp, policy) = generate_random_mdp(&spec)?;
            let text = MdpDocument::from_parts(&mdp, &policy).to_json_pretty()?;
            match out {
                Some(path) => std::fs::write(&path, text + "\n").map_err(|e| td_lsys::Error::io(&path, e))?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    match writeln!(stdout, "{text}") {
                        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                            return Err(td_lsys::Error::io("<stdout>", e));
                        }
                        _ => {}
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo {
            demo: Demo::Remark1 {
                epsilon,
                max_n,
                runs,
                horizon,
                seed,
            },
        } => {
            let spec = OffPolicySpec::new(epsilon)?;
            let coef = divergence::coefficient(&spec);
            println!(
                "epsilon = {epsilon}: slope {coef} ({}), threshold epsilon > {}",
                if divergence::diverges(&spec) { "expansive" } else { "contractive" },
                divergence::divergence_threshold(spec.gamma)
            );
            let forced = divergence::forced_sequence(&spec, max_n.max(1))?;
            let report = divergence::sampled_demo(&spec, runs, horizon, seed)?;
            println!("{:>4} {:>16} {:>12} {:>12}", "N", "V_N", "(1-eps)^N", "observed");
            for n in 1..=max_n.min(horizon) {
                let prob = (1.0 - epsilon).powi(n as i32);
                let freq = report.streak_frequency(n)?;
                println!("{n:>4} {:>16.6} {prob:>12.6} {:>12.6}", forced.values[n], freq.p());
            }
            println!("max |V| over {runs} runs of {horizon} steps: {}", report.largest());
            println!("replay error vs closed form: {:e}", report.max_replay_error);
            for bin in report.histogram(&divergence::decade_edges(6)) {
                println!("  [{:>9}, {:>9}) {}", bin.lo, bin.hi, bin.count);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
