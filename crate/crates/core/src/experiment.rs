//! Config-driven end-to-end runs that write CSV/JSON reports.
//!
//! A run loads or generates an MDP, propagates exact moments, evaluates the
//! bounds at each probe step, optionally simulates a TD(0) ensemble, solves
//! the Stein certificate, and optionally runs the off-policy divergence demo.
//! Every comparison becomes a [`Check`]; deterministic ones are *hard* and
//! decide the exit status, sampling-based ones are *statistical* and are
//! reported only. Outputs carry no timestamps, so reruns are byte-identical.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bounds::{schedule_bound, BoundReport};
use crate::divergence::{self, OffPolicySpec};
use crate::error::{Error, Result};
use crate::instances::{generate_random_mdp, RandomMdpSpec};
use crate::linalg::vec_inf_norm;
use crate::linear_model::{build_system, LinearSystemModel};
use crate::mdp::{induce_chain, InducedChain, MdpDocument};
use crate::moments::{propagate_correlation, MomentState, MomentTrajectory};
use crate::simulator::{run_rng, run_td, EnsembleStats, RunConfig};
use crate::stein::{lyapunov_decrement_check, stein_solve};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "TD_LSYS_OUT";
pub const DEFAULT_OUT_DIR: &str = "td-lsys-out";
/// Standard-error multiplier for statistical checks.
pub const Z: f64 = 3.0;
/// Relative slack on the mean bound to absorb rounding in `A^k x0`.
pub const MEAN_BOUND_SLACK: f64 = 1e-12;
/// Grid points this close to the divergence threshold are not classified.
pub const THRESHOLD_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// Path to an MDP document; relative paths resolve against the config file.
    File(PathBuf),
    Random(RandomMdpSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    pub epsilons: Vec<f64>,
    pub n_runs: usize,
    pub horizon: usize,
    #[serde(default = "default_streaks")]
    pub streak_lengths: Vec<usize>,
}

fn default_streaks() -> Vec<usize> {
    vec![1, 2, 3]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub alpha: f64,
    pub horizon: usize,
    pub probe_steps: Vec<usize>,
    pub n_runs: usize,
    pub seed: u64,
    /// Initial values; zeros when absent.
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
    /// Radii for the probability floors.
    #[serde(default)]
    pub epsilon_list: Vec<f64>,
    /// Horizons `T` for the `alpha = 1/sqrt(T)` averaged-iterate check.
    #[serde(default)]
    pub schedule_horizons: Vec<usize>,
    #[serde(default)]
    pub divergence: Option<DivergenceConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads a config, resolving a relative MDP file path against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json_str(&text)?;
        if let MdpSource::File(file) = &mut config.mdp {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::AssumptionViolated(format!(
                "step size {} not in (0, 1)",
                self.alpha
            )));
        }
        if self.probe_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "probe_steps must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.probe_steps.last() {
            if last > self.horizon {
                return Err(Error::InvalidArgument(format!(
                    "probe step {last} beyond horizon {}",
                    self.horizon
                )));
            }
        }
        if let Some(eps) = self.epsilon_list.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::InvalidArgument(format!("epsilon {eps} must be positive")));
        }
        if self.schedule_horizons.contains(&0) {
            return Err(Error::InvalidArgument("schedule horizons must be >= 1".into()));
        }
        if let Some(v0) = &self.v0 {
            let sup = v0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(sup <= 1.0) {
                return Err(Error::AssumptionViolated(format!(
                    "initial iterate has sup norm {sup} > 1"
                )));
            }
        }
        if let Some(div) = &self.divergence {
            for &eps in &div.epsilons {
                OffPolicySpec::new(eps)?;
            }
            if let Some(&n) = div.streak_lengths.iter().find(|&&n| n == 0 || n > div.horizon) {
                return Err(Error::InvalidArgument(format!(
                    "streak length {n} must be in 1..={}",
                    div.horizon
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exact,
    Mc,
    Bounds,
    Stein,
    Divergence,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Exact, Stage::Mc, Stage::Bounds, Stage::Stein, Stage::Divergence];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Exact => "exact",
            Stage::Mc => "mc",
            Stage::Bounds => "bounds",
            Stage::Stein => "stein",
            Stage::Divergence => "divergence",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Restrict to one stage; all stages when absent.
    pub only: Option<Stage>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Output directory: explicit override, then `TD_LSYS_OUT`, then the config,
/// then [`DEFAULT_OUT_DIR`].
pub fn resolve_output_dir(explicit: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Deterministic; a failure means a defect or a violated assumption.
    Hard,
    /// Sampling-based, judged with a `3 SE` window.
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub stages: Vec<Stage>,
    pub n_states: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    pub n_runs: usize,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    pub hard_failures: usize,
    pub statistical_failures: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.hard_failures == 0
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Loads or generates the MDP named by the config and induces its chain.
pub fn load_chain(source: &MdpSource) -> Result<InducedChain> {
    let (mdp, policy) = match source {
        MdpSource::File(path) => MdpDocument::load(path)?,
        MdpSource::Random(spec) => generate_random_mdp(spec)?,
    };
    induce_chain(&mdp, &policy)
}

struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, name: impl Into<String>, kind: CheckKind, passed: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.into(),
            kind,
            passed,
            detail: detail.into(),
        });
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn flag(b: bool) -> String {
    (if b { "1" } else { "0" }).to_string()
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Runs the configured stages and writes the report bundle.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    config.validate()?;
    let stages: BTreeSet<Stage> = match options.only {
        Some(s) => [s].into(),
        None => Stage::ALL.into(),
    };
    let chain = load_chain(&config.mdp)?;
    let model = build_system(&chain, config.alpha)?;
    if !model.in_paper_regime() {
        return Err(Error::AssumptionViolated(format!(
            "rewards must satisfy R_max <= 1 (R_max = {})",
            chain.r_max()
        )));
    }
    let n = model.n_states();
    let v0 = DVector::from_vec(config.v0.clone().unwrap_or_else(|| vec![0.0; n]));
    if v0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "v0 has {} entries, expected {n}",
            v0.len()
        )));
    }
    let x0 = model.to_error(&v0);

    let out_dir = resolve_output_dir(options.out_dir.as_deref(), &config);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut writer = Writer {
        dir: out_dir.clone(),
        files: Vec::new(),
    };
    let mut checks = Checks(Vec::new());
    writer.json("model.json", &model.dump())?;

    let cert = model.infinity_norm_certificate();
    checks.push(
        "system_matrix_norm",
        CheckKind::Hard,
        cert.holds() && model.a_matrix.iter().all(|&a| a >= 0.0),
        format!("||A||_inf = {}, rho = {}", cert.norm, cert.rho),
    );

    let needs_exact = stages.contains(&Stage::Exact) || stages.contains(&Stage::Bounds) || stages.contains(&Stage::Mc);
    let traj = if needs_exact {
        let traj = propagate_correlation(&model, &MomentState::initial(&x0), config.horizon)?;
        checks.push("moments_psd", CheckKind::Hard, true, format!("{} steps", config.horizon));
        Some(traj)
    } else {
        None
    };

    if stages.contains(&Stage::Exact) {
        let traj = traj.as_ref().expect("exact trajectory");
        write_moments(&mut writer, &model, traj, &mut checks)?;
    }

    let ensemble = if stages.contains(&Stage::Mc) && config.n_runs > 0 {
        run_ensemble(&chain, &config, &v0, &mut checks)?
    } else {
        None
    };

    if let (Some(traj), Some(stats)) = (&traj, &ensemble) {
        write_mc(&mut writer, traj, stats, &mut checks)?;
    }

    if stages.contains(&Stage::Bounds) {
        let traj = traj.as_ref().expect("exact trajectory");
        write_bounds(&mut writer, &model, &x0, &config, traj, ensemble.as_ref(), &mut checks)?;
        if stages.contains(&Stage::Mc) && config.n_runs > 0 && !config.schedule_horizons.is_empty() {
            write_schedule(&mut writer, &chain, &config, &v0, &x0, &mut checks)?;
        }
    }

    if stages.contains(&Stage::Stein) {
        write_stein(&mut writer, &model, config.seed, &mut checks)?;
    }

    if stages.contains(&Stage::Divergence) {
        if let Some(div) = &config.divergence {
            write_divergence(&mut writer, div, config.seed, &mut checks)?;
        }
    }

    let checks = checks.0;
    let hard_failures = checks.iter().filter(|c| !c.passed && c.kind == CheckKind::Hard).count();
    let statistical_failures = checks
        .iter()
        .filter(|c| !c.passed && c.kind == CheckKind::Statistical)
        .count();
    writer.files.push("summary.json".to_string());
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        stages: stages.into_iter().collect(),
        n_states: n,
        alpha: config.alpha,
        gamma: model.gamma(),
        seed: config.seed,
        n_runs: config.n_runs,
        files: writer.files.clone(),
        checks,
        hard_failures,
        statistical_failures,
        out_dir,
    };
    writer.json("summary.json", &report)?;
    Ok(report)
}

fn write_moments(
    writer: &mut Writer,
    model: &LinearSystemModel,
    traj: &MomentTrajectory,
    checks: &mut Checks,
) -> Result<()> {
    let rows: Vec<Vec<String>> = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, st)| {
            vec![
                k.to_string(),
                f(st.trace()),
                f(vec_inf_norm(&st.mean)),
                f(st.mean.norm()),
                opt(traj.noise_trace.get(k).copied()),
                opt(traj.noise_lambda_max.get(k).copied()),
            ]
        })
        .collect();
    writer.csv(
        "moments.csv",
        &["k", "trace", "mean_inf", "mean_l2", "noise_trace", "noise_lambda_max"],
        &rows,
    )?;
    let worst = traj.noise_lambda_max.iter().copied().fold(0.0, f64::max);
    checks.push(
        "noise_below_w_max",
        CheckKind::Hard,
        worst <= model.w_max,
        format!("max lambda_max(W_k) = {worst}, W_max = {}", model.w_max),
    );
    Ok(())
}

fn run_ensemble(
    chain: &InducedChain,
    config: &ExperimentConfig,
    v0: &DVector<f64>,
    checks: &mut Checks,
) -> Result<Option<EnsembleStats>> {
    let run = RunConfig {
        alpha: config.alpha,
        horizon: config.horizon,
        n_runs: config.n_runs,
        seed: config.seed,
        v0: v0.iter().copied().collect(),
        record_ks: config.probe_steps.clone(),
    };
    match run_td(chain, &run) {
        Ok(stats) => {
            checks.push(
                "iterate_sup_norm",
                CheckKind::Hard,
                stats.max_sup_norm <= stats.sup_norm_bound,
                format!("max ||V_k||_inf = {}, bound = {}", stats.max_sup_norm, stats.sup_norm_bound),
            );
            Ok(Some(stats))
        }
        Err(e @ Error::IterateBound { .. }) => {
            checks.push("iterate_sup_norm", CheckKind::Hard, false, e.to_string());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn write_mc(
    writer: &mut Writer,
    traj: &MomentTrajectory,
    stats: &EnsembleStats,
    checks: &mut Checks,
) -> Result<()> {
    let mut rows = Vec::new();
    for probe in &stats.probes {
        let exact = &traj.states[probe.k];
        for (i, est) in probe.mean.iter().enumerate() {
            rows.push(vec![
                probe.k.to_string(),
                format!("mean[{i}]"),
                f(exact.mean[i]),
                f(est.mean),
                f(est.se),
                f(est.z_score(exact.mean[i])),
            ]);
        }
        rows.push(vec![
            probe.k.to_string(),
            "trace".into(),
            f(exact.trace()),
            f(probe.mse.mean),
            f(probe.mse.se),
            f(probe.mse.z_score(exact.trace())),
        ]);
        let mean_ok = probe
            .mean
            .iter()
            .enumerate()
            .all(|(i, e)| e.within(exact.mean[i], Z));
        checks.push(
            format!("oracle_mean_k{}", probe.k),
            CheckKind::Statistical,
            mean_ok,
            "empirical mean within 3 SE of exact".to_string(),
        );
        checks.push(
            format!("oracle_trace_k{}", probe.k),
            CheckKind::Statistical,
            probe.mse.within(exact.trace(), Z),
            format!("z = {}", probe.mse.z_score(exact.trace())),
        );
    }
    writer.csv(
        "mc.csv",
        &["k", "quantity", "exact", "empirical", "se", "z"],
        &rows,
    )
}

#[allow(clippy::too_many_arguments)]
fn write_bounds(
    writer: &mut Writer,
    model: &LinearSystemModel,
    x0: &DVector<f64>,
    config: &ExperimentConfig,
    traj: &MomentTrajectory,
    stats: Option<&EnsembleStats>,
    checks: &mut Checks,
) -> Result<()> {
    // Deterministic domination on every step, not only the probes.
    let mut trace_viol = 0;
    let mut l2_viol = 0;
    let mut mean_viol = 0;
    let x0_inf = vec_inf_norm(x0);
    for (k, st) in traj.states.iter().enumerate() {
        let tb = crate::bounds::trace_bound(model, x0, k)?;
        let l2 = crate::bounds::mse_bound(model, x0, k)?.l2;
        let mb = model.rho.powi(k as i32) * x0_inf;
        trace_viol += usize::from(st.trace() > tb);
        l2_viol += usize::from(st.trace().sqrt() > l2);
        mean_viol += usize::from(vec_inf_norm(&st.mean) > mb * (1.0 + MEAN_BOUND_SLACK));
    }
    checks.push("trace_bound", CheckKind::Hard, trace_viol == 0, format!("{trace_viol} violations"));
    checks.push("l2_bound", CheckKind::Hard, l2_viol == 0, format!("{l2_viol} violations"));
    checks.push("mean_bound", CheckKind::Hard, mean_viol == 0, format!("{mean_viol} violations"));

    let header = [
        "k",
        "trace_exact",
        "mse_emp",
        "mse_se",
        "trace_bound",
        "trace_bound_tight",
        "trace_ok",
        "l2_exact",
        "l2_emp",
        "l2_se",
        "l2_bound",
        "l2_ok",
        "mean_inf_exact",
        "mean_bound",
        "mean_ok",
        "avg_emp",
        "avg_se",
        "avg_bound",
        "avg_ok",
        "bhandari_bound",
        "bhandari_ok",
    ];
    let mut rows = Vec::new();
    let mut prob_rows = Vec::new();
    for &k in &config.probe_steps {
        let report = BoundReport::evaluate(model, x0, k, &config.epsilon_list)?;
        let st = &traj.states[k];
        let probe = stats.and_then(|s| s.probe(k));
        let trace_bound = report.get("trace").expect("trace bound");
        let l2_bound = report.get("mse_l2").expect("l2 bound");
        let mean_bound = report.get("mean_inf").expect("mean bound");
        let avg_bound = report.get("avg_l2");
        let bhandari = report.get("bhandari_avg");
        let avg = probe.and_then(|p| p.avg_error);
        let avg_ok = match (avg, avg_bound) {
            (Some(a), Some(b)) => Some(a.mean <= b),
            _ => None,
        };
        let bh_ok = match (avg, bhandari) {
            (Some(a), Some(b)) => Some(a.mean <= b),
            _ => None,
        };
        if let Some(ok) = avg_ok {
            checks.push(format!("averaged_bound_k{k}"), CheckKind::Statistical, ok, format!("{} <= {}", avg.unwrap().mean, avg_bound.unwrap()));
        }
        if let Some(ok) = bh_ok {
            checks.push(format!("comparison_bound_k{k}"), CheckKind::Statistical, ok, format!("{} <= {}", avg.unwrap().mean, bhandari.unwrap()));
        }
        rows.push(vec![
            k.to_string(),
            f(st.trace()),
            opt(probe.map(|p| p.mse.mean)),
            opt(probe.map(|p| p.mse.se)),
            f(trace_bound),
            opt(report.get("trace_tight")),
            flag(st.trace() <= trace_bound),
            f(st.trace().sqrt()),
            opt(probe.map(|p| p.error_l2.mean)),
            opt(probe.map(|p| p.error_l2.se)),
            f(l2_bound),
            flag(st.trace().sqrt() <= l2_bound),
            f(vec_inf_norm(&st.mean)),
            f(mean_bound),
            flag(vec_inf_norm(&st.mean) <= mean_bound * (1.0 + MEAN_BOUND_SLACK)),
            opt(avg.map(|a| a.mean)),
            opt(avg.map(|a| a.se)),
            opt(avg_bound),
            avg_ok.map(flag).unwrap_or_default(),
            opt(bhandari),
            bh_ok.map(flag).unwrap_or_default(),
        ]);

        for fl in &report.floors {
            let cheb = probe.map(|p| p.coverage(fl.chebyshev_threshold));
            let markov = probe.map(|p| p.coverage(fl.epsilon));
            let avg_cov = probe.filter(|_| k >= 1).map(|p| p.avg_coverage(fl.epsilon));
            let covered = |cov: Option<crate::simulator::Proportion>, floor: f64| {
                cov.filter(|_| floor > 0.0).map(|c| c.p() + Z * c.se() >= floor)
            };
            let cheb_ok = covered(cheb, fl.chebyshev_floor);
            let markov_ok = covered(markov, fl.markov_floor);
            let avg_ok = fl.avg_markov_floor.and_then(|fl| covered(avg_cov, fl));
            for (name, ok) in [("chebyshev", cheb_ok), ("markov", markov_ok), ("averaged_markov", avg_ok)] {
                if let Some(ok) = ok {
                    checks.push(
                        format!("{name}_coverage_k{k}_eps{}", fl.epsilon),
                        CheckKind::Statistical,
                        ok,
                        String::new(),
                    );
                }
            }
            prob_rows.push(vec![
                k.to_string(),
                f(fl.epsilon),
                f(fl.chebyshev_threshold),
                f(fl.chebyshev_floor),
                opt(cheb.map(|c| c.p())),
                opt(cheb.map(|c| c.se())),
                cheb_ok.map(flag).unwrap_or_default(),
                f(fl.markov_floor),
                opt(markov.map(|c| c.p())),
                opt(markov.map(|c| c.se())),
                markov_ok.map(flag).unwrap_or_default(),
                opt(fl.avg_markov_floor),
                opt(avg_cov.map(|c| c.p())),
                opt(avg_cov.map(|c| c.se())),
                avg_ok.map(flag).unwrap_or_default(),
            ]);
        }
    }
    writer.csv("bounds.csv", &header, &rows)?;
    if !config.epsilon_list.is_empty() {
        writer.csv(
            "probabilities.csv",
            &[
                "k",
                "epsilon",
                "chebyshev_threshold",
                "chebyshev_floor",
                "chebyshev_coverage",
                "chebyshev_se",
                "chebyshev_ok",
                "markov_floor",
                "markov_coverage",
                "markov_se",
                "markov_ok",
                "avg_markov_floor",
                "avg_coverage",
                "avg_se",
                "avg_ok",
            ],
            &prob_rows,
        )?;
    }
    Ok(())
}

fn write_schedule(
    writer: &mut Writer,
    chain: &InducedChain,
    config: &ExperimentConfig,
    v0: &DVector<f64>,
    x0: &DVector<f64>,
    checks: &mut Checks,
) -> Result<()> {
    let mut rows = Vec::new();
    for &t in &config.schedule_horizons {
        let sb = schedule_bound(chain, x0, t)?;
        let run = RunConfig {
            alpha: sb.alpha,
            horizon: t,
            n_runs: config.n_runs,
            seed: config.seed,
            v0: v0.iter().copied().collect(),
            record_ks: vec![t],
        };
        let stats = run_td(chain, &run)?;
        let avg = stats.probes[0].avg_error.expect("T >= 1");
        checks.push(
            format!("schedule_bound_T{t}"),
            CheckKind::Statistical,
            avg.mean <= sb.bound,
            format!("{} <= {}", avg.mean, sb.bound),
        );
        rows.push(vec![
            t.to_string(),
            f(sb.alpha),
            flag(sb.clamped),
            f(avg.mean),
            f(avg.se),
            f(sb.bound),
            flag(avg.mean <= sb.bound),
        ]);
    }
    writer.csv(
        "schedule.csv",
        &["horizon", "alpha", "clamped", "avg_emp", "avg_se", "bound", "ok"],
        &rows,
    )
}

fn write_stein(writer: &mut Writer, model: &LinearSystemModel, seed: u64, checks: &mut Checks) -> Result<()> {
    let cert = stein_solve(model)?;
    let mut rng = run_rng(seed, u64::MAX);
    let decrement = lyapunov_decrement_check(model, &cert, 100, &mut rng);
    let failures = cert.failures();
    checks.push(
        "stein_certificate",
        CheckKind::Hard,
        failures.is_empty(),
        if failures.is_empty() {
            format!("residual {}", cert.residual_inf)
        } else {
            failures.join("; ")
        },
    );
    checks.push(
        "lyapunov_decrement",
        CheckKind::Hard,
        decrement.holds(),
        format!("max violation {}", decrement.max_violation),
    );
    #[derive(Serialize)]
    struct SteinOut<'a> {
        certificate: &'a crate::stein::SteinCertificate,
        lambda_bound_sq: f64,
        lambda_bound: f64,
        decrement: crate::stein::DecrementReport,
    }
    writer.json(
        "stein.json",
        &SteinOut {
            certificate: &cert,
            lambda_bound_sq: cert.lambda_bound_sq(),
            lambda_bound: cert.lambda_bound(),
            decrement,
        },
    )
}

fn write_divergence(writer: &mut Writer, div: &DivergenceConfig, seed: u64, checks: &mut Checks) -> Result<()> {
    let mut rows = Vec::new();
    for &eps in &div.epsilons {
        let spec = OffPolicySpec::new(eps)?;
        let report = divergence::sampled_demo(&spec, div.n_runs, div.horizon, seed)?;
        let threshold = divergence::divergence_threshold(spec.gamma);
        // At the threshold itself the slope is one up to rounding; skip it.
        if (eps - threshold).abs() > THRESHOLD_BAND {
            checks.push(
                format!("divergence_threshold_eps{eps}"),
                CheckKind::Hard,
                divergence::diverges(&spec) == (eps > threshold),
                format!("coefficient {}", divergence::coefficient(&spec)),
            );
        }
        checks.push(
            format!("divergence_replay_eps{eps}"),
            CheckKind::Hard,
            report.replay_holds() && spec.ratio_mismatch() <= 1e-14 * spec.ratio(divergence::TARGET_ACTION),
            format!("max replay error {}", report.max_replay_error),
        );
        for &len in &div.streak_lengths {
            let forced = divergence::forced_sequence(&spec, len)?;
            let freq = report.streak_frequency(len)?;
            let se = (forced.prob * (1.0 - forced.prob) / div.n_runs.max(1) as f64).sqrt();
            let ok = (freq.p() - forced.prob).abs() <= Z * se;
            checks.push(
                format!("streak_frequency_eps{eps}_n{len}"),
                CheckKind::Statistical,
                ok,
                format!("{} vs {}", freq.p(), forced.prob),
            );
            rows.push(vec![
                f(eps),
                f(divergence::coefficient(&spec)),
                flag(divergence::diverges(&spec)),
                len.to_string(),
                f(*forced.values.last().expect("N >= 1")),
                f(forced.prob),
                f(freq.p()),
                f(se),
                flag(ok),
                f(report.largest()),
                f(report.max_replay_error),
            ]);
        }
    }
    writer.csv(
        "divergence.csv",
        &[
            "epsilon",
            "coefficient",
            "diverges",
            "streak_length",
            "forced_value",
            "streak_prob",
            "streak_freq",
            "binomial_se",
            "streak_ok",
            "max_abs_v",
            "max_replay_error",
        ],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_json_str(
            r#"{
                "mdp": {"random": {"n_states": 3, "n_actions": 2, "gamma": 0.5, "seed": 4}},
                "alpha": 0.3, "horizon": 20, "probe_steps": [0, 5, 20],
                "n_runs": 200, "seed": 1, "epsilon_list": [50.0]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_parsing_and_validation() {
        let c = config();
        assert!(c.validate().is_ok());
        assert_eq!(c.v0, None);
        let mut bad = c.clone();
        bad.alpha = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.probe_steps = vec![5, 5];
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.v0 = Some(vec![0.0, 2.0, 0.0]);
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"mdp": {"random": {}}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn stage_names_round_trip() {
        for st in Stage::ALL {
            assert_eq!(st.name().parse::<Stage>().unwrap(), st);
        }
        assert!("everything".parse::<Stage>().is_err());
    }

    #[test]
    fn explicit_output_dir_wins() {
        let c = config();
        assert_eq!(resolve_output_dir(Some(Path::new("x")), &c), PathBuf::from("x"));
    }

    #[test]
    fn end_to_end_run_passes_hard_checks() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let report = run_experiment(&config(), &opts).unwrap();
        assert!(report.passed(), "{:?}", report.failed_checks().collect::<Vec<_>>());
        for f in ["model.json", "moments.csv", "mc.csv", "bounds.csv", "probabilities.csv", "stein.json", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
