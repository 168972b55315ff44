//! Seeded Monte Carlo ensembles of tabular TD(0) under i.i.d. sampling.
//!
//! Run `i` draws from a ChaCha8 stream keyed by `(seed, i)`, so results do not
//! depend on thread scheduling. Runs are grouped into fixed blocks; each block
//! accumulates moments sequentially and blocks are merged in index order with
//! the pairwise (Chan) update, which keeps the reduction bit-reproducible.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::vec_inf_norm;
use crate::mdp::{InducedChain, Transition, TransitionSampler};

const BLOCK: usize = 256;

/// Independent RNG stream for run `run` under master seed `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub horizon: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub v0: Vec<f64>,
    /// Sorted probe steps, each `<= horizon`.
    pub record_ks: Vec<usize>,
}

impl RunConfig {
    pub fn validate(&self, n_states: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::AssumptionViolated(format!(
                "step size {} not in (0, 1)",
                self.alpha
            )));
        }
        if self.v0.len() != n_states {
            return Err(Error::InvalidArgument(format!(
                "v0 has {} entries, expected {n_states}",
                self.v0.len()
            )));
        }
        let sup = self.v0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(sup <= 1.0) {
            return Err(Error::AssumptionViolated(format!(
                "initial iterate has sup norm {sup} > 1"
            )));
        }
        if self.record_ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "probe steps must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = self.record_ks.last() {
            if last > self.horizon {
                return Err(Error::InvalidArgument(format!(
                    "probe step {last} beyond horizon {}",
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// `|mean - target| <= z se`, with a `1e-12` relative floor so that
    /// zero-variance estimates compare exactly up to rounding.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.se + 1e-12 * target.abs().max(1.0)
    }

    /// Standardised deviation from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.se > 0.0 {
            diff / self.se
        } else if diff.abs() <= 1e-12 * target.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }
}

/// Vector of running means and centred second moments (Welford / Chan).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        let n = self.count as f64;
        let se = if self.count > 1 {
            (self.m2[i] / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean: self.mean[i],
            se,
        }
    }
}

/// Fraction of runs in which an event occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub hits: usize,
    pub n: usize,
}

impl Proportion {
    pub fn p(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.hits as f64 / self.n as f64
        }
    }

    /// Binomial standard error from the empirical frequency.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let p = self.p();
        (p * (1.0 - p) / self.n as f64).sqrt()
    }
}

/// Ensemble statistics at one probe step.
#[derive(Debug, Clone)]
pub struct ProbeStats {
    pub k: usize,
    pub mean: Vec<Estimate>,
    /// Row-major `n x n` estimates of `E[x_k x_k^T]`.
    pub corr: Vec<Estimate>,
    /// `E||x_k||_2^2`.
    pub mse: Estimate,
    /// `E||x_k||_2`.
    pub error_l2: Estimate,
    /// `E||(1/k) sum_{i<k} V_i - V^pi||_2`; absent at `k = 0`.
    pub avg_error: Option<Estimate>,
    /// Per-run `||x_k||_2` in run order.
    pub final_errors: Vec<f64>,
    /// Per-run averaged-iterate errors in run order; empty at `k = 0`.
    pub avg_errors: Vec<f64>,
}

impl ProbeStats {
    pub fn n_states(&self) -> usize {
        self.mean.len()
    }

    pub fn emp_mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.mean.len(), self.mean.iter().map(|e| e.mean))
    }

    pub fn emp_corr(&self) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_row_iterator(n, n, self.corr.iter().map(|e| e.mean))
    }

    pub fn corr_entry(&self, i: usize, j: usize) -> Estimate {
        self.corr[i * self.n_states() + j]
    }

    /// Empirical `P[||x_k||_2 < threshold]`.
    pub fn coverage(&self, threshold: f64) -> Proportion {
        Proportion {
            hits: self.final_errors.iter().filter(|&&e| e < threshold).count(),
            n: self.final_errors.len(),
        }
    }

    /// Empirical `P[||avg_k - V^pi||_2 < threshold]`.
    pub fn avg_coverage(&self, threshold: f64) -> Proportion {
        Proportion {
            hits: self.avg_errors.iter().filter(|&&e| e < threshold).count(),
            n: self.avg_errors.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_runs: usize,
    pub seed: u64,
    pub alpha: f64,
    pub probes: Vec<ProbeStats>,
    /// Largest `||V_k||_inf` over all runs and steps.
    pub max_sup_norm: f64,
    /// Deterministic envelope `max{R_max, ||V_0||_inf} / (1 - gamma)`.
    pub sup_norm_bound: f64,
}

impl EnsembleStats {
    pub fn probe(&self, k: usize) -> Option<&ProbeStats> {
        self.probes.iter().find(|p| p.k == k)
    }
}

/// State of one TD(0) trajectory.
#[derive(Debug, Clone)]
pub struct TdRun {
    v: DVector<f64>,
    alpha: f64,
    gamma: f64,
}

impl TdRun {
    pub fn new(v0: DVector<f64>, alpha: f64, gamma: f64) -> Self {
        Self {
            v: v0,
            alpha,
            gamma,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.v
    }

    /// `V(s) += alpha (r + gamma V(s') - V(s))`; returns the updated entry.
    #[inline]
    pub fn apply(&mut self, t: &Transition) -> f64 {
        let td = t.reward + self.gamma * self.v[t.next_state] - self.v[t.state];
        self.v[t.state] += self.alpha * td;
        self.v[t.state]
    }
}

/// Noise realisation `w = e_s delta - D(R^pi + gamma P^pi V - V)` at values `v`.
pub fn noise_sample(chain: &InducedChain, v: &DVector<f64>, t: &Transition) -> DVector<f64> {
    let gamma = chain.gamma();
    let expected = chain.d.component_mul(&(&chain.r_pi + &chain.p_pi * v * gamma - v));
    let delta = t.reward + gamma * v[t.next_state] - v[t.state];
    let mut w = -expected;
    w[t.state] += delta;
    w
}

struct BlockAccum {
    moments: Vec<RunningMoments>,
    final_errors: Vec<Vec<f64>>,
    avg_errors: Vec<Vec<f64>>,
    max_sup: f64,
}

/// Runs the ensemble and reduces it to probe statistics.
pub fn run_td(chain: &InducedChain, config: &RunConfig) -> Result<EnsembleStats> {
    let n = chain.n_states();
    config.validate(n)?;
    let sampler = TransitionSampler::new(chain)?;
    let v0 = DVector::from_vec(config.v0.clone());
    let bound = chain.r_max().max(vec_inf_norm(&v0)) / (1.0 - chain.gamma());
    let probes = &config.record_ks;
    // x (n), x x^T (n^2), |x|^2, |x|, avg error
    let dim = n + n * n + 3;

    let n_blocks = config.n_runs.div_ceil(BLOCK);
    let blocks: Vec<BlockAccum> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(config.n_runs);
            let mut acc = BlockAccum {
                moments: vec![RunningMoments::new(dim); probes.len()],
                final_errors: vec![Vec::with_capacity(end - start); probes.len()],
                avg_errors: vec![Vec::with_capacity(end - start); probes.len()],
                max_sup: vec_inf_norm(&v0),
            };
            let mut sample = vec![0.0; dim];
            for run in start..end {
                let mut rng = run_rng(config.seed, run as u64);
                let mut td = TdRun::new(v0.clone(), config.alpha, chain.gamma());
                let mut running_sum = DVector::zeros(n);
                let mut next_probe = 0;
                for k in 0..=config.horizon {
                    if next_probe < probes.len() && probes[next_probe] == k {
                        let x = td.values() - &chain.v_pi;
                        sample[..n].copy_from_slice(x.as_slice());
                        for i in 0..n {
                            for j in 0..n {
                                sample[n + i * n + j] = x[i] * x[j];
                            }
                        }
                        let sq = x.norm_squared();
                        sample[n + n * n] = sq;
                        sample[n + n * n + 1] = sq.sqrt();
                        let avg_err = if k >= 1 {
                            let e = (&running_sum / k as f64 - &chain.v_pi).norm();
                            acc.avg_errors[next_probe].push(e);
                            e
                        } else {
                            0.0
                        };
                        sample[n + n * n + 2] = avg_err;
                        acc.moments[next_probe].push(&sample);
                        acc.final_errors[next_probe].push(sq.sqrt());
                        next_probe += 1;
                    }
                    if k == config.horizon {
                        break;
                    }
                    running_sum += td.values();
                    let t = sampler.sample(&mut rng);
                    let updated = td.apply(&t).abs();
                    if updated > bound {
                        return Err(Error::IterateBound {
                            run,
                            step: k + 1,
                            norm: updated,
                            bound,
                        });
                    }
                    acc.max_sup = acc.max_sup.max(updated);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut moments = vec![RunningMoments::new(dim); probes.len()];
    let mut final_errors = vec![Vec::with_capacity(config.n_runs); probes.len()];
    let mut avg_errors = vec![Vec::with_capacity(config.n_runs); probes.len()];
    let mut max_sup = vec_inf_norm(&v0);
    for block in &blocks {
        for p in 0..probes.len() {
            moments[p].merge(&block.moments[p]);
            final_errors[p].extend_from_slice(&block.final_errors[p]);
            avg_errors[p].extend_from_slice(&block.avg_errors[p]);
        }
        max_sup = max_sup.max(block.max_sup);
    }

    let probe_stats = probes
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let m = &moments[p];
            ProbeStats {
                k,
                mean: (0..n).map(|i| m.estimate(i)).collect(),
                corr: (0..n * n).map(|i| m.estimate(n + i)).collect(),
                mse: m.estimate(n + n * n),
                error_l2: m.estimate(n + n * n + 1),
                avg_error: (k >= 1).then(|| m.estimate(n + n * n + 2)),
                final_errors: std::mem::take(&mut final_errors[p]),
                avg_errors: std::mem::take(&mut avg_errors[p]),
            }
        })
        .collect();

    Ok(EnsembleStats {
        n_runs: config.n_runs,
        seed: config.seed,
        alpha: config.alpha,
        probes: probe_stats,
        max_sup_norm: max_sup,
        sup_norm_bound: bound,
    })
}

/// Averaged-iterate errors `||(1/k) sum_{i<k} V_i - V^pi||_2` along one
/// recorded trajectory `V_0, V_1, ...`, for every `k` in `ks`.
pub fn averaged_iterate_errors(
    trajectory: &[DVector<f64>],
    v_pi: &DVector<f64>,
    ks: &[usize],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ks.len());
    let mut sum = DVector::zeros(v_pi.len());
    let mut summed = 0usize;
    for &k in ks {
        if k == 0 {
            return Err(Error::InvalidArgument("averaged iterate needs k >= 1".into()));
        }
        if k > trajectory.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds trajectory length {}",
                trajectory.len()
            )));
        }
        if k < summed {
            return Err(Error::InvalidArgument("ks must be nondecreasing".into()));
        }
        while summed < k {
            sum += &trajectory[summed];
            summed += 1;
        }
        out.push((&sum / k as f64 - v_pi).norm());
    }
    Ok(out)
}

/// Full trajectory `V_0..=V_horizon` of run `run`, for inspection.
pub fn record_trajectory(
    chain: &InducedChain,
    alpha: f64,
    v0: &DVector<f64>,
    horizon: usize,
    seed: u64,
    run: u64,
) -> Result<Vec<DVector<f64>>> {
    let sampler = TransitionSampler::new(chain)?;
    let mut rng = run_rng(seed, run);
    let mut td = TdRun::new(v0.clone(), alpha, chain.gamma());
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(v0.clone());
    for _ in 0..horizon {
        td.apply(&sampler.sample(&mut rng));
        out.push(td.values().clone());
    }
    Ok(out)
}

/// Monte Carlo estimate of `E[w w^T]` at fixed values `v` (row-major).
pub fn estimate_noise_covariance(
    chain: &InducedChain,
    v: &DVector<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let n = chain.n_states();
    let sampler = TransitionSampler::new(chain)?;
    let mut rng = run_rng(seed, 0);
    let mut acc = RunningMoments::new(n * n);
    let mut buf = vec![0.0; n * n];
    for _ in 0..n_samples {
        let w = noise_sample(chain, v, &sampler.sample(&mut rng));
        for i in 0..n {
            for j in 0..n {
                buf[i * n + j] = w[i] * w[j];
            }
        }
        acc.push(&buf);
    }
    Ok((0..n * n).map(|i| acc.estimate(i)).collect())
}

/// Monte Carlo estimate of `E[(r + gamma V^pi(s') - V^pi(s))^2]`.
pub fn estimate_td_noise_variance(chain: &InducedChain, n_samples: usize, seed: u64) -> Result<Estimate> {
    let sampler = TransitionSampler::new(chain)?;
    let mut rng = run_rng(seed, 0);
    let mut acc = RunningMoments::new(1);
    for _ in 0..n_samples {
        let t = sampler.sample(&mut rng);
        let delta = chain.bellman_residual(t.state, t.action, t.next_state);
        acc.push(&[delta * delta]);
    }
    Ok(acc.estimate(0))
}

/// Ensemble estimate of the cross moment `E[x_k w_k^T]` (row-major), which
/// vanishes because `E[w_k | x_k] = 0`.
pub fn estimate_cross_moment(chain: &InducedChain, config: &RunConfig, k: usize) -> Result<Vec<Estimate>> {
    let n = chain.n_states();
    config.validate(n)?;
    let sampler = TransitionSampler::new(chain)?;
    let v0 = DVector::from_vec(config.v0.clone());
    let n_blocks = config.n_runs.div_ceil(BLOCK);
    let blocks: Vec<RunningMoments> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = RunningMoments::new(n * n);
            let mut buf = vec![0.0; n * n];
            for run in b * BLOCK..((b + 1) * BLOCK).min(config.n_runs) {
                let mut rng = run_rng(config.seed, run as u64);
                let mut td = TdRun::new(v0.clone(), config.alpha, chain.gamma());
                for _ in 0..k {
                    td.apply(&sampler.sample(&mut rng));
                }
                let x = td.values() - &chain.v_pi;
                let w = noise_sample(chain, td.values(), &sampler.sample(&mut rng));
                for i in 0..n {
                    for j in 0..n {
                        buf[i * n + j] = x[i] * w[j];
                    }
                }
                acc.push(&buf);
            }
            acc
        })
        .collect();
    let mut total = RunningMoments::new(n * n);
    for b in &blocks {
        total.merge(b);
    }
    Ok((0..n * n).map(|i| total.estimate(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::mdp::induce_chain;
    use approx::assert_abs_diff_eq;

    fn chain(pair: (crate::TabularMdp, crate::Policy)) -> InducedChain {
        induce_chain(&pair.0, &pair.1).unwrap()
    }

    fn config(alpha: f64, horizon: usize, n_runs: usize, v0: Vec<f64>, ks: Vec<usize>) -> RunConfig {
        RunConfig {
            alpha,
            horizon,
            n_runs,
            seed: 42,
            v0,
            record_ks: ks,
        }
    }

    #[test]
    fn running_moments_merge_matches_sequential() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut seq = RunningMoments::new(1);
        data.iter().for_each(|x| seq.push(&[*x]));
        let mut a = RunningMoments::new(1);
        let mut b = RunningMoments::new(1);
        data[..313].iter().for_each(|x| a.push(&[*x]));
        data[313..].iter().for_each(|x| b.push(&[*x]));
        a.merge(&b);
        assert_abs_diff_eq!(a.estimate(0).mean, seq.estimate(0).mean, epsilon = 1e-12);
        assert_abs_diff_eq!(a.estimate(0).se, seq.estimate(0).se, epsilon = 1e-12);
        let mean = data.iter().sum::<f64>() / 1000.0;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert_abs_diff_eq!(seq.estimate(0).se, (var / 1000.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn deterministic_scalar_recursion() {
        let c = chain(instances::single_state(1.0, 0.5));
        let traj = record_trajectory(&c, 0.5, &DVector::zeros(1), 2, 1, 0).unwrap();
        assert_abs_diff_eq!(traj[1][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(traj[2][0], 0.875, epsilon = 1e-15);
    }

    #[test]
    fn fixed_point_is_absorbing_without_noise() {
        let c = chain(instances::two_state_uniform(0.5));
        let traj = record_trajectory(&c, 0.3, &c.v_pi, 50, 3, 7).unwrap();
        assert!(traj.iter().all(|v| (v - &c.v_pi).amax() == 0.0));
    }

    #[test]
    fn initial_probe_is_exact() {
        let c = chain(instances::two_state_uniform(0.5));
        let cfg = config(0.5, 20, 300, vec![1.0, -1.0], vec![0, 5, 20]);
        let stats = run_td(&c, &cfg).unwrap();
        assert!(stats.max_sup_norm <= stats.sup_norm_bound);
        let p0 = stats.probe(0).unwrap();
        assert_eq!(p0.mse.mean, 1.0 + 9.0);
        assert_eq!(p0.mse.se, 0.0);
        assert!(p0.avg_error.is_none());
    }

    #[test]
    fn ensembles_are_reproducible() {
        let c = chain(instances::two_state_noisy(0.5));
        let cfg = config(0.3, 40, 1000, vec![0.0, 0.5], vec![1, 10, 40]);
        let a = run_td(&c, &cfg).unwrap();
        let b = run_td(&c, &cfg).unwrap();
        for (pa, pb) in a.probes.iter().zip(&b.probes) {
            assert_eq!(pa.mean, pb.mean);
            assert_eq!(pa.corr, pb.corr);
            assert_eq!(pa.final_errors, pb.final_errors);
            assert_eq!(pa.avg_error, pb.avg_error);
        }
        assert_eq!(a.max_sup_norm, b.max_sup_norm);
    }

    #[test]
    fn averaged_iterate_helpers() {
        let v_pi = DVector::from_vec(vec![1.0, 2.0]);
        let constant = vec![v_pi.clone(); 5];
        assert_eq!(averaged_iterate_errors(&constant, &v_pi, &[1, 3, 5]).unwrap(), vec![0.0; 3]);
        let traj = vec![DVector::from_vec(vec![0.0, 0.0]), v_pi.clone()];
        let e = averaged_iterate_errors(&traj, &v_pi, &[1]).unwrap();
        assert_abs_diff_eq!(e[0], (1.0f64 + 4.0).sqrt(), epsilon = 1e-15);
        assert!(averaged_iterate_errors(&traj, &v_pi, &[0]).is_err());
    }

    #[test]
    fn ensemble_average_at_k1_is_initial_error() {
        let c = chain(instances::two_state_noisy(0.5));
        let cfg = config(0.3, 1, 10, vec![0.5, -0.5], vec![1]);
        let stats = run_td(&c, &cfg).unwrap();
        let expected = (DVector::from_vec(vec![0.5, -0.5]) - &c.v_pi).norm();
        let avg = stats.probe(1).unwrap().avg_error.unwrap();
        assert_abs_diff_eq!(avg.mean, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(avg.se, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn config_validation() {
        let c = chain(instances::two_state_uniform(0.5));
        assert!(run_td(&c, &config(1.0, 5, 1, vec![0.0; 2], vec![])).is_err());
        assert!(run_td(&c, &config(0.5, 5, 1, vec![2.0, 0.0], vec![])).is_err());
        assert!(run_td(&c, &config(0.5, 5, 1, vec![0.0; 3], vec![])).is_err());
        assert!(run_td(&c, &config(0.5, 5, 1, vec![0.0; 2], vec![3, 2])).is_err());
        assert!(run_td(&c, &config(0.5, 5, 1, vec![0.0; 2], vec![6])).is_err());
    }

    #[test]
    fn empty_ensemble_has_no_samples() {
        let c = chain(instances::two_state_uniform(0.5));
        let stats = run_td(&c, &config(0.5, 5, 0, vec![0.0; 2], vec![5])).unwrap();
        assert_eq!(stats.probe(5).unwrap().final_errors.len(), 0);
    }
}
