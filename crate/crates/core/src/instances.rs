//! Named example MDPs and a seeded random-MDP generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{induce_chain, Policy, TabularMdp};

/// Two states, one action, uniform transitions, unit reward.
pub fn two_state_uniform(gamma: f64) -> (TabularMdp, Policy) {
    let mdp = TabularMdp::new(
        gamma,
        vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        vec![vec![vec![1.0, 1.0]], vec![vec![1.0, 1.0]]],
    )
    .expect("valid instance");
    (mdp, Policy::uniform(2, 1).expect("valid policy"))
}

/// Two-state uniform chain with rewards `r(0,.,0) = 2`, `r(0,.,1) = 0`, and
/// one elsewhere, so the TD error at `V^pi` is not identically zero.
pub fn two_state_noisy(gamma: f64) -> (TabularMdp, Policy) {
    let mdp = TabularMdp::new(
        gamma,
        vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        vec![vec![vec![2.0, 0.0]], vec![vec![1.0, 1.0]]],
    )
    .expect("valid instance");
    (mdp, Policy::uniform(2, 1).expect("valid policy"))
}

/// One state, one action, constant reward.
pub fn single_state(reward: f64, gamma: f64) -> (TabularMdp, Policy) {
    let mdp = TabularMdp::new(gamma, vec![vec![vec![1.0]]], vec![vec![vec![reward]]])
        .expect("valid instance");
    (mdp, Policy::uniform(1, 1).expect("valid policy"))
}

/// One state, two actions, unit rewards, `gamma = 0.9`; the target policy
/// always takes the first action.
pub fn single_state_two_actions() -> (TabularMdp, Policy) {
    let mdp = TabularMdp::new(
        0.9,
        vec![vec![vec![1.0], vec![1.0]]],
        vec![vec![vec![1.0], vec![1.0]]],
    )
    .expect("valid instance");
    (mdp, Policy::deterministic(&[0], 2).expect("valid policy"))
}

/// Parameters of the random MDP generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Rewards are drawn uniformly from `[-reward_scale, reward_scale]`.
    #[serde(default = "default_reward_scale")]
    pub reward_scale: f64,
    /// Symmetric Dirichlet concentration for transition and policy rows.
    #[serde(default = "default_concentration")]
    pub concentration: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_reward_scale() -> f64 {
    1.0
}

fn default_concentration() -> f64 {
    1.0
}

fn default_max_attempts() -> usize {
    100
}

impl RandomMdpSpec {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            seed,
            reward_scale: default_reward_scale(),
            concentration: default_concentration(),
            max_attempts: default_max_attempts(),
        }
    }
}

fn dirichlet_row<R: Rng>(rng: &mut R, gamma: &Gamma<f64>, len: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && total.is_finite() {
            return raw.into_iter().map(|v| v / total).collect();
        }
    }
}

/// Draws an ergodic MDP and policy, resampling until the induced chain passes
/// validation. Deterministic given the spec.
pub fn generate_random_mdp(spec: &RandomMdpSpec) -> Result<(TabularMdp, Policy)> {
    if spec.n_states == 0 || spec.n_actions == 0 {
        return Err(Error::InvalidArgument("empty state or action space".into()));
    }
    if !(spec.reward_scale >= 0.0 && spec.reward_scale <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "reward_scale {} not in [0, 1]",
            spec.reward_scale
        )));
    }
    let gamma_dist = Gamma::new(spec.concentration, 1.0).map_err(|e| {
        Error::InvalidArgument(format!("concentration {}: {e}", spec.concentration))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (ns, na) = (spec.n_states, spec.n_actions);
    let mut last_err = None;
    for _ in 0..spec.max_attempts.max(1) {
        let transition: Vec<Vec<Vec<f64>>> = (0..ns)
            .map(|_| (0..na).map(|_| dirichlet_row(&mut rng, &gamma_dist, ns)).collect())
            .collect();
        let reward: Vec<Vec<Vec<f64>>> = (0..ns)
            .map(|_| {
                (0..na)
                    .map(|_| {
                        (0..ns)
                            .map(|_| spec.reward_scale * rng.random_range(-1.0..=1.0))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let policy: Vec<Vec<f64>> = (0..ns)
            .map(|_| dirichlet_row(&mut rng, &gamma_dist, na))
            .collect();

        let attempt = TabularMdp::new(spec.gamma, transition, reward)
            .and_then(|mdp| Ok((mdp, Policy::new(policy)?)))
            .and_then(|(mdp, pol)| induce_chain(&mdp, &pol).map(|_| (mdp, pol)));
        match attempt {
            Ok(pair) => return Ok(pair),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::InvalidArgument(format!(
        "no ergodic MDP after {} attempts; last error: {}",
        spec.max_attempts,
        last_err.map_or_else(|| "none".to_string(), |e| e.to_string())
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_mdp() {
        let spec = RandomMdpSpec::new(4, 3, 0.9, 17);
        assert_eq!(generate_random_mdp(&spec).unwrap(), generate_random_mdp(&spec).unwrap());
    }

    #[test]
    fn single_state_is_trivially_ergodic() {
        let spec = RandomMdpSpec::new(1, 2, 0.5, 3);
        let (mdp, pol) = generate_random_mdp(&spec).unwrap();
        let chain = induce_chain(&mdp, &pol).unwrap();
        assert_eq!(chain.d[0], 1.0);
    }

    #[test]
    fn hundred_instances_validate() {
        for seed in 0..100 {
            let spec = RandomMdpSpec::new(4, 2, 0.9, seed);
            let (mdp, pol) = generate_random_mdp(&spec).unwrap();
            assert!(mdp.in_paper_regime());
            induce_chain(&mdp, &pol).unwrap();
        }
    }

    #[test]
    fn reward_scale_above_one_is_refused() {
        let mut spec = RandomMdpSpec::new(2, 2, 0.5, 0);
        spec.reward_scale = 1.5;
        assert!(generate_random_mdp(&spec).is_err());
    }
}
