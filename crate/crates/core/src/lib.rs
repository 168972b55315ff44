//! Tabular TD(0) policy evaluation as a discrete-time stochastic linear system.
//!
//! Under i.i.d. sampling from the stationary distribution, the error
//! `x_k = V_k - V^pi` obeys `x_{k+1} = A x_k + alpha w_k` with
//! `A = I + alpha (gamma D P^pi - D)` and martingale-difference noise `w_k`.
//! This crate builds `A`, propagates the exact first and second moments of
//! `x_k`, evaluates finite-time bounds on them, certifies stability through a
//! discrete Lyapunov (Stein) equation, and checks everything against seeded
//! Monte Carlo ensembles.
//!
//! | module | purpose |
//! |---|---|
//! | [`mdp`] | tabular MDPs, policies, induced chain, transition sampling |
//! | [`instances`] | named instances and a seeded random-MDP generator |
//! | [`linear_model`] | system matrix `A`, offset `b`, contraction factor `rho` |
//! | [`moments`] | exact mean / correlation recursion |
//! | [`bounds`] | finite-time bounds and probability floors |
//! | [`stein`] | Lyapunov certificate `A^T M A = M - I` |
//! | [`simulator`] | parallel, reproducible TD(0) ensembles |
//! | [`divergence`] | off-policy importance-sampling divergence demo |
//! | [`experiment`] | config-driven end-to-end runs writing CSV/JSON reports |

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod instances;
pub mod linalg;
pub mod linear_model;
pub mod mdp;
pub mod moments;
pub mod simulator;
pub mod stein;

pub use error::{Error, Result};
pub use linear_model::{build_system, LinearSystemModel};
pub use mdp::{induce_chain, InducedChain, Policy, TabularMdp};
pub use moments::{propagate_correlation, MomentState};
pub use simulator::{run_td, RunConfig};
pub use stein::{stein_solve, SteinCertificate};
