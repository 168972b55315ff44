//! Finite-time bounds on the final and averaged iterates, with probability floors.
//!
//! cargo run --example finite_time_bounds

use nalgebra::DVector;
use td_lsys::bounds::{bhandari_threshold, schedule_bound, BoundReport};
use td_lsys::instances::two_state_uniform;
use td_lsys::{build_system, induce_chain, propagate_correlation, MomentState};

fn main() -> td_lsys::Result<()> {
    let (mdp, policy) = two_state_uniform(0.5);
    let chain = induce_chain(&mdp, &policy)?;
    let model = build_system(&chain, 0.25)?;
    let x0 = model.to_error(&DVector::zeros(2));
    let exact = propagate_correlation(&model, &MomentState::initial(&x0), 1000)?;

    println!("{:>5} {:>12} {:>12} {:>12} {:>12} {:>12}", "k", "tr(X_k)", "trace bnd", "sqrt tr", "l2 bnd", "avg bnd");
    for k in [0usize, 1, 10, 100, 1000] {
        let r = BoundReport::evaluate(&model, &x0, k, &[48.0])?;
        let tr = exact.states[k].trace();
        println!(
            "{k:>5} {tr:>12.4e} {:>12.4} {:>12.4e} {:>12.4} {:>12}",
            r.get("trace").unwrap(),
            tr.sqrt(),
            r.get("mse_l2").unwrap(),
            r.get("avg_l2").map(|v| format!("{v:.4}")).unwrap_or_default()
        );
    }

    let r = BoundReport::evaluate(&model, &DVector::zeros(2), 100, &[24.0, 48.0, 96.0])?;
    for f in &r.floors {
        println!(
            "epsilon = {:>4}: P[|x_k| < {:.3}] >= {:+.4} (Chebyshev), P[|x_k| < eps] >= {:+.4} (Markov)",
            f.epsilon, f.chebyshev_threshold, f.chebyshev_floor, f.markov_floor
        );
    }

    for t in [16usize, 256, 4096] {
        let s = schedule_bound(&chain, &x0, t)?;
        println!("T = {t:>5}: alpha = 1/sqrt(T) = {:.4}, averaged bound = {:.4}", s.alpha, s.bound);
    }
    println!("comparison bound applies for alpha <= {:.4}", bhandari_threshold(&chain));
    Ok(())
}
