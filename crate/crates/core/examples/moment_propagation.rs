//! Exact mean and second-moment recursion of the TD error.
//!
//! cargo run --example moment_propagation

use nalgebra::DVector;
use td_lsys::instances::{generate_random_mdp, RandomMdpSpec};
use td_lsys::moments::noise_covariance;
use td_lsys::{build_system, induce_chain, propagate_correlation, MomentState};

fn main() -> td_lsys::Result<()> {
    let (mdp, policy) = generate_random_mdp(&RandomMdpSpec::new(3, 2, 0.9, 11))?;
    let model = build_system(&induce_chain(&mdp, &policy)?, 0.2)?;
    let x0 = model.to_error(&DVector::zeros(3));
    let init = MomentState::initial(&x0);

    let w0 = noise_covariance(&model, &init)?;
    println!("W_0 = {}", w0.w_matrix);
    println!("lambda_max(W_0) = {:.4} <= W_max = {:.1}", w0.lambda_max, model.w_max);

    let traj = propagate_correlation(&model, &init, 2000)?;
    println!("{:>6} {:>14} {:>14} {:>14}", "k", "tr(X_k)", "||m_k||^2", "tr(W_k)");
    for k in [0usize, 1, 10, 100, 500, 1000, 2000] {
        let st = &traj.states[k];
        let noise = traj.noise_trace.get(k).map(|w| format!("{w:.6e}")).unwrap_or_else(|| "-".into());
        println!("{k:>6} {:>14.6e} {:>14.6e} {noise:>14}", st.trace(), st.mean.norm_squared());
    }
    // The stationary floor: once the mean has vanished only the noise term remains.
    println!("covariance at k = 2000:\n{}", traj.states[2000].covariance());
    Ok(())
}
