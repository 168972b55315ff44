//! Lyapunov certificate M with A^T M A = M - I, solved two ways.
//!
//! cargo run --example stein_certificate

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use td_lsys::instances::{generate_random_mdp, RandomMdpSpec};
use td_lsys::stein::lyapunov_decrement_check;
use td_lsys::{build_system, induce_chain, stein_solve};

fn main() -> td_lsys::Result<()> {
    let (mdp, policy) = generate_random_mdp(&RandomMdpSpec::new(4, 2, 0.9, 5))?;
    let model = build_system(&induce_chain(&mdp, &policy)?, 0.3)?;
    let cert = stein_solve(&model)?;
    println!("M = {}", cert.m_matrix);
    println!("residual ||A^T M A - M + I||_inf = {:.2e}", cert.residual_inf);
    println!("series terms {} (tail bound needs {})", cert.series_terms, cert.required_terms);
    println!("series vs direct solve gap = {:.2e}", cert.route_gap.unwrap());
    println!(
        "1 <= lambda_min = {:.4} <= lambda_max = {:.4} <= n/(1-rho^2) = {:.4} <= n/(1-rho) = {:.4}",
        cert.lambda_min,
        cert.lambda_max,
        cert.lambda_bound_sq(),
        cert.lambda_bound()
    );
    println!("certificate holds: {}", cert.holds());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let report = lyapunov_decrement_check(&model, &cert, 1000, &mut rng);
    println!("v(Ax) = v(x) - |x|^2 on {} random directions, worst error {:.2e}", report.trials, report.max_violation);

    // The Lyapunov function decays along the mean trajectory.
    let mean = model.propagate_mean(&DVector::from_vec(vec![1.0, -1.0, 0.5, 0.0]), 5);
    for (k, m) in mean.iter().enumerate() {
        println!("k = {k}: v(m_k) = {:.5}", cert.lyapunov(m));
    }
    Ok(())
}
