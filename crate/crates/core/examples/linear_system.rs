//! TD(0) in expectation: the system matrix A, offset b and contraction factor.
//!
//! cargo run --example linear_system

use nalgebra::DVector;
use td_lsys::instances::{generate_random_mdp, two_state_uniform, RandomMdpSpec};
use td_lsys::{build_system, induce_chain};

fn main() -> td_lsys::Result<()> {
    let (mdp, policy) = two_state_uniform(0.5);
    let model = build_system(&induce_chain(&mdp, &policy)?, 0.5)?;
    println!("A = {}", model.a_matrix);
    let cert = model.infinity_norm_certificate();
    println!("||A||_inf = {}, rho = 1 - alpha d_min (1 - gamma) = {}", cert.norm, cert.rho);

    // The mean error contracts at least as fast as rho^k.
    let x0 = DVector::from_vec(vec![1.0, -1.0]);
    for (k, m) in model.propagate_mean(&x0, 8).iter().enumerate().step_by(2) {
        println!("k = {k}: E[x_k] = {:.5?}, rho^k ||x0|| = {:.5}", m.as_slice(), model.rho.powi(k as i32));
    }

    let (mdp, policy) = generate_random_mdp(&RandomMdpSpec::new(5, 2, 0.9, 3))?;
    let chain = induce_chain(&mdp, &policy)?;
    for alpha in [0.01, 0.1, 0.5, 0.9] {
        let model = build_system(&chain, alpha)?;
        println!(
            "alpha = {alpha:<4}: rho = {:.6}, spectral radius = {:.6}, V^pi fixed point residual = {:.1e}",
            model.rho,
            model.spectral_radius(),
            (&model.a_matrix * &chain.v_pi + &model.b_vector - &chain.v_pi).amax()
        );
    }
    match build_system(&chain, 1.0) {
        Err(e) => println!("alpha = 1 refused: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
