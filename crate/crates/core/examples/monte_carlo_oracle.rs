//! Seeded TD(0) ensembles checked against the exact moment recursion.
//!
//! cargo run --release --example monte_carlo_oracle

use nalgebra::DVector;
use td_lsys::instances::{generate_random_mdp, RandomMdpSpec};
use td_lsys::simulator::estimate_td_noise_variance;
use td_lsys::{build_system, induce_chain, propagate_correlation, run_td, MomentState, RunConfig};

fn main() -> td_lsys::Result<()> {
    let (mdp, policy) = generate_random_mdp(&RandomMdpSpec::new(3, 2, 0.9, 2))?;
    let chain = induce_chain(&mdp, &policy)?;
    let model = build_system(&chain, 0.1)?;
    let v0 = vec![0.5, -0.5, 1.0];
    let x0 = model.to_error(&DVector::from_vec(v0.clone()));
    let exact = propagate_correlation(&model, &MomentState::initial(&x0), 100)?;

    let config = RunConfig {
        alpha: 0.1,
        horizon: 100,
        n_runs: 100_000,
        seed: 42,
        v0,
        record_ks: vec![1, 10, 100],
    };
    let stats = run_td(&chain, &config)?;
    for probe in &stats.probes {
        let st = &exact.states[probe.k];
        println!("k = {}", probe.k);
        for (i, e) in probe.mean.iter().enumerate() {
            println!("  m[{i}]   exact {:+.6}  mc {:+.6} ± {:.6}  z = {:+.2}", st.mean[i], e.mean, e.se, e.z_score(st.mean[i]));
        }
        println!(
            "  tr(X)  exact {:.6}  mc {:.6} ± {:.6}  z = {:+.2}",
            st.trace(),
            probe.mse.mean,
            probe.mse.se,
            probe.mse.z_score(st.trace())
        );
    }
    println!(
        "max ||V_k||_inf over all runs = {:.4} <= {:.4}",
        stats.max_sup_norm, stats.sup_norm_bound
    );
    let est = estimate_td_noise_variance(&chain, 1_000_000, 7)?;
    println!("sigma^2 exact {:.5}, Monte Carlo {:.5} ± {:.5}", chain.td_noise_variance(), est.mean, est.se);
    Ok(())
}
