//! Off-policy TD(0) with importance sampling can leave every bounded set.
//!
//! cargo run --release --example remark1_divergence -- [epsilon]

use td_lsys::divergence::{self, decade_edges, OffPolicySpec};

fn main() -> td_lsys::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).map(|a| a.parse().expect("epsilon")).unwrap_or(0.5);
    let spec = OffPolicySpec::new(epsilon)?;
    println!(
        "epsilon = {epsilon}: ratios {:.4} / {}, slope {:.4}, threshold {:.2}",
        spec.ratio(divergence::TARGET_ACTION),
        spec.ratio(divergence::OTHER_ACTION),
        divergence::coefficient(&spec),
        divergence::divergence_threshold(spec.gamma)
    );
    let forced = divergence::forced_sequence(&spec, 10)?;
    for (n, v) in forced.values.iter().enumerate().skip(1) {
        println!("  N = {n:>2}: V_N = {v:>12.4}, P = {:.6}", (1.0 - epsilon).powi(n as i32));
    }

    let report = divergence::sampled_demo(&spec, 100_000, 50, 1)?;
    for n in 1..=3 {
        let freq = report.streak_frequency(n)?;
        println!("streak {n}: observed {:.4} ± {:.4}, predicted {:.4}", freq.p(), freq.se(), (1.0 - epsilon).powi(n as i32));
    }
    println!("replay error vs closed form: {:.1e}", report.max_replay_error);
    println!("histogram of max |V| over 50 steps:");
    for bin in report.histogram(&decade_edges(8)) {
        println!("  [{:>8.0e}, {:>8.0e}) {}", bin.lo, bin.hi, bin.count);
    }
    let on = divergence::on_policy_contrast(&spec, 1000, 1000, 1)?;
    println!("on-policy max |V| = {on:.4} (bound 1/(1-gamma) = {:.1})", 1.0 / (1.0 - spec.gamma));

    for eps in [0.05, 0.09, 0.11, 0.2] {
        let s = OffPolicySpec::new(eps)?;
        println!("epsilon = {eps}: slope {:.4}, diverges {}", divergence::coefficient(&s), divergence::diverges(&s));
    }
    Ok(())
}
