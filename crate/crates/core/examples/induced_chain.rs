//! Build a tabular MDP, evaluate a policy on it, and sample transitions.
//!
//! cargo run --example induced_chain

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use td_lsys::instances::{generate_random_mdp, RandomMdpSpec};
use td_lsys::mdp::{induce_chain, MdpDocument, Policy, TabularMdp, TransitionSampler};

fn main() -> td_lsys::Result<()> {
    // Two states, one action, uniform transitions, unit reward.
    let mdp = TabularMdp::new(
        0.5,
        vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        vec![vec![vec![1.0, 1.0]], vec![vec![1.0, 1.0]]],
    )?;
    let chain = induce_chain(&mdp, &Policy::uniform(2, 1)?)?;
    println!("two-state chain: d = {:?}, V^pi = {:?}", chain.d.as_slice(), chain.v_pi.as_slice());

    // A periodic chain is rejected rather than producing a meaningless d.
    let flip = TabularMdp::new(
        0.5,
        vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
    )?;
    match induce_chain(&flip, &Policy::uniform(2, 1)?) {
        Err(e) => println!("periodic chain refused: {e}"),
        Ok(_) => unreachable!(),
    }

    // Seeded random instance, round-tripped through its JSON document.
    let (mdp, policy) = generate_random_mdp(&RandomMdpSpec::new(4, 3, 0.9, 7))?;
    let doc = MdpDocument::from_parts(&mdp, &policy);
    let (mdp, policy) = MdpDocument::from_json_str(&doc.to_json_pretty()?)?.into_parts()?;
    let chain = induce_chain(&mdp, &policy)?;
    println!("random 4-state chain:");
    println!("  d      = {:.4?}", chain.d.as_slice());
    println!("  d_min  = {:.4}, d_max = {:.4}", chain.d_min, chain.d_max);
    println!("  V^pi   = {:.4?}", chain.v_pi.as_slice());
    println!("  sigma^2 = E[(r + gamma V(s') - V(s))^2] = {:.4}", chain.td_noise_variance());

    let sampler = TransitionSampler::new(&chain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        let t = sampler.sample(&mut rng);
        println!("  (s={}, a={}, s'={}, r={:+.3})", t.state, t.action, t.next_state, t.reward);
    }
    Ok(())
}
