//! Runs source pretraining and prints per-window success rates.
//!
//! `cargo run --release -p slrl-core --example pretrain_probe -- pointmass 60000 64 20 0.01 0 1.0 0.5`
//!
//! Arguments: env, steps, width, demos, init alpha, seed, demo BC weight, demo noise.

use slrl_core::envs::{EnvId, EnvSpec, Variant};
use slrl_core::nn::Rng;
use slrl_core::sac::{pretrain_episodic, PretrainConfig, SacConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let env: EnvId = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(EnvId::Pointmass);
    let steps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(60_000);
    let width: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);
    let demos: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(20);
    let alpha: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let seed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0);
    let bc: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let noise: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let spec = EnvSpec::new(env, Variant::Source, seed);
    let pre = PretrainConfig {
        steps,
        seed_demos: demos,
        demo_bc_weight: bc,
        demo_noise: noise,
        ..PretrainConfig::default()
    };
    let cfg = SacConfig {
        hidden_dims: vec![width, width],
        init_alpha: alpha,
        ..SacConfig::default()
    };
    let t = std::time::Instant::now();
    let out = pretrain_episodic(&spec, &pre, &cfg, &Rng::new(seed)).unwrap();
    let window = steps / 10;
    for w in 0..10 {
        let eps: Vec<_> = out
            .episodes
            .iter()
            .filter(|e| e.end_step > w * window && e.end_step <= (w + 1) * window)
            .collect();
        let s = eps.iter().filter(|e| e.success).count();
        let mean_len = eps.iter().map(|e| e.length).sum::<usize>() as f64 / eps.len().max(1) as f64;
        println!("window {w}: {s}/{} success, mean len {mean_len:.1}", eps.len());
    }
    for e in out.episodes.iter().step_by(out.episodes.len().div_ceil(12).max(1)) {
        let t = &out.stream[e.end_step - 1];
        println!("episode ending {}: final {:?}", e.end_step, &t.next_obs[..4]);
    }
    println!("alpha {:.4}, elapsed {:.1}s", out.agent.alpha(), t.elapsed().as_secs_f64());
}
