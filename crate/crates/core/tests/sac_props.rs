//! Bellman target properties of the SAC agent.

use proptest::prelude::*;

use slrl_core::nn::Rng;
use slrl_core::replay::Transition;
use slrl_core::sac::{SacAgent, SacBatch, SacConfig};

fn agent(bias_period: u64) -> SacAgent {
    let cfg = SacConfig {
        hidden_dims: vec![16, 16],
        batch_size: 8,
        bias_period,
        ..SacConfig::default()
    };
    SacAgent::new(6, 2, vec![100.0, 200.0, 1.0, 1.0, 100.0, 1.0], cfg, &mut Rng::new(5)).unwrap()
}

fn stream(n: u64, rng: &mut Rng) -> Vec<Transition> {
    (1..=n)
        .map(|t| Transition {
            obs: (0..6).map(|_| rng.uniform(-50.0, 50.0).unwrap()).collect(),
            action: (0..2).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect(),
            reward: rng.uniform(-2.0, 2.0).unwrap(),
            next_obs: (0..6).map(|_| rng.uniform(-50.0, 50.0).unwrap()).collect(),
            timestep: t,
            terminal: false,
        })
        .collect()
}

#[test]
fn thousand_step_stream_has_ten_cuts() {
    let a = agent(100);
    let ts = stream(1000, &mut Rng::new(1));
    let batch = SacBatch::from_transitions(&ts, false).unwrap();
    let targets = a.td_target(&batch, &mut Rng::new(2)).unwrap();
    let cut: Vec<u64> = ts
        .iter()
        .zip(&targets)
        .filter(|(t, y)| y.to_bits() == t.reward.to_bits())
        .map(|(t, _)| t.timestep)
        .collect();
    assert_eq!(cut, (1..=10).map(|k| 100 * k).collect::<Vec<_>>());
}

#[test]
fn terminal_rows_never_bootstrap() {
    let a = agent(100);
    let mut ts = stream(50, &mut Rng::new(3));
    for t in ts.iter_mut().step_by(7) {
        t.terminal = true;
    }
    let batch = SacBatch::from_transitions(&ts, false).unwrap();
    let targets = a.td_target(&batch, &mut Rng::new(4)).unwrap();
    for (t, y) in ts.iter().zip(&targets) {
        assert_eq!(t.terminal, *y == t.reward, "timestep {}", t.timestep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cuts_land_on_period_multiples(period in 1u64..300, seed in 0u64..1000) {
        let a = agent(period);
        let ts = stream(600, &mut Rng::new(seed));
        let batch = SacBatch::from_transitions(&ts, false).unwrap();
        let targets = a.td_target(&batch, &mut Rng::new(seed + 1)).unwrap();
        for (t, y) in ts.iter().zip(&targets) {
            let is_cut = t.timestep % period == 0;
            prop_assert_eq!(is_cut, *y == t.reward);
        }
    }
}
