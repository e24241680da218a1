//! Environment dynamics against an independently written model.

use slrl_core::envs::{EnvId, EnvInstance, EnvSpec, EnvState, PointmassState, TabletopState, Variant};
use slrl_core::nn::Rng;

/// Reference pointmass: clip, move, gust, wall clip, then the distance test.
struct OraclePointmass {
    x: f64,
    y: f64,
    windy: bool,
    noise: Rng,
}

impl OraclePointmass {
    fn step(&mut self, ax: f64, ay: f64) -> ([f64; 6], f64, bool) {
        let (px, py) = (self.x, self.y);
        let mut x = px + ax.max(-1.0).min(1.0);
        let mut y = py + ay.max(-1.0).min(1.0);
        if self.windy {
            let u = self.noise.uniform01();
            y += (0.8 + u * (0.9 - 0.8)).max(0.8).min(0.9);
            x -= 0.2;
        }
        x = x.max(-100.0).min(100.0);
        y = y.max(-200.0).min(200.0);
        self.x = x;
        self.y = y;
        let hit = ((x - 100.0) * (x - 100.0) + y * y).sqrt() < 2.0;
        ([x, y, x - px, y - py, 100.0, 0.0], if hit { 1.0 } else { 0.0 }, hit)
    }
}

#[test]
fn pointmass_matches_oracle_bit_for_bit() {
    let mut driver = Rng::new(2024);
    let mut steps = 0;
    let mut episode = 0u64;
    while steps < 100_000 {
        let windy = episode % 2 == 0;
        let variant = if windy { Variant::Target } else { Variant::Source };
        let start = [driver.uniform(-100.0, 100.0).unwrap(), driver.uniform(-200.0, 200.0).unwrap()];
        let start = if episode % 5 == 0 { [98.0, 1.0] } else { start };
        let seed = 10_000 + episode;
        let mut env = EnvInstance::new(EnvSpec::new(EnvId::Pointmass, variant, seed)).with_initial_state(
            EnvState::Pointmass(PointmassState {
                pos: start,
                vel: [0.0, 0.0],
                goal: [100.0, 0.0],
            }),
        );
        env.reset();
        let mut oracle = OraclePointmass {
            x: start[0],
            y: start[1],
            windy,
            noise: Rng::new(seed),
        };
        for _ in 0..1000 {
            let a = [driver.uniform(-3.0, 3.0).unwrap(), driver.uniform(-3.0, 3.0).unwrap()];
            let got = env.step(&a).unwrap();
            let (obs, r, done) = oracle.step(a[0], a[1]);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&got.next_obs), bits(&obs), "episode {episode}, step {steps}");
            assert_eq!(got.reward.to_bits(), r.to_bits());
            assert_eq!(got.task_complete, done);
            steps += 1;
        }
        episode += 1;
    }
}

#[test]
fn tabletop_attached_mug_follows_gripper() {
    let mut driver = Rng::new(7);
    let mut attached_steps = 0;
    for episode in 0..100u64 {
        let variant = if episode % 2 == 0 { Variant::Target } else { Variant::Source };
        let mut env = EnvInstance::new(EnvSpec::new(EnvId::Tabletop, variant, episode));
        if episode % 3 == 0 {
            // start on top of the mug so grasps actually happen
            env = env.with_initial_state(EnvState::Tabletop(TabletopState {
                gripper: [2.5, 0.0],
                mug: [2.5, 0.0],
                attached: false,
                goal: [-2.5, 1.0],
            }));
        }
        env.reset();
        for _ in 0..1000 {
            let EnvState::Tabletop(now) = env.state() else { unreachable!() };
            let mut a = [
                driver.uniform(-0.5, 0.5).unwrap(),
                driver.uniform(-0.5, 0.5).unwrap(),
                if driver.uniform01() < 0.95 { 1.0 } else { -1.0 },
            ];
            // half the free steps home in on the mug so grasps keep happening
            if !now.attached && driver.uniform01() < 0.5 {
                a[0] = now.mug[0] - now.gripper[0];
                a[1] = now.mug[1] - now.gripper[1];
            }
            let r = env.step(&a).unwrap();
            let o = &r.next_obs;
            assert!(o[0].abs() <= 2.8 && o[1].abs() <= 2.8);
            if o[4] == 1.0 {
                attached_steps += 1;
                assert_eq!((o[2].to_bits(), o[3].to_bits()), (o[0].to_bits(), o[1].to_bits()));
            }
            if let EnvState::Tabletop(s) = env.state() {
                assert!(!s.attached || s.mug == s.gripper);
            }
        }
    }
    assert!(attached_steps > 10_000, "only {attached_steps} attached steps exercised");
}
