//! Backprop of the MLP against central differences.

use proptest::prelude::*;

use slrl_core::nn::{Activation, Mlp, MlpSpec, Rng, Tensor2};

const EPS: f64 = 1e-6;

/// Loss `sum(out * c)` for fixed random `c`, so `dL/d(out) = c`.
fn loss(net: &Mlp, x: &Tensor2, c: &Tensor2) -> f64 {
    net.predict(x).unwrap().dot(c)
}

fn check(spec: MlpSpec, seed: u64) -> Result<(), TestCaseError> {
    let mut rng = Rng::new(seed);
    let mut net = Mlp::new(spec.clone(), &mut rng).unwrap();
    let x = rng.gaussian_tensor(3, spec.input_dim);
    let c = rng.gaussian_tensor(3, spec.output_dim);
    net.params_mut().zero_grad();
    net.forward(&x).unwrap();
    let dx = net.backward(&c).unwrap();
    let grads = net.params().flat_grads();
    for (k, &g) in grads.iter().enumerate() {
        let mut p = net.clone();
        *p.params_mut().scalar_mut(k) += EPS;
        let up = loss(&p, &x, &c);
        *p.params_mut().scalar_mut(k) -= 2.0 * EPS;
        let down = loss(&p, &x, &c);
        let fd = (up - down) / (2.0 * EPS);
        prop_assert!((g - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {g} vs {fd}");
    }
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let mut xp = x.clone();
            xp.set(i, j, x.get(i, j) + EPS);
            let up = loss(&net, &xp, &c);
            xp.set(i, j, x.get(i, j) - EPS);
            let down = loss(&net, &xp, &c);
            let fd = (up - down) / (2.0 * EPS);
            prop_assert!((dx.get(i, j) - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // smooth activations so no coordinate straddles a kink
    #[test]
    fn tanh_net_gradients(seed in 0u64..10_000, width in 1usize..9, depth in 1usize..3) {
        let spec = MlpSpec::new(4, &vec![width; depth], 2)
            .with_hidden_activation(Activation::Tanh)
            .with_output_activation(Activation::Sigmoid);
        check(spec, seed)?;
    }

    #[test]
    fn linear_head_gradients(seed in 0u64..10_000) {
        let spec = MlpSpec::new(3, &[5], 1).with_hidden_activation(Activation::Tanh);
        check(spec, seed)?;
    }
}
