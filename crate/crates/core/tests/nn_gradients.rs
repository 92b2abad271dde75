use metacgnn::nn::{assign_values, finite_diff_check, flatten_grads, flatten_values, mlp_init, Activation, AdamState, Mlp, MlpConfig, ParamTensor};
use metacgnn::rng;
use metacgnn::Error;
use rand::Rng;

/// Loss `sum_i c_i * out_i` for a random cotangent `c`.
fn linear_loss(net: &Mlp, input: &[f64], n: usize, c: &[f64]) -> f64 {
    net.predict(input, n).unwrap().iter().zip(c).map(|(a, b)| a * b).sum()
}

#[test]
fn mlp_gradients_match_finite_differences_on_random_nets() {
    let mut r = rng::rng(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..120 {
        let depth = r.gen_range(1..=3);
        let mut widths = vec![r.gen_range(1..=4)];
        for _ in 0..depth {
            widths.push(r.gen_range(1..=6));
        }
        let mut net = Mlp::new(MlpConfig::relu_hidden(&widths, trial), "t").unwrap();
        // Zero biases put dead-unit outputs exactly on the ReLU kink.
        for p in net.params_mut() {
            p.values.iter_mut().for_each(|v| *v += r.gen_range(-0.5..0.5));
        }
        let n = r.gen_range(1..=5);
        let input: Vec<f64> = (0..n * widths[0]).map(|_| r.gen_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..n * widths[depth]).map(|_| r.gen_range(-1.0..1.0)).collect();
        net.zero_grad();
        let (_, tape) = net.forward(&input, n).unwrap();
        let dinput = net.backward(tape, &c).unwrap();
        let point = flatten_values(net.params());
        let analytic = flatten_grads(net.params());
        let mut probe = net.clone();
        let err = finite_diff_check(&point, &analytic, 1e-6, |p| {
            assign_values(probe.params_mut().iter_mut(), p).unwrap();
            linear_loss(&probe, &input, n, &c)
        });
        worst = worst.max(err);
        let net2 = net.clone();
        let err_in = finite_diff_check(&input, &dinput, 1e-6, |x| linear_loss(&net2, x, n, &c));
        worst = worst.max(err_in);
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let config = MlpConfig { layer_widths: vec![1, 1, 1], activations: vec![Activation::Relu, Activation::Identity], init_seed: 0 };
    let params = vec![
        ParamTensor::from_values("w0", vec![1, 1], vec![1.0]).unwrap(),
        ParamTensor::from_values("b0", vec![1], vec![0.0]).unwrap(),
        ParamTensor::from_values("w1", vec![1, 1], vec![1.0]).unwrap(),
        ParamTensor::from_values("b1", vec![1], vec![0.0]).unwrap(),
    ];
    let mut net = Mlp::from_params(config, params).unwrap();
    let (_, tape) = net.forward(&[0.0], 1).unwrap();
    let dx = net.backward(tape, &[1.0]).unwrap();
    assert_eq!(dx, vec![0.0]);
}

#[test]
fn stale_tape_is_rejected() {
    let mut net = Mlp::new(MlpConfig::relu_hidden(&[2, 3, 1], 1), "t").unwrap();
    let (_, tape) = net.forward(&[0.5, -0.5], 1).unwrap();
    net.params_mut()[0].values[0] += 0.1;
    assert!(matches!(net.backward(tape, &[1.0]), Err(Error::StaleTape { .. })));
    let other = Mlp::new(MlpConfig::relu_hidden(&[2, 3, 1], 1), "t").unwrap();
    let (_, tape) = other.forward(&[0.5, -0.5], 1).unwrap();
    assert!(net.backward(tape, &[1.0]).is_err());
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut p = ParamTensor::from_values("p", vec![3], vec![1.0, -2.0, 0.5]).unwrap();
    p.grad = vec![3.0, -0.01, 0.0];
    let mut adam = AdamState::new([&p], 0.1).unwrap();
    adam.step(&mut [&mut p]).unwrap();
    assert!((p.values[0] - 0.9).abs() < 1e-7);
    assert!((p.values[1] + 1.9).abs() < 1e-5);
    assert_eq!(p.values[2], 0.5);
}

#[test]
fn adam_rejects_non_finite_gradient_without_modifying() {
    let mut p = ParamTensor::from_values("p", vec![2], vec![1.0, 2.0]).unwrap();
    p.grad = vec![f64::NAN, 1.0];
    let mut adam = AdamState::new([&p], 0.01).unwrap();
    assert!(adam.step(&mut [&mut p]).is_err());
    assert_eq!(p.values, vec![1.0, 2.0]);
    assert_eq!(adam.step_count, 0);
}

#[test]
fn glorot_init_is_bounded_and_seeded() {
    let config = MlpConfig::relu_hidden(&[10, 40, 1], 9);
    let a = mlp_init(&config, "n").unwrap();
    let b = mlp_init(&config, "n").unwrap();
    assert_eq!(a, b);
    let bound = (6.0f64 / 50.0).sqrt();
    assert!(a[0].values.iter().all(|v| v.abs() <= bound));
    assert!(a[1].values.iter().all(|&v| v == 0.0));
}
