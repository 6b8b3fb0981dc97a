use advmm::nn::{Adam, Mlp, NetMeta, NetSpec, ReplayBuffer};
use advmm::selftest::{fd_relative_error, relative_error};
use advmm::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_net(seed: u64, sizes: &[usize]) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(NetSpec::new(sizes.to_vec()).unwrap(), &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_matches_finite_differences(seed in any::<u64>(), hidden in 2usize..7, out in 1usize..4) {
        let net = random_net(seed, &[4, hidden, hidden, out]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let up: Vec<f64> = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dot = |n: &Mlp, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum() };
        let (g, dx) = net.backward(&x, &up).unwrap();
        let e = fd_relative_error(&net, &g, |n| Ok(dot(n, &x)), 1e-6).unwrap();
        prop_assert!(e < 1e-6, "param rel error {e}");
        let h = 1e-6;
        let fd_dx: Vec<f64> = (0..4)
            .map(|i| {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[i] += h;
                m[i] -= h;
                (dot(&net, &p) - dot(&net, &m)) / (2.0 * h)
            })
            .collect();
        prop_assert!(relative_error(&dx, &fd_dx) < 1e-6);
    }

    #[test]
    fn bias_free_relu_net_is_positively_homogeneous(seed in any::<u64>(), c in 0.01f64..50.0) {
        let mut net = random_net(seed, &[3, 6, 5, 2]);
        for l in net.layers_mut() {
            l.b.fill(0.0);
        }
        let x = [0.3, -1.2, 0.8];
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (a, b) = (net.forward(&x).unwrap(), net.forward(&cx).unwrap());
        for (y, cy) in a.iter().zip(&b) {
            prop_assert!((c * y - cy).abs() <= 1e-12 * (1.0 + cy.abs()));
        }
    }

    #[test]
    fn batch_forward_equals_row_forward(seed in any::<u64>()) {
        let net = random_net(seed, &[5, 8, 8, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((7, 5), || rng.gen_range(-1.0..1.0));
        let cache = net.forward_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = net.forward(row.as_slice().unwrap()).unwrap();
            for (j, v) in single.iter().enumerate() {
                prop_assert!((cache.output()[[i, j]] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact(seed in any::<u64>()) {
        let net = random_net(seed, &[5, 9, 4]);
        let meta = NetMeta::new(seed, "always");
        let text = net.to_json(&meta).unwrap();
        let (back, meta_back) = Mlp::from_json(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(meta_back, meta.clone());
        prop_assert_eq!(back.to_json(&meta).unwrap(), text);
    }

    #[test]
    fn replay_never_exceeds_capacity(cap in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(cap);
        for i in 0..pushes {
            buf.push(i);
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        let oldest = pushes.saturating_sub(cap);
        prop_assert_eq!(buf.iter().copied().collect::<Vec<_>>(), (oldest..pushes).collect::<Vec<_>>());
    }
}

#[test]
fn checkpoint_file_round_trip_and_layout() {
    let dir = tempfile::tempdir().unwrap();
    let net = random_net(3, &[5, 4, 2]);
    let path = dir.path().join("net.json");
    net.save(&path, &NetMeta::new(3, "4action")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["spec"], serde_json::json!([5, 4, 2]));
    assert_eq!(v["layers"][0]["w"].as_array().unwrap().len(), 20);
    // Row-major (out, in): element [1, 2] sits at 1·5 + 2.
    assert_eq!(v["layers"][0]["w"][7].as_f64().unwrap(), net.layers()[0].w[[1, 2]]);
    assert_eq!(v["meta"]["agent_kind"], "4action");
    let (back, _) = Mlp::load(&path).unwrap();
    assert_eq!(back, net);
}

#[test]
fn truncated_layer_names_the_layer() {
    let net = random_net(1, &[3, 4, 2]);
    let mut v: serde_json::Value = serde_json::from_str(&net.to_json(&NetMeta::new(1, "always")).unwrap()).unwrap();
    v["layers"][1]["w"].as_array_mut().unwrap().pop();
    let err = Mlp::from_json(&v.to_string()).unwrap_err();
    assert!(matches!(&err, Error::Shape(m) if m.contains("layer 1")), "{err}");
}

#[test]
fn unknown_fields_are_rejected() {
    let net = random_net(1, &[2, 2]);
    let mut v: serde_json::Value = serde_json::from_str(&net.to_json(&NetMeta::new(1, "always")).unwrap()).unwrap();
    v["extra"] = serde_json::json!(1);
    assert!(Mlp::from_json(&v.to_string()).is_err());
}

#[test]
fn adam_minimises_a_quadratic() {
    let mut x = vec![3.0, -2.0];
    let mut opt = Adam::new(0.05);
    for _ in 0..2000 {
        let g: Vec<f64> = x.iter().map(|v| 2.0 * (v - 1.0)).collect();
        opt.step(&mut [&mut x], &[&g]).unwrap();
    }
    assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-3), "{x:?}");
}

#[test]
fn forward_matches_straight_line_recomputation() {
    let net = random_net(21, &[3, 4, 2]);
    let x = [0.4, -1.3, 2.2];
    let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
    let mut hidden = [0.0; 4];
    for (i, h) in hidden.iter_mut().enumerate() {
        let mut s = l0.b[i];
        for j in 0..3 {
            s += l0.w[[i, j]] * x[j];
        }
        *h = s.max(0.0);
    }
    let y = net.forward(&x).unwrap();
    for i in 0..2 {
        let mut s = l1.b[i];
        for j in 0..4 {
            s += l1.w[[i, j]] * hidden[j];
        }
        assert!((y[i] - s).abs() < 1e-12);
    }
}

#[test]
fn input_gradient_matches_full_backward() {
    let net = random_net(5, &[6, 8, 8, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_simple_fn((9, 6), || rng.gen_range(-1.0..1.0));
    let up = Array2::from_shape_simple_fn((9, 1), || rng.gen_range(-1.0..1.0));
    let cache = net.forward_batch(x.view()).unwrap();
    let (_, dx) = net.backward_batch(&cache, up.view()).unwrap();
    assert_eq!(net.input_gradient_batch(&cache, up.view()).unwrap(), dx);
}
