use pyrdepth_core::net::{BufferEvent, HANDOFF_CHANNELS};
use pyrdepth_core::{random_init, ExitLevel, Network, NetworkConfig, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network(seed: u64) -> Network {
    let cfg = NetworkConfig::default();
    Network::build(cfg.clone(), &random_init(&cfg, seed).unwrap()).unwrap()
}

fn random_image(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, _, _, _| rng.random_range(0.0f32..=1.0))
}

/// Layer-by-layer sum of `3·3·cin·cout + cout` (and `2·2·8·8 + 8` per hand-off),
/// written out independently of the layer table the network builds from.
fn closed_form_parameter_count() -> usize {
    let conv = |cin: usize, cout: usize| 9 * cin * cout + cout;
    let enc = [16, 32, 64, 96, 128, 192];
    let mut total = 0;
    let mut cin = 3;
    for &c in &enc {
        total += conv(cin, c) + conv(c, c);
        cin = c;
    }
    for (level, &c) in enc.iter().enumerate() {
        let input = if level == 5 { c } else { c + 8 };
        total += conv(input, 96) + conv(96, 64) + conv(64, 32) + conv(32, 8);
    }
    total + 5 * (4 * 8 * 8 + 8)
}

#[test]
fn parameter_count_matches_closed_form() {
    let expected = closed_form_parameter_count();
    assert_eq!(expected, 1_971_624);
    let net = network(0);
    assert_eq!(net.count_parameters(), expected);
    assert!((1_800_000..=2_050_000).contains(&net.count_parameters()));
    let table: usize = net.config().layer_table().iter().map(|l| l.num_parameters()).sum();
    assert_eq!(table, expected);
}

#[test]
fn resolution_ladder_and_sigmoid_range() {
    let net = network(1);
    let pyramid = net.infer(&random_image(0, 256, 512), ExitLevel::H).unwrap();
    assert_eq!((pyramid.first_level(), pyramid.last_level()), (1, 6));
    for level in 1..=6 {
        let map = pyramid.map(level).unwrap();
        assert_eq!(map.shape(), Shape::new(1, 1, 256 >> level, 512 >> level));
        assert!(map.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let bound = 0.3 * (512 >> level) as f32;
        assert!(pyramid.scaled(level).unwrap().data().iter().all(|&v| v > 0.0 && v <= bound));
    }
    assert!(pyramid.map(0).is_none() && pyramid.map(7).is_none());
}

#[test]
fn early_exit_matches_full_pass_bitwise() {
    let net = network(2);
    let img = random_image(1, 128, 256);
    let full = net.infer(&img, ExitLevel::H).unwrap();
    let again = net.infer(&img, ExitLevel::H).unwrap();
    assert_eq!(full, again);
    for exit in [ExitLevel::Q, ExitLevel::E, ExitLevel::S64] {
        let early = net.infer(&img, exit).unwrap();
        assert_eq!(early.first_level(), exit.level());
        for level in exit.level()..=6 {
            let (a, b) = (early.map(level).unwrap(), full.map(level).unwrap());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn random_weights_give_finite_outputs() {
    for seed in 0..10 {
        let net = network(seed);
        let pyramid = net.infer(&random_image(100 + seed, 64, 128), ExitLevel::H).unwrap();
        for level in 1..=6 {
            assert!(pyramid.scaled(level).unwrap().all_finite(), "seed {seed} level {level}");
        }
    }
}

#[test]
fn fullres_output_dims() {
    let net = network(3);
    let img = random_image(2, 128, 256);
    let h = net.infer_fullres(&img, ExitLevel::H).unwrap();
    let e = net.infer_fullres(&img, ExitLevel::E).unwrap();
    assert_eq!(h.shape(), Shape::new(1, 1, 128, 256));
    assert_eq!(e.shape(), h.shape());
}

#[test]
fn forced_constant_sigmoid_propagates_to_full_resolution() {
    let cfg = NetworkConfig::default();
    let mut weights = random_init(&cfg, 4).unwrap();
    let s = 0.37f32;
    let logit = (s / (1.0 - s)).ln();
    let mut bias = vec![0.0; HANDOFF_CHANNELS];
    bias[0] = logit;
    weights
        .replace("decoder1/conv4/kernel", vec![8, 32, 3, 3], vec![0.0; 8 * 32 * 9])
        .unwrap();
    weights.replace("decoder1/conv4/bias", vec![8], bias).unwrap();
    let net = Network::build(cfg, &weights).unwrap();
    let out = net.infer_fullres(&random_image(5, 256, 512), ExitLevel::H).unwrap();
    let expected = 0.3 * 512.0 * s;
    assert!(out.data().iter().all(|&v| (v - expected).abs() < 1e-3), "{:?}", out.min_max());
}

#[test]
fn footprint_ordering_and_budget() {
    let net = network(0);
    let fp = |exit| net.activation_footprint(256, 512, exit).unwrap();
    let (h, q, e) = (fp(ExitLevel::H), fp(ExitLevel::Q), fp(ExitLevel::E));
    assert!(e < q && q < h, "{e} {q} {h}");
    assert!(h < 64 << 20);
    assert_eq!(net.activation_footprint(512, 1024, ExitLevel::H).unwrap(), 4 * h);
    assert!(net.activation_footprint(250, 512, ExitLevel::H).is_err());
}

#[test]
fn footprint_matches_traced_run() {
    let net = network(0);
    let img = random_image(9, 128, 192);
    for exit in [ExitLevel::H, ExitLevel::E] {
        let mut events = Vec::new();
        net.infer_traced(&img, exit, &mut events).unwrap();
        let (mut live, mut peak) = (0usize, 0usize);
        for e in events {
            match e {
                BufferEvent::Alloc(s) => {
                    live += s.bytes();
                    peak = peak.max(live);
                }
                BufferEvent::Free(s) => live -= s.bytes(),
            }
        }
        assert_eq!(peak, net.activation_footprint(128, 192, exit).unwrap());
    }
}

#[test]
fn concurrent_inference_is_consistent() {
    let net = network(6);
    let img = random_image(3, 64, 128);
    let reference = net.infer(&img, ExitLevel::Q).unwrap();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..3).map(|_| scope.spawn(|| net.infer(&img, ExitLevel::Q).unwrap())).collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), reference);
        }
    });
}
