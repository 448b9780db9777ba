use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmfdnet::blocks::{column_exchange, row_exchange, CmfdNet, Gab, ModelConfig};
use cmfdnet::data::{augment, pnm, AugmentConfig, Sample};
use cmfdnet::nn::Scope;
use cmfdnet::tensor::ParamBuilder;
use cmfdnet::train::{bce_dice, AdamW, AdamWConfig};
use cmfdnet::{Graph, ParamStore, Tensor};

fn tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exchange_twice_is_identity(n in 1usize..3, c in 1usize..4, h in 1usize..9, w in 1usize..9, seed: u64) {
        let g = Graph::<f64>::inference();
        let (x, y) = (tensor(&[n, c, h, w], seed), tensor(&[n, c, h, w], seed ^ 1));
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        for rows in [true, false] {
            let ex = if rows { row_exchange::<f64> } else { column_exchange::<f64> };
            let (s, d) = ex(xv, yv).unwrap();
            let (s2, d2) = ex(s, d).unwrap();
            prop_assert_eq!(s2.value().data().to_vec(), x.data().to_vec());
            prop_assert_eq!(d2.value().data().to_vec(), y.data().to_vec());
            // every output pixel comes from one of the inputs at the same place
            let sv = s.value();
            for (i, v) in sv.data().iter().enumerate() {
                prop_assert!(*v == x.data()[i] || *v == y.data()[i]);
            }
        }
    }

    #[test]
    fn rgb_and_mask_round_trip(h in 1usize..12, w in 1usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planar: Vec<f32> = (0..3 * h * w).map(|_| f32::from(rng.gen::<u8>()) / 255.0).collect();
        let bytes = pnm::encode_rgb(h, w, &planar);
        let (dh, dw, back) = pnm::decode_rgb(&bytes).unwrap();
        prop_assert_eq!((dh, dw), (h, w));
        prop_assert_eq!(pnm::encode_rgb(h, w, &back), bytes);
        for (a, b) in planar.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        let mask: Vec<u8> = (0..h * w).map(|_| rng.gen_range(0..2)).collect();
        let (mh, mw, m) = pnm::decode_mask(&pnm::encode_mask(h, w, &mask)).unwrap();
        prop_assert_eq!((mh, mw), (h, w));
        prop_assert_eq!(m, mask);
    }

    #[test]
    fn augmentation_keeps_shapes_ranges_and_binary_masks(
        seed: u64,
        flip in 0.0f64..=1.0,
        rot in 0.0f64..45.0,
        bright in 0.0f64..0.5,
        contrast in 0.0f64..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (12, 10);
        let s = Sample {
            id: "a".into(),
            height: h,
            width: w,
            image: (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
            mask: (0..h * w).map(|i| u8::from((i / w) > 3 && (i % w) < 6)).collect(),
        };
        let cfg = AugmentConfig { flip_prob: flip, rotation_deg: rot, brightness: bright, contrast };
        let out = augment(&s, &cfg, &mut rng);
        prop_assert_eq!((out.height, out.width, out.image.len(), out.mask.len()), (h, w, 3 * h * w, h * w));
        prop_assert!(out.image.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(out.mask.iter().all(|&m| m <= 1));
    }

    #[test]
    fn loss_is_non_negative(seed: u64, scale in 0.1f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::from_vec(vec![2, 1, 4, 4], (0..32).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap();
        let gt = Tensor::from_vec(vec![2, 1, 4, 4], (0..32).map(|_| f64::from(rng.gen_range(0..2u8))).collect()).unwrap();
        let g = Graph::<f64>::inference();
        let loss = bce_dice(g.constant(logits), &gt).unwrap().value().item();
        prop_assert!(loss >= 0.0 && loss.is_finite());
    }
}

#[test]
fn loss_vanishes_only_in_the_perfect_limit() {
    let gt = Tensor::from_f64(vec![1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
    let g = Graph::<f64>::inference();
    let loss = |k: f64| {
        let logits = gt.map(|v| if v > 0.5 { k } else { -k });
        bce_dice(g.constant(logits), &gt).unwrap().value().item()
    };
    assert!(loss(1.0) > loss(5.0) && loss(5.0) > loss(20.0));
    assert!(loss(40.0) < 1e-12);
    assert!(loss(40.0) >= 0.0);
}

#[test]
fn lambda_stays_inside_the_unit_interval() {
    let mut store = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let gab = Gab::new(&mut ParamBuilder::new(&mut store, &mut rng), 4, 2, 3).unwrap();
    let x = Tensor::from_vec(
        vec![2, 4, 6, 6],
        (0..288).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
    )
    .unwrap();
    let mut opt = AdamW::new(AdamWConfig::default(), &store);
    // push λ upwards hard, then downwards
    for step in 0..600 {
        let sign: f32 = if step < 300 { -1.0 } else { 1.0 };
        let g = Graph::new();
        let s = Scope::new(&g, &store);
        let y = gab.forward(s, s.constant(x.clone())).unwrap();
        let loss = y
            .sum_all()
            .mul(s.constant(Tensor::full(vec![1], sign)))
            .unwrap();
        let loss = loss
            .add(gab.lambda(s).sum_all().affine(f64::from(sign) * 10.0, 0.0))
            .unwrap();
        let grads = g.backward(loss, &store).unwrap();
        drop(g);
        opt.update(&mut store, &grads, 5e-3).unwrap();
        let g = Graph::inference();
        let lambda = gab.lambda(Scope::new(&g, &store)).value().item();
        assert!(lambda > 0.0 && lambda < 1.0, "step {step}: {lambda}");
    }
}

#[test]
fn model_checkpoint_round_trip_is_exact() {
    let cfg = ModelConfig {
        channels: [4, 4, 8, 8],
        ssm_state: 2,
        ..ModelConfig::desk()
    };
    let (net, params) = CmfdNet::init::<f32>(cfg.clone(), 3).unwrap();
    let bytes = net.to_checkpoint(&params).unwrap();
    let (net2, params2) = CmfdNet::from_checkpoint::<f32>(&bytes).unwrap();
    assert_eq!(net2.config, cfg);
    assert_eq!(net2.to_checkpoint(&params2).unwrap(), bytes);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = Tensor::from_vec(
        vec![1, 3, 64, 64],
        (0..3 * 4096).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
    )
    .unwrap();
    assert_eq!(
        net.predict(&params, &img).unwrap().data(),
        net2.predict(&params2, &img).unwrap().data()
    );

    // header config disagreeing with the tensors
    let other = ModelConfig {
        channels: [8, 8, 8, 8],
        ..cfg
    };
    let (other_net, _) = CmfdNet::init::<f32>(other, 0).unwrap();
    let swapped = other_net.to_checkpoint(&params);
    assert!(swapped.is_err() || CmfdNet::from_checkpoint::<f32>(&swapped.unwrap()).is_err());
}
