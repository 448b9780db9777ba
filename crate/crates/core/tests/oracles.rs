use cmfdnet::metrics::{dice_iou, e_measure, mae, s_measure, weighted_fbeta, Map};
use cmfdnet::reference;
use cmfdnet::scan::{ss2d_path, ScanOrder, ScanVariant};
use cmfdnet::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

#[test]
fn ss2d_paths_match_per_pixel_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=64 / h);
        let (chans, state) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let variant = ScanVariant::ALL[case % 4];
        let hw = h * w;
        let x = random(&mut rng, chans * hw, -1.0, 1.0);
        let delta = random(&mut rng, chans * hw, 0.01, 1.0);
        let b = random(&mut rng, state * hw, -1.0, 1.0);
        let c = random(&mut rng, state * hw, -1.0, 1.0);
        let a_log: Vec<Vec<f64>> = (0..chans)
            .map(|_| random(&mut rng, state, -1.0, 1.5))
            .collect();
        let d = random(&mut rng, chans, -1.0, 1.0);
        let expect = reference::ss2d_path(&x, &delta, &b, &c, &a_log, &d, (h, w), variant);

        let g = Graph::<f64>::inference();
        let t = |shape: Vec<usize>, v: &[f64]| g.constant(Tensor::from_f64(shape, v).unwrap());
        let flat_a: Vec<f64> = a_log.concat();
        let y = ss2d_path(
            t(vec![1, chans, h, w], &x),
            t(vec![1, chans, h, w], &delta),
            t(vec![1, state, h, w], &b),
            t(vec![1, state, h, w], &c),
            t(vec![chans, state], &flat_a),
            t(vec![chans], &d),
            &ScanOrder::new(h, w, variant).unwrap(),
        )
        .unwrap()
        .value();
        let err = y
            .data()
            .iter()
            .zip(&expect)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "case {case}: {err}");
    }
}

#[test]
fn zero_input_scans_to_zero() {
    let g = Graph::<f64>::inference();
    let z = |c| g.constant(Tensor::zeros(vec![1, c, 4, 5]));
    let ones = |c| g.constant(Tensor::full(vec![1, c, 4, 5], 0.5));
    let y = ss2d_path(
        z(3),
        ones(3),
        ones(2),
        ones(2),
        g.constant(Tensor::zeros(vec![3, 2])),
        g.constant(Tensor::ones(vec![3])),
        &ScanOrder::new(4, 5, ScanVariant::MainDiagBL).unwrap(),
    )
    .unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (Map, Map) {
    // blobby ground truth from a few random discs
    let mut gt = vec![0.0; h * w];
    for _ in 0..rng.gen_range(0..4) {
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let r = rng.gen_range(1.0..5.0);
        for y in 0..h {
            for x in 0..w {
                if (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r {
                    gt[y * w + x] = 1.0;
                }
            }
        }
    }
    let style = rng.gen_range(0..3);
    let pred: Vec<f64> = gt
        .iter()
        .map(|&g| match style {
            0 => rng.gen_range(0.0..1.0),
            1 => (g * 0.7 + rng.gen_range(0.0..0.3) as f64).min(1.0),
            _ => (rng.gen_range(0..5) as f64) / 4.0,
        })
        .collect();
    (Map::new(h, w, pred).unwrap(), Map::new(h, w, gt).unwrap())
}

#[test]
fn structural_measures_match_direct_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..150 {
        let (pred, gt) = random_pair(&mut rng, 16, 16);
        let pairs = [
            (
                "fbw",
                weighted_fbeta(&pred, &gt).unwrap(),
                reference::weighted_fbeta(&pred, &gt),
            ),
            (
                "s",
                s_measure(&pred, &gt).unwrap(),
                reference::s_measure(&pred, &gt),
            ),
            (
                "e",
                e_measure(&pred, &gt).unwrap(),
                reference::e_measure(&pred, &gt),
            ),
        ];
        for (name, a, b) in pairs {
            assert!((a - b).abs() <= 1e-8, "case {case} {name}: {a} vs {b}");
            assert!(
                (0.0..=1.0).contains(&a),
                "case {case} {name} out of range: {a}"
            );
        }
    }
}

#[test]
fn flip_symmetry_and_dice_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let (pred, gt) = random_pair(&mut rng, 12, 17);
        let (fp, fg) = (pred.flip_horizontal(), gt.flip_horizontal());
        let (d, i) = dice_iou(&pred, &gt, 0.5).unwrap();
        assert_eq!((d, i), dice_iou(&fp, &fg, 0.5).unwrap());
        assert!((d - 2.0 * i / (1.0 + i)).abs() <= 4.0 * f64::EPSILON);
        assert!(d >= i);
        assert!((mae(&pred, &gt).unwrap() - mae(&fp, &fg).unwrap()).abs() < 1e-12);
        let a = weighted_fbeta(&pred, &gt).unwrap();
        assert!((a - weighted_fbeta(&fp, &fg).unwrap()).abs() < 1e-12);
        let a = e_measure(&pred, &gt).unwrap();
        assert!((a - e_measure(&fp, &fg).unwrap()).abs() < 1e-12);
    }
}
