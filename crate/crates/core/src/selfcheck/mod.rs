//! Release gate: runs the oracle suites and reports one row per check.

pub mod gradients;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{column_exchange, gab_combine, row_exchange, Fd};
use crate::error::Result;
use crate::metrics::{dice_iou, e_measure, s_measure, weighted_fbeta, Map};
use crate::nn::Scope;
use crate::reference;
use crate::scan::{ss2d_path, ScanOrder, ScanVariant};
use crate::tensor::{Graph, ParamBuilder, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, Default)]
pub struct SelfCheckOptions {
    /// Corrupts one scan table before the bijectivity check.
    pub corrupt_scan_table: bool,
    /// Skips the gradient suite.
    pub skip_gradients: bool,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct SelfCheckReport {
    pub results: Vec<CheckResult>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let width = self
            .results
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = format!("{:<width$}  result  time     detail\n", "check");
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<width$}  {:<6}  {:>6.2}s  {}",
                r.name,
                if r.passed { "pass" } else { "FAIL" },
                r.elapsed.as_secs_f64(),
                r.detail
            );
        }
        out
    }
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Every scan table on grids up to 16×16 is a bijection, and the reversed
/// variants are exact reversals.
pub fn scan_bijectivity(corrupt: bool) -> Result<(bool, String)> {
    let mut failures = Vec::new();
    for h in 1..=16 {
        for w in 1..=16 {
            let mut tables = Vec::new();
            for v in ScanVariant::ALL {
                let mut order = ScanOrder::new(h, w, v)?;
                if corrupt && (h, w) == (4, 4) && v == ScanVariant::AntiDiagTL {
                    order.inject_duplicate();
                }
                let round_trip = (0..h * w).all(|p| order.forward()[order.inverse()[p]] == p);
                if !order.is_bijection() || !round_trip {
                    failures.push(format!("{h}x{w} {v:?}"));
                }
                tables.push(order);
            }
            for (a, b) in [(0, 1), (2, 3)] {
                let rev: Vec<usize> = tables[a].forward().iter().rev().copied().collect();
                if rev != tables[b].forward() {
                    failures.push(format!("{h}x{w} reversal {:?}", tables[b].variant()));
                }
            }
        }
    }
    Ok(match failures.first() {
        None => (true, "1024 tables".into()),
        Some(f) => (false, format!("{} broken, first {f}", failures.len())),
    })
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Scan paths against the token-by-token recurrence on random cases.
pub fn scan_oracle(cases: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=64 / h);
        let (chans, state) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let variant = ScanVariant::ALL[case % 4];
        let hw = h * w;
        let x = uniform(&mut rng, chans * hw, -1.0, 1.0);
        let delta = uniform(&mut rng, chans * hw, 0.01, 1.0);
        let b = uniform(&mut rng, state * hw, -1.0, 1.0);
        let c = uniform(&mut rng, state * hw, -1.0, 1.0);
        let a_log: Vec<Vec<f64>> = (0..chans)
            .map(|_| uniform(&mut rng, state, -1.0, 1.5))
            .collect();
        let d = uniform(&mut rng, chans, -1.0, 1.0);
        let expect = reference::ss2d_path(&x, &delta, &b, &c, &a_log, &d, (h, w), variant);

        let g = Graph::<f64>::inference();
        let t = |shape: Vec<usize>, v: &[f64]| Tensor::from_f64(shape, v).map(|t| g.constant(t));
        let y = ss2d_path(
            t(vec![1, chans, h, w], &x)?,
            t(vec![1, chans, h, w], &delta)?,
            t(vec![1, state, h, w], &b)?,
            t(vec![1, state, h, w], &c)?,
            t(vec![chans, state], &a_log.concat())?,
            t(vec![chans], &d)?,
            &ScanOrder::new(h, w, variant)?,
        )?
        .value();
        for (a, e) in y.data().iter().zip(&expect) {
            worst = worst.max((a - e).abs());
        }
    }
    Ok((
        worst <= 1e-10,
        format!("{cases} cases, max abs error {worst:.2e}"),
    ))
}

/// Algebraic identities that must hold exactly.
pub fn algebra() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = vec![2, 3, 5, 6];
    let n = shape.iter().product();
    let m = Tensor::from_f64(shape.clone(), &uniform(&mut rng, n, -2.0, 2.0))?;
    let y = Tensor::from_f64(shape.clone(), &uniform(&mut rng, n, -2.0, 2.0))?;
    let g = Graph::<f64>::inference();
    let (mv, yv) = (g.constant(m.clone()), g.constant(y.clone()));
    let mut failed = Vec::new();

    // uniform weights and λ = ½ double the input
    let ones = g.constant(Tensor::ones(vec![2, 3, 1, 1]));
    let ones_s = g.constant(Tensor::ones(vec![2, 1, 5, 6]));
    let half = g.constant(Tensor::full(vec![1, 1, 1, 1], 0.5));
    let out = gab_combine(ones, ones_s, half, mv)?.value();
    if out.data().iter().zip(m.data()).any(|(o, v)| *o != 2.0 * v) {
        failed.push("attention doubling");
    }

    // zero deeper maps pass the shallow map through
    let mut store = ParamStore::<f64>::new();
    let fd = Fd::new(&mut ParamBuilder::new(&mut store, &mut rng), [3, 4, 5])?;
    let c1 = Tensor::from_f64(vec![2, 3, 8, 8], &uniform(&mut rng, 384, -1.0, 1.0))?;
    let out = fd
        .forward(
            Scope::new(&g, &store),
            g.constant(c1.clone()),
            g.constant(Tensor::zeros(vec![2, 4, 4, 4])),
            g.constant(Tensor::zeros(vec![2, 5, 2, 2])),
        )?
        .value();
    if out.data() != c1.data() {
        failed.push("fd passthrough");
    }

    // exchanging twice restores the inputs
    for (name, row) in [("row involution", true), ("column involution", false)] {
        let exchange = if row {
            row_exchange::<f64>
        } else {
            column_exchange::<f64>
        };
        let (a, b) = exchange(mv, yv)?;
        let (a2, b2) = exchange(a, b)?;
        if a2.value().data() != m.data() || b2.value().data() != y.data() {
            failed.push(name);
        }
    }
    Ok(if failed.is_empty() {
        (
            true,
            "attention doubling, fd passthrough, exchange involutions".into(),
        )
    } else {
        (false, failed.join(", "))
    })
}

fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Result<(Map, Map)> {
    let mut gt = vec![0.0; h * w];
    for _ in 0..rng.gen_range(1..4) {
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let r: f64 = rng.gen_range(1.0..5.0);
        for y in 0..h {
            for x in 0..w {
                if (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r {
                    gt[y * w + x] = 1.0;
                }
            }
        }
    }
    let pred = gt
        .iter()
        .map(|&g| (0.6 * g + rng.gen_range(0.0f64..0.4)).min(1.0))
        .collect();
    Ok((Map::new(h, w, pred)?, Map::new(h, w, gt)?))
}

/// Structural measures against the direct-formula oracles, plus the
/// overlap identity and the perfect-prediction scores.
pub fn metric_oracle(cases: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..cases {
        let (pred, gt) = random_pair(&mut rng, 16, 16)?;
        worst = worst
            .max((weighted_fbeta(&pred, &gt)? - reference::weighted_fbeta(&pred, &gt)).abs())
            .max((s_measure(&pred, &gt)? - reference::s_measure(&pred, &gt)).abs())
            .max((e_measure(&pred, &gt)? - reference::e_measure(&pred, &gt)).abs());
        let (d, i) = dice_iou(&pred, &gt, 0.5)?;
        ok &= (d - 2.0 * i / (1.0 + i)).abs() <= 4.0 * f64::EPSILON;
        let perfect = crate::metrics::ImageMetrics::compute("p", &gt, &gt)?;
        let ideal = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        ok &= perfect
            .values()
            .iter()
            .zip(ideal)
            .all(|(v, e)| (v - e).abs() <= 1e-8);
    }
    Ok((
        ok && worst <= 1e-8,
        format!("{cases} pairs, max abs error {worst:.2e}"),
    ))
}

pub fn run(opts: SelfCheckOptions) -> SelfCheckReport {
    let mut results = vec![
        timed("scan_bijectivity", || {
            scan_bijectivity(opts.corrupt_scan_table)
        }),
        timed("selective_scan_oracle", || scan_oracle(100, 11)),
        timed("exact_algebra", algebra),
        timed("metric_oracle", || metric_oracle(100, 5)),
    ];
    if !opts.skip_gradients {
        for (name, case, options) in gradients::all() {
            results.push(timed(&format!("gradient_{name}"), || {
                let r = case(options)?;
                Ok((
                    r.max_rel_error < gradients::TOLERANCE,
                    format!(
                        "max rel error {:.2e} at {} over {} probes",
                        r.max_rel_error, r.worst, r.probes
                    ),
                ))
            }));
        }
    }
    SelfCheckReport { results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_table_is_caught() {
        assert!(scan_bijectivity(false).unwrap().0);
        let (ok, detail) = scan_bijectivity(true).unwrap();
        assert!(!ok);
        assert!(detail.contains("4x4 AntiDiagTL"), "{detail}");
    }

    #[test]
    fn fast_checks_pass() {
        let report = run(SelfCheckOptions {
            skip_gradients: true,
            ..Default::default()
        });
        assert!(report.passed(), "{}", report.table());
        assert_eq!(report.results.len(), 4);
    }
}
