//! Central finite-difference gradient checks in 64-bit.

use crate::error::{Error, Result};
use crate::nn::Scope;
use crate::tensor::{Graph, ParamStore, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Elements probed per parameter tensor, spread evenly over the tensor.
    /// `None` probes every element.
    pub max_per_param: Option<usize>,
    /// Magnitude below which the relative error is measured against this
    /// floor instead.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_per_param: None,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst probe.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub probes: usize,
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn probe_indices(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(k) if k < len => (0..k).map(|i| i * len / k + (len / k) / 2).collect(),
        _ => (0..len).collect(),
    }
}

fn eval<L>(store: &ParamStore<f64>, loss: &L) -> Result<f64>
where
    L: for<'g> Fn(Scope<'g, f64>) -> Result<Var<'g, f64>>,
{
    let graph = Graph::inference();
    let out = loss(Scope::new(&graph, store))?;
    let value = out.value();
    if value.numel() != 1 {
        return Err(Error::NonScalarLoss(value.shape().to_vec()));
    }
    Ok(value.item())
}

/// Compares the analytic gradient of `loss` with respect to every parameter
/// in `store` against central differences.
pub fn check<L>(store: &ParamStore<f64>, loss: L, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    L: for<'g> Fn(Scope<'g, f64>) -> Result<Var<'g, f64>>,
{
    let graph = Graph::new();
    let out = loss(Scope::new(&graph, store))?;
    let grads = graph.backward(out, store)?;
    drop(graph);

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        probes: 0,
    };
    for id in store.ids() {
        let name = store.get(id).name.clone();
        let base = store.value(id).clone();
        for i in probe_indices(base.numel(), opts.max_per_param) {
            let mut at = |delta: f64| -> Result<f64> {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                work.set_value(id, t)?;
                eval(&work, &loss)
            };
            let numeric = (at(opts.step)? - at(-opts.step)?) / (2.0 * opts.step);
            work.set_value(id, base.clone())?;
            let analytic = grads.get(id).data()[i];
            let rel = relative_error(analytic, numeric, opts.floor);
            report.probes += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}[{i}]");
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
