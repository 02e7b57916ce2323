//! Central finite-difference gradient checking.

use super::params::ModelParams;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries whose true gradient is essentially zero from
/// dividing rounding noise by a vanishing denominator.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `f` with respect to every entry of `params`.
pub fn numeric_gradient<F>(params: &ModelParams, step: f64, mut f: F) -> ModelParams
where
    F: FnMut(&ModelParams) -> f64,
{
    let mut work = params.clone();
    let mut out = params.zeros_like();
    let names: Vec<String> = params.names().cloned().collect();
    for name in &names {
        let n = params.get(name).map_or(0, |t| t.len());
        for i in 0..n {
            let orig = params.get(name).unwrap().data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + step;
            let fp = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig - step;
            let fm = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig;
            out.get_mut(name).unwrap().data_mut()[i] = (fp - fm) / (2.0 * step);
        }
    }
    out
}

/// Compares `analytic` against central differences of `f`.
pub fn check<F>(params: &ModelParams, analytic: &ModelParams, step: f64, floor: f64, f: F) -> GradCheck
where
    F: FnMut(&ModelParams) -> f64,
{
    let numeric = numeric_gradient(params, step, f);
    let mut res = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for ((_, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        for (&a, &n) in a.data().iter().zip(n.data()) {
            res.max_rel_error = res.max_rel_error.max(rel_error(a, n, floor));
            res.max_abs_error = res.max_abs_error.max((a - n).abs());
            res.checked += 1;
        }
    }
    res
}
