//! Central finite-difference gradient checking.

use super::params::{ParamId, ParamStore};
use super::tape::Gradients;

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Relative error with an absolute floor so exactly-zero gradients compare sanely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` (computed once at the current parameters) with central
/// differences of `value` for every scalar of every parameter in `ids`.
pub fn check<F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    analytic: &Gradients,
    step: f64,
    floor: f64,
    value: F,
) -> GradCheck
where
    F: Fn(&ParamStore) -> f64,
{
    let mut out = GradCheck {
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for &id in ids {
        let n = store.get(id).len();
        let grad = analytic.dense(id, n);
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + step;
            let up = value(store);
            store.get_mut(id).data[k] = orig - step;
            let down = value(store);
            store.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(grad[k], numeric, floor);
            out.checked += 1;
            if err > out.max_rel_err {
                out.max_rel_err = err;
                out.worst = format!(
                    "{}[{k}]: analytic {:.9e} numeric {:.9e}",
                    store.name(id),
                    grad[k],
                    numeric
                );
            }
        }
    }
    out
}
