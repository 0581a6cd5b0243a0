//! Central finite-difference verification of tape gradients.

use super::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};

/// Relative errors use `max(|analytic|, |numeric|, REL_FLOOR)` as the
/// denominator so that entries whose true gradient is zero are judged on
/// absolute error instead of amplified noise.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    pub eps: f64,
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }
}

/// Compares `analytic[k]` (one gradient vector per tensor in `store`) with
/// central differences `(f(theta + eps) - f(theta - eps)) / (2 eps)`.
/// The store is restored to its original values on return.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    mut f: F,
    analytic: &[Vec<f64>],
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if analytic.len() != store.len() {
        return Err(Error::Shape(format!(
            "{} analytic gradients for {} tensors",
            analytic.len(),
            store.len()
        )));
    }
    let loss = f(store)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss at probe point is {loss}")));
    }
    let ids: Vec<_> = store.ids().collect();
    let mut tensors = Vec::with_capacity(ids.len());
    for (id, grad) in ids.into_iter().zip(analytic) {
        let n = store.get(id).values.len();
        if grad.len() != n {
            return Err(Error::Shape(format!(
                "analytic gradient for {} has {} entries, expected {n}",
                store.get(id).name,
                grad.len()
            )));
        }
        let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
        for k in 0..n {
            let orig = store.get(id).values[k];
            store.get_mut(id).values[k] = orig + eps;
            let up = f(store);
            store.get_mut(id).values[k] = orig - eps;
            let down = f(store);
            store.get_mut(id).values[k] = orig;
            let (up, down) = (up?, down?);
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {}[{k}]",
                    store.get(id).name
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let abs = (grad[k] - numeric).abs();
            let rel = abs / grad[k].abs().max(numeric.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        tensors.push(TensorCheck {
            name: store.get(id).name.clone(),
            entries: n,
            max_abs_err: max_abs,
            max_rel_err: max_rel,
            passed: max_rel <= tol,
        });
    }
    Ok(GradCheckReport {
        loss,
        eps,
        tol,
        tensors,
    })
}

/// Runs `loss_fn` once on a fresh tape, back-propagates, and checks every
/// tensor of `store` against central differences of the same closure.
pub fn grad_check<F>(store: &mut ParamStore, loss_fn: F, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<NodeId>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let root = loss_fn(store, &mut tape)?;
    tape.value(root).scalar()?;
    tape.backward(root, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|t| t.grad.clone()).collect();
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let r = loss_fn(s, &mut t)?;
        t.value(r).scalar()
    };
    check_gradients(store, eval, &analytic, eps, tol)
}
