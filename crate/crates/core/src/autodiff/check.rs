//! Central-difference gradient checks used as a test oracle.

use super::array::Array;
use super::graph::{Graph, Tensor};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const REL_ERR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn scalar_value(g: &Graph, y: Tensor) -> Result<f64> {
    let v = g.value(y);
    if !v.is_scalar() {
        return Err(Error::Precondition(format!(
            "grad_check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Compares the backward gradient of scalar `f` at `x` with central
/// differences `(f(x + eps·e_i) - f(x - eps·e_i)) / 2eps` and returns the
/// largest relative error over all coordinates.
pub fn grad_check<F>(f: F, x: &Array, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Tensor) -> Result<Tensor>,
{
    let mut g = Graph::new();
    let xt = g.leaf(x.clone());
    let y = f(&mut g, xt)?;
    scalar_value(&g, y)?;
    g.backward(y)?;
    let analytic = g.grad(xt).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |point: &Array| -> Result<f64> {
        let mut g = Graph::new();
        let t = g.leaf(point.clone());
        let y = f(&mut g, t)?;
        scalar_value(&g, y)
    };
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Gradient check over the parameters of a store. `stride` > 1 checks every
/// `stride`-th scalar of each parameter to bound the cost on larger models.
pub fn grad_check_params<F>(store: &ParamStore, f: F, eps: f64, stride: usize) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Tensor>,
{
    let mut work = store.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let y = f(&mut g, &work)?;
    scalar_value(&g, y)?;
    g.backward(y)?;
    work.accumulate(&g);
    let analytic: Vec<(ParamId, Vec<f64>)> =
        work.ids().map(|id| (id, work.grad(id).to_vec())).collect();

    let mut worst = 0.0f64;
    for (id, grad) in analytic {
        for i in (0..grad.len()).step_by(stride.max(1)) {
            let orig = work.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + eps;
            let mut g = Graph::new();
            let y = f(&mut g, &work)?;
            let up = scalar_value(&g, y)?;
            work.value_mut(id).data_mut()[i] = orig - eps;
            let mut g = Graph::new();
            let y = f(&mut g, &work)?;
            let down = scalar_value(&g, y)?;
            work.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad[i], numeric));
        }
    }
    Ok(worst)
}
