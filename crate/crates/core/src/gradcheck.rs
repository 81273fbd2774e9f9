//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward evaluation, so it stays
//! independent of the backward implementation it is checking.

use crate::param::Parameter;

/// Compares analytic gradients (already accumulated in each parameter's
/// `grad`) against central finite differences of `eval`.
///
/// `params_of` re-borrows the parameters from `target` on demand, which lets
/// the same closure pair perturb a coordinate and then evaluate the loss on
/// the whole model. Returns the maximum over all coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn finite_diff_gradcheck<T, F, G>(target: &mut T, eps: f64, mut eval: F, mut params_of: G) -> f64
where
    F: FnMut(&T) -> f64,
    G: for<'a> FnMut(&'a mut T) -> Vec<&'a mut Parameter>,
{
    let analytic: Vec<Vec<f64>> = params_of(target)
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let sizes: Vec<usize> = analytic.iter().map(|g| g.len()).collect();

    let mut max_rel = 0.0_f64;
    for (pi, &size) in sizes.iter().enumerate() {
        for ci in 0..size {
            {
                let mut ps = params_of(target);
                ps[pi].value.data_mut()[ci] += eps;
            }
            let f_plus = eval(target);
            {
                let mut ps = params_of(target);
                ps[pi].value.data_mut()[ci] -= 2.0 * eps;
            }
            let f_minus = eval(target);
            {
                let mut ps = params_of(target);
                ps[pi].value.data_mut()[ci] += eps;
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[pi][ci];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}

/// Convenience wrapper for checking a plain list of parameters.
pub fn gradcheck_params<F>(params: &mut Vec<Parameter>, eps: f64, eval: F) -> f64
where
    F: FnMut(&Vec<Parameter>) -> f64,
{
    finite_diff_gradcheck(params, eps, eval, |ps| ps.iter_mut().collect())
}
