//! Moments of multivariate present values.

mod block;
mod clt;
mod hattendorff;
mod mgf;
mod multiindex;
mod partial;

use nalgebra::DMatrix;

pub use block::{
    block_generator, block_partial_moments, block_partial_moments_on, block_product_integral,
    scaling_identity, BlockGenerator, BlockProduct, ScalingReport,
};
pub use clt::{clt_margins, Margins};
pub use hattendorff::{
    correlation_from_covariance, covariance_from_moments, covariance_hattendorff, Correlation,
    CovarianceCurves, DEGENERATE_VARIANCE,
};
pub use mgf::{mgf, mgf_on, mgf_pde_residual, PDE_STEP};
pub use multiindex::{
    binomial, check_lex_closure, lex_enumerate, lex_enumerate_with_zero, MultiIndex,
};
pub use partial::{
    central_moment_from, conditional_moments, conditional_moments_direct, moment_grid,
    partial_moments, partial_moments_on, MomentGrid, StateMoments,
};

/// `out[r0.., ..] += coef * a * x[c0.., ..]` on `a.nrows()` rows starting at
/// `r0` of `out` and `c0` of `x`.
pub(crate) fn mul_add_rows(
    out: &mut DMatrix<f64>,
    r0: usize,
    coef: f64,
    a: &DMatrix<f64>,
    x: &DMatrix<f64>,
    c0: usize,
) {
    match a.nrows() {
        2 => mul_add_fixed::<2>(out, r0, coef, a, x, c0),
        3 => mul_add_fixed::<3>(out, r0, coef, a, x, c0),
        4 => mul_add_fixed::<4>(out, r0, coef, a, x, c0),
        _ => {
            let j = a.nrows();
            let mut rows = out.rows_mut(r0, j);
            rows.gemm(coef, a, &x.rows(c0, j), 1.0);
        }
    }
}

fn mul_add_fixed<const J: usize>(
    out: &mut DMatrix<f64>,
    r0: usize,
    coef: f64,
    a: &DMatrix<f64>,
    x: &DMatrix<f64>,
    c0: usize,
) {
    let (on, xn) = (out.nrows(), x.nrows());
    let mut am = [[0.0; J]; J];
    for (b, col) in am.iter_mut().enumerate() {
        col.copy_from_slice(&a.as_slice()[b * J..(b + 1) * J]);
    }
    let xs = x.as_slice();
    let os = out.as_mut_slice();
    for col in 0..x.ncols() {
        let xv: &[f64; J] = xs[col * xn + c0..col * xn + c0 + J].try_into().unwrap();
        let oc: &mut [f64; J] = (&mut os[col * on + r0..col * on + r0 + J])
            .try_into()
            .unwrap();
        for b in 0..J {
            let w = coef * xv[b];
            for r in 0..J {
                oc[r] += am[b][r] * w;
            }
        }
    }
}
