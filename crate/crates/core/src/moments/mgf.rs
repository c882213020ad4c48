//! Conditional moment generating function of the discounted payments.

use nalgebra::DMatrix;

use super::partial::moment_grid;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::markov::{cell_factor, cumulative_integral, simpson, ModelSpec, Numerics};
use crate::payments::{PaymentSet, Snapshot};
use crate::timefun::Side;

/// Largest exponent accepted before `exp` is considered to overflow.
const MAX_EXPONENT: f64 = 700.0;

/// Generator of the product integral for `F(theta; s, .)` at a point where
/// the discount factor from `s` is `v`.
fn generator(snap: &Snapshot, theta: &[f64], v: f64) -> Result<DMatrix<f64>> {
    let j = snap.num_states();
    let mut a = snap.intensity.clone();
    for i in 0..j {
        for k in (0..j).filter(|&k| k != i) {
            let mu = snap.intensity[(i, k)];
            if mu == 0.0 {
                continue;
            }
            let x: f64 = v * theta
                .iter()
                .zip(&snap.transition)
                .map(|(th, b)| th * b[(i, k)])
                .sum::<f64>();
            if x > MAX_EXPONENT {
                return Err(Error::NonFinite {
                    s: snap.t,
                    context: format!("exp({x}) overflows in the transition {i}->{k}"),
                });
            }
            a[(i, k)] = mu * x.exp();
        }
        a[(i, i)] += v * theta
            .iter()
            .zip(&snap.sojourn)
            .map(|(th, b)| th * b[i])
            .sum::<f64>();
    }
    Ok(a)
}

fn check_theta(payments: &PaymentSet, theta: &[f64]) -> Result<()> {
    if theta.len() != payments.len() {
        return Err(Error::invalid(format!(
            "theta has {} entries but there are {} contracts",
            theta.len(),
            payments.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("theta must be finite"));
    }
    Ok(())
}

/// `F(theta; s, t)`, the matrix with entries
/// `E[exp(<theta, U(s, t)>) 1{Z_t = j} | Z_s = i]`.
pub fn mgf(
    model: &ModelSpec,
    payments: &PaymentSet,
    theta: &[f64],
    s: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<DMatrix<f64>> {
    let grid = moment_grid(model, payments, s, t, numerics.h)?;
    mgf_on(model, payments, theta, &grid, numerics)
}

pub fn mgf_on(
    model: &ModelSpec,
    payments: &PaymentSet,
    theta: &[f64],
    grid: &Grid,
    numerics: &Numerics,
) -> Result<DMatrix<f64>> {
    check_theta(payments, theta)?;
    let j = model.num_states();
    let interest = cumulative_integral(model.interest(), grid)?;
    let mut acc: DMatrix<f64> = DMatrix::identity(j, j);
    for (g, (x0, x1)) in grid.cells().enumerate() {
        let mid = 0.5 * (x0 + x1);
        let v = (-(interest[g] + simpson(model.interest(), x0, mid)?)).exp();
        let snap = Snapshot::take(model, payments, mid, Side::Exact)?;
        let a = generator(&snap, theta, v)?;
        acc = &acc * cell_factor(&a, x1 - x0, numerics.scheme);
        if acc.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                s: x0,
                context: "moment generating function".into(),
            });
        }
    }
    Ok(acc)
}

/// Step used for the finite differences in [`mgf_pde_residual`].
pub const PDE_STEP: f64 = 1e-4;

/// Max-norm of the residual of the backward equation
/// `dF/ds + A(theta; s) F - r(s) sum_l theta_l dF/dtheta_l = 0`, with all
/// derivatives replaced by central differences.
///
/// Returns `None` when `s` is within one difference step of a breakpoint or
/// of the interval ends, where the derivative in `s` does not exist.
pub fn mgf_pde_residual(
    model: &ModelSpec,
    payments: &PaymentSet,
    theta: &[f64],
    s: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<Option<f64>> {
    check_theta(payments, theta)?;
    let d = PDE_STEP;
    if s - d < 0.0 || s + d > t {
        return Ok(None);
    }
    let mut bps = model.breakpoints();
    bps.extend(payments.breakpoints());
    if bps.iter().any(|&b| (s - d..=s + d).contains(&b)) {
        return Ok(None);
    }
    // Share the nodes s - d, s and s + d so that the three grids agree on
    // [s + d, t] and the discretisation error cancels in the difference.
    bps.extend([s - d, s, s + d]);
    let at = |start: f64, th: &[f64]| -> Result<DMatrix<f64>> {
        let grid = Grid::new(start, t, numerics.h, &bps)?;
        mgf_on(model, payments, th, &grid, numerics)
    };
    let f = at(s, theta)?;
    let dfds = (at(s + d, theta)? - at(s - d, theta)?) / (2.0 * d);
    let snap = Snapshot::take(model, payments, s, Side::Exact)?;
    let mut residual = dfds + generator(&snap, theta, 1.0)? * &f;
    for (l, &th) in theta.iter().enumerate() {
        if th == 0.0 {
            continue;
        }
        let mut up = theta.to_vec();
        let mut down = theta.to_vec();
        up[l] += d;
        down[l] -= d;
        let dfdt = (at(s, &up)? - at(s, &down)?) / (2.0 * d);
        residual -= dfdt * (snap.rate * th);
    }
    Ok(Some(residual.amax()))
}
