//! Fixed-step backward Runge-Kutta integration on a breakpoint-aligned grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::timefun::Side;

/// A stacked ODE state.
pub(crate) trait OdeState: Clone {
    /// `self + a * d`.
    fn add_scaled(&self, a: f64, d: &Self) -> Self;

    /// Index of the first non-finite component block, if any.
    fn first_non_finite(&self) -> Option<usize>;
}

macro_rules! stacked_state {
    ($ty:ty) => {
        impl OdeState for Vec<$ty> {
            fn add_scaled(&self, a: f64, d: &Self) -> Self {
                self.iter().zip(d).map(|(x, y)| x + y * a).collect()
            }

            fn first_non_finite(&self) -> Option<usize> {
                self.iter().position(|m| m.iter().any(|v| !v.is_finite()))
            }
        }
    };
}

stacked_state!(DMatrix<f64>);
stacked_state!(DVector<f64>);

/// Integrates `dV/ds = f(s, V)` from the right end of `grid`, where `V` is
/// known, down to its left end with classic RK4.
///
/// Inputs are sampled once per stage point through `inputs`; the stage
/// points at cell ends use the one-sided limit from inside the cell, so a
/// jump at a node never leaks into the neighbouring cell.
///
/// Returns the state at every node, index-aligned with `grid.nodes()`.
pub(crate) fn rk4_backward<S, I, P, F>(
    grid: &Grid,
    terminal: S,
    mut inputs: P,
    deriv: F,
    describe: impl Fn(usize) -> String,
) -> Result<Vec<S>>
where
    S: OdeState,
    P: FnMut(f64, Side) -> Result<I>,
    F: Fn(&I, &S) -> S,
{
    let mut out = Vec::with_capacity(grid.len());
    out.push(terminal);
    for (x0, x1) in grid.cells().rev() {
        let dt = x1 - x0;
        let v = out.last().unwrap();
        let hi = inputs(x1, Side::Below)?;
        let mid = inputs(0.5 * (x0 + x1), Side::Exact)?;
        let lo = inputs(x0, Side::Above)?;
        let k1 = deriv(&hi, v);
        let k2 = deriv(&mid, &v.add_scaled(-0.5 * dt, &k1));
        let k3 = deriv(&mid, &v.add_scaled(-0.5 * dt, &k2));
        let k4 = deriv(&lo, &v.add_scaled(-dt, &k3));
        let next = v
            .add_scaled(-dt / 6.0, &k1)
            .add_scaled(-dt / 3.0, &k2)
            .add_scaled(-dt / 3.0, &k3)
            .add_scaled(-dt / 6.0, &k4);
        if let Some(block) = next.first_non_finite() {
            return Err(Error::NonFinite {
                s: x0,
                context: describe(block),
            });
        }
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_backward() {
        // dV/ds = 0.3 V, V(2) = 1  =>  V(s) = exp(-0.3 (2 - s)).
        let grid = Grid::new(0.0, 2.0, 0.01, &[]).unwrap();
        let vals = rk4_backward(
            &grid,
            vec![DVector::from_element(1, 1.0)],
            |_, _| Ok(()),
            |_, v: &Vec<DVector<f64>>| vec![&v[0] * 0.3],
            |_| String::new(),
        )
        .unwrap();
        let exact = (-0.6f64).exp();
        assert!((vals[0][0][0] - exact).abs() < 1e-12);
        assert_eq!(vals.last().unwrap()[0][0], 1.0);
    }

    #[test]
    fn fourth_order_convergence() {
        // dV/ds = s V on [0, 1], V(1) = 1  =>  V(s) = exp((s^2 - 1) / 2).
        let solve = |h: f64| {
            let grid = Grid::new(0.0, 1.0, h, &[]).unwrap();
            rk4_backward(
                &grid,
                vec![DVector::from_element(1, 1.0)],
                |x, _| Ok(x),
                |x: &f64, v: &Vec<DVector<f64>>| vec![&v[0] * *x],
                |_| String::new(),
            )
            .unwrap()[0][0][0]
        };
        let exact = (-0.5f64).exp();
        let e1 = (solve(0.1) - exact).abs();
        let e2 = (solve(0.05) - exact).abs();
        assert!(e1 / e2 > 14.0, "ratio {}", e1 / e2);
    }
}
