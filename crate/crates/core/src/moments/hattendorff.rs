//! Covariances of the present values through reserves and sums of squared
//! sum-at-risk.

use nalgebra::{DMatrix, DVector};

use super::multiindex::MultiIndex;
use super::partial::{moment_grid, partial_moments_on};
use crate::error::Result;
use crate::markov::{ModelSpec, Numerics};
use crate::ode::rk4_backward;
use crate::payments::{PaymentSet, Snapshot};
use crate::timefun::Side;

/// Variance below which a correlation is reported as zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;

/// Reserves and conditional covariances of all contracts on a grid.
#[derive(Debug, Clone)]
pub struct CovarianceCurves {
    nodes: Vec<f64>,
    num_contracts: usize,
    /// `reserves[g][l][i] = V_i^(e_l)(nodes[g], t)`.
    reserves: Vec<Vec<DVector<f64>>>,
    /// `cov[g][i]`: `n x n` covariance matrix given `Z_s = i`.
    cov: Vec<Vec<DMatrix<f64>>>,
}

/// Correlations together with the contracts whose variance vanished.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub matrix: DMatrix<f64>,
    pub degenerate: Vec<bool>,
}

impl CovarianceCurves {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_contracts(&self) -> usize {
        self.num_contracts
    }

    pub fn node_index(&self, s: f64) -> Option<usize> {
        let tol = 1e-12 * s.abs().max(1.0);
        let i = self.nodes.partition_point(|&n| n < s - tol);
        (i < self.nodes.len() && (self.nodes[i] - s).abs() <= tol).then_some(i)
    }

    /// `V_i^(e_l)(nodes[g], t)` for all states.
    pub fn reserve(&self, l: usize, g: usize) -> &DVector<f64> {
        &self.reserves[g][l]
    }

    /// `Sigma_i(nodes[g], t)`.
    pub fn covariance_matrix(&self, i: usize, g: usize) -> &DMatrix<f64> {
        &self.cov[g][i]
    }

    /// `rho_i(nodes[g], t)`.
    pub fn correlation_matrix(&self, i: usize, g: usize) -> Correlation {
        correlation_from_covariance(&self.cov[g][i])
    }
}

pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> Correlation {
    let n = cov.nrows();
    let degenerate: Vec<bool> = (0..n).map(|l| cov[(l, l)] < DEGENERATE_VARIANCE).collect();
    let matrix = DMatrix::from_fn(n, n, |a, b| {
        if degenerate[a] || degenerate[b] {
            0.0
        } else if a == b {
            1.0
        } else {
            (cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt()).clamp(-1.0, 1.0)
        }
    });
    Correlation { matrix, degenerate }
}

fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect()
}

/// Solves the reserve equations together with the covariance equations for
/// every pair of contracts, backwards from `t` where everything vanishes.
pub fn covariance_hattendorff(
    model: &ModelSpec,
    payments: &PaymentSet,
    s0: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<CovarianceCurves> {
    let grid = moment_grid(model, payments, s0, t, numerics.h)?;
    let j = model.num_states();
    let n = payments.len();
    let pairs = pairs(n);

    let inputs = |x: f64, side: Side| Snapshot::take(model, payments, x, side);
    let deriv = |snap: &Snapshot, v: &Vec<DVector<f64>>| -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(v.len());
        // Sum at risk R_ij^l = b_ij^l + V_j^l - V_i^l.
        let risk = |l: usize, a: usize, b: usize| snap.transition[l][(a, b)] + v[l][b] - v[l][a];
        for (l, vl) in v.iter().enumerate().take(n) {
            out.push(DVector::from_fn(j, |a, _| {
                let mut d = snap.rate * vl[a] - snap.sojourn[l][a];
                for b in (0..j).filter(|&b| b != a) {
                    d -= snap.intensity[(a, b)] * risk(l, a, b);
                }
                d
            }));
        }
        for (p, &(l, m)) in pairs.iter().enumerate() {
            let c = &v[n + p];
            out.push(DVector::from_fn(j, |a, _| {
                let mut d = 2.0 * snap.rate * c[a];
                for b in (0..j).filter(|&b| b != a) {
                    let mu = snap.intensity[(a, b)];
                    if mu != 0.0 {
                        d -= mu * (risk(l, a, b) * risk(m, a, b) + c[b] - c[a]);
                    }
                }
                d
            }));
        }
        out
    };
    let terminal = vec![DVector::zeros(j); n + pairs.len()];
    let values = rk4_backward(&grid, terminal, inputs, deriv, |b| {
        if b < n {
            format!("reserve of contract {b}")
        } else {
            let (l, m) = pairs[b - n];
            format!("covariance of contracts {l} and {m}")
        }
    })?;

    let mut reserves = Vec::with_capacity(values.len());
    let mut cov = Vec::with_capacity(values.len());
    for v in values {
        let mats = (0..j)
            .map(|i| {
                let mut c = DMatrix::zeros(n, n);
                for (p, &(l, m)) in pairs.iter().enumerate() {
                    c[(l, m)] = v[n + p][i];
                    c[(m, l)] = v[n + p][i];
                }
                c
            })
            .collect();
        cov.push(mats);
        reserves.push(v[..n].to_vec());
    }
    Ok(CovarianceCurves {
        nodes: grid.nodes().to_vec(),
        num_contracts: n,
        reserves,
        cov,
    })
}

/// The same covariance curves computed as second central moments from the
/// partial moment equations with `k = 2 * 1`.
pub fn covariance_from_moments(
    model: &ModelSpec,
    payments: &PaymentSet,
    s0: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<CovarianceCurves> {
    let grid = moment_grid(model, payments, s0, t, numerics.h)?;
    let j = model.num_states();
    let n = payments.len();
    let k = MultiIndex::new(vec![2; n]);
    let moments = partial_moments_on(model, payments, &k, &grid, numerics)?;
    let mut reserves = Vec::with_capacity(grid.len());
    let mut cov = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        reserves.push(
            (0..n)
                .map(|l| {
                    let e = MultiIndex::unit(n, l);
                    DVector::from_fn(j, |i, _| moments.moment(&e, i, g).unwrap())
                })
                .collect(),
        );
        let mut mats = Vec::with_capacity(j);
        for i in 0..j {
            let mut c = DMatrix::zeros(n, n);
            for (l, m) in pairs(n) {
                let mut e = vec![0; n];
                e[l] += 1;
                e[m] += 1;
                let y = MultiIndex::new(e);
                let value = moments.central_moment(&y, i, g)?;
                c[(l, m)] = value;
                c[(m, l)] = value;
            }
            mats.push(c);
        }
        cov.push(mats);
    }
    Ok(CovarianceCurves {
        nodes: grid.nodes().to_vec(),
        num_contracts: n,
        reserves,
        cov,
    })
}
