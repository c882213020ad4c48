//! Backward differential equations for conditional partial moments and
//! conditional moments.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::mul_add_rows;
use super::multiindex::{lex_enumerate, lex_enumerate_with_zero, MultiIndex};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::markov::{ModelSpec, Numerics};
use crate::ode::rk4_backward;
use crate::payments::{PaymentSet, Snapshot};
use crate::timefun::Side;

/// Which input matrix couples a moment to a lower one.
#[derive(Debug, Clone, Copy)]
enum Coupling {
    /// `R_l`.
    Reward(usize),
    /// `C^(xi)`, by position in the list of cross indices.
    Cross(usize),
}

#[derive(Debug, Clone)]
struct Term {
    coef: f64,
    coupling: Coupling,
    lower: usize,
}

/// Right-hand side structure of the stacked system: for each `y` in
/// `S~(k)`, the terms `coef * X * V^(y - xi)` over `xi` in `S(y)`.
struct Recursion {
    order: Vec<MultiIndex>,
    terms: Vec<Vec<Term>>,
    cross: Vec<MultiIndex>,
}

impl Recursion {
    fn new(k: &MultiIndex) -> Self {
        let order = lex_enumerate_with_zero(k);
        let index: HashMap<&MultiIndex, usize> =
            order.iter().enumerate().map(|(i, y)| (y, i)).collect();
        let mut cross: Vec<MultiIndex> = Vec::new();
        let mut terms = Vec::with_capacity(order.len());
        for y in &order {
            let mut row = Vec::new();
            for xi in lex_enumerate(y) {
                let lower = index[&y.checked_sub(&xi).expect("xi <= y")];
                let (coef, coupling) = match xi.unit_index() {
                    Some(l) => (y[l] as f64, Coupling::Reward(l)),
                    None => {
                        let pos = match cross.iter().position(|c| *c == xi) {
                            Some(p) => p,
                            None => {
                                cross.push(xi.clone());
                                cross.len() - 1
                            }
                        };
                        (y.binomial(&xi) as f64, Coupling::Cross(pos))
                    }
                };
                row.push(Term {
                    coef,
                    coupling,
                    lower,
                });
            }
            terms.push(row);
        }
        Recursion {
            order,
            terms,
            cross,
        }
    }
}

struct Inputs {
    snap: Snapshot,
    rewards: Vec<DMatrix<f64>>,
    crosses: Vec<DMatrix<f64>>,
}

fn check_order(payments: &PaymentSet, k: &MultiIndex) -> Result<()> {
    if k.len() != payments.len() {
        return Err(Error::invalid(format!(
            "multi-index {k} has {} entries but there are {} contracts",
            k.len(),
            payments.len()
        )));
    }
    Ok(())
}

fn check_cap(k: &MultiIndex, j: usize, numerics: &Numerics) -> Result<()> {
    let dim = (k.card() + 1) * j;
    if dim > numerics.block_cap {
        return Err(Error::CapExceeded {
            dim,
            cap: numerics.block_cap,
        });
    }
    Ok(())
}

/// Grid on `[s0, t]` aligned with every breakpoint of the model and the
/// payments.
pub fn moment_grid(
    model: &ModelSpec,
    payments: &PaymentSet,
    s0: f64,
    t: f64,
    h: f64,
) -> Result<Grid> {
    if s0 < 0.0 || t > model.horizon() + 1e-12 {
        return Err(Error::invalid(format!(
            "[{s0}, {t}] is outside the model horizon [0, {}]",
            model.horizon()
        )));
    }
    let mut forced = model.breakpoints();
    forced.extend(payments.breakpoints());
    Grid::new(s0, t, h, &forced)
}

/// Conditional partial moments `V^(y)(s, t)` for all `y` in `S~(k)` at every
/// grid node `s`.
#[derive(Debug, Clone)]
pub struct MomentGrid {
    order: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
    nodes: Vec<f64>,
    /// `values[g][m]` is `V^(order[m])(nodes[g], t)`.
    values: Vec<Vec<DMatrix<f64>>>,
}

impl MomentGrid {
    pub(crate) fn from_parts(
        order: Vec<MultiIndex>,
        nodes: Vec<f64>,
        values: Vec<Vec<DMatrix<f64>>>,
    ) -> Self {
        let index = order
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, y)| (y, i))
            .collect();
        MomentGrid {
            order,
            index,
            nodes,
            values,
        }
    }

    /// `S~(k)` in lexicographic order, zero first.
    pub fn order(&self) -> &[MultiIndex] {
        &self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn node_index(&self, s: f64) -> Option<usize> {
        let tol = 1e-12 * s.abs().max(1.0);
        let i = self.nodes.partition_point(|&n| n < s - tol);
        (i < self.nodes.len() && (self.nodes[i] - s).abs() <= tol).then_some(i)
    }

    pub fn contains(&self, y: &MultiIndex) -> bool {
        self.index.contains_key(y)
    }

    /// `V^(y)(nodes[g], t)`.
    pub fn partial(&self, y: &MultiIndex, g: usize) -> Option<&DMatrix<f64>> {
        self.index.get(y).map(|&m| &self.values[g][m])
    }

    /// `V_i^(y)(nodes[g], t)`, the row sum of the partial moment matrix.
    pub fn moment(&self, y: &MultiIndex, i: usize, g: usize) -> Option<f64> {
        self.partial(y, g).map(|v| v.row(i).sum())
    }

    /// Conditional central moment `m_i^(k)(nodes[g], t)`.
    pub fn central_moment(&self, k: &MultiIndex, i: usize, g: usize) -> Result<f64> {
        central_moment_from(k, |y| self.moment(y, i, g))
    }
}

/// Solves the stacked backward system for all `y` in `S~(k)`, lowest first.
pub fn partial_moments(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    s0: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<MomentGrid> {
    let grid = moment_grid(model, payments, s0, t, numerics.h)?;
    partial_moments_on(model, payments, k, &grid, numerics)
}

pub fn partial_moments_on(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    grid: &Grid,
    numerics: &Numerics,
) -> Result<MomentGrid> {
    check_order(payments, k)?;
    let j = model.num_states();
    check_cap(k, j, numerics)?;
    let rec = Recursion::new(k);
    let n = payments.len();

    let mut terminal = vec![DMatrix::zeros(j, j); rec.order.len()];
    terminal[0] = DMatrix::identity(j, j);

    let inputs = |x: f64, side: Side| -> Result<Inputs> {
        let snap = Snapshot::take(model, payments, x, side)?;
        let rewards = (0..n).map(|l| snap.reward(l)).collect();
        let crosses = rec.cross.iter().map(|xi| snap.cross(xi)).collect();
        Ok(Inputs {
            snap,
            rewards,
            crosses,
        })
    };
    let deriv = |inp: &Inputs, v: &Vec<DMatrix<f64>>| -> Vec<DMatrix<f64>> {
        rec.order
            .iter()
            .zip(&rec.terms)
            .enumerate()
            .map(|(m, (y, terms))| {
                let mut d = &v[m] * (y.total() as f64 * inp.snap.rate);
                mul_add_rows(&mut d, 0, -1.0, &inp.snap.intensity, &v[m], 0);
                for term in terms {
                    let x = match term.coupling {
                        Coupling::Reward(l) => &inp.rewards[l],
                        Coupling::Cross(c) => &inp.crosses[c],
                    };
                    mul_add_rows(&mut d, 0, -term.coef, x, &v[term.lower], 0);
                }
                d
            })
            .collect()
    };
    let values = rk4_backward(grid, terminal, inputs, deriv, |m| {
        format!("partial moment V^{}", rec.order[m])
    })?;
    Ok(MomentGrid::from_parts(
        rec.order,
        grid.nodes().to_vec(),
        values,
    ))
}

/// Conditional moments `V_i^(y)(s, t)` per state, for all `y` in `S~(k)`.
#[derive(Debug, Clone)]
pub struct StateMoments {
    order: Vec<MultiIndex>,
    nodes: Vec<f64>,
    /// `values[g][m][i]`.
    values: Vec<Vec<DVector<f64>>>,
}

impl StateMoments {
    pub fn order(&self) -> &[MultiIndex] {
        &self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values_at(&self, g: usize) -> &[DVector<f64>] {
        &self.values[g]
    }

    pub fn moment(&self, y: &MultiIndex, i: usize, g: usize) -> Option<f64> {
        let m = self.order.iter().position(|o| o == y)?;
        Some(self.values[g][m][i])
    }

    pub fn central_moment(&self, k: &MultiIndex, i: usize, g: usize) -> Result<f64> {
        central_moment_from(k, |y| self.moment(y, i, g))
    }
}

/// `V_i^(y) = (V^(y) 1)_i`.
pub fn conditional_moments(grid: &MomentGrid) -> StateMoments {
    let values = grid
        .values
        .iter()
        .map(|row| row.iter().map(|v| v.column_sum()).collect())
        .collect();
    StateMoments {
        order: grid.order.clone(),
        nodes: grid.nodes.clone(),
        values,
    }
}

/// Solves the per-state moment equations directly, without going through
/// the partial moments. Used to cross-check [`conditional_moments`].
pub fn conditional_moments_direct(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    s0: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<StateMoments> {
    check_order(payments, k)?;
    let j = model.num_states();
    check_cap(k, j, numerics)?;
    let grid = moment_grid(model, payments, s0, t, numerics.h)?;
    let order = lex_enumerate_with_zero(k);
    let position: HashMap<&MultiIndex, usize> =
        order.iter().enumerate().map(|(i, y)| (y, i)).collect();
    // For each moment: (y, binomial, index of k - y) over y in S~(k).
    let expansions: Vec<Vec<(MultiIndex, f64, usize)>> = order
        .iter()
        .map(|kk| {
            lex_enumerate_with_zero(kk)
                .into_iter()
                .map(|y| {
                    let rest = position[&kk.checked_sub(&y).unwrap()];
                    let c = kk.binomial(&y) as f64;
                    (y, c, rest)
                })
                .collect()
        })
        .collect();

    let mut terminal = vec![DVector::zeros(j); order.len()];
    terminal[0] = DVector::from_element(j, 1.0);
    let inputs = |x: f64, side: Side| Snapshot::take(model, payments, x, side);
    let deriv = |snap: &Snapshot, v: &Vec<DVector<f64>>| -> Vec<DVector<f64>> {
        order
            .iter()
            .enumerate()
            .map(|(m, kk)| {
                let mut d = DVector::zeros(j);
                for i in 0..j {
                    let exit = -snap.intensity[(i, i)];
                    let mut acc = (kk.total() as f64 * snap.rate + exit) * v[m][i];
                    for (l, &kl) in kk.iter().enumerate() {
                        if kl > 0 {
                            let lower =
                                position[&kk.checked_sub(&MultiIndex::unit(kk.len(), l)).unwrap()];
                            acc -= kl as f64 * snap.sojourn[l][i] * v[lower][i];
                        }
                    }
                    for jj in (0..j).filter(|&jj| jj != i) {
                        let mu = snap.intensity[(i, jj)];
                        if mu == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (y, c, rest) in &expansions[m] {
                            let lump: f64 = y
                                .iter()
                                .enumerate()
                                .map(|(l, &p)| snap.transition[l][(i, jj)].powi(p as i32))
                                .product();
                            inner += c * lump * v[*rest][jj];
                        }
                        acc -= mu * inner;
                    }
                    d[i] = acc;
                }
                d
            })
            .collect()
    };
    let values = rk4_backward(&grid, terminal, inputs, deriv, |m| {
        format!("conditional moment V_i^{}", order[m])
    })?;
    Ok(StateMoments {
        order,
        nodes: grid.nodes().to_vec(),
        values,
    })
}

/// Multivariate binomial expansion of the central moment
/// `E[prod_l (U_l - V^(e_l))^{k_l}]` in terms of raw moments supplied by
/// `raw`.
pub fn central_moment_from(
    k: &MultiIndex,
    raw: impl Fn(&MultiIndex) -> Option<f64>,
) -> Result<f64> {
    let n = k.len();
    let fetch = |y: &MultiIndex| raw(y).ok_or_else(|| Error::MissingMoment(y.to_string()));
    let means: Vec<f64> = (0..n)
        .map(|l| {
            if k[l] > 0 {
                fetch(&MultiIndex::unit(n, l))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for y in lex_enumerate_with_zero(k) {
        let mut weight = k.binomial(&y) as f64;
        for l in 0..n {
            let p = k[l] - y[l];
            if p > 0 {
                weight *= (-means[l]).powi(p as i32);
            }
        }
        total += weight * fetch(&y)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payments::Contract;
    use crate::timefun::TimeFunction;

    /// One state, no interest, constant sojourn rate `c`.
    fn annuity(c: f64) -> (ModelSpec, PaymentSet) {
        let m = ModelSpec::new(vec!["alive".into()], TimeFunction::zero(), vec![], 30.0).unwrap();
        let p = PaymentSet::new(
            &m,
            vec![Contract::new("a", 1, vec![(0, TimeFunction::constant(c))], vec![]).unwrap()],
        )
        .unwrap();
        (m, p)
    }

    #[test]
    fn deterministic_annuity_moments() {
        let (m, p) = annuity(0.7);
        let k = MultiIndex::new(vec![2]);
        let g = partial_moments(&m, &p, &k, 0.0, 10.0, &Numerics::with_step(0.05)).unwrap();
        for (gi, &s) in g.nodes().iter().enumerate() {
            let expected = (0.7 * (10.0 - s)).powi(2);
            let got = g.partial(&k, gi).unwrap()[(0, 0)];
            assert!((got - expected).abs() < 1e-10 * expected.max(1.0));
            assert!(g.central_moment(&k, 0, gi).unwrap().abs() < 1e-9);
            assert!(
                g.central_moment(&MultiIndex::new(vec![1]), 0, gi)
                    .unwrap()
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn terminal_condition() {
        let (m, p) = annuity(1.0);
        let k = MultiIndex::new(vec![3]);
        let g = partial_moments(&m, &p, &k, 0.0, 5.0, &Numerics::default()).unwrap();
        let last = g.nodes().len() - 1;
        assert_eq!(
            g.partial(&MultiIndex::new(vec![0]), last).unwrap()[(0, 0)],
            1.0
        );
        for y in 1..=3 {
            assert_eq!(
                g.partial(&MultiIndex::new(vec![y]), last).unwrap()[(0, 0)],
                0.0
            );
        }
    }

    #[test]
    fn cap_is_enforced() {
        let (m, p) = annuity(1.0);
        let numerics = Numerics {
            block_cap: 4,
            ..Numerics::default()
        };
        let err =
            partial_moments(&m, &p, &MultiIndex::new(vec![4]), 0.0, 1.0, &numerics).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { dim: 5, cap: 4 }));
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let (m, p) = annuity(1.0);
        assert!(partial_moments(
            &m,
            &p,
            &MultiIndex::new(vec![1, 1]),
            0.0,
            1.0,
            &Numerics::default()
        )
        .is_err());
    }

    #[test]
    fn central_moment_needs_lower_moments() {
        let err = central_moment_from(&MultiIndex::new(vec![2]), |_| None).unwrap_err();
        assert!(matches!(err, Error::MissingMoment(_)));
    }

    #[test]
    fn central_covariance_formula() {
        // m^(1,1) = V^(1,1) - V^(1,0) V^(0,1).
        let raw = |y: &MultiIndex| -> Option<f64> {
            Some(match y.entries() {
                [0, 0] => 1.0,
                [1, 0] => 2.0,
                [0, 1] => 3.0,
                [1, 1] => 7.5,
                _ => return None,
            })
        };
        let c = central_moment_from(&MultiIndex::new(vec![1, 1]), raw).unwrap();
        assert!((c - 1.5).abs() < 1e-15);
    }
}
