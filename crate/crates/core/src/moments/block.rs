//! Partial moments as blocks of a single product integral.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::mul_add_rows;
use super::multiindex::{lex_enumerate_with_zero, MultiIndex};
use super::partial::{moment_grid, MomentGrid};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::markov::{
    product_integral_on, MatrixFunction, ModelSpec, Numerics, Scheme, TAYLOR_TERMS,
};
use crate::payments::{PaymentSet, Snapshot};
use crate::timefun::Side;

/// The block generator `F_U^(k)` as a matrix function of time.
///
/// Block rows and columns are indexed so that `y^m` (the `m`-th element of
/// `S~(k)` in lexicographic order, `y^0 = 0`) sits at block `K - m`, where
/// `K = |k|`.
pub struct BlockGenerator<'a> {
    model: &'a ModelSpec,
    payments: &'a PaymentSet,
    order: Vec<MultiIndex>,
    /// `(m, u, coupling)` for every nonzero block `(K-m, K-m+u)`, `u >= 1`.
    couplings: Vec<(usize, usize, BlockCoupling)>,
}

#[derive(Debug, Clone)]
enum BlockCoupling {
    Reward { l: usize, coef: f64 },
    Cross { xi: MultiIndex, coef: f64 },
}

impl<'a> BlockGenerator<'a> {
    pub fn new(
        model: &'a ModelSpec,
        payments: &'a PaymentSet,
        k: &MultiIndex,
        numerics: &Numerics,
    ) -> Result<Self> {
        if k.len() != payments.len() {
            return Err(Error::invalid(format!(
                "multi-index {k} has {} entries but there are {} contracts",
                k.len(),
                payments.len()
            )));
        }
        let dim = (k.card() + 1) * model.num_states();
        if dim > numerics.block_cap {
            return Err(Error::CapExceeded {
                dim,
                cap: numerics.block_cap,
            });
        }
        let order = lex_enumerate_with_zero(k);
        let mut couplings = Vec::new();
        for (m, ym) in order.iter().enumerate() {
            for u in 1..=m {
                let Some(diff) = ym.checked_sub(&order[m - u]) else {
                    continue;
                };
                let coupling = match diff.unit_index() {
                    Some(l) => BlockCoupling::Reward {
                        l,
                        coef: ym[l] as f64,
                    },
                    None => BlockCoupling::Cross {
                        coef: ym.binomial(&diff) as f64,
                        xi: diff,
                    },
                };
                couplings.push((m, u, coupling));
            }
        }
        Ok(BlockGenerator {
            model,
            payments,
            order,
            couplings,
        })
    }

    /// `S~(k)` in lexicographic order.
    pub fn order(&self) -> &[MultiIndex] {
        &self.order
    }

    /// `K = |k|`.
    pub fn top(&self) -> usize {
        self.order.len() - 1
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    /// Nonzero blocks `(row, col, block)` of `F_U^(k)` at one time point.
    fn blocks(&self, snap: &Snapshot) -> Vec<(usize, usize, DMatrix<f64>)> {
        let j = self.num_states();
        let big_k = self.top();
        let rewards: Vec<DMatrix<f64>> = (0..self.payments.len()).map(|l| snap.reward(l)).collect();
        let mut crosses: HashMap<&MultiIndex, DMatrix<f64>> = HashMap::new();
        let mut out = Vec::with_capacity(self.order.len() + self.couplings.len());
        for (m, ym) in self.order.iter().enumerate() {
            let mut diag = snap.intensity.clone();
            for i in 0..j {
                diag[(i, i)] -= ym.total() as f64 * snap.rate;
            }
            out.push((big_k - m, big_k - m, diag));
        }
        for (m, u, coupling) in &self.couplings {
            let block = match coupling {
                BlockCoupling::Reward { l, coef } => &rewards[*l] * *coef,
                BlockCoupling::Cross { xi, coef } => {
                    crosses.entry(xi).or_insert_with(|| snap.cross(xi)).clone() * *coef
                }
            };
            out.push((big_k - m, big_k - m + u, block));
        }
        out
    }

    fn assemble(&self, snap: &Snapshot) -> DMatrix<f64> {
        let j = self.num_states();
        let dim = self.order.len() * j;
        let mut f = DMatrix::zeros(dim, dim);
        for (row, col, block) in self.blocks(snap) {
            f.view_mut((row * j, col * j), (j, j)).copy_from(&block);
        }
        f
    }
}

impl MatrixFunction for BlockGenerator<'_> {
    fn dim(&self) -> usize {
        self.order.len() * self.num_states()
    }

    fn eval(&self, x: f64, side: Side) -> Result<DMatrix<f64>> {
        let snap = Snapshot::take(self.model, self.payments, x, side)?;
        Ok(self.assemble(&snap))
    }

    fn breakpoints(&self, s: f64, t: f64) -> Vec<f64> {
        let mut out = self.model.breakpoints();
        out.extend(self.payments.breakpoints());
        out.sort_by(f64::total_cmp);
        out.dedup();
        out.retain(|&b| b > s && b < t);
        out
    }
}

/// `F_U^(k)(x)`.
pub fn block_generator(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    x: f64,
) -> Result<DMatrix<f64>> {
    let numerics = Numerics {
        block_cap: usize::MAX,
        ..Numerics::default()
    };
    BlockGenerator::new(model, payments, k, &numerics)?.eval(x, Side::Exact)
}

/// `A x` for a block-sparse `A`.
fn block_mul(blocks: &[(usize, usize, DMatrix<f64>)], j: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (row, col, block) in blocks {
        mul_add_rows(&mut out, row * j, 1.0, block, x, col * j);
    }
    out
}

/// Applies one cell factor to a tall block column without forming the
/// factor.
fn apply_cell(
    blocks: &[(usize, usize, DMatrix<f64>)],
    j: usize,
    dt: f64,
    x: &DMatrix<f64>,
    scheme: Scheme,
) -> DMatrix<f64> {
    match scheme {
        Scheme::Euler => x + block_mul(blocks, j, x) * dt,
        Scheme::MidpointExp => {
            let mut sum = x.clone();
            let mut term = x.clone();
            for n in 1..TAYLOR_TERMS {
                term = block_mul(blocks, j, &term) * (dt / n as f64);
                sum += &term;
                if term.amax() <= f64::EPSILON * 1e-2 * sum.amax() {
                    break;
                }
            }
            sum
        }
    }
}

/// Partial moments `V^(y)(x_g, t)`, `y` in `S~(k)`, read off the right block
/// column of the block product integral at every grid node.
pub fn block_partial_moments(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    s0: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<MomentGrid> {
    let grid = moment_grid(model, payments, s0, t, numerics.h)?;
    block_partial_moments_on(model, payments, k, &grid, numerics)
}

pub fn block_partial_moments_on(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    grid: &Grid,
    numerics: &Numerics,
) -> Result<MomentGrid> {
    let gen = BlockGenerator::new(model, payments, k, numerics)?;
    let j = gen.num_states();
    let big_k = gen.top();
    let dim = gen.dim();
    let mut col = DMatrix::zeros(dim, j);
    col.view_mut((big_k * j, 0), (j, j))
        .copy_from(&DMatrix::identity(j, j));

    let split = |col: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
        (0..=big_k)
            .map(|m| col.view(((big_k - m) * j, 0), (j, j)).into_owned())
            .collect()
    };
    let mut values = Vec::with_capacity(grid.len());
    values.push(split(&col));
    for (x0, x1) in grid.cells().rev() {
        let snap = Snapshot::take(model, payments, 0.5 * (x0 + x1), Side::Exact)?;
        col = apply_cell(&gen.blocks(&snap), j, x1 - x0, &col, numerics.scheme);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                s: x0,
                context: "block product integral".into(),
            });
        }
        values.push(split(&col));
    }
    values.reverse();
    Ok(MomentGrid::from_parts(
        gen.order,
        grid.nodes().to_vec(),
        values,
    ))
}

/// The full block product integral `G^(k)(s, t)`.
#[derive(Debug, Clone)]
pub struct BlockProduct {
    pub order: Vec<MultiIndex>,
    pub num_states: usize,
    pub matrix: DMatrix<f64>,
}

impl BlockProduct {
    /// Block `(row, col)`, 0-based.
    pub fn block(&self, row: usize, col: usize) -> DMatrix<f64> {
        let j = self.num_states;
        self.matrix.view((row * j, col * j), (j, j)).into_owned()
    }

    pub fn top(&self) -> usize {
        self.order.len() - 1
    }

    /// `V^(y^i)(s, t)` from the right block column.
    pub fn partial(&self, i: usize) -> DMatrix<f64> {
        let big_k = self.top();
        self.block(big_k - i, big_k)
    }
}

pub fn block_product_integral(
    model: &ModelSpec,
    payments: &PaymentSet,
    k: &MultiIndex,
    s: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<BlockProduct> {
    let gen = BlockGenerator::new(model, payments, k, numerics)?;
    let grid = moment_grid(model, payments, s, t, numerics.h)?;
    let matrix = product_integral_on(&gen, &grid, numerics.scheme)?;
    Ok(BlockProduct {
        num_states: gen.num_states(),
        order: gen.order,
        matrix,
    })
}

/// Deviation of every block of `G^(k)(s, t)` from the closed form in terms of
/// the partial moments in its right block column.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    /// Largest absolute deviation over all blocks.
    pub max_abs: f64,
    /// Largest block-wise relative deviation, `max|G - E| / max|E|`, over
    /// blocks whose closed form is not identically zero.
    pub max_rel: f64,
}

/// Checks that block `(K-i, K-m)` equals
/// `1{y^i >= y^m} binom(y^i, y^m) exp(-|y^m| int_s^t r) V^(y^i - y^m)(s, t)`.
pub fn scaling_identity(product: &BlockProduct, integrated_interest: f64) -> ScalingReport {
    let big_k = product.top();
    let order = &product.order;
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for i in 0..=big_k {
        for m in 0..=big_k {
            let actual = product.block(big_k - i, big_k - m);
            let expected = match order[i].checked_sub(&order[m]) {
                Some(diff) => {
                    let q = order
                        .iter()
                        .position(|y| *y == diff)
                        .expect("closed under subtraction");
                    product.partial(q)
                        * (order[i].binomial(&order[m]) as f64
                            * (-(order[m].total() as f64) * integrated_interest).exp())
                }
                None => DMatrix::zeros(product.num_states, product.num_states),
            };
            let diff = (&actual - &expected).amax();
            max_abs = max_abs.max(diff);
            let scale = expected.amax();
            if scale > 0.0 {
                max_rel = max_rel.max(diff / scale);
            }
        }
    }
    ScalingReport { max_abs, max_rel }
}
