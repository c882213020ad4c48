//! Monte Carlo simulation of the state process and the present values.
//!
//! Paths are generated by thinning against a piecewise constant dominating
//! exit intensity. Every path has its own random stream derived from the
//! seed and the path index, so results do not depend on the number of
//! threads.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::markov::{cumulative_integral, simpson, ModelSpec, Numerics};
use crate::moments::{moment_grid, MultiIndex};
use crate::payments::PaymentSet;
use crate::timefun::Side;

/// Safety factor applied to the sampled exit intensities.
const BOUND_FACTOR: f64 = 1.01;

/// Refinement of the bound table used when a path exceeds the bound.
const REFINEMENT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    /// `(time, new state)` for every jump in `(s, t]`.
    pub jumps: Vec<(f64, usize)>,
    pub final_state: usize,
    /// Present value at `s` of each contract's payments on `(s, t]`.
    pub present_values: Vec<f64>,
}

struct BoundTable {
    grid: Grid,
    /// `rate[i][g]`: dominating exit intensity of state `i` on cell `g`.
    rate: Vec<Vec<f64>>,
    /// `cum[i][g]`: integral of `rate[i]` from `s` to node `g`.
    cum: Vec<Vec<f64>>,
}

impl BoundTable {
    fn new(model: &ModelSpec, grid: Grid) -> Result<Self> {
        let j = model.num_states();
        let mut rate = vec![Vec::with_capacity(grid.cell_count()); j];
        let mut cum = vec![vec![0.0]; j];
        for (a, b) in grid.cells() {
            for i in 0..j {
                let peak = model
                    .exit_rate(i, a, Side::Above)?
                    .max(model.exit_rate(i, 0.5 * (a + b), Side::Exact)?)
                    .max(model.exit_rate(i, b, Side::Below)?);
                let bound = BOUND_FACTOR * peak;
                rate[i].push(bound);
                let last = *cum[i].last().unwrap();
                cum[i].push(last + bound * (b - a));
            }
        }
        Ok(BoundTable { grid, rate, cum })
    }

    fn hazard(&self, i: usize, x: f64) -> f64 {
        let g = self.grid.cell_of(x);
        self.cum[i][g] + self.rate[i][g] * (x - self.grid.nodes()[g])
    }

    /// First time after which the dominating hazard of `i` reaches `level`,
    /// or `None` if it stays below `level` up to the end of the grid.
    fn invert(&self, i: usize, level: f64) -> Option<(f64, usize)> {
        let cum = &self.cum[i];
        if level >= *cum.last().unwrap() {
            return None;
        }
        let g = cum.partition_point(|&c| c <= level) - 1;
        let x = self.grid.nodes()[g] + (level - cum[g]) / self.rate[i][g];
        Some((x.min(self.grid.nodes()[g + 1]), g))
    }
}

/// Simulates sample paths on `[s, t]` for a fixed model and payment set.
pub struct Simulator<'a> {
    model: &'a ModelSpec,
    payments: &'a PaymentSet,
    grid: Grid,
    /// Integrated interest from `s` to each node.
    interest: Vec<f64>,
    /// `sojourn[i][l][g]`: present value at `s` of contract `l`'s sojourn
    /// payments in state `i` from `s` to node `g`.
    sojourn: Vec<Vec<Vec<f64>>>,
    bounds: BoundTable,
    refined: OnceLock<std::result::Result<BoundTable, String>>,
    h: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        model: &'a ModelSpec,
        payments: &'a PaymentSet,
        s: f64,
        t: f64,
        numerics: &Numerics,
    ) -> Result<Self> {
        let grid = moment_grid(model, payments, s, t, numerics.h)?;
        let interest = cumulative_integral(model.interest(), &grid)?;
        let mut sim = Simulator {
            model,
            payments,
            bounds: BoundTable::new(model, grid.clone())?,
            grid,
            interest,
            sojourn: Vec::new(),
            refined: OnceLock::new(),
            h: numerics.h,
        };
        let j = model.num_states();
        let n = payments.len();
        let mut sojourn = vec![vec![vec![0.0]; n]; j];
        for (a, b) in sim.grid.cells() {
            for (i, per_state) in sojourn.iter_mut().enumerate() {
                for (l, cum) in per_state.iter_mut().enumerate() {
                    let last = *cum.last().unwrap();
                    cum.push(last + sim.partial_sojourn(i, l, a, b)?);
                }
            }
        }
        sim.sojourn = sojourn;
        Ok(sim)
    }

    fn start(&self) -> f64 {
        self.grid.start()
    }

    fn end(&self) -> f64 {
        self.grid.end()
    }

    fn discount(&self, x: f64) -> Result<f64> {
        let g = self.grid.cell_of(x);
        let a = self.grid.nodes()[g];
        let mut integral = self.interest[g];
        if x > a {
            integral += simpson(self.model.interest(), a, x)?;
        }
        Ok((-integral).exp())
    }

    /// Present value of the sojourn payments of contract `l` in state `i` on
    /// `[a, b]`, which must lie inside a single grid cell (trapezoid rule).
    fn partial_sojourn(&self, i: usize, l: usize, a: f64, b: f64) -> Result<f64> {
        let f = self.payments.contracts()[l].sojourn(i);
        if f.is_zero() || b <= a {
            return Ok(0.0);
        }
        let fa = self.discount(a)? * f.eval_side(a, Side::Above)?;
        let fb = self.discount(b)? * f.eval_side(b, Side::Below)?;
        Ok(0.5 * (b - a) * (fa + fb))
    }

    /// Present value of the sojourn payments in state `i` from `s` to `x`.
    fn sojourn_to(&self, i: usize, l: usize, x: f64) -> Result<f64> {
        let g = self.grid.cell_of(x);
        let node = self.grid.nodes()[g];
        Ok(self.sojourn[i][l][g] + self.partial_sojourn(i, l, node, x)?)
    }

    fn refined(&self) -> Result<&BoundTable> {
        self.refined
            .get_or_init(|| {
                let mut forced = self.model.breakpoints();
                forced.extend(self.payments.breakpoints());
                Grid::new(self.start(), self.end(), self.h / REFINEMENT, &forced)
                    .and_then(|grid| BoundTable::new(self.model, grid))
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Validation(e.clone()))
    }

    /// Simulates path `index` of the stream seeded with `seed`, starting in
    /// `initial`.
    pub fn path(&self, initial: usize, seed: u64, index: u64) -> Result<SamplePath> {
        if initial >= self.model.num_states() {
            return Err(Error::invalid(format!(
                "initial state {initial} outside 0..{}",
                self.model.num_states()
            )));
        }
        match self.path_with(&self.bounds, initial, seed, index)? {
            Ok(path) => Ok(path),
            Err(_) => match self.path_with(self.refined()?, initial, seed, index)? {
                Ok(path) => Ok(path),
                Err((t, state)) => Err(Error::BoundExceeded { t, state }),
            },
        }
    }

    /// The inner result is `Err((t, state))` when the bound was exceeded.
    fn path_with(
        &self,
        bounds: &BoundTable,
        initial: usize,
        seed: u64,
        index: u64,
    ) -> Result<std::result::Result<SamplePath, (f64, usize)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let n = self.payments.len();
        let j = self.model.num_states();
        let mut state = initial;
        let mut entered = self.start();
        let mut clock = self.start();
        let mut jumps = Vec::new();
        let mut pv = vec![0.0; n];
        let mut weights = vec![0.0; j];
        loop {
            let e = -(1.0 - rng.random::<f64>()).ln();
            let level = bounds.hazard(state, clock) + e;
            let Some((tau, g)) = bounds.invert(state, level) else {
                break;
            };
            clock = tau;
            if tau >= self.end() {
                break;
            }
            let exit = self.model.exit_rate(state, tau, Side::Exact)?;
            let bound = bounds.rate[state][g];
            if exit > bound {
                return Ok(Err((tau, state)));
            }
            if rng.random::<f64>() * bound >= exit {
                continue;
            }
            let mut total = 0.0;
            for (dest, w) in weights.iter_mut().enumerate() {
                *w = match self.model.intensity(state, dest) {
                    Some(f) if dest != state => f.eval(tau)?,
                    _ => 0.0,
                };
                total += *w;
            }
            let mut u = rng.random::<f64>() * total;
            let mut dest = state;
            for (d, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    dest = d;
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            let v = self.discount(tau)?;
            for (l, c) in self.payments.contracts().iter().enumerate() {
                pv[l] += self.sojourn_to(state, l, tau)? - self.sojourn_to(state, l, entered)?;
                let lump = c.transition(state, dest);
                if !lump.is_zero() {
                    pv[l] += v * lump.eval(tau)?;
                }
            }
            jumps.push((tau, dest));
            state = dest;
            entered = tau;
        }
        for (l, value) in pv.iter_mut().enumerate() {
            *value +=
                self.sojourn_to(state, l, self.end())? - self.sojourn_to(state, l, entered)?;
        }
        Ok(Ok(SamplePath {
            jumps,
            final_state: state,
            present_values: pv,
        }))
    }

    /// Simulates paths `0..paths` in parallel.
    pub fn run(&self, initial: usize, paths: u64, seed: u64) -> Result<Samples> {
        if paths == 0 {
            return Err(Error::invalid("number of paths must be positive"));
        }
        let results: Vec<Result<SamplePath>> = (0..paths)
            .into_par_iter()
            .map(|i| self.path(initial, seed, i))
            .collect();
        let n = self.payments.len();
        let mut values = Vec::with_capacity(paths as usize * n);
        let mut final_states = Vec::with_capacity(paths as usize);
        for r in results {
            let p = r?;
            values.extend_from_slice(&p.present_values);
            final_states.push(p.final_state);
        }
        Ok(Samples {
            num_contracts: n,
            num_states: self.model.num_states(),
            values,
            final_states,
        })
    }
}

/// An estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Simulated present values, in path order.
#[derive(Debug, Clone)]
pub struct Samples {
    num_contracts: usize,
    num_states: usize,
    values: Vec<f64>,
    final_states: Vec<usize>,
}

fn estimate(xs: impl Iterator<Item = f64> + Clone, n: usize) -> Estimate {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
    Estimate {
        value: mean,
        std_error: (var / nf).sqrt(),
    }
}

impl Samples {
    pub fn len(&self) -> usize {
        self.final_states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.final_states.is_empty()
    }

    pub fn num_contracts(&self) -> usize {
        self.num_contracts
    }

    /// Present values of path `p`.
    pub fn path(&self, p: usize) -> &[f64] {
        &self.values[p * self.num_contracts..(p + 1) * self.num_contracts]
    }

    pub fn final_states(&self) -> &[usize] {
        &self.final_states
    }

    fn column(&self, l: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.values
            .iter()
            .skip(l)
            .step_by(self.num_contracts)
            .copied()
    }

    pub fn mean(&self, l: usize) -> Estimate {
        estimate(self.column(l), self.len())
    }

    pub fn means(&self) -> DVector<f64> {
        DVector::from_fn(self.num_contracts, |l, _| self.mean(l).value)
    }

    /// Sample covariance of contracts `a` and `b`. The standard error is that
    /// of the mean of `(x - x_bar)(y - y_bar)`.
    pub fn covariance(&self, a: usize, b: usize) -> Estimate {
        let ma = self.mean(a).value;
        let mb = self.mean(b).value;
        let n = self.len();
        let prods = self
            .column(a)
            .zip(self.column(b))
            .map(move |(x, y)| (x - ma) * (y - mb));
        let e = estimate(prods, n);
        Estimate {
            value: e.value * n as f64 / (n as f64 - 1.0).max(1.0),
            std_error: e.std_error,
        }
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.num_contracts;
        let mut c = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = self.covariance(a, b).value;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        c
    }

    /// `E[prod_l U_l^{y_l}]`.
    pub fn raw_moment(&self, y: &MultiIndex) -> Result<Estimate> {
        if y.len() != self.num_contracts {
            return Err(Error::invalid(format!(
                "multi-index {y} has {} entries, expected {}",
                y.len(),
                self.num_contracts
            )));
        }
        let prods = (0..self.len()).map(|p| {
            self.path(p)
                .iter()
                .zip(y.iter())
                .map(|(x, &e)| x.powi(e as i32))
                .product::<f64>()
        });
        Ok(estimate(prods, self.len()))
    }

    /// Fraction of paths in each state at the end of the interval.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.num_states];
        for &s in &self.final_states {
            counts[s] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / self.len() as f64)
            .collect()
    }
}

/// Standard error of an empirical frequency for a known probability `p`.
pub fn frequency_std_error(p: f64, paths: usize) -> f64 {
    (p * (1.0 - p) / paths as f64).sqrt()
}
