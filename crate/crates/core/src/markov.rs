//! State process: intensity matrices, product integration and transition
//! probabilities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::timefun::{Side, TimeFunction};

/// Per-cell factor used when approximating a product integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// `I + A(x_mid) dx`.
    Euler,
    /// Truncated Taylor series (eight terms) of `exp(A(x_mid) dx)`.
    #[default]
    MidpointExp,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "midpoint-exp" => Ok(Scheme::MidpointExp),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Discretisation settings shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub h: f64,
    pub scheme: Scheme,
    /// Largest admissible dimension `(|k|+1) J` of a stacked moment system.
    pub block_cap: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            h: 1.0 / 256.0,
            scheme: Scheme::MidpointExp,
            block_cap: 512,
        }
    }
}

impl Numerics {
    pub fn with_step(h: f64) -> Self {
        Numerics {
            h,
            ..Numerics::default()
        }
    }
}

/// A finite-state, time-inhomogeneous Markov jump model with deterministic
/// interest.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    states: Vec<String>,
    /// `J x J`, `None` off the support and on the diagonal.
    intensities: Vec<Vec<Option<TimeFunction>>>,
    interest: TimeFunction,
    horizon: f64,
}

/// Spacing of the scan used to validate input functions.
pub(crate) const VALIDATION_STEP: f64 = 1.0 / 64.0;

/// Sample points for validating a function on `[0, horizon]`: a regular scan
/// plus both one-sided limits at every breakpoint.
pub(crate) fn validation_points(f: &TimeFunction, horizon: f64) -> Vec<(f64, Side)> {
    let n = (horizon / VALIDATION_STEP).ceil() as usize;
    let mut pts: Vec<(f64, Side)> = (0..=n)
        .map(|i| ((i as f64 * VALIDATION_STEP).min(horizon), Side::Exact))
        .collect();
    for &b in f.breakpoints() {
        if (0.0..=horizon).contains(&b) {
            pts.push((b, Side::Below));
            pts.push((b, Side::Above));
        }
    }
    pts
}

impl ModelSpec {
    /// Builds and validates a model. `intensities` lists `((i, j), mu_ij)`
    /// for the transitions with nonzero intensity.
    pub fn new(
        states: Vec<String>,
        interest: TimeFunction,
        intensities: Vec<((usize, usize), TimeFunction)>,
        horizon: f64,
    ) -> Result<Self> {
        let j = states.len();
        if j == 0 {
            return Err(Error::Validation("model needs at least one state".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Validation(format!("invalid horizon {horizon}")));
        }
        let mut table = vec![vec![None; j]; j];
        for ((a, b), f) in intensities {
            if a >= j || b >= j {
                return Err(Error::Validation(format!(
                    "intensity {a}->{b} references a state outside 0..{j}"
                )));
            }
            if a == b {
                return Err(Error::Validation(format!(
                    "intensity {a}->{b} is on the diagonal"
                )));
            }
            if table[a][b].is_some() {
                return Err(Error::Validation(format!("intensity {a}->{b} given twice")));
            }
            table[a][b] = Some(f);
        }
        let model = ModelSpec {
            states,
            intensities: table,
            interest,
            horizon,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        for (a, row) in self.intensities.iter().enumerate() {
            for (b, f) in row.iter().enumerate() {
                let Some(f) = f else { continue };
                for (t, side) in validation_points(f, self.horizon) {
                    let v = f.eval_side(t, side)?;
                    if v < 0.0 {
                        return Err(Error::Validation(format!(
                            "negative intensity mu_{a}{b}({t}) = {v}"
                        )));
                    }
                }
            }
        }
        for (t, side) in validation_points(&self.interest, self.horizon) {
            self.interest.eval_side(t, side)?;
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn interest(&self) -> &TimeFunction {
        &self.interest
    }

    pub fn intensity(&self, i: usize, j: usize) -> Option<&TimeFunction> {
        self.intensities.get(i)?.get(j)?.as_ref()
    }

    pub fn rate(&self, t: f64, side: Side) -> Result<f64> {
        Ok(self.interest.eval_side(t, side)?)
    }

    /// Every breakpoint of the intensities and the interest rate.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.interest.breakpoints().to_vec();
        for f in self.intensities.iter().flatten().flatten() {
            out.extend_from_slice(f.breakpoints());
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// `M(t)`: off-diagonal intensities, diagonal minus the row sums.
    pub fn intensity_matrix(&self, t: f64, side: Side) -> Result<DMatrix<f64>> {
        let j = self.num_states();
        let mut m = DMatrix::zeros(j, j);
        for a in 0..j {
            let mut total = 0.0;
            for b in 0..j {
                if let Some(f) = &self.intensities[a][b] {
                    let v = f.eval_side(t, side)?;
                    if v < 0.0 {
                        return Err(Error::Validation(format!(
                            "negative intensity mu_{a}{b}({t}) = {v}"
                        )));
                    }
                    m[(a, b)] = v;
                    total += v;
                }
            }
            m[(a, a)] = -total;
        }
        Ok(m)
    }

    /// Total exit intensity out of `state` at `t`.
    pub fn exit_rate(&self, state: usize, t: f64, side: Side) -> Result<f64> {
        let mut total = 0.0;
        for f in self.intensities[state].iter().flatten() {
            total += f.eval_side(t, side)?;
        }
        Ok(total)
    }

    /// `int_s^t r(x) dx`, by Simpson's rule on a breakpoint-aligned grid.
    pub fn integrated_interest(&self, s: f64, t: f64, h: f64) -> Result<f64> {
        let grid = Grid::new(s, t, h, self.interest.breakpoints())?;
        Ok(*cumulative_integral(&self.interest, &grid)?.last().unwrap())
    }
}

/// Cumulative Simpson integral of `f` along the grid nodes, using one-sided
/// values at cell ends so that breakpoints on nodes are handled exactly.
pub(crate) fn cumulative_integral(f: &TimeFunction, grid: &Grid) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(acc);
    for (a, b) in grid.cells() {
        acc += simpson(f, a, b)?;
        out.push(acc);
    }
    Ok(out)
}

/// Simpson's rule on `[a, b]`, assuming `f` continuous on `(a, b)`.
pub(crate) fn simpson(f: &TimeFunction, a: f64, b: f64) -> Result<f64> {
    let fa = f.eval_side(a, Side::Above)?;
    let fm = f.eval_side(0.5 * (a + b), Side::Exact)?;
    let fb = f.eval_side(b, Side::Below)?;
    Ok((b - a) * (fa + 4.0 * fm + fb) / 6.0)
}

/// A matrix-valued function of time with known discontinuities.
pub trait MatrixFunction {
    fn dim(&self) -> usize;

    fn eval(&self, x: f64, side: Side) -> Result<DMatrix<f64>>;

    /// Points in `(s, t)` where the function may be discontinuous.
    fn breakpoints(&self, s: f64, t: f64) -> Vec<f64>;
}

/// Adapts a closure into a [`MatrixFunction`].
pub struct FnMatrix<F> {
    dim: usize,
    f: F,
    breakpoints: Vec<f64>,
}

impl<F> FnMatrix<F>
where
    F: Fn(f64, Side) -> Result<DMatrix<f64>>,
{
    pub fn new(dim: usize, breakpoints: Vec<f64>, f: F) -> Self {
        FnMatrix {
            dim,
            f,
            breakpoints,
        }
    }
}

impl<F> MatrixFunction for FnMatrix<F>
where
    F: Fn(f64, Side) -> Result<DMatrix<f64>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: f64, side: Side) -> Result<DMatrix<f64>> {
        (self.f)(x, side)
    }

    fn breakpoints(&self, s: f64, t: f64) -> Vec<f64> {
        self.breakpoints
            .iter()
            .copied()
            .filter(|&b| b > s && b < t)
            .collect()
    }
}

impl MatrixFunction for ModelSpec {
    fn dim(&self) -> usize {
        self.num_states()
    }

    fn eval(&self, x: f64, side: Side) -> Result<DMatrix<f64>> {
        self.intensity_matrix(x, side)
    }

    fn breakpoints(&self, s: f64, t: f64) -> Vec<f64> {
        ModelSpec::breakpoints(self)
            .into_iter()
            .filter(|&b| b > s && b < t)
            .collect()
    }
}

/// Terms of the truncated exponential series in one cell factor.
pub(crate) const TAYLOR_TERMS: usize = 8;

/// Factor of a single cell, given the generator sampled at its midpoint.
pub fn cell_factor(a: &DMatrix<f64>, dt: f64, scheme: Scheme) -> DMatrix<f64> {
    let n = a.nrows();
    let x = a * dt;
    match scheme {
        Scheme::Euler => DMatrix::identity(n, n) + x,
        Scheme::MidpointExp => {
            let mut sum = DMatrix::identity(n, n);
            let mut term = DMatrix::identity(n, n);
            for k in 1..TAYLOR_TERMS {
                term = (&term * &x) / k as f64;
                sum += &term;
            }
            sum
        }
    }
}

fn check_finite(m: &DMatrix<f64>, s: f64, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            s,
            context: what.to_string(),
        })
    }
}

/// Approximates `prod_s^t (I + A(x) dx)` on a breakpoint-aligned grid with
/// step at most `h`.
pub fn product_integral<A: MatrixFunction + ?Sized>(
    a: &A,
    s: f64,
    t: f64,
    scheme: Scheme,
    h: f64,
) -> Result<DMatrix<f64>> {
    let grid = Grid::new(s, t, h, &a.breakpoints(s, t))?;
    product_integral_on(a, &grid, scheme)
}

/// Product integral over an explicit grid, accumulated left to right.
pub fn product_integral_on<A: MatrixFunction + ?Sized>(
    a: &A,
    grid: &Grid,
    scheme: Scheme,
) -> Result<DMatrix<f64>> {
    let n = a.dim();
    let mut acc = DMatrix::identity(n, n);
    for (x0, x1) in grid.cells() {
        let mid = 0.5 * (x0 + x1);
        let gen = a.eval(mid, Side::Exact)?;
        acc = &acc * cell_factor(&gen, x1 - x0, scheme);
        check_finite(&acc, x0, "product integral")?;
    }
    Ok(acc)
}

/// `prod_{x_g}^t (I + A dx)` for every node `x_g` of the grid, obtained by a
/// single sweep from the right end. Entry `g` belongs to node `g`.
pub fn backward_product_sweep<A: MatrixFunction + ?Sized>(
    a: &A,
    grid: &Grid,
    scheme: Scheme,
) -> Result<Vec<DMatrix<f64>>> {
    let n = a.dim();
    let mut out = vec![DMatrix::identity(n, n)];
    for (x0, x1) in grid.cells().rev() {
        let gen = a.eval(0.5 * (x0 + x1), Side::Exact)?;
        let next = cell_factor(&gen, x1 - x0, scheme) * out.last().unwrap();
        check_finite(&next, x0, "product integral")?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

fn clamp_probabilities(mut p: DMatrix<f64>) -> DMatrix<f64> {
    p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    p
}

fn check_stochastic(p: &DMatrix<f64>, s: f64) -> Result<()> {
    for (i, row) in p.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || row.iter().any(|&v| !(-1e-10..=1.0 + 1e-10).contains(&v)) {
            return Err(Error::NonFinite {
                s,
                context: format!("transition probability row {i} is not stochastic (sum {sum})"),
            });
        }
    }
    Ok(())
}

/// `P(s, t)`.
pub fn transition_probabilities(
    model: &ModelSpec,
    s: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<DMatrix<f64>> {
    if s < 0.0 || t > model.horizon() + 1e-12 {
        return Err(Error::invalid(format!(
            "[{s}, {t}] is outside the model horizon [0, {}]",
            model.horizon()
        )));
    }
    let p = product_integral(model, s, t, numerics.scheme, numerics.h)?;
    check_stochastic(&p, s)?;
    Ok(clamp_probabilities(p))
}

/// `P(x_g, t)` for every node of a breakpoint-aligned grid on `[s, t]`.
pub fn transition_probability_curves(
    model: &ModelSpec,
    s: f64,
    t: f64,
    numerics: &Numerics,
) -> Result<(Grid, Vec<DMatrix<f64>>)> {
    let grid = Grid::new(s, t, numerics.h, &model.breakpoints())?;
    let ps = backward_product_sweep(model, &grid, numerics.scheme)?;
    let mut out = Vec::with_capacity(ps.len());
    for (p, &x) in ps.into_iter().zip(grid.nodes()) {
        check_stochastic(&p, x)?;
        out.push(clamp_probabilities(p));
    }
    Ok((grid, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(mu: f64) -> ModelSpec {
        ModelSpec::new(
            vec!["alive".into(), "dead".into()],
            TimeFunction::zero(),
            vec![((0, 1), TimeFunction::constant(mu))],
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn rows_of_generator_sum_to_zero() {
        let m = two_state(0.3).intensity_matrix(1.0, Side::Exact).unwrap();
        assert_eq!(m[(0, 0)], -0.3);
        assert_eq!(m.row(0).sum(), 0.0);
        assert_eq!(m.row(1).sum(), 0.0);
        assert_eq!(m.row(1).amax(), 0.0);
    }

    #[test]
    fn negative_intensity_rejected() {
        let err = ModelSpec::new(
            vec!["a".into(), "b".into()],
            TimeFunction::zero(),
            vec![((0, 1), TimeFunction::parse("0.1 - 0.01*t").unwrap())],
            20.0,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("mu_01")),
            "{err}"
        );
    }

    #[test]
    fn bad_state_reference_rejected() {
        let err = ModelSpec::new(
            vec!["a".into(), "b".into()],
            TimeFunction::zero(),
            vec![((0, 5), TimeFunction::constant(0.1))],
            20.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn zero_generator_gives_identity() {
        let zero = FnMatrix::new(3, vec![], |_, _| Ok(DMatrix::zeros(3, 3)));
        let p = product_integral(&zero, 0.0, 5.0, Scheme::MidpointExp, 0.1).unwrap();
        assert_eq!(p, DMatrix::identity(3, 3));
    }

    #[test]
    fn two_state_survival_matches_exponential() {
        let model = two_state(0.05);
        let p = transition_probabilities(&model, 3.0, 23.0, &Numerics::default()).unwrap();
        let exact = (-0.05f64 * 20.0).exp();
        assert!((p[(0, 0)] / exact - 1.0).abs() < 1e-8);
        assert!((p[(0, 1)] - (1.0 - exact)).abs() < 1e-8);
    }

    #[test]
    fn empty_interval_is_identity() {
        let model = two_state(0.05);
        let p = transition_probabilities(&model, 7.0, 7.0, &Numerics::default()).unwrap();
        assert_eq!(p, DMatrix::identity(2, 2));
    }

    #[test]
    fn reversed_interval_is_an_error() {
        let model = two_state(0.05);
        assert!(product_integral(&model, 2.0, 1.0, Scheme::Euler, 0.1).is_err());
    }

    #[test]
    fn integrated_constant_interest() {
        let model = ModelSpec::new(
            vec!["a".into()],
            TimeFunction::parse("0.01 + 0.02*ind(t >= 10)").unwrap(),
            vec![],
            70.0,
        )
        .unwrap();
        let v = model.integrated_interest(0.0, 70.0, 1.0 / 256.0).unwrap();
        assert!((v - (0.01 * 70.0 + 0.02 * 60.0)).abs() < 1e-12);
    }
}
