//! Multivariate payment process and the reward matrices built from it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::{validation_points, ModelSpec};
use crate::moments::MultiIndex;
use crate::timefun::{Side, TimeFunction};

/// Payment functions of a single contract.
#[derive(Debug, Clone)]
pub struct Contract {
    pub name: String,
    /// `b_i(t)` per state; length `J`.
    sojourn: Vec<TimeFunction>,
    /// `b_ij(t)`; `J x J` with a zero diagonal.
    transition: Vec<Vec<TimeFunction>>,
}

impl Contract {
    pub fn new(
        name: impl Into<String>,
        num_states: usize,
        sojourn: Vec<(usize, TimeFunction)>,
        transition: Vec<((usize, usize), TimeFunction)>,
    ) -> Result<Self> {
        let name = name.into();
        let mut rates = vec![TimeFunction::zero(); num_states];
        for (i, f) in sojourn {
            if i >= num_states {
                return Err(Error::Validation(format!(
                    "contract `{name}`: sojourn payment in state {i} outside 0..{num_states}"
                )));
            }
            rates[i] = f;
        }
        let mut lumps = vec![vec![TimeFunction::zero(); num_states]; num_states];
        for ((i, j), f) in transition {
            if i >= num_states || j >= num_states {
                return Err(Error::Validation(format!(
                    "contract `{name}`: transition payment {i}->{j} outside 0..{num_states}"
                )));
            }
            if i == j {
                return Err(Error::Validation(format!(
                    "contract `{name}`: transition payment {i}->{j} is on the diagonal"
                )));
            }
            lumps[i][j] = f;
        }
        Ok(Contract {
            name,
            sojourn: rates,
            transition: lumps,
        })
    }

    pub fn sojourn(&self, i: usize) -> &TimeFunction {
        &self.sojourn[i]
    }

    pub fn transition(&self, i: usize, j: usize) -> &TimeFunction {
        &self.transition[i][j]
    }

    fn functions(&self) -> impl Iterator<Item = &TimeFunction> {
        self.sojourn.iter().chain(self.transition.iter().flatten())
    }
}

/// The `n` contracts held by one insured, all driven by the same state
/// process.
#[derive(Debug, Clone)]
pub struct PaymentSet {
    num_states: usize,
    contracts: Vec<Contract>,
}

/// Upper bound on the magnitude of a payment function accepted by validation.
const PAYMENT_BOUND: f64 = 1e12;

impl PaymentSet {
    pub fn new(model: &ModelSpec, contracts: Vec<Contract>) -> Result<Self> {
        if contracts.is_empty() {
            return Err(Error::Validation(
                "at least one contract is required".into(),
            ));
        }
        let j = model.num_states();
        for c in &contracts {
            if c.sojourn.len() != j {
                return Err(Error::Validation(format!(
                    "contract `{}` was built for {} states, model has {j}",
                    c.name,
                    c.sojourn.len()
                )));
            }
            for f in c.functions() {
                for (t, side) in validation_points(f, model.horizon()) {
                    let v = f.eval_side(t, side)?;
                    if v.abs() > PAYMENT_BOUND {
                        return Err(Error::Validation(format!(
                            "contract `{}`: payment {f} is unbounded near t = {t} ({v})",
                            c.name
                        )));
                    }
                }
            }
        }
        Ok(PaymentSet {
            num_states: j,
            contracts,
        })
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn names(&self) -> Vec<&str> {
        self.contracts.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .contracts
            .iter()
            .flat_map(|c| c.functions())
            .flat_map(|f| f.breakpoints().iter().copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn contract(&self, l: usize) -> Result<&Contract> {
        self.contracts.get(l).ok_or_else(|| {
            Error::invalid(format!("contract {l} outside 0..{}", self.contracts.len()))
        })
    }

    /// `b^l(t)`, the sojourn payment rates of contract `l` per state.
    pub fn sojourn_vector(&self, l: usize, t: f64, side: Side) -> Result<DVector<f64>> {
        let c = self.contract(l)?;
        let mut v = DVector::zeros(self.num_states);
        for (i, f) in c.sojourn.iter().enumerate() {
            if !f.is_zero() {
                v[i] = f.eval_side(t, side)?;
            }
        }
        Ok(v)
    }

    /// `B_l(t)`, the transition payments of contract `l`.
    pub fn transition_payment_matrix(&self, l: usize, t: f64, side: Side) -> Result<DMatrix<f64>> {
        let c = self.contract(l)?;
        let j = self.num_states;
        let mut m = DMatrix::zeros(j, j);
        for a in 0..j {
            for b in 0..j {
                let f = &c.transition[a][b];
                if a != b && !f.is_zero() {
                    m[(a, b)] = f.eval_side(t, side)?;
                }
            }
        }
        Ok(m)
    }
}

/// All inputs of the moment equations sampled at one time point.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    /// Interest rate `r(t)`.
    pub rate: f64,
    /// Intensity matrix `M(t)`.
    pub intensity: DMatrix<f64>,
    /// `b^l(t)` per contract.
    pub sojourn: Vec<DVector<f64>>,
    /// `B_l(t)` per contract.
    pub transition: Vec<DMatrix<f64>>,
}

impl Snapshot {
    pub fn take(model: &ModelSpec, payments: &PaymentSet, t: f64, side: Side) -> Result<Self> {
        let n = payments.len();
        Ok(Snapshot {
            t,
            rate: model.rate(t, side)?,
            intensity: model.intensity_matrix(t, side)?,
            sojourn: (0..n)
                .map(|l| payments.sojourn_vector(l, t, side))
                .collect::<Result<_>>()?,
            transition: (0..n)
                .map(|l| payments.transition_payment_matrix(l, t, side))
                .collect::<Result<_>>()?,
        })
    }

    pub fn num_states(&self) -> usize {
        self.intensity.nrows()
    }

    /// `R_l = M . B_l + diag(b^l)`.
    pub fn reward(&self, l: usize) -> DMatrix<f64> {
        let mut r = self.intensity.component_mul(&self.transition[l]);
        for i in 0..self.num_states() {
            r[(i, i)] = self.sojourn[l][i];
        }
        r
    }

    /// `C^(y) = M . B_1^{.y_1} . ... . B_n^{.y_n}` with `0^0 = 1`.
    pub fn cross(&self, y: &MultiIndex) -> DMatrix<f64> {
        let mut c = self.intensity.clone();
        for (&p, bm) in y.iter().zip(&self.transition) {
            if p > 0 {
                for (cv, &bv) in c.iter_mut().zip(bm.iter()) {
                    *cv *= bv.powi(p as i32);
                }
            }
        }
        c
    }
}

/// `R_l(t)`.
pub fn reward_matrix_r(
    model: &ModelSpec,
    payments: &PaymentSet,
    l: usize,
    t: f64,
) -> Result<DMatrix<f64>> {
    payments.contract(l)?;
    Ok(Snapshot::take(model, payments, t, Side::Exact)?.reward(l))
}

/// `C^(y)(t)`; `y` must be neither zero nor a unit vector.
pub fn reward_matrix_c(
    model: &ModelSpec,
    payments: &PaymentSet,
    y: &MultiIndex,
    t: f64,
) -> Result<DMatrix<f64>> {
    if y.len() != payments.len() {
        return Err(Error::invalid(format!(
            "multi-index {y} has {} entries, expected {}",
            y.len(),
            payments.len()
        )));
    }
    if y.is_zero() || y.unit_index().is_some() {
        return Err(Error::invalid(format!(
            "C^(y) is defined only for y outside E_n and 0, got {y}"
        )));
    }
    Ok(Snapshot::take(model, payments, t, Side::Exact)?.cross(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelSpec {
        ModelSpec::new(
            vec!["a".into(), "b".into(), "c".into()],
            TimeFunction::constant(0.02),
            vec![
                ((0, 1), TimeFunction::constant(0.1)),
                ((0, 2), TimeFunction::constant(0.2)),
                ((1, 2), TimeFunction::constant(0.3)),
            ],
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn empty_contract_is_all_zero() {
        let m = model();
        let p =
            PaymentSet::new(&m, vec![Contract::new("none", 3, vec![], vec![]).unwrap()]).unwrap();
        assert_eq!(
            p.sojourn_vector(0, 1.0, Side::Exact).unwrap(),
            DVector::zeros(3)
        );
        assert_eq!(
            p.transition_payment_matrix(0, 1.0, Side::Exact).unwrap(),
            DMatrix::zeros(3, 3)
        );
        assert_eq!(
            reward_matrix_r(&m, &p, 0, 1.0).unwrap(),
            DMatrix::zeros(3, 3)
        );
    }

    #[test]
    fn hadamard_powers_and_zero_power_convention() {
        let m = model();
        let p = PaymentSet::new(
            &m,
            vec![
                Contract::new(
                    "lump",
                    3,
                    vec![],
                    vec![((0, 2), TimeFunction::constant(3.0))],
                )
                .unwrap(),
                Contract::new("rate", 3, vec![(0, TimeFunction::constant(1.0))], vec![]).unwrap(),
            ],
        )
        .unwrap();
        let c = reward_matrix_c(&m, &p, &MultiIndex::new(vec![2, 0]), 1.0).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 2)] = 0.2 * 9.0;
        assert_eq!(c, expected);
        // Disjoint supports.
        let c11 = reward_matrix_c(&m, &p, &MultiIndex::new(vec![1, 1]), 1.0).unwrap();
        assert_eq!(c11, DMatrix::zeros(3, 3));
        assert!(reward_matrix_c(&m, &p, &MultiIndex::new(vec![1, 0]), 1.0).is_err());
        assert!(reward_matrix_c(&m, &p, &MultiIndex::new(vec![0, 0]), 1.0).is_err());
    }

    #[test]
    fn reward_matrix_layout() {
        let m = model();
        let p = PaymentSet::new(
            &m,
            vec![Contract::new(
                "mixed",
                3,
                vec![(1, TimeFunction::constant(0.5))],
                vec![((1, 2), TimeFunction::constant(2.0))],
            )
            .unwrap()],
        )
        .unwrap();
        let r = reward_matrix_r(&m, &p, 0, 1.0).unwrap();
        assert_eq!(r[(1, 1)], 0.5);
        assert!((r[(1, 2)] - 0.6).abs() < 1e-15);
        assert_eq!(r[(0, 0)], 0.0);
        assert_eq!(r[(0, 2)], 0.0);
    }

    #[test]
    fn out_of_range_references_rejected() {
        assert!(Contract::new("x", 3, vec![(5, TimeFunction::zero())], vec![]).is_err());
        assert!(Contract::new("x", 3, vec![], vec![((1, 1), TimeFunction::zero())]).is_err());
    }
}
