#![allow(clippy::excessive_precision)]

use msmoments::config::disability_model;
use msmoments::moments::{
    binomial, block_generator, block_partial_moments, check_lex_closure, clt_margins,
    conditional_moments, conditional_moments_direct, covariance_hattendorff, lex_enumerate, mgf,
    mgf_pde_residual, partial_moments,
};
use msmoments::nalgebra::DMatrix;
use msmoments::payments::{reward_matrix_c, reward_matrix_r};
use msmoments::{
    parse_timefun, transition_probabilities, Contract, Error, ModelSpec, MultiIndex, Numerics,
    PaymentSet, Side,
};
use proptest::prelude::*;

fn f(src: &str) -> msmoments::TimeFunction {
    parse_timefun(src).unwrap()
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(f64::MIN_POSITIVE)
}

/// Alive/dead with constant mortality `mu`, constant interest `r`, and a
/// death benefit of `benefit` as contracts listed in `names`.
fn death_benefit_model(mu: f64, r: f64, benefit: f64, names: &[&str]) -> (ModelSpec, PaymentSet) {
    let model = ModelSpec::new(
        vec!["alive".into(), "dead".into()],
        f(&format!("{r}")),
        vec![((0, 1), f(&format!("{mu}")))],
        60.0,
    )
    .unwrap();
    let contracts = names
        .iter()
        .map(|name| {
            Contract::new(*name, 2, vec![], vec![((0, 1), f(&format!("{benefit}")))]).unwrap()
        })
        .collect();
    let payments = PaymentSet::new(&model, contracts).unwrap();
    (model, payments)
}

/// `E[(S exp(-r tau))^k 1{tau <= L}]` for `tau ~ Exp(mu)`.
fn death_benefit_moment(mu: f64, r: f64, benefit: f64, len: f64, k: i32) -> f64 {
    let a = mu + k as f64 * r;
    benefit.powi(k) * mu / a * (1.0 - (-a * len).exp())
}

#[test]
fn death_benefit_moments_match_closed_form() {
    let (mu, r, benefit) = (0.04, 0.03, 2.5);
    let (model, payments) = death_benefit_model(mu, r, benefit, &["death"]);
    let num = Numerics::default();
    let k = MultiIndex::new(vec![4]);
    let ode = partial_moments(&model, &payments, &k, 0.0, 40.0, &num).unwrap();
    let block = block_partial_moments(&model, &payments, &k, 0.0, 40.0, &num).unwrap();
    for order in 1..=4u32 {
        let y = MultiIndex::new(vec![order]);
        let want = death_benefit_moment(mu, r, benefit, 40.0, order as i32);
        let from_ode = ode.moment(&y, 0, 0).unwrap();
        let from_block = block.moment(&y, 0, 0).unwrap();
        assert!(
            close(from_ode, want, 1e-8),
            "ode order {order}: {from_ode} vs {want}"
        );
        assert!(
            close(from_block, want, 1e-6),
            "block order {order}: {from_block} vs {want}"
        );
        assert_eq!(ode.partial(&y, 0).unwrap()[(0, 0)], 0.0);
    }
    let cov = covariance_hattendorff(&model, &payments, 0.0, 40.0, &num).unwrap();
    let m1 = death_benefit_moment(mu, r, benefit, 40.0, 1);
    let m2 = death_benefit_moment(mu, r, benefit, 40.0, 2);
    assert!(close(
        cov.covariance_matrix(0, 0)[(0, 0)],
        m2 - m1 * m1,
        1e-8
    ));
    assert!(close(cov.reserve(0, 0)[0], m1, 1e-8));
}

#[test]
fn deterministic_annuity_has_power_moments() {
    let (r, c, len): (f64, f64, f64) = (0.03, 1.2, 15.0);
    let model = ModelSpec::new(vec!["alive".into()], f(&format!("{r}")), vec![], 30.0).unwrap();
    let annuity = Contract::new("annuity", 1, vec![(0, f(&format!("{c}")))], vec![]).unwrap();
    let payments = PaymentSet::new(&model, vec![annuity]).unwrap();
    let u = c * (1.0 - (-r * len).exp()) / r;
    let k = MultiIndex::new(vec![3]);
    let num = Numerics::default();
    let grid = partial_moments(&model, &payments, &k, 5.0, 5.0 + len, &num).unwrap();
    for p in 1..=3u32 {
        let got = grid.moment(&MultiIndex::new(vec![p]), 0, 0).unwrap();
        assert!(close(got, u.powi(p as i32), 1e-10), "order {p}");
    }
    assert!(
        grid.central_moment(&MultiIndex::new(vec![2]), 0, 0)
            .unwrap()
            .abs()
            <= 1e-10 * u * u
    );
}

#[test]
fn direct_and_row_sum_moments_agree() {
    let m = disability_model(&[]).unwrap();
    let num = Numerics::default();
    let k = MultiIndex::new(vec![1, 1, 1]);
    let direct = conditional_moments_direct(&m.model, &m.payments, &k, 0.0, 70.0, &num).unwrap();
    let summed =
        conditional_moments(&partial_moments(&m.model, &m.payments, &k, 0.0, 70.0, &num).unwrap());
    for g in [0, 1000, 6400, 12000] {
        for y in direct.order() {
            for i in 0..3 {
                let (a, b) = (
                    direct.moment(y, i, g).unwrap(),
                    summed.moment(y, i, g).unwrap(),
                );
                assert!(
                    (a - b).abs() <= 1e-8 * b.abs().max(1e-12),
                    "{y} state {i} node {g}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn duplicate_contract_is_perfectly_correlated() {
    let (model, payments) = death_benefit_model(0.02, 0.01, 1.0, &["a", "b"]);
    let cov = covariance_hattendorff(&model, &payments, 0.0, 50.0, &Numerics::default()).unwrap();
    for g in [0, 100, 5000] {
        let corr = cov.correlation_matrix(0, g);
        assert!((corr.matrix[(0, 1)] - 1.0).abs() <= 1e-9);
        assert!(!corr.degenerate[0]);
    }
    let dead = cov.correlation_matrix(1, 0);
    assert!(dead.degenerate.iter().all(|&d| d));
}

#[test]
fn correlations_are_bounded_and_symmetric() {
    let m = disability_model(&[]).unwrap();
    let cov =
        covariance_hattendorff(&m.model, &m.payments, 0.0, 70.0, &Numerics::default()).unwrap();
    for g in (0..cov.nodes().len()).step_by(997) {
        for i in 0..3 {
            let sigma = cov.covariance_matrix(i, g);
            assert_eq!(sigma, &sigma.transpose());
            assert!((0..3).all(|l| sigma[(l, l)] >= 0.0));
            let rho = cov.correlation_matrix(i, g).matrix;
            assert!(rho.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }
}

#[test]
fn payment_inputs_of_the_disability_model() {
    let m = disability_model(&[]).unwrap();
    let p = &m.payments;
    let sv = |l, t| p.sojourn_vector(l, t, Side::Exact).unwrap();
    assert_eq!(sv(1, 30.0).as_slice(), &[0.1, 0.1, 0.0]);
    assert_eq!(sv(2, 30.0).as_slice(), &[0.0, 0.0, 0.0]);
    assert_eq!(sv(0, 30.0).as_slice(), &[0.0, 0.0, 0.0]);
    let b10 = p.transition_payment_matrix(0, 10.0, Side::Exact).unwrap();
    assert_eq!(
        b10,
        DMatrix::from_row_slice(3, 3, &[0., 0., 1., 0., 0., 1., 0., 0., 0.])
    );
    assert_eq!(
        p.transition_payment_matrix(0, 30.0, Side::Exact).unwrap(),
        DMatrix::zeros(3, 3)
    );

    let r1 = reward_matrix_r(&m.model, p, 0, 10.0).unwrap();
    assert!((r1[(0, 2)] - 0.00652559586074357747).abs() <= 1e-15);
    assert!((r1[(1, 2)] - 0.0130511917214871549).abs() <= 1e-15);
    assert_eq!(r1[(0, 1)], 0.0);
    assert!((0..3).all(|i| r1[(i, i)] == 0.0));
    let r2 = reward_matrix_r(&m.model, p, 1, 30.0).unwrap();
    assert_eq!(r2, DMatrix::from_diagonal(&sv(1, 30.0)));

    let y = MultiIndex::new(vec![1, 1, 0]);
    assert_eq!(
        reward_matrix_c(&m.model, p, &y, 10.0).unwrap(),
        DMatrix::zeros(3, 3)
    );
    let q = m.model.intensity_matrix(10.0, Side::Exact).unwrap();
    let c2 = reward_matrix_c(&m.model, p, &MultiIndex::new(vec![2, 0, 0]), 10.0).unwrap();
    assert_eq!(c2, q.component_mul(&b10).component_mul(&b10));
    assert!(reward_matrix_c(&m.model, p, &MultiIndex::new(vec![0, 1, 0]), 10.0).is_err());
}

#[test]
fn single_contract_block_layout() {
    let (model, payments) = death_benefit_model(0.05, 0.02, 3.0, &["death"]);
    let g = block_generator(&model, &payments, &MultiIndex::new(vec![2]), 1.0).unwrap();
    let q = model.intensity_matrix(1.0, Side::Exact).unwrap();
    let r = reward_matrix_r(&model, &payments, 0, 1.0).unwrap();
    let c2 = reward_matrix_c(&model, &payments, &MultiIndex::new(vec![2]), 1.0).unwrap();
    let block = |i: usize, j: usize| g.view((2 * i, 2 * j), (2, 2)).into_owned();
    let eye = DMatrix::<f64>::identity(2, 2);
    assert_eq!(block(0, 0), &q - &eye * 0.04);
    assert_eq!(block(0, 1), &r * 2.0);
    assert_eq!(block(0, 2), c2);
    assert_eq!(block(1, 1), &q - &eye * 0.02);
    assert_eq!(block(1, 2), r);
    assert_eq!(block(2, 2), q);
    assert_eq!(block(1, 0), DMatrix::zeros(2, 2));
}

#[test]
fn zero_payments_decouple_the_blocks() {
    let model = ModelSpec::new(
        vec!["a".into(), "b".into()],
        f("0.01"),
        vec![((0, 1), f("0.1"))],
        10.0,
    )
    .unwrap();
    let none = Contract::new("none", 2, vec![], vec![]).unwrap();
    let payments = PaymentSet::new(&model, vec![none.clone(), none]).unwrap();
    let g = block_generator(&model, &payments, &MultiIndex::new(vec![1, 1]), 2.0).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                assert_eq!(max_abs(&g.view((2 * i, 2 * j), (2, 2)).into_owned()), 0.0);
            }
        }
    }
}

#[test]
fn lowest_block_is_the_transition_matrix() {
    let m = disability_model(&[]).unwrap();
    let num = Numerics::default();
    let grid = block_partial_moments(
        &m.model,
        &m.payments,
        &MultiIndex::new(vec![1, 0, 1]),
        0.0,
        70.0,
        &num,
    )
    .unwrap();
    let p = transition_probabilities(&m.model, 0.0, 70.0, &num).unwrap();
    assert!(max_abs(&(grid.partial(&MultiIndex::zero(3), 0).unwrap() - p)) <= 1e-8);
}

#[test]
fn order_checks() {
    let m = disability_model(&[]).unwrap();
    let num = Numerics {
        block_cap: 20,
        ..Numerics::default()
    };
    let err = partial_moments(
        &m.model,
        &m.payments,
        &MultiIndex::new(vec![1, 1, 1]),
        0.0,
        70.0,
        &num,
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::CapExceeded { dim: 24, cap: 20 }),
        "{err}"
    );
    let err = block_partial_moments(
        &m.model,
        &m.payments,
        &MultiIndex::new(vec![1, 1]),
        0.0,
        70.0,
        &num,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

#[test]
fn mgf_of_a_death_benefit_without_interest() {
    let (mu, benefit, len) = (0.1, 2.0, 8.0);
    let (model, payments) = death_benefit_model(mu, 0.0, benefit, &["death"]);
    for theta in [-0.5, 0.0, 0.3] {
        let got = mgf(&model, &payments, &[theta], 0.0, len, &Numerics::default()).unwrap();
        let survive = (-mu * len).exp();
        assert!(close(got[(0, 0)], survive, 1e-8));
        assert!(close(
            got[(0, 1)],
            (theta * benefit).exp() * (1.0 - survive),
            1e-8
        ));
        assert_eq!(got[(1, 1)], 1.0);
    }
}

#[test]
fn mgf_of_a_discounted_death_benefit() {
    let (mu, r, benefit, len) = (0.1, 0.04, 1.5, 10.0);
    let (model, payments) = death_benefit_model(mu, r, benefit, &["death"]);
    let theta = 0.4;
    let got = mgf(&model, &payments, &[theta], 0.0, len, &Numerics::default()).unwrap();
    // E[exp(theta S e^{-r tau}) 1{tau <= L}] by composite Simpson on a fine grid.
    let n = 20_000;
    let dx = len / n as f64;
    let g = |x: f64| mu * (-mu * x).exp() * (theta * benefit * (-r * x).exp()).exp();
    let mut want = g(0.0) + g(len);
    for i in 1..n {
        want += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * dx);
    }
    want *= dx / 3.0;
    assert!(close(got[(0, 1)], want, 1e-7), "{} vs {want}", got[(0, 1)]);
}

#[test]
fn mgf_overflow_is_an_error() {
    let (model, payments) = death_benefit_model(0.1, 0.0, 1.0, &["death"]);
    let err = mgf(&model, &payments, &[800.0], 0.0, 5.0, &Numerics::default()).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }), "{err}");
}

#[test]
fn mgf_pde_residual_on_a_constant_model() {
    let (model, payments) = death_benefit_model(0.3, 0.05, 1.0, &["death"]);
    let num = Numerics::with_step(1.0 / 512.0);
    for s in [1.0, 2.5, 4.0] {
        let r = mgf_pde_residual(&model, &payments, &[0.0], s, 5.0, &num)
            .unwrap()
            .unwrap();
        assert!(r <= 1e-6, "residual {r:e} at {s}");
    }
}

#[test]
fn mgf_pde_residual_skips_breakpoints() {
    let m = disability_model(&[]).unwrap();
    let r = mgf_pde_residual(
        &m.model,
        &m.payments,
        &[0.0; 3],
        25.0,
        70.0,
        &Numerics::default(),
    )
    .unwrap();
    assert!(r.is_none());
}

#[test]
fn clt_margins_examples() {
    let eye = DMatrix::<f64>::identity(3, 3);
    let half = clt_margins(&eye, 10, 0.5).unwrap();
    assert!(half.per_contract.iter().all(|&m| m.abs() <= 1e-15));
    let one = clt_margins(&eye, 1, 0.975).unwrap();
    for &m in &one.per_contract {
        assert!((m - 1.959_963_984_540_054_2).abs() <= 1e-9);
    }
    assert!((one.aggregate - 1.959_963_984_540_054_2 * 3f64.sqrt()).abs() <= 1e-9);
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0]);
    let (a, b) = (
        clt_margins(&cov, 100, 0.99).unwrap(),
        clt_margins(&cov, 400, 0.99).unwrap(),
    );
    for (x, y) in a.per_contract.iter().zip(&b.per_contract) {
        assert!((x / y - 2.0).abs() <= 1e-12);
    }
    assert!(clt_margins(&eye, 1, 1.0).is_err());
    assert!(clt_margins(&eye, 0, 0.9).is_err());
}

fn brute_force_order(k: &[u32]) -> Vec<Vec<u32>> {
    let mut all = vec![vec![]];
    for &kl in k {
        all = all
            .into_iter()
            .flat_map(|prefix| {
                (0..=kl).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    all.retain(|y| y.iter().any(|&v| v > 0));
    all.sort();
    all
}

proptest! {
    #[test]
    fn lex_enumeration_is_the_sorted_set_of_dominated_indices(k in prop::collection::vec(0u32..4, 1..5)) {
        let got: Vec<Vec<u32>> = lex_enumerate(&MultiIndex::new(k.clone()))
            .into_iter()
            .map(|y| y.entries().to_vec())
            .collect();
        prop_assert_eq!(got, brute_force_order(&k));
    }

    #[test]
    fn multi_index_counts(k in prop::collection::vec(0u32..5, 1..5)) {
        let k = MultiIndex::new(k);
        let card: usize = k.iter().map(|&v| v as usize + 1).product::<usize>() - 1;
        prop_assert_eq!(k.card(), card);
        prop_assert_eq!(lex_enumerate(&k).len(), card);
        prop_assert!(check_lex_closure(&k) || k.len() > 3);
        let total: u64 = lex_enumerate(&k).iter().map(|y| k.binomial(y)).sum();
        let all: u64 = k.iter().map(|&v| 1u64 << v).product();
        prop_assert_eq!(total + 1, all);
    }

    #[test]
    fn binomial_recurrence(n in 1u32..60, j in 1u32..60) {
        prop_assume!(j <= n);
        prop_assert_eq!(binomial(n, j), binomial(n - 1, j - 1) + binomial(n - 1, j));
    }
}
