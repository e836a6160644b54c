//! Hierarchy-level checks: likelihood consistency against the explicit
//! row-law route, censored-data augmentation against direct quadrature,
//! and structural invariances of the simulator.

mod common;

use ghst::gh::{self, condition_gh, marginal_gh, standardize_gh, GhParams};
use ghst::model::{
    panel_log_likelihood, simulate_panel, InnovationKernel, LatentState, PanelData,
    ParameterVector,
};
use ghst::spatial::{distance_matrix, StationSet};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn stations(n: usize) -> StationSet {
    let coords: Vec<(f64, f64)> = (0..n)
        .map(|i| (0.37 * i as f64, (0.61 * i as f64).sin()))
        .collect();
    StationSet::new(
        (0..n).map(|i| format!("st{i}")).collect(),
        coords,
        (0..n).map(|i| 100.0 * i as f64).collect(),
    )
    .unwrap()
}

fn moderate_params() -> ParameterVector {
    ParameterVector {
        b: 0.3,
        omega: 4.0,
        alpha: 0.2,
        lambda: 0.8,
        psi: 1.3,
        m_tau: 0.15,
        beta0: 0.4,
        beta: vec![],
        theta: 0.9,
        phi: 0.5,
    }
}

/// The O(N²) likelihood path must agree with summing explicit GH row laws.
#[test]
fn likelihood_matches_explicit_row_laws() {
    let st = stations(4);
    let mut z = moderate_params();
    z.beta = vec![0.7];
    let t_len = 6;
    let x = DMatrix::from_fn(t_len, 4, |t, i| ((t * 7 + i) as f64 * 0.83).sin());
    let (data, lat) = simulate_panel(&z, &st, &[x], t_len, 41).unwrap();

    let fast = panel_log_likelihood(&z, &lat, &data).unwrap();

    let kernel = InnovationKernel::new(&z, &distance_matrix(&st)).unwrap();
    let mut slow = 0.0;
    for t in 0..t_len {
        let reg = data.regression_row(&z, t).unwrap();
        let v_prev = if t == 0 {
            DVector::zeros(4)
        } else {
            lat.v.row(t - 1).transpose()
        };
        let s_row = lat.s.row(t).transpose();
        let law = kernel.row_law(&reg, &v_prev, &s_row).unwrap();
        slow += gh::log_density(&law, &lat.y.row(t).transpose()).unwrap();
    }
    assert!(
        (fast - slow).abs() < 1e-9 * fast.abs().max(1.0),
        "fast {fast} vs explicit {slow}"
    );
}

/// With one station and one day the likelihood is a univariate GH density
/// whose parameters compose in closed form.
#[test]
fn single_cell_reduces_to_univariate_gh() {
    let st = StationSet::new(vec!["only".into()], vec![(2.0, 3.0)], vec![50.0]).unwrap();
    let z = moderate_params();
    let y_val = 3.2;
    let d = DMatrix::from_element(1, 1, y_val);
    let data = PanelData::new(st, d.clone(), vec![]).unwrap();
    let lat = LatentState::from_augmented(&z, &data, d).unwrap();
    let got = panel_log_likelihood(&z, &lat, &data).unwrap();

    let std = standardize_gh(z.lambda, z.psi, &DVector::from_element(1, z.m_tau)).unwrap();
    let s1 = (z.omega / (1.0 - z.alpha)).sqrt();
    let mu = DVector::from_element(1, z.beta0 + s1 * std.mu()[0]);
    let sigma = DMatrix::from_element(1, 1, s1 * s1 * std.sigma()[(0, 0)]);
    // γ scales by s1, so τ = Σ⁻¹γ picks up 1/s1
    let tau = DVector::from_element(1, std.tau()[0] / s1);
    let law = GhParams::new(z.lambda, 1.0, z.psi, mu, sigma, tau).unwrap();
    let want = gh::log_density(&law, &DVector::from_element(1, y_val)).unwrap();
    assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
}

/// Rebuilding (V, U, S) from the simulator's Y must reproduce the
/// simulator's own state to near machine precision.
#[test]
fn state_reconstruction_is_exact() {
    let st = stations(5);
    let mut z = moderate_params();
    z.beta = vec![0.7, -0.2];
    let t_len = 40;
    let x1 = DMatrix::from_fn(t_len, 5, |t, _| (t as f64 * 0.21).cos());
    let x2 = DMatrix::from_fn(t_len, 5, |_, i| i as f64 * 0.5);
    let (data, lat) = simulate_panel(&z, &st, &[x1, x2], t_len, 99).unwrap();

    let rebuilt = LatentState::from_augmented(&z, &data, lat.y.clone()).unwrap();
    assert!((&rebuilt.v - &lat.v).amax() < 1e-12);
    assert!((&rebuilt.u - &lat.u).amax() < 1e-12);
    assert!((&rebuilt.s - &lat.s).amax() < 1e-12);
}

/// Station order is arbitrary: permuting everything consistently must not
/// move the likelihood.
#[test]
fn likelihood_is_permutation_invariant() {
    let n = 4;
    let st = stations(n);
    let z = moderate_params();
    let t_len = 8;
    let (data, lat) = simulate_panel(&z, &st, &[], t_len, 7).unwrap();
    let base = panel_log_likelihood(&z, &lat, &data).unwrap();

    let perm = [2usize, 0, 3, 1];
    let st_p = StationSet::new(
        perm.iter().map(|&i| st.ids()[i].clone()).collect(),
        perm.iter().map(|&i| st.coords()[i]).collect(),
        perm.iter().map(|&i| st.elevation()[i]).collect(),
    )
    .unwrap();
    let permute = |m: &DMatrix<f64>| DMatrix::from_fn(t_len, n, |t, i| m[(t, perm[i])]);
    let data_p = PanelData::new(st_p, permute(data.observations()), vec![]).unwrap();
    let lat_p = LatentState::from_augmented(&z, &data_p, permute(&lat.y)).unwrap();
    let got = panel_log_likelihood(&z, &lat_p, &data_p).unwrap();
    assert!(
        (got - base).abs() < 1e-8 * base.abs().max(1.0),
        "permuted {got} vs base {base}"
    );
}

/// The augmented panel must respect the censoring pattern.
#[test]
fn augmentation_precondition_is_enforced() {
    let st = stations(2);
    let z = moderate_params();
    let d = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 2.5]);
    let data = PanelData::new(st, d, vec![]).unwrap();

    // positive value on a censored cell
    let bad = DMatrix::from_row_slice(2, 2, &[1.5, 0.7, -0.3, 2.5]);
    let lat = LatentState::from_augmented(&z, &data, bad).unwrap();
    assert!(panel_log_likelihood(&z, &lat, &data).is_err());

    // augmented value drifting away from an observed cell
    let bad = DMatrix::from_row_slice(2, 2, &[1.4, -0.2, -0.3, 2.5]);
    let lat = LatentState::from_augmented(&z, &data, bad).unwrap();
    assert!(panel_log_likelihood(&z, &lat, &data).is_err());

    // a consistent augmentation passes
    let good = DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.3, 2.5]);
    let lat = LatentState::from_augmented(&z, &data, good).unwrap();
    assert!(panel_log_likelihood(&z, &lat, &data).is_ok());
}

#[test]
fn same_seed_is_bit_identical() {
    let st = stations(3);
    let z = moderate_params();
    let (d1, l1) = simulate_panel(&z, &st, &[], 20, 1234).unwrap();
    let (d2, l2) = simulate_panel(&z, &st, &[], 20, 1234).unwrap();
    assert_eq!(d1.observations(), d2.observations());
    assert_eq!(l1.y, l2.y);
    assert_eq!(l1.s, l2.s);
    let (d3, _) = simulate_panel(&z, &st, &[], 20, 1235).unwrap();
    assert_ne!(d1.observations(), d3.observations());
}

/// Lowering the intercept pushes mass below zero: the wet fraction must be
/// monotone in β₀.
#[test]
fn censoring_fraction_tracks_intercept()
{
    let st = stations(3);
    let mut fractions = Vec::new();
    for beta0 in [-6.0, 0.0, 6.0] {
        let mut z = moderate_params();
        z.beta0 = beta0;
        let (data, _) = simulate_panel(&z, &st, &[], 600, 5).unwrap();
        let wet = data
            .observations()
            .iter()
            .filter(|v| **v > 0.0)
            .count() as f64;
        fractions.push(wet / (600.0 * 3.0));
    }
    assert!(
        fractions[0] < fractions[1] && fractions[1] < fractions[2],
        "wet fractions not monotone: {fractions:?}"
    );
}

/// With m_τ = 0 the innovation law is elliptical: the row law carries no
/// skewness and its mean is purely autoregressive.
#[test]
fn zero_skewness_gives_elliptical_row_law() {
    let st = stations(3);
    let mut z = moderate_params();
    z.m_tau = 0.0;
    let kernel = InnovationKernel::new(&z, &distance_matrix(&st)).unwrap();
    let reg = DVector::from_element(3, z.beta0);
    let v_prev = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let s_row = DVector::from_vec(vec![2.0, 2.5, 3.0]);
    let law = kernel.row_law(&reg, &v_prev, &s_row).unwrap();
    assert!(law.gamma().amax() < 1e-14);
    let want = DVector::from_fn(3, |i, _| z.beta0 + z.b * v_prev[i]);
    assert!((law.mu() - want).amax() < 1e-12);
}

/// Censored-data check for one day, two stations, station 2 dry: the exact
/// integral ∫_{y₂ ≤ 0} f(y₁, y₂) dy₂ by quadrature must match the
/// augmentation identity f_marg(y₁)·P(Y₂ ≤ 0 | Y₁ = y₁) with the
/// conditional probability estimated by Monte Carlo.
#[test]
fn augmented_likelihood_matches_censoring_integral() {
    let st = StationSet::new(
        vec!["wet".into(), "dry".into()],
        vec![(0.0, 0.0), (0.8, 0.0)],
        vec![0.0, 0.0],
    )
    .unwrap();
    let mut z = moderate_params();
    z.beta0 = 0.6; // keeps P(Y₂ ≤ 0 | y₁) well away from 0
    let y1 = 1.1;

    let d = DMatrix::from_row_slice(1, 2, &[y1, 0.0]);
    let data = PanelData::new(st.clone(), d, vec![]).unwrap();

    // joint day-1 law, volatility at the unconditional ARCH scale
    let kernel = InnovationKernel::new(&z, &distance_matrix(&st)).unwrap();
    let s1 = (z.omega / (1.0 - z.alpha)).sqrt();
    let joint = kernel
        .row_law(
            &DVector::from_element(2, z.beta0),
            &DVector::zeros(2),
            &DVector::from_element(2, s1),
        )
        .unwrap();

    // quadrature route, via the panel likelihood itself so the whole
    // augmentation path is exercised
    let log_f = |v: f64| {
        let y = DMatrix::from_row_slice(1, 2, &[y1, v]);
        let lat = LatentState::from_augmented(&z, &data, y).unwrap();
        panel_log_likelihood(&z, &lat, &data).unwrap()
    };
    let sd = joint.sigma()[(1, 1)].sqrt();
    let lo = joint.mu()[1] - 60.0 * sd;
    let peak = {
        let mut best = (f64::NEG_INFINITY, 0.0);
        let steps = 4000;
        for k in 0..=steps {
            let v = lo + (0.0 - lo) * k as f64 / steps as f64;
            let lf = log_f(v);
            if lf > best.0 {
                best = (lf, v);
            }
        }
        best
    };
    let quad = peak.0.exp()
        * (common::integrate(&|v| (log_f(v) - peak.0).exp(), lo, peak.1, 1e-11)
            + common::integrate(&|v| (log_f(v) - peak.0).exp(), peak.1, 0.0, 1e-11));

    // augmentation route: marginal density times MC censoring probability
    let marg = marginal_gh(&joint, &[0]).unwrap();
    let log_marg = gh::log_density(&marg, &DVector::from_element(1, y1)).unwrap();
    let cond = condition_gh(&joint, &[0], &DVector::from_element(1, y1)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2026);
    let draws = 200_000;
    let mut below = 0u64;
    for _ in 0..draws {
        if gh::sample(&cond, &mut rng)[0] <= 0.0 {
            below += 1;
        }
    }
    let p_hat = below as f64 / draws as f64;
    assert!(p_hat > 0.3, "test design wants a thick censored region, got {p_hat}");
    let augmented = log_marg.exp() * p_hat;

    let rel = (quad - augmented).abs() / quad;
    assert!(
        rel < 1e-2,
        "quadrature {quad:.6e} vs augmented {augmented:.6e} (rel {rel:.3e})"
    );
}
