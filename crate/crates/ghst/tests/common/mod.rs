//! Shared oracles for the integration-test suite. Everything here is
//! deliberately independent of the library's own numerics: quadrature and
//! brute-force constructions only, no calls into the code paths under test
//! (except where a test explicitly feeds a library density INTO quadrature).

#![allow(dead_code)]

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // the noise term keeps the recursion from chasing rounding error in
        // delta once the true truncation error is below machine precision;
        // it must sit decisively above a few ulps or termination becomes a
        // coin flip and the tree explodes
        let noise = 1e-13 * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= (15.0 * tol).max(noise) {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// log K_v(x) through the integral representation
/// K_v(x) = ∫₀^∞ e^{−x·cosh t}·cosh(v t) dt, evaluated in log space with the
/// peak subtracted. Slow and independent of the library implementation.
pub fn oracle_log_bessel_k(v: f64, x: f64) -> f64 {
    assert!(x > 0.0);
    let v = v.abs();
    let g = |t: f64| ln_cosh(v * t) - x * t.cosh();

    // peak of g: t = 0 when v² ≤ x·(slope balance), else the root of
    // v·tanh(vt) = x·sinh(t)
    let mut t_peak = 0.0;
    if v > 0.0 && v * v > x {
        let mut lo = 0.0_f64;
        let mut hi = (v / x).asinh() + 2.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if v * (v * mid).tanh() - x * mid.sinh() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t_peak = 0.5 * (lo + hi);
    }
    let g_max = g(t_peak);

    // bracket the region carrying mass: g − g_max ≥ −130 on [t_lo, t_hi]
    let mut t_hi = t_peak.max(1.0);
    while g(t_hi) - g_max > -130.0 {
        t_hi *= 1.5;
    }
    let mut t_lo = 0.0;
    if g(0.0) - g_max < -130.0 {
        // peak is away from the origin; bisect the left edge
        let (mut lo, mut hi) = (0.0_f64, t_peak);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) - g_max < -130.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t_lo = lo;
    }

    // split at the peak so the quadrature always samples it
    let h = |t: f64| (g(t) - g_max).exp();
    let integral =
        integrate(&h, t_lo, t_peak.max(t_lo), 1e-14) + integrate(&h, t_peak.max(t_lo), t_hi, 1e-14);
    g_max + integral.ln()
}

/// One-sample Kolmogorov–Smirnov test against a CDF; true if the test does
/// NOT reject at the supplied critical value of K = D·(√n + 0.12 + 0.11/√n).
/// Use 1.628 for α = 0.01.
pub fn ks_passes<F: Fn(f64) -> f64>(draws: &mut [f64], cdf: F, critical: f64) -> bool {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d * (n.sqrt() + 0.12 + 0.11 / n.sqrt()) <= critical
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Empirical quantile (type-7 interpolation) of an unsorted sample.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
