//! Fourier coefficients of the dithered cost, the `delta_star` threshold, and
//! equilibria of the averaged field.
//!
//! All integrals run over one dither period with the uniform trapezoid rule,
//! which on a smooth periodic integrand converges geometrically and is exact
//! for trigonometric polynomials of degree below the node count.

use std::f64::consts::TAU;
use std::sync::LazyLock;

use crate::cost::CostModel;
use crate::error::{Error, Result};

/// Default node count for the periodic quadrature.
pub const DEFAULT_N_QUAD: usize = 1024;

/// Quadrature tolerance advertised for smooth costs at the default node count.
pub const QUAD_TOL: f64 = 1e-10;

/// Node count for the half-period `delta_star` integral. The integrand is only
/// C0 at the endpoints for a generic class-K-infinity `alpha`, so the rule is
/// second order there and needs a dense grid to sit comfortably under 1e-10.
const DELTA_STAR_NODES: usize = 1 << 18;

/// Bisection stops once the bracket is shorter than this.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

static SIN_TABLE: LazyLock<Vec<f64>> = LazyLock::new(|| {
    (0..DEFAULT_N_QUAD)
        .map(|j| (TAU * j as f64 / DEFAULT_N_QUAD as f64).sin())
        .collect()
});

/// One pair of Fourier coefficients of `t -> h(x + delta sin(2 pi t))`.
#[derive(Clone, Copy, Debug)]
pub struct FourierCoeffs {
    pub k: usize,
    pub a_k: f64,
    pub b_k: f64,
    /// Query point the dither is centred on.
    pub x: f64,
    pub delta: f64,
    pub n_quad: usize,
}

/// Computes `a_k` and `b_k` of the dithered cost at `x` by the periodic
/// trapezoid rule on `n_quad` uniform nodes.
pub fn fourier_coeff(
    cost: &CostModel,
    x: f64,
    delta: f64,
    k: usize,
    n_quad: usize,
) -> Result<FourierCoeffs> {
    check_delta(delta)?;
    if n_quad < 64 {
        return Err(Error::invalid("n_quad", "need at least 64 quadrature nodes"));
    }
    let mut a = 0.0;
    let mut b = 0.0;
    for j in 0..n_quad {
        let t = j as f64 / n_quad as f64;
        let y = cost.value_checked(x + delta * (TAU * t).sin())?;
        let phase = TAU * k as f64 * t;
        a += y * phase.cos();
        b += y * phase.sin();
    }
    let scale = 2.0 / n_quad as f64;
    Ok(FourierCoeffs {
        k,
        a_k: scale * a,
        b_k: scale * b,
        x,
        delta,
        n_quad,
    })
}

/// `b_{1,delta}(x) / 2`, the averaged-field driver of the classic scheme.
pub fn b1_half(cost: &CostModel, x: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let n = DEFAULT_N_QUAD;
    let mut acc = 0.0;
    for &s in SIN_TABLE.iter() {
        acc += cost.value(x + delta * s) * s;
    }
    let v = acc / n as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        // Re-run with checking to report the offending point.
        fourier_coeff(cost, x, delta, 1, n).map(|c| c.b_k / 2.0)
    }
}

/// `b_{1,delta}(x) / 2` with an explicit node count.
pub fn b1_half_n(cost: &CostModel, x: f64, delta: f64, n_quad: usize) -> Result<f64> {
    fourier_coeff(cost, x, delta, 1, n_quad).map(|c| c.b_k / 2.0)
}

/// `a_{0,delta}(x) / 2`, the period mean of the dithered cost.
pub fn a0_half(cost: &CostModel, x: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let n = DEFAULT_N_QUAD;
    let mut acc = 0.0;
    for &s in SIN_TABLE.iter() {
        acc += cost.value(x + delta * s);
    }
    let v = acc / n as f64;
    if v.is_finite() {
        Ok(v)
    } else {
        fourier_coeff(cost, x, delta, 0, n).map(|c| c.a_k / 2.0)
    }
}

/// `a_{0,delta}(x) / 2` with an explicit node count.
pub fn a0_half_n(cost: &CostModel, x: f64, delta: f64, n_quad: usize) -> Result<f64> {
    fourier_coeff(cost, x, delta, 0, n_quad).map(|c| c.a_k / 2.0)
}

/// The class-K-infinity threshold `2 * integral_0^{1/2} alpha(s sin(2 pi t)) dt`.
///
/// Nonnegative and nondecreasing in `s` for any class-K-infinity `alpha`.
pub fn delta_star(alpha: &dyn Fn(f64) -> f64, s: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::invalid("s", "delta_star requires s >= 0"));
    }
    let n = DELTA_STAR_NODES;
    let h = 0.5 / n as f64;
    // Trapezoid over [0, 1/2]; both endpoint values are alpha(0).
    let mut acc = alpha(0.0);
    for j in 1..n {
        acc += alpha(s * (TAU * j as f64 * h).sin());
    }
    Ok(2.0 * h * acc)
}

/// Derivative of `b_{1,delta}` in `x`: twice the period quadrature of
/// `h'(x + delta sin(2 pi t)) sin(2 pi t)`. Uses the analytic gradient when
/// the cost has one and the central-difference fallback otherwise.
pub fn b1_derivative(cost: &CostModel, x: f64, delta: f64, n_quad: usize) -> Result<f64> {
    check_delta(delta)?;
    if n_quad < 64 {
        return Err(Error::invalid("n_quad", "need at least 64 quadrature nodes"));
    }
    let mut acc = 0.0;
    for j in 0..n_quad {
        let s = (TAU * j as f64 / n_quad as f64).sin();
        acc += cost.gradient_checked(x + delta * s)? * s;
    }
    Ok(2.0 * acc / n_quad as f64)
}

/// Bisection root of `b1_half` inside `bracket`, resolved to
/// [`EQUILIBRIUM_TOL`]. Requires a sign change across the bracket; without one
/// the attractor may be a set and [`sign_scan`] is the right tool.
pub fn find_equilibrium(cost: &CostModel, delta: f64, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::invalid("bracket", "need lo < hi"));
    }
    let f_lo = b1_half(cost, lo, delta)?;
    let f_hi = b1_half(cost, hi, delta)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let neg_low = f_lo < 0.0;
    while hi - lo > EQUILIBRIUM_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = b1_half(cost, mid, delta)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid < 0.0) == neg_low {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One sample of the averaged-field sign pattern.
#[derive(Clone, Copy, Debug)]
pub struct SignSample {
    pub x: f64,
    pub b1_half: f64,
}

/// Tabulates `b1_half` over a uniform grid; the fallback report when no single
/// equilibrium point exists inside the attractor interval.
pub fn sign_scan(cost: &CostModel, delta: f64, interval: (f64, f64), n: usize) -> Result<Vec<SignSample>> {
    if n < 2 {
        return Err(Error::invalid("n", "need at least two samples"));
    }
    let (lo, hi) = interval;
    (0..n)
        .map(|j| {
            let x = lo + (hi - lo) * j as f64 / (n - 1) as f64;
            Ok(SignSample {
                x,
                b1_half: b1_half(cost, x, delta)?,
            })
        })
        .collect()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("delta", "dither amplitude must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{constant, paper_cost, quadratic, CostModel, PAPER_COST_X_STAR};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear(slope: f64) -> CostModel {
        CostModel::with_grad("linear", move |x| slope * x, move |_| slope)
    }

    #[test]
    fn constant_cost_has_no_harmonics() {
        let c = constant(7.0);
        let fc = fourier_coeff(&c, 3.0, 0.5, 1, 256).unwrap();
        assert!(fc.a_k.abs() < 1e-12);
        assert!(fc.b_k.abs() < 1e-12);
        assert_relative_eq!(a0_half(&c, -1.0, 0.2).unwrap(), 7.0, epsilon = 1e-13);
    }

    #[test]
    fn quadratic_closed_forms() {
        let c = quadratic(0.0);
        let fc = fourier_coeff(&c, 1.0, 0.1, 1, DEFAULT_N_QUAD).unwrap();
        assert_relative_eq!(fc.b_k, 0.2, epsilon = 1e-12); // b_1 = 2 x delta
        let a0 = fourier_coeff(&c, 1.0, 0.1, 0, DEFAULT_N_QUAD).unwrap();
        assert_relative_eq!(a0.a_k / 2.0, 1.005, epsilon = 1e-12); // x^2 + delta^2/2
        assert_relative_eq!(b1_half(&c, 1.0, 0.1).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn linear_closed_forms() {
        let c = linear(3.0);
        // b1/2 = s * delta / 2 independent of x.
        assert_relative_eq!(b1_half(&c, -4.0, 0.2).unwrap(), 0.3, epsilon = 1e-12);
        assert_relative_eq!(b1_half(&c, 11.0, 0.2).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn delta_star_linear_and_quadratic_alpha() {
        let two_over_pi = 2.0 / std::f64::consts::PI;
        assert_relative_eq!(delta_star(&|r| r, 1.0).unwrap(), two_over_pi, epsilon = 1e-10);
        assert_relative_eq!(delta_star(&|r| r * r, 1.0).unwrap(), 0.5, epsilon = 1e-10);
        assert_eq!(delta_star(&|r| r.sqrt(), 0.0).unwrap(), 0.0);
        assert!(delta_star(&|r| r, -1.0).is_err());
    }

    #[test]
    fn delta_star_monotone_in_s() {
        let alpha = |r: f64| r + 0.3 * r * r;
        let mut prev = 0.0;
        for j in 1..=20 {
            let s = j as f64 * 0.25;
            let v = delta_star(&alpha, s).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn b1_derivative_closed_forms() {
        let c = quadratic(0.0);
        // b1/2 = x delta, so the derivative of b1 is 2 delta everywhere.
        assert_relative_eq!(b1_derivative(&c, 0.7, 0.1, 512).unwrap(), 0.2, epsilon = 1e-12);
        assert_relative_eq!(b1_derivative(&c, -2.0, 0.05, 512).unwrap(), 0.1, epsilon = 1e-12);
        let k = constant(9.0);
        assert!(b1_derivative(&k, 0.0, 0.3, 512).unwrap().abs() < 1e-14);
    }

    #[test]
    fn equilibrium_even_costs_sit_at_the_minimiser() {
        let c = quadratic(0.0);
        let root = find_equilibrium(&c, 0.1, (-0.1, 0.1)).unwrap();
        assert!(root.abs() <= 1e-10);
        let c1 = quadratic(1.0);
        let root = find_equilibrium(&c1, 0.05, (0.95, 1.05)).unwrap();
        assert!((root - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn equilibrium_of_asymmetric_cost_is_off_the_minimiser() {
        let c = paper_cost(10.0, 0.0);
        let x_star = PAPER_COST_X_STAR;
        let root = find_equilibrium(&c, 0.1, (x_star - 0.1, x_star + 0.1)).unwrap();
        assert!(root > x_star - 0.1 && root < x_star + 0.1);
        assert!((root - x_star).abs() > 1e-6, "root - x_star = {}", root - x_star);
        // The residual at the root is tiny.
        assert!(b1_half(&c, root, 0.1).unwrap().abs() < 1e-9);
    }

    #[test]
    fn equilibrium_requires_sign_change() {
        let c = linear(1.0); // b1/2 = delta/2 > 0 everywhere
        let err = find_equilibrium(&c, 0.1, (0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
        // The fallback scan reports the one-sided sign pattern.
        let scan = sign_scan(&c, 0.1, (0.0, 1.0), 16).unwrap();
        assert!(scan.iter().all(|s| s.b1_half > 0.0));
    }

    #[test]
    fn b1_half_near_x_star_brackets_equilibrium() {
        let c = paper_cost(10.0, 0.0);
        let x_star = PAPER_COST_X_STAR;
        let left = b1_half(&c, x_star - 0.1, 0.1).unwrap();
        let right = b1_half(&c, x_star + 0.1, 0.1).unwrap();
        assert!(left < 0.0 && right > 0.0, "no bracket: {left} / {right}");
    }

    #[test]
    fn averaged_field_sign_bound_for_envelope_equipped_quadratic() {
        // h = m = x^2, A = 0, alpha(s) = s^2 / 2: delta_star(delta) > A, so the
        // averaged field obeys the sign bound outside [x*-delta, x*+delta].
        let c = quadratic(0.0);
        let alpha = |s: f64| 0.5 * s * s;
        let delta = 0.3;
        let bound = delta_star(&alpha, delta).unwrap();
        assert!(bound > 0.0);
        let tol = 1e-8;
        for j in 0..200 {
            let x = delta + 4.0 * delta * j as f64 / 199.0;
            let b = b1_half(&c, x, delta).unwrap();
            assert!(b >= bound - tol, "b1/2 = {b} < {bound} at x = {x}");
            let bm = b1_half(&c, -x, delta).unwrap();
            assert!(bm <= -(bound - tol), "mirror failed at -{x}");
        }
    }

    #[test]
    fn even_costs_zero_b1_at_x_star() {
        let even = CostModel::new("even", |x: f64| x.cos() + 0.5 * x * x);
        assert!(b1_half(&even, 0.0, 0.7).unwrap().abs() <= 1e-10);
        let shifted = quadratic(3.25);
        assert!(b1_half(&shifted, 3.25, 0.4).unwrap().abs() <= 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Polynomial costs give trigonometric-polynomial integrands: the rule
        /// is exact (to rounding) once the node count clears the degree.
        #[test]
        fn quadrature_exact_for_polynomial_costs(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 1..6),
            x in -2.0f64..2.0,
            delta in 0.05f64..1.0,
            k in 0usize..4,
        ) {
            let d = coeffs.len();
            let c = coeffs.clone();
            let cost = CostModel::new("poly", move |x: f64| {
                c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
            });
            let coarse = fourier_coeff(&cost, x, delta, k, (2 * d + 6).max(64)).unwrap();
            let fine = fourier_coeff(&cost, x, delta, k, 4096).unwrap();
            let scale = 1.0 + fine.a_k.abs().max(fine.b_k.abs());
            prop_assert!((coarse.a_k - fine.a_k).abs() <= 1e-12 * scale);
            prop_assert!((coarse.b_k - fine.b_k).abs() <= 1e-12 * scale);
        }

        /// Doubling the node count moves the coefficients of a smooth cost by
        /// less than the advertised tolerance.
        #[test]
        fn refinement_is_stable_for_smooth_costs(
            x in -3.0f64..3.0,
            delta in 0.05f64..0.8,
            k in 0usize..3,
        ) {
            let cost = CostModel::new("smooth", |x: f64| (0.7 * x).sin() + 0.1 * x * x);
            let base = fourier_coeff(&cost, x, delta, k, DEFAULT_N_QUAD).unwrap();
            let fine = fourier_coeff(&cost, x, delta, k, 2 * DEFAULT_N_QUAD).unwrap();
            prop_assert!((base.a_k - fine.a_k).abs() < QUAD_TOL);
            prop_assert!((base.b_k - fine.b_k).abs() < QUAD_TOL);
        }

        /// b_0 is identically zero by convention.
        #[test]
        fn b0_is_zero(x in -5.0f64..5.0, delta in 0.01f64..2.0) {
            let cost = CostModel::new("mix", |x: f64| x.powi(3) - x + 2.0);
            let fc = fourier_coeff(&cost, x, delta, 0, 256).unwrap();
            prop_assert!(fc.b_k.abs() < 1e-12);
        }
    }

    #[test]
    fn eval_domain_error_propagates() {
        let c = CostModel::new("nanny", |x: f64| if x > 0.5 { f64::NAN } else { 0.0 });
        assert!(matches!(
            b1_half(&c, 0.5, 0.2),
            Err(Error::EvalDomain { .. })
        ));
        assert!(matches!(
            a0_half(&c, 0.5, 0.2),
            Err(Error::EvalDomain { .. })
        ));
    }
}
