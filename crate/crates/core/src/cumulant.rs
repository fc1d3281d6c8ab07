//! Cumulants `κ(f) = −ln E exp −⟨𝓟, f⟩`: empirical estimates and the
//! limiting fixed-point equations of both models.

use num_traits::{Float, FloatConst};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isles::Model;
use crate::limits::LimitParams;
use crate::numeric::{bisect, damped_fixed_point, GaussLegendre, SolveError};

fn cast<T: Float>(x: f64) -> T {
    T::from(x).expect("float conversion")
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TestFnError {
    #[error("trapezoid corners must satisfy 0 < a < a' <= b' < b")]
    BadCorners,
    #[error("trapezoid height must be finite and nonnegative")]
    BadHeight,
}

/// Trapezoid test function: 0 up to `a`, linear up to height `h` on
/// `[a, a1]`, flat on `[a1, b1]`, linear down on `[b1, b]`, 0 beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid<T> {
    pub a: T,
    pub a1: T,
    pub b1: T,
    pub b: T,
    pub h: T,
}

impl<T: Float + FloatConst> Trapezoid<T> {
    pub fn new(a: T, a1: T, b1: T, b: T, h: T) -> Result<Self, TestFnError> {
        let finite = [a, a1, b1, b].iter().all(|x| x.is_finite());
        if !(finite && T::zero() < a && a < a1 && a1 <= b1 && b1 < b) {
            return Err(TestFnError::BadCorners);
        }
        if !(h.is_finite() && h >= T::zero()) {
            return Err(TestFnError::BadHeight);
        }
        Ok(Trapezoid { a, a1, b1, b, h })
    }

    pub fn eval(&self, x: T) -> T {
        if x <= self.a || x >= self.b {
            T::zero()
        } else if x < self.a1 {
            self.h * (x - self.a) / (self.a1 - self.a)
        } else if x <= self.b1 {
            self.h
        } else {
            self.h * (self.b - x) / (self.b - self.b1)
        }
    }

    /// `f ≤ g` pointwise.
    pub fn dominated_by(&self, g: &Self) -> bool {
        // both are piecewise linear: compare at every breakpoint of either
        let pts = [self.a, self.a1, self.b1, self.b, g.a, g.a1, g.b1, g.b];
        pts.iter().all(|&x| self.eval(x) <= g.eval(x) + T::epsilon())
    }

    /// `∫ (1 − e^{−f(x)}) density(x) dx` over the support cut to `[lo, hi]`,
    /// piece by piece so the integrand is smooth on each panel.
    pub fn integrate_one_minus_exp<D: Fn(T) -> T>(&self, density: D, lo: T, hi: T) -> T {
        let gl = GaussLegendre::<T>::new(32);
        let pieces = [(self.a, self.a1), (self.a1, self.b1), (self.b1, self.b)];
        let mut total = T::zero();
        for (p, q) in pieces {
            let p = p.max(lo);
            let q = q.min(hi);
            if q <= p {
                continue;
            }
            total = total + gl.integrate_composite(p, q, 8, |x| (T::one() - (-self.eval(x)).exp()) * density(x));
        }
        total
    }

    /// `∫ (1 − e^{−f}) dμ^c` with `μ(dx) = dx / (2 x^{3/2})` on `(0, c)`.
    pub fn mu_c_integral(&self, c: T) -> T {
        self.integrate_one_minus_exp(|x| cast::<T>(0.5) / (x * x.sqrt()), T::zero(), c)
    }
}

/// Right-hand side of the fossil equation at `κ`:
/// `λ₂∫(1−e^{−f})dμ^c + λ∫(1−e^{−f(c)−κu})θ(du)`.
pub fn fossil_rhs<T: Float + FloatConst>(kappa: T, f: &Trapezoid<T>, params: &LimitParams<T>) -> T {
    let nonfertile = params.lambda2() * f.mu_c_integral(params.c);
    params.lambda() * theta_term(kappa, f.eval(params.c), params) + nonfertile
}

/// `∫(1 − e^{−f_c − κu}) θ(du)` with θ the law of `√c σ W`, W Rayleigh.
fn theta_term<T: Float + FloatConst>(kappa: T, fc: T, params: &LimitParams<T>) -> T {
    let gl = GaussLegendre::<T>::new(64);
    let s = params.theta_scale();
    // Rayleigh tail beyond 10 is e^{-50}
    gl.integrate_composite(T::zero(), cast(10.0), 4, |w| {
        (T::one() - (-fc - kappa * s * w).exp()) * w * (-w * w / cast(2.0)).exp()
    })
}

/// Right-hand side of the regrowing equation at `κ`:
/// `∫(1−e^{−f})dν + (1/c) E(1 − e^{−f(P) − κC})`, the expectation taken
/// over `pool`.
pub fn regrow_rhs<T: Float + FloatConst>(kappa: T, f: &Trapezoid<T>, params: &LimitParams<T>, pool: &[(T, T)]) -> T {
    assert!(!pool.is_empty(), "empty (P, C) pool");
    nu_integral(f, params) + regrow_fertile_term(kappa, f, params, pool)
}

fn regrow_fertile_term<T: Float + FloatConst>(kappa: T, f: &Trapezoid<T>, params: &LimitParams<T>, pool: &[(T, T)]) -> T {
    let mut acc = T::zero();
    for &(p, c) in pool {
        acc = acc + (T::one() - (-f.eval(p) - kappa * c).exp());
    }
    acc / cast(pool.len() as f64) / params.c
}

/// `∫(1 − e^{−f}) dν` for the excursion-length measure of non-fertile islands.
pub fn nu_integral<T: Float + FloatConst>(f: &Trapezoid<T>, params: &LimitParams<T>) -> T {
    f.integrate_one_minus_exp(|t| params.nu_density(t), T::zero(), T::infinity())
}

pub fn cumulant_residual<T: Float + FloatConst>(
    kappa: T,
    f: &Trapezoid<T>,
    params: &LimitParams<T>,
    model: Model,
    pool: Option<&[(T, T)]>,
) -> T {
    match model {
        Model::Fossil => kappa - fossil_rhs(kappa, f, params),
        Model::Regrow => kappa - regrow_rhs(kappa, f, params, pool.expect("regrow residual needs a pool")),
    }
}

/// Unique root of `κ − RHS(κ)` on `[0, λ₂∫(1−e^{−f})dμ^c + λ]`.
pub fn solve_cumulant_fossil<T: Float + FloatConst>(f: &Trapezoid<T>, params: &LimitParams<T>, tol: T) -> Result<T, SolveError> {
    let upper = params.lambda2() * f.mu_c_integral(params.c) + params.lambda();
    bisect(|k| k - fossil_rhs(k, f, params), T::zero(), upper, tol)
}

/// Unique root of `κ − RHS(κ)` on `[0, ∫(1−e^{−f})dν + 1/c]`; the pool acts as
/// common random numbers for every iterate.
pub fn solve_cumulant_regrow<T: Float + FloatConst>(
    f: &Trapezoid<T>,
    params: &LimitParams<T>,
    tol: T,
    pool: &[(T, T)],
) -> Result<T, SolveError> {
    let nu = nu_integral(f, params);
    let upper = nu + T::one() / params.c;
    bisect(|k| k - nu - regrow_fertile_term(k, f, params, pool), T::zero(), upper, tol)
}

/// Damped iteration `κ ← κ/2 + RHS(κ)/2` from 0; independent check of the
/// bisection result.
pub fn fixed_point_cumulant<T: Float + FloatConst>(
    f: &Trapezoid<T>,
    params: &LimitParams<T>,
    model: Model,
    pool: Option<&[(T, T)]>,
    tol: T,
) -> Result<T, SolveError> {
    let half = cast(0.5);
    match model {
        Model::Fossil => damped_fixed_point(|k| fossil_rhs(k, f, params), T::zero(), half, tol, 100_000),
        Model::Regrow => {
            let pool = pool.expect("regrow needs a pool");
            damped_fixed_point(|k| regrow_rhs(k, f, params, pool), T::zero(), half, tol, 100_000)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CumulantError {
    #[error("no samples")]
    Empty,
    #[error("integral values must be nonnegative")]
    Negative,
    #[error("every e^(-integral) underflows; the cumulant is not estimable")]
    DegenerateSample,
}

/// `−ln` of the sample mean of `e^{−integral}`, or `−N ln` of it when the
/// samples are single-island integrals and `scale_n = Some(N)`. Standard
/// error by the delta method.
pub fn empirical_cumulant(integrals: &[f64], scale_n: Option<u64>) -> Result<CumulantEstimate, CumulantError> {
    if integrals.is_empty() {
        return Err(CumulantError::Empty);
    }
    if integrals.iter().any(|&x| !(x >= 0.0)) {
        return Err(CumulantError::Negative);
    }
    let n = integrals.len() as f64;
    let mean = integrals.iter().map(|&x| (-x).exp()).sum::<f64>() / n;
    if !(mean > f64::MIN_POSITIVE) {
        return Err(CumulantError::DegenerateSample);
    }
    let var = if integrals.len() > 1 {
        integrals.iter().map(|&x| ((-x).exp() - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let k = scale_n.map_or(1.0, |m| m as f64);
    Ok(CumulantEstimate {
        value: -k * mean.ln(),
        stderr: k * (var / n).sqrt() / mean,
        n_samples: integrals.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    type P = LimitParams<f64>;

    fn tf(a: f64, a1: f64, b1: f64, b: f64, h: f64) -> Trapezoid<f64> {
        Trapezoid::new(a, a1, b1, b, h).unwrap()
    }

    #[test]
    fn trapezoid_shape() {
        let f = tf(1.0, 2.0, 3.0, 5.0, 2.0);
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(1.5), 1.0);
        assert_eq!(f.eval(2.5), 2.0);
        assert_eq!(f.eval(4.0), 1.0);
        assert_eq!(f.eval(6.0), 0.0);
        assert!(Trapezoid::new(1.0, 1.0, 2.0, 3.0, 1.0).is_err());
        assert!(Trapezoid::new(2.0, 3.0, 4.0, 1.0, 1.0).is_err());
        assert!(Trapezoid::new(1.0, 2.0, 3.0, 4.0, -1.0).is_err());
        let g = Trapezoid::<f32>::new(1.0, 2.0, 3.0, 5.0, 2.0).unwrap();
        assert_eq!(g.eval(2.5), 2.0);
    }

    #[test]
    fn mu_integral_matches_closed_form_on_flat_part() {
        // With a steep trapezoid the integral approaches (1 − e^{−h})(a1^{-1/2} − b1^{-1/2}).
        let f = tf(0.2, 0.2 + 1e-9, 0.8, 0.8 + 1e-9, 1.0);
        let v = f.mu_c_integral(10.0);
        let exact = (1.0 - (-1.0f64).exp()) * (0.2f64.powf(-0.5) - 0.8f64.powf(-0.5));
        assert_relative_eq!(v, exact, max_relative = 1e-6);
        // cut at c
        let v = f.mu_c_integral(0.5);
        let exact = (1.0 - (-1.0f64).exp()) * (0.2f64.powf(-0.5) - 0.5f64.powf(-0.5));
        assert_relative_eq!(v, exact, max_relative = 1e-6);
    }

    #[test]
    fn empirical_cumulant_examples() {
        assert_eq!(empirical_cumulant(&[0.0, 0.0, 0.0], None).unwrap().value, 0.0);
        assert_relative_eq!(empirical_cumulant(&[0.7; 4], None).unwrap().value, 0.7, epsilon = 1e-15);
        let v = empirical_cumulant(&[0.0, 2f64.ln()], None).unwrap().value;
        assert_relative_eq!(v, (4.0f64 / 3.0).ln(), epsilon = 1e-15);
        let v = empirical_cumulant(&[0.0, 2f64.ln()], Some(10)).unwrap().value;
        assert_relative_eq!(v, 10.0 * (4.0f64 / 3.0).ln(), epsilon = 1e-13);
        assert_eq!(empirical_cumulant(&[], None), Err(CumulantError::Empty));
        assert_eq!(empirical_cumulant(&[1e6], None), Err(CumulantError::DegenerateSample));
    }

    #[test]
    fn zero_function_has_zero_cumulant() {
        let p = P::new(1.0, 2.0);
        let f = tf(0.1, 0.2, 0.5, 2.0, 0.0);
        assert_eq!(solve_cumulant_fossil(&f, &p, 1e-12).unwrap(), 0.0);
        let pool = vec![(0.5, 1.0), (1.0, 0.3)];
        assert_eq!(solve_cumulant_regrow(&f, &p, 1e-12, &pool).unwrap(), 0.0);
    }

    #[test]
    fn fossil_solver_residual_and_fixed_point() {
        let p = P::new(1.0, 2.0);
        let fs = [
            tf(0.05, 0.2, 0.5, 0.8, 1.0),
            tf(0.3, 0.6, 1.2, 1.5, 1.0),
            tf(0.5, 0.9, 1.1, 2.0, 2.0),
            tf(0.01, 0.02, 0.03, 0.04, 3.0),
            tf(0.9, 0.95, 1.05, 1.1, 0.5),
        ];
        for f in &fs {
            let k = solve_cumulant_fossil(f, &p, 1e-13).unwrap();
            assert!(cumulant_residual(k, f, &p, Model::Fossil, None).abs() < 1e-10);
            let fp = fixed_point_cumulant(f, &p, Model::Fossil, None, 1e-13).unwrap();
            assert!((k - fp).abs() < 1e-8, "{k} vs {fp}");
            // sign at the bracket ends
            assert!(cumulant_residual(0.0, f, &p, Model::Fossil, None) < 0.0);
        }
    }

    #[test]
    fn fossil_solver_in_f32() {
        let p = LimitParams::<f32>::new(1.0, 2.0);
        let f = Trapezoid::<f32>::new(0.3, 0.6, 1.2, 1.5, 1.0).unwrap();
        let k32 = solve_cumulant_fossil(&f, &p, 1e-6).unwrap();
        let k64 = solve_cumulant_fossil(&tf(0.3, 0.6, 1.2, 1.5, 1.0), &P::new(1.0, 2.0), 1e-12).unwrap();
        assert!((k32 as f64 - k64).abs() < 1e-4);
    }

    #[test]
    fn regrow_solver_residual_and_fixed_point() {
        let p = P::new(1.0, 1.0);
        let mut rng = crate::empirical::replicate_rng(5, 0);
        let pool: Vec<(f64, f64)> = (0..20_000)
            .map(|_| {
                let s = crate::limits::sample_pc_series(&p, &mut rng);
                (s.p, s.c)
            })
            .collect();
        for f in [tf(0.05, 0.2, 0.5, 0.8, 1.0), tf(0.3, 0.6, 1.2, 1.5, 1.0)] {
            let k = solve_cumulant_regrow(&f, &p, 1e-13, &pool).unwrap();
            assert!(cumulant_residual(k, &f, &p, Model::Regrow, Some(&pool)).abs() < 1e-10);
            let fp = fixed_point_cumulant(&f, &p, Model::Regrow, Some(&pool), 1e-13).unwrap();
            assert!((k - fp).abs() < 1e-8);
            let upper = nu_integral(&f, &p) + 1.0;
            assert!(cumulant_residual(upper, &f, &p, Model::Regrow, Some(&pool)) > 0.0);
        }
    }

    #[test]
    fn nu_integral_laplace_identity() {
        // ∫(1 − e^{−αt}) ν(dt) = (1/c)(x coth x − 1), x = √(2α) c̃; check with a
        // wide, nearly flat trapezoid approximating the exponential weight
        // through direct quadrature of the density.
        let p = P::new(1.3, 1.7);
        let alpha: f64 = 0.8;
        let gl = GaussLegendre::<f64>::new(64);
        let mut v = 0.0;
        let mut lo = 1e-16;
        while lo < 200.0 {
            let hi = (lo * 2.0).min(200.0);
            v += gl.integrate(lo, hi, |t| (1.0 - (-alpha * t).exp()) * p.nu_density(t));
            lo = hi;
        }
        let x = (2.0 * alpha).sqrt() * p.c_tilde();
        let exact = (x / x.tanh() - 1.0) / p.c;
        assert_relative_eq!(v, exact, max_relative = 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn fossil_cumulant_is_monotone(a in 0.02f64..0.5, w in 0.05f64..1.0, h in 0.1f64..3.0, dh in 0.0f64..1.0, grow in 0.0f64..0.3) {
            let p = P::new(1.0, 2.0);
            let f = tf(a, a + w / 3.0, a + 2.0 * w / 3.0, a + w, h);
            let g = tf((a - grow * a).max(0.01), a + w / 3.0, a + 2.0 * w / 3.0, a + w + grow, h + dh);
            prop_assume!(f.dominated_by(&g));
            let kf = solve_cumulant_fossil(&f, &p, 1e-12).unwrap();
            let kg = solve_cumulant_fossil(&g, &p, 1e-12).unwrap();
            prop_assert!(kf <= kg + 1e-10);
        }

        #[test]
        fn fossil_residual_small_at_solution(a in 0.02f64..1.5, w in 0.05f64..1.0, h in 0.0f64..3.0, c in 0.5f64..2.0, s2 in 0.5f64..3.0) {
            let p = P::new(c, s2);
            let f = tf(a, a + w / 4.0, a + w / 2.0, a + w, h);
            let k = solve_cumulant_fossil(&f, &p, 1e-13).unwrap();
            prop_assert!(k >= 0.0);
            prop_assert!(cumulant_residual(k, &f, &p, Model::Fossil, None).abs() < 1e-10);
        }
    }
}
