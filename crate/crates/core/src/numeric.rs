//! Quadrature and scalar root finding, generic over the float type.

use num_traits::{Float, FloatConst};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SolveError {
    #[error("function does not change sign on the bracket")]
    NoBracket,
    #[error("iteration did not converge within {0} steps")]
    NoConvergence(usize),
}

fn cast<T: Float>(x: f64) -> T {
    T::from(x).expect("float conversion")
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Float + FloatConst> GaussLegendre<T> {
    /// Newton iteration on the Legendre polynomial from the Chebyshev guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = cast::<T>(n as f64);
        let one = T::one();
        let two = cast::<T>(2.0);
        for i in 0..n.div_ceil(2) {
            let mut x = (T::PI() * (cast::<T>(i as f64) + cast(0.75)) / (nf + cast(0.5))).cos();
            let mut dp = T::zero();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x = x - dx;
                if dx.abs() <= T::epsilon() * cast(4.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != T::zero() {
                dp = d;
            }
            let w = two / ((one - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, lo: T, hi: T, mut f: F) -> T {
        let half = (hi - lo) / cast(2.0);
        let mid = (hi + lo) / cast(2.0);
        let mut s = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s = s + *w * f(mid + half * *x);
        }
        s * half
    }

    /// Splits `[lo, hi]` into `pieces` equal panels.
    pub fn integrate_composite<F: FnMut(T) -> T>(&self, lo: T, hi: T, pieces: usize, mut f: F) -> T {
        let h = (hi - lo) / cast(pieces as f64);
        (0..pieces)
            .map(|i| {
                let a = lo + h * cast(i as f64);
                self.integrate(a, a + h, &mut f)
            })
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Value and derivative of P_n at x.
fn legendre<T: Float>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = cast::<T>(k as f64);
        let p2 = ((cast::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let nf = cast::<T>(n as f64);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// Root of an increasing function on `[lo, hi]`.
pub fn bisect<T: Float, F: FnMut(T) -> T>(mut g: F, mut lo: T, mut hi: T, tol: T) -> Result<T, SolveError> {
    let glo = g(lo);
    let ghi = g(hi);
    if glo > T::zero() || ghi < T::zero() {
        return Err(SolveError::NoBracket);
    }
    if glo == T::zero() {
        return Ok(lo);
    }
    for _ in 0..400 {
        let mid = lo + (hi - lo) / cast(2.0);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if g(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo + (hi - lo) / cast(2.0))
}

/// Iterates `x ← (1 - damping)·x + damping·F(x)` until successive iterates
/// differ by at most `tol`.
pub fn damped_fixed_point<T: Float, F: FnMut(T) -> T>(
    mut f: F,
    start: T,
    damping: T,
    tol: T,
    max_iter: usize,
) -> Result<T, SolveError> {
    let mut x = start;
    for _ in 0..max_iter {
        let next = (T::one() - damping) * x + damping * f(x);
        if (next - x).abs() <= tol {
            return Ok(next);
        }
        x = next;
    }
    Err(SolveError::NoConvergence(max_iter))
}
