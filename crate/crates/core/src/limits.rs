//! Limit objects: constants, intensity measures, fertility laws, the random
//! measures η of both models, the tree-indexed CSBP prefix and the law of the
//! limiting (population, colonies) pair of a fertile regrowing island.

use num_traits::{Float, FloatConst};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::empirical::{sort_children, IslandWalker, RescaledPointMeasure, ReorderedNode};
use crate::trees::OffspringLaw;
use crate::TestFunction;

fn cast<T: Float>(x: f64) -> T {
    T::from(x).expect("float conversion")
}

/// Resource scale `c` and offspring variance `σ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitParams<T> {
    pub c: T,
    pub sigma2: T,
}

impl<T: Float + FloatConst> LimitParams<T> {
    pub fn new(c: T, sigma2: T) -> Self {
        assert!(c > T::zero() && sigma2 > T::zero(), "c and σ² must be positive");
        LimitParams { c, sigma2 }
    }

    pub fn sigma(&self) -> T {
        self.sigma2.sqrt()
    }

    /// Fertile-island constant `λ = √(2/(πσ²c))`.
    pub fn lambda(&self) -> T {
        (cast::<T>(2.0) / (T::PI() * self.sigma2 * self.c)).sqrt()
    }

    /// Tail constant `λ₂ = √(2/(πσ²))` of the excursion length.
    pub fn lambda2(&self) -> T {
        (cast::<T>(2.0) / (T::PI() * self.sigma2)).sqrt()
    }

    /// `c̃ = c/σ`.
    pub fn c_tilde(&self) -> T {
        self.c / self.sigma()
    }

    /// θ is the law of `theta_scale() · W` with W Rayleigh.
    pub fn theta_scale(&self) -> T {
        self.c.sqrt() * self.sigma()
    }

    pub fn theta_mean(&self) -> T {
        self.theta_scale() * (T::PI() / cast(2.0)).sqrt()
    }

    /// Rate `a_k = k²π²/(2c̃²)` of the k-th exponential component of ν.
    pub fn nu_rate(&self, k: u32) -> T {
        let ct = self.c_tilde();
        let kf = cast::<T>(k as f64);
        kf * kf * T::PI() * T::PI() / (cast::<T>(2.0) * ct * ct)
    }

    /// `ν((t, ∞)) = (2/c) Σ_k e^{−a_k t}`.
    pub fn nu_tail(&self, t: T) -> T {
        let ct2 = self.c_tilde() * self.c_tilde();
        if t < ct2 {
            (self.theta_dual(t).0 - T::one()) / self.c
        } else {
            let mut s = T::zero();
            for k in 1..10_000 {
                let term = (-self.nu_rate(k) * t).exp();
                s = s + term;
                if term <= s * T::epsilon() {
                    break;
                }
            }
            cast::<T>(2.0) * s / self.c
        }
    }

    /// Density of ν: `(2/c) Σ_k a_k e^{−a_k t}`.
    pub fn nu_density(&self, t: T) -> T {
        let ct2 = self.c_tilde() * self.c_tilde();
        if t < ct2 {
            -self.theta_dual(t).1 / self.c
        } else {
            let mut s = T::zero();
            for k in 1..10_000 {
                let a = self.nu_rate(k);
                let term = a * (-a * t).exp();
                s = s + term;
                if term <= s * T::epsilon() {
                    break;
                }
            }
            cast::<T>(2.0) * s / self.c
        }
    }

    /// `Σ_{k∈ℤ} e^{−a_1 k² t}` and its derivative, through the Poisson
    /// summation form `c̃√(2/(πt)) Σ_m e^{−2c̃²m²/t}`, accurate for small t.
    fn theta_dual(&self, t: T) -> (T, T) {
        let ct = self.c_tilde();
        let amp = ct * (cast::<T>(2.0) / T::PI()).sqrt();
        let beta = cast::<T>(2.0) * ct * ct;
        let half = cast::<T>(0.5);
        let mut v = T::one();
        let mut d = -half / t;
        for m in 1..10_000 {
            let m2 = cast::<T>((m * m) as f64);
            let e = (-beta * m2 / t).exp();
            let two = cast::<T>(2.0);
            v = v + two * e;
            d = d + two * e * (-half / t + beta * m2 / (t * t));
            if e <= T::epsilon() * T::epsilon() {
                break;
            }
        }
        let pre = amp / t.sqrt();
        (pre * v, pre * d)
    }

    /// `∫(1 − e^{−αt}) ν(dt) = (1/c)(x coth x − 1)`, `x = √(2α)c̃`.
    pub fn nu_laplace(&self, alpha: T) -> T {
        let x = (cast::<T>(2.0) * alpha).sqrt() * self.c_tilde();
        (x_coth_x(x) - T::one()) / self.c
    }
}

fn x_coth_x<T: Float>(x: T) -> T {
    if x.abs() < cast(1e-4) {
        T::one() + x * x / cast(3.0)
    } else {
        x / x.tanh()
    }
}

fn x_over_sinh<T: Float>(x: T) -> T {
    if x.abs() < cast(1e-4) {
        T::one() - x * x / cast(6.0)
    } else {
        x / x.sinh()
    }
}

/// `E e^{−αP−βC} = (x/sinh x)² / (βc + x coth x)`, `x = √(2α) c̃`.
pub fn laplace_pc<T: Float + FloatConst>(alpha: T, beta: T, params: &LimitParams<T>) -> T {
    assert!(alpha >= T::zero() && beta >= T::zero());
    let x = (cast::<T>(2.0) * alpha).sqrt() * params.c_tilde();
    let s = x_over_sinh(x);
    s * s / (beta * params.c + x_coth_x(x))
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("fertility tree exceeded {0} nodes")]
pub struct TreeBudgetExceeded(pub usize);

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("conditioned walk exceeded {0} steps")]
pub struct RejectionBudgetExceeded(pub u64);

pub const FERTILITY_TREE_BUDGET: usize = 1_000_000;

/// Intensity measures of non-fertile islands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IntensityMeasure {
    /// `dx / (2 x^{3/2})` on `(0, ∞)`.
    Mu,
    /// `μ` restricted to `(0, c)`.
    MuC { c: f64 },
    /// Excursion lengths of excursions staying below `c̃`.
    Nu(LimitParams<f64>),
}

impl IntensityMeasure {
    pub fn tail(&self, x: f64) -> f64 {
        match *self {
            IntensityMeasure::Mu => x.powf(-0.5),
            IntensityMeasure::MuC { c } => {
                if x >= c {
                    0.0
                } else {
                    x.powf(-0.5) - c.powf(-0.5)
                }
            }
            IntensityMeasure::Nu(p) => p.nu_tail(x),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            IntensityMeasure::Mu => 0.5 * x.powf(-1.5),
            IntensityMeasure::MuC { c } => {
                if x < c {
                    0.5 * x.powf(-1.5)
                } else {
                    0.0
                }
            }
            IntensityMeasure::Nu(p) => p.nu_density(x),
        }
    }

    /// Inverse of the tail: the `x` with `tail(x) = y`, for `y > 0`.
    pub fn inverse_tail(&self, y: f64) -> f64 {
        match *self {
            IntensityMeasure::Mu => y.powi(-2),
            IntensityMeasure::MuC { c } => (y + c.powf(-0.5)).powi(-2),
            IntensityMeasure::Nu(p) => {
                // tail is decreasing; bracket then bisect in log space
                let (mut lo, mut hi) = (1e-300f64, 1.0f64);
                while p.nu_tail(hi) > y {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = (lo * hi).sqrt();
                    if p.nu_tail(mid) > y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi / lo - 1.0 < 1e-15 {
                        break;
                    }
                }
                (lo * hi).sqrt()
            }
        }
    }
}

/// The `k` largest atoms of a Poisson random measure with intensity
/// `scale · measure`, in decreasing order: `Λ⁻¹(Γ_j / scale)` for the arrival
/// times `Γ_j` of a unit-rate Poisson process.
pub fn poisson_atoms_topk<R: Rng + ?Sized>(scale: f64, measure: &IntensityMeasure, k: usize, rng: &mut R) -> Vec<f64> {
    assert!(k >= 1 && scale > 0.0);
    let mut gamma = 0.0;
    (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            gamma += e;
            measure.inverse_tail(gamma / scale)
        })
        .collect()
}

pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean < 30.0 {
        // multiplication method
        let limit = (-mean).exp();
        let mut prod: f64 = rng.gen();
        let mut k = 0;
        while prod > limit {
            prod *= rng.gen::<f64>();
            k += 1;
        }
        k
    } else {
        Poisson::new(mean).expect("finite mean").sample(rng) as u64
    }
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Every atom above `m` of a Poisson random measure with intensity
/// `scale · measure`. Atom counts are Poisson; atoms are i.i.d. from the
/// normalized restriction.
#[derive(Clone, Debug)]
pub struct AtomsAbove {
    measure: IntensityMeasure,
    m: f64,
    mass: f64,
    /// for ν: cumulative mixture weights and rates of the exponential parts
    mixture: Vec<(f64, f64)>,
}

impl AtomsAbove {
    pub fn new(measure: IntensityMeasure, m: f64) -> Self {
        assert!(m > 0.0);
        let mass = measure.tail(m);
        let mut mixture = Vec::new();
        if let IntensityMeasure::Nu(p) = measure {
            // ν restricted to (m, ∞) = Σ_k (2/c) e^{−a_k m} · law(m + Exp(a_k))
            let mut acc = 0.0;
            for k in 1..1_000_000 {
                let a = p.nu_rate(k);
                let w = 2.0 / p.c * (-a * m).exp();
                acc += w;
                mixture.push((acc, a));
                if w < acc * 1e-17 {
                    break;
                }
            }
            for e in &mut mixture {
                e.0 /= acc;
            }
        }
        AtomsAbove { measure, m, mass, mixture }
    }

    /// `measure((m, ∞))`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = uniform_open(rng);
        match self.measure {
            IntensityMeasure::Mu => self.m / (u * u),
            IntensityMeasure::MuC { c } => {
                let lo = c.powf(-0.5);
                (lo + u * (self.m.powf(-0.5) - lo)).powi(-2)
            }
            IntensityMeasure::Nu(_) => {
                let v: f64 = rng.gen();
                let i = self.mixture.partition_point(|e| e.0 < v).min(self.mixture.len() - 1);
                self.m - u.ln() / self.mixture[i].1
            }
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R, out: &mut Vec<f64>) {
        if self.mass <= 0.0 {
            return;
        }
        let n = poisson(scale * self.mass, rng);
        for _ in 0..n {
            out.push(self.draw_one(rng));
        }
    }
}

/// Fertility law of the limit fertility trees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FertilityLaw {
    /// `√c σ W` with W Rayleigh (fossil).
    Theta,
    /// Exponential with mean c (regrow).
    ExpC,
}

impl FertilityLaw {
    pub fn sample<R: Rng + ?Sized>(&self, params: &LimitParams<f64>, rng: &mut R) -> f64 {
        match self {
            FertilityLaw::Theta => sample_theta(params, rng),
            FertilityLaw::ExpC => {
                let e: f64 = Exp1.sample(rng);
                params.c * e
            }
        }
    }

    pub fn mean(&self, params: &LimitParams<f64>) -> f64 {
        match self {
            FertilityLaw::Theta => params.theta_mean(),
            FertilityLaw::ExpC => params.c,
        }
    }
}

/// Rayleigh variable with tail `e^{−x²/2}`.
pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (-2.0 * uniform_open(rng).ln()).sqrt()
}

pub fn sample_theta<R: Rng + ?Sized>(params: &LimitParams<f64>, rng: &mut R) -> f64 {
    params.theta_scale() * sample_rayleigh(rng)
}

/// Poisson variable with parameter `√(2/π) W`, W Rayleigh.
pub fn sample_cox_offspring<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    poisson((2.0 / std::f64::consts::PI).sqrt() * sample_rayleigh(rng), rng)
}

/// Sampler of the limit measure η for the fossil model.
#[derive(Clone, Debug)]
pub struct EtaFossilSampler {
    params: LimitParams<f64>,
    atoms: AtomsAbove,
    pub budget: usize,
}

impl EtaFossilSampler {
    pub fn new(params: LimitParams<f64>, support_min: f64) -> Self {
        EtaFossilSampler {
            params,
            atoms: AtomsAbove::new(IntensityMeasure::MuC { c: params.c }, support_min),
            budget: FERTILITY_TREE_BUDGET,
        }
    }

    /// Fertility tree: the root has fertility 1, a node of fertility `f` has
    /// Poisson(λf) fertile children with θ fertilities. Each non-root node
    /// contributes an atom at `c`; each node contributes PPM(`f λ₂ μ^c`) atoms.
    /// `sink` receives each node's atoms and returns false to stop early.
    fn grow<R: Rng + ?Sized>(&self, rng: &mut R, sink: &mut dyn FnMut(&[f64]) -> bool) -> Result<(), TreeBudgetExceeded> {
        let (lambda, lambda2, c) = (self.params.lambda(), self.params.lambda2(), self.params.c);
        let mut atoms = Vec::new();
        let mut stack = vec![1.0f64];
        let mut nodes = 1usize;
        while let Some(f) = stack.pop() {
            atoms.clear();
            let k = poisson(lambda * f, rng);
            nodes += k as usize;
            if nodes > self.budget {
                return Err(TreeBudgetExceeded(self.budget));
            }
            for _ in 0..k {
                stack.push(sample_theta(&self.params, rng));
                atoms.push(c);
            }
            self.atoms.sample_into(lambda2 * f, rng, &mut atoms);
            if !sink(&atoms) {
                break;
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RescaledPointMeasure, TreeBudgetExceeded> {
        let mut all = Vec::new();
        self.grow(rng, &mut |a| {
            all.extend_from_slice(a);
            true
        })?;
        Ok(RescaledPointMeasure::new(all))
    }

    /// `⟨η, f⟩` for each test function, without storing atoms. Growth stops
    /// once every integral exceeds `stop`, so large trees cost little; the
    /// returned values are then lower bounds above `stop`.
    pub fn integrals<R: Rng + ?Sized>(&self, fs: &[TestFunction], stop: f64, rng: &mut R) -> Result<Vec<f64>, TreeBudgetExceeded> {
        integrals_with(fs, stop, |sink| self.grow(rng, sink))
    }
}

fn integrals_with<G>(fs: &[TestFunction], stop: f64, grow: G) -> Result<Vec<f64>, TreeBudgetExceeded>
where
    G: FnOnce(&mut dyn FnMut(&[f64]) -> bool) -> Result<(), TreeBudgetExceeded>,
{
    let mut sums = vec![0.0; fs.len()];
    grow(&mut |atoms| {
        for (s, f) in sums.iter_mut().zip(fs) {
            *s += atoms.iter().map(|&x| f.eval(x)).sum::<f64>();
        }
        sums.iter().any(|&s| s <= stop)
    })?;
    Ok(sums)
}

pub fn sample_eta_fossil<R: Rng + ?Sized>(
    params: &LimitParams<f64>,
    support_min: f64,
    rng: &mut R,
) -> Result<RescaledPointMeasure, TreeBudgetExceeded> {
    EtaFossilSampler::new(*params, support_min).sample(rng)
}

/// One draw of the limiting (population, colonies) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcSample {
    pub p: f64,
    pub c: f64,
}

const SERIES_TERMS: u32 = 32;

/// Gamma variable with integer shape.
fn gamma_int<R: Rng + ?Sized>(shape: u64, rng: &mut R) -> f64 {
    let mut total = 0.0;
    let mut prod = 1.0f64;
    for _ in 0..shape {
        prod *= uniform_open(rng);
        if prod < 1e-250 {
            total -= prod.ln();
            prod = 1.0;
        }
    }
    total - prod.ln()
}

/// `Σ_{k>K} 1/k²`.
fn inverse_square_tail(k: u32) -> f64 {
    let k = k as f64;
    1.0 / k - 1.0 / (2.0 * k * k) + 1.0 / (6.0 * k * k * k) - 1.0 / (30.0 * k.powi(5))
}

/// Population given `C = u`: `Σ_k Gamma(2 + N_k)/a_k`, `N_k ~ Poisson(2u/c)`,
/// which is the law whose Laplace transform is
/// `(x/sinh x)² exp(−u (x coth x − 1)/c)`. Terms past the 32nd are replaced
/// by their mean.
pub fn sample_p_given_c_series<R: Rng + ?Sized>(params: &LimitParams<f64>, u: f64, rng: &mut R) -> f64 {
    let m = 2.0 * u / params.c;
    let a1 = params.nu_rate(1);
    let mut p = 0.0;
    for k in 1..=SERIES_TERMS {
        let shape = 2 + poisson(m, rng);
        p += gamma_int(shape, rng) / (a1 * (k * k) as f64);
    }
    p + (2.0 + m) / a1 * inverse_square_tail(SERIES_TERMS)
}

pub fn sample_pc_series<R: Rng + ?Sized>(params: &LimitParams<f64>, rng: &mut R) -> PcSample {
    let c = FertilityLaw::ExpC.sample(params, rng);
    PcSample {
        p: sample_p_given_c_series(params, c, rng),
        c,
    }
}

/// How `sample_pc` draws the pair.
#[derive(Clone, Debug, PartialEq)]
pub enum PcMethod {
    /// Rescaled walk of a fertile island at `N_ref`, by rejection.
    WalkApprox { n_ref: u64, law: OffspringLaw },
    /// Brownian excursion above `c̃` via two Bessel-3 paths.
    Excursion { dt: f64 },
    /// Exact: exponential C, then the series for P given C.
    Series,
}

pub fn sample_pc<R: RngCore + ?Sized>(params: &LimitParams<f64>, method: &PcMethod, rng: &mut R) -> Result<PcSample, RejectionBudgetExceeded> {
    match method {
        PcMethod::WalkApprox { n_ref, law } => {
            let mut w = IslandWalker::new(law, u64::MAX);
            sample_pc_walk(params, *n_ref, &mut w, rng)
        }
        PcMethod::Excursion { dt } => Ok(sample_pc_excursion(params, *dt, rng)),
        PcMethod::Series => Ok(sample_pc_series(params, rng)),
    }
}

/// Walk approximation: regrowing island with `r = ⌊c N⌋`, conditioned on
/// founding a colony, rescaled to `(P/N², C/N)`. Conditioning is exact for
/// binary-half steps and by rejection otherwise.
pub fn sample_pc_walk<R: RngCore + ?Sized>(
    params: &LimitParams<f64>,
    n_ref: u64,
    walker: &mut IslandWalker,
    rng: &mut R,
) -> Result<PcSample, RejectionBudgetExceeded> {
    let r = ((params.c * n_ref as f64).floor() as u64).max(1);
    let budget = 1000 * (r + 2) * (r + 2);
    let nf = n_ref as f64;
    walker.reset(budget);
    let pc = walker
        .regrow_island_fertile(r, rng)
        .map_err(|_| RejectionBudgetExceeded(budget))?;
    Ok(PcSample {
        p: pc.population as f64 / (nf * nf),
        c: pc.colonies as f64 / nf,
    })
}

/// Excursion route: maximum `M = c̃/U`; two Bessel-3 paths from 0 to M give the
/// time below `c̃` and the local time at `c̃` (band estimator of half-width
/// `√dt`), the latter scaled by `σ/2`.
pub fn sample_pc_excursion<R: Rng + ?Sized>(params: &LimitParams<f64>, dt: f64, rng: &mut R) -> PcSample {
    assert!(dt > 0.0 && dt <= 1e-4, "excursion route needs dt <= 1e-4");
    let ct = params.c_tilde();
    let max = ct / uniform_open(rng);
    let eps = dt.sqrt();
    let mut below = 0.0;
    let mut band = 0.0;
    for _ in 0..2 {
        let (b, l) = bessel3_path_to(max, ct, eps, dt, rng);
        below += b;
        band += l;
    }
    let local_time = band / (2.0 * eps);
    PcSample {
        p: below,
        c: params.sigma() / 2.0 * local_time,
    }
}

/// Runs a Bessel-3 path from 0 until it reaches `max`, returning the time
/// spent below `level` and the time spent within `eps` of it. Above
/// `level + eps` the path is not simulated: it either reaches `max` first or
/// comes back to `level + eps`, with the exact probability from the scale
/// function `−1/x`.
fn bessel3_path_to<R: Rng + ?Sized>(max: f64, level: f64, eps: f64, dt: f64, rng: &mut R) -> (f64, f64) {
    let sd = dt.sqrt();
    let top = level + eps;
    let mut w = [0.0f64; 3];
    let mut below = 0.0;
    let mut band = 0.0;
    loop {
        for x in &mut w {
            let z: f64 = StandardNormal.sample(rng);
            *x += sd * z;
        }
        let r = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if r >= max {
            return (below, band);
        }
        if r > top {
            let back = (1.0 / r - 1.0 / max) / (1.0 / top - 1.0 / max);
            if rng.gen::<f64>() >= back {
                return (below, band);
            }
            for x in &mut w {
                *x *= top / r;
            }
            continue;
        }
        if r < level {
            below += dt;
        }
        if (r - level).abs() <= eps {
            band += dt;
        }
    }
}

/// First time an Euler-discretized Bessel-3 path (norm of a 3-d Brownian
/// motion) started at 0 reaches `level`.
pub fn sample_bessel3_hit<R: Rng + ?Sized>(level: f64, dt: f64, rng: &mut R) -> f64 {
    assert!(level > 0.0 && dt > 0.0 && dt <= 1e-4 * level * level);
    let sd = dt.sqrt();
    let target = level * level;
    let mut w = [0.0f64; 3];
    let mut t = 0.0;
    loop {
        for x in &mut w {
            let z: f64 = StandardNormal.sample(rng);
            *x += sd * z;
        }
        t += dt;
        if w[0] * w[0] + w[1] * w[1] + w[2] * w[2] >= target {
            return t;
        }
    }
}

/// Pool of (P, C) draws sorted by C, used to resample P given C.
#[derive(Clone, Debug)]
pub struct PcPool {
    by_c: Vec<(f64, f64)>,
    bin_width: f64,
}

impl PcPool {
    /// Bin width `c/50`.
    pub fn new(samples: &[PcSample], c: f64) -> Self {
        assert!(!samples.is_empty());
        let mut by_c: Vec<(f64, f64)> = samples.iter().map(|s| (s.c, s.p)).collect();
        by_c.sort_by(|a, b| a.0.total_cmp(&b.0));
        PcPool { by_c, bin_width: c / 50.0 }
    }

    pub fn len(&self) -> usize {
        self.by_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_c.is_empty()
    }

    /// `(P, C)` pairs.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.by_c.iter().map(|&(c, p)| (p, c)).collect()
    }

    pub fn sample_p_given_c<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> f64 {
        let lo = self.by_c.partition_point(|e| e.0 < u - self.bin_width / 2.0);
        let hi = self.by_c.partition_point(|e| e.0 <= u + self.bin_width / 2.0);
        if hi > lo {
            self.by_c[rng.gen_range(lo..hi)].1
        } else {
            let i = lo.min(self.by_c.len() - 1);
            let j = i.saturating_sub(1);
            let k = if (self.by_c[j].0 - u).abs() <= (self.by_c[i].0 - u).abs() { j } else { i };
            self.by_c[k].1
        }
    }
}

/// Draw of the population of a fertile node given its fertility.
#[derive(Clone, Debug)]
pub enum PcConditional {
    Series,
    Pool(PcPool),
}

impl PcConditional {
    pub fn sample<R: Rng + ?Sized>(&self, params: &LimitParams<f64>, u: f64, rng: &mut R) -> f64 {
        match self {
            PcConditional::Series => sample_p_given_c_series(params, u, rng),
            PcConditional::Pool(pool) => pool.sample_p_given_c(u, rng),
        }
    }
}

/// Sampler of the limit measure η for the regrowing model.
#[derive(Clone, Debug)]
pub struct EtaRegrowSampler {
    params: LimitParams<f64>,
    atoms: AtomsAbove,
    conditional: PcConditional,
    pub budget: usize,
}

impl EtaRegrowSampler {
    pub fn new(params: LimitParams<f64>, support_min: f64, conditional: PcConditional) -> Self {
        EtaRegrowSampler {
            params,
            atoms: AtomsAbove::new(IntensityMeasure::Nu(params), support_min),
            conditional,
            budget: FERTILITY_TREE_BUDGET,
        }
    }

    /// Fertility tree: root fertility 1; a node of fertility `f` has
    /// Poisson(f/c) children with exponential fertilities of mean c. Each
    /// non-root node contributes its population drawn given its fertility;
    /// each node contributes PPM(`f ν`) atoms.
    fn grow<R: Rng + ?Sized>(&self, rng: &mut R, sink: &mut dyn FnMut(&[f64]) -> bool) -> Result<(), TreeBudgetExceeded> {
        let mut atoms = Vec::new();
        let mut stack = vec![1.0f64];
        let mut nodes = 1usize;
        while let Some(f) = stack.pop() {
            atoms.clear();
            let k = poisson(f / self.params.c, rng);
            nodes += k as usize;
            if nodes > self.budget {
                return Err(TreeBudgetExceeded(self.budget));
            }
            for _ in 0..k {
                let g = FertilityLaw::ExpC.sample(&self.params, rng);
                atoms.push(self.conditional.sample(&self.params, g, rng));
                stack.push(g);
            }
            self.atoms.sample_into(f, rng, &mut atoms);
            if !sink(&atoms) {
                break;
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RescaledPointMeasure, TreeBudgetExceeded> {
        let mut all = Vec::new();
        self.grow(rng, &mut |a| {
            all.extend_from_slice(a);
            true
        })?;
        Ok(RescaledPointMeasure::new(all))
    }

    /// As [`EtaFossilSampler::integrals`].
    pub fn integrals<R: Rng + ?Sized>(&self, fs: &[TestFunction], stop: f64, rng: &mut R) -> Result<Vec<f64>, TreeBudgetExceeded> {
        integrals_with(fs, stop, |sink| self.grow(rng, sink))
    }
}

pub fn sample_eta_regrow<R: Rng + ?Sized>(
    params: &LimitParams<f64>,
    support_min: f64,
    rng: &mut R,
    conditional: &PcConditional,
) -> Result<RescaledPointMeasure, TreeBudgetExceeded> {
    EtaRegrowSampler::new(*params, support_min, conditional.clone()).sample(rng)
}

/// Node of the tree-indexed CSBP: population and fertility.
pub type CsbpNode = ReorderedNode;

/// Depth-`depth`, width-`width` prefix of the tree-indexed CSBP started from
/// `(c, 1)`. A node of fertility `f` has Poisson(λf) fertile children
/// `(c, θ)` and non-fertile children at the atoms of PPM(`f λ₂ μ^c`);
/// children are ranked by decreasing population, then fertility.
pub fn sample_csbp_prefix<R: Rng + ?Sized>(params: &LimitParams<f64>, depth: usize, width: usize, rng: &mut R) -> CsbpNode {
    sample_csbp_prefix_with_lambda(params, params.lambda(), depth, width, rng)
}

/// [`sample_csbp_prefix`] with the fertile branching rate `lambda` given
/// explicitly.
pub fn sample_csbp_prefix_with_lambda<R: Rng + ?Sized>(
    params: &LimitParams<f64>,
    lambda: f64,
    depth: usize,
    width: usize,
    rng: &mut R,
) -> CsbpNode {
    assert!(depth >= 1 && width >= 1);
    fn grow<R: Rng + ?Sized>(node: &mut CsbpNode, p: &LimitParams<f64>, lambda: f64, depth: usize, width: usize, rng: &mut R) {
        if depth == 0 || node.fertility <= 0.0 {
            return;
        }
        let f = node.fertility;
        let k = poisson(lambda * f, rng);
        let mut kids: Vec<CsbpNode> = (0..k)
            .map(|_| CsbpNode {
                population: p.c,
                fertility: sample_theta(p, rng),
                children: Vec::new(),
            })
            .collect();
        let measure = IntensityMeasure::MuC { c: p.c };
        for a in poisson_atoms_topk(p.lambda2() * f, &measure, width, rng) {
            kids.push(CsbpNode {
                population: a,
                fertility: 0.0,
                children: Vec::new(),
            });
        }
        sort_children(&mut kids);
        kids.truncate(width);
        for kid in &mut kids {
            grow(kid, p, lambda, depth - 1, width, rng);
        }
        node.children = kids;
    }
    let mut root = CsbpNode {
        population: params.c,
        fertility: 1.0,
        children: Vec::new(),
    };
    grow(&mut root, params, lambda, depth, width, rng);
    root
}
