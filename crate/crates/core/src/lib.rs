//! Island models on critical Galton-Watson genealogies: trees and their
//! exploration walks, trees of isles under two migration rules, fast
//! walk-based forest simulation, the limiting random measures and their
//! cumulant equations.

pub mod cumulant;
pub mod empirical;
pub mod exploration;
pub mod isles;
pub mod limits;
pub mod numeric;
pub mod stats;
pub mod trees;

pub type TestFunction = cumulant::Trapezoid<f64>;
pub type Params = limits::LimitParams<f64>;
pub type Params32 = limits::LimitParams<f32>;
