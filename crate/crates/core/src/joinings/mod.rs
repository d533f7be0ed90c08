//! Self-joinings as empirical measures: sampling, KR distance, disintegration,
//! the coefficient approximation along towers and the barycentre recursion.

pub mod bary;
pub mod closure;
pub mod fibers;
pub mod kr;
pub mod measure;

pub use bary::{bary_recursion, BaryReport, BaryState};
pub use closure::{weak_closure_check, ClosureReport};
pub use fibers::{
    apply_asigma, approx_by_powers, disintegrate, fiber_diameter_stats, ApproxReport,
    CoefficientVector, Disintegration, FiberStats, TestFunction,
};
pub use kr::{kr_bounds, kr_distance, transport_exact, KrEstimate, KrOptions};
pub use measure::{
    empirical_orbit_joining, sample_power_joining, sample_power_mixture, sample_product,
    sampled_orbit_joining, stratified_points, Atom, DiscreteMeasure2D,
};
