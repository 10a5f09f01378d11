//! Optimal uncoded placement for coded caching with nonuniform demands.
//!
//! K caches each store `m` files' worth of bits from a library of N files
//! requested independently under a known popularity distribution; delivery
//! runs the structured clique cover scheme, broadcasting one coded message
//! per cache subset. This crate computes the placements minimizing the
//! expected delivery rate, either under a hard storage budget or against a
//! linear storage price, and backs the results three independent ways:
//!
//! * [`placement::expected_rate_exact`] evaluates the rate formula by
//!   demand-group enumeration; [`delivery`] re-derives it by simulating the
//!   actual scheme, exhaustively or by Monte Carlo sampling.
//! * [`basecases`] enumerates the threshold placements that can be optimal
//!   and keeps their lower convex hull; [`optimizer`] answers budget and
//!   priced queries by interpolating that hull.
//! * [`oracle`] solves the same problem as an explicit linear program with
//!   a duality-gap certificate, sharing no logic with the enumeration.
//!
//! Numeric code is generic over the scalar via [`scalar::Real`] (f64 or
//! f32); the crate root exports f64 aliases for the common case.

pub mod basecases;
pub mod combin;
pub mod delivery;
pub mod demand;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod placement;
pub mod scalar;

pub use basecases::{
    build_base_set, enumerate_candidates, price_staircase, BaseCase, BaseCaseSet, Breakpoint,
    PriceStaircase, Segment,
};
pub use delivery::{
    exhaustive_expected_rate, monte_carlo_rate, scc_deliver, verify_decodability, DeliveryTrace,
    DemandVector, Message,
};
pub use demand::{make_zipf, DistributionSpec, FileGroup, PopularityDistribution};
pub use error::{Error, Result};
pub use optimizer::{optimal_rate_curve, solve_jrsm, solve_rmsc, JrsmSolution, RmscSolution};
pub use oracle::{numeric_rmsc, OracleResult};
pub use placement::{
    canonical_to_matrix, expand_subfiles, expected_rate_closed, expected_rate_exact,
    CanonicalPlacement, PlacementMatrix, SubfilePlacement,
};
pub use scalar::Real;

/// Double precision instantiations of the core types.
pub type Distribution = PopularityDistribution<f64>;
pub type Placement = PlacementMatrix<f64>;
pub type Subfiles = SubfilePlacement<f64>;
pub type BaseSet = BaseCaseSet<f64>;
pub type Staircase = PriceStaircase<f64>;
pub type Trace = DeliveryTrace<f64>;
pub type Oracle = OracleResult<f64>;
