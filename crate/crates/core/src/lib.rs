pub mod bounds;
pub mod error;
pub mod euclid;
pub mod graphs;
pub mod harness;
pub mod moments;
pub mod packing;
pub mod pointproc;
pub mod rng;
pub mod scalar;
pub mod seq;
pub mod stats;

pub use error::{Error, Result};

use num_rational::BigRational;

pub type MomentProfileF64 = bounds::MomentProfile<f64>;
pub type MomentProfileF32 = bounds::MomentProfile<f32>;
pub type TypicalProfileF64 = bounds::TypicalProfile<f64>;
pub type BoundConstantsF64 = bounds::BoundConstants<f64>;
pub type TailBoundF64 = bounds::TailBoundResult<f64>;
pub type TailBoundF32 = bounds::TailBoundResult<f32>;
pub type PointF64 = euclid::Point<f64>;
pub type TourF64 = euclid::Tour<f64>;
pub type TourF32 = euclid::Tour<f32>;
pub type SpanningTreeF64 = euclid::SpanningTree<f64>;
pub type ItemDistributionF64 = packing::ItemDistribution<f64>;
pub type ExactItemDistribution = packing::ItemDistribution<BigRational>;
pub type BinTypeSetF64 = packing::BinTypeSet<f64>;
pub type ExactBinTypeSet = packing::BinTypeSet<BigRational>;
pub type LpSolutionF64 = packing::LpSolution<f64>;
pub type ExactLpSolution = packing::LpSolution<BigRational>;
