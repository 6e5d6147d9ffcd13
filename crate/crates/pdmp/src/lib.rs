//! Diffeomorphic sampling for sampling-based motion planners.
//!
//! The crate morphs the sampling distribution of RRT-family planners through
//! diffeomorphisms obtained by integrating the negative gradient flow of a
//! cost field, typically a learned occupancy classifier. Background producer
//! threads draw uniform prior samples, push them through the flow in batches,
//! and feed a bounded concurrent bucket; the planner thread pops samples
//! non-blockingly and falls back to the prior when the bucket is empty, so
//! planning never stalls on the sampler.
//!
//! Modules follow the pipeline:
//!
//! - [`geometry`]: workspaces, exact obstacle geometry, the ground-truth
//!   collision oracle, and synthetic occupancy datasets.
//! - [`net`]: fully-connected occupancy classifier with batched forward
//!   passes and analytic input gradients.
//! - [`kinematics`]: planar serial manipulators, body-point Jacobians, and
//!   the pullback of task-space gradients into configuration space.
//! - [`flow`]: the diffeomorphism and its approximate inverse via explicit
//!   Euler integration of the (negative) gradient flow.
//! - [`sampler`]: producer/consumer machinery around a bounded concurrent
//!   sample bucket.
//! - [`planner`]: RRT* and RRT-Connect consuming any sample source, plus the
//!   exact collision checks and the feasibility census.
//! - [`bench`]: the benchmark harness and its CSV/SVG report emitters.

pub mod bench;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod kdtree;
pub mod kinematics;
pub mod net;
pub mod planner;
pub mod sampler;
pub mod svg;

pub use error::{Error, Result};

/// Splits a root seed into independent stream seeds, so that every consumer
/// of randomness (producers, planner, bench cells) gets its own deterministic
/// stream. Uses the SplitMix64 finalizer over the combined words.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut z = root ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
