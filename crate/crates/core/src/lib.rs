//! Emergency-response simulation and decision toolkit.
//!
//! The crate covers the full pipeline from incident data to dispatch
//! performance:
//!
//! - [`geo`] — cell grid, travel times, k-means region partitioning
//! - [`incidents`] — synthetic incident traces, dataset construction,
//!   cell clustering and ratio-preserving resampling
//! - [`forecast`] — frequency / logistic / zero-inflated-Poisson models
//!   and their evaluation
//! - [`sim`] — deterministic discrete-event dispatch simulator with
//!   communication-outage injection
//! - [`plan`] — static, centralized-MCTS, decentralized-MCTS and
//!   hierarchical (queueing + MCTS) allocation planners
//! - [`detect`] — crowdsourced report streams, cell scoring, ground-truth
//!   matching and Pareto-frontier selection

pub mod detect;
pub mod error;
pub mod forecast;
pub mod geo;
pub mod incidents;
pub mod kmeans;
pub mod plan;
pub mod sim;

pub use error::{Error, Result};

pub(crate) fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the concatenated inputs; stable across platforms.
    let mut z = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9)
        .wrapping_add(c);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
