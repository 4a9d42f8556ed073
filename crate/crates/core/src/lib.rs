//! Strategy discovery over modeled DeFi markets.
//!
//! The crate is split along the pipeline a searcher runs every block:
//!
//! * [`market`]: assets, venues, actions, world state and the transition function.
//! * [`arb`]: the `-log(price)` market graph, Bellman-Ford-Moore negative cycle
//!   detection and the greedy extraction loop.
//! * [`paths`]: path enumeration over an action catalog with heuristic pruning.
//! * [`optimize`]: per-path revenue maximization and path ranking.
//! * [`smt`]: SMT-LIB2 export of a path's predicate system.
//! * [`replay`]: snapshot series, block state dependency analysis and replay.
//! * [`mdp`]: the fork-decision MDP and the MEV threshold search.
//!
//! Curve formulas and the one-dimensional search routines are generic over the
//! scalar type ([`num_traits::Float`]); the world state itself is stored in
//! [`Real`] (`f64`).

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amm;
pub mod arb;
pub mod catalog;
pub mod market;
pub mod mdp;
pub mod optimize;
pub mod paths;
pub mod presets;
pub mod replay;
pub mod search;
pub mod smt;
pub mod snapshot;

/// Scalar used for balances, reserves and revenues.
pub type Real = f64;

pub use catalog::Catalog;
pub use market::{
    apply_action, strategy_revenue, ActionId, ActionSpec, AssetId, MarketError, StorageKey, Strategy, Venue, VenueId,
    VenueKind, WorldState,
};
pub use mdp::{Fork, Move};

/// MDP tables over [`Real`].
pub type MdpTables = mdp::MdpTables<Real>;
/// MDP parameters over [`Real`].
pub type MdpSpec = mdp::MdpSpec<Real>;
/// Search settings over [`Real`].
pub type SearchConfig = search::SearchConfig<Real>;
