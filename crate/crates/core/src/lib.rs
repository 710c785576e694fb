//! Bid-aware generative recommendation at desk scale.
//!
//! The crate is organised along the pipeline:
//!
//! * [`semantic_index`] turns item embeddings into hierarchical semantic IDs
//!   with residual k-means and keeps the prefix trie used for decoding.
//! * [`marketplace`] synthesises sponsored inventory, bids and the logged
//!   organic/sponsored trajectories, and applies bid shocks.
//! * [`seq_model`] flattens trajectories into control-token streams and trains
//!   the back-off count scorer over them.
//! * [`decoder`] performs bid-modulated hierarchical decoding: flag sampling,
//!   prefix-aware bid aggregation, beam search and first-price pricing.
//! * [`eval`] holds the evaluation protocols, lambda sweeps, the bid-shock
//!   experiment and the invariant audits.
//!
//! [`pipeline`] wires these together for the CLI and the acceptance suite.

pub mod config;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod marketplace;
pub mod pipeline;
pub mod rng;
pub mod semantic_index;
pub mod seq_model;

pub use error::{Error, Result};
