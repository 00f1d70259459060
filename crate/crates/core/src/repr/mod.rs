//! Item (action) and user (state) representations.

pub mod action;
pub mod encoder;
pub mod state;

pub use action::{build_action, ActionDims, ActionVector, Catalog, CatalogItem, RawItem};
pub use encoder::{encode_short_term, EncoderDims, EncoderTrace, GruEncoder};
pub use state::{
    build_long_term, build_state, context_vector, history_window, interaction_input, long_term_dim,
    Interaction, LongTermStats, Observation, StateDims, StateVector,
};
