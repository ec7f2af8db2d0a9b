//! Neural response generation for short-text conversation: a GRU
//! encoder-decoder with global, local (attention) and hybrid context
//! schemes, hand-derived training, beam-search decoding and the
//! annotation statistics used to evaluate generated responses.

pub mod corpus;
pub mod decoding;
pub mod evalstats;
pub mod error;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{NrmError, Result};
