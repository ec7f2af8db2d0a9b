//! The response-generation network: embeddings, GRU encoder(s), the three
//! context schemes, the decoder step and checkpoints.

mod checkpoint;
mod forward;
mod gru;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_with_precision, save_checkpoint,
    Precision,
};
pub use forward::{
    attention_weights, attention_weights_padded, context, decoder_init, decoder_step, encode, encode_post,
    sequence_log_likelihood, DecoderState, EncodedPost, StepOutput,
};
pub use gru::gru_step;
pub use params::{is_vector_tensor, AttentionParams, Dims, GruParams, ModelParams, Scheme};

pub(crate) use forward::{encode_traced, step_traced, EncoderTrace, StepTrace};
pub(crate) use gru::{gru_backward, GruCache};
