//! Post/response corpora: ingestion, cleaning, vocabularies and minibatches.

mod batch;
mod clean;
mod pairs;
mod vocab;

pub use batch::{encode_pairs, make_batches, Batch, EncodedPair};
pub use clean::{clean_corpus, CleanConfig, CleanReport};
pub use pairs::{load_pairs, parse_pairs, write_pairs, LoadReport, PostResponsePair};
pub use vocab::{build_vocab, Side, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};
