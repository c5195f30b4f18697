//! N-best ASR hypothesis models for spoken language understanding.

pub mod checkpoint;
pub mod codec;
pub mod corpus;
pub mod dc;
pub mod edit;
pub mod eval;
pub mod icner;
pub mod nn;
pub mod pipeline;
pub(crate) mod seed;
pub mod tensor;
pub mod train;
