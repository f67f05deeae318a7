//! Appearance embeddings, per-track galleries and the triplet objective.

mod embedding;
mod provider;
mod triplet;

pub use embedding::{embedding_distance, gallery_distance, Embedding, FeatureGallery};
pub use provider::{
    read_embedding_file, write_embedding_file, EmbeddingProvider, EmbeddingRecord,
    FileEmbeddings, OracleEmbeddings, MATCH_TOLERANCE_PX, REID_MAGIC, REID_VERSION,
};
pub use triplet::{triplet_loss, Triplet, TripletGradient, TripletLoss};
