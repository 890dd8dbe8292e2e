//! Server-side prototype processing.

mod aggregate;
mod fusion;
mod gpg;
mod query;

pub use aggregate::naive_global_aggregate;
pub use fusion::{client_similarity, match_upload_norms, personalized_fusion, signature};
pub use gpg::{batch_loss, contrastive_loss, train_gpg, GpgGrads, GpgState};
pub use query::{adaptive_margin, build_query_sets, class_centers, cosine_similarity, QueryBatch};
