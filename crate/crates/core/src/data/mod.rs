//! Domain types, the binary embedding container and dataset assembly.

mod container;
mod dataset;
mod labels;

pub use container::{
    decode_embeddings, encode_embeddings, load_embeddings, save_embeddings, EmbeddingSet, MAGIC,
};
pub use dataset::{join, JoinReport, TaskDataset};
pub use labels::{LabelEntry, LabelTable, SplitTag};
