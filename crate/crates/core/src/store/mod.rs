//! On-disk formats and in-memory containers for embeddings, tags, captions
//! and dataset splits.

mod matrix;
mod records;
mod split;

pub use matrix::{
    decode_matrix, read_matrix_payload, sidecar_ids_path, write_matrix_payload, EmbeddingMatrix, MAGIC,
};
pub use records::{
    dedup_stable, load_captions, load_tags, normalize_phrase, parse_tag_line, write_jsonl, CaptionSet,
    CaptionSource, TagRecord,
};
pub use split::{make_split, DatasetSplit};
