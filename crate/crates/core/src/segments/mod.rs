//! Segment pooling over frame matrices, context-independent word vectors,
//! and seeded sample-set drawing.

mod pooling;
mod sampling;

pub use pooling::{
    build_pooled_set, frames_for_interval, labels_path, pool_segment, pooled_rows, read_pooled_set,
    type_embeddings, write_pooled_set, PoolStrategy, PooledSet, SegmentSource,
};
pub use sampling::{
    derive_seed, draw_index_sets, draw_sample_sets, filter_word_records, keep_top_labels, sizes, Balancing,
    IndexSets, SamplePlan, SampleSets,
};
