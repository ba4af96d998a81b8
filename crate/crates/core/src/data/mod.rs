//! Datasets, non-IID partitioning and ingestion.

mod dataset;
mod idx;
mod partition;
mod profile;
mod synthetic;

pub use dataset::{merge_synthetic, sample_round_subset, Dataset};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx};
pub use partition::{dirichlet_partition, Partition, PartitionSpec};
pub use profile::{class_profile, negotiate_n, ClassProfile};
pub use synthetic::{make_synthetic_source, make_synthetic_split, SyntheticSpec};
