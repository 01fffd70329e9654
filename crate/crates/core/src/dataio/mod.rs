//! Clip ingestion, region cropping, temporal sampling, dataset manifests and
//! synthetic data.

pub mod clip;
pub mod crop;
pub mod index;
pub mod landmarks;
pub mod samples;
pub mod sampling;
pub mod synth;

pub use clip::{load_clip, read_pack, write_pack, RawClip};
pub use crop::{crop_region, CropBox};
pub use index::{make_batches, split_dataset, DatasetIndex, Entry, Subset};
pub use landmarks::{LandmarkSet, Point, Region};
pub use samples::{load_sample, load_subset, Sample};
pub use sampling::{temporal_sample, TemporalMode};
pub use synth::{synth_dataset, SynthParams};
