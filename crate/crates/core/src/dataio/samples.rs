//! Turning clips and manifest entries into network-ready input tensors.

use crate::dataio::clip::{load_clip, RawClip};
use crate::dataio::crop::{crop_frames, project_landmarks, DEFAULT_MARGIN};
use crate::dataio::index::{DatasetIndex, Subset};
use crate::dataio::landmarks::{LandmarkSet, Region};
use crate::dataio::sampling::{sample_frames, TemporalMode};
use crate::error::{Error, Result};
use crate::models::ArchSpec;
use crate::tensor::{Scalar, Tensor};

/// One labelled example: a cropped tensor per model input slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub inputs: Vec<Tensor<T>>,
    pub label: usize,
    pub id: String,
}

/// Regions feeding each input slot of `spec`.
pub fn spec_regions(spec: &ArchSpec) -> Vec<Region> {
    spec.input_names()
        .iter()
        .map(|n| Region::from_name(n).expect("architecture input names are regions"))
        .collect()
}

/// Samples `spec.depth` frames of `clip` and crops one tensor per input slot.
pub fn sample_from_clip<T: Scalar>(
    clip: &RawClip,
    landmarks: Option<&LandmarkSet>,
    spec: &ArchSpec,
    temporal: TemporalMode,
    label: usize,
) -> Result<Sample<T>> {
    let frames = sample_frames(clip.frame_count(), spec.depth, temporal)?;
    let inputs = spec_regions(spec)
        .into_iter()
        .map(|region| {
            crop_frames(clip, landmarks, region, spec.input_hw, DEFAULT_MARGIN, &frames).map(|(t, _)| t)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::LandmarksRequired(r) => Error::LandmarksRequired(format!("{r} of {}", clip.source_id)),
            other => other,
        })?;
    Ok(Sample {
        inputs,
        label,
        id: clip.source_id.clone(),
    })
}

/// Landmarks of the sampled frames in the coordinates of the face crop fed to
/// `spec`, one frame per temporal index of the input tensor.
pub fn face_crop_landmarks(
    clip: &RawClip,
    landmarks: &LandmarkSet,
    spec: &ArchSpec,
    temporal: TemporalMode,
) -> Result<LandmarkSet> {
    let frames = sample_frames(clip.frame_count(), spec.depth, temporal)?;
    let (_, boxes) = crop_frames::<f32>(clip, Some(landmarks), Region::Face, spec.input_hw, DEFAULT_MARGIN, &frames)?;
    Ok(project_landmarks(landmarks, &frames, &boxes, spec.input_hw))
}

/// Reads a landmark file and clamps it to the clip's frame.
pub fn read_landmarks_for(clip: &RawClip, path: &std::path::Path) -> Result<LandmarkSet> {
    let mut lm = LandmarkSet::read(path)?;
    lm.clamp_to(clip.width, clip.height);
    Ok(lm)
}

/// Loads and crops entry `i` of `index` for `spec`.
pub fn load_sample<T: Scalar>(index: &DatasetIndex, i: usize, spec: &ArchSpec) -> Result<Sample<T>> {
    let entry = &index.entries[i];
    let clip = load_clip(&index.resolve(&entry.clip))?;
    let landmarks = match &entry.landmarks {
        Some(p) => Some(read_landmarks_for(&clip, &index.resolve(p))?),
        None => None,
    };
    sample_from_clip(&clip, landmarks.as_ref(), spec, index.temporal, entry.label)
}

/// Loads every entry of a subset, in manifest order.
pub fn load_subset<T: Scalar>(index: &DatasetIndex, subset: Subset, spec: &ArchSpec) -> Result<Vec<Sample<T>>> {
    let members = index.subset(subset);
    if members.is_empty() {
        return Err(Error::EmptySubset(subset.name().into()));
    }
    members.into_iter().map(|i| load_sample(index, i, spec)).collect()
}
