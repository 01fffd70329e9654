//! Input-gradient saliency volumes, percentile binarization, PGM export and
//! per-region energy.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::clip::{read_pgm, write_pgm, GrayImage};
use crate::dataio::crop::region_box;
use crate::dataio::landmarks::{LandmarkSet, Region};
use crate::dataio::samples::Sample;
use crate::error::{Error, Result};
use crate::nn::{Mode, NetworkGraph};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_PERCENTILE: f64 = 90.0;

/// How signed gradients become saliency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaliencySign {
    #[default]
    Abs,
    Relu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyVolume {
    /// Same shape as the input slot it belongs to.
    pub values: Tensor<f64>,
    pub input: String,
    pub target_class: usize,
    pub source_id: String,
}

/// Signed gradient of the pre-softmax score of `target` with respect to each
/// input slot, in infer mode.
pub fn logit_input_gradient<T: Scalar>(
    g: &NetworkGraph<T>,
    inputs: &[&Tensor<T>],
    target: usize,
) -> Result<Vec<Tensor<T>>> {
    let k = g.num_classes();
    if target >= k {
        return Err(Error::ClassOutOfRange {
            class: target,
            num_classes: k,
        });
    }
    let pass = g.forward(inputs, Mode::Infer)?;
    let mut seed = vec![T::zero(); k];
    seed[target] = T::one();
    let grads = g.propagate(&pass.cache, &seed, false, true)?;
    grads
        .inputs
        .into_iter()
        .zip(inputs)
        .map(|(gr, x)| Ok(gr.unwrap_or_else(|| Tensor::zeros(x.shape()))))
        .collect()
}

/// One saliency volume per input slot of `g`.
pub fn input_gradient<T: Scalar>(
    g: &NetworkGraph<T>,
    sample: &Sample<T>,
    target: usize,
    sign: SaliencySign,
) -> Result<Vec<SaliencyVolume>> {
    let inputs: Vec<&Tensor<T>> = sample.inputs.iter().collect();
    let grads = logit_input_gradient(g, &inputs, target)?;
    let names = g.input_names();
    Ok(grads
        .into_iter()
        .zip(names)
        .map(|(gr, name)| SaliencyVolume {
            values: gr.cast::<f64>().map(|v| match sign {
                SaliencySign::Abs => v.abs(),
                SaliencySign::Relu => v.max(0.0),
            }),
            input: name.to_string(),
            target_class: target,
            source_id: sample.id.clone(),
        })
        .collect())
}

/// Linearly interpolated `p`-th percentile of `values` (not necessarily sorted).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

fn frame_values(vol: &Tensor<f64>, t: usize) -> Vec<f64> {
    let s = vol.shape();
    let mut out = Vec::with_capacity(s.channels * s.height * s.width);
    for c in 0..s.channels {
        for y in 0..s.height {
            for x in 0..s.width {
                out.push(vol.at(c, y, x, t));
            }
        }
    }
    out
}

/// Per temporal frame, 1 where the value is strictly above that frame's
/// `p`-th percentile and 0 elsewhere.
pub fn binarize(vol: &Tensor<f64>, p: f64) -> Result<Tensor<f64>> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside (0, 100)")));
    }
    let s = vol.shape();
    let mut out = Tensor::zeros(s);
    for t in 0..s.depth {
        let threshold = percentile(&frame_values(vol, t), p);
        for c in 0..s.channels {
            for y in 0..s.height {
                for x in 0..s.width {
                    if vol.at(c, y, x, t) > threshold {
                        *out.at_mut(c, y, x, t) = 1.0;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:04}.pgm")
}

/// Writes one PGM per temporal index. Binary volumes map to {0, 255};
/// continuous ones are min-max scaled per frame (constant frames become 0).
pub fn export_frames(vol: &Tensor<f64>, binary: bool, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let s = vol.shape();
    if s.channels != 1 {
        return Err(Error::InvalidShape(format!("saliency export needs 1 channel, got {}", s.channels)));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(s.depth);
    for t in 0..s.depth {
        let values = frame_values(vol, t);
        let pixels = if binary {
            values.iter().map(|&v| if v > 0.0 { 255 } else { 0 }).collect()
        } else {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            values
                .iter()
                .map(|&v| if hi > lo { (255.0 * (v - lo) / (hi - lo)).round() as u8 } else { 0 })
                .collect()
        };
        let path = out_dir.join(frame_file_name(t));
        write_pgm(
            &GrayImage {
                width: s.width,
                height: s.height,
                pixels,
            },
            &path,
        )?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads `frame_0000.pgm ...` back into a `(1, h, w, frames)` volume with
/// values `pixel / 255`.
pub fn import_frames(dir: &Path, frames: usize) -> Result<Tensor<f64>> {
    let images = (0..frames)
        .map(|t| read_pgm(&dir.join(frame_file_name(t))))
        .collect::<Result<Vec<_>>>()?;
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("no frames requested".into()))?;
    let (w, h) = (first.width, first.height);
    let mut vol = Tensor::zeros(crate::tensor::Shape4::new(1, h, w, frames)?);
    for (t, img) in images.iter().enumerate() {
        if (img.width, img.height) != (w, h) {
            return Err(Error::FrameDimension {
                frame: frame_file_name(t),
                message: format!("{}x{}, expected {w}x{h}", img.width, img.height),
            });
        }
        for y in 0..h {
            for x in 0..w {
                *vol.at_mut(0, y, x, t) = img.pixels[y * w + x] as f64 / 255.0;
            }
        }
    }
    Ok(vol)
}

/// Share of saliency mass falling in the eye boxes, the mouth boxes and
/// everywhere else.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionEnergy {
    pub eyes: f64,
    pub mouth: f64,
    pub other: f64,
}

/// Splits the mass of `vol` by the landmark boxes of each frame (no margin).
/// `landmarks` must be in the volume's pixel coordinates with one frame per
/// temporal index. A pixel belongs to a box when its centre does; eyes take
/// priority over mouth. A volume with no mass yields all zeros.
pub fn region_energy_report(vol: &Tensor<f64>, landmarks: &LandmarkSet) -> Result<RegionEnergy> {
    let s = vol.shape();
    landmarks.check_aligned(s.depth)?;
    let (mut eyes, mut mouth, mut other) = (0.0, 0.0, 0.0);
    for t in 0..s.depth {
        let pts = &landmarks.frames[t];
        let eye_box = region_box(pts, Region::Eyes, 0.0, s.width, s.height);
        let mouth_box = region_box(pts, Region::Mouth, 0.0, s.width, s.height);
        for c in 0..s.channels {
            for y in 0..s.height {
                for x in 0..s.width {
                    let v = vol.at(c, y, x, t);
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    if eye_box.contains(cx, cy) {
                        eyes += v;
                    } else if mouth_box.contains(cx, cy) {
                        mouth += v;
                    } else {
                        other += v;
                    }
                }
            }
        }
    }
    let total = eyes + mouth + other;
    if total <= 0.0 {
        return Ok(RegionEnergy::default());
    }
    Ok(RegionEnergy {
        eyes: eyes / total,
        mouth: mouth / total,
        other: other / total,
    })
}

/// Sidecar written next to exported saliency frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencySidecar {
    pub source_id: String,
    pub target_class: usize,
    pub class_name: String,
    pub percentile: f64,
    pub sign: SaliencySign,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_energy: Option<RegionEnergy>,
}
