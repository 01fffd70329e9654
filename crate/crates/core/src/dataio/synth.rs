//! Synthetic motion-blob clips with canonical landmarks.
//!
//! Each clip is a square `hw x hw` sequence of `d` frames showing a Gaussian
//! blob that travels through the frame centre in direction `2*pi*k / classes`
//! for class `k`, over a dim background with uniform noise.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::clip::{write_pack, RawClip};
use crate::dataio::index::{DatasetIndex, Entry};
use crate::dataio::landmarks::{LandmarkSet, Point, POINTS};
use crate::error::{Error, Result};

const BACKGROUND: f64 = 30.0;
const AMPLITUDE: f64 = 180.0;
const NOISE: f64 = 12.0;
/// Blob travel over the clip as a fraction of the frame side.
const TRAVEL: f64 = 0.4;
/// Random per-clip offset of the path centre, as a fraction of the frame side.
const JITTER: f64 = 0.05;

#[derive(Clone, Copy, Debug)]
pub struct SynthParams {
    pub classes: usize,
    pub per_class: usize,
    pub hw: usize,
    pub depth: usize,
    pub seed: u64,
}

/// Direction of travel for class `k`, in radians (x right, y down).
pub fn class_direction(k: usize, classes: usize) -> f64 {
    2.0 * PI * k as f64 / classes as f64
}

/// The 68 canonical landmark positions for an `hw x hw` frame. The jaw line
/// spans the frame, the eyes sit near the top and the mouth near the bottom.
pub fn canonical_landmarks(hw: usize) -> [Point; POINTS] {
    let s = hw as f64;
    let p = |x: f64, y: f64| Point { x: x * s, y: y * s };
    let mut pts = [Point::default(); POINTS];
    // jaw 0..17
    for i in 0..17 {
        let a = PI * (1.0 - i as f64 / 16.0);
        pts[i] = p(0.5 + 0.48 * a.cos(), 0.02 + 0.96 * a.sin());
    }
    // brows 17..27
    for i in 0..10 {
        let side = if i < 5 { 0.3 } else { 0.7 };
        pts[17 + i] = p(side - 0.1 + 0.05 * (i % 5) as f64, 0.18);
    }
    // nose 27..36
    for i in 0..4 {
        pts[27 + i] = p(0.5, 0.35 + 0.06 * i as f64);
    }
    for i in 0..5 {
        pts[31 + i] = p(0.44 + 0.03 * i as f64, 0.58);
    }
    // eyes 36..48
    for (e, cx) in [0.3, 0.7].into_iter().enumerate() {
        for i in 0..6 {
            let a = 2.0 * PI * i as f64 / 6.0;
            pts[36 + 6 * e + i] = p(cx + 0.1 * a.cos(), 0.28 + 0.05 * a.sin());
        }
    }
    // outer lip 48..60, inner lip 60..68
    for i in 0..12 {
        let a = 2.0 * PI * i as f64 / 12.0;
        pts[48 + i] = p(0.5 + 0.18 * a.cos(), 0.79 + 0.06 * a.sin());
    }
    for i in 0..8 {
        let a = 2.0 * PI * i as f64 / 8.0;
        pts[60 + i] = p(0.5 + 0.12 * a.cos(), 0.79 + 0.03 * a.sin());
    }
    pts
}

/// Renders one clip of class `k`.
pub fn render_clip(k: usize, params: &SynthParams, rng: &mut impl Rng, id: &str) -> Result<RawClip> {
    let SynthParams { classes, hw, depth, .. } = *params;
    let s = hw as f64;
    let sigma = s / 8.0;
    let theta = class_direction(k, classes);
    let (dx, dy) = (theta.cos(), theta.sin());
    let cx = s / 2.0 + rng.gen_range(-JITTER..=JITTER) * s;
    let cy = s / 2.0 + rng.gen_range(-JITTER..=JITTER) * s;
    let frames = (0..depth)
        .map(|t| {
            let u = if depth > 1 { t as f64 / (depth - 1) as f64 - 0.5 } else { 0.0 };
            let bx = cx + u * TRAVEL * s * dx;
            let by = cy + u * TRAVEL * s * dy;
            let mut frame = Vec::with_capacity(hw * hw);
            for y in 0..hw {
                for x in 0..hw {
                    let r2 = (x as f64 + 0.5 - bx).powi(2) + (y as f64 + 0.5 - by).powi(2);
                    let v = BACKGROUND
                        + AMPLITUDE * (-r2 / (2.0 * sigma * sigma)).exp()
                        + rng.gen_range(-NOISE..=NOISE);
                    frame.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
            frame
        })
        .collect();
    RawClip::new(hw, hw, frames, id)
}

/// Writes `classes * per_class` clips, their landmark files and a manifest
/// under `out_dir`, returning the manifest.
pub fn synth_dataset(params: SynthParams, out_dir: &Path) -> Result<DatasetIndex> {
    if params.classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {}",
            params.classes
        )));
    }
    if params.per_class == 0 || params.hw < 4 || params.depth == 0 {
        return Err(Error::InvalidArgument(
            "clips per class and depth must be positive, frame side at least 4".into(),
        ));
    }
    let clip_dir = out_dir.join("clips");
    let lm_dir = out_dir.join("landmarks");
    for d in [&clip_dir, &lm_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let landmarks = LandmarkSet {
        frames: vec![canonical_landmarks(params.hw); params.depth],
    };
    let mut entries = Vec::new();
    for k in 0..params.classes {
        for j in 0..params.per_class {
            let id = format!("clip_{k:02}_{j:03}");
            let clip = render_clip(k, &params, &mut rng, &id)?;
            let clip_rel = PathBuf::from("clips").join(format!("{id}.mclp"));
            let lm_rel = PathBuf::from("landmarks").join(format!("{id}.txt"));
            write_pack(&clip, &out_dir.join(&clip_rel))?;
            landmarks.write(&out_dir.join(&lm_rel))?;
            entries.push(Entry {
                clip: clip_rel,
                landmarks: Some(lm_rel),
                label: k,
                split: None,
            });
        }
    }
    let mut index = DatasetIndex::new((0..params.classes).map(|k| format!("class_{k}")).collect(), entries);
    index.generator_seed = Some(params.seed);
    index.base_dir = out_dir.to_path_buf();
    index.save(out_dir)?;
    Ok(index)
}
