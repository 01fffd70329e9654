//! Landmark-driven region cropping with bilinear resampling.

use crate::dataio::clip::RawClip;
use crate::dataio::landmarks::{LandmarkSet, Point, Region, POINTS};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

/// Default margin added to each side of a landmark box, as a fraction of the
/// box extent on that axis.
pub const DEFAULT_MARGIN: f64 = 0.15;

/// Axis-aligned box in continuous pixel coordinates (pixel `i` spans `[i, i+1)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CropBox {
    pub fn full(width: usize, height: usize) -> Self {
        CropBox {
            x0: 0.0,
            y0: 0.0,
            x1: width as f64,
            y1: height as f64,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Bounding box of the region's landmarks, grown by `margin` times its extent
/// on each side and clamped to the frame.
pub fn region_box(
    points: &[Point; POINTS],
    region: Region,
    margin: f64,
    width: usize,
    height: usize,
) -> CropBox {
    let subset = &points[region.landmark_range()];
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in subset {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (mx, my) = ((x1 - x0) * margin, (y1 - y0) * margin);
    CropBox {
        x0: (x0 - mx).clamp(0.0, width as f64),
        y0: (y0 - my).clamp(0.0, height as f64),
        x1: (x1 + mx).clamp(0.0, width as f64),
        y1: (y1 + my).clamp(0.0, height as f64),
    }
}

/// Samples `frame` over `bx` onto an `out_hw x out_hw` grid with half-pixel
/// centers. Values are scaled to `[0, 1]`. Output is row-major.
pub fn resample_bilinear(frame: &[u8], width: usize, height: usize, bx: CropBox, out_hw: usize) -> Vec<f64> {
    let sx = bx.width() / out_hw as f64;
    let sy = bx.height() / out_hw as f64;
    let px = |x: usize, y: usize| frame[y * width + x] as f64;
    let mut out = Vec::with_capacity(out_hw * out_hw);
    for i in 0..out_hw {
        let fy = (bx.y0 + (i as f64 + 0.5) * sy - 0.5).clamp(0.0, (height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(height - 1);
        let ty = fy - y0 as f64;
        for j in 0..out_hw {
            let fx = (bx.x0 + (j as f64 + 0.5) * sx - 0.5).clamp(0.0, (width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(width - 1);
            let tx = fx - x0 as f64;
            let top = px(x0, y0) * (1.0 - tx) + px(x1, y0) * tx;
            let bottom = px(x0, y1) * (1.0 - tx) + px(x1, y1) * tx;
            out.push((top * (1.0 - ty) + bottom * ty) / 255.0);
        }
    }
    out
}

/// Crops the given frames of `clip` into a `(1, out_hw, out_hw, frames.len())`
/// tensor and returns the box used for each frame. Without landmarks only the
/// face region is available, and it is the whole frame.
pub fn crop_frames<T: Scalar>(
    clip: &RawClip,
    landmarks: Option<&LandmarkSet>,
    region: Region,
    out_hw: usize,
    margin: f64,
    frames: &[usize],
) -> Result<(Tensor<T>, Vec<CropBox>)> {
    if let Some(lm) = landmarks {
        lm.check_aligned(clip.frame_count())?;
    } else if region != Region::Face {
        return Err(Error::LandmarksRequired(format!("the {} region", region.name())));
    }
    let shape = Shape4::new(1, out_hw, out_hw, frames.len())?;
    let mut tensor = Tensor::zeros(shape);
    let mut boxes = Vec::with_capacity(frames.len());
    for (t, &f) in frames.iter().enumerate() {
        if f >= clip.frame_count() {
            return Err(Error::InvalidArgument(format!(
                "frame index {f} outside clip of {} frames",
                clip.frame_count()
            )));
        }
        let bx = match landmarks {
            Some(lm) => region_box(&lm.frames[f], region, margin, clip.width, clip.height),
            None => CropBox::full(clip.width, clip.height),
        };
        if bx.width() <= 0.0 || bx.height() <= 0.0 {
            return Err(Error::DegenerateBox { frame: f });
        }
        let values = resample_bilinear(&clip.frames[f], clip.width, clip.height, bx, out_hw);
        for y in 0..out_hw {
            for x in 0..out_hw {
                *tensor.at_mut(0, y, x, t) = T::lit(values[y * out_hw + x]);
            }
        }
        boxes.push(bx);
    }
    Ok((tensor, boxes))
}

/// Crops every frame of `clip` with the default margin.
pub fn crop_region<T: Scalar>(
    clip: &RawClip,
    landmarks: Option<&LandmarkSet>,
    region: Region,
    out_hw: usize,
) -> Result<Tensor<T>> {
    let all: Vec<usize> = (0..clip.frame_count()).collect();
    Ok(crop_frames(clip, landmarks, region, out_hw, DEFAULT_MARGIN, &all)?.0)
}

/// Maps landmarks of the given clip frames into the coordinates of a crop made
/// with `boxes`, so that they line up with the cropped tensor.
pub fn project_landmarks(
    landmarks: &LandmarkSet,
    frames: &[usize],
    boxes: &[CropBox],
    out_hw: usize,
) -> LandmarkSet {
    let frames = frames
        .iter()
        .zip(boxes)
        .map(|(&f, bx)| {
            let mut pts = landmarks.frames[f];
            for p in pts.iter_mut() {
                p.x = (p.x - bx.x0) * out_hw as f64 / bx.width();
                p.y = (p.y - bx.y0) * out_hw as f64 / bx.height();
            }
            pts
        })
        .collect();
    LandmarkSet { frames }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_clip(value: u8, w: usize, h: usize, d: usize) -> RawClip {
        RawClip::new(h, w, vec![vec![value; w * h]; d], "c").unwrap()
    }

    fn landmarks_in_box(x0: f64, y0: f64, x1: f64, y1: f64, frames: usize) -> LandmarkSet {
        let mut pts = [Point { x: (x0 + x1) / 2.0, y: (y0 + y1) / 2.0 }; POINTS];
        for (k, p) in pts.iter_mut().enumerate() {
            p.x = if k % 2 == 0 { x0 } else { x1 };
            p.y = if k % 3 == 0 { y0 } else { y1 };
        }
        LandmarkSet {
            frames: vec![pts; frames],
        }
    }

    #[test]
    fn constant_frame_gives_constant_crop() {
        let clip = constant_clip(200, 40, 30, 2);
        let lm = landmarks_in_box(5.0, 5.0, 30.0, 20.0, 2);
        let t: Tensor<f64> = crop_region(&clip, Some(&lm), Region::Eyes, 32).unwrap();
        assert_eq!(t.shape(), Shape4::new(1, 32, 32, 2).unwrap());
        assert!(t.as_slice().iter().all(|&v| (v - 200.0 / 255.0).abs() < 1e-12));
    }

    #[test]
    fn full_frame_landmarks_clamp_to_whole_frame() {
        let clip = constant_clip(9, 20, 10, 1);
        let lm = landmarks_in_box(0.0, 0.0, 20.0, 10.0, 1);
        let bx = region_box(&lm.frames[0], Region::Face, DEFAULT_MARGIN, 20, 10);
        assert_eq!(bx, CropBox::full(20, 10));
        let with: Tensor<f64> = crop_region(&clip, Some(&lm), Region::Face, 8).unwrap();
        let without: Tensor<f64> = crop_region(&clip, None, Region::Face, 8).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn margin_is_fifteen_percent_per_side() {
        let lm = landmarks_in_box(10.0, 20.0, 40.0, 30.0, 1);
        let bx = region_box(&lm.frames[0], Region::Eyes, DEFAULT_MARGIN, 100, 100);
        assert!((bx.x0 - 5.5).abs() < 1e-12 && (bx.x1 - 44.5).abs() < 1e-12);
        assert!((bx.y0 - 18.5).abs() < 1e-12 && (bx.y1 - 31.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_names_frame() {
        let clip = constant_clip(1, 10, 10, 3);
        let mut lm = landmarks_in_box(2.0, 2.0, 8.0, 8.0, 3);
        for p in lm.frames[2].iter_mut() {
            p.y = 4.0;
        }
        let err = crop_region::<f32>(&clip, Some(&lm), Region::Mouth, 8).unwrap_err();
        assert!(matches!(err, Error::DegenerateBox { frame: 2 }));
    }

    #[test]
    fn eyes_without_landmarks_rejected() {
        let clip = constant_clip(1, 10, 10, 1);
        assert!(matches!(
            crop_region::<f32>(&clip, None, Region::Eyes, 8),
            Err(Error::LandmarksRequired(_))
        ));
        assert!(crop_region::<f32>(&clip, None, Region::Face, 8).is_ok());
    }
}
