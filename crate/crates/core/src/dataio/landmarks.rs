//! Per-frame 68-point facial landmarks.
//!
//! Text format: one line per frame holding 136 whitespace-separated numbers
//! `x0 y0 x1 y1 ... x67 y67` in pixel units.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

pub const POINTS: usize = 68;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    pub frames: Vec<[Point; POINTS]>,
}

/// Face regions and their landmark index ranges in the 68-point scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Face,
    Eyes,
    Mouth,
}

impl Region {
    pub fn landmark_range(self) -> Range<usize> {
        match self {
            Region::Face => 0..68,
            Region::Eyes => 36..48,
            Region::Mouth => 48..68,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Face => "face",
            Region::Eyes => "eyes",
            Region::Mouth => "mouth",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "face" => Some(Region::Face),
            "eyes" => Some(Region::Eyes),
            "mouth" => Some(Region::Mouth),
            _ => None,
        }
    }
}

impl LandmarkSet {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Clamps every coordinate into `[0, width] x [0, height]`.
    pub fn clamp_to(&mut self, width: usize, height: usize) {
        for frame in &mut self.frames {
            for p in frame.iter_mut() {
                p.x = p.x.clamp(0.0, width as f64);
                p.y = p.y.clamp(0.0, height as f64);
            }
        }
    }

    pub fn check_aligned(&self, frames: usize) -> Result<()> {
        if self.frames.len() != frames {
            return Err(Error::ShapeMismatch(format!(
                "landmarks cover {} frames, clip has {frames}",
                self.frames.len()
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for frame in &self.frames {
            let mut first = true;
            for p in frame {
                for v in [p.x, p.y] {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    write!(out, "{v}").expect("writing to a String");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut frames = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::malformed("landmarks", format!("{source}:{}: bad number `{t}`", line_no + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != 2 * POINTS {
                return Err(Error::malformed(
                    "landmarks",
                    format!("{source}:{}: {} numbers, expected 136", line_no + 1, values.len()),
                ));
            }
            let mut frame = [Point::default(); POINTS];
            for (i, p) in frame.iter_mut().enumerate() {
                *p = Point {
                    x: values[2 * i],
                    y: values[2 * i + 1],
                };
            }
            frames.push(frame);
        }
        if frames.is_empty() {
            return Err(Error::malformed("landmarks", format!("{source}: no frames")));
        }
        Ok(LandmarkSet { frames })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
