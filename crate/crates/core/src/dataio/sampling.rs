use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a clip longer than the model depth is reduced to `d` frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalMode {
    /// Evenly spaced frames `floor(i * n / d)`.
    #[default]
    Uniform,
    /// The first `d` frames.
    Head,
}

/// Indices `floor(i * n / d)` for `i` in `0..d`.
pub fn temporal_sample(n: usize, d: usize) -> Result<Vec<usize>> {
    sample_frames(n, d, TemporalMode::Uniform)
}

pub fn sample_frames(n: usize, d: usize, mode: TemporalMode) -> Result<Vec<usize>> {
    if d == 0 {
        return Err(Error::InvalidArgument("target depth must be positive".into()));
    }
    if n < d {
        return Err(Error::TooFewFrames {
            frames: n,
            required: d,
        });
    }
    Ok(match mode {
        TemporalMode::Uniform => (0..d).map(|i| i * n / d).collect(),
        TemporalMode::Head => (0..d).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_cases() {
        assert_eq!(temporal_sample(4, 2).unwrap(), vec![0, 2]);
        assert_eq!(temporal_sample(96, 96).unwrap(), (0..96).collect::<Vec<_>>());
        assert_eq!(sample_frames(10, 3, TemporalMode::Head).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn too_few_frames() {
        assert!(matches!(
            temporal_sample(17, 18),
            Err(Error::TooFewFrames { frames: 17, required: 18 })
        ));
    }
}
