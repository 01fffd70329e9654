//! Raw grayscale clips, the `MCLP` clip-pack container and PGM frames.
//!
//! Clip pack layout (little-endian):
//!
//! ```text
//! "MCLP" | version: u16 | height: u16 | width: u16 | depth: u16 | pixels
//! ```
//!
//! Pixels are `height * width * depth` bytes, frame-major, each frame row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PACK_MAGIC: &[u8; 4] = b"MCLP";
pub const PACK_VERSION: u16 = 1;
const PACK_HEADER_LEN: usize = 12;

/// An ordered sequence of equally sized 8-bit grayscale frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawClip {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<u8>>,
    pub source_id: String,
}

impl RawClip {
    pub fn new(height: usize, width: usize, frames: Vec<Vec<u8>>, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        if frames.is_empty() {
            return Err(Error::FrameDimension {
                frame: source_id,
                message: "clip has no frames".into(),
            });
        }
        if height == 0 || width == 0 {
            return Err(Error::FrameDimension {
                frame: source_id,
                message: format!("frame size {width}x{height} is empty"),
            });
        }
        for (i, f) in frames.iter().enumerate() {
            if f.len() != height * width {
                return Err(Error::FrameDimension {
                    frame: format!("{source_id}[{i}]"),
                    message: format!("{} pixels, expected {width}x{height}", f.len()),
                });
            }
        }
        Ok(RawClip {
            height,
            width,
            frames,
            source_id,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn pixel(&self, frame: usize, y: usize, x: usize) -> u8 {
        self.frames[frame][y * self.width + x]
    }
}

pub fn encode_pack(clip: &RawClip) -> Result<Vec<u8>> {
    let dims = [clip.height, clip.width, clip.frame_count()];
    let mut out = Vec::with_capacity(PACK_HEADER_LEN + clip.height * clip.width * clip.frame_count());
    out.extend_from_slice(PACK_MAGIC);
    out.extend_from_slice(&PACK_VERSION.to_le_bytes());
    for d in dims {
        let d = u16::try_from(d).map_err(|_| {
            Error::InvalidArgument(format!("clip extent {d} does not fit the pack header"))
        })?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for f in &clip.frames {
        out.extend_from_slice(f);
    }
    Ok(out)
}

pub fn decode_pack(bytes: &[u8], source_id: &str) -> Result<RawClip> {
    if bytes.len() < 4 || &bytes[..4] != PACK_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(PACK_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if bytes.len() < PACK_HEADER_LEN {
        return Err(Error::Truncated(format!("{source_id}: clip pack header")));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let version = u16_at(4);
    if version != PACK_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: PACK_VERSION,
        });
    }
    let (h, w, d) = (u16_at(6) as usize, u16_at(8) as usize, u16_at(10) as usize);
    let body = &bytes[PACK_HEADER_LEN..];
    let frame_len = h * w;
    if body.len() < frame_len * d {
        return Err(Error::Truncated(format!(
            "{source_id}: clip pack holds {} pixel bytes, header declares {}",
            body.len(),
            frame_len * d
        )));
    }
    if body.len() > frame_len * d {
        return Err(Error::malformed("clip pack", format!("{source_id}: trailing bytes after pixels")));
    }
    let frames = body.chunks(frame_len.max(1)).take(d).map(<[u8]>::to_vec).collect();
    RawClip::new(h, w, frames, source_id)
}

pub fn write_pack(clip: &RawClip, path: &Path) -> Result<()> {
    fs::write(path, encode_pack(clip)?).map_err(|e| Error::io(path, e))
}

pub fn read_pack(path: &Path) -> Result<RawClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pack(&bytes, &path.display().to_string())
}

/// An 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Parses a binary (P5) PGM with maxval at most 255.
pub fn decode_pgm(bytes: &[u8], source: &str) -> Result<GrayImage> {
    let bad = |msg: &str| Error::malformed("PGM", format!("{source}: {msg}"));
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P5") {
        return Err(bad("missing P5 signature"));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let n = width * height;
    if bytes.len() < start + n {
        return Err(Error::Truncated(format!("{source}: PGM raster")));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[start..start + n].to_vec(),
    })
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, &path.display().to_string())
}

/// PGM files of a directory in frame order: numeric order when every stem is
/// an integer, lexicographic otherwise.
pub fn frame_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    let numeric: Option<Vec<u64>> = files
        .iter()
        .map(|p| p.file_stem()?.to_str()?.parse().ok())
        .collect();
    match numeric {
        Some(keys) => {
            let mut keyed: Vec<_> = keys.into_iter().zip(files).collect();
            keyed.sort();
            files = keyed.into_iter().map(|(_, p)| p).collect();
        }
        None => files.sort(),
    }
    Ok(files)
}

/// Loads a clip from a clip-pack file or a directory of PGM frames.
pub fn load_clip(path: &Path) -> Result<RawClip> {
    if !path.is_dir() {
        return read_pack(path);
    }
    let files = frame_files(path)?;
    if files.is_empty() {
        return Err(Error::FrameDimension {
            frame: path.display().to_string(),
            message: "directory contains no PGM frames".into(),
        });
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut size = None;
    for file in &files {
        let img = read_pgm(file)?;
        match size {
            None => size = Some((img.width, img.height)),
            Some(s) if s != (img.width, img.height) => {
                return Err(Error::FrameDimension {
                    frame: file.display().to_string(),
                    message: format!(
                        "frame is {}x{}, earlier frames are {}x{}",
                        img.width, img.height, s.0, s.1
                    ),
                })
            }
            _ => {}
        }
        frames.push(img.pixels);
    }
    let (w, h) = size.expect("at least one frame");
    RawClip::new(h, w, frames, path.display().to_string())
}

/// Writes each frame as `NNN.pgm` (zero-padded to three digits or more).
pub fn write_frame_dir(clip: &RawClip, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in clip.frames.iter().enumerate() {
        let img = GrayImage {
            width: clip.width,
            height: clip.height,
            pixels: f.clone(),
        };
        write_pgm(&img, &dir.join(format!("{i:03}.pgm")))?;
    }
    Ok(())
}
