use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::GrayImage;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> ImageIoError {
    ImageIoError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads an 8- or 16-bit grayscale binary PGM (`P5`) or grayscale PNG and
/// rescales intensities to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageIoError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P3") {
        Err(format_err(path, "color PPM images are not supported"))
    } else {
        Err(format_err(path, "not a binary PGM (P5) or PNG file"))
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<GrayImage, ImageIoError> {
    // header: magic, width, height, maxval separated by whitespace with
    // optional '#' comments, then exactly one whitespace byte before data
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "malformed PGM header"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(format_err(path, "malformed PGM header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("PGM maxval {maxval} out of range")));
    }
    let wide = maxval > 255;
    let n = width * height;
    let need = if wide { 2 * n } else { n };
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(format_err(
            path,
            format!("PGM raster truncated: need {need} bytes, found {}", raster.len()),
        ));
    }
    let scale = maxval as f64;
    let data: Vec<f64> = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect()
    } else {
        raster[..n].iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    };
    GrayImage::new(width, height, data).map_err(|e| format_err(path, e.to_string()))
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<GrayImage, ImageIoError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let color = reader.info().color_type;
    if !matches!(color, png::ColorType::Grayscale) {
        return Err(format_err(
            path,
            format!("PNG color type {color:?} is not single-channel grayscale"),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let data: Vec<f64> = match frame.bit_depth {
        png::BitDepth::Sixteen => buf[..frame.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf[..frame.buffer_size()]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect(),
        other => {
            return Err(format_err(path, format!("unsupported PNG bit depth {other:?}")));
        }
    };
    GrayImage::new(width, height, data).map_err(|e| format_err(path, e.to_string()))
}

/// Quantizes to 8 bits, the single byte format written by the pipeline.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// 16-bit PGM of integer labels (big-endian samples, maxval 65535); labels
/// above 65535 saturate.
pub fn encode_label_pgm(width: usize, height: usize, labels: &[u32]) -> Vec<u8> {
    assert_eq!(labels.len(), width * height, "label count differs from image size");
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &l in labels {
        out.extend_from_slice(&(l.min(65535) as u16).to_be_bytes());
    }
    out
}

/// Writes an 8-bit binary PGM.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_pgm(img))
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}
