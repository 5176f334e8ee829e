//! Binary PGM (`P5`, maxval 255).

use std::path::Path;

use super::raster::ImageGray;
use super::DatagenError;

pub fn encode(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

fn format_err(path: &str, msg: impl Into<String>) -> DatagenError {
    DatagenError::Format {
        path: path.to_string(),
        msg: msg.into(),
    }
}

/// Parses a `P5` image with 8-bit samples; `#` comments in the header are
/// skipped. Values are scaled to `[0, 1]` by the header's maxval.
pub fn decode(bytes: &[u8], origin: &str) -> Result<ImageGray, DatagenError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(origin, "truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| format_err(origin, "non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(format_err(origin, format!("unsupported magic `{}`", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format_err(origin, format!("bad header field `{s}`")));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(format_err(origin, format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != w * h {
        return Err(format_err(origin, format!("expected {} samples, found {}", w * h, data.len())));
    }
    let pixels = data.iter().map(|&b| (b as f64 / maxval as f64).min(1.0)).collect();
    Ok(ImageGray { height: h, width: w, pixels })
}

pub fn write(path: &Path, img: &ImageGray) -> Result<(), DatagenError> {
    std::fs::write(path, encode(img))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<ImageGray, DatagenError> {
    let bytes = std::fs::read(path)?;
    decode(&bytes, &path.display().to_string())
}
