//! Binary NetPBM: P6 (RGB) and P5 (gray), maxval 255.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB) interleaved channels.
    pub channels: usize,
    pub data: Vec<u8>,
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        format: "netpbm",
        reason: reason.into(),
    }
}

/// Parses the header; returns (magic, width, height, maxval, payload offset).
fn header(bytes: &[u8]) -> Result<(&str, usize, usize, usize, usize)> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(malformed("missing P magic"));
    }
    let magic = std::str::from_utf8(&bytes[..2]).map_err(|_| malformed("bad magic"))?;
    match magic {
        "P5" | "P6" => {}
        "P1" | "P2" | "P3" | "P4" | "P7" => return Err(Error::UnsupportedFormat(magic.into())),
        _ => return Err(malformed(format!("unknown magic {magic:?}"))),
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Truncated("netpbm header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("digits")
            .parse()
            .map_err(|_| malformed("number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing whitespace after maxval")),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(malformed("zero dimension"));
    }
    if maxval != 255 {
        return Err(malformed(format!("maxval {maxval} (only 255 supported)")));
    }
    Ok((magic, w, h, maxval, pos))
}

pub fn decode(bytes: &[u8]) -> Result<RawImage> {
    let (magic, width, height, _, offset) = header(bytes)?;
    let channels = if magic == "P6" { 3 } else { 1 };
    let need = width * height * channels;
    let payload = &bytes[offset..];
    if payload.len() < need {
        return Err(Error::Truncated("netpbm"));
    }
    if payload.len() > need {
        return Err(malformed("trailing bytes after pixel data"));
    }
    Ok(RawImage {
        width,
        height,
        channels,
        data: payload.to_vec(),
    })
}

pub fn encode(img: &RawImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Planar RGB in [0,1] from a P6 file.
pub fn decode_rgb(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let img = decode(bytes)?;
    if img.channels != 3 {
        return Err(malformed("expected an RGB (P6) image"));
    }
    let hw = img.width * img.height;
    let mut planar = vec![0.0; 3 * hw];
    for (i, px) in img.data.chunks(3).enumerate() {
        for c in 0..3 {
            planar[c * hw + i] = f32::from(px[c]) / 255.0;
        }
    }
    Ok((img.height, img.width, planar))
}

/// Quantizes planar RGB in [0,1] to a P6 file.
pub fn encode_rgb(height: usize, width: usize, planar: &[f32]) -> Vec<u8> {
    let hw = height * width;
    let mut data = Vec::with_capacity(3 * hw);
    for i in 0..hw {
        for c in 0..3 {
            data.push(quantize(planar[c * hw + i]));
        }
    }
    encode(&RawImage {
        width,
        height,
        channels: 3,
        data,
    })
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary mask {0,1} from a P5 file holding only 0 and 255.
pub fn decode_mask(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let img = decode(bytes)?;
    if img.channels != 1 {
        return Err(malformed("expected a gray (P5) mask"));
    }
    let mask = img
        .data
        .iter()
        .map(|&v| match v {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(Error::NonBinaryMask(other)),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((img.height, img.width, mask))
}

pub fn encode_mask(height: usize, width: usize, mask: &[u8]) -> Vec<u8> {
    encode_gray(
        height,
        width,
        &mask
            .iter()
            .map(|&m| if m > 0 { 255 } else { 0 })
            .collect::<Vec<_>>(),
    )
}

pub fn encode_gray(height: usize, width: usize, data: &[u8]) -> Vec<u8> {
    encode(&RawImage {
        width,
        height,
        channels: 1,
        data: data.to_vec(),
    })
}
