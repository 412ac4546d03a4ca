//! Binary PGM (`P5`) and PPM (`P6`) images with 8-bit samples.

use std::path::Path;

use crate::error::{contract, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    /// Interleaved row-major samples.
    pub data: Vec<u8>,
}

fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(Error::Data("truncated PNM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the samples
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::Data("PNM header not followed by whitespace".into()));
    }
    Ok((tokens, i + 1))
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        contract!(channels == 1 || channels == 3, "images have 1 or 3 channels, got {channels}");
        contract!(
            width > 0 && height > 0 && data.len() == width * height * channels,
            "{} samples for a {width}x{height}x{channels} image",
            data.len()
        );
        Ok(Self { width, height, channels, data })
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let (tokens, offset) = header_tokens(bytes, 4)?;
        let channels = match tokens[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(Error::Data(format!("unsupported PNM magic {m:?}; expected P5 or P6"))),
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Data(format!("bad PNM header field {s:?}")));
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("empty PNM image {width}x{height}")));
        }
        if maxval != 255 {
            return Err(Error::Data(format!("only 8-bit PNM (maxval 255) is supported, got {maxval}")));
        }
        let len = width * height * channels;
        let data = bytes
            .get(offset..offset + len)
            .ok_or_else(|| Error::Data(format!("PNM data truncated: need {len} bytes")))?
            .to_vec();
        Ok(Self { width, height, channels, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pnm(&bytes).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(&self.data);
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pnm()).map_err(|e| Error::io(path, e))
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        contract!(
            x + w <= self.width && y + h <= self.height && w > 0 && h > 0,
            "crop {w}x{h}+{x}+{y} outside {}x{} image",
            self.width,
            self.height
        );
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            data.extend(&self.data[start..start + w * c]);
        }
        Ok(Self { width: w, height: h, channels: c, data })
    }

    /// `(1, 3, H, W)` tensor in `[0, 1]`; gray is replicated to three channels.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let scale = T::of(1.0 / 255.0);
        Tensor::from_fn([1, 3, self.height, self.width], |_, c, y, x| {
            let ch = if self.channels == 1 { 0 } else { c };
            T::of(self.data[(y * self.width + x) * self.channels + ch] as f64) * scale
        })
    }
}
