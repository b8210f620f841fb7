//! RGB image container, PPM (P6) and PNG codecs, and full-range BT.601 YUV.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{invalid, shape, LasqError, Result};
use crate::numerics::Grid2D;

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const U_SCALE: f64 = 0.492;
const V_SCALE: f64 = 0.877;

/// H x W x 3 image, row-major with interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("image dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols * 3 {
            return Err(shape(format!("image data length {} does not match {rows}x{cols}x3", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(invalid(format!("image sample {pos} = {} outside [0, 1]", data[pos])));
        }
        Ok(Self { rows, cols, data })
    }

    /// Image from a per-pixel function returning `[r, g, b]`; values are clamped into `[0, 1]`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols * 3);
        for r in 0..rows {
            for c in 0..cols {
                for v in f(r, c) {
                    assert!(v.is_finite(), "non-finite sample at ({r}, {c})");
                    data.push(v.clamp(0.0, 1.0));
                }
            }
        }
        Self { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_fn(rows, cols, |_, _| [value; 3])
    }

    /// Gray image whose three channels all equal `g`, clamped into `[0, 1]`.
    pub fn from_gray(g: &Grid2D) -> Self {
        Self::from_fn(g.rows(), g.cols(), |r, c| [g.get(r, c); 3])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> [f64; 3] {
        let i = (r * self.cols + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Sets a pixel, clamping into `[0, 1]`.
    #[inline]
    pub fn set_pixel(&mut self, r: usize, c: usize, px: [f64; 3]) {
        let i = (r * self.cols + c) * 3;
        for (k, v) in px.into_iter().enumerate() {
            self.data[i + k] = v.clamp(0.0, 1.0);
        }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Single channel as a grid (`0` = R, `1` = G, `2` = B).
    pub fn channel(&self, k: usize) -> Grid2D {
        assert!(k < 3);
        Grid2D::from_fn(self.rows, self.cols, |r, c| self.data[(r * self.cols + c) * 3 + k])
    }

    /// Assembles an image from three planes, clamping into `[0, 1]`.
    pub fn from_channels(planes: [&Grid2D; 3]) -> Result<Self> {
        let (rows, cols) = (planes[0].rows(), planes[0].cols());
        if planes.iter().any(|p| p.rows() != rows || p.cols() != cols) {
            return Err(shape("channel planes differ in size"));
        }
        Ok(Self::from_fn(rows, cols, |r, c| [planes[0].get(r, c), planes[1].get(r, c), planes[2].get(r, c)]))
    }

    /// Mean of the Y (luma) channel.
    pub fn mean_luma(&self) -> f64 {
        rgb_to_yuv(self).0.mean()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(invalid(format!("bit depth must be 8 or 16, got {other}"))),
        }
    }

    fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Loads a binary PPM (P6, 8 or 16 bit) or an RGB PNG; sample `v` maps to `v / maxval`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => LasqError::FileNotFound(path.to_path_buf()),
        _ => LasqError::Io { path: path.to_path_buf(), source: e },
    })?;
    if bytes.starts_with(b"P6") {
        decode_ppm(&bytes, path)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(&bytes, path)
    } else {
        Err(LasqError::UnsupportedFormat(format!("{}: not a binary PPM (P6) or PNG file", path.display())))
    }
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Image> {
    let malformed = |reason: &str| LasqError::MalformedHeader { path: path.to_path_buf(), reason: reason.to_string() };

    // Header: magic, width, height, maxval separated by whitespace, '#' comments allowed,
    // then exactly one whitespace byte before the raster.
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(malformed("header ends early")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a decimal number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed("maxval must be in 1..=65535"));
    }
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let (rows, cols) = (height as usize, width as usize);
    let expected = rows * cols * 3 * bytes_per_sample;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(LasqError::Truncated { path: path.to_path_buf(), expected, found: body.len() });
    }
    let scale = maxval as f64;
    let data: Vec<f64> = if bytes_per_sample == 1 {
        body[..expected].iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        body[..expected].chunks_exact(2).map(|p| (u16::from_be_bytes([p[0], p[1]]) as f64 / scale).min(1.0)).collect()
    };
    Image::new(rows, cols, data)
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<Image> {
    let malformed = |reason: String| LasqError::MalformedHeader { path: path.to_path_buf(), reason };
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| malformed(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Rgb {
        return Err(LasqError::UnsupportedFormat(format!(
            "{}: PNG colour type {:?}, only RGB is supported",
            path.display(),
            info.color_type
        )));
    }
    let depth = match info.bit_depth {
        png::BitDepth::Eight => BitDepth::Eight,
        png::BitDepth::Sixteen => BitDepth::Sixteen,
        other => return Err(LasqError::UnsupportedFormat(format!("{}: PNG bit depth {other:?}", path.display()))),
    };
    let (cols, rows) = (info.width as usize, info.height as usize);
    let size = reader.output_buffer_size().ok_or_else(|| malformed("PNG image too large".to_string()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| match e {
        png::DecodingError::IoError(_) | png::DecodingError::Format(_) => {
            LasqError::Truncated { path: path.to_path_buf(), expected: size, found: bytes.len() }
        }
        other => malformed(other.to_string()),
    })?;
    let buf = &buf[..frame.buffer_size()];
    let scale = depth.max_value() as f64;
    let data: Vec<f64> = match depth {
        BitDepth::Eight => buf.iter().map(|&b| b as f64 / scale).collect(),
        BitDepth::Sixteen => buf.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]]) as f64 / scale).collect(),
    };
    Image::new(rows, cols, data)
}

/// Quantizes `v` with `round(v * (2^d - 1))`, halves rounded away from zero.
fn quantize(v: f64, depth: BitDepth) -> u16 {
    (v.clamp(0.0, 1.0) * depth.max_value() as f64).round() as u16
}

fn encode_samples(img: &Image, depth: BitDepth) -> Vec<u8> {
    match depth {
        BitDepth::Eight => img.data.iter().map(|&v| quantize(v, depth) as u8).collect(),
        BitDepth::Sixteen => img.data.iter().flat_map(|&v| quantize(v, depth).to_be_bytes()).collect(),
    }
}

/// Writes `img` as PNG when the path ends in `.png`, otherwise as binary PPM.
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| LasqError::Io { path: path.to_path_buf(), source: e };
    let samples = encode_samples(img, depth);
    let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    if is_png {
        let mut encoder = png::Encoder::new(&mut out, img.cols as u32, img.rows as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = encoder.write_header().map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
        writer.write_image_data(&samples).map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
        writer.finish().map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
    } else {
        write!(out, "P6\n{} {}\n{}\n", img.cols, img.rows, depth.max_value()).map_err(io_err)?;
        out.write_all(&samples).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Full-range BT.601: `Y = .299R + .587G + .114B`, `U = .492(B - Y)`, `V = .877(R - Y)`.
pub fn rgb_to_yuv(img: &Image) -> (Grid2D, Grid2D, Grid2D) {
    let n = img.rows * img.cols;
    let (mut y, mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in img.data.chunks_exact(3) {
        let luma = KR * px[0] + KG * px[1] + KB * px[2];
        y.push(luma);
        u.push(U_SCALE * (px[2] - luma));
        v.push(V_SCALE * (px[0] - luma));
    }
    let grid = |d| Grid2D::new(img.rows, img.cols, d).expect("finite channel data");
    (grid(y), grid(u), grid(v))
}

/// Exact algebraic inverse of [`rgb_to_yuv`] without clamping, as `[r, g, b]` planes.
pub fn yuv_to_rgb_unclamped(y: &Grid2D, u: &Grid2D, v: &Grid2D) -> Result<[Grid2D; 3]> {
    if !y.same_shape(u) || !y.same_shape(v) {
        return Err(shape("Y, U, V planes differ in size"));
    }
    let r = y.zip_map(v, |l, cr| l + cr / V_SCALE);
    let b = y.zip_map(u, |l, cb| l + cb / U_SCALE);
    let mut g = y.clone();
    for i in 0..g.len() {
        let (l, rr, bb) = (y.data()[i], r.data()[i], b.data()[i]);
        g.data_mut()[i] = (l - KR * rr - KB * bb) / KG;
    }
    Ok([r, g, b])
}

/// Inverse colour transform followed by a clamp into `[0, 1]`.
pub fn yuv_to_rgb(y: &Grid2D, u: &Grid2D, v: &Grid2D) -> Result<Image> {
    let [r, g, b] = yuv_to_rgb_unclamped(y, u, v)?;
    Image::from_channels([&r, &g, &b])
}
