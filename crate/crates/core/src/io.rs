//! Raster interchange formats: DFR, PFM and 16-bit PNG depth.
//!
//! DFR layout (all little-endian):
//!
//! ```text
//! 0..4   magic "DFR1"
//! 4..6   version (u16, = 1)
//! 6..10  height (u32)
//! 10..14 width (u32)
//! 14..18 channels (u32)
//! 18     dtype (u8, 0 = f32)
//! 19..   payload, row-major, channel-interleaved
//! ```
//!
//! Rasters are `f64` in memory and `f32` on disk, so a DFR round trip is the
//! identity for any raster whose values are representable as `f32`.

use std::fs;
use std::io::{BufRead, Cursor, Read};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const DFR_MAGIC: &[u8; 4] = b"DFR1";
pub const DFR_VERSION: u16 = 1;
pub const DFR_DTYPE_F32: u8 = 0;
pub const DFR_HEADER_LEN: usize = 19;

/// Largest depth a 16-bit millimeter PNG can hold.
pub const PNG16_MAX_METERS: f64 = 65.535;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterFormat {
    Dfr,
    Pfm,
    Png16,
}

impl RasterFormat {
    /// Picks a format from the file extension (`.dfr`, `.pfm`, `.png`).
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("dfr") => Ok(RasterFormat::Dfr),
            Some("pfm") => Ok(RasterFormat::Pfm),
            Some("png") => Ok(RasterFormat::Png16),
            _ => Err(Error::Format(format!(
                "cannot infer raster format from {}",
                path.display()
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DfrHeader {
    pub version: u16,
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub dtype: u8,
}

impl DfrHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < DFR_HEADER_LEN {
            return Err(Error::Format(format!(
                "dfr header truncated: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[0..4] != DFR_MAGIC {
            return Err(Error::Format("bad dfr magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        let header = DfrHeader {
            version: u16::from_le_bytes([bytes[4], bytes[5]]),
            height: u32_at(6),
            width: u32_at(10),
            channels: u32_at(14),
            dtype: bytes[18],
        };
        if header.version != DFR_VERSION {
            return Err(Error::Format(format!(
                "unsupported dfr version {}",
                header.version
            )));
        }
        if header.height == 0 || header.width == 0 || header.channels == 0 {
            return Err(Error::Format(format!(
                "dfr dims must be positive, got {}x{}x{}",
                header.height, header.width, header.channels
            )));
        }
        if header.dtype != DFR_DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dfr dtype {}", header.dtype)));
        }
        Ok(header)
    }

    pub fn to_bytes(&self) -> [u8; DFR_HEADER_LEN] {
        let mut out = [0u8; DFR_HEADER_LEN];
        out[0..4].copy_from_slice(DFR_MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..10].copy_from_slice(&self.height.to_le_bytes());
        out[10..14].copy_from_slice(&self.width.to_le_bytes());
        out[14..18].copy_from_slice(&self.channels.to_le_bytes());
        out[18] = self.dtype;
        out
    }

    fn value_count(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Range(format!("{what} {v} exceeds u32")))
}

fn to_f32_checked(v: f64) -> Result<f32> {
    let f = v as f32;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Range(format!("value {v} overflows f32")))
    }
}

pub fn encode_dfr(raster: &Raster) -> Result<Vec<u8>> {
    let header = DfrHeader {
        version: DFR_VERSION,
        height: dim_u32(raster.height(), "height")?,
        width: dim_u32(raster.width(), "width")?,
        channels: dim_u32(raster.channels(), "channels")?,
        dtype: DFR_DTYPE_F32,
    };
    let mut out = Vec::with_capacity(DFR_HEADER_LEN + raster.data().len() * 4);
    out.extend_from_slice(&header.to_bytes());
    for &v in raster.data() {
        out.extend_from_slice(&to_f32_checked(v)?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dfr(bytes: &[u8]) -> Result<Raster> {
    let header = DfrHeader::parse(bytes)?;
    let count = header.value_count();
    let payload = &bytes[DFR_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "dfr payload is {} bytes, header implies {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Raster::new(
        header.height as usize,
        header.width as usize,
        header.channels as usize,
        data,
    )
}

/// Encodes as little-endian PFM (`Pf` for one channel, `PF` for three).
pub fn encode_pfm(raster: &Raster) -> Result<Vec<u8>> {
    let tag = match raster.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Format(format!("pfm supports 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", raster.width(), raster.height()).into_bytes();
    let row_len = raster.width() * raster.channels();
    // PFM stores scanlines bottom-up.
    for row in (0..raster.height()).rev() {
        for &v in &raster.data()[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&to_f32_checked(v)?.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_token_line(reader: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::Format(format!("pfm header: {e}")))?;
        if n == 0 {
            return Err(Error::Format("pfm header truncated".into()));
        }
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            return Ok(trimmed.to_string());
        }
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Raster> {
    let mut reader = Cursor::new(bytes);
    let channels = match read_token_line(&mut reader)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Format(format!("bad pfm magic {other:?}"))),
    };
    let dims = read_token_line(&mut reader)?;
    let mut it = dims.split_whitespace().map(|t| t.parse::<usize>());
    let (width, height) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) if w > 0 && h > 0 => (w, h),
        _ => return Err(Error::Format(format!("bad pfm dimensions {dims:?}"))),
    };
    let scale_line = read_token_line(&mut reader)?;
    let scale: f64 = scale_line
        .parse()
        .map_err(|_| Error::Format(format!("bad pfm scale {scale_line:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad pfm scale {scale}")));
    }
    let little_endian = scale < 0.0;

    let row_len = width * channels;
    let mut payload = vec![0u8; height * row_len * 4];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::Format("pfm payload truncated".into()))?;

    let mut data = vec![0.0; height * row_len];
    for (file_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - file_row;
        for (i, c) in chunk.chunks_exact(4).enumerate() {
            let b = [c[0], c[1], c[2], c[3]];
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            data[row * row_len + i] = v as f64;
        }
    }
    Raster::new(height, width, channels, data)
}

/// Encodes single-channel depth in meters as 16-bit grayscale millimeters.
pub fn encode_png16(raster: &Raster) -> Result<Vec<u8>> {
    raster.ensure_single_channel("png16 raster")?;
    let mut samples = Vec::with_capacity(raster.data().len() * 2);
    for &v in raster.data() {
        if !(0.0..=PNG16_MAX_METERS).contains(&v) {
            return Err(Error::Range(format!(
                "depth {v} m outside png16 range [0, {PNG16_MAX_METERS}]"
            )));
        }
        let mm = (v * 1000.0).round() as u16;
        samples.extend_from_slice(&mm.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(
            &mut out,
            dim_u32(raster.width(), "width")?,
            dim_u32(raster.height(), "height")?,
        );
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        writer
            .write_image_data(&samples)
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        writer
            .finish()
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png16(bytes: &[u8]) -> Result<Raster> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png decode: {e}")))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Sixteen {
        return Err(Error::Format(format!(
            "expected 16-bit grayscale png, got {color:?}/{depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png decode: {e}")))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let data = buf[..info.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0)
        .collect();
    Raster::new(height, width, 1, data)
}

/// Decodes an 8- or 16-bit PNG photo into 3 channels scaled to `[0, 1]`.
/// Gray is replicated, alpha dropped.
pub fn decode_png_image(bytes: &[u8]) -> Result<Raster> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("png decode: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("png decode: {e}")))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let samples: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf[..info.buffer_size()].iter().map(|&b| b as f64 / 255.0).collect(),
        other => return Err(Error::Format(format!("unsupported png bit depth {other:?}"))),
    };
    let per_pixel = info.color_type.samples();
    let mut data = Vec::with_capacity(width * height * 3);
    for px in samples.chunks_exact(per_pixel) {
        match info.color_type {
            png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => data.extend([px[0]; 3]),
            png::ColorType::Rgb | png::ColorType::Rgba => data.extend(&px[..3]),
            other => return Err(Error::Format(format!("unsupported png color type {other:?}"))),
        }
    }
    Raster::new(height, width, 3, data)
}

/// Loads a color image: PNG photos via [`decode_png_image`], anything else as
/// a raster.
pub fn load_image(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    match RasterFormat::from_path(path)? {
        RasterFormat::Png16 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_png_image(&bytes)
        }
        format => load_raster(path, format),
    }
}

pub(crate) fn encode_rgb8_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, dim_u32(width, "width")?, dim_u32(height, "height")?);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        writer
            .write_image_data(rgb)
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        writer
            .finish()
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub fn load_raster(path: impl AsRef<Path>, format: RasterFormat) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        RasterFormat::Dfr => decode_dfr(&bytes),
        RasterFormat::Pfm => decode_pfm(&bytes),
        RasterFormat::Png16 => decode_png16(&bytes),
    }
}

/// Loads a raster, inferring the format from the extension.
pub fn load_raster_auto(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    load_raster(path, RasterFormat::from_path(path)?)
}

pub fn write_raster(raster: &Raster, path: impl AsRef<Path>, format: RasterFormat) -> Result<()> {
    let bytes = match format {
        RasterFormat::Dfr => encode_dfr(raster)?,
        RasterFormat::Pfm => encode_pfm(raster)?,
        RasterFormat::Png16 => encode_png16(raster)?,
    };
    write_atomic(path, &bytes)
}

pub fn write_raster_auto(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_raster(raster, path, RasterFormat::from_path(path)?)
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::Value(format!("not a file path: {}", path.display())))?
        .to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
