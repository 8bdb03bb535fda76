//! Lossless raster codecs (binary PPM/PGM, uncompressed 24-bit BMP),
//! payload padding, and the `VPAES` ciphertext container.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::cipher::BLOCK_LEN;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("malformed image at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid image buffer: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a VPAES container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("container header truncated: {got} of {HEADER_LEN} bytes")]
    TruncatedHeader { got: usize },
    #[error("container payload truncated: expected {expected} bytes, found {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("container has {0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("channel count {0} is not 1 or 3")]
    BadChannels(u8),
    #[error("container holds no pixels")]
    Empty,
    #[error("payload length {0} is not a multiple of 16")]
    Unaligned(usize),
    #[error("padding length {pad_len} exceeds payload length {len}")]
    PadTooLarge { pad_len: usize, len: usize },
    #[error("payload length {got} does not match width*height*channels + pad_len = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A decoded raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Invalid(format!("channel count {channels} is not 1 or 3")));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| ImageError::Invalid("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(ImageError::Invalid(format!(
                "{} data bytes for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Sample of channel `c` at column `x`, row `y`.
    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All samples of channel `c` in raster order.
    pub fn channel_plane(&self, c: usize) -> Vec<u8> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ImageError {
        ImageError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a decimal header field"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("header field out of range"))
    }
}

/// Decodes binary PGM (P5) or PPM (P6) with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(b"P1" | b"P2" | b"P3" | b"P4") => {
            return Err(ImageError::Unsupported(
                "ASCII or bitmap PNM variants; only binary P5/P6 are read".into(),
            ))
        }
        _ => return Err(ImageError::Unsupported("unknown PNM magic".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(ImageError::Unsupported(format!(
            "PNM maxval {maxval}; only 8-bit samples (maxval 255) are supported"
        )));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected a single whitespace byte after maxval")),
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let data = bytes
        .get(cur.pos..cur.pos.saturating_add(len))
        .ok_or_else(|| ImageError::Parse {
            offset: bytes.len(),
            message: format!("pixel data truncated: need {len} bytes from offset {}", cur.pos),
        })?;
    ImageBuffer::new(width, height, channels, data.to_vec())
}

pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

fn le_u16(bytes: &[u8], at: usize) -> Result<u16, ImageError> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or(ImageError::Parse {
            offset: bytes.len(),
            message: format!("BMP header truncated before offset {at}"),
        })
}

fn le_u32(bytes: &[u8], at: usize) -> Result<u32, ImageError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(ImageError::Parse {
            offset: bytes.len(),
            message: format!("BMP header truncated before offset {at}"),
        })
}

/// Decodes an uncompressed 24-bit bottom-up BMP into RGB.
pub fn decode_bmp(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    if bytes.get(..2) != Some(b"BM") {
        return Err(ImageError::Unsupported("missing BM signature".into()));
    }
    let data_offset = le_u32(bytes, 10)? as usize;
    let info_size = le_u32(bytes, 14)?;
    if info_size < 40 {
        return Err(ImageError::Unsupported(format!(
            "BMP info header of {info_size} bytes (OS/2 headers are not supported)"
        )));
    }
    let width = le_u32(bytes, 18)? as i32;
    let height = le_u32(bytes, 22)? as i32;
    let bpp = le_u16(bytes, 28)?;
    let compression = le_u32(bytes, 30)?;
    if compression != 0 {
        return Err(ImageError::Unsupported(format!(
            "BMP compression method {compression}; only BI_RGB is supported"
        )));
    }
    if bpp != 24 {
        return Err(ImageError::Unsupported(format!(
            "{bpp}-bit BMP; only 24-bit is supported"
        )));
    }
    if height < 0 {
        return Err(ImageError::Unsupported("top-down BMP rows".into()));
    }
    if width < 0 {
        return Err(ImageError::Parse {
            offset: 18,
            message: "negative BMP width".into(),
        });
    }
    let (width, height) = (width as usize, height as usize);
    let stride = (width * 3).div_ceil(4) * 4;
    let needed = data_offset + stride * height;
    if bytes.len() < needed {
        return Err(ImageError::Parse {
            offset: bytes.len(),
            message: format!("BMP pixel data truncated: need {needed} bytes"),
        });
    }
    let mut data = Vec::with_capacity(width * height * 3);
    for row in (0..height).rev() {
        let start = data_offset + row * stride;
        for bgr in bytes[start..start + width * 3].chunks_exact(3) {
            data.extend_from_slice(&[bgr[2], bgr[1], bgr[0]]);
        }
    }
    ImageBuffer::new(width, height, 3, data)
}

/// Writes a 24-bit bottom-up BMP. Grayscale input is expanded to RGB.
pub fn encode_bmp(img: &ImageBuffer) -> Vec<u8> {
    let stride = (img.width * 3).div_ceil(4) * 4;
    let image_size = stride * img.height;
    let mut out = Vec::with_capacity(54 + image_size);
    out.extend_from_slice(b"BM");
    out.extend_from_slice(&((54 + image_size) as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&54u32.to_le_bytes());
    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&(img.width as i32).to_le_bytes());
    out.extend_from_slice(&(img.height as i32).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(image_size as u32).to_le_bytes());
    out.extend_from_slice(&[0; 16]);
    for y in (0..img.height).rev() {
        let row_start = out.len();
        for x in 0..img.width {
            let (r, g, b) = if img.channels == 3 {
                (img.sample(x, y, 0), img.sample(x, y, 1), img.sample(x, y, 2))
            } else {
                let v = img.sample(x, y, 0);
                (v, v, v)
            };
            out.extend_from_slice(&[b, g, r]);
        }
        out.resize(row_start + stride, 0);
    }
    out
}

/// Sniffs the format from the leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    match bytes.get(..2) {
        Some([b'P', _]) => decode_pnm(bytes),
        Some(b"BM") => decode_bmp(bytes),
        Some([0x89, b'P']) => Err(ImageError::Unsupported("PNG (compressed formats are not accepted)".into())),
        Some([0xFF, 0xD8]) => Err(ImageError::Unsupported("JPEG (lossy formats are not accepted)".into())),
        _ => Err(ImageError::Unsupported("unrecognized image signature".into())),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    decode_image(&fs::read(path)?)
}

/// Writes P6 for colour and P5 for grayscale.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), ImageError> {
    write_atomic(path.as_ref(), &encode_pnm(img))?;
    Ok(())
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Appends the fewest zero bytes that make the length a multiple of 16.
pub fn pad_payload(data: &[u8]) -> (Vec<u8>, usize) {
    let pad_len = (BLOCK_LEN - data.len() % BLOCK_LEN) % BLOCK_LEN;
    let mut padded = Vec::with_capacity(data.len() + pad_len);
    padded.extend_from_slice(data);
    padded.resize(data.len() + pad_len, 0);
    (padded, pad_len)
}

pub fn unpad_payload(data: &[u8], pad_len: usize) -> Result<Vec<u8>, ContainerError> {
    if pad_len > data.len() {
        return Err(ContainerError::PadTooLarge {
            pad_len,
            len: data.len(),
        });
    }
    Ok(data[..data.len() - pad_len].to_vec())
}

pub const MAGIC: &[u8; 5] = b"VPAES";
pub const VERSION: u8 = 1;
/// magic(5) version(1) width(4) height(4) channels(1) pad_len(2)
pub const HEADER_LEN: usize = 17;

/// Ciphertext envelope. Multi-byte header fields are big-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherContainer {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pad_len: u16,
    pub payload: Vec<u8>,
}

impl CipherContainer {
    pub fn plain_len(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }

    pub fn validate(&self) -> Result<(), ContainerError> {
        if self.channels != 1 && self.channels != 3 {
            return Err(ContainerError::BadChannels(self.channels));
        }
        if self.payload.is_empty() || self.plain_len() == 0 {
            return Err(ContainerError::Empty);
        }
        if !self.payload.len().is_multiple_of(BLOCK_LEN) {
            return Err(ContainerError::Unaligned(self.payload.len()));
        }
        let expected = self.plain_len() + self.pad_len as usize;
        if self.payload.len() != expected {
            return Err(ContainerError::LengthMismatch {
                expected,
                got: self.payload.len(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.push(self.channels);
        out.extend_from_slice(&self.pad_len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if !bytes.starts_with(MAGIC) {
            if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
                return Err(ContainerError::TruncatedHeader { got: bytes.len() });
            }
            return Err(ContainerError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ContainerError::TruncatedHeader { got: bytes.len() });
        }
        if bytes[5] != VERSION {
            return Err(ContainerError::UnsupportedVersion(bytes[5]));
        }
        let u32_at = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
        let width = u32_at(6);
        let height = u32_at(10);
        let channels = bytes[14];
        let pad_len = u16::from_be_bytes([bytes[15], bytes[16]]);
        if channels != 1 && channels != 3 {
            return Err(ContainerError::BadChannels(channels));
        }
        let expected = width as usize * height as usize * channels as usize + pad_len as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() < expected {
            return Err(ContainerError::TruncatedPayload {
                expected,
                got: body.len(),
            });
        }
        if body.len() > expected {
            return Err(ContainerError::TrailingBytes(body.len() - expected));
        }
        let c = Self {
            width,
            height,
            channels,
            pad_len,
            payload: body.to_vec(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Renders the ciphertext as an RGB image for inspection. Width is kept;
    /// the payload is read three bytes per pixel and the last partial row is
    /// zero-filled.
    pub fn cipher_view(&self) -> ImageBuffer {
        let width = (self.width as usize).max(1);
        let height = if self.channels == 3 {
            self.height as usize
        } else {
            self.payload.len().div_ceil(3 * width)
        };
        let len = width * height * 3;
        let mut data = self.payload[..len.min(self.payload.len())].to_vec();
        data.resize(len, 0);
        ImageBuffer::new(width, height, 3, data).expect("view dimensions")
    }
}

pub fn write_container(c: &CipherContainer, path: impl AsRef<Path>) -> Result<(), ContainerError> {
    c.validate()?;
    write_atomic(path.as_ref(), &c.to_bytes())?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<CipherContainer, ContainerError> {
    CipherContainer::from_bytes(&fs::read(path)?)
}

pub fn save_cipher_view(c: &CipherContainer, path: impl AsRef<Path>) -> Result<(), ImageError> {
    save_image(&c.cipher_view(), path)
}
