//! Baseline TIFF subset: little-endian, uncompressed, 16-bit unsigned,
//! one (gray) or three (RGB, chunky) samples per pixel.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{to_u16, BitDepth, ImagePlane, RgbImage};

const TAG_WIDTH: u16 = 256;
const TAG_HEIGHT: u16 = 257;
const TAG_BITS: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTES: u16 = 279;
const TAG_PLANAR: u16 = 284;
const TAG_PREDICTOR: u16 = 317;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_SAMPLE_FORMAT: u16 = 339;

const SHORT: u16 = 3;
const LONG: u16 = 4;

const ENTRY_COUNT: usize = 10;
/// Header (8) + entry count (2) + entries + next-IFD offset (4).
const IFD_END: usize = 8 + 2 + ENTRY_COUNT * 12 + 4;

#[derive(Debug, Clone, PartialEq)]
pub enum TiffImage {
    Gray(ImagePlane),
    Rgb(RgbImage),
}

impl TiffImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            TiffImage::Gray(p) => p.dims(),
            TiffImage::Rgb(i) => i.dims(),
        }
    }

    pub fn into_gray(self) -> Result<ImagePlane> {
        match self {
            TiffImage::Gray(p) => Ok(p),
            TiffImage::Rgb(_) => Err(Error::MalformedTiff("expected 1 sample per pixel, found 3".into())),
        }
    }

    pub fn into_rgb(self) -> Result<RgbImage> {
        match self {
            TiffImage::Rgb(i) => Ok(i),
            TiffImage::Gray(_) => Err(Error::MalformedTiff("expected 3 samples per pixel, found 1".into())),
        }
    }
}

impl From<ImagePlane> for TiffImage {
    fn from(p: ImagePlane) -> Self {
        TiffImage::Gray(p)
    }
}

impl From<RgbImage> for TiffImage {
    fn from(i: RgbImage) -> Self {
        TiffImage::Rgb(i)
    }
}

fn entry(out: &mut Vec<u8>, tag: u16, kind: u16, count: u32, value: u32) {
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    if kind == SHORT && count == 1 {
        out.extend_from_slice(&(value as u16).to_le_bytes());
        out.extend_from_slice(&[0, 0]);
    } else {
        out.extend_from_slice(&value.to_le_bytes());
    }
}

/// Serialize; samples are rounded to 16-bit codes (clamped to `[0, 1]`).
pub fn encode_tiff16(img: &TiffImage) -> Vec<u8> {
    let (w, h) = img.dims();
    let spp: u32 = match img {
        TiffImage::Gray(_) => 1,
        TiffImage::Rgb(_) => 3,
    };
    let bits_at = IFD_END as u32;
    let data_at = if spp == 1 { IFD_END } else { IFD_END + 6 } as u32;
    let nbytes = (w * h) as u32 * spp * 2;

    let mut out = Vec::with_capacity(data_at as usize + nbytes as usize);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&(ENTRY_COUNT as u16).to_le_bytes());
    entry(&mut out, TAG_WIDTH, LONG, 1, w as u32);
    entry(&mut out, TAG_HEIGHT, LONG, 1, h as u32);
    if spp == 1 {
        entry(&mut out, TAG_BITS, SHORT, 1, 16);
    } else {
        entry(&mut out, TAG_BITS, SHORT, 3, bits_at);
    }
    entry(&mut out, TAG_COMPRESSION, SHORT, 1, 1);
    entry(&mut out, TAG_PHOTOMETRIC, SHORT, 1, if spp == 1 { 1 } else { 2 });
    entry(&mut out, TAG_STRIP_OFFSETS, LONG, 1, data_at);
    entry(&mut out, TAG_SAMPLES, SHORT, 1, spp);
    entry(&mut out, TAG_ROWS_PER_STRIP, LONG, 1, h as u32);
    entry(&mut out, TAG_STRIP_BYTES, LONG, 1, nbytes);
    entry(&mut out, TAG_PLANAR, SHORT, 1, 1);
    out.extend_from_slice(&0u32.to_le_bytes());
    debug_assert_eq!(out.len(), IFD_END);
    if spp == 3 {
        for _ in 0..3 {
            out.extend_from_slice(&16u16.to_le_bytes());
        }
    }
    match img {
        TiffImage::Gray(p) => {
            for &v in p.data() {
                out.extend_from_slice(&to_u16(v).to_le_bytes());
            }
        }
        TiffImage::Rgb(i) => {
            for k in 0..w * h {
                for c in i.channels() {
                    out.extend_from_slice(&to_u16(c.data()[k]).to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_tiff16(img: &TiffImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_tiff16(img)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn bytes(&self, at: usize, n: usize) -> Result<&[u8]> {
        at.checked_add(n)
            .and_then(|end| self.buf.get(at..end))
            .ok_or_else(|| Error::MalformedTiff(format!("read of {n} bytes at offset {at} past end of file")))
    }

    fn u16(&self, at: usize) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(at, 2)?.try_into().unwrap()))
    }

    fn u32(&self, at: usize) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(at, 4)?.try_into().unwrap()))
    }
}

struct Field {
    kind: u16,
    count: u32,
    /// Offset of the value bytes (inline or external).
    at: usize,
}

impl Field {
    fn values(&self, r: &Reader, tag: u16) -> Result<Vec<u32>> {
        let size = match self.kind {
            SHORT => 2,
            LONG => 4,
            other => {
                return Err(Error::MalformedTiff(format!(
                    "tag {tag} has field type {other}; only SHORT and LONG are supported"
                )))
            }
        };
        (0..self.count as usize)
            .map(|i| {
                let at = self.at + i * size;
                if size == 2 {
                    r.u16(at).map(u32::from)
                } else {
                    r.u32(at)
                }
            })
            .collect()
    }
}

/// Parse a file in the supported subset. Benign unknown tags are ignored.
pub fn decode_tiff16(buf: &[u8]) -> Result<TiffImage> {
    let r = Reader { buf };
    match r.bytes(0, 2)? {
        b"II" => {}
        b"MM" => return Err(Error::UnsupportedByteOrder),
        _ => return Err(Error::MalformedTiff("not a TIFF file".into())),
    }
    if r.u16(2)? != 42 {
        return Err(Error::MalformedTiff("bad magic number".into()));
    }
    let ifd = r.u32(4)? as usize;
    let n = r.u16(ifd)? as usize;
    let mut fields = std::collections::BTreeMap::new();
    for i in 0..n {
        let e = ifd + 2 + i * 12;
        let tag = r.u16(e)?;
        let kind = r.u16(e + 2)?;
        let count = r.u32(e + 4)?;
        let size = match kind {
            1 | 2 | 6 | 7 => 1,
            3 | 8 => 2,
            4 | 9 | 11 => 4,
            _ => 8,
        };
        let at = if size * count as usize <= 4 { e + 8 } else { r.u32(e + 8)? as usize };
        fields.insert(tag, Field { kind, count, at });
    }

    let get = |tag: u16| -> Result<Vec<u32>> {
        fields
            .get(&tag)
            .ok_or_else(|| Error::MalformedTiff(format!("required tag {tag} missing")))?
            .values(&r, tag)
    };
    let single = |tag: u16, default: Option<u32>| -> Result<u32> {
        match fields.get(&tag) {
            Some(f) => f
                .values(&r, tag)?
                .first()
                .copied()
                .ok_or_else(|| Error::MalformedTiff(format!("tag {tag} has no value"))),
            None => default.ok_or_else(|| Error::MalformedTiff(format!("required tag {tag} missing"))),
        }
    };

    if fields.contains_key(&TAG_TILE_WIDTH) {
        return Err(Error::UnsupportedTiff {
            tag: TAG_TILE_WIDTH,
            value: single(TAG_TILE_WIDTH, None)?,
        });
    }
    let require = |tag: u16, default: u32, ok: &[u32]| -> Result<u32> {
        let v = single(tag, Some(default))?;
        if ok.contains(&v) {
            Ok(v)
        } else {
            Err(Error::UnsupportedTiff { tag, value: v })
        }
    };
    require(TAG_COMPRESSION, 1, &[1])?;
    require(TAG_PLANAR, 1, &[1])?;
    require(TAG_PREDICTOR, 1, &[1])?;
    require(TAG_SAMPLE_FORMAT, 1, &[1])?;
    let spp = require(TAG_SAMPLES, 1, &[1, 3])? as usize;
    let photometric = require(TAG_PHOTOMETRIC, if spp == 3 { 2 } else { 1 }, &[1, 2])?;
    if (spp == 3) != (photometric == 2) {
        return Err(Error::UnsupportedTiff {
            tag: TAG_PHOTOMETRIC,
            value: photometric,
        });
    }
    for b in get(TAG_BITS)? {
        if b != 16 {
            return Err(Error::UnsupportedTiff { tag: TAG_BITS, value: b });
        }
    }

    let w = single(TAG_WIDTH, None)? as usize;
    let h = single(TAG_HEIGHT, None)? as usize;
    if w == 0 || h == 0 {
        return Err(Error::MalformedTiff(format!("empty image {w}x{h}")));
    }
    let offsets = get(TAG_STRIP_OFFSETS)?;
    let counts = get(TAG_STRIP_BYTES)?;
    if offsets.len() != counts.len() {
        return Err(Error::MalformedTiff("strip offset/byte-count length mismatch".into()));
    }
    let need = w * h * spp * 2;
    let mut data = Vec::with_capacity(need);
    for (&o, &c) in offsets.iter().zip(&counts) {
        data.extend_from_slice(r.bytes(o as usize, c as usize)?);
    }
    if data.len() < need {
        return Err(Error::MalformedTiff(format!(
            "pixel data holds {} bytes, expected {need}",
            data.len()
        )));
    }
    let sample = |i: usize| u16::from_le_bytes([data[2 * i], data[2 * i + 1]]) as f64 / 65535.0;
    if spp == 1 {
        Ok(TiffImage::Gray(ImagePlane::from_fn(w, h, |x, y| sample(y * w + x))))
    } else {
        let ch = |c: usize| ImagePlane::from_fn(w, h, |x, y| sample(3 * (y * w + x) + c));
        Ok(TiffImage::Rgb(RgbImage::new(ch(0), ch(1), ch(2), BitDepth::Sixteen)?))
    }
}

pub fn read_tiff16(path: &Path) -> Result<TiffImage> {
    let buf = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    decode_tiff16(&buf)
}
