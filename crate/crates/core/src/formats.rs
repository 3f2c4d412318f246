//! Binary file formats: PGM/PPM images and the little-endian CMAP, FMAP and
//! GDSC containers.
//!
//! ```text
//! CMAP: "CMAP" | u32 version=1 | u32 H | u32 W | H*W x (f32 x, f32 y) | H*W x u8 valid
//! FMAP: "FMAP" | u32 version=1 | u32 H | u32 W | u32 C | H*W*C x f32 (channel fastest)
//! GDSC: "GDSC" | u32 version=1 | u32 dim | dim x f32
//! ```

use std::fs;
use std::path::Path;

use crate::cmap::CorrespondenceMap;
use crate::error::{Error, Result};
use crate::features::{FeatureMap, GlobalDescriptor};
use crate::image::{quantize, Image};

const FORMAT_VERSION: u32 = 1;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ── PGM / PPM ────────────────────────────────────────────────────────────────

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_pnm(&read_file(path.as_ref())?)
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pnm(image))
}

pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|&v| quantize(v)));
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(Error::parse(0, "missing PNM magic"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::parse(0, "expected P5 or P6 magic")),
    };
    cur.pos = 2;
    let (width, _) = cur.number()?;
    let (height, _) = cur.number()?;
    let (maxval, maxval_at) = cur.number()?;
    if maxval != 255 {
        return Err(Error::parse(maxval_at, format!("maxval {maxval} unsupported, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(cur.pos, "zero image dimension"));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::parse(cur.pos, "dimension overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::parse(
            cur.pos + payload.len(),
            format!("truncated raster: {} of {need} bytes", payload.len()),
        ));
    }
    let pixels = payload[..need].iter().map(|&b| b as f32 / 255.0).collect();
    Image::new(height, width, channels, pixels)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<(usize, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, "expected a decimal header field"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| Error::parse(start, "header field out of range"))
    }
}

// ── binary containers ────────────────────────────────────────────────────────

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::parse(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(want)
                ),
            ));
        }
        let at = self.pos;
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(at, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::parse(
                    self.bytes.len(),
                    format!("short read: need {n} bytes at offset {}", self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes_len = n
            .checked_mul(4)
            .ok_or_else(|| Error::parse(self.pos, "dimension overflow"))?;
        let raw = self.take(bytes_len)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Product of header dimensions, rejecting overflow and sizes the payload cannot hold.
    fn extent(&self, dims: &[u32], bytes_per: usize) -> Result<usize> {
        let mut n: usize = 1;
        for &d in dims {
            n = n
                .checked_mul(d as usize)
                .ok_or_else(|| Error::parse(self.pos, "dimension overflow"))?;
        }
        let need = n
            .checked_mul(bytes_per)
            .ok_or_else(|| Error::parse(self.pos, "dimension overflow"))?;
        if need > self.bytes.len() - self.pos {
            return Err(Error::parse(
                self.bytes.len(),
                format!("short read: header declares {need} payload bytes, {} present", self.bytes.len() - self.pos),
            ));
        }
        Ok(n)
    }
}

fn header(magic: &[u8; 4], dims: &[u32]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend(FORMAT_VERSION.to_le_bytes());
    for d in dims {
        out.extend(d.to_le_bytes());
    }
    out
}

fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidInput(format!("dimension {v} exceeds u32")))
}

pub fn encode_cmap(map: &CorrespondenceMap) -> Result<Vec<u8>> {
    let mut out = header(b"CMAP", &[dim_u32(map.height())?, dim_u32(map.width())?]);
    out.reserve(map.len() * 9);
    for c in map.coords() {
        out.extend(c[0].to_le_bytes());
        out.extend(c[1].to_le_bytes());
    }
    out.extend(map.valid_flags().iter().map(|&v| v as u8));
    Ok(out)
}

pub fn decode_cmap(bytes: &[u8]) -> Result<CorrespondenceMap> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(b"CMAP")?;
    let h = r.u32()?;
    let w = r.u32()?;
    let n = r.extent(&[h, w], 9)?;
    let xy = r.f32s(2 * n)?;
    let flags_at = r.pos;
    let flags = r.take(n)?;
    let mut valid = Vec::with_capacity(n);
    for (i, &f) in flags.iter().enumerate() {
        match f {
            0 => valid.push(false),
            1 => valid.push(true),
            other => return Err(Error::parse(flags_at + i, format!("valid flag {other} not 0/1"))),
        }
    }
    let coords = xy.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    CorrespondenceMap::from_parts(h as usize, w as usize, coords, valid)
}

pub fn read_cmap(path: impl AsRef<Path>) -> Result<CorrespondenceMap> {
    decode_cmap(&read_file(path.as_ref())?)
}

pub fn write_cmap(map: &CorrespondenceMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_cmap(map)?)
}

pub fn encode_fmap(features: &FeatureMap) -> Result<Vec<u8>> {
    let mut out = header(
        b"FMAP",
        &[
            dim_u32(features.height())?,
            dim_u32(features.width())?,
            dim_u32(features.channels())?,
        ],
    );
    out.reserve(features.values().len() * 4);
    for v in features.values() {
        out.extend(v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fmap(bytes: &[u8]) -> Result<FeatureMap> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(b"FMAP")?;
    let h = r.u32()?;
    let w = r.u32()?;
    let c = r.u32()?;
    let n = r.extent(&[h, w, c], 4)?;
    let values = r.f32s(n)?;
    let mut map = FeatureMap::new(h as usize, w as usize, c as usize, values)?;
    let unit = map.norms_ok();
    map.set_unit_normalized(unit);
    Ok(map)
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FeatureMap> {
    decode_fmap(&read_file(path.as_ref())?)
}

pub fn write_fmap(features: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_fmap(features)?)
}

pub fn encode_gdsc(desc: &GlobalDescriptor) -> Result<Vec<u8>> {
    let mut out = header(b"GDSC", &[dim_u32(desc.dim())?]);
    for v in desc.values() {
        out.extend(v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_gdsc(bytes: &[u8]) -> Result<GlobalDescriptor> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(b"GDSC")?;
    let dim = r.u32()?;
    let n = r.extent(&[dim], 4)?;
    let values = r.f32s(n)?;
    let norm = values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::parse(12, format!("descriptor norm {norm} is not 1")));
    }
    GlobalDescriptor::from_stored(values)
}

pub fn read_gdsc(path: impl AsRef<Path>) -> Result<GlobalDescriptor> {
    decode_gdsc(&read_file(path.as_ref())?)
}

pub fn write_gdsc(desc: &GlobalDescriptor, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_gdsc(desc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_bytes_scale_by_255() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # comment\n# another\n1 1\n255\n".to_vec();
        bytes.push(51);
        assert_eq!(decode_pnm(&bytes).unwrap().pixels(), &[0.2]);
    }

    #[test]
    fn p6_maxval_other_than_255_is_rejected() {
        let mut bytes = b"P6\n1 1\n65535\n".to_vec();
        bytes.extend([0u8; 6]);
        match decode_pnm(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_raster_reports_offset() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([0u8; 10]);
        match decode_pnm(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn cmap_rejects_wrong_magic() {
        let id = CorrespondenceMap::identity(4, 4);
        let mut bytes = encode_cmap(&id).unwrap();
        bytes[..4].copy_from_slice(b"XMAP");
        assert!(matches!(decode_cmap(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn cmap_rejects_overflowing_and_short_payloads() {
        let mut bytes = header(b"CMAP", &[u32::MAX, u32::MAX]);
        bytes.extend([0u8; 16]);
        assert!(decode_cmap(&bytes).is_err());
        let id = CorrespondenceMap::identity(4, 4);
        let full = encode_cmap(&id).unwrap();
        assert!(decode_cmap(&full[..full.len() - 1]).is_err());
    }

    #[test]
    fn cmap_with_invalid_pixels_round_trips() {
        let mut m = CorrespondenceMap::identity(4, 4);
        m.set(0, 0, None);
        m.set(2, 1, None);
        m.set(3, 3, None);
        let back = decode_cmap(&encode_cmap(&m).unwrap()).unwrap();
        assert_eq!(back.valid_count(), 13);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(back.get(y, x), m.get(y, x));
            }
        }
    }

    #[test]
    fn gdsc_rejects_non_unit_payload() {
        let mut bytes = header(b"GDSC", &[2]);
        bytes.extend(1.0f32.to_le_bytes());
        bytes.extend(1.0f32.to_le_bytes());
        assert!(decode_gdsc(&bytes).is_err());
    }
}
