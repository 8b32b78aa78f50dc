//! File formats: the SPTB image/sinogram container, raw sinogram import,
//! 16-bit PGM export and the JSON-lines dataset manifest.
//!
//! SPTB layout, all multi-byte fields little-endian:
//!
//! ```text
//! offset  size      field
//! 0       8         magic "SPTB0001"
//! 8       1         kind   (0 = image, 1 = sinogram)
//! 9       1         dtype  (0 = f32)
//! 10      1         ndim   (2)
//! 11      1         pad    (0)
//! 12      4*ndim    dims   (image: height, width; sinogram: angles, bins)
//! ..      24        geom   3 x f64 (image: pixel_size, 0, 0;
//!                                   sinogram: start_deg, range_deg, bin_width)
//! ..      4*prod    payload, row-major f32
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Grid, Image, SinoGeometry, Sinogram};

pub const SPTB_MAGIC: &[u8; 8] = b"SPTB0001";
const KIND_IMAGE: u8 = 0;
const KIND_SINOGRAM: u8 = 1;
const DTYPE_F32: u8 = 0;

/// Contents of an SPTB file.
#[derive(Debug, Clone, PartialEq)]
pub enum TomoData {
    Image(Image),
    Sinogram(Sinogram),
}

impl TomoData {
    pub fn into_image(self) -> Result<Image> {
        match self {
            TomoData::Image(i) => Ok(i),
            TomoData::Sinogram(_) => Err(Error::Malformed {
                what: "tomo file",
                offset: 8,
                detail: "expected an image, found a sinogram".to_owned(),
            }),
        }
    }

    pub fn into_sinogram(self) -> Result<Sinogram> {
        match self {
            TomoData::Sinogram(s) => Ok(s),
            TomoData::Image(_) => Err(Error::Malformed {
                what: "tomo file",
                offset: 8,
                detail: "expected a sinogram, found an image".to_owned(),
            }),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Cursor over a byte buffer that reports truncation with offsets.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                what: self.what,
                offset: self.pos as u64,
                needed: n as u64,
                available: self.remaining() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, data: &[f32]) {
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode(kind: u8, dims: [usize; 2], geom: [f64; 3], data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(44 + data.len() * 4);
    out.extend_from_slice(SPTB_MAGIC);
    out.extend_from_slice(&[kind, DTYPE_F32, 2, 0]);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for g in geom {
        out.extend_from_slice(&g.to_le_bytes());
    }
    push_f32s(&mut out, data);
    out
}

pub fn encode_image(image: &Image) -> Vec<u8> {
    encode(
        KIND_IMAGE,
        [image.height(), image.width()],
        [image.pixel_size(), 0.0, 0.0],
        image.data(),
    )
}

pub fn encode_sinogram(sino: &Sinogram) -> Vec<u8> {
    let g = sino.geometry();
    encode(
        KIND_SINOGRAM,
        [g.n_angles, g.n_bins],
        [g.start_angle_deg, g.angular_range_deg, g.bin_width],
        sino.data(),
    )
}

pub fn decode_tomo(bytes: &[u8]) -> Result<TomoData> {
    let mut r = ByteReader::new(bytes, "tomo file");
    let magic = r.take(8)?;
    if magic != SPTB_MAGIC {
        let found = String::from_utf8_lossy(magic).into_owned();
        let expected = String::from_utf8_lossy(SPTB_MAGIC).into_owned();
        return Err(if magic.starts_with(b"SPTB") {
            Error::Version { expected, found }
        } else {
            Error::BadMagic { expected, found }
        });
    }
    let kind = r.u8()?;
    let dtype = r.u8()?;
    let ndim = r.u8()?;
    let _pad = r.u8()?;
    if kind > KIND_SINOGRAM {
        return Err(Error::Malformed {
            what: "tomo file",
            offset: 8,
            detail: format!("unknown kind {kind}"),
        });
    }
    if dtype != DTYPE_F32 {
        return Err(Error::Malformed {
            what: "tomo file",
            offset: 9,
            detail: format!("unsupported dtype {dtype}"),
        });
    }
    if ndim != 2 {
        return Err(Error::Malformed {
            what: "tomo file",
            offset: 10,
            detail: format!("expected 2 dimensions, found {ndim}"),
        });
    }
    let dims_offset = r.offset();
    let dims = [r.u32()? as u64, r.u32()? as u64];
    let geom = [r.f64()?, r.f64()?, r.f64()?];
    // validate the payload size before allocating anything: dims that no
    // file could hold overflow, a short payload is a truncation
    let payload = dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(4))
        .filter(|&n| n <= isize::MAX as u64)
        .ok_or(Error::DimOverflow {
            offset: dims_offset,
            dims: dims.to_vec(),
            file_len: bytes.len() as u64,
        })?;
    if payload > r.remaining() as u64 {
        return Err(Error::Truncated {
            what: "tomo file",
            offset: r.offset(),
            needed: payload,
            available: r.remaining() as u64,
        });
    }
    if dims[0] == 0 || dims[1] == 0 {
        return Err(Error::Malformed {
            what: "tomo file",
            offset: dims_offset,
            detail: "zero extent".to_owned(),
        });
    }
    let data = r.f32s(payload as usize / 4)?;
    if r.remaining() != 0 {
        return Err(Error::Malformed {
            what: "tomo file",
            offset: r.offset(),
            detail: format!("{} trailing bytes", r.remaining()),
        });
    }
    let (d0, d1) = (dims[0] as usize, dims[1] as usize);
    Ok(if kind == KIND_IMAGE {
        TomoData::Image(Image::new(d1, d0, geom[0], data)?)
    } else {
        let geometry = SinoGeometry {
            n_angles: d0,
            n_bins: d1,
            start_angle_deg: geom[0],
            angular_range_deg: geom[1],
            bin_width: geom[2],
        };
        TomoData::Sinogram(Sinogram::new(geometry, data)?)
    })
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_file(path.as_ref(), &encode_image(image))
}

pub fn write_sinogram(path: impl AsRef<Path>, sino: &Sinogram) -> Result<()> {
    write_file(path.as_ref(), &encode_sinogram(sino))
}

pub fn read_tomo(path: impl AsRef<Path>) -> Result<TomoData> {
    let path = path.as_ref();
    decode_tomo(&read_file(path)?)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    read_tomo(path)?.into_image()
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    read_tomo(path)?.into_sinogram()
}

/// Sample type of a headerless sinogram file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    F32Le,
    U16Le,
}

impl RawDtype {
    pub fn size(self) -> usize {
        match self {
            RawDtype::F32Le => 4,
            RawDtype::U16Le => 2,
        }
    }
}

impl std::str::FromStr for RawDtype {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "f32le" => Ok(RawDtype::F32Le),
            "u16" | "u16le" => Ok(RawDtype::U16Le),
            other => Err(Error::Config(format!("unknown raw dtype `{other}` (expected f32 or u16)"))),
        }
    }
}

/// Decodes a headerless row-major sinogram (angles x bins).
pub fn decode_raw(bytes: &[u8], n_angles: usize, n_bins: usize, dtype: RawDtype, start_angle_deg: f64, angular_range_deg: f64) -> Result<Sinogram> {
    let expected = (n_angles as u64) * (n_bins as u64) * dtype.size() as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data: Vec<f32> = match dtype {
        RawDtype::F32Le => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        RawDtype::U16Le => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()) as f32)
            .collect(),
    };
    let geometry = SinoGeometry {
        n_angles,
        n_bins,
        start_angle_deg,
        angular_range_deg,
        bin_width: 1.0,
    };
    Sinogram::new(geometry, data)
}

pub fn import_raw(
    path: impl AsRef<Path>,
    n_angles: usize,
    n_bins: usize,
    dtype: RawDtype,
    start_angle_deg: f64,
    angular_range_deg: f64,
) -> Result<Sinogram> {
    let path = path.as_ref();
    decode_raw(&read_file(path)?, n_angles, n_bins, dtype, start_angle_deg, angular_range_deg)
}

/// Binary 16-bit PGM ("P5", maxval 65535, big-endian samples) with linear
/// min-max scaling. Constant inputs map to 32768.
pub fn encode_pgm(grid: &dyn Grid) -> Vec<u8> {
    let (w, h) = grid.dims();
    let values = grid.values();
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(values.len() * 2);
    for &v in values {
        let s: u16 = if hi > lo {
            (((v - lo) as f64 / (hi - lo) as f64) * 65535.0).round() as u16
        } else {
            32768
        };
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn export_pgm(grid: &dyn Grid, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(grid))
}

/// One training pair in a dataset manifest. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    pub input: String,
    pub target: String,
    pub phantom: String,
    pub seed: u64,
    pub noise: String,
}

/// A parsed manifest together with the directory its paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("manifest entries serialise"));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_jsonl().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            entries.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { root, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sino_32x128() -> Sinogram {
        let g = SinoGeometry::full_circle(32, 128);
        Sinogram::new(g, (0..32 * 128).map(|i| (i % 97) as f32 * 0.25).collect()).unwrap()
    }

    #[test]
    fn header_is_44_bytes() {
        let bytes = encode_sinogram(&sino_32x128());
        assert_eq!(bytes.len(), 44 + 32 * 128 * 4);
        assert_eq!(&bytes[..8], b"SPTB0001");
        assert_eq!(&bytes[8..12], &[1, 0, 2, 0]);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 128);
        assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 360.0);
    }

    #[test]
    fn version_and_magic_errors() {
        let mut bytes = encode_sinogram(&sino_32x128());
        bytes[7] = b'2';
        assert!(matches!(decode_tomo(&bytes), Err(Error::Version { found, .. }) if found == "SPTB0002"));
        bytes[0] = b'X';
        assert!(matches!(decode_tomo(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let bytes = encode_sinogram(&sino_32x128());
        match decode_tomo(&bytes[..30]) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, 28),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            decode_tomo(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { offset: 44, .. })
        ));
        assert!(matches!(
            decode_tomo(&bytes[..44]),
            Err(Error::Truncated { offset: 44, needed: 16384, available: 0, .. })
        ));
    }

    #[test]
    fn huge_dims_do_not_allocate() {
        let mut bytes = encode_sinogram(&sino_32x128());
        bytes[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_tomo(&bytes), Err(Error::DimOverflow { offset: 12, .. })));
    }

    #[test]
    fn raw_import() {
        let zeros = vec![0u8; 32 * 128 * 4];
        let s = decode_raw(&zeros, 32, 128, RawDtype::F32Le, 0.0, 360.0).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
        assert_eq!(s.geometry().angular_range_deg, 360.0);

        match decode_raw(&zeros[1..], 32, 128, RawDtype::F32Le, 0.0, 360.0) {
            Err(e @ Error::LengthMismatch { expected: 16384, actual: 16383 }) => {
                let msg = e.to_string();
                assert!(msg.contains("16384") && msg.contains("16383"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let s = decode_raw(&[0xff, 0xff, 0, 0], 1, 2, RawDtype::U16Le, 0.0, 360.0).unwrap();
        assert_eq!(s.data(), &[65535.0, 0.0]);

        let neg = (-1.0f32).to_le_bytes();
        assert!(matches!(
            decode_raw(&neg, 1, 1, RawDtype::F32Le, 0.0, 360.0),
            Err(Error::NegativeValue { .. })
        ));
    }

    #[test]
    fn pgm_encoding() {
        let img = Image::new(2, 1, 1.0, vec![0.0, 1.0]).unwrap();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[13..], &[0, 0, 0xff, 0xff]);
        let flat = Image::new(2, 2, 1.0, vec![0.3; 4]).unwrap();
        let bytes = encode_pgm(&flat);
        assert!(bytes[13..].chunks(2).all(|c| u16::from_be_bytes([c[0], c[1]]) == 32768));
    }
}
