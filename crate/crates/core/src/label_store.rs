//! Little-endian binary files for dense and economic labels.
//!
//! Dense (`DGL1`): a 24-byte header `magic, version, n_points, n_views,
//! n_angles, n_depths` followed by 6-byte entries `mu: u8, collide: u8,
//! width: f32`, row-major over `(point, view, angle, depth)`.
//!
//! Economic (`EGL1`): a 16-byte header `magic, version, n_points, n_views`;
//! each point is `position: 3×f32, point_graspness: f32`, then `n_views`
//! view-graspness `f32`s, then `n_views` records `angle: u8, depth: u8,
//! score_class: u8, width: f32`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compiler::{BestGrasp, EconomicSceneLabels};
use crate::synth::{DenseObjectLabels, LabelEntry, INFEASIBLE};

pub const DENSE_MAGIC: [u8; 4] = *b"DGL1";
pub const ECONOMIC_MAGIC: [u8; 4] = *b"EGL1";
pub const FORMAT_VERSION: u32 = 1;
pub const DENSE_HEADER_LEN: u64 = 24;
pub const DENSE_ENTRY_LEN: u64 = 6;
pub const ECONOMIC_HEADER_LEN: u64 = 16;
pub const ECONOMIC_RECORD_LEN: u64 = 7;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found}, expected {FORMAT_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("file is {found} bytes, header implies {expected}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("dimension {0} does not fit the header")]
    TooLarge(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Exact size of a dense file, or `None` on overflow.
pub fn dense_len(n_points: u64, n_views: u64, n_angles: u64, n_depths: u64) -> Option<u64> {
    n_points
        .checked_mul(n_views)?
        .checked_mul(n_angles)?
        .checked_mul(n_depths)?
        .checked_mul(DENSE_ENTRY_LEN)?
        .checked_add(DENSE_HEADER_LEN)
}

/// Exact size of an economic file, or `None` on overflow.
pub fn economic_len(n_points: u64, n_views: u64) -> Option<u64> {
    let per_view = 4 + ECONOMIC_RECORD_LEN;
    let per_point = n_views.checked_mul(per_view)?.checked_add(16)?;
    n_points
        .checked_mul(per_point)?
        .checked_add(ECONOMIC_HEADER_LEN)
}

fn header_u32(v: usize) -> Result<u32, StoreError> {
    u32::try_from(v).map_err(|_| StoreError::TooLarge(v))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N]
            .try_into()
            .expect("length checked up front");
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

fn check_prefix(bytes: &[u8], magic: [u8; 4], header_len: u64) -> Result<(), StoreError> {
    if (bytes.len() as u64) < header_len {
        return Err(StoreError::LengthMismatch {
            expected: header_len,
            found: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("header present");
    if found != magic {
        return Err(StoreError::BadMagic {
            expected: magic,
            found,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("header present"));
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch { found: version });
    }
    Ok(())
}

pub fn encode_dense(labels: &DenseObjectLabels) -> Result<Vec<u8>, StoreError> {
    let dims = [
        labels.n_points,
        labels.n_views,
        labels.n_angles,
        labels.n_depths,
    ];
    let [p, v, a, d] = dims.map(|x| x as u64);
    let expected = dense_len(p, v, a, d).map(|len| (len - DENSE_HEADER_LEN) / DENSE_ENTRY_LEN);
    if expected != Some(labels.entries.len() as u64) {
        return Err(StoreError::InvalidValue(format!(
            "{} entries do not fill a {p}x{v}x{a}x{d} grid",
            labels.entries.len()
        )));
    }
    let mut out = Vec::with_capacity(
        DENSE_HEADER_LEN as usize + labels.entries.len() * DENSE_ENTRY_LEN as usize,
    );
    out.extend_from_slice(&DENSE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&header_u32(d)?.to_le_bytes());
    }
    for e in &labels.entries {
        out.push(e.mu);
        out.push(e.collide as u8);
        out.extend_from_slice(&e.width.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseObjectLabels, StoreError> {
    check_prefix(bytes, DENSE_MAGIC, DENSE_HEADER_LEN)?;
    let mut r = Reader { bytes, pos: 8 };
    let dims = [r.u32(), r.u32(), r.u32(), r.u32()].map(u64::from);
    let expected = dense_len(dims[0], dims[1], dims[2], dims[3]).unwrap_or(u64::MAX);
    if bytes.len() as u64 != expected {
        return Err(StoreError::LengthMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let count = ((expected - DENSE_HEADER_LEN) / DENSE_ENTRY_LEN) as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let mu = r.u8();
        let collide = match r.u8() {
            0 => false,
            1 => true,
            other => {
                return Err(StoreError::InvalidValue(format!(
                    "collide flag {other} at entry {i}"
                )))
            }
        };
        entries.push(LabelEntry {
            mu,
            collide,
            width: r.f32(),
        });
    }
    let [n_points, n_views, n_angles, n_depths] = dims.map(|d| d as usize);
    Ok(DenseObjectLabels {
        n_points,
        n_views,
        n_angles,
        n_depths,
        entries,
    })
}

pub fn encode_economic(labels: &EconomicSceneLabels) -> Result<Vec<u8>, StoreError> {
    let k = labels.len();
    let v = labels.n_views;
    if labels.point_graspness.len() != k
        || labels.view_graspness.len() != k * v
        || labels.best.len() != k * v
    {
        return Err(StoreError::InvalidValue(
            "economic label arrays disagree in length".into(),
        ));
    }
    let len = economic_len(k as u64, v as u64).ok_or(StoreError::TooLarge(k))?;
    let mut out = Vec::with_capacity(len as usize);
    out.extend_from_slice(&ECONOMIC_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_u32(k)?.to_le_bytes());
    out.extend_from_slice(&header_u32(v)?.to_le_bytes());
    for i in 0..k {
        for c in labels.points[i] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&labels.point_graspness[i].to_le_bytes());
        for g in labels.views(i) {
            out.extend_from_slice(&g.to_le_bytes());
        }
        for b in labels.records(i) {
            out.extend_from_slice(&[b.angle, b.depth, b.score_class]);
            out.extend_from_slice(&b.width.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_economic(bytes: &[u8]) -> Result<EconomicSceneLabels, StoreError> {
    check_prefix(bytes, ECONOMIC_MAGIC, ECONOMIC_HEADER_LEN)?;
    let mut r = Reader { bytes, pos: 8 };
    let (k, v) = (r.u32() as u64, r.u32() as u64);
    let expected = economic_len(k, v).unwrap_or(u64::MAX);
    if bytes.len() as u64 != expected {
        return Err(StoreError::LengthMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let (k, v) = (k as usize, v as usize);
    let mut out = EconomicSceneLabels::empty(v);
    out.points.reserve(k);
    out.view_graspness.reserve(k * v);
    out.best.reserve(k * v);
    for i in 0..k {
        out.points.push([r.f32(), r.f32(), r.f32()]);
        out.point_graspness.push(r.f32());
        for _ in 0..v {
            out.view_graspness.push(r.f32());
        }
        for _ in 0..v {
            let (angle, depth, score_class) = (r.u8(), r.u8(), r.u8());
            if score_class > 5 && score_class != INFEASIBLE {
                return Err(StoreError::InvalidValue(format!(
                    "score class {score_class} at point {i}"
                )));
            }
            out.best.push(BestGrasp {
                angle,
                depth,
                score_class,
                width: r.f32(),
            });
        }
    }
    Ok(out)
}

pub fn write_dense(path: &Path, labels: &DenseObjectLabels) -> Result<(), StoreError> {
    fs::write(path, encode_dense(labels)?).map_err(io_err(path))
}

pub fn read_dense(path: &Path) -> Result<DenseObjectLabels, StoreError> {
    decode_dense(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_economic(path: &Path, labels: &EconomicSceneLabels) -> Result<(), StoreError> {
    fs::write(path, encode_economic(labels)?).map_err(io_err(path))
}

pub fn read_economic(path: &Path) -> Result<EconomicSceneLabels, StoreError> {
    decode_economic(&fs::read(path).map_err(io_err(path))?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeReport {
    pub dense_bytes: u64,
    pub economic_bytes: u64,
    /// `dense_bytes / economic_bytes`.
    pub ratio: f64,
}

fn total_size(paths: &[PathBuf]) -> Result<u64, StoreError> {
    paths
        .iter()
        .map(|p| fs::metadata(p).map(|m| m.len()).map_err(io_err(p)))
        .sum()
}

/// On-disk sizes of two file sets.
pub fn size_report(dense: &[PathBuf], economic: &[PathBuf]) -> Result<SizeReport, StoreError> {
    let dense_bytes = total_size(dense)?;
    let economic_bytes = total_size(economic)?;
    Ok(SizeReport {
        dense_bytes,
        economic_bytes,
        ratio: dense_bytes as f64 / economic_bytes as f64,
    })
}
