//! Bit-exact volume serialization, Hounsfield windowing, and CSV reports.
//!
//! Volumes are stored as MetaImage-compatible pairs: a small text header
//! (keys `NDims`, `DimSize`, `ElementSpacing`, `ElementType`,
//! `ElementByteOrderMSB`, `ElementDataFile`) plus a raw little-endian payload
//! in x-fastest order, matching the in-memory layout exactly. A `.mha`
//! extension selects the single-file form (`ElementDataFile = LOCAL`, payload
//! appended after the header); anything else writes a sidecar `.raw` next to
//! the header. Only little-endian payloads are accepted.
//!
//! Axis convention: x grows toward the patient's left, z toward the patient's
//! head. Seeding relies on this to tell the lobes apart.

use crate::metrics::LobeScores;
use crate::seeding::LobeId;
use crate::volume::{GridMeta, LabelVolume, MaskVolume, ScalarVolume};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("header parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("element type mismatch: expected {expected}, file holds {found}")]
    TypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("payload holds {actual} bytes, dims require {expected}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("invalid volume data: {0}")]
    InvalidData(String),
    #[error("nothing to write")]
    EmptyInput,
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

/// Element types the format supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    U8,
    I16,
    F32,
    F64,
}

impl ElementType {
    pub fn met_name(self) -> &'static str {
        match self {
            ElementType::U8 => "MET_UCHAR",
            ElementType::I16 => "MET_SHORT",
            ElementType::F32 => "MET_FLOAT",
            ElementType::F64 => "MET_DOUBLE",
        }
    }

    fn from_met_name(name: &str) -> Option<Self> {
        match name {
            "MET_UCHAR" => Some(ElementType::U8),
            "MET_SHORT" => Some(ElementType::I16),
            "MET_FLOAT" => Some(ElementType::F32),
            "MET_DOUBLE" => Some(ElementType::F64),
            _ => None,
        }
    }

    pub fn byte_size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::I16 => 2,
            ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }
}

/// Typed payload of a stored volume.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl VolumeData {
    pub fn element_type(&self) -> ElementType {
        match self {
            VolumeData::U8(_) => ElementType::U8,
            VolumeData::I16(_) => ElementType::I16,
            VolumeData::F32(_) => ElementType::F32,
            VolumeData::F64(_) => ElementType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VolumeData::U8(v) => v.len(),
            VolumeData::I16(v) => v.len(),
            VolumeData::F32(v) => v.len(),
            VolumeData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            VolumeData::U8(v) => v.clone(),
            VolumeData::I16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            VolumeData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            VolumeData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn from_le_bytes(ty: ElementType, bytes: &[u8]) -> Self {
        match ty {
            ElementType::U8 => VolumeData::U8(bytes.to_vec()),
            ElementType::I16 => VolumeData::I16(
                bytes
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            ElementType::F32 => VolumeData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            ElementType::F64 => VolumeData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| {
                        f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
                    })
                    .collect(),
            ),
        }
    }
}

/// A volume as read from or written to disk: grid metadata plus typed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    meta: GridMeta,
    data: VolumeData,
}

/// CT volume in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct HuVolume {
    pub meta: GridMeta,
    pub data: Vec<i16>,
}

impl RawVolume {
    pub fn new(meta: GridMeta, data: VolumeData) -> Result<Self, IoError> {
        if data.len() != meta.len() {
            return Err(IoError::InvalidData(format!(
                "{} elements for a {} voxel grid",
                data.len(),
                meta.len()
            )));
        }
        Ok(Self { meta, data })
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn data(&self) -> &VolumeData {
        &self.data
    }

    pub fn from_mask(mask: &MaskVolume) -> Self {
        Self {
            meta: *mask.meta(),
            data: VolumeData::U8(mask.data().iter().map(|&b| b as u8).collect()),
        }
    }

    pub fn from_labels(labels: &LabelVolume) -> Self {
        Self {
            meta: *labels.meta(),
            data: VolumeData::U8(labels.data().to_vec()),
        }
    }

    pub fn from_scalar_f64(volume: &ScalarVolume) -> Self {
        Self {
            meta: *volume.meta(),
            data: VolumeData::F64(volume.data().to_vec()),
        }
    }

    pub fn from_scalar_f32(volume: &ScalarVolume) -> Self {
        Self {
            meta: *volume.meta(),
            data: VolumeData::F32(volume.data().iter().map(|&v| v as f32).collect()),
        }
    }

    pub fn from_hu(hu: &HuVolume) -> Self {
        Self {
            meta: hu.meta,
            data: VolumeData::I16(hu.data.clone()),
        }
    }

    /// Mask view: any nonzero byte counts as true.
    pub fn into_mask(self) -> Result<MaskVolume, IoError> {
        match self.data {
            VolumeData::U8(v) => Ok(MaskVolume::from_data(
                self.meta,
                v.into_iter().map(|b| b != 0).collect(),
            )
            .expect("validated length")),
            other => Err(IoError::TypeMismatch {
                expected: "MET_UCHAR",
                found: other.element_type().met_name(),
            }),
        }
    }

    pub fn into_labels(self) -> Result<LabelVolume, IoError> {
        match self.data {
            VolumeData::U8(v) => {
                let labels = LabelVolume::from_data(self.meta, v).expect("validated length");
                labels
                    .validate_labels()
                    .map_err(|e| IoError::InvalidData(e.to_string()))?;
                Ok(labels)
            }
            other => Err(IoError::TypeMismatch {
                expected: "MET_UCHAR",
                found: other.element_type().met_name(),
            }),
        }
    }

    /// Scalar view; accepts float payloads of either width.
    pub fn into_scalar(self) -> Result<ScalarVolume, IoError> {
        let data = match self.data {
            VolumeData::F32(v) => v.into_iter().map(f64::from).collect(),
            VolumeData::F64(v) => v,
            other => {
                return Err(IoError::TypeMismatch {
                    expected: "MET_FLOAT or MET_DOUBLE",
                    found: other.element_type().met_name(),
                })
            }
        };
        Ok(ScalarVolume::from_data(self.meta, data).expect("validated length"))
    }

    /// Probability view: scalar with an ingestion range check.
    pub fn into_probabilities(self) -> Result<ScalarVolume, IoError> {
        let vol = self.into_scalar()?;
        vol.validate_probabilities()
            .map_err(|e| IoError::InvalidData(e.to_string()))?;
        Ok(vol)
    }

    pub fn into_hu(self) -> Result<HuVolume, IoError> {
        match self.data {
            VolumeData::I16(v) => Ok(HuVolume {
                meta: self.meta,
                data: v,
            }),
            other => Err(IoError::TypeMismatch {
                expected: "MET_SHORT",
                found: other.element_type().met_name(),
            }),
        }
    }
}

fn is_local_format(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mha"))
}

/// Writes a volume: text header plus raw little-endian payload.
pub fn write_volume(volume: &RawVolume, path: &Path) -> Result<(), IoError> {
    let (nx, ny, nz) = volume.meta.dims();
    let (sx, sy, sz) = volume.meta.spacing();
    let local = is_local_format(path);
    let data_file: Option<PathBuf> = if local {
        None
    } else {
        Some(path.with_extension("raw"))
    };
    let data_file_value = match &data_file {
        None => "LOCAL".to_string(),
        Some(p) => p
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| IoError::InvalidData(format!("unusable path {}", path.display())))?
            .to_string(),
    };
    let mut header = String::new();
    let _ = writeln!(header, "NDims = 3");
    let _ = writeln!(header, "DimSize = {nx} {ny} {nz}");
    let _ = writeln!(header, "ElementSpacing = {sx} {sy} {sz}");
    let _ = writeln!(header, "ElementType = {}", volume.data.element_type().met_name());
    let _ = writeln!(header, "ElementByteOrderMSB = False");
    let _ = writeln!(header, "ElementDataFile = {data_file_value}");

    let payload = volume.data.to_le_bytes();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(header.as_bytes())?;
    if local {
        out.write_all(&payload)?;
    } else {
        out.flush()?;
        std::fs::write(data_file.expect("external form"), &payload)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a volume written by [`write_volume`] (or any MetaImage file within
/// the supported subset). Unknown header keys are ignored.
pub fn read_volume(path: &Path) -> Result<RawVolume, IoError> {
    let bytes = std::fs::read(path)?;
    let mut offset = 0usize;
    let mut line_no = 0usize;

    let mut ndims: Option<(usize, usize)> = None;
    let mut dims: Option<((usize, usize, usize), usize)> = None;
    let mut spacing: (f64, f64, f64) = (1.0, 1.0, 1.0);
    let mut elem: Option<(ElementType, usize)> = None;
    let mut data_file: Option<String> = None;

    while offset < bytes.len() {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| offset + p)
            .unwrap_or(bytes.len());
        line_no += 1;
        let raw = &bytes[offset..end];
        offset = end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(line_no, "header line is not UTF-8"))?
            .trim_end_matches('\r');
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "NDims" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad NDims value {value:?}")))?;
                ndims = Some((n, line_no));
            }
            "DimSize" => {
                let parts: Vec<usize> = value
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| parse_err(line_no, format!("bad DimSize value {value:?}")))?;
                if parts.len() != 3 {
                    return Err(parse_err(
                        line_no,
                        format!("DimSize needs 3 entries, got {}", parts.len()),
                    ));
                }
                dims = Some(((parts[0], parts[1], parts[2]), line_no));
            }
            "ElementSpacing" => {
                let parts: Vec<f64> = value
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| {
                        parse_err(line_no, format!("bad ElementSpacing value {value:?}"))
                    })?;
                if parts.len() != 3 {
                    return Err(parse_err(
                        line_no,
                        format!("ElementSpacing needs 3 entries, got {}", parts.len()),
                    ));
                }
                spacing = (parts[0], parts[1], parts[2]);
            }
            "ElementType" => {
                let ty = ElementType::from_met_name(value).ok_or_else(|| {
                    parse_err(line_no, format!("unsupported element type {value:?}"))
                })?;
                elem = Some((ty, line_no));
            }
            "ElementByteOrderMSB" | "BinaryDataByteOrderMSB" => {
                if value.eq_ignore_ascii_case("true") {
                    return Err(parse_err(line_no, "big-endian payloads are not supported"));
                }
                if !value.eq_ignore_ascii_case("false") {
                    return Err(parse_err(line_no, format!("bad byte-order value {value:?}")));
                }
            }
            "ElementDataFile" => {
                data_file = Some(value.to_string());
                break; // payload or nothing follows
            }
            _ => {} // tolerated for interoperability
        }
    }

    let (n, nd_line) = ndims.ok_or_else(|| parse_err(line_no, "missing NDims"))?;
    if n != 3 {
        return Err(parse_err(nd_line, format!("only NDims = 3 is supported, got {n}")));
    }
    let ((nx, ny, nz), dim_line) = dims.ok_or_else(|| parse_err(line_no, "missing DimSize"))?;
    let meta = GridMeta::new((nx, ny, nz), spacing)
        .map_err(|e| parse_err(dim_line, e.to_string()))?;
    let (ty, _) = elem.ok_or_else(|| parse_err(line_no, "missing ElementType"))?;
    let data_file = data_file.ok_or_else(|| parse_err(line_no, "missing ElementDataFile"))?;

    let payload: Vec<u8> = if data_file == "LOCAL" {
        bytes[offset.min(bytes.len())..].to_vec()
    } else {
        let sibling = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&data_file);
        std::fs::read(sibling)?
    };
    let expected = meta.len() * ty.byte_size();
    if payload.len() != expected {
        return Err(IoError::TruncatedData {
            expected,
            actual: payload.len(),
        });
    }
    Ok(RawVolume {
        meta,
        data: VolumeData::from_le_bytes(ty, &payload),
    })
}

/// A Hounsfield intensity window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    lo: f64,
    hi: f64,
}

impl WindowSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self, IoError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(IoError::InvalidData(format!(
                "window needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// The usual CT preprocessing triple: a wide lung window, a soft-tissue
    /// window, and a narrow low-attenuation window.
    pub fn default_windows() -> [WindowSpec; 3] {
        [
            WindowSpec { lo: -1000.0, hi: 200.0 },
            WindowSpec { lo: -160.0, hi: 240.0 },
            WindowSpec { lo: -1000.0, hi: -775.0 },
        ]
    }
}

/// Rescales a HU volume into three 8-bit channels, one per window:
/// `round(255 * clamp((hu - lo) / (hi - lo), 0, 1))` with halves rounding up.
pub fn hu_window(hu: &HuVolume, windows: &[WindowSpec; 3]) -> [RawVolume; 3] {
    let channel = |w: &WindowSpec| -> RawVolume {
        let scale = 1.0 / (w.hi - w.lo);
        let data: Vec<u8> = hu
            .data
            .iter()
            .map(|&v| {
                let t = ((v as f64 - w.lo) * scale).clamp(0.0, 1.0);
                (255.0 * t + 0.5).floor() as u8
            })
            .collect();
        RawVolume {
            meta: hu.meta,
            data: VolumeData::U8(data),
        }
    };
    [channel(&windows[0]), channel(&windows[1]), channel(&windows[2])]
}

/// Writes per-case lobe scores as CSV: one row per lobe plus an `overall`
/// row per case, in input order. The overall row aggregates the Jaccard by
/// the pixel-weighted formula and the surface distance by the same weights.
pub fn write_metrics_csv(reports: &[(String, LobeScores)], path: &Path) -> Result<(), IoError> {
    if reports.is_empty() {
        return Err(IoError::EmptyInput);
    }
    let mut out = String::from("case,lobe,jaccard,asd_mm,gt_voxels\n");
    for (case, scores) in reports {
        for lobe in LobeId::ALL {
            let k = lobe.label() as usize - 1;
            let _ = writeln!(
                out,
                "{case},{lobe},{},{},{}",
                scores.jaccard[k], scores.asd_mm[k], scores.gt_lobe_voxels[k]
            );
        }
        let total: u64 = scores.gt_lobe_voxels.iter().sum();
        let overall_asd = if total == 0 {
            0.0
        } else {
            scores
                .asd_mm
                .iter()
                .zip(&scores.gt_lobe_voxels)
                .map(|(a, &n)| a * n as f64)
                .sum::<f64>()
                / total as f64
        };
        let _ = writeln!(
            out,
            "{case},overall,{},{overall_asd},{total}",
            scores.overall_jaccard
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
