//! Dense array files.
//!
//! Two binary layouts are understood, both little-endian and row-major:
//!
//! * `ALFEAT01`: the 8-byte magic `ALFEAT01`, one dtype byte
//!   (1 = float32, 2 = float64, 3 = int64), one rank byte (1 or 2), `rank`
//!   little-endian `u64` dimensions, then the raw payload.
//! * NPY version 1.0 (`\x93NUMPY`), C order, dtypes `<f4`, `<f8`, `<i8`.
//!
//! A CSV reader is provided for hand-written fixtures.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const ALFEAT_MAGIC: &[u8; 8] = b"ALFEAT01";
pub const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    I64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
            DType::I64 => 3,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            3 => Some(DType::I64),
            _ => None,
        }
    }

    pub fn item_size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }

    fn npy_descr(self) -> &'static str {
        match self {
            DType::F32 => "<f4",
            DType::F64 => "<f8",
            DType::I64 => "<i8",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl ArrayData {
    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::F32(_) => DType::F32,
            ArrayData::F64(_) => DType::F64,
            ArrayData::I64(_) => DType::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * self.dtype().item_size());
        match self {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    fn from_le_bytes(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => ArrayData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => ArrayData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::I64 => ArrayData::I64(
                bytes
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        }
    }
}

/// A 1-D or 2-D array with its dtype, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    shape: Vec<usize>,
    data: ArrayData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayFormat {
    Alfeat,
    Npy,
    Csv,
}

impl ArrayFormat {
    /// `.npy` and `.csv` by extension, everything else is `ALFEAT01`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("npy") => ArrayFormat::Npy,
            Some(e) if e.eq_ignore_ascii_case("csv") => ArrayFormat::Csv,
            _ => ArrayFormat::Alfeat,
        }
    }
}

impl ArrayFile {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self> {
        validate_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Integrity(format!(
                "shape {shape:?} needs {expected} elements, payload holds {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn from_features(m: &FeatureMatrix) -> Self {
        Self {
            shape: vec![m.rows(), m.dim()],
            data: ArrayData::F32(m.as_slice().to_vec()),
        }
    }

    pub fn from_labels(labels: &[u32]) -> Result<Self> {
        Self::new(
            vec![labels.len()],
            ArrayData::I64(labels.iter().map(|&l| i64::from(l)).collect()),
        )
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, ArrayData::F64(values))
    }

    /// Interprets a 2-D float array as features. Float64 input is narrowed
    /// to the float32 feature storage.
    pub fn to_features(&self) -> Result<FeatureMatrix> {
        let (rows, dim) = match self.shape[..] {
            [r, d] => (r, d),
            [r] => (r, 1),
            _ => unreachable!("validated rank"),
        };
        let data = match &self.data {
            ArrayData::F32(v) => v.clone(),
            ArrayData::F64(v) => v.iter().map(|&x| x as f32).collect(),
            ArrayData::I64(v) => v.iter().map(|&x| x as f32).collect(),
        };
        FeatureMatrix::new(rows, dim, data)
    }

    /// Interprets a 1-D integer array as class labels.
    pub fn to_labels(&self) -> Result<Vec<u32>> {
        if self.shape.len() != 1 {
            return Err(Error::Shape(format!(
                "labels must be 1-D, got shape {:?}",
                self.shape
            )));
        }
        let ArrayData::I64(v) = &self.data else {
            return Err(Error::Shape("labels must be stored as int64".into()));
        };
        v.iter()
            .enumerate()
            .map(|(i, &l)| {
                u32::try_from(l).map_err(|_| Error::Integrity(format!("label {l} at index {i} out of range")))
            })
            .collect()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::F64(v) => v.clone(),
            ArrayData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::Integrity(format!(
            "arrays must be 1-D or 2-D, got rank {}",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Integrity(format!("empty dimension in shape {shape:?}")));
    }
    Ok(())
}

pub fn read_array(path: impl AsRef<Path>) -> Result<ArrayFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(ALFEAT_MAGIC) {
        decode_alfeat(&bytes)
    } else if bytes.starts_with(NPY_MAGIC) {
        decode_npy(&bytes)
    } else if ArrayFormat::from_path(path) == ArrayFormat::Csv {
        decode_csv(&bytes)
    } else {
        Err(Error::Format {
            offset: 0,
            message: "unrecognized magic bytes".into(),
        })
    }
}

/// Writes `data` in the format implied by the path's extension.
pub fn write_array(path: impl AsRef<Path>, data: &ArrayFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ArrayFormat::from_path(path) {
        ArrayFormat::Alfeat => encode_alfeat(data),
        ArrayFormat::Npy => encode_npy(data),
        ArrayFormat::Csv => encode_csv(data),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_alfeat(a: &ArrayFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * a.shape.len() + a.data.len() * a.dtype().item_size());
    out.extend_from_slice(ALFEAT_MAGIC);
    out.push(a.dtype().code());
    out.push(a.shape.len() as u8);
    for &d in &a.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&a.data.to_le_bytes());
    out
}

pub fn decode_alfeat(bytes: &[u8]) -> Result<ArrayFile> {
    if !bytes.starts_with(ALFEAT_MAGIC) {
        return Err(Error::Format {
            offset: 0,
            message: "missing ALFEAT01 magic".into(),
        });
    }
    let at = |offset: usize, what: &str| Error::Format {
        offset: offset as u64,
        message: format!("truncated header: expected {what}"),
    };
    let dtype_code = *bytes.get(8).ok_or_else(|| at(8, "dtype byte"))?;
    let dtype = DType::from_code(dtype_code).ok_or(Error::Format {
        offset: 8,
        message: format!("unknown dtype code {dtype_code}"),
    })?;
    let rank = *bytes.get(9).ok_or_else(|| at(9, "rank byte"))? as usize;
    if rank == 0 || rank > 2 {
        return Err(Error::Format {
            offset: 9,
            message: format!("rank must be 1 or 2, got {rank}"),
        });
    }
    let mut shape = Vec::with_capacity(rank);
    let mut pos = 10;
    for _ in 0..rank {
        let raw = bytes.get(pos..pos + 8).ok_or_else(|| at(pos, "u64 dimension"))?;
        let d = u64::from_le_bytes(raw.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| Error::Format {
            offset: pos as u64,
            message: format!("dimension {d} does not fit in memory"),
        })?);
        pos += 8;
    }
    decode_payload(shape, dtype, &bytes[pos..])
}

fn decode_payload(shape: Vec<usize>, dtype: DType, payload: &[u8]) -> Result<ArrayFile> {
    validate_shape(&shape)?;
    let expected = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Integrity(format!("shape {shape:?} overflows")))?;
    let size = dtype.item_size();
    if payload.len() % size != 0 || payload.len() / size != expected {
        return Err(Error::Integrity(format!(
            "shape {shape:?} needs {expected} elements, payload holds {} bytes ({} elements)",
            payload.len(),
            payload.len() / size
        )));
    }
    Ok(ArrayFile {
        shape,
        data: ArrayData::from_le_bytes(dtype, payload),
    })
}

/// Header dictionary exactly as numpy prints it, padded to a 64-byte
/// boundary and terminated by a newline.
fn npy_header(a: &ArrayFile) -> String {
    let shape = match a.shape[..] {
        [n] => format!("({n},)"),
        [r, c] => format!("({r}, {c})"),
        _ => unreachable!("validated rank"),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {shape}, }}",
        a.dtype().npy_descr()
    );
    // magic (6) + version (2) + header length (2)
    let unpadded = 10 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    header
}

pub fn encode_npy(a: &ArrayFile) -> Vec<u8> {
    let header = npy_header(a);
    let mut out = Vec::with_capacity(10 + header.len() + a.data.len() * a.dtype().item_size());
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&a.data.to_le_bytes());
    out
}

pub fn decode_npy(bytes: &[u8]) -> Result<ArrayFile> {
    if !bytes.starts_with(NPY_MAGIC) {
        return Err(Error::Format {
            offset: 0,
            message: "missing NPY magic".into(),
        });
    }
    let version = bytes.get(6..8).ok_or(Error::Format {
        offset: 6,
        message: "truncated version".into(),
    })?;
    if version != [1, 0] {
        return Err(Error::Format {
            offset: 6,
            message: format!("unsupported NPY version {}.{}", version[0], version[1]),
        });
    }
    let len_bytes = bytes.get(8..10).ok_or(Error::Format {
        offset: 8,
        message: "truncated header length".into(),
    })?;
    let header_len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
    let header = bytes.get(10..10 + header_len).ok_or(Error::Format {
        offset: 10,
        message: format!("header of {header_len} bytes runs past end of file"),
    })?;
    let header = std::str::from_utf8(header).map_err(|e| Error::Format {
        offset: 10 + e.valid_up_to() as u64,
        message: "header is not ASCII".into(),
    })?;
    let dict = NpyDict::parse(header, 10)?;
    if dict.fortran_order {
        return Err(Error::Format {
            offset: 10,
            message: "Fortran-order arrays are not supported".into(),
        });
    }
    decode_payload(dict.shape, dict.dtype, &bytes[10 + header_len..])
}

struct NpyDict {
    dtype: DType,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl NpyDict {
    /// Parses the restricted Python dict literal numpy writes.
    fn parse(header: &str, base: usize) -> Result<Self> {
        let err = |pos: usize, message: String| Error::Format {
            offset: (base + pos) as u64,
            message,
        };
        let find_value = |key: &str| -> Result<(usize, &str)> {
            let needle = format!("'{key}':");
            let start = header
                .find(&needle)
                .ok_or_else(|| err(0, format!("header lacks key '{key}'")))?;
            let vstart = start + needle.len();
            let rest = &header[vstart..];
            let trimmed = rest.trim_start();
            Ok((vstart + rest.len() - trimmed.len(), trimmed))
        };

        let (pos, v) = find_value("descr")?;
        let descr = v
            .strip_prefix('\'')
            .and_then(|s| s.split('\'').next())
            .ok_or_else(|| err(pos, "descr must be a quoted string".into()))?;
        let dtype = match descr {
            "<f4" => DType::F32,
            "<f8" => DType::F64,
            "<i8" => DType::I64,
            other => return Err(err(pos, format!("unsupported dtype '{other}'"))),
        };

        let (pos, v) = find_value("fortran_order")?;
        let fortran_order = if v.starts_with("False") {
            false
        } else if v.starts_with("True") {
            true
        } else {
            return Err(err(pos, "fortran_order must be True or False".into()));
        };

        let (pos, v) = find_value("shape")?;
        let inner = v
            .strip_prefix('(')
            .and_then(|s| s.split(')').next())
            .ok_or_else(|| err(pos, "shape must be a tuple".into()))?;
        let shape = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.trim_end_matches('L').parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(pos, format!("bad shape entry: {e}")))?;
        if shape.is_empty() || shape.len() > 2 {
            return Err(err(pos, format!("rank must be 1 or 2, got {}", shape.len())));
        }
        Ok(Self {
            dtype,
            fortran_order,
            shape,
        })
    }
}

/// CSV with an optional header row. A single column becomes a 1-D array;
/// an all-integer table becomes int64, anything else float64.
pub fn decode_csv(bytes: &[u8]) -> Result<ArrayFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format {
            offset: e.position().map(|p| p.byte()).unwrap_or(0),
            message: format!("CSV record {i}: {e}"),
        })?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    let is_numeric = |row: &[String]| row.iter().all(|f| f.parse::<f64>().is_ok());
    if rows.first().is_some_and(|r| !is_numeric(r)) {
        rows.remove(0);
    }
    if rows.is_empty() {
        return Err(Error::Integrity("CSV holds no data rows".into()));
    }
    let cols = rows[0].len();
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| !is_numeric(r)) {
        return Err(Error::Format {
            offset: 0,
            message: format!("non-numeric value in data row {i}"),
        });
    }
    let shape = if cols == 1 { vec![rows.len()] } else { vec![rows.len(), cols] };
    let fields: Vec<&str> = rows.iter().flatten().map(String::as_str).collect();
    let data = if fields.iter().all(|f| f.parse::<i64>().is_ok()) {
        ArrayData::I64(fields.iter().map(|f| f.parse().unwrap()).collect())
    } else {
        ArrayData::F64(fields.iter().map(|f| f.parse().unwrap()).collect())
    };
    ArrayFile::new(shape, data)
}

fn encode_csv(a: &ArrayFile) -> Vec<u8> {
    let cols = a.shape.get(1).copied().unwrap_or(1);
    let fields: Vec<String> = match &a.data {
        ArrayData::F32(v) => v.iter().map(|x| x.to_string()).collect(),
        ArrayData::F64(v) => v.iter().map(|x| x.to_string()).collect(),
        ArrayData::I64(v) => v.iter().map(|x| x.to_string()).collect(),
    };
    let mut out = String::new();
    for row in fields.chunks(cols) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_2x2() -> ArrayFile {
        ArrayFile::new(vec![2, 2], ArrayData::F32(vec![1.0, 2.0, 3.0, 4.0])).unwrap()
    }

    #[test]
    fn alfeat_golden_bytes() {
        let bytes = encode_alfeat(&f32_2x2());
        let mut expected = b"ALFEAT01".to_vec();
        expected.extend_from_slice(&[1, 2]);
        expected.extend_from_slice(&[2, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend_from_slice(&[2, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]); // 1.0f32
        expected.extend_from_slice(&[0x00, 0x00, 0x00, 0x40]); // 2.0f32
        expected.extend_from_slice(&[0x00, 0x00, 0x40, 0x40]); // 3.0f32
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x40]); // 4.0f32
        assert_eq!(bytes, expected);
        let back = decode_alfeat(&bytes).unwrap();
        assert_eq!(back.to_features().unwrap().row(1), &[3.0, 4.0]);
    }

    #[test]
    fn npy_golden_header() {
        // numpy.save(np.array([[1, 2], [3, 4]], dtype='<f4'))
        let bytes = encode_npy(&f32_2x2());
        let header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }";
        assert_eq!(&bytes[..6], NPY_MAGIC);
        assert_eq!(&bytes[6..8], &[1, 0]);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 118);
        assert_eq!(&bytes[10..10 + header.len()], header.as_bytes());
        assert_eq!(bytes[127], b'\n');
        assert_eq!(bytes.len(), 128 + 16);
        assert_eq!(decode_npy(&bytes).unwrap(), f32_2x2());
    }

    #[test]
    fn npy_one_dimensional_labels() {
        let a = ArrayFile::from_labels(&[0, 1, 2]).unwrap();
        let bytes = encode_npy(&a);
        let text = std::str::from_utf8(&bytes[10..74]).unwrap();
        assert!(text.contains("'shape': (3,)"));
        assert_eq!(decode_npy(&bytes).unwrap().to_labels().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn payload_mismatch_is_integrity_error() {
        let mut bytes = b"ALFEAT01".to_vec();
        bytes.extend_from_slice(&[1, 2]);
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_alfeat(&bytes), Err(Error::Integrity(_))));
    }

    #[test]
    fn malformed_header_reports_offset() {
        let mut bytes = b"ALFEAT01".to_vec();
        bytes.push(9);
        match decode_alfeat(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bytes = b"ALFEAT01".to_vec();
        bytes.extend_from_slice(&[1, 2, 7, 0]);
        match decode_alfeat(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_shape_rejected() {
        assert!(ArrayFile::new(vec![0, 3], ArrayData::F32(vec![])).is_err());
        assert!(ArrayFile::new(vec![], ArrayData::F32(vec![1.0])).is_err());
        assert!(ArrayFile::from_labels(&[]).is_err());
    }

    #[test]
    fn npy_rejects_big_endian_and_fortran() {
        let mut a = encode_npy(&f32_2x2());
        a[10 + 10] = b'>';
        assert!(matches!(decode_npy(&a), Err(Error::Format { .. })));
        let b = encode_npy(&f32_2x2());
        let s = String::from_utf8_lossy(&b[..128]).replace("False", "True ");
        let mut b2 = s.into_bytes();
        b2.extend_from_slice(&b[128..]);
        assert!(matches!(decode_npy(&b2), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_with_and_without_header() {
        let a = decode_csv(b"x,y\n1.5,2\n3,4\n").unwrap();
        assert_eq!(a.shape(), &[2, 2]);
        assert_eq!(a.dtype(), DType::F64);
        let labels = decode_csv(b"0\n1\n2\n").unwrap();
        assert_eq!(labels.to_labels().unwrap(), vec![0, 1, 2]);
        assert!(decode_csv(b"a,b\n").is_err());
    }

    #[test]
    fn file_round_trip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["x.alf", "x.npy", "x.csv"] {
            let p = dir.path().join(name);
            let a = ArrayFile::from_labels(&[0, 1, 2]).unwrap();
            write_array(&p, &a).unwrap();
            assert_eq!(read_array(&p).unwrap(), a, "{name}");
        }
    }
}
