//! Stimulus-labeled dense matrices and their on-disk formats.
//!
//! A [`LabeledMatrix`] is the universal carrier for per-stimulus data: one
//! row per stimulus ID, one column per feature/representation dimension.
//! Two interchange formats are supported:
//!
//! * **CSV** — header `stimulus_id,<c1>,<c2>,...`, one data row per
//!   stimulus, `.` decimal separator, UTF-8. Values are written with
//!   shortest-round-trip rendering, so a save/load cycle reproduces every
//!   value exactly.
//! * **Binary** (`.rdmx`) — magic `RDMX`, `u32` version = 1, `u64` row and
//!   column counts, an ID table (per ID: `u32` byte length + UTF-8 bytes),
//!   then the row-major `f64` payload. All integers and floats are
//!   little-endian. Round-trips are bit-identical.
//!
//! Rows are addressed by stimulus ID, never by position; [`LabeledMatrix::align`]
//! reorders rows to a canonical ID list before any cross-matrix computation.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RDMX";
const BINARY_VERSION: u32 = 1;

/// On-disk encoding of a [`LabeledMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// Pick a format from a file extension: `.csv` is CSV, everything else
    /// (conventionally `.rdmx`) is binary.
    pub fn from_path(path: &Path) -> MatrixFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

/// Dense `f64` matrix with one uniquely-labeled row per stimulus.
///
/// Invariants, enforced at construction and on every load:
/// * row count equals the number of stimulus IDs; IDs are unique and
///   non-empty, and contain no `,`, CR, or LF (so every ID survives the
///   CSV format unquoted);
/// * every value is finite;
/// * at least one row and one column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    stimulus_ids: Vec<String>,
    values: Array2<f64>,
}

impl LabeledMatrix {
    pub fn new(stimulus_ids: Vec<String>, values: Array2<f64>) -> Result<LabeledMatrix> {
        if values.nrows() == 0 {
            return Err(Error::InvalidMatrix("matrix has no rows".into()));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidMatrix("matrix has no columns".into()));
        }
        if stimulus_ids.len() != values.nrows() {
            return Err(Error::InvalidMatrix(format!(
                "{} stimulus IDs for {} rows",
                stimulus_ids.len(),
                values.nrows()
            )));
        }
        let mut seen = HashSet::with_capacity(stimulus_ids.len());
        for (row, id) in stimulus_ids.iter().enumerate() {
            validate_id(id, row)?;
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidMatrix(format!(
                    "duplicate stimulus ID '{id}' at row {row}"
                )));
            }
        }
        if let Some((row, col)) = first_non_finite(&values.view()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite value at row {row}, column {col}"
            )));
        }
        Ok(LabeledMatrix {
            stimulus_ids,
            values,
        })
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_parts(self) -> (Vec<String>, Array2<f64>) {
        (self.stimulus_ids, self.values)
    }

    /// Load a matrix from `path`, validating every invariant. Any problem
    /// is reported with its position in the file.
    pub fn load(path: &Path, format: MatrixFormat) -> Result<LabeledMatrix> {
        match format {
            MatrixFormat::Csv => load_csv(path),
            MatrixFormat::Binary => load_binary(path),
        }
    }

    /// Write the matrix to `path`. A subsequent [`LabeledMatrix::load`]
    /// reproduces it exactly (bit-identical for both formats).
    pub fn save(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        match format {
            MatrixFormat::Csv => save_csv(self, path),
            MatrixFormat::Binary => save_binary(self, path),
        }
    }

    /// Reorder rows to `canonical_ids`, which must be a permutation of this
    /// matrix's IDs. Values are copied untouched.
    pub fn align(&self, canonical_ids: &[String]) -> Result<LabeledMatrix> {
        let index: HashMap<&str, usize> = self
            .stimulus_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();

        let mut canonical_set = HashSet::with_capacity(canonical_ids.len());
        for id in canonical_ids {
            if !canonical_set.insert(id.as_str()) {
                return Err(Error::Misaligned(format!(
                    "canonical ID list contains '{id}' more than once"
                )));
            }
        }
        let missing: Vec<&str> = canonical_ids
            .iter()
            .map(|id| id.as_str())
            .filter(|id| !index.contains_key(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Misaligned(format!(
                "matrix is missing stimulus IDs: {}",
                missing.join(", ")
            )));
        }
        let extra: Vec<&str> = self
            .stimulus_ids
            .iter()
            .map(|id| id.as_str())
            .filter(|id| !canonical_set.contains(id))
            .collect();
        if !extra.is_empty() {
            return Err(Error::Misaligned(format!(
                "matrix has extra stimulus IDs: {}",
                extra.join(", ")
            )));
        }

        let ncols = self.ncols();
        let mut out = Array2::<f64>::zeros((canonical_ids.len(), ncols));
        for (dst, id) in canonical_ids.iter().enumerate() {
            let src = index[id.as_str()];
            out.row_mut(dst).assign(&self.values.row(src));
        }
        LabeledMatrix::new(canonical_ids.to_vec(), out)
    }
}

fn validate_id(id: &str, row: usize) -> Result<()> {
    if id.is_empty() {
        return Err(Error::InvalidMatrix(format!(
            "empty stimulus ID at row {row}"
        )));
    }
    if id.contains(',') || id.contains('\n') || id.contains('\r') {
        return Err(Error::InvalidMatrix(format!(
            "stimulus ID '{}' at row {row} contains a comma or line break",
            id.escape_default()
        )));
    }
    Ok(())
}

fn first_non_finite(values: &ArrayView2<'_, f64>) -> Option<(usize, usize)> {
    for (row, r) in values.rows().into_iter().enumerate() {
        for (col, v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Some((row, col));
            }
        }
    }
    None
}

// --- CSV ---

fn load_csv(path: &Path) -> Result<LabeledMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::malformed(path, 1, 0, "empty file, expected header row"))?;
    let header_fields: Vec<&str> = header.split(',').collect();
    if header_fields[0] != "stimulus_id" {
        return Err(Error::malformed(
            path,
            1,
            1,
            format!(
                "malformed header: first column must be 'stimulus_id', found '{}'",
                header_fields[0]
            ),
        ));
    }
    let ncols = header_fields.len() - 1;
    if ncols == 0 {
        return Err(Error::malformed(
            path,
            1,
            0,
            "malformed header: no value columns",
        ));
    }

    let mut ids: Vec<String> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue; // tolerate a trailing blank line
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != ncols + 1 {
            return Err(Error::malformed(
                path,
                lineno,
                0,
                format!(
                    "ragged row: {} values, expected {}",
                    fields.len().saturating_sub(1),
                    ncols
                ),
            ));
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(Error::malformed(path, lineno, 1, "empty stimulus ID"));
        }
        if let Some(prev) = seen.insert(id.clone(), lineno) {
            return Err(Error::malformed(
                path,
                lineno,
                1,
                format!("duplicate stimulus ID '{id}' (first seen on line {prev})"),
            ));
        }
        for (j, field) in fields[1..].iter().enumerate() {
            let column = j + 2; // 1-based, counting the ID column
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::malformed(path, lineno, column, format!("invalid number '{field}'"))
            })?;
            if !value.is_finite() {
                return Err(Error::malformed(
                    path,
                    lineno,
                    column,
                    format!("non-finite value '{field}'"),
                ));
            }
            data.push(value);
        }
        ids.push(id);
    }

    if ids.is_empty() {
        return Err(Error::malformed(
            path,
            2,
            0,
            "expected at least one data row",
        ));
    }
    let values = Array2::from_shape_vec((ids.len(), ncols), data)
        .expect("row-major buffer matches parsed shape");
    LabeledMatrix::new(ids, values)
}

fn save_csv(m: &LabeledMatrix, path: &Path) -> Result<()> {
    let mut text = String::with_capacity(m.nrows() * m.ncols() * 12);
    text.push_str("stimulus_id");
    for c in 1..=m.ncols() {
        let _ = write!(text, ",c{c}");
    }
    text.push('\n');
    for (id, row) in m.stimulus_ids.iter().zip(m.values.rows()) {
        text.push_str(id);
        for v in row.iter() {
            // `{}` is shortest round-trip for f64: the reload parses back
            // to the identical bits.
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// --- Binary ---

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::bad_file(
                self.path,
                format!(
                    "truncated file: needed {n} bytes for {what} at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn load_binary(path: &Path) -> Result<LabeledMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::bad_file(
            path,
            format!("bad magic {magic:?}, expected {MAGIC:?}"),
        ));
    }
    let version = r.u32("version")?;
    if version != BINARY_VERSION {
        return Err(Error::bad_file(
            path,
            format!("unsupported version {version}, expected {BINARY_VERSION}"),
        ));
    }
    let nrows = r.u64("row count")? as usize;
    let ncols = r.u64("column count")? as usize;
    if nrows == 0 || ncols == 0 {
        return Err(Error::bad_file(
            path,
            format!("degenerate shape {nrows}x{ncols}"),
        ));
    }
    let n_values = nrows
        .checked_mul(ncols)
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::bad_file(path, format!("shape {nrows}x{ncols} overflows")))?;

    let mut ids = Vec::with_capacity(nrows);
    for row in 0..nrows {
        let len = r.u32("ID length")? as usize;
        let raw = r.take(len, "ID bytes")?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| Error::bad_file(path, format!("ID at row {row} is not valid UTF-8")))?;
        ids.push(id.to_string());
    }

    let payload = r.take(n_values * 8, "matrix payload")?;
    if r.pos != bytes.len() {
        return Err(Error::bad_file(
            path,
            format!("{} trailing bytes after payload", bytes.len() - r.pos),
        ));
    }
    let mut data = Vec::with_capacity(n_values);
    for chunk in payload.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let values =
        Array2::from_shape_vec((nrows, ncols), data).expect("payload length checked above");
    LabeledMatrix::new(ids, values)
}

fn save_binary(m: &LabeledMatrix, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&BINARY_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.ncols() as u64).to_le_bytes()).map_err(io_err)?;
    for id in &m.stimulus_ids {
        w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(id.as_bytes()).map_err(io_err)?;
    }
    for row in m.values.rows() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use tempfile::tempdir;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> LabeledMatrix {
        let mut rng = crate::rng::stream(seed, &["test", "matrix"]);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ids = (0..rows).map(|i| format!("stim{i:04}")).collect();
        LabeledMatrix::new(ids, Array2::from_shape_vec((rows, cols), data).unwrap()).unwrap()
    }

    #[test]
    fn csv_parses_two_by_two() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "stimulus_id,c1,c2\ns1,1.0,2.0\ns2,3.0,4.0\n").unwrap();
        let m = LabeledMatrix::load(&path, MatrixFormat::Csv).unwrap();
        assert_eq!(m.stimulus_ids(), ["s1".to_string(), "s2".to_string()]);
        assert_eq!(m.values(), array![[1.0, 2.0], [3.0, 4.0]].view());
    }

    #[test]
    fn csv_nan_names_the_cell() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "stimulus_id,c1,c2\ns1,1.0,NaN\ns2,3.0,4.0\n").unwrap();
        let err = LabeledMatrix::load(&path, MatrixFormat::Csv).unwrap_err();
        match err {
            Error::Malformed { line, column, ref message, .. } => {
                assert_eq!((line, column), (2, 3));
                assert!(message.contains("NaN"), "message was {message}");
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn csv_duplicate_id_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "stimulus_id,c1\ns1,1.0\ns1,2.0\n").unwrap();
        let err = LabeledMatrix::load(&path, MatrixFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("duplicate stimulus ID 's1'"));
        assert!(err.to_string().contains(":3:"));
    }

    #[test]
    fn csv_ragged_row_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "stimulus_id,c1,c2\ns1,1.0\n").unwrap();
        let err = LabeledMatrix::load(&path, MatrixFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("ragged row: 1 values, expected 2"));
    }

    #[test]
    fn csv_bad_header_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "id,c1\ns1,1.0\n").unwrap();
        let err = LabeledMatrix::load(&path, MatrixFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("stimulus_id"));
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.rdmx");
        let m = random_matrix(100, 50, 17);
        m.save(&path, MatrixFormat::Binary).unwrap();
        let back = LabeledMatrix::load(&path, MatrixFormat::Binary).unwrap();
        assert_eq!(back.stimulus_ids(), m.stimulus_ids());
        for (a, b) in m.values().iter().zip(back.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_is_value_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = random_matrix(20, 7, 99);
        m.save(&path, MatrixFormat::Csv).unwrap();
        let back = LabeledMatrix::load(&path, MatrixFormat::Csv).unwrap();
        for (a, b) in m.values().iter().zip(back.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn one_by_one_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.rdmx");
        let m = LabeledMatrix::new(vec!["only".into()], array![[0.0]]).unwrap();
        m.save(&path, MatrixFormat::Binary).unwrap();
        let back = LabeledMatrix::load(&path, MatrixFormat::Binary).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn empty_matrix_rejected_before_write() {
        let err = LabeledMatrix::new(vec![], Array2::zeros((0, 3))).unwrap_err();
        assert!(err.to_string().contains("no rows"));
        let err = LabeledMatrix::new(vec!["a".into()], Array2::zeros((1, 0))).unwrap_err();
        assert!(err.to_string().contains("no columns"));
    }

    #[test]
    fn constructor_rejects_non_finite() {
        let err =
            LabeledMatrix::new(vec!["a".into(), "b".into()], array![[1.0], [f64::NAN]])
                .unwrap_err();
        assert!(err.to_string().contains("row 1, column 0"));
    }

    #[test]
    fn align_swaps_rows() {
        let m = LabeledMatrix::new(
            vec!["b".into(), "a".into()],
            array![[1.0, 2.0], [3.0, 4.0]],
        )
        .unwrap();
        let aligned = m.align(&["a".into(), "b".into()]).unwrap();
        assert_eq!(aligned.stimulus_ids(), ["a".to_string(), "b".to_string()]);
        assert_eq!(aligned.values(), array![[3.0, 4.0], [1.0, 2.0]].view());
    }

    #[test]
    fn align_identity_is_identity() {
        let m = random_matrix(5, 3, 3);
        let aligned = m.align(&m.stimulus_ids().to_vec()).unwrap();
        assert_eq!(aligned, m);
    }

    #[test]
    fn align_unknown_id_named() {
        let m = random_matrix(3, 2, 4);
        let err = m
            .align(&["stim0000".into(), "stim0001".into(), "c".into()])
            .unwrap_err();
        assert!(err.to_string().contains('c'), "error was: {err}");
    }

    #[test]
    fn binary_truncation_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.rdmx");
        let m = random_matrix(4, 4, 5);
        m.save(&path, MatrixFormat::Binary).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let err = LabeledMatrix::load(&path, MatrixFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn binary_bad_magic_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.rdmx");
        fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        let err = LabeledMatrix::load(&path, MatrixFormat::Binary).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn format_from_path() {
        assert_eq!(
            MatrixFormat::from_path(Path::new("x/a.csv")),
            MatrixFormat::Csv
        );
        assert_eq!(
            MatrixFormat::from_path(Path::new("x/a.rdmx")),
            MatrixFormat::Binary
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix_strategy() -> impl Strategy<Value = LabeledMatrix> {
            ((1usize..12, 1usize..8), any::<u64>()).prop_flat_map(|((rows, cols), _)| {
                proptest::collection::vec(
                    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                    rows * cols,
                )
                .prop_map(move |data| {
                    let ids = (0..rows).map(|i| format!("s{i}")).collect();
                    LabeledMatrix::new(
                        ids,
                        Array2::from_shape_vec((rows, cols), data).unwrap(),
                    )
                    .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn save_load_identity_both_formats(m in matrix_strategy()) {
                let dir = tempdir().unwrap();
                for format in [MatrixFormat::Binary, MatrixFormat::Csv] {
                    let path = dir.path().join("m.any");
                    m.save(&path, format).unwrap();
                    let back = LabeledMatrix::load(&path, format).unwrap();
                    prop_assert_eq!(back.stimulus_ids(), m.stimulus_ids());
                    for (a, b) in m.values().iter().zip(back.values().iter()) {
                        prop_assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            }

            #[test]
            fn align_preserves_row_multiset(m in matrix_strategy(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                let mut ids = m.stimulus_ids().to_vec();
                let mut rng = crate::rng::stream(seed, &["prop", "align"]);
                ids.shuffle(&mut rng);
                let aligned = m.align(&ids).unwrap();
                let key = |m: &LabeledMatrix| {
                    let mut rows: Vec<Vec<u64>> = m
                        .values()
                        .rows()
                        .into_iter()
                        .map(|r| r.iter().map(|v| v.to_bits()).collect())
                        .collect();
                    rows.sort();
                    rows
                };
                prop_assert_eq!(key(&aligned), key(&m));
            }
        }
    }
}
