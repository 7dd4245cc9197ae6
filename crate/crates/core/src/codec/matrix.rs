use crate::error::{Error, Result};
use crate::io::{csv_f64, csv_row};
use rand::Rng;

const MAGIC: &[u8; 4] = b"PLMX";

/// Dense row-major real matrix: a data block or a worker result.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TaskMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}×{cols} matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("matrix", "entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    /// Entries uniform on `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn check_same(&self, o: &TaskMatrix) -> Result<()> {
        if self.shape() != o.shape() {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape(), o.shape())));
        }
        Ok(())
    }

    pub fn add(&self, o: &TaskMatrix) -> Result<TaskMatrix> {
        self.check_same(o)?;
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, o: &TaskMatrix) -> Result<TaskMatrix> {
        self.check_same(o)?;
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, k: f64) -> TaskMatrix {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * k).collect() }
    }

    /// `(a, b) → (a + b, a − b)` in place.
    pub(crate) fn butterfly(a: &mut TaskMatrix, b: &mut TaskMatrix) {
        for (x, y) in a.data.iter_mut().zip(b.data.iter_mut()) {
            let (p, q) = (*x, *y);
            *x = p + q;
            *y = p - q;
        }
    }

    pub fn matmul(&self, o: &TaskMatrix) -> Result<TaskMatrix> {
        if self.cols != o.rows {
            return Err(Error::Shape(format!("cannot multiply {:?} by {:?}", self.shape(), o.shape())));
        }
        let mut out = vec![0.0; self.rows * o.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let row = &o.data[k * o.cols..(k + 1) * o.cols];
                for (dst, b) in out[i * o.cols..(i + 1) * o.cols].iter_mut().zip(row) {
                    *dst += a * b;
                }
            }
        }
        Ok(Self { rows: self.rows, cols: o.cols, data: out })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `max |self − reference| / max |reference|`.
    pub fn relative_error(&self, reference: &TaskMatrix) -> Result<f64> {
        self.check_same(reference)?;
        let diff = self
            .data
            .iter()
            .zip(&reference.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = reference.max_abs();
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| csv_f64(self.get(i, j))).collect();
            out.push_str(&csv_row(&row));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{f:?}: {e}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    /// `"PLMX"`, `u32` rows, `u32` cols, then little-endian `f64` entries.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Parse("missing PLMX header".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != 8 * rows * cols {
            return Err(Error::Parse(format!("expected {} payload bytes, got {}", 8 * rows * cols, body.len())));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, cols, data)
    }
}
