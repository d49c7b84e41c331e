//! Observations and their on-disk formats.
//!
//! CSV: one row per observation, optional header. Binary: the magic `SKDB`,
//! then `n` and `d` as little-endian `u64`, then the `d` columns one after the
//! other, each as `n` little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"SKDB";

/// `n × d` observations stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidData(format!(
                    "row {} has {} columns, expected {d}",
                    i + 1,
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), d, values)
    }

    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidData(format!("dataset must be nonempty, got {n}×{d}")));
        }
        if values.len() != n * d {
            return Err(Error::InvalidData(format!(
                "{} values do not fill a {n}×{d} table",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos / d + 1,
                pos % d + 1
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// `(min, max)` of column `j`.
    pub fn range(&self, j: usize) -> (f64, f64) {
        self.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])))
    }

    /// Adds `shift[j]` to every value in column `j`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let values = self.values.iter().enumerate().map(|(k, v)| v + shift[k % self.d]).collect();
        Self { n: self.n, d: self.d, values }
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                // A non-numeric first line is a header.
                Err(_) if line == 0 => continue,
                Err(_) => {
                    return Err(Error::InvalidData(format!("line {}: non-numeric field", line + 1)));
                }
            }
        }
        Self::from_rows(&rows)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(mut reader: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::InvalidData("binary dataset: bad magic".into()));
        }
        let mut word = [0u8; 8];
        reader.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        reader.read_exact(&mut word)?;
        let d = u64::from_le_bytes(word) as usize;
        let total = n.checked_mul(d).ok_or_else(|| Error::InvalidData("binary dataset: size overflow".into()))?;
        let mut values = vec![0.0; total];
        for j in 0..d {
            for i in 0..n {
                reader.read_exact(&mut word)?;
                values[i * d + j] = f64::from_le_bytes(word);
            }
        }
        Self::from_row_major(n, d, values)
    }

    pub fn write_binary(&self, mut writer: impl Write) -> Result<()> {
        writer.write_all(BINARY_MAGIC)?;
        writer.write_all(&(self.n as u64).to_le_bytes())?;
        writer.write_all(&(self.d as u64).to_le_bytes())?;
        for j in 0..self.d {
            for i in 0..self.n {
                writer.write_all(&self.get(i, j).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loads by extension: `.bin` is binary, anything else CSV.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "bin") {
            Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
        } else {
            Self::load_csv(path)
        }
    }
}
