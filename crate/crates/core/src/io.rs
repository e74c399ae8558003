//! Model checkpoints and data matrices on disk.
//!
//! Checkpoint: a JSON object
//! `{"format": "poisson-relax-pvae", "version": 1, "input_dim": D, "latent_dim": K,
//!   "seed": s, "enc_weights": [K·D, row-major], "dec_weights": [D·K, row-major],
//!   "prior_lograte": [K]}`.
//!
//! Binary matrix: the 8-byte magic `PRMAT\0\0\x01`, then rows and columns as
//! little-endian `u64`, then `rows · cols` little-endian `f64` in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pvae::LinearPvae;

pub const CHECKPOINT_FORMAT: &str = "poisson-relax-pvae";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MATRIX_MAGIC: [u8; 8] = *b"PRMAT\0\0\x01";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    input_dim: usize,
    latent_dim: usize,
    seed: u64,
    enc_weights: Vec<f64>,
    dec_weights: Vec<f64>,
    prior_lograte: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn checkpoint_to_string(model: &LinearPvae, seed: u64) -> Result<String> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        input_dim: model.input_dim(),
        latent_dim: model.latent_dim(),
        seed,
        enc_weights: row_major(&model.enc_weights),
        dec_weights: row_major(&model.dec_weights),
        prior_lograte: model.prior_lograte.as_slice().to_vec(),
    };
    serde_json::to_string_pretty(&ck).map_err(|e| Error::Format(e.to_string()))
}

/// Parse a checkpoint; returns the model and the seed it was trained with.
pub fn checkpoint_from_str(s: &str) -> Result<(LinearPvae, u64)> {
    let ck: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unexpected checkpoint format '{}'", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", ck.version)));
    }
    let (d, k) = (ck.input_dim, ck.latent_dim);
    if ck.enc_weights.len() != k * d || ck.dec_weights.len() != d * k || ck.prior_lograte.len() != k {
        return Err(Error::Format("checkpoint array lengths do not match its dimensions".into()));
    }
    let enc = DMatrix::from_row_slice(k, d, &ck.enc_weights);
    let dec = DMatrix::from_row_slice(d, k, &ck.dec_weights);
    let model = LinearPvae::from_parts(enc, dec, DVector::from_vec(ck.prior_lograte))?;
    Ok((model, ck.seed))
}

pub fn save_checkpoint(path: &Path, model: &LinearPvae, seed: u64) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(model, seed)? + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(LinearPvae, u64)> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

pub fn write_matrix_binary(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in row_major(m) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for a matrix header".into()))?;
    if magic != MATRIX_MAGIC {
        return Err(Error::Format("not a binary matrix file (bad magic)".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        r.read_exact(&mut word).map_err(|_| Error::Format("truncated matrix data".into()))?;
        data.push(f64::from_le_bytes(word));
    }
    if r.read(&mut word)? != 0 {
        return Err(Error::Format("trailing bytes after matrix data".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Headered CSV with one numeric column per input dimension.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let cols = reader.headers().map_err(csv_err)?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != cols {
            return Err(Error::Format(format!("row {} has {} fields, header has {cols}", i + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: '{field}' is not a number", i + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record((0..m.ncols()).map(|j| format!("x{j}"))).map_err(csv_err)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `.csv` files are read as CSV, anything else as the binary format.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let is_csv = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_matrix_csv(path)
    } else {
        read_matrix_binary(path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("poisson-relax-io-{}-{name}", std::process::id()))
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = LinearPvae::init(3, 5, 42).unwrap();
        let s = checkpoint_to_string(&m, 42).unwrap();
        let (back, seed) = checkpoint_from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(seed, 42);
        assert!(checkpoint_from_str(&s.replace("poisson-relax-pvae", "other")).is_err());
        assert!(checkpoint_from_str(&s.replace("\"version\": 1", "\"version\": 9")).is_err());
    }

    #[test]
    fn matrix_round_trips() {
        let m = DMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0) - 0.1);
        let p = tmp("m.bin");
        write_matrix_binary(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
        let c = tmp("m.csv");
        write_matrix_csv(&c, &m).unwrap();
        assert_eq!(read_matrix(&c).unwrap(), m);
        std::fs::write(&p, b"garbage!").unwrap();
        assert!(read_matrix(&p).is_err());
        std::fs::write(&c, "a,b\n1,x\n").unwrap();
        assert!(read_matrix(&c).is_err());
        let _ = std::fs::remove_file(p);
        let _ = std::fs::remove_file(c);
    }
}
