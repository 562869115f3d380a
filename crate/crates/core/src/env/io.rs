use super::{CovarianceModel, EnvParams, EnvironmentField};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const ENV_MAGIC: &[u8; 7] = b"PLYENV1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvHeader {
    pub hurst: f64,
    pub delta: f64,
    pub cutoff: u64,
    pub n_time: u64,
    pub x_lo: i64,
    pub x_hi: i64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvDump {
    pub header: EnvHeader,
    /// Row-major, rows `1..=n_time`, sites `x_lo..=x_hi`.
    pub values: Vec<f64>,
}

impl EnvDump {
    pub fn get(&self, i: usize, x: i64) -> f64 {
        let w = (self.header.x_hi - self.header.x_lo + 1) as usize;
        self.values[(i - 1) * w + (x - self.header.x_lo) as usize]
    }
}

impl EnvironmentField {
    pub fn header(&self) -> EnvHeader {
        EnvHeader {
            hurst: self.params.hurst,
            delta: self.params.delta,
            cutoff: self.params.cutoff as u64,
            n_time: self.n_time as u64,
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            seed: self.seed,
        }
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let h = self.header();
        let mut buf = Vec::with_capacity(7 + 56 + 8 * self.values().len());
        buf.extend_from_slice(ENV_MAGIC);
        buf.extend_from_slice(&h.hurst.to_le_bytes());
        buf.extend_from_slice(&h.delta.to_le_bytes());
        buf.extend_from_slice(&h.cutoff.to_le_bytes());
        buf.extend_from_slice(&h.n_time.to_le_bytes());
        buf.extend_from_slice(&h.x_lo.to_le_bytes());
        buf.extend_from_slice(&h.x_hi.to_le_bytes());
        buf.extend_from_slice(&h.seed.to_le_bytes());
        for v in self.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

fn word(bytes: &[u8], at: usize) -> [u8; 8] {
    bytes[at..at + 8].try_into().expect("8-byte slice")
}

pub fn read_env_binary(path: &Path) -> Result<EnvDump> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let head = 7 + 7 * 8;
    if bytes.len() < head || &bytes[..7] != ENV_MAGIC {
        return Err(Error::Format(format!("{}: not a PLYENV1 file", path.display())));
    }
    let header = EnvHeader {
        hurst: f64::from_le_bytes(word(&bytes, 7)),
        delta: f64::from_le_bytes(word(&bytes, 15)),
        cutoff: u64::from_le_bytes(word(&bytes, 23)),
        n_time: u64::from_le_bytes(word(&bytes, 31)),
        x_lo: i64::from_le_bytes(word(&bytes, 39)),
        x_hi: i64::from_le_bytes(word(&bytes, 47)),
        seed: u64::from_le_bytes(word(&bytes, 55)),
    };
    if header.x_hi < header.x_lo {
        return Err(Error::Format("x_hi < x_lo in header".into()));
    }
    let count = header.n_time as usize * (header.x_hi - header.x_lo + 1) as usize;
    if bytes.len() != head + 8 * count {
        return Err(Error::Format(format!(
            "{}: expected {count} values, payload holds {} bytes",
            path.display(),
            bytes.len() - head
        )));
    }
    let values = bytes[head..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(EnvDump { header, values })
}

/// CSV `k,gamma,asymptote,ratio` for `k = 0..=k_max`; the ratio is blank at `k = 0`.
pub fn write_gamma_csv(path: &Path, params: &EnvParams, k_max: usize) -> Result<()> {
    let cov = CovarianceModel::build(params, k_max)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut out = String::from("k,gamma,asymptote,ratio\n");
    for k in 0..=k_max as i64 {
        let g = cov.gamma(k);
        if k == 0 {
            out.push_str(&format!("0,{g:e},,\n"));
        } else {
            let a = cov.asymptote(k);
            out.push_str(&format!("{k},{g:e},{a:e},{:e}\n", g / a));
        }
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
