//! Piecewise-constant control pulses and their CSV form (`t_ns,u_ghz`).

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitude cap on u in GHz (10/π).
pub const DEFAULT_AMPLITUDE_CAP: f64 = 10.0 / std::f64::consts::PI;
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    dt: f64,
    amplitudes: Vec<f64>,
}

impl Pulse {
    pub fn new(dt: f64, amplitudes: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("pulse must contain at least one sample".into()));
        }
        Ok(Self { dt, amplitudes })
    }

    pub fn zeros(dt: f64, len: usize) -> Result<Self> {
        Self::new(dt, vec![0.0; len])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.amplitudes.len() as f64
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.iter().fold(0.0_f64, |m, u| m.max(u.abs()))
    }

    pub fn within_cap(&self, cap: f64) -> bool {
        self.amplitudes.iter().all(|u| u.abs() <= cap)
    }

    pub fn clipped(mut self, cap: f64) -> Self {
        for u in &mut self.amplitudes {
            *u = u.clamp(-cap, cap);
        }
        self
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.dt, self.amplitudes[..n.min(self.len())].to_vec())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ns,u_ghz")?;
        for (k, u) in self.amplitudes.iter().enumerate() {
            writeln!(w, "{},{}", k as f64 * self.dt, u)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty pulse file".into()))??;
        if header.trim() != "t_ns,u_ghz" {
            return Err(Error::Parse(format!("expected header `t_ns,u_ghz`, found `{}`", header.trim())));
        }
        let mut times = Vec::new();
        let mut amplitudes = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (t, u) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", n + 2)))?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))
            };
            times.push(parse(t)?);
            amplitudes.push(parse(u)?);
        }
        let dt = match times.len() {
            0 => return Err(Error::Parse("pulse file has no samples".into())),
            1 => DEFAULT_DT,
            n => {
                let raw = (times[n - 1] - times[0]) / (n - 1) as f64;
                (raw * 1e12).round() / 1e12
            }
        };
        Self::new(dt, amplitudes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let p = Pulse::new(0.05, vec![0.0, 0.1234567890123, -3.0, 1e-9]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t_ns,u_ghz\n0,0\n0.05,"));
        assert_eq!(Pulse::read_csv(&buf[..]).unwrap(), p);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Pulse::new(0.0, vec![1.0]).is_err());
        assert!(Pulse::new(0.05, vec![]).is_err());
        assert!(Pulse::read_csv("time,u\n0,1\n".as_bytes()).is_err());
        assert!(Pulse::read_csv("t_ns,u_ghz\n0,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn cap_and_duration() {
        let p = Pulse::new(0.05, vec![4.0, -4.0, 1.0]).unwrap();
        assert!((p.duration() - 0.15).abs() < 1e-15);
        assert!(!p.within_cap(DEFAULT_AMPLITUDE_CAP));
        let c = p.clipped(DEFAULT_AMPLITUDE_CAP);
        assert_eq!(c.max_abs(), DEFAULT_AMPLITUDE_CAP);
        assert!(c.within_cap(DEFAULT_AMPLITUDE_CAP));
    }
}
