//! Randomized quantizer
//! `Q(x) = sign(x)·‖x‖/(sτ) · ⌊s|x|/‖x‖ + ξ⌋`, `ξ ~ U[0,1]^d`,
//! with `τ = 1 + min{d/s², √d/s}`.
//!
//! Payload layout, most significant bit first:
//! `[levels: d × ⌈log₂(s+1)⌉][signs: d bits, 1 = negative][norm: f32 big-endian]`.
//! The reconstruction always uses the `f32`-rounded norm so the direct and
//! wire paths agree bit for bit.

use rand::Rng;

use super::bits::{BitReader, BitWriter};
use super::{level_bits, RngStream};
use crate::{Error, Result};

pub fn qsgd_tau(d: usize, s: u32) -> f64 {
    let d = d as f64;
    let s = s as f64;
    1.0 + (d / (s * s)).min(d.sqrt() / s)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Quantized {
    levels: Vec<u32>,
    negative: Vec<bool>,
    norm: f32,
}

pub(crate) fn quantize<R: Rng + ?Sized>(x: &[f64], s: u32, rng: &mut R) -> Result<Quantized> {
    let d = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("qsgd norm"));
    }
    if norm == 0.0 {
        return Ok(Quantized {
            levels: vec![0; d],
            negative: vec![false; d],
            norm: 0.0,
        });
    }
    let norm32 = norm as f32;
    if !norm32.is_finite() {
        return Err(Error::NonFinite("qsgd norm (exceeds f32 range)"));
    }
    let sf = s as f64;
    let levels = x
        .iter()
        .map(|v| {
            let xi: f64 = rng.random();
            let u = sf * v.abs() / norm + xi;
            // s|x_i|/‖x‖ ≤ s up to roundoff, so the floor lies in {0..=s}
            (u.floor() as u32).min(s)
        })
        .collect();
    Ok(Quantized {
        levels,
        negative: x.iter().map(|&v| v < 0.0).collect(),
        norm: norm32,
    })
}

impl Quantized {
    pub fn reconstruct(&self, s: u32) -> Vec<f64> {
        let d = self.levels.len();
        let scale = self.norm as f64 / (s as f64 * qsgd_tau(d, s));
        self.levels
            .iter()
            .zip(&self.negative)
            .map(|(&l, &neg)| {
                let mag = scale * l as f64;
                if neg {
                    -mag
                } else {
                    mag
                }
            })
            .collect()
    }

    pub fn pack(&self, s: u32) -> (Vec<u8>, u64) {
        let d = self.levels.len() as u64;
        let w = level_bits(s);
        let mut out = BitWriter::with_capacity_bits(d * w as u64 + d + 32);
        for &l in &self.levels {
            out.write(l as u64, w);
        }
        for &neg in &self.negative {
            out.write(neg as u64, 1);
        }
        out.write(self.norm.to_bits() as u64, 32);
        let bits = out.bit_len();
        (out.finish(), bits)
    }

    pub fn unpack(payload: &[u8], d: usize, s: u32) -> Result<Self> {
        let w = level_bits(s);
        let bits = d as u64 * (w as u64 + 1) + 32;
        if payload.len() as u64 != bits.div_ceil(8) {
            return Err(Error::MalformedPayload(format!(
                "qsgd payload has {} bytes, expected {}",
                payload.len(),
                bits.div_ceil(8)
            )));
        }
        let mut r = BitReader::new(payload);
        let mut levels = Vec::with_capacity(d);
        for _ in 0..d {
            let l = r.read(w)?;
            if l > s as u64 {
                return Err(Error::MalformedPayload(format!("level {l} exceeds s = {s}")));
            }
            levels.push(l as u32);
        }
        let mut negative = Vec::with_capacity(d);
        for _ in 0..d {
            negative.push(r.read(1)? == 1);
        }
        let norm = f32::from_bits(r.read(32)? as u32);
        if !norm.is_finite() || norm.is_sign_negative() {
            return Err(Error::MalformedPayload(format!("invalid norm {norm}")));
        }
        r.expect_end()?;
        Ok(Quantized {
            levels,
            negative,
            norm,
        })
    }
}

/// Quantizes `x` with `s` levels, drawing `ξ` from `stream`.
pub fn qsgd_compress(x: &[f64], s: u32, stream: RngStream) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::InvalidCompressor("qsgd needs s >= 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("qsgd"));
    }
    Ok(quantize(x, s, &mut stream.rng())?.reconstruct(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::Purpose;

    fn stream(seed: u64) -> RngStream {
        RngStream::new(seed, 0, 0, Purpose::Test)
    }

    #[test]
    fn tau_values() {
        assert_eq!(qsgd_tau(1, 1), 2.0);
        assert_eq!(qsgd_tau(2, 1), 1.0 + 2f64.sqrt());
        assert_eq!(qsgd_tau(64, 4), 3.0);
        assert_eq!(qsgd_tau(16, 4), 2.0);
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        for d in 1..6 {
            let out = qsgd_compress(&vec![0.0; d], 3, stream(d as u64)).unwrap();
            assert_eq!(out, vec![0.0; d]);
        }
    }

    #[test]
    fn scalar_quantizes_to_half() {
        // τ = 2 and ⌊1 + ξ⌋ = 1 for every ξ in [0, 1)
        for seed in 0..1000 {
            assert_eq!(qsgd_compress(&[3.0], 1, stream(seed)).unwrap(), vec![1.5]);
            assert_eq!(qsgd_compress(&[-3.0], 1, stream(seed)).unwrap(), vec![-1.5]);
        }
    }

    #[test]
    fn two_dim_levels_follow_the_uniform_law() {
        // x = (3, 4): level of x₁ is 1 with probability 3/5, of x₂ with 4/5.
        // Each output coordinate is then (5/τ)·Bernoulli(p).
        let tau = 1.0 + 2f64.sqrt();
        let trials = 20_000;
        let mut sum = [0.0f64; 2];
        let mut ones = [0usize; 2];
        for seed in 0..trials {
            let q = qsgd_compress(&[3.0, 4.0], 1, stream(seed)).unwrap();
            for k in 0..2 {
                let level = (q[k] * tau / 5.0).round();
                assert!(level == 0.0 || level == 1.0);
                ones[k] += level as usize;
                sum[k] += q[k];
            }
        }
        let p = [0.6, 0.8];
        for k in 0..2 {
            let mean = sum[k] / trials as f64;
            let expected = [3.0, 4.0][k] / tau;
            let se = (5.0 / tau) * (p[k] * (1.0 - p[k]) / trials as f64).sqrt();
            assert!((mean - expected).abs() <= 3.0 * se, "coord {k}: {mean} vs {expected}");
            let freq = ones[k] as f64 / trials as f64;
            assert!((freq - p[k]).abs() <= 3.0 * (p[k] * (1.0 - p[k]) / trials as f64).sqrt());
        }
    }

    #[test]
    fn mean_is_x_over_tau() {
        let x = [0.5, -1.25, 2.0, 0.0, 0.75, -0.1];
        let (s, trials) = (2, 20_000);
        let tau = qsgd_tau(x.len(), s);
        let mut sum = vec![0.0; x.len()];
        let mut sumsq = vec![0.0; x.len()];
        for seed in 0..trials {
            let q = qsgd_compress(&x, s, stream(seed)).unwrap();
            for k in 0..x.len() {
                sum[k] += q[k];
                sumsq[k] += q[k] * q[k];
            }
        }
        let nt = trials as f64;
        for k in 0..x.len() {
            let mean = sum[k] / nt;
            let var = (sumsq[k] / nt - mean * mean).max(0.0);
            let se = (var / nt).sqrt();
            assert!((mean - x[k] / tau).abs() <= 3.0 * se + 1e-12, "coord {k}");
        }
    }

    #[test]
    fn single_nonzero_coordinate_stays_in_range() {
        for seed in 0..200 {
            let q = quantize(&[0.0, -7.5, 0.0], 5, &mut stream(seed).rng()).unwrap();
            assert!(q.levels.iter().all(|&l| l <= 5));
            assert_eq!(q.levels[1], 5);
        }
    }

    #[test]
    fn rejects_overflowing_norm() {
        assert!(qsgd_compress(&[1e300, 1e300], 2, stream(0)).is_err());
    }
}
