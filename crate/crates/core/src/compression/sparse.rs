//! Top-k and random-k sparsifiers. Kept coordinates are passed through
//! unscaled, so both are contractive with `δ = 1 − √(1 − k/d)`.
//!
//! Simulator payload: `k` indices of `⌈log₂ d⌉` bits each (MSB first, zero
//! padded to a byte) followed by `k` big-endian `f64` values.

use rand::Rng;

use super::bits::{BitReader, BitWriter};
use super::index_bits;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sparse {
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Keeps the `k` largest magnitudes; ties go to the lower index.
pub(crate) fn top_k(x: &[f64], k: usize) -> Sparse {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    let mut indices: Vec<usize> = order[..k].to_vec();
    indices.sort_unstable();
    Sparse {
        values: indices.iter().map(|&i| x[i]).collect(),
        indices,
    }
}

pub(crate) fn rand_k<R: Rng + ?Sized>(x: &[f64], k: usize, rng: &mut R) -> Sparse {
    let mut indices = rand::seq::index::sample(rng, x.len(), k).into_vec();
    indices.sort_unstable();
    Sparse {
        values: indices.iter().map(|&i| x[i]).collect(),
        indices,
    }
}

impl Sparse {
    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn pack(&self, d: usize) -> Vec<u8> {
        let w = index_bits(d);
        let mut idx = BitWriter::with_capacity_bits(self.indices.len() as u64 * w as u64);
        for &i in &self.indices {
            idx.write(i as u64, w);
        }
        let mut out = idx.finish();
        for v in &self.values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn unpack(payload: &[u8], d: usize, k: usize) -> Result<Self> {
        let w = index_bits(d);
        let idx_bytes = (k as u64 * w as u64).div_ceil(8) as usize;
        if payload.len() != idx_bytes + 8 * k {
            return Err(Error::MalformedPayload(format!(
                "sparse payload has {} bytes, expected {}",
                payload.len(),
                idx_bytes + 8 * k
            )));
        }
        let mut r = BitReader::new(&payload[..idx_bytes]);
        let mut indices = Vec::with_capacity(k);
        for _ in 0..k {
            let i = r.read(w)? as usize;
            if i >= d || indices.last().is_some_and(|&prev| prev >= i) {
                return Err(Error::MalformedPayload(format!("bad index {i}")));
            }
            indices.push(i);
        }
        r.expect_end()?;
        let values = payload[idx_bytes..]
            .chunks_exact(8)
            .map(|b| f64::from_be_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Sparse { indices, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::{Purpose, RngStream};

    #[test]
    fn top_k_breaks_ties_by_index() {
        let s = top_k(&[1.0, -1.0, 0.5, 1.0], 2);
        assert_eq!(s.indices, vec![0, 1]);
        assert_eq!(s.to_dense(4), vec![1.0, -1.0, 0.0, 0.0]);
        let s = top_k(&[0.1, -3.0, 2.0], 1);
        assert_eq!(s.to_dense(3), vec![0.0, -3.0, 0.0]);
    }

    #[test]
    fn rand_k_keeps_k_distinct_unscaled() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
        let mut rng = RngStream::new(5, 0, 0, Purpose::Test).rng();
        let s = rand_k(&x, 4, &mut rng);
        assert_eq!(s.indices.len(), 4);
        assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
        for (&i, &v) in s.indices.iter().zip(&s.values) {
            assert_eq!(v, x[i]);
        }
    }

    #[test]
    fn unpack_rejects_unsorted_indices() {
        let s = Sparse {
            indices: vec![2, 1],
            values: vec![1.0, 2.0],
        };
        assert!(Sparse::unpack(&s.pack(4), 4, 2).is_err());
    }
}
