//! Contractive compression operators and their wire codecs.
//!
//! A compressor `Q` is contractive with factor `δ ∈ (0, 1]` when
//! `E‖Q(x) − x‖² ≤ (1 − δ)² ‖x‖²`. Every compressor here comes with an
//! encoder producing an [`EncodedMessage`] and a decoder that reproduces the
//! compressed vector bit for bit, so `decode(encode(x)) == compress(x)` when
//! both draw from the same [`RngStream`].
//!
//! Wire accounting follows one rule: real numbers cost 32 bits. For the
//! quantizer the payload is exactly that layout (levels, signs, `f32` norm).
//! The identity and sparsifying codecs account their values at 32 bits but
//! carry `f64` in the simulator payload so the simulation stays lossless; see
//! [`EncodedMessage::bit_length`].

mod bits;
mod contraction;
mod qsgd;
mod rng;
mod sparse;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use contraction::{contraction_test, contraction_test_on, ContractionReport, MIN_TRIALS};
pub use qsgd::{qsgd_compress, qsgd_tau};
pub use rng::{Purpose, RngStream};

use crate::{Error, Result};

/// Compressor family and parameters, as written in configs:
/// `{"kind": "qsgd", "s": 4}`, `{"kind": "topk", "k": 8}`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CompressorKind {
    Qsgd { s: u32 },
    TopK { k: usize },
    RandK { k: usize },
    Identity,
}

impl std::fmt::Display for CompressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CompressorKind::Qsgd { s } => write!(f, "qsgd s={s}"),
            CompressorKind::TopK { k } => write!(f, "topk k={k}"),
            CompressorKind::RandK { k } => write!(f, "randk k={k}"),
            CompressorKind::Identity => f.write_str("identity"),
        }
    }
}

impl Default for CompressorKind {
    fn default() -> Self {
        CompressorKind::Identity
    }
}

/// A validated compressor for vectors of dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compressor {
    pub kind: CompressorKind,
    pub d: usize,
}

/// Output of the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMessage {
    pub scheme: Compressor,
    pub payload: Vec<u8>,
    /// Bits charged for this message on the wire. Equals the payload length
    /// for `qsgd`; for the other codecs it counts each real as 32 bits.
    pub bit_length: u64,
}

/// Bits needed for one quantization level in `{0, …, s}`, i.e. `⌈log₂(s+1)⌉`.
pub fn level_bits(s: u32) -> u32 {
    32 - s.leading_zeros()
}

/// Bits needed for a coordinate index in `{0, …, d−1}`.
pub fn index_bits(d: usize) -> u32 {
    if d <= 1 {
        0
    } else {
        usize::BITS - (d - 1).leading_zeros()
    }
}

impl Compressor {
    pub fn new(kind: CompressorKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidCompressor("dimension must be at least 1".into()));
        }
        match kind {
            CompressorKind::Qsgd { s } if s == 0 => {
                return Err(Error::InvalidCompressor("qsgd needs s >= 1".into()))
            }
            CompressorKind::TopK { k } | CompressorKind::RandK { k } if k == 0 || k > d => {
                return Err(Error::InvalidCompressor(format!("k = {k} outside 1..={d}")))
            }
            _ => {}
        }
        Ok(Compressor { kind, d })
    }

    pub fn identity(d: usize) -> Self {
        Compressor {
            kind: CompressorKind::Identity,
            d,
        }
    }

    /// Contraction factor guaranteed for this compressor.
    pub fn certified_delta(&self) -> f64 {
        match self.kind {
            CompressorKind::Qsgd { s } => 1.0 / (2.0 * qsgd_tau(self.d, s)),
            CompressorKind::TopK { k } | CompressorKind::RandK { k } => {
                1.0 - (1.0 - k as f64 / self.d as f64).sqrt()
            }
            CompressorKind::Identity => 1.0,
        }
    }

    /// True when `compress(x) == x` exactly.
    pub fn is_lossless(&self) -> bool {
        match self.kind {
            CompressorKind::Identity => true,
            CompressorKind::TopK { k } => k == self.d,
            _ => false,
        }
    }

    /// Closed-form wire cost of one message.
    pub fn message_bits(&self) -> u64 {
        let d = self.d as u64;
        match self.kind {
            CompressorKind::Qsgd { s } => d * level_bits(s) as u64 + d + 32,
            CompressorKind::TopK { k } | CompressorKind::RandK { k } => {
                k as u64 * (index_bits(self.d) as u64 + 32)
            }
            CompressorKind::Identity => 32 * d,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("compressor"));
        }
        Ok(())
    }

    /// Applies the compressor directly, without going through bytes.
    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check_input(x)?;
        match self.kind {
            CompressorKind::Qsgd { s } => Ok(qsgd::quantize(x, s, rng)?.reconstruct(s)),
            CompressorKind::TopK { k } => Ok(sparse::top_k(x, k).to_dense(self.d)),
            CompressorKind::RandK { k } => Ok(sparse::rand_k(x, k, rng).to_dense(self.d)),
            CompressorKind::Identity => Ok(x.to_vec()),
        }
    }

    pub fn compress_stream(&self, x: &[f64], stream: RngStream) -> Result<Vec<f64>> {
        self.compress(x, &mut stream.rng())
    }

    /// Encodes `x`, drawing the compression randomness from `rng` exactly as
    /// [`Compressor::compress`] would.
    pub fn encode<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<EncodedMessage> {
        self.check_input(x)?;
        let (payload, bit_length) = match self.kind {
            CompressorKind::Qsgd { s } => {
                let q = qsgd::quantize(x, s, rng)?;
                let (payload, bits) = q.pack(s);
                debug_assert_eq!(bits, self.message_bits());
                (payload, bits)
            }
            CompressorKind::TopK { k } => (sparse::top_k(x, k).pack(self.d), self.message_bits()),
            CompressorKind::RandK { k } => {
                (sparse::rand_k(x, k, rng).pack(self.d), self.message_bits())
            }
            CompressorKind::Identity => (
                x.iter().flat_map(|v| v.to_be_bytes()).collect(),
                self.message_bits(),
            ),
        };
        Ok(EncodedMessage {
            scheme: *self,
            payload,
            bit_length,
        })
    }

    pub fn encode_stream(&self, x: &[f64], stream: RngStream) -> Result<EncodedMessage> {
        self.encode(x, &mut stream.rng())
    }
}

/// Decodes a message back into the compressed real vector.
pub fn decode(msg: &EncodedMessage) -> Result<Vec<f64>> {
    let c = msg.scheme;
    match c.kind {
        CompressorKind::Qsgd { s } => {
            if msg.bit_length != c.message_bits() {
                return Err(Error::MalformedPayload(format!(
                    "bit length {} does not match scheme ({})",
                    msg.bit_length,
                    c.message_bits()
                )));
            }
            Ok(qsgd::Quantized::unpack(&msg.payload, c.d, s)?.reconstruct(s))
        }
        CompressorKind::TopK { k } | CompressorKind::RandK { k } => {
            Ok(sparse::Sparse::unpack(&msg.payload, c.d, k)?.to_dense(c.d))
        }
        CompressorKind::Identity => {
            if msg.payload.len() != 8 * c.d {
                return Err(Error::MalformedPayload(format!(
                    "identity payload has {} bytes, expected {}",
                    msg.payload.len(),
                    8 * c.d
                )));
            }
            Ok(msg
                .payload
                .chunks_exact(8)
                .map(|b| f64::from_be_bytes(b.try_into().unwrap()))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qsgd(d: usize, s: u32) -> Compressor {
        Compressor::new(CompressorKind::Qsgd { s }, d).unwrap()
    }

    #[test]
    fn level_and_index_widths() {
        assert_eq!(level_bits(1), 1);
        assert_eq!(level_bits(3), 2);
        assert_eq!(level_bits(4), 3);
        assert_eq!(level_bits(7), 3);
        assert_eq!(level_bits(8), 4);
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(16), 4);
        assert_eq!(index_bits(17), 5);
    }

    #[test]
    fn certified_deltas() {
        assert_eq!(qsgd(1, 1).certified_delta(), 0.25);
        assert_eq!(Compressor::identity(5).certified_delta(), 1.0);
        let randk_full = Compressor::new(CompressorKind::RandK { k: 6 }, 6).unwrap();
        assert_eq!(randk_full.certified_delta(), 1.0);
        let topk = Compressor::new(CompressorKind::TopK { k: 1 }, 2).unwrap();
        assert!((topk.certified_delta() - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(Compressor::new(CompressorKind::Qsgd { s: 0 }, 4).is_err());
        assert!(Compressor::new(CompressorKind::TopK { k: 0 }, 4).is_err());
        assert!(Compressor::new(CompressorKind::RandK { k: 5 }, 4).is_err());
        assert!(Compressor::new(CompressorKind::Identity, 0).is_err());
    }

    #[test]
    fn message_sizes() {
        let stream = RngStream::new(1, 0, 0, Purpose::Test);
        let m = qsgd(1, 1).encode_stream(&[3.0], stream).unwrap();
        assert_eq!(m.bit_length, 34);
        assert_eq!(m.payload.len(), 5);
        let m = qsgd(4, 3).encode_stream(&[1.0, -2.0, 0.5, 0.0], stream).unwrap();
        assert_eq!(m.bit_length, 44);
        let m = Compressor::identity(3).encode_stream(&[1.0, 2.0, 3.0], stream).unwrap();
        assert_eq!(m.bit_length, 96);
    }

    #[test]
    fn scalar_example_round_trips() {
        let c = qsgd(1, 1);
        for seed in 0..1000 {
            let stream = RngStream::new(seed, 0, 0, Purpose::Test);
            let m = c.encode_stream(&[3.0], stream).unwrap();
            // [level 1][sign 0][3.0f32 = 0x40400000], MSB first, zero padded
            assert_eq!(m.payload, vec![0x90, 0x10, 0x00, 0x00, 0x00]);
            assert_eq!(decode(&m).unwrap(), vec![1.5]);
            assert_eq!(c.compress_stream(&[3.0], stream).unwrap(), vec![1.5]);
        }
    }

    #[test]
    fn zero_message() {
        let c = qsgd(5, 2);
        let stream = RngStream::new(9, 0, 0, Purpose::Test);
        let m = c.encode_stream(&[0.0; 5], stream).unwrap();
        let out = decode(&m).unwrap();
        assert!(out.iter().all(|v| v.to_bits() == 0));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let stream = RngStream::new(0, 0, 0, Purpose::Test);
        assert!(matches!(
            qsgd(2, 1).compress_stream(&[1.0, f64::NAN], stream),
            Err(Error::NonFinite(_))
        ));
        assert!(Compressor::identity(1).encode_stream(&[f64::INFINITY], stream).is_err());
    }

    #[test]
    fn decode_rejects_malformed_payloads() {
        let c = qsgd(4, 4);
        let stream = RngStream::new(3, 0, 0, Purpose::Test);
        let good = c.encode_stream(&[1.0, -1.0, 0.25, 2.0], stream).unwrap();

        let mut truncated = good.clone();
        truncated.payload.pop();
        assert!(decode(&truncated).is_err());

        let mut extra = good.clone();
        extra.payload.push(0);
        assert!(decode(&extra).is_err());

        // level field 0b111 = 7 > s
        let mut bad_level = good.clone();
        bad_level.payload[0] |= 0b1110_0000;
        assert!(decode(&bad_level).is_err());

        let mut bad_len = good.clone();
        bad_len.bit_length += 1;
        assert!(decode(&bad_len).is_err());

        let ident = Compressor::identity(2).encode_stream(&[1.0, 2.0], stream).unwrap();
        let mut short = ident.clone();
        short.payload.truncate(12);
        assert!(decode(&short).is_err());
    }

    fn kinds(d: usize) -> Vec<Compressor> {
        let k = (d / 4).max(1);
        vec![
            qsgd(d, 1),
            qsgd(d, 4),
            Compressor::new(CompressorKind::TopK { k }, d).unwrap(),
            Compressor::new(CompressorKind::RandK { k }, d).unwrap(),
            Compressor::identity(d),
        ]
    }

    proptest! {
        #[test]
        fn decode_of_encode_is_compress(
            x in prop::collection::vec(-1e3f64..1e3, 1..40),
            seed in any::<u64>(),
        ) {
            for c in kinds(x.len()) {
                let stream = RngStream::new(seed, 1, 2, Purpose::Test);
                let msg = c.encode_stream(&x, stream).unwrap();
                prop_assert_eq!(msg.bit_length, c.message_bits());
                let direct = c.compress_stream(&x, stream).unwrap();
                let via_wire = decode(&msg).unwrap();
                let a: Vec<u64> = direct.iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = via_wire.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
                // same id, same bytes
                prop_assert_eq!(c.encode_stream(&x, stream).unwrap(), msg);
            }
        }
    }
}
