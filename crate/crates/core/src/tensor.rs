//! Client gradient tensors, either backed by real `f32` data or size-only.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const BYTES_PER_PARAM: u64 = 4;
/// Sizes are reported in binary megabytes throughout.
pub const BYTES_PER_MB: f64 = (1u64 << 20) as f64;

#[derive(Clone, Debug)]
pub enum Payload {
    Materialized(Arc<Vec<f32>>),
    Phantom,
}

/// One gradient vector (or a contiguous slice of one). Cloning is cheap;
/// element data is shared and never mutated after construction.
#[derive(Clone, Debug)]
pub struct GradientTensor {
    param_count: u64,
    payload: Payload,
    seed: Option<u64>,
}

impl GradientTensor {
    pub fn from_vec(data: Vec<f32>) -> Self {
        Self {
            param_count: data.len() as u64,
            payload: Payload::Materialized(Arc::new(data)),
            seed: None,
        }
    }

    pub fn phantom(param_count: u64) -> Self {
        Self {
            param_count,
            payload: Payload::Phantom,
            seed: None,
        }
    }

    /// Phantom tensor whose byte size is `mb` megabytes, rounded to whole params.
    pub fn phantom_mb(mb: f64) -> Self {
        Self::phantom(params_for_mb(mb))
    }

    /// Seeded uniform(-1, 1) tensor.
    pub fn random(param_count: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..param_count)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        Self {
            seed: Some(seed),
            ..Self::from_vec(data)
        }
    }

    pub fn param_count(&self) -> u64 {
        self.param_count
    }

    pub fn byte_size(&self) -> u64 {
        self.param_count * BYTES_PER_PARAM
    }

    pub fn size_mb(&self) -> f64 {
        self.byte_size() as f64 / BYTES_PER_MB
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_phantom(&self) -> bool {
        matches!(self.payload, Payload::Phantom)
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn values(&self) -> Result<&[f32]> {
        match &self.payload {
            Payload::Materialized(v) => Ok(v.as_slice()),
            Payload::Phantom => Err(Error::PhantomAccess {
                param_count: self.param_count,
            }),
        }
    }

    /// Bitwise equality of shape and contents; phantoms compare by size.
    pub fn bit_eq(&self, other: &GradientTensor) -> bool {
        if self.param_count != other.param_count {
            return false;
        }
        match (&self.payload, &other.payload) {
            (Payload::Phantom, Payload::Phantom) => true,
            (Payload::Materialized(a), Payload::Materialized(b)) => a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()),
            _ => false,
        }
    }

    /// Descriptor used wherever only the size matters.
    pub fn shape_only(&self) -> GradientTensor {
        GradientTensor::phantom(self.param_count)
    }
}

pub fn params_for_mb(mb: f64) -> u64 {
    (mb * BYTES_PER_MB / BYTES_PER_PARAM as f64).round() as u64
}

pub fn mb_of_bytes(bytes: u64) -> f64 {
    bytes as f64 / BYTES_PER_MB
}

/// Writes the oracle-vector format: 8-byte little-endian count followed by
/// little-endian `f32` values.
pub fn write_golden(path: impl AsRef<Path>, values: &[f32]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + values.len() * 4);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_golden(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_golden(&bytes)
}

pub fn decode_golden(bytes: &[u8]) -> Result<Vec<f32>> {
    let (head, body) = bytes
        .split_at_checked(8)
        .ok_or_else(|| Error::InvalidArgument("golden file shorter than its header".into()))?;
    let count = u64::from_le_bytes(head.try_into().expect("8-byte header"));
    if body.len() as u64 != count * BYTES_PER_PARAM {
        return Err(Error::InvalidArgument(format!(
            "golden file declares {count} values but carries {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect())
}
