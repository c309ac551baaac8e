//! Deterministic distance-bounded vector quantization.
//!
//! Vectors are rounded to the cubic lattice `s·ℤ^d` with spacing
//! `s = 2ε/√d`, which keeps the ℓ2 rounding error at most `ε`. Only the
//! lattice coordinates modulo `m` (the "colors") are transmitted. A decoder
//! holding any reference point within `y` of the original recovers the
//! lattice point by picking, per coordinate, the representative of the color
//! class nearest to the reference. The modulus is the smallest integer for
//! which that choice is unique inside the ∞-norm ball of radius `y + ε`.

use crate::error::{Error, Result};

/// Parameters of one encode/decode exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    dim: usize,
    y: f64,
    eps: f64,
    cell: f64,
    modulus: u64,
    bits_per_coord: u32,
}

impl QuantSpec {
    /// Builds the parameters for vectors of length `dim`, input distance bound `y`
    /// and output error bound `eps`.
    pub fn new(dim: usize, y: f64, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "eps must be positive and finite, got {eps}"
            )));
        }
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::InvalidSpec(format!("y must be nonnegative and finite, got {y}")));
        }
        let root_d = (dim as f64).sqrt();
        let cell = 2.0 * eps / root_d;
        if y <= eps {
            return Ok(QuantSpec {
                dim,
                y,
                eps,
                cell,
                modulus: 1,
                bits_per_coord: 0,
            });
        }
        let ratio = root_d * (y + eps) / eps;
        if ratio >= (1u64 << 62) as f64 {
            return Err(Error::InvalidSpec(format!(
                "y/eps ratio {ratio:.3e} exceeds the representable modulus range"
            )));
        }
        let mut modulus = ratio.floor() as u64 + 1;
        // floor() of a rounded ratio can land one short of the exact value.
        while modulus as f64 * cell <= 2.0 * (y + eps) {
            modulus += 1;
        }
        let bits_per_coord = 64 - (modulus - 1).leading_zeros();
        Ok(QuantSpec {
            dim,
            y,
            eps,
            cell,
            modulus,
            bits_per_coord,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Lattice spacing `2ε/√d`.
    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn bits_per_coord(&self) -> u32 {
        self.bits_per_coord
    }

    /// Exact size of an encoded vector in bits.
    pub fn payload_bits(&self) -> u64 {
        self.dim as u64 * u64::from(self.bits_per_coord)
    }

    /// `true` when the decoder simply returns its reference.
    pub fn is_trivial(&self) -> bool {
        self.bits_per_coord == 0
    }
}

/// Colors of one encoded vector together with the parameters used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBlob {
    colors: Vec<u64>,
    spec: QuantSpec,
}

impl EncodedBlob {
    pub fn colors(&self) -> &[u64] {
        &self.colors
    }

    pub fn spec(&self) -> &QuantSpec {
        &self.spec
    }

    pub fn payload_bits(&self) -> u64 {
        self.colors.len() as u64 * u64::from(self.spec.bits_per_coord)
    }

    /// Packs the colors `bits_per_coord` bits each, least significant bit
    /// first, coordinate 0 first. The final byte is zero padded.
    pub fn pack(&self) -> Vec<u8> {
        let width = self.spec.bits_per_coord as usize;
        let total = self.colors.len() * width;
        let mut out = vec![0u8; total.div_ceil(8)];
        let mut pos = 0usize;
        for &color in &self.colors {
            for bit in 0..width {
                if (color >> bit) & 1 == 1 {
                    out[pos / 8] |= 1 << (pos % 8);
                }
                pos += 1;
            }
        }
        out
    }

    /// Inverse of [`EncodedBlob::pack`].
    pub fn unpack(bytes: &[u8], spec: QuantSpec) -> Result<Self> {
        let width = spec.bits_per_coord as usize;
        if width == 0 {
            return Ok(EncodedBlob {
                colors: Vec::new(),
                spec,
            });
        }
        let total = spec.dim * width;
        if bytes.len() != total.div_ceil(8) {
            return Err(Error::DimensionMismatch {
                expected: total.div_ceil(8),
                got: bytes.len(),
            });
        }
        let mut colors = Vec::with_capacity(spec.dim);
        let mut pos = 0usize;
        for _ in 0..spec.dim {
            let mut color = 0u64;
            for bit in 0..width {
                if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                    color |= 1 << bit;
                }
                pos += 1;
            }
            if color >= spec.modulus {
                return Err(Error::InvalidSpec(format!(
                    "color {color} out of range for modulus {}",
                    spec.modulus
                )));
            }
            colors.push(color);
        }
        Ok(EncodedBlob { colors, spec })
    }
}

/// Encodes `x` as the colors of its nearest lattice point.
pub fn encode(x: &[f64], spec: &QuantSpec) -> Result<EncodedBlob> {
    if x.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: x.len(),
        });
    }
    if spec.is_trivial() {
        return Ok(EncodedBlob {
            colors: Vec::new(),
            spec: *spec,
        });
    }
    let m = spec.modulus as i64;
    let colors = x
        .iter()
        .map(|&xj| {
            let k = lattice_index(xj, spec.cell)?;
            Ok(k.rem_euclid(m) as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedBlob { colors, spec: *spec })
}

fn lattice_index(value: f64, cell: f64) -> Result<i64> {
    let scaled = (value / cell).round_ties_even();
    if !scaled.is_finite() || scaled.abs() >= (1i64 << 62) as f64 {
        return Err(Error::InvalidSpec(format!(
            "coordinate {value} is outside the encodable range for cell {cell}"
        )));
    }
    Ok(scaled as i64)
}

/// Decodes `blob` relative to `x_ref`. Correct whenever the encoded vector
/// was within `y` of `x_ref`; otherwise silently returns another lattice
/// point.
pub fn decode(blob: &EncodedBlob, x_ref: &[f64]) -> Result<Vec<f64>> {
    let spec = &blob.spec;
    if x_ref.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: x_ref.len(),
        });
    }
    if spec.is_trivial() {
        return Ok(x_ref.to_vec());
    }
    if blob.colors.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: blob.colors.len(),
        });
    }
    let m = spec.modulus as i64;
    blob.colors
        .iter()
        .zip(x_ref)
        .map(|(&color, &r)| {
            let k = nearest_in_class(color as i64, m, r, spec.cell)?;
            Ok(k as f64 * spec.cell)
        })
        .collect()
}

/// The integer `k ≡ color (mod m)` minimizing `|k·cell − target|`, ties to
/// the smaller `k`.
fn nearest_in_class(color: i64, m: i64, target: f64, cell: f64) -> Result<i64> {
    let center = target / cell;
    if !center.is_finite() || center.abs() >= (1i64 << 61) as f64 {
        return Err(Error::InvalidSpec(format!(
            "reference coordinate {target} is outside the decodable range"
        )));
    }
    let base = color + m * ((center - color as f64) / m as f64).floor() as i64;
    let mut best = base - m;
    let mut best_dist = (best as f64 * cell - target).abs();
    for k in [base, base + m, base + 2 * m] {
        let dist = (k as f64 * cell - target).abs();
        if dist < best_dist {
            best = k;
            best_dist = dist;
        }
    }
    Ok(best)
}

/// Result of [`quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub value: Vec<f64>,
    pub payload_bits: u64,
}

/// Encodes `x` and decodes it against `x_ref` in one step.
///
/// With `check_precondition` set, refuses inputs with `‖x − x_ref‖₂ > y`.
pub fn quantize(x: &[f64], x_ref: &[f64], y: f64, eps: f64, check_precondition: bool) -> Result<Quantized> {
    let spec = QuantSpec::new(x.len(), y, eps)?;
    if check_precondition {
        let dist = l2_distance(x, x_ref)?;
        if dist > y {
            return Err(Error::violation("quantizer input distance ‖x − x_ref‖ ≤ y", y, dist));
        }
    }
    let blob = encode(x, &spec)?;
    let value = decode(&blob, x_ref)?;
    Ok(Quantized {
        value,
        payload_bits: blob.payload_bits(),
    })
}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}
