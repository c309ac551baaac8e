//! Symmetric matrices, their upper-triangle vectorization, and quantization
//! of symmetric matrices through that vectorization.
//!
//! The packing `φ(P) = (p₁₁,…,p₁d, p₂₂,…,p₂d, …, p_dd)` distorts distances by
//! at most `(1/√d)‖φ(P)−φ(P')‖ ≤ ‖P−P'‖₂ ≤ √2‖φ(P)−φ(P')‖`, so a vector
//! quantizer with output error `ε` on the packed form yields spectral error
//! at most `√2·ε`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::quantizer::{self, EncodedBlob, QuantSpec};

/// Dense symmetric `d×d` matrix. Constructors enforce exact symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let d = m.nrows();
        let mut out = m;
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(SymMatrix(out))
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `AᵀA` for a data matrix `A`.
    pub fn gram(a: &DMatrix<f64>) -> Self {
        let g = a.transpose() * a;
        // AᵀA is symmetric up to summation order; force exact equality
        Self::from_matrix(g).expect("gram matrix is square")
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scale(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    /// Mean of a non-empty collection of equally sized matrices.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a SymMatrix>) -> Option<SymMatrix> {
        let mut iter = items.into_iter();
        let first = iter.next()?;
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for m in iter {
            acc += &m.0;
            count += 1;
        }
        Some(SymMatrix(acc / count as f64))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.0.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty matrix")
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Cholesky factorization; `None` unless positive definite.
    pub fn cholesky(&self) -> Option<Cholesky<f64, Dyn>> {
        Cholesky::new(self.0.clone())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }
}

/// Upper triangle of a symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSym {
    dim: usize,
    data: Vec<f64>,
}

impl PackedSym {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != packed_len(dim) {
            return Err(Error::PackedLength(data.len()));
        }
        Ok(PackedSym { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// `d(d+1)/2`.
pub fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

pub fn phi(p: &SymMatrix) -> PackedSym {
    let d = p.dim();
    let mut data = Vec::with_capacity(packed_len(d));
    for i in 0..d {
        for j in i..d {
            data.push(p.get(i, j));
        }
    }
    PackedSym { dim: d, data }
}

pub fn phi_inv(v: &PackedSym) -> SymMatrix {
    let d = v.dim;
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = v.data[k];
            m[(j, i)] = v.data[k];
            k += 1;
        }
    }
    SymMatrix(m)
}

/// Quantizer parameters for the packed form of `d×d` symmetric matrices.
pub fn packed_spec(dim: usize, y_packed: f64, eps_packed: f64) -> Result<QuantSpec> {
    QuantSpec::new(packed_len(dim), y_packed, eps_packed)
}

pub fn encode_sym(p: &SymMatrix, spec: &QuantSpec) -> Result<EncodedBlob> {
    quantizer::encode(phi(p).as_slice(), spec)
}

pub fn decode_sym(blob: &EncodedBlob, p_ref: &SymMatrix) -> Result<SymMatrix> {
    let v = quantizer::decode(blob, phi(p_ref).as_slice())?;
    Ok(phi_inv(&PackedSym::new(p_ref.dim(), v)?))
}

/// ℓ2 distance between the packed forms of two matrices.
pub fn packed_distance(a: &SymMatrix, b: &SymMatrix) -> f64 {
    let (pa, pb) = (phi(a), phi(b));
    pa.data
        .iter()
        .zip(&pb.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedSym {
    pub matrix: SymMatrix,
    pub payload_bits: u64,
}

/// `φ⁻¹(Q(φ(P), φ(P_ref), y, ε))`. Spectral error is at most `√2·ε` when
/// the packed distance to the reference is at most `y`.
pub fn quantize_sym(
    p: &SymMatrix,
    p_ref: &SymMatrix,
    y_packed: f64,
    eps_packed: f64,
    check_precondition: bool,
) -> Result<QuantizedSym> {
    if p.dim() != p_ref.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: p_ref.dim(),
        });
    }
    let q = quantizer::quantize(
        phi(p).as_slice(),
        phi(p_ref).as_slice(),
        y_packed,
        eps_packed,
        check_precondition,
    )?;
    Ok(QuantizedSym {
        matrix: phi_inv(&PackedSym::new(p.dim(), q.value)?),
        payload_bits: q.payload_bits,
    })
}
