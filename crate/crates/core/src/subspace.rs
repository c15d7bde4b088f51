//! Per-class linear subspaces in transform space and distances to them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rcdt::RcdtVector;

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-4;

/// Orthonormal basis (columns) spanning one class's training vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
    singular_values: Vec<f64>,
    fingerprint: u64,
}

impl SubspaceBasis {
    /// Wraps an existing basis. Columns must already be orthonormal.
    pub fn from_parts(
        dimension: usize,
        rank: usize,
        columns: Vec<f64>,
        singular_values: Vec<f64>,
        fingerprint: u64,
    ) -> Result<Self> {
        if rank == 0 || columns.len() != dimension * rank || singular_values.len() != rank {
            return Err(Error::InvalidInput(format!(
                "basis of rank {rank} in dimension {dimension} needs {} entries and {rank} singular values",
                dimension * rank
            )));
        }
        Ok(Self {
            basis: DMatrix::from_vec(dimension, rank, columns),
            singular_values,
            fingerprint,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dimension(&self) -> usize {
        self.basis.nrows()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Column-major basis entries.
    pub fn columns(&self) -> &[f64] {
        self.basis.as_slice()
    }

    /// Orthogonal projection `B Bᵀ v`.
    pub fn project(&self, v: &RcdtVector) -> Result<Vec<f64>> {
        self.check(v)?;
        let v = DVector::from_column_slice(v.values());
        let coeffs = self.basis.tr_mul(&v);
        Ok((&self.basis * coeffs).data.into())
    }

    fn check(&self, v: &RcdtVector) -> Result<()> {
        v.check_compatible(self.fingerprint)?;
        if v.len() != self.dimension() {
            return Err(Error::InvalidInput(format!(
                "vector of length {} against basis of dimension {}",
                v.len(),
                self.dimension()
            )));
        }
        Ok(())
    }

    /// `‖v − B Bᵀ v‖₂`.
    pub fn distance(&self, v: &RcdtVector) -> Result<f64> {
        self.check(v)?;
        let v = DVector::from_column_slice(v.values());
        let coeffs = self.basis.tr_mul(&v);
        let residual = v - &self.basis * coeffs;
        Ok(residual.norm())
    }

    /// Distances for many vectors at once, using blocked matrix products.
    pub fn distances(&self, vectors: &[RcdtVector]) -> Result<Vec<f64>> {
        const BLOCK: usize = 256;
        for v in vectors {
            self.check(v)?;
        }
        let d = self.dimension();
        let mut out = Vec::with_capacity(vectors.len());
        for chunk in vectors.chunks(BLOCK) {
            let mut block = DMatrix::<f64>::zeros(d, chunk.len());
            for (j, v) in chunk.iter().enumerate() {
                block.column_mut(j).copy_from_slice(v.values());
            }
            let coeffs = self.basis.tr_mul(&block);
            let residual = block - &self.basis * coeffs;
            out.extend(residual.column_iter().map(|c| c.norm()));
        }
        Ok(out)
    }
}

/// Orthonormal basis of `span(samples)`, keeping directions whose singular
/// value is at least `rank_tolerance` times the largest.
pub fn fit_subspace(samples: &[RcdtVector], rank_tolerance: f64) -> Result<SubspaceBasis> {
    fit_subspace_capped(samples, rank_tolerance, None)
}

/// [`fit_subspace`] with an optional hard cap on the retained rank.
pub fn fit_subspace_capped(
    samples: &[RcdtVector],
    rank_tolerance: f64,
    max_rank: Option<usize>,
) -> Result<SubspaceBasis> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot fit a subspace to zero samples".into()))?;
    if !(0.0..1.0).contains(&rank_tolerance) {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must lie in [0, 1), got {rank_tolerance}"
        )));
    }
    if max_rank == Some(0) {
        return Err(Error::InvalidInput("max_rank must be at least 1".into()));
    }
    let fingerprint = first.fingerprint();
    let dimension = first.len();
    for s in samples {
        s.check_compatible(fingerprint)?;
        if s.len() != dimension {
            return Err(Error::InvalidInput("samples have differing lengths".into()));
        }
    }

    let mut data = DMatrix::<f64>::zeros(dimension, samples.len());
    for (j, s) in samples.iter().enumerate() {
        data.column_mut(j).copy_from_slice(s.values());
    }

    // A = QR, R = U Σ Vᵀ  ⇒  left singular vectors of A are Q U.
    let qr = data.qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, false);
    let u = svd.u.expect("left singular vectors were requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let largest = svd.singular_values[order[0]];
    if largest <= 0.0 {
        return Err(Error::InvalidInput("samples span only the zero vector".into()));
    }
    let mut kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| svd.singular_values[k] >= rank_tolerance * largest && svd.singular_values[k] > 0.0)
        .collect();
    if let Some(cap) = max_rank {
        kept.truncate(cap);
    }

    let selected = u.select_columns(&kept);
    let basis = q * selected;
    let singular_values = kept.iter().map(|&k| svd.singular_values[k]).collect();
    Ok(SubspaceBasis {
        basis,
        singular_values,
        fingerprint,
    })
}

/// Index of the smallest distance; the lowest index wins ties.
pub fn nearest(distances: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, d) in distances.iter().enumerate() {
        match best {
            Some(b) if distances[b] <= *d => {}
            _ => best = Some(k),
        }
    }
    best
}
