//! Geometric tensor, Fubini-Study metric and the Hermitian metric in the
//! mixed real/complex parameter basis.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::circuit::{JacobianView, ParamLayout, SlotKind, StateJacobian};
use crate::error::{Error, Result};
use crate::fock::{C64, ZERO};

pub const DEFAULT_LAMBDA: f64 = 0.1;
/// Eigenvalues below this fraction of the largest one are dropped.
pub const PINV_RELATIVE_THRESHOLD: f64 = 1e-12;
const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// `G_ij = ⟨∂_iψ, ∂_jψ⟩ − ⟨∂_iψ, ψ⟩⟨ψ, ∂_jψ⟩` over real parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricTensor {
    pub entries: DMatrix<C64>,
}

pub fn geometric_tensor(jac: &StateJacobian) -> Result<GeometricTensor> {
    if !jac.layout().is_all_real() {
        return Err(Error::Layout(
            "geometric tensor needs derivatives with respect to real parameters".into(),
        ));
    }
    let (gram, proj) = jac.gram(0..jac.layout().len())?;
    let outer = proj.map(|b| b.conj()) * proj.transpose();
    Ok(GeometricTensor { entries: gram - outer })
}

/// `g = (G + Gᵀ)/2`, returned as a real matrix.
pub fn fs_metric_real(g: &GeometricTensor) -> Result<DMatrix<f64>> {
    let e = &g.entries;
    if !e.is_square() {
        return Err(Error::Dimension {
            expected: e.nrows(),
            found: e.ncols(),
        });
    }
    let sym = (e + e.transpose()) * C64::from(0.5);
    let scale = sym.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let imag = sym.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > 1e-12 * scale {
        return Err(Error::Numeric(format!(
            "symmetric part has imaginary entries up to {imag:e}; tensor is not from a real parametrization"
        )));
    }
    Ok(sym.map(|z| z.re))
}

/// `W` maps real coordinates `(Re z, Im z)` to `(z, z*)`; `V` is the chain
/// rule taking real derivatives to Wirtinger ones.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTransforms {
    pub w: DMatrix<C64>,
    pub v: DMatrix<C64>,
}

pub fn basis_transforms(layout: &ParamLayout) -> BasisTransforms {
    let n = layout.len();
    let mut w = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    let i = C64::new(0.0, 1.0);
    for (m, slot) in layout.slots().iter().enumerate() {
        match slot.kind {
            SlotKind::Real => {
                w[(m, m)] = C64::from(1.0);
                v[(m, m)] = C64::from(1.0);
            }
            SlotKind::Complex => {
                let c = slot.partner;
                w[(m, m)] = C64::from(1.0);
                w[(m, c)] = i;
                w[(c, m)] = C64::from(1.0);
                w[(c, c)] = -i;
                v[(m, m)] = C64::from(0.5);
                v[(m, c)] = -0.5 * i;
                v[(c, m)] = C64::from(0.5);
                v[(c, c)] = 0.5 * i;
            }
            SlotKind::Conjugate => {}
        }
    }
    BasisTransforms { w, v }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricStructure {
    Full,
    #[default]
    Block,
}

impl std::str::FromStr for MetricStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "block" | "block-diagonal" => Ok(Self::Block),
            other => Err(Error::Config(format!("unknown metric structure {other:?}"))),
        }
    }
}

impl std::fmt::Display for MetricStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Block => "block",
        })
    }
}

/// A Hermitian matrix stored as diagonal blocks over contiguous slot ranges.
/// The full structure is a single block.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMetric {
    dim: usize,
    structure: MetricStructure,
    blocks: Vec<(Range<usize>, DMatrix<C64>)>,
}

impl HermitianMetric {
    pub fn full(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let dim = matrix.nrows();
        Ok(Self {
            dim,
            structure: MetricStructure::Full,
            blocks: vec![(0..dim, matrix)],
        })
    }

    /// Blocks must tile `0..dim` in order.
    pub fn block_diagonal(blocks: Vec<(Range<usize>, DMatrix<C64>)>) -> Result<Self> {
        let mut next = 0;
        for (range, m) in &blocks {
            if range.start != next || m.nrows() != range.len() || m.ncols() != range.len() {
                return Err(Error::Layout(format!("block {range:?} does not tile the slot range")));
            }
            next = range.end;
        }
        Ok(Self {
            dim: next,
            structure: MetricStructure::Block,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> MetricStructure {
        self.structure
    }

    pub fn blocks(&self) -> &[(Range<usize>, DMatrix<C64>)] {
        &self.blocks
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (range, block) in &self.blocks {
            m.view_mut((range.start, range.start), (range.len(), range.len()))
                .copy_from(block);
        }
        m
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|(_, b)| b.iter().zip(b.adjoint().iter()).map(|(x, y)| (x - y).norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(_, b)| hermitian_eigen(b).eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }

    /// `self · v`, blockwise.
    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: v.len(),
            });
        }
        let mut out = vec![ZERO; self.dim];
        for (range, block) in &self.blocks {
            let x = DVector::from_column_slice(&v[range.clone()]);
            out[range.clone()].copy_from_slice((block * x).as_slice());
        }
        Ok(out)
    }
}

fn hermitian_eigen(m: &DMatrix<C64>) -> SymmetricEigen<C64, nalgebra::Dyn> {
    let sym = (m + m.adjoint()) * C64::from(0.5);
    SymmetricEigen::new(sym)
}

/// `f_mn = ½⟨J_m,J_n⟩ − ½⟨J_m,ψ⟩⟨ψ,J_n⟩ + ½⟨J_n̄,J_m̄⟩ − ½⟨J_n̄,ψ⟩⟨ψ,J_m̄⟩`,
/// with `J_m̄` the column of the conjugate partner slot.
pub fn hermitian_metric(jac: &dyn JacobianView, structure: MetricStructure) -> Result<HermitianMetric> {
    let layout = jac.layout();
    let ranges: Vec<Range<usize>> = match structure {
        MetricStructure::Full => vec![0..layout.len()],
        MetricStructure::Block => layout.blocks().to_vec(),
    };
    let mut blocks = Vec::with_capacity(ranges.len());
    for range in ranges {
        let (gram, proj) = jac.gram(range.clone())?;
        let local = |m: usize| -> Result<usize> {
            let p = layout.conj_index(m);
            if range.contains(&p) {
                Ok(p - range.start)
            } else {
                Err(Error::Layout(format!("slot {m} has no conjugate partner inside its block")))
            }
        };
        let partners: Vec<usize> = range.clone().map(local).collect::<Result<_>>()?;
        let k = range.len();
        let f = DMatrix::from_fn(k, k, |m, n| {
            let (mb, nb) = (partners[m], partners[n]);
            let direct = gram[(m, n)] - proj[m].conj() * proj[n];
            let mirrored = gram[(nb, mb)] - proj[nb].conj() * proj[mb];
            (direct + mirrored) * 0.5
        });
        blocks.push((range, f));
    }
    match structure {
        MetricStructure::Full => HermitianMetric::full(blocks.pop().expect("one block").1),
        MetricStructure::Block => HermitianMetric::block_diagonal(blocks),
    }
}

/// `(f + λ1)⁺`, blockwise.
pub fn regularized_pinv(f: &HermitianMetric, lambda: f64) -> Result<HermitianMetric> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("regularization must be finite and >= 0, got {lambda}")));
    }
    let mut blocks = Vec::with_capacity(f.blocks.len());
    for (range, block) in &f.blocks {
        let scale = block.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let defect = block
            .iter()
            .zip(block.adjoint().iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        if !(defect <= HERMITIAN_TOLERANCE * scale) {
            return Err(Error::Numeric(format!(
                "metric block {range:?} is not Hermitian (defect {defect:e})"
            )));
        }
        let shifted = block + DMatrix::<C64>::identity(range.len(), range.len()) * C64::from(lambda);
        let eig = hermitian_eigen(&shifted);
        if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!("eigendecomposition of block {range:?} failed")));
        }
        let top = eig.eigenvalues.max();
        let cut = PINV_RELATIVE_THRESHOLD * top;
        let inv = DVector::from_iterator(
            range.len(),
            eig.eigenvalues
                .iter()
                .map(|&l| if top > 0.0 && l > cut { C64::from(1.0 / l) } else { ZERO }),
        );
        let q = &eig.eigenvectors;
        let mut scaled = q.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(inv.iter()) {
            col *= *s;
        }
        blocks.push((range.clone(), scaled * q.adjoint()));
    }
    Ok(HermitianMetric {
        dim: f.dim,
        structure: f.structure,
        blocks,
    })
}

/// `f⁺ · grad`.
pub fn natural_direction(f_pinv: &HermitianMetric, grad: &[C64]) -> Result<Vec<C64>> {
    f_pinv.apply(grad)
}
