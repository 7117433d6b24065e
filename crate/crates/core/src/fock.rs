//! Truncated Fock-space primitives.
//!
//! Amplitude index `n` is the photon number `n`; every object carries its
//! cutoff so that mixing dimensions fails instead of silently truncating.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance used for the "normalized" flag.
pub const NORM_TOLERANCE: f64 = 1e-10;

pub(crate) fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::InvalidCutoff(cutoff));
    }
    Ok(())
}

fn check_same(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

/// Pure-state amplitudes over `|0>, ..., |D-1>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amplitudes: DVector<C64>,
}

impl FockVector {
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        check_cutoff(amplitudes.len())?;
        Ok(Self { amplitudes })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amplitudes))
    }

    pub fn zeros(cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        Ok(Self {
            amplitudes: DVector::zeros(cutoff),
        })
    }

    /// The vacuum `|0>`.
    pub fn vacuum(cutoff: usize) -> Result<Self> {
        number_state(0, cutoff)
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn into_inner(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// Returns a unit-norm copy. Fails on a zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numeric(format!("cannot normalize vector of norm {norm}")));
        }
        Ok(Self {
            amplitudes: &self.amplitudes / C64::from(norm),
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            amplitudes: &self.amplitudes * factor,
        }
    }

    /// Mean photon number `sum n |a_n|^2` (not divided by the norm).
    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum()
    }

    /// Squared norm carried by the top `fraction` of the Fock levels.
    pub fn tail_weight(&self, fraction: f64) -> f64 {
        let cutoff = self.cutoff();
        let count = ((cutoff as f64 * fraction).ceil() as usize).clamp(1, cutoff);
        self.amplitudes
            .iter()
            .skip(cutoff - count)
            .map(|a| a.norm_sqr())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.amplitudes
            .iter()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// A square operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    matrix: DMatrix<C64>,
}

impl FockOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidOperator(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        check_cutoff(matrix.nrows())?;
        Ok(Self { matrix })
    }

    pub fn identity(cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        Ok(Self {
            matrix: DMatrix::identity(cutoff, cutoff),
        })
    }

    pub fn from_diagonal(diagonal: &[C64]) -> Result<Self> {
        check_cutoff(diagonal.len())?;
        Ok(Self {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(diagonal)),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn apply(&self, v: &FockVector) -> Result<FockVector> {
        check_same(self.cutoff(), v.cutoff())?;
        Ok(FockVector {
            amplitudes: &self.matrix * &v.amplitudes,
        })
    }

    pub fn compose(&self, rhs: &FockOperator) -> Result<FockOperator> {
        check_same(self.cutoff(), rhs.cutoff())?;
        Ok(FockOperator {
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &FockOperator) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    /// `max |(G^dagger G - 1)_{ij}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let product = self.matrix.adjoint() * &self.matrix;
        max_abs_diff(&product, &DMatrix::identity(self.cutoff(), self.cutoff()))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }
}

pub(crate) fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Lowering operator: `A[n-1, n] = sqrt(n)`.
pub fn annihilation(cutoff: usize) -> Result<FockOperator> {
    check_cutoff(cutoff)?;
    let mut matrix = DMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        matrix[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    Ok(FockOperator { matrix })
}

/// Raising operator, the adjoint of [`annihilation`].
pub fn creation(cutoff: usize) -> Result<FockOperator> {
    Ok(annihilation(cutoff)?.adjoint())
}

/// `a^dagger a` with diagonal `0, 1, ..., D-1`.
pub fn number_operator(cutoff: usize) -> Result<FockOperator> {
    let diagonal: Vec<C64> = (0..cutoff).map(|n| C64::from(n as f64)).collect();
    FockOperator::from_diagonal(&diagonal)
}

pub fn number_state(n: usize, cutoff: usize) -> Result<FockVector> {
    check_cutoff(cutoff)?;
    if n >= cutoff {
        return Err(Error::OutOfCutoff { n, cutoff });
    }
    let mut amplitudes = DVector::zeros(cutoff);
    amplitudes[n] = ONE;
    Ok(FockVector { amplitudes })
}

/// `<u, v> = sum_n conj(u_n) v_n`.
pub fn inner(u: &FockVector, v: &FockVector) -> Result<C64> {
    check_same(u.cutoff(), v.cutoff())?;
    Ok(u.amplitudes.dotc(&v.amplitudes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_entries_at_cutoff_three() {
        let a = annihilation(3).unwrap();
        let m = a.matrix();
        assert_eq!(m[(0, 1)], ONE);
        assert_eq!(m[(1, 2)], C64::from(2f64.sqrt()));
        let nonzero = m.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
        assert_eq!(creation(3).unwrap(), a.adjoint());
    }

    #[test]
    fn commutator_is_identity_except_last_level() {
        let d = 20;
        let a = annihilation(d).unwrap();
        let ad = creation(d).unwrap();
        let comm = a.matrix() * ad.matrix() - ad.matrix() * a.matrix();
        for i in 0..d {
            for j in 0..d {
                let expected = match (i == j, i == d - 1) {
                    (true, false) => 1.0,
                    (true, true) => 1.0 - d as f64,
                    _ => 0.0,
                };
                assert!((comm[(i, j)] - C64::from(expected)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lowering_acts_exactly_on_number_states() {
        let d = 12;
        let a = annihilation(d).unwrap();
        for n in 1..d {
            let lowered = a.apply(&number_state(n, d).unwrap()).unwrap();
            let expected = number_state(n - 1, d).unwrap().scaled(C64::from((n as f64).sqrt()));
            assert_eq!(lowered, expected);
        }
    }

    #[test]
    fn cutoff_and_range_errors() {
        assert!(matches!(annihilation(1), Err(Error::InvalidCutoff(1))));
        assert!(matches!(
            number_state(5, 4),
            Err(Error::OutOfCutoff { n: 5, cutoff: 4 })
        ));
        let e0 = number_state(0, 2).unwrap();
        assert_eq!(e0.as_slice(), &[ONE, ZERO]);
        let other = number_state(0, 3).unwrap();
        assert!(matches!(inner(&e0, &other), Err(Error::Dimension { .. })));
    }

    #[test]
    fn basis_is_orthonormal() {
        let e0 = number_state(0, 5).unwrap();
        let e1 = number_state(1, 5).unwrap();
        assert_eq!(inner(&e0, &e0).unwrap(), ONE);
        assert_eq!(inner(&e0, &e1).unwrap(), ZERO);
    }

    #[test]
    fn tail_weight_uses_top_levels() {
        let v = number_state(9, 10).unwrap();
        assert_eq!(v.tail_weight(0.1), 1.0);
        let v = number_state(8, 10).unwrap();
        assert_eq!(v.tail_weight(0.1), 0.0);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn vector(d: usize) -> impl Strategy<Value = FockVector> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d).prop_map(|v| {
                FockVector::from_slice(&v.into_iter().map(|(r, i)| C64::new(r, i)).collect::<Vec<_>>())
                    .unwrap()
            })
        }

        proptest! {
            #[test]
            fn inner_is_conjugate_symmetric((u, v) in (2usize..16).prop_flat_map(|d| (vector(d), vector(d)))) {
                let uv = inner(&u, &v).unwrap();
                let vu = inner(&v, &u).unwrap();
                prop_assert!((uv - vu.conj()).norm() <= 1e-15 * (1.0 + uv.norm()));
                let uu = inner(&u, &u).unwrap();
                prop_assert!(uu.im.abs() <= 1e-15 && uu.re >= 0.0);
            }
        }
    }
}
