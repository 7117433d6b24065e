//! Single-mode gates `D(γ)`, `R(φ)`, `S(ζ)`, `K(κ)` on the truncated space,
//! with Wirtinger derivatives.
//!
//! Gates are exponentials of the *truncated* generators, so they are unitary
//! on the truncated space. The two Gaussian gates with a complex parameter
//! are built from a spectral decomposition that only depends on the cutoff:
//!
//! ```text
//! γ a† − γ* a          = −i |γ| R(arg γ + π/2) X R(arg γ + π/2)†,   X = a + a†
//! ζ*/2 a² − ζ/2 a†²    =  i |ζ|/2 R(arg ζ/2 + π/4) Y R(arg ζ/2 + π/4)†, Y = a² + a†²
//! ```
//!
//! `X` and `Y` are real symmetric, diagonalized once per cutoff and cached.
//! With `A = U diag(μ) U†` the Fréchet derivative of the exponential is
//! `U [(U† E U) ∘ Φ] U†`, `Φ_jk = (e^{μ_j} − e^{μ_k}) / (μ_j − μ_k)`, which
//! for purely imaginary `μ` factors into phases times a real sinc kernel.
//! Every operation on a state vector then costs `O(D²)`.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_cutoff, FockOperator, C64, ZERO};

/// Parameter slot of a single layer, in packing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotName {
    Gamma,
    GammaConj,
    Zeta,
    ZetaConj,
    Phi,
    Kappa,
}

impl SlotName {
    /// Per-layer packing order.
    pub const LAYER_ORDER: [SlotName; 6] = [
        SlotName::Gamma,
        SlotName::GammaConj,
        SlotName::Zeta,
        SlotName::ZetaConj,
        SlotName::Phi,
        SlotName::Kappa,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            SlotName::Gamma => "γ",
            SlotName::GammaConj => "γ*",
            SlotName::Zeta => "ζ",
            SlotName::ZetaConj => "ζ*",
            SlotName::Phi => "φ",
            SlotName::Kappa => "κ",
        }
    }
}

impl fmt::Display for SlotName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A gate matrix with its derivatives, one per parameter slot.
#[derive(Debug, Clone)]
pub struct GateWithDerivs {
    pub gate: FockOperator,
    pub derivs: Vec<(SlotName, FockOperator)>,
}

impl GateWithDerivs {
    pub fn cutoff(&self) -> usize {
        self.gate.cutoff()
    }

    pub fn deriv(&self, slot: SlotName) -> Option<&FockOperator> {
        self.derivs.iter().find(|(s, _)| *s == slot).map(|(_, m)| m)
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {values:?}")))
    }
}

/// `R(φ) = exp(i φ a†a)`.
pub fn rotation(phi: f64, cutoff: usize) -> Result<GateWithDerivs> {
    check_cutoff(cutoff)?;
    check_finite("rotation angle", &[phi])?;
    diagonal_gate(cutoff, SlotName::Phi, |n| n as f64, phi)
}

/// `K(κ) = exp(i κ (a†a)²)`.
pub fn kerr(kappa: f64, cutoff: usize) -> Result<GateWithDerivs> {
    check_cutoff(cutoff)?;
    check_finite("Kerr strength", &[kappa])?;
    diagonal_gate(cutoff, SlotName::Kappa, |n| (n * n) as f64, kappa)
}

fn diagonal_gate(
    cutoff: usize,
    slot: SlotName,
    eigenvalue: impl Fn(usize) -> f64,
    angle: f64,
) -> Result<GateWithDerivs> {
    let phases: Vec<C64> = (0..cutoff).map(|n| C64::cis(angle * eigenvalue(n))).collect();
    let derivs: Vec<C64> = phases
        .iter()
        .enumerate()
        .map(|(n, p)| C64::new(0.0, eigenvalue(n)) * p)
        .collect();
    Ok(GateWithDerivs {
        gate: FockOperator::from_diagonal(&phases)?,
        derivs: vec![(slot, FockOperator::from_diagonal(&derivs)?)],
    })
}

/// `D(γ) = exp(γ a† − γ* a)` with slots `γ` (direction `a†`) and `γ*`
/// (direction `−a`).
pub fn displacement(gamma: C64, cutoff: usize) -> Result<GateWithDerivs> {
    check_finite("displacement", &[gamma.re, gamma.im])?;
    let spectra = spectra(cutoff)?;
    let gate = SpectralGate::displacement(&spectra, gamma, true);
    gate.into_dense([SlotName::Gamma, SlotName::GammaConj])
}

/// `S(ζ) = exp(ζ*/2 a² − ζ/2 a†²)` with slots `ζ` (direction `−a†²/2`) and
/// `ζ*` (direction `a²/2`).
pub fn squeezer(zeta: C64, cutoff: usize) -> Result<GateWithDerivs> {
    check_finite("squeezing", &[zeta.re, zeta.im])?;
    let spectra = spectra(cutoff)?;
    let gate = SpectralGate::squeezer(&spectra, zeta, true);
    gate.into_dense([SlotName::Zeta, SlotName::ZetaConj])
}

/// Eigen-decomposition of a fixed real symmetric generator shape, together
/// with the raising-type direction expressed in its eigenbasis.
#[derive(Debug)]
pub(crate) struct Spectrum {
    eigenvalues: Vec<f64>,
    /// Orthogonal eigenvector matrix `Q`.
    basis: DMatrix<f64>,
    /// `Qᵀ B Q` where `B` is `a†` or `a†²`.
    coupling: DMatrix<f64>,
}

impl Spectrum {
    fn new(eigenvalues: Vec<f64>, basis: DMatrix<f64>, raising: &DMatrix<f64>) -> Self {
        let coupling = basis.transpose() * raising * &basis;
        Self {
            eigenvalues,
            basis,
            coupling,
        }
    }
}

/// Cached per-cutoff decompositions.
#[derive(Debug)]
pub(crate) struct FockSpectra {
    cutoff: usize,
    quadrature: Spectrum,
    pair: Spectrum,
}

impl FockSpectra {
    fn build(cutoff: usize) -> Self {
        let mut raising = DMatrix::<f64>::zeros(cutoff, cutoff);
        for n in 1..cutoff {
            raising[(n, n - 1)] = (n as f64).sqrt();
        }
        let x = &raising + raising.transpose();
        let eig = SymmetricEigen::new(x);
        let quadrature = Spectrum::new(eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors, &raising);

        let raising2 = &raising * &raising;
        let (eigenvalues, basis) = pair_decomposition(cutoff);
        let pair = Spectrum::new(eigenvalues, basis, &raising2);
        Self {
            cutoff,
            quadrature,
            pair,
        }
    }

    pub(crate) fn cutoff(&self) -> usize {
        self.cutoff
    }
}

/// `a² + a†²` splits into even and odd photon-number sectors; each is a real
/// symmetric tridiagonal matrix in its own right.
fn pair_decomposition(cutoff: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut eigenvalues = Vec::with_capacity(cutoff);
    let mut basis = DMatrix::<f64>::zeros(cutoff, cutoff);
    let mut column = 0;
    for parity in 0..2 {
        let levels: Vec<usize> = (parity..cutoff).step_by(2).collect();
        let m = levels.len();
        let mut block = DMatrix::<f64>::zeros(m, m);
        for k in 1..m {
            let n = levels[k - 1];
            let value = (((n + 1) * (n + 2)) as f64).sqrt();
            block[(k, k - 1)] = value;
            block[(k - 1, k)] = value;
        }
        let eig = SymmetricEigen::new(block);
        for j in 0..m {
            eigenvalues.push(eig.eigenvalues[j]);
            for (k, &n) in levels.iter().enumerate() {
                basis[(n, column)] = eig.eigenvectors[(k, j)];
            }
            column += 1;
        }
    }
    (eigenvalues, basis)
}

pub(crate) fn spectra(cutoff: usize) -> Result<Arc<FockSpectra>> {
    check_cutoff(cutoff)?;
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FockSpectra>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("spectra cache poisoned").get(&cutoff) {
        return Ok(hit.clone());
    }
    let built = Arc::new(FockSpectra::build(cutoff));
    let mut guard = cache.lock().expect("spectra cache poisoned");
    Ok(guard.entry(cutoff).or_insert(built).clone())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    } else {
        x.sin() / x
    }
}

/// A Gaussian gate `U diag(e^{μ}) U†` with `U = R(θ) Q` and `μ = i s λ`.
pub(crate) struct SpectralGate<'a> {
    spectrum: &'a Spectrum,
    /// `e^{iθn}`.
    frame: Vec<C64>,
    /// `e^{μ_k / 2}`.
    half: Vec<C64>,
    /// Coupling ∘ sinc kernel; empty when derivatives were not requested.
    kernel: DMatrix<f64>,
    /// Direction prefactors for the parameter and its conjugate. The
    /// conjugate direction uses the transposed kernel.
    coeff: [C64; 2],
}

impl<'a> SpectralGate<'a> {
    pub(crate) fn displacement(spectra: &'a FockSpectra, gamma: C64, derivs: bool) -> Self {
        let r = gamma.norm();
        let theta = if r > 0.0 { gamma.arg() } else { 0.0 } + FRAC_PI_2;
        let coeff = [C64::cis(-theta), -C64::cis(theta)];
        Self::new(&spectra.quadrature, theta, -r, coeff, derivs)
    }

    pub(crate) fn squeezer(spectra: &'a FockSpectra, zeta: C64, derivs: bool) -> Self {
        let r = zeta.norm();
        let theta = if r > 0.0 { zeta.arg() } else { 0.0 } / 2.0 + FRAC_PI_4;
        let coeff = [-0.5 * C64::cis(-2.0 * theta), 0.5 * C64::cis(2.0 * theta)];
        Self::new(&spectra.pair, theta, r / 2.0, coeff, derivs)
    }

    fn new(spectrum: &'a Spectrum, theta: f64, scale: f64, coeff: [C64; 2], derivs: bool) -> Self {
        let d = spectrum.eigenvalues.len();
        let frame = (0..d).map(|n| C64::cis(theta * n as f64)).collect();
        let half_angles: Vec<f64> = spectrum.eigenvalues.iter().map(|l| 0.5 * scale * l).collect();
        let half = half_angles.iter().map(|&a| C64::cis(a)).collect();
        let kernel = if derivs {
            let (sin, cos): (Vec<f64>, Vec<f64>) = half_angles.iter().map(|a| a.sin_cos()).unzip();
            DMatrix::from_fn(d, d, |j, k| {
                let x = half_angles[j] - half_angles[k];
                let s = if x.abs() < 1e-2 {
                    sinc(x)
                } else {
                    (sin[j] * cos[k] - cos[j] * sin[k]) / x
                };
                spectrum.coupling[(j, k)] * s
            })
        } else {
            DMatrix::zeros(0, 0)
        };
        Self {
            spectrum,
            frame,
            half,
            kernel,
            coeff,
        }
    }

    pub(crate) fn cutoff(&self) -> usize {
        self.frame.len()
    }

    /// `Qᵀ R(θ)† v`.
    fn to_eigen(&self, v: &DVector<C64>) -> DVector<C64> {
        let rotated: Vec<C64> = v.iter().zip(&self.frame).map(|(x, p)| x * p.conj()).collect();
        real_matvec_t(&self.spectrum.basis, &rotated)
    }

    /// `R(θ) Q w`.
    fn from_eigen(&self, w: &[C64]) -> DVector<C64> {
        let mut out = real_matvec(&self.spectrum.basis, w);
        for (x, p) in out.iter_mut().zip(&self.frame) {
            *x *= p;
        }
        out
    }

    pub(crate) fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let w = self.to_eigen(v);
        let scaled: Vec<C64> = w.iter().zip(&self.half).map(|(x, h)| x * h * h).collect();
        self.from_eigen(&scaled)
    }

    pub(crate) fn apply_adjoint(&self, v: &DVector<C64>) -> DVector<C64> {
        let w = self.to_eigen(v);
        let scaled: Vec<C64> = w
            .iter()
            .zip(&self.half)
            .map(|(x, h)| x * (h * h).conj())
            .collect();
        self.from_eigen(&scaled)
    }

    /// Gate and both derivative slots applied to `v`, sharing the basis
    /// change.
    pub(crate) fn apply_with_derivatives(&self, v: &DVector<C64>) -> [DVector<C64>; 3] {
        assert!(self.kernel.nrows() > 0, "gate built without derivatives");
        let w = self.to_eigen(v);
        let gate: Vec<C64> = w.iter().zip(&self.half).map(|(x, h)| x * h * h).collect();
        let hw: Vec<C64> = w.iter().zip(&self.half).map(|(x, h)| x * h).collect();
        let forward = real_matvec(&self.kernel, &hw);
        let backward = real_matvec_t(&self.kernel, &hw);
        let finish = |y: DVector<C64>, c: C64| {
            let z: Vec<C64> = y.iter().zip(&self.half).map(|(x, h)| x * h * c).collect();
            self.from_eigen(&z)
        };
        [
            self.from_eigen(&gate),
            finish(forward, self.coeff[0]),
            finish(backward, self.coeff[1]),
        ]
    }

    fn dense_from_eigen(&self, inner: &DMatrix<C64>) -> DMatrix<C64> {
        let q = self.spectrum.basis.map(C64::from);
        let mut m = &q * inner * q.transpose();
        for j in 0..m.nrows() {
            for k in 0..m.ncols() {
                m[(j, k)] *= self.frame[j] * self.frame[k].conj();
            }
        }
        m
    }

    pub(crate) fn dense(&self) -> DMatrix<C64> {
        let d = self.cutoff();
        let diag = DMatrix::from_fn(d, d, |j, k| if j == k { self.half[j] * self.half[j] } else { ZERO });
        self.dense_from_eigen(&diag)
    }

    fn into_dense(self, slots: [SlotName; 2]) -> Result<GateWithDerivs> {
        let d = self.cutoff();
        let gate = FockOperator::new(self.dense())?;
        let mut derivs = Vec::with_capacity(2);
        for (which, slot) in slots.into_iter().enumerate() {
            let inner = DMatrix::from_fn(d, d, |j, k| {
                let kern = if which == 0 { self.kernel[(j, k)] } else { self.kernel[(k, j)] };
                self.coeff[which] * self.half[j] * self.half[k] * kern
            });
            derivs.push((slot, FockOperator::new(self.dense_from_eigen(&inner))?));
        }
        Ok(GateWithDerivs { gate, derivs })
    }
}

/// `Q v` for real `Q` and complex `v`.
pub(crate) fn real_matvec(q: &DMatrix<f64>, v: &[C64]) -> DVector<C64> {
    let rows = q.nrows();
    let data = q.as_slice();
    let mut re = vec![0.0; rows];
    let mut im = vec![0.0; rows];
    for (j, x) in v.iter().enumerate() {
        let col = &data[j * rows..(j + 1) * rows];
        for ((r, i), &qij) in re.iter_mut().zip(im.iter_mut()).zip(col) {
            *r += qij * x.re;
            *i += qij * x.im;
        }
    }
    DVector::from_iterator(rows, re.into_iter().zip(im).map(|(r, i)| C64::new(r, i)))
}

/// `Qᵀ v` for real `Q` and complex `v`.
pub(crate) fn real_matvec_t(q: &DMatrix<f64>, v: &[C64]) -> DVector<C64> {
    let rows = q.nrows();
    let data = q.as_slice();
    let (re, im): (Vec<f64>, Vec<f64>) = v.iter().map(|z| (z.re, z.im)).unzip();
    DVector::from_iterator(
        q.ncols(),
        (0..q.ncols()).map(|j| {
            let col = &data[j * rows..(j + 1) * rows];
            let mut sr = 0.0;
            let mut si = 0.0;
            for ((&c, &r), &i) in col.iter().zip(&re).zip(&im) {
                sr += c * r;
                si += c * i;
            }
            C64::new(sr, si)
        }),
    )
}
