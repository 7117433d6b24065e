//! Target states and the losses measured against them.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::circuit::JacobianView;
use crate::error::{Error, Result};
use crate::fock::{check_cutoff, inner, number_state, FockOperator, FockVector, C64, ZERO};

/// Slack allowed when reading a target whose norm is not exactly one.
pub const LOAD_NORM_TOLERANCE: f64 = 1e-6;
/// Minimum share of the norm the cutoff must hold for a built-in target.
pub const MIN_CAPTURED_NORM: f64 = 1.0 - 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    state: FockVector,
    label: String,
    provenance: Provenance,
}

impl TargetState {
    /// Normalizes `state`.
    pub fn new(state: FockVector, label: impl Into<String>, provenance: Provenance) -> Result<Self> {
        if !state.all_finite() {
            return Err(Error::Validation("target has non-finite amplitudes".into()));
        }
        Ok(Self {
            state: state.normalized()?,
            label: label.into(),
            provenance,
        })
    }

    pub fn state(&self) -> &FockVector {
        &self.state
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn cutoff(&self) -> usize {
        self.state.cutoff()
    }
}

/// The number state `|n⟩`.
pub fn number_target(n: usize, cutoff: usize) -> Result<TargetState> {
    TargetState::new(number_state(n, cutoff)?, format!("fock-{n}"), Provenance::Builtin)
}

/// `L = 1 − |⟨target, ψ⟩|²`.
pub fn fidelity_loss(psi: &FockVector, target: &TargetState) -> Result<f64> {
    let o = inner(&target.state, psi)?;
    Ok(1.0 - o.norm_sqr())
}

/// `∂L/∂ξ_m*` for every slot. With `o = ⟨t,ψ⟩` and `m̄` the conjugate
/// partner, `∂L/∂ξ_m* = −(⟨t, ∂_m̄ψ⟩ o* + o ⟨t, ∂_mψ⟩*)`.
pub fn fidelity_loss_grad(jac: &dyn JacobianView, target: &TargetState) -> Result<Vec<C64>> {
    Ok(fidelity_loss_and_grad(jac, target)?.1)
}

pub fn fidelity_loss_and_grad(jac: &dyn JacobianView, target: &TargetState) -> Result<(f64, Vec<C64>)> {
    let o = inner(&target.state, jac.psi())?;
    let overlaps = jac.overlaps(&target.state)?;
    let layout = jac.layout();
    let grad = (0..layout.len())
        .map(|m| -(overlaps[layout.conj_index(m)] * o.conj() + o * overlaps[m].conj()))
        .collect();
    Ok((1.0 - o.norm_sqr(), grad))
}

/// `⟨ψ, Hψ⟩` for Hermitian `H`.
pub fn energy_loss(psi: &FockVector, h: &FockOperator) -> Result<f64> {
    let scale = h.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
    let defect = h.hermiticity_defect();
    if defect > 1e-10 * scale {
        return Err(Error::InvalidOperator(format!("Hamiltonian is not Hermitian (defect {defect:e})")));
    }
    Ok(inner(psi, &h.apply(psi)?)?.re)
}

/// Finite-energy hexagonal GKP codeword.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexGkpSpec {
    pub d: u32,
    pub mu: u32,
    pub delta: f64,
    pub cutoff: usize,
}

impl HexGkpSpec {
    pub fn validate(&self) -> Result<()> {
        check_cutoff(self.cutoff)?;
        if self.d == 0 {
            return Err(Error::InvalidParameter("GKP dimension d must be >= 1".into()));
        }
        if self.mu >= self.d {
            return Err(Error::InvalidParameter(format!("logical index {} must be < d = {}", self.mu, self.d)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Fock amplitudes of `e^{−δ n̂} Σ_k χ_k |x = s(dk + μ)⟩_θ` for the first
/// `levels` photon numbers, unnormalized.
///
/// The hexagonal lattice has spacing `c = sqrt(4π / (√3 d))` between the
/// stabilizer directions `u` and `v = R(π/3) u`; codewords are the
/// eigenstates of the rotated quadrature along `u + v` restricted to
/// positions `s(dk + μ)`, `s = c √3 / 2`, with the phases `χ_k` that make them
/// `+1` eigenstates of both lattice translations.
fn hex_gkp_amplitudes(spec: &HexGkpSpec, levels: usize) -> Vec<C64> {
    let d = spec.d as f64;
    let mu = spec.mu as f64;
    let c = (4.0 * PI / (3f64.sqrt() * d)).sqrt();
    let s = c * 3f64.sqrt() / 2.0;
    let theta = -PI / 6.0;
    let reach = (2.0 * levels as f64 + 1.0).sqrt() + 12.0;
    let k_max = (reach / (s * d)).ceil() as i64 + 1;

    let mut sum = vec![ZERO; levels];
    let norm0 = PI.powf(-0.25);
    for k in -k_max..=k_max {
        let kf = k as f64;
        let x = s * (d * kf + mu);
        if x.abs() > reach {
            continue;
        }
        let chi = C64::cis(PI * (d * kf * kf / 2.0 + kf * mu));
        // Hermite functions by the stable three-term recursion.
        let mut prev = 0.0;
        let mut cur = norm0 * (-x * x / 2.0).exp();
        for (n, slot) in sum.iter_mut().enumerate() {
            if n > 0 {
                let nf = n as f64;
                let next = (2.0 / nf).sqrt() * x * cur - ((nf - 1.0) / nf).sqrt() * prev;
                prev = cur;
                cur = next;
            }
            *slot += chi * cur;
        }
    }
    sum.iter()
        .enumerate()
        .map(|(n, a)| a * C64::from_polar((-spec.delta * n as f64).exp(), theta * n as f64))
        .collect()
}

pub fn hex_gkp_target(spec: &HexGkpSpec) -> Result<TargetState> {
    spec.validate()?;
    let extended = 2 * spec.cutoff + 50;
    let amps = hex_gkp_amplitudes(spec, extended);
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let kept: f64 = amps[..spec.cutoff].iter().map(|a| a.norm_sqr()).sum();
    let captured = kept / total;
    if !(captured >= MIN_CAPTURED_NORM) {
        return Err(Error::InsufficientCutoff {
            cutoff: spec.cutoff,
            captured,
        });
    }
    TargetState::new(
        FockVector::from_slice(&amps[..spec.cutoff])?,
        format!("hex-gkp d={} mu={} delta={}", spec.d, spec.mu, spec.delta),
        Provenance::Builtin,
    )
}

/// Reads `<n> <Re> <Im>` lines; `#` starts a comment and missing indices
/// are zero.
pub fn load_target(path: &Path, cutoff: usize) -> Result<TargetState> {
    check_cutoff(cutoff)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut amps = DVector::<C64>::zeros(cutoff);
    let mut seen = vec![false; cutoff];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(line_no, format!("expected `<n> <Re> <Im>`, got {content:?}")));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad index {:?}", fields[0])))?;
        let re: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad real part {:?}", fields[1])))?;
        let im: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad imaginary part {:?}", fields[2])))?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(parse_err(line_no, "non-finite amplitude".into()));
        }
        if n >= cutoff {
            if re != 0.0 || im != 0.0 {
                return Err(Error::Validation(format!(
                    "{}: line {line_no}: index {n} lies outside cutoff {cutoff}",
                    path.display()
                )));
            }
            continue;
        }
        if seen[n] {
            return Err(parse_err(line_no, format!("index {n} listed twice")));
        }
        seen[n] = true;
        amps[n] = C64::new(re, im);
    }
    let state = FockVector::new(amps)?;
    let norm = state.norm();
    if !((norm - 1.0).abs() <= LOAD_NORM_TOLERANCE) {
        return Err(Error::Validation(format!(
            "{}: norm {norm} differs from 1 by more than {LOAD_NORM_TOLERANCE:e}",
            path.display()
        )));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "file".into());
    TargetState::new(state, label, Provenance::File(path.to_path_buf()))
}

/// Writes the format read by [`load_target`], with round-trip float output.
pub fn write_target(path: &Path, target: &TargetState) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", target.label);
    let _ = writeln!(out, "# n re im");
    for (n, a) in target.state.as_slice().iter().enumerate() {
        let _ = writeln!(out, "{n} {:e} {:e}", a.re, a.im);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
