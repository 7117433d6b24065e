//! The layered single-mode ansatz `U = K_N G_N ⋯ K_1 G_1`,
//! `G = D(γ) R(φ) S(ζ)`, acting on the vacuum.
//!
//! Parameters are packed per layer as `[γ, γ*, ζ, ζ*, φ, κ]`; conjugate slots
//! are kept as exact conjugates of their partners.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_cutoff, FockVector, C64, ZERO};
use crate::gates::{spectra, FockSpectra, SlotName, SpectralGate};

pub const SLOTS_PER_LAYER: usize = 6;

/// Parameters of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub gamma: C64,
    pub phi: f64,
    pub zeta: C64,
    pub kappa: f64,
}

impl LayerParams {
    pub const ZERO: LayerParams = LayerParams {
        gamma: ZERO,
        phi: 0.0,
        zeta: ZERO,
        kappa: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        [
            self.gamma.re,
            self.gamma.im,
            self.phi,
            self.zeta.re,
            self.zeta.im,
            self.kappa,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    /// A complex parameter `z`.
    Complex,
    /// The conjugate `z*` of the slot named by `partner`.
    Conjugate,
    Real,
}

/// Kind of a model parameter before conjugate expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotInfo {
    /// Block (circuit layer) the slot belongs to.
    pub block: usize,
    pub kind: SlotKind,
    /// Index of the conjugate partner; the slot itself for real slots.
    pub partner: usize,
    pub name: Option<SlotName>,
}

/// Slot metadata for a packed parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    slots: Vec<SlotInfo>,
    blocks: Vec<Range<usize>>,
}

impl ParamLayout {
    /// Validates partner links and block contiguity.
    pub fn new(slots: Vec<SlotInfo>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Layout("layout has no slots".into()));
        }
        let mut blocks: Vec<Range<usize>> = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            let partner = slots.get(slot.partner).ok_or_else(|| {
                Error::Layout(format!("slot {i} names missing partner {}", slot.partner))
            })?;
            let consistent = match slot.kind {
                SlotKind::Real => slot.partner == i,
                SlotKind::Complex => partner.kind == SlotKind::Conjugate && partner.partner == i,
                SlotKind::Conjugate => partner.kind == SlotKind::Complex && partner.partner == i,
            };
            if !consistent {
                return Err(Error::Layout(format!("slot {i} has no valid conjugate partner")));
            }
            if partner.block != slot.block {
                return Err(Error::Layout(format!("slot {i} and its partner lie in different blocks")));
            }
            let open = blocks.len();
            if open > 0 && slot.block == open - 1 {
                blocks[open - 1].end = i + 1;
            } else if slot.block == open {
                blocks.push(i..i + 1);
            } else {
                return Err(Error::Layout(format!(
                    "slot {i}: blocks must be numbered contiguously from 0"
                )));
            }
        }
        Ok(Self { slots, blocks })
    }

    /// One block per inner slice; complex parameters expand into `z, z*`.
    pub fn from_blocks(blocks: &[&[ParamKind]]) -> Result<Self> {
        let mut slots = Vec::new();
        for (block, kinds) in blocks.iter().enumerate() {
            for kind in kinds.iter() {
                let i = slots.len();
                match kind {
                    ParamKind::Real => slots.push(SlotInfo {
                        block,
                        kind: SlotKind::Real,
                        partner: i,
                        name: None,
                    }),
                    ParamKind::Complex => {
                        slots.push(SlotInfo {
                            block,
                            kind: SlotKind::Complex,
                            partner: i + 1,
                            name: None,
                        });
                        slots.push(SlotInfo {
                            block,
                            kind: SlotKind::Conjugate,
                            partner: i,
                            name: None,
                        });
                    }
                }
            }
        }
        Self::new(slots)
    }

    /// `n` real parameters in a single block.
    pub fn all_real(n: usize) -> Result<Self> {
        Self::from_blocks(&[&vec![ParamKind::Real; n]])
    }

    /// Layout of an `layers`-layer circuit.
    pub fn circuit(layers: usize) -> Result<Self> {
        let mut slots = Vec::with_capacity(layers * SLOTS_PER_LAYER);
        for layer in 0..layers {
            let base = layer * SLOTS_PER_LAYER;
            for (offset, name) in SlotName::LAYER_ORDER.into_iter().enumerate() {
                let (kind, partner) = match name {
                    SlotName::Gamma | SlotName::Zeta => (SlotKind::Complex, base + offset + 1),
                    SlotName::GammaConj | SlotName::ZetaConj => (SlotKind::Conjugate, base + offset - 1),
                    SlotName::Phi | SlotName::Kappa => (SlotKind::Real, base + offset),
                };
                slots.push(SlotInfo {
                    block: layer,
                    kind,
                    partner,
                    name: Some(name),
                });
            }
        }
        Self::new(slots)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[SlotInfo] {
        &self.slots
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Index of `∂/∂ξ_m*` when differentiating: the partner for complex
    /// slots, the slot itself for real ones.
    pub fn conj_index(&self, m: usize) -> usize {
        self.slots[m].partner
    }

    pub fn is_all_real(&self) -> bool {
        self.slots.iter().all(|s| s.kind == SlotKind::Real)
    }
}

/// The packed parameter vector `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<C64>,
    layout: Arc<ParamLayout>,
}

impl ParamVector {
    /// Builds from raw slot values, enforcing conjugate pairs and real slots
    /// from the `Complex` entries.
    pub fn new(values: Vec<C64>, layout: Arc<ParamLayout>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension {
                expected: layout.len(),
                found: values.len(),
            });
        }
        let mut params = Self { values, layout };
        params.resync();
        Ok(params)
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<ParamLayout> {
        self.layout.clone()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Restores `ξ[z*] = conj(ξ[z])` and zero imaginary parts on real slots.
    pub fn resync(&mut self) {
        for (i, slot) in self.layout.slots.iter().enumerate() {
            match slot.kind {
                SlotKind::Complex => self.values[slot.partner] = self.values[i].conj(),
                SlotKind::Real => self.values[i].im = 0.0,
                SlotKind::Conjugate => {}
            }
        }
    }

    /// `ξ ← ξ − rate · direction`, then [`resync`](Self::resync).
    pub fn descend(&mut self, rate: f64, direction: &[C64]) -> Result<()> {
        if direction.len() != self.values.len() {
            return Err(Error::Dimension {
                expected: self.values.len(),
                found: direction.len(),
            });
        }
        for (x, d) in self.values.iter_mut().zip(direction) {
            *x -= d * rate;
        }
        self.resync();
        Ok(())
    }

    /// Exact conjugate-pair and real-slot consistency.
    pub fn is_consistent(&self) -> bool {
        self.layout.slots.iter().enumerate().all(|(i, slot)| match slot.kind {
            SlotKind::Complex => self.values[slot.partner] == self.values[i].conj(),
            SlotKind::Conjugate => self.values[slot.partner] == self.values[i].conj(),
            SlotKind::Real => self.values[i].im == 0.0,
        })
    }

    /// Number of circuit layers, if this is a circuit layout.
    pub fn layers(&self) -> Option<usize> {
        let n = self.layout.len();
        let is_circuit = n.is_multiple_of(SLOTS_PER_LAYER)
            && self
                .layout
                .slots
                .iter()
                .enumerate()
                .all(|(i, s)| s.name == Some(SlotName::LAYER_ORDER[i % SLOTS_PER_LAYER]));
        is_circuit.then_some(n / SLOTS_PER_LAYER)
    }

    pub fn unpack(&self) -> Result<Vec<LayerParams>> {
        let layers = self
            .layers()
            .ok_or_else(|| Error::Layout("parameter vector does not have a circuit layout".into()))?;
        Ok((0..layers)
            .map(|l| {
                let s = &self.values[l * SLOTS_PER_LAYER..(l + 1) * SLOTS_PER_LAYER];
                LayerParams {
                    gamma: s[0],
                    zeta: s[2],
                    phi: s[4].re,
                    kappa: s[5].re,
                }
            })
            .collect())
    }

    /// Random initialization: every real and imaginary component i.i.d.
    /// normal with standard deviation `scale`.
    pub fn random(layers: usize, scale: f64, seed: u64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("init scale must be finite and >= 0, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut draw = || normal.sample(&mut rng);
        let layer_params: Vec<LayerParams> = (0..layers)
            .map(|_| {
                let gamma = C64::new(draw(), draw());
                let phi = draw();
                let zeta = C64::new(draw(), draw());
                let kappa = draw();
                LayerParams {
                    gamma,
                    phi,
                    zeta,
                    kappa,
                }
            })
            .collect();
        pack(&layer_params)
    }
}

/// Packs layers as `[γ, γ*, ζ, ζ*, φ, κ]` each.
pub fn pack(layers: &[LayerParams]) -> Result<ParamVector> {
    if layers.is_empty() {
        return Err(Error::Layout("a circuit needs at least one layer".into()));
    }
    let layout = Arc::new(ParamLayout::circuit(layers.len())?);
    let values = layers
        .iter()
        .flat_map(|p| {
            [
                p.gamma,
                p.gamma.conj(),
                p.zeta,
                p.zeta.conj(),
                C64::from(p.phi),
                C64::from(p.kappa),
            ]
        })
        .collect();
    Ok(ParamVector { values, layout })
}

/// `ψ` and its derivatives `∂ψ/∂ξ_m`, one column per slot.
#[derive(Debug, Clone)]
pub struct StateJacobian {
    psi: FockVector,
    columns: DMatrix<C64>,
    layout: Arc<ParamLayout>,
}

impl StateJacobian {
    pub fn new(psi: FockVector, columns: DMatrix<C64>, layout: Arc<ParamLayout>) -> Result<Self> {
        if columns.nrows() != psi.cutoff() {
            return Err(Error::Dimension {
                expected: psi.cutoff(),
                found: columns.nrows(),
            });
        }
        if columns.ncols() != layout.len() {
            return Err(Error::Dimension {
                expected: layout.len(),
                found: columns.ncols(),
            });
        }
        Ok(Self { psi, columns, layout })
    }

    pub fn psi(&self) -> &FockVector {
        &self.psi
    }

    pub fn columns(&self) -> &DMatrix<C64> {
        &self.columns
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn column(&self, m: usize) -> DVector<C64> {
        self.columns.column(m).into_owned()
    }

    /// Multiplies `ψ` and every column by `e^{iα}`.
    pub fn with_global_phase(&self, alpha: f64) -> Self {
        let phase = C64::cis(alpha);
        Self {
            psi: self.psi.scaled(phase),
            columns: &self.columns * phase,
            layout: self.layout.clone(),
        }
    }

    /// Re-expresses the columns in real coordinates: every `(z, z*)` pair
    /// becomes `(Re z, Im z)` with `∂_Re = ∂_z + ∂_z*`, `∂_Im = i(∂_z − ∂_z*)`.
    pub fn real_split(&self) -> Result<Self> {
        let mut columns = self.columns.clone();
        let mut slots = Vec::with_capacity(self.layout.len());
        for (i, slot) in self.layout.slots.iter().enumerate() {
            match slot.kind {
                SlotKind::Complex => {
                    let dz = self.columns.column(i);
                    let dzc = self.columns.column(slot.partner);
                    columns.set_column(i, &(dz + dzc));
                    columns.set_column(slot.partner, &((dz - dzc) * C64::new(0.0, 1.0)));
                }
                SlotKind::Conjugate | SlotKind::Real => {}
            }
            slots.push(SlotInfo {
                block: slot.block,
                kind: SlotKind::Real,
                partner: i,
                name: slot.name,
            });
        }
        Self::new(self.psi.clone(), columns, Arc::new(ParamLayout::new(slots)?))
    }
}

/// Read access shared by the full Jacobian and the per-layer fast path.
pub trait JacobianView {
    fn psi(&self) -> &FockVector;

    fn layout(&self) -> &ParamLayout;

    /// `⟨v, ∂ψ/∂ξ_m⟩` for every slot.
    fn overlaps(&self, v: &FockVector) -> Result<Vec<C64>>;

    /// Gram matrix `⟨∂_m ψ, ∂_n ψ⟩` over `range` and the projections
    /// `⟨ψ, ∂_m ψ⟩`.
    fn gram(&self, range: Range<usize>) -> Result<(DMatrix<C64>, DVector<C64>)>;
}

impl JacobianView for StateJacobian {
    fn psi(&self) -> &FockVector {
        &self.psi
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn overlaps(&self, v: &FockVector) -> Result<Vec<C64>> {
        if v.cutoff() != self.psi.cutoff() {
            return Err(Error::Dimension {
                expected: self.psi.cutoff(),
                found: v.cutoff(),
            });
        }
        Ok((self.columns.adjoint() * v.amplitudes()).iter().map(|z| z.conj()).collect())
    }

    fn gram(&self, range: Range<usize>) -> Result<(DMatrix<C64>, DVector<C64>)> {
        if range.end > self.layout.len() || range.start > range.end {
            return Err(Error::Layout(format!("slot range {range:?} out of bounds")));
        }
        let cols = self.columns.columns(range.start, range.len());
        let gram = cols.adjoint() * cols;
        let proj = cols.adjoint() * self.psi.amplitudes();
        Ok((gram, proj.map(|z| z.conj())))
    }
}

/// Gates of one layer on a shared spectral cache.
struct LayerGates<'a> {
    squeeze: SpectralGate<'a>,
    rotation: Vec<C64>,
    displace: SpectralGate<'a>,
    kerr: Vec<C64>,
}

impl<'a> LayerGates<'a> {
    fn new(spectra: &'a FockSpectra, p: &LayerParams, derivs: bool) -> Self {
        let d = spectra.cutoff();
        Self {
            squeeze: SpectralGate::squeezer(spectra, p.zeta, derivs),
            rotation: (0..d).map(|n| C64::cis(p.phi * n as f64)).collect(),
            displace: SpectralGate::displacement(spectra, p.gamma, derivs),
            kerr: (0..d).map(|n| C64::cis(p.kappa * (n * n) as f64)).collect(),
        }
    }

    fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        let s = self.squeeze.apply(v);
        let r = hadamard(&self.rotation, &s);
        let d = self.displace.apply(&r);
        hadamard(&self.kerr, &d)
    }

    fn apply_adjoint(&self, v: &DVector<C64>) -> DVector<C64> {
        let k = hadamard_conj(&self.kerr, v);
        let d = self.displace.apply_adjoint(&k);
        let r = hadamard_conj(&self.rotation, &d);
        self.squeeze.apply_adjoint(&r)
    }

    /// Layer output and the six local columns (slot order), all expressed at
    /// the layer output.
    fn apply_with_columns(&self, v: &DVector<C64>) -> (DVector<C64>, [DVector<C64>; 6]) {
        let [s, ds, dsc] = self.squeeze.apply_with_derivatives(v);
        let r = hadamard(&self.rotation, &s);
        let r_ds = hadamard(&self.rotation, &ds);
        let r_dsc = hadamard(&self.rotation, &dsc);
        let r_dphi = DVector::from_iterator(r.len(), r.iter().enumerate().map(|(n, x)| x * C64::new(0.0, n as f64)));
        let [d, dg, dgc] = self.displace.apply_with_derivatives(&r);
        let out = hadamard(&self.kerr, &d);
        let kappa_col =
            DVector::from_iterator(out.len(), out.iter().enumerate().map(|(n, x)| x * C64::new(0.0, (n * n) as f64)));
        let through = |x: &DVector<C64>| hadamard(&self.kerr, &self.displace.apply(x));
        let cols = [
            hadamard(&self.kerr, &dg),
            hadamard(&self.kerr, &dgc),
            through(&r_ds),
            through(&r_dsc),
            through(&r_dphi),
            kappa_col,
        ];
        (out, cols)
    }
}

fn hadamard(diag: &[C64], v: &DVector<C64>) -> DVector<C64> {
    DVector::from_iterator(v.len(), v.iter().zip(diag).map(|(x, p)| x * p))
}

fn hadamard_conj(diag: &[C64], v: &DVector<C64>) -> DVector<C64> {
    DVector::from_iterator(v.len(), v.iter().zip(diag).map(|(x, p)| x * p.conj()))
}

/// Per-layer Jacobian. Columns of layer `ℓ` are stored at the output of
/// layer `ℓ`; the map to the circuit output is the (unitary) product of the
/// later layers, so within-layer inner products are unchanged by it.
pub struct LayerJacobian<'c> {
    gates: Vec<LayerGates<'c>>,
    outputs: Vec<DVector<C64>>,
    columns: Vec<DMatrix<C64>>,
    psi: FockVector,
    layout: Arc<ParamLayout>,
}

impl LayerJacobian<'_> {
    /// `(U_{ℓ+1..N})† v` for every layer `ℓ`.
    pub fn pullback(&self, v: &FockVector) -> Result<Vec<DVector<C64>>> {
        if v.cutoff() != self.psi.cutoff() {
            return Err(Error::Dimension {
                expected: self.psi.cutoff(),
                found: v.cutoff(),
            });
        }
        let n = self.gates.len();
        let mut pulled = vec![DVector::zeros(0); n];
        let mut current = v.amplitudes().clone();
        for l in (0..n).rev() {
            if l + 1 < n {
                current = self.gates[l + 1].apply_adjoint(&current);
            }
            pulled[l] = current.clone();
        }
        Ok(pulled)
    }

    /// Materializes the full Jacobian by pushing each layer's columns
    /// through the remaining layers.
    pub fn to_state_jacobian(&self) -> Result<StateJacobian> {
        let d = self.psi.cutoff();
        let mut full = DMatrix::zeros(d, self.layout.len());
        for (l, block) in self.columns.iter().enumerate() {
            for k in 0..SLOTS_PER_LAYER {
                let mut col = block.column(k).into_owned();
                for gates in &self.gates[l + 1..] {
                    col = gates.apply(&col);
                }
                full.set_column(l * SLOTS_PER_LAYER + k, &col);
            }
        }
        StateJacobian::new(self.psi.clone(), full, self.layout.clone())
    }
}

impl JacobianView for LayerJacobian<'_> {
    fn psi(&self) -> &FockVector {
        &self.psi
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn overlaps(&self, v: &FockVector) -> Result<Vec<C64>> {
        let pulled = self.pullback(v)?;
        Ok(pulled
            .iter()
            .zip(&self.columns)
            .flat_map(|(t, block)| (block.adjoint() * t).iter().map(|z| z.conj()).collect::<Vec<_>>())
            .collect())
    }

    fn gram(&self, range: Range<usize>) -> Result<(DMatrix<C64>, DVector<C64>)> {
        let layer = range.start / SLOTS_PER_LAYER;
        if range.is_empty() || range.end > (layer + 1) * SLOTS_PER_LAYER || layer >= self.columns.len() {
            return Err(Error::Layout(format!(
                "per-layer Jacobian only provides within-layer blocks, got slots {range:?}"
            )));
        }
        let offset = range.start - layer * SLOTS_PER_LAYER;
        let cols = self.columns[layer].columns(offset, range.len());
        let gram = cols.adjoint() * cols;
        let proj = cols.adjoint() * &self.outputs[layer];
        Ok((gram, proj.map(|z| z.conj())))
    }
}

/// An `N`-layer circuit at a fixed cutoff.
#[derive(Debug, Clone)]
pub struct Circuit {
    layers: usize,
    spectra: Arc<FockSpectra>,
}

impl Circuit {
    pub fn new(layers: usize, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        if layers == 0 {
            return Err(Error::Layout("a circuit needs at least one layer".into()));
        }
        Ok(Self {
            layers,
            spectra: spectra(cutoff)?,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn cutoff(&self) -> usize {
        self.spectra.cutoff()
    }

    fn layer_params(&self, params: &ParamVector) -> Result<Vec<LayerParams>> {
        let layers = params.unpack()?;
        if layers.len() != self.layers {
            return Err(Error::Layout(format!(
                "circuit has {} layers, parameters describe {}",
                self.layers,
                layers.len()
            )));
        }
        if let Some(bad) = layers.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("layer {bad} has non-finite parameters")));
        }
        Ok(layers)
    }

    /// `ψ = U|0⟩`.
    pub fn forward(&self, params: &ParamVector) -> Result<FockVector> {
        let layers = self.layer_params(params)?;
        let mut state = FockVector::vacuum(self.cutoff())?.into_inner();
        for p in &layers {
            state = LayerGates::new(&self.spectra, p, false).apply(&state);
        }
        FockVector::new(state)
    }

    /// Per-layer Jacobian used by the optimizers.
    pub fn layer_jacobian(&self, params: &ParamVector) -> Result<LayerJacobian<'_>> {
        let layers = self.layer_params(params)?;
        let mut state = FockVector::vacuum(self.cutoff())?.into_inner();
        let mut gates = Vec::with_capacity(layers.len());
        let mut outputs = Vec::with_capacity(layers.len());
        let mut columns = Vec::with_capacity(layers.len());
        for p in &layers {
            let g = LayerGates::new(&self.spectra, p, true);
            let (out, cols) = g.apply_with_columns(&state);
            columns.push(DMatrix::from_columns(&cols));
            outputs.push(out.clone());
            gates.push(g);
            state = out;
        }
        Ok(LayerJacobian {
            gates,
            outputs,
            columns,
            psi: FockVector::new(state)?,
            layout: params.shared_layout(),
        })
    }

    /// Full Jacobian: one prefix-state sweep, then one suffix-operator sweep.
    pub fn jacobian(&self, params: &ParamVector) -> Result<StateJacobian> {
        let layers = self.layer_params(params)?;
        let d = self.cutoff();
        let gates: Vec<LayerGates<'_>> = layers
            .iter()
            .map(|p| LayerGates::new(&self.spectra, p, true))
            .collect();

        // Prefix sweep: derivative-applied vectors, one per slot, each taken
        // right after the gate it differentiates. `after[m]` records which
        // gate in the flattened sequence (S, R, D, K per layer) it follows.
        let mut state = FockVector::vacuum(d)?.into_inner();
        let mut local = vec![DVector::<C64>::zeros(d); layers.len() * SLOTS_PER_LAYER];
        for (l, g) in gates.iter().enumerate() {
            let base = l * SLOTS_PER_LAYER;
            let [s, ds, dsc] = g.squeeze.apply_with_derivatives(&state);
            local[base + 2] = ds;
            local[base + 3] = dsc;
            let r = hadamard(&g.rotation, &s);
            local[base + 4] =
                DVector::from_iterator(d, r.iter().enumerate().map(|(n, x)| x * C64::new(0.0, n as f64)));
            let [dd, dg, dgc] = g.displace.apply_with_derivatives(&r);
            local[base] = dg;
            local[base + 1] = dgc;
            state = hadamard(&g.kerr, &dd);
            local[base + 5] =
                DVector::from_iterator(d, state.iter().enumerate().map(|(n, x)| x * C64::new(0.0, (n * n) as f64)));
        }

        // Suffix sweep, from the output backwards.
        let mut columns = DMatrix::zeros(d, layers.len() * SLOTS_PER_LAYER);
        let mut suffix = DMatrix::<C64>::identity(d, d);
        for (l, g) in gates.iter().enumerate().rev() {
            let base = l * SLOTS_PER_LAYER;
            columns.set_column(base + 5, &(&suffix * &local[base + 5]));
            scale_columns(&mut suffix, &g.kerr);
            columns.set_column(base, &(&suffix * &local[base]));
            columns.set_column(base + 1, &(&suffix * &local[base + 1]));
            suffix = &suffix * g.displace.dense();
            columns.set_column(base + 4, &(&suffix * &local[base + 4]));
            scale_columns(&mut suffix, &g.rotation);
            columns.set_column(base + 2, &(&suffix * &local[base + 2]));
            columns.set_column(base + 3, &(&suffix * &local[base + 3]));
            suffix = &suffix * g.squeeze.dense();
        }
        StateJacobian::new(FockVector::new(state)?, columns, params.shared_layout())
    }
}

/// `m ← m · diag(d)`.
fn scale_columns(m: &mut DMatrix<C64>, diag: &[C64]) {
    for (mut col, p) in m.column_iter_mut().zip(diag) {
        col *= *p;
    }
}
