//! Heralded photon and qubit amplification.
//!
//! A vacuum/single-photon superposition `ψ = c|0⟩ + s|1⟩` is teleported
//! through the partially entangled resource `Φ_pe = t|0,1⟩ + i·r|1,0⟩`
//! (one photon on a beam splitter of transmission `t`). Expanding
//! `ψ ⊗ Φ_pe` in the Bell basis `φ± = (|00⟩ ± i|11⟩)/√2`,
//! `ψ± = (i|01⟩ ± |10⟩)/√2` gives four branches:
//!
//! ```text
//! ψ ⊗ Φ_pe = (1/√2) [ φ⁺ ⊗ ( s·r|0⟩ + c·t|1⟩)
//!                   + φ⁻ ⊗ (−s·r|0⟩ + c·t|1⟩)
//!                   + ψ⁺ ⊗ ( c·r|0⟩ + s·t|1⟩)
//!                   + ψ⁻ ⊗ ( c·r|0⟩ − s·t|1⟩) ]
//! ```
//!
//! The ψ± outcomes keep the vacuum/photon roles and multiply the photon
//! amplitude by the gain `g = t/√(c²r² + |s|²t²)`; they are the accepting
//! heralds. The φ± outcomes swap the roles of vacuum and photon and are
//! rejected (hence an ideal amplifier accepts at most half of all heralds).
//!
//! Every analytic statement in this module is cross-checked against a
//! brute-force optical simulation of the amplifier circuit (one ancilla
//! photon, an imbalanced splitter, a balanced splitter and two heralding
//! detectors) built on [`crate::fock`].

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{self, ClickPattern, FockState, FockError};

pub use crate::fock::{DetectorKind, DetectorModel};

/// Tolerance used when validating normalized amplitudes.
const AMP_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AmplifierError {
    #[error("invalid qubit amplitudes: {0}")]
    InvalidAmplitudes(String),
    #[error("transmission {0} outside [0, 1]")]
    InvalidTransmission(f64),
    #[error("degenerate input: accepting branches have zero probability")]
    DegenerateInput,
    #[error("zero-probability branch requested")]
    ZeroProbabilityBranch,
    #[error("branch {0:?} does not herald acceptance")]
    NotAcceptingBranch(BellOutcome),
    #[error("invalid density operator: {0}")]
    InvalidDensity(String),
    #[error("no amplification threshold in (0, 1): detector too noisy or input not amplifiable")]
    NoAmplificationThreshold,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Vacuum/single-photon superposition `c|0⟩ + s|1⟩` with `c` real ≥ 0.
///
/// The global phase is fixed by making the vacuum amplitude real and
/// non-negative; when the vacuum amplitude is exactly zero the photon
/// amplitude keeps its phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitAmplitudes {
    c: f64,
    s: Complex64,
}

impl QubitAmplitudes {
    pub fn new(c: f64, s: Complex64) -> Result<Self, AmplifierError> {
        if !c.is_finite() || c < 0.0 || !s.re.is_finite() || !s.im.is_finite() {
            return Err(AmplifierError::InvalidAmplitudes(format!("c={c}, s={s}")));
        }
        let norm_sqr = c * c + s.norm_sqr();
        if (norm_sqr - 1.0).abs() > AMP_TOL {
            return Err(AmplifierError::InvalidAmplitudes(format!(
                "c² + |s|² = {norm_sqr}, expected 1"
            )));
        }
        let norm = norm_sqr.sqrt();
        Ok(QubitAmplitudes { c: c / norm, s: s / norm })
    }

    /// Normalize a raw two-component amplitude vector and fix the global
    /// phase (vacuum amplitude real ≥ 0; photon phase kept when the vacuum
    /// amplitude vanishes).
    pub fn from_unnormalized(a0: Complex64, a1: Complex64) -> Result<Self, AmplifierError> {
        let norm = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if norm < 1e-150 {
            return Err(AmplifierError::InvalidAmplitudes("zero norm".into()));
        }
        if a0.norm() > 0.0 {
            let phase = a0 / a0.norm();
            Ok(QubitAmplitudes { c: a0.norm() / norm, s: a1 * phase.conj() / norm })
        } else {
            Ok(QubitAmplitudes { c: 0.0, s: a1 / norm })
        }
    }

    /// State with photon probability `s2` and photon-amplitude phase `phase`.
    pub fn from_photon_prob(s2: f64, phase: f64) -> Result<Self, AmplifierError> {
        if !(0.0..=1.0).contains(&s2) {
            return Err(AmplifierError::InvalidAmplitudes(format!("|s|² = {s2} outside [0, 1]")));
        }
        let s = Complex64::from_polar(s2.sqrt(), phase);
        QubitAmplitudes::new((1.0 - s2).max(0.0).sqrt(), s)
    }

    pub fn vacuum() -> Self {
        QubitAmplitudes { c: 1.0, s: Complex64::new(0.0, 0.0) }
    }

    pub fn photon() -> Self {
        QubitAmplitudes { c: 0.0, s: Complex64::new(1.0, 0.0) }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn s(&self) -> Complex64 {
        self.s
    }

    pub fn vacuum_prob(&self) -> f64 {
        self.c * self.c
    }

    pub fn photon_prob(&self) -> f64 {
        self.s.norm_sqr()
    }

    /// Mean of σ_z with the single-photon state at +1: `η = |s|² − c²`.
    pub fn eta(&self) -> f64 {
        self.photon_prob() - self.vacuum_prob()
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &QubitAmplitudes) -> f64 {
        let overlap = Complex64::new(self.c * other.c, 0.0) + self.s.conj() * other.s;
        overlap.norm_sqr()
    }

    /// Component-wise equality after rotating `other` by the overlap phase
    /// (the alignment that maximizes agreement; orthogonal states never
    /// compare equal).
    pub fn approx_eq_up_to_phase(&self, other: &QubitAmplitudes, tol: f64) -> bool {
        let overlap = Complex64::new(self.c * other.c, 0.0) + self.s.conj() * other.s;
        let phase = if overlap.norm() > 1e-12 {
            overlap / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let b0 = Complex64::new(other.c, 0.0) * phase.conj();
        let b1 = other.s * phase.conj();
        (Complex64::new(self.c, 0.0) - b0).norm() <= tol && (self.s - b1).norm() <= tol
    }
}

/// Transmission/reflection pair of the resource beam splitter,
/// `t² + r² = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceSplit {
    t: f64,
    r: f64,
}

impl ResourceSplit {
    pub fn new(t: f64) -> Result<Self, AmplifierError> {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(AmplifierError::InvalidTransmission(t));
        }
        Ok(ResourceSplit { t, r: (1.0 - t * t).max(0.0).sqrt() })
    }

    pub fn from_t_squared(t2: f64) -> Result<Self, AmplifierError> {
        if !(0.0..=1.0).contains(&t2) || !t2.is_finite() {
            return Err(AmplifierError::InvalidTransmission(t2));
        }
        Self::new(t2.sqrt())
    }

    /// Balanced splitter: standard teleportation, gain 1.
    pub fn balanced() -> Self {
        ResourceSplit { t: std::f64::consts::FRAC_1_SQRT_2, r: std::f64::consts::FRAC_1_SQRT_2 }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn t_squared(&self) -> f64 {
        self.t * self.t
    }

    /// Imbalance parameter `k = 2t² − 1 = t² − r²`.
    pub fn imbalance(&self) -> f64 {
        self.t * self.t - self.r * self.r
    }
}

/// The four Bell-measurement results, with the phase convention
/// `φ± = (|00⟩ ± i|11⟩)/√2`, `ψ± = (i|01⟩ ± |10⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellOutcome {
    /// ψ± herald acceptance; φ± swap vacuum and photon and are rejected.
    pub fn is_accepting(&self) -> bool {
        matches!(self, BellOutcome::PsiPlus | BellOutcome::PsiMinus)
    }
}

impl std::fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BellOutcome::PhiPlus => "phi+",
            BellOutcome::PhiMinus => "phi-",
            BellOutcome::PsiPlus => "psi+",
            BellOutcome::PsiMinus => "psi-",
        };
        write!(f, "{s}")
    }
}

/// Feed-forward required after a given Bell outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Correction {
    /// ψ⁺: output ready as-is.
    None,
    /// ψ⁻: the photon component carries a π phase shift.
    PhaseFlip,
    /// φ±: vacuum and photon phases swapped; branch discarded.
    Rejected,
}

/// One Bell branch of the teleportation: its probability, the normalized
/// conditional output (meaningful only when the probability is nonzero) and
/// the required correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub outcome: BellOutcome,
    pub probability: f64,
    pub output: QubitAmplitudes,
    pub correction: Correction,
}

/// Expand `ψ ⊗ Φ_pe` in the Bell basis.
///
/// Each branch carries probability equal to half of its unnormalized squared
/// norm; the four probabilities sum to 1. Order: φ⁺, φ⁻, ψ⁺, ψ⁻.
pub fn bell_expand(input: &QubitAmplitudes, resource: &ResourceSplit) -> [Branch; 4] {
    let c = input.c;
    let s = input.s;
    let (t, r) = (resource.t, resource.r);
    let branch = |outcome, a0: Complex64, a1: Complex64, correction| {
        let norm_sqr = a0.norm_sqr() + a1.norm_sqr();
        let output = QubitAmplitudes::from_unnormalized(a0, a1)
            .unwrap_or_else(|_| QubitAmplitudes::vacuum());
        Branch { outcome, probability: norm_sqr / 2.0, output, correction }
    };
    [
        branch(BellOutcome::PhiPlus, s * r, Complex64::new(c * t, 0.0), Correction::Rejected),
        branch(BellOutcome::PhiMinus, -s * r, Complex64::new(c * t, 0.0), Correction::Rejected),
        branch(BellOutcome::PsiPlus, Complex64::new(c * r, 0.0), s * t, Correction::None),
        branch(BellOutcome::PsiMinus, Complex64::new(c * r, 0.0), -s * t, Correction::PhaseFlip),
    ]
}

/// Probability of an accepting herald (ψ⁺ or ψ⁻): `c²r² + |s|²t²`.
pub fn accepted_probability(branches: &[Branch; 4]) -> f64 {
    branches
        .iter()
        .filter(|b| b.outcome.is_accepting())
        .map(|b| b.probability)
        .sum()
}

/// Gain factor `g = t / √(c²r² + |s|²t²)` of the accepting branches.
///
/// The accepting output is `√(1 − |s|²g²)|0⟩ ± s·g|1⟩`; `|s|·g ≤ 1` always,
/// and `g = 1` at `t² = 1/2` (standard teleportation). Errors when the
/// accepting branches have zero probability.
pub fn gain(input: &QubitAmplitudes, resource: &ResourceSplit) -> Result<f64, AmplifierError> {
    let den_sqr = input.vacuum_prob() * resource.r * resource.r
        + input.photon_prob() * resource.t * resource.t;
    if den_sqr <= 0.0 {
        return Err(AmplifierError::DegenerateInput);
    }
    Ok(resource.t / den_sqr.sqrt())
}

/// Map of `η = ⟨σ_z⟩` (photon at +1) under an accepting herald:
/// `η → (η + k)/(1 + ηk)` with `k = 2t² − 1`.
///
/// Fixed points ±1; identity at `t² = 1/2`; composes like velocity addition
/// (`k₁₂ = (k₁ + k₂)/(1 + k₁k₂)`).
pub fn eta_map(eta: f64, resource: &ResourceSplit) -> f64 {
    assert!(eta.abs() <= 1.0 + 1e-9, "eta {eta} outside [-1, 1]");
    let eta = eta.clamp(-1.0, 1.0);
    let k = resource.imbalance();
    if eta == 1.0 || eta == -1.0 {
        return eta;
    }
    ((eta + k) / (1.0 + eta * k)).clamp(-1.0, 1.0)
}

/// 2×2 density operator over {|0⟩ (vacuum), |1⟩ (photon)}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self, AmplifierError> {
        let trace = m[0][0] + m[1][1];
        if (trace - Complex64::new(1.0, 0.0)).norm() > AMP_TOL {
            return Err(AmplifierError::InvalidDensity(format!("trace {trace} ≠ 1")));
        }
        if (m[0][1] - m[1][0].conj()).norm() > AMP_TOL {
            return Err(AmplifierError::InvalidDensity("not Hermitian".into()));
        }
        if m[0][0].re < -AMP_TOL || m[1][1].re < -AMP_TOL {
            return Err(AmplifierError::InvalidDensity("negative population".into()));
        }
        let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).re;
        if det < -AMP_TOL {
            return Err(AmplifierError::InvalidDensity(format!("negative determinant {det}")));
        }
        Ok(DensityMatrix { m })
    }

    pub fn from_pure(q: &QubitAmplitudes) -> Self {
        let a = [Complex64::new(q.c, 0.0), q.s];
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, ai) in a.iter().enumerate() {
            for (j, aj) in a.iter().enumerate() {
                m[i][j] = ai * aj.conj();
            }
        }
        DensityMatrix { m }
    }

    pub fn maximally_mixed() -> Self {
        let h = Complex64::new(0.5, 0.0);
        let z = Complex64::new(0.0, 0.0);
        DensityMatrix { m: [[h, z], [z, h]] }
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j]
    }

    /// `⟨σ_z⟩` with the photon at +1.
    pub fn z(&self) -> f64 {
        (self.m[1][1] - self.m[0][0]).re
    }

    /// Largest entry-wise deviation from another operator.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }
}

/// Apply one accepting branch to a density operator.
///
/// The branch contraction is `diag(r, ±t)` (minus for ψ⁻); returns the
/// branch probability `tr(KρK†)/2` and the renormalized state. Consistent
/// with [`bell_expand`] on pure inputs; pure states map to pure states.
pub fn kraus_map(
    rho: &DensityMatrix,
    resource: &ResourceSplit,
    outcome: BellOutcome,
) -> Result<(f64, DensityMatrix), AmplifierError> {
    let sign = match outcome {
        BellOutcome::PsiPlus => 1.0,
        BellOutcome::PsiMinus => -1.0,
        other => return Err(AmplifierError::NotAcceptingBranch(other)),
    };
    let k = [resource.r, sign * resource.t];
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = rho.m[i][j] * k[i] * k[j];
        }
    }
    let trace = (out[0][0] + out[1][1]).re;
    if trace <= 1e-300 {
        return Err(AmplifierError::ZeroProbabilityBranch);
    }
    for row in &mut out {
        for entry in row {
            *entry /= trace;
        }
    }
    Ok((trace / 2.0, DensityMatrix { m: out }))
}

/// Deformation of the Poincaré sphere under an accepting herald, for pure
/// states `c = cos(θ/2)`, `s = e^{iφ} sin(θ/2)` (θ measured from the vacuum
/// pole; the photon pole sits at z = +1, so z = −cos θ).
///
/// The azimuth is preserved; points move along meridians toward the photon
/// pole. Returns (θ′, φ′).
pub fn poincare_map(theta: f64, phi: f64, resource: &ResourceSplit) -> (f64, f64) {
    let z = -theta.cos();
    let z_out = eta_map(z, resource);
    ((-z_out).acos(), phi)
}

/// Classification of one oracle click pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeraldClass {
    /// A single-click pattern consistent with ψ⁺ or ψ⁻.
    Accepted { outcome: BellOutcome, correction: Correction },
    /// No clicks, multi-photon clicks, or any other pattern.
    Rejected,
}

/// One enumerated outcome of the amplifier circuit: the click pattern on the
/// heralding detectors, its classification and probability, and the heralded
/// ensemble on the output mode.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub pattern: ClickPattern,
    pub herald: HeraldClass,
    pub probability: f64,
    pub ensemble: Vec<(f64, FockState)>,
}

impl OracleOutcome {
    /// P(one photon in the output mode), averaged over the ensemble.
    pub fn photon_probability(&self) -> f64 {
        self.ensemble
            .iter()
            .map(|(w, s)| {
                let dist = s.number_distribution(0).expect("single output mode");
                w * dist.iter().skip(1).sum::<f64>()
            })
            .sum()
    }

    /// P(vacuum in the output mode), averaged over the ensemble.
    pub fn vacuum_probability(&self) -> f64 {
        self.ensemble
            .iter()
            .map(|(w, s)| w * s.number_distribution(0).expect("single output mode")[0])
            .sum()
    }

    /// The heralded output as qubit amplitudes, when the ensemble is a
    /// single pure state.
    pub fn output_qubit(&self) -> Option<QubitAmplitudes> {
        if self.ensemble.len() != 1 {
            return None;
        }
        let state = &self.ensemble[0].1;
        QubitAmplitudes::from_unnormalized(state.amplitude(&[0]), state.amplitude(&[1])).ok()
    }
}

/// Brute-force simulation of the single-rail amplifier circuit.
///
/// One ancilla photon passes an imbalanced splitter of transmission `t`; the
/// reflected arm meets the input on a balanced splitter; both mixer ports
/// are measured with the given detectors; the transmitted arm is the output.
/// Click-pattern dictionary (detector order: input port, ancilla-arm port):
/// a single click on the ancilla-arm port heralds ψ⁺, a single click on the
/// input port heralds ψ⁻, everything else is rejected. With ideal PNR
/// detectors the accepted outcomes reproduce [`bell_expand`] exactly; with
/// threshold detectors the two-photon bunched events masquerade as single
/// clicks and raise the heralded vacuum probability.
pub fn circuit_oracle(
    input: &QubitAmplitudes,
    resource: &ResourceSplit,
    detector: &DetectorModel,
) -> Result<Vec<OracleOutcome>, AmplifierError> {
    // Modes: 0 input, 1 ancilla arm toward the mixer, 2 output.
    // The ancilla photon starts in the output mode; the imbalanced splitter
    // sends its reflected part onto mode 1, preparing t|0,1⟩ + i·r|1,0⟩.
    let state = FockState::from_amplitudes(
        3,
        2,
        vec![
            (vec![0, 0, 1], Complex64::new(input.c, 0.0)),
            (vec![1, 0, 1], input.s),
        ],
    )?;
    let state = state.apply_beam_splitter(1, 2, resource.t)?;
    let state = state.apply_beam_splitter(0, 1, std::f64::consts::FRAC_1_SQRT_2)?;
    let outcomes = fock::detect(&state, &[0, 1], detector)?;
    Ok(outcomes
        .into_iter()
        .map(|o| {
            let herald = classify_single_rail(&o.pattern);
            OracleOutcome {
                pattern: o.pattern,
                herald,
                probability: o.probability,
                ensemble: o.ensemble,
            }
        })
        .collect())
}

fn classify_single_rail(pattern: &ClickPattern) -> HeraldClass {
    let accepted = |outcome| {
        let correction = match outcome {
            BellOutcome::PsiPlus => Correction::None,
            _ => Correction::PhaseFlip,
        };
        HeraldClass::Accepted { outcome, correction }
    };
    match pattern {
        ClickPattern::Counts(c) if c == &[0, 1] => accepted(BellOutcome::PsiPlus),
        ClickPattern::Counts(c) if c == &[1, 0] => accepted(BellOutcome::PsiMinus),
        ClickPattern::Clicks(c) if c == &[false, true] => accepted(BellOutcome::PsiPlus),
        ClickPattern::Clicks(c) if c == &[true, false] => accepted(BellOutcome::PsiMinus),
        _ => HeraldClass::Rejected,
    }
}

/// Aggregate accepted-herald observables of an oracle enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldSummary {
    pub accepted_probability: f64,
    /// P(photon at the output | accepted herald); None when heralds never
    /// accept.
    pub conditional_photon_probability: Option<f64>,
    pub conditional_vacuum_probability: Option<f64>,
}

pub fn herald_summary(outcomes: &[OracleOutcome]) -> HeraldSummary {
    let mut accepted = 0.0;
    let mut photon = 0.0;
    for outcome in outcomes {
        if matches!(outcome.herald, HeraldClass::Accepted { .. }) {
            accepted += outcome.probability;
            photon += outcome.probability * outcome.photon_probability();
        }
    }
    if accepted <= 0.0 {
        return HeraldSummary {
            accepted_probability: 0.0,
            conditional_photon_probability: None,
            conditional_vacuum_probability: None,
        };
    }
    HeraldSummary {
        accepted_probability: accepted,
        conditional_photon_probability: Some(photon / accepted),
        conditional_vacuum_probability: Some(1.0 - photon / accepted),
    }
}

/// Polarization qubit in dual-rail encoding with an optional vacuum
/// component: `γ|0_h,0_v⟩ + α|1_h,0_v⟩ + β|0_h,1_v⟩`, γ real ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRailQubit {
    vacuum: f64,
    h: Complex64,
    v: Complex64,
}

impl DualRailQubit {
    pub fn new(vacuum: f64, h: Complex64, v: Complex64) -> Result<Self, AmplifierError> {
        if vacuum < 0.0 || !vacuum.is_finite() {
            return Err(AmplifierError::InvalidAmplitudes(format!("γ = {vacuum}")));
        }
        let norm_sqr = vacuum * vacuum + h.norm_sqr() + v.norm_sqr();
        if (norm_sqr - 1.0).abs() > AMP_TOL {
            return Err(AmplifierError::InvalidAmplitudes(format!(
                "γ² + |α|² + |β|² = {norm_sqr}, expected 1"
            )));
        }
        let n = norm_sqr.sqrt();
        Ok(DualRailQubit { vacuum: vacuum / n, h: h / n, v: v / n })
    }

    /// Qubit definitely present: `α|1_h,0_v⟩ + β|0_h,1_v⟩`.
    pub fn from_qubit(h: Complex64, v: Complex64) -> Result<Self, AmplifierError> {
        Self::new(0.0, h, v)
    }

    pub fn vacuum_amp(&self) -> f64 {
        self.vacuum
    }

    pub fn h(&self) -> Complex64 {
        self.h
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }
}

/// One outcome of the dual-rail qubit amplifier.
///
/// Ensemble states live on the (H output, V output) mode pair and already
/// carry the recorded per-rail ψ⁻ phase corrections.
#[derive(Debug, Clone)]
pub struct DualRailOutcome {
    pub pattern: ClickPattern,
    pub probability: f64,
    pub accepted: bool,
    pub h_outcome: Option<BellOutcome>,
    pub v_outcome: Option<BellOutcome>,
    pub ensemble: Vec<(f64, FockState)>,
}

impl DualRailOutcome {
    /// P(exactly one photon shared between the two output rails).
    pub fn qubit_subspace_probability(&self) -> f64 {
        self.ensemble
            .iter()
            .map(|(w, s)| {
                w * (s.amplitude(&[1, 0]).norm_sqr() + s.amplitude(&[0, 1]).norm_sqr())
            })
            .sum()
    }

    /// Fidelity of the single-photon component to the qubit (α, β),
    /// averaged over the ensemble; None when the component has no weight.
    pub fn photon_subspace_fidelity(&self, input: &DualRailQubit) -> Option<f64> {
        let mut overlap = 0.0;
        let mut weight = 0.0;
        for (w, s) in &self.ensemble {
            let a10 = s.amplitude(&[1, 0]);
            let a01 = s.amplitude(&[0, 1]);
            overlap += w * (input.h.conj() * a10 + input.v.conj() * a01).norm_sqr();
            weight += w * (a10.norm_sqr() + a01.norm_sqr());
        }
        let qubit_norm = input.h.norm_sqr() + input.v.norm_sqr();
        if weight <= 1e-30 || qubit_norm <= 1e-30 {
            return None;
        }
        Some(overlap / (weight * qubit_norm))
    }
}

/// Amplify a dual-rail photonic qubit: the two rails are separated, each
/// passes its own single-rail amplifier (ancilla photons `|1_h⟩`, `|1_v⟩`),
/// and the outputs are recombined.
///
/// A pattern is accepted exactly when one H-heralding detector and one
/// V-heralding detector fire; ψ⁻-type rails are accepted with a recorded
/// phase correction, applied here to the ensemble amplitudes. Detector
/// order in patterns: (H input port, H ancilla port, V input port,
/// V ancilla port).
pub fn qubit_amplify(
    input: &DualRailQubit,
    resource: &ResourceSplit,
    detector: &DetectorModel,
) -> Result<Vec<DualRailOutcome>, AmplifierError> {
    // Modes: 0 H input, 1 H ancilla arm, 2 H output,
    //        3 V input, 4 V ancilla arm, 5 V output.
    let state = FockState::from_amplitudes(
        6,
        2,
        vec![
            (vec![0, 0, 1, 0, 0, 1], Complex64::new(input.vacuum, 0.0)),
            (vec![1, 0, 1, 0, 0, 1], input.h),
            (vec![0, 0, 1, 1, 0, 1], input.v),
        ],
    )?;
    let state = state.apply_beam_splitter(1, 2, resource.t)?;
    let state = state.apply_beam_splitter(4, 5, resource.t)?;
    let state = state.apply_beam_splitter(0, 1, std::f64::consts::FRAC_1_SQRT_2)?;
    let state = state.apply_beam_splitter(3, 4, std::f64::consts::FRAC_1_SQRT_2)?;
    let outcomes = fock::detect(&state, &[0, 1, 3, 4], detector)?;

    let mut result = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let h_class = classify_single_rail(&rail_pattern(&o.pattern, 0));
        let v_class = classify_single_rail(&rail_pattern(&o.pattern, 2));
        let (accepted, h_outcome, v_outcome) = match (h_class, v_class) {
            (
                HeraldClass::Accepted { outcome: h, .. },
                HeraldClass::Accepted { outcome: v, .. },
            ) => (true, Some(h), Some(v)),
            (HeraldClass::Accepted { outcome: h, .. }, _) => (false, Some(h), None),
            (_, HeraldClass::Accepted { outcome: v, .. }) => (false, None, Some(v)),
            _ => (false, None, None),
        };
        let mut ensemble = o.ensemble;
        if accepted {
            apply_phase_corrections(
                &mut ensemble,
                h_outcome == Some(BellOutcome::PsiMinus),
                v_outcome == Some(BellOutcome::PsiMinus),
            );
        }
        result.push(DualRailOutcome {
            pattern: o.pattern,
            probability: o.probability,
            accepted,
            h_outcome,
            v_outcome,
            ensemble,
        });
    }
    Ok(result)
}

fn rail_pattern(pattern: &ClickPattern, offset: usize) -> ClickPattern {
    match pattern {
        ClickPattern::Counts(c) => ClickPattern::Counts(c[offset..offset + 2].to_vec()),
        ClickPattern::Clicks(c) => ClickPattern::Clicks(c[offset..offset + 2].to_vec()),
    }
}

fn apply_phase_corrections(ensemble: &mut [(f64, FockState)], flip_h: bool, flip_v: bool) {
    if !flip_h && !flip_v {
        return;
    }
    for (_, state) in ensemble.iter_mut() {
        let flipped: Vec<(Vec<u8>, Complex64)> = state
            .iter()
            .map(|(occ, amp)| {
                let mut sign = 1.0;
                if flip_h && occ[0] % 2 == 1 {
                    sign = -sign;
                }
                if flip_v && occ[1] % 2 == 1 {
                    sign = -sign;
                }
                (occ.to_vec(), amp * sign)
            })
            .collect();
        *state = FockState::from_amplitudes(state.num_modes(), state.cutoff(), flipped)
            .expect("phase flip preserves normalization");
    }
}

/// Empirical herald statistics from sampling the amplifier circuit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeraldStats {
    pub herald_probability: f64,
    pub conditional_photon_probability: Option<f64>,
    pub conditional_vacuum_probability: Option<f64>,
    /// Mean fidelity of sampled heralded outputs to the analytic branch
    /// outputs for the same Bell outcome.
    pub fidelity_to_analytic: Option<f64>,
    pub trials: u64,
    pub accepted: u64,
    pub seed: u64,
}

/// Monte Carlo sampling of the amplifier: draws click patterns and heralded
/// output states from the exact circuit distribution, then measures photon
/// presence at the output. Fully reproducible from the seed.
pub fn amplify_mc(
    input: &QubitAmplitudes,
    resource: &ResourceSplit,
    detector: &DetectorModel,
    trials: u64,
    seed: u64,
) -> Result<HeraldStats, AmplifierError> {
    if trials == 0 {
        return Err(AmplifierError::NoTrials);
    }
    let outcomes = circuit_oracle(input, resource, detector)?;
    let analytic = bell_expand(input, resource);
    let mut rng = StdRng::seed_from_u64(seed);

    let mut accepted = 0u64;
    let mut photon = 0u64;
    let mut fidelity_sum = 0.0;
    for _ in 0..trials {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = outcomes.len() - 1;
        for (i, o) in outcomes.iter().enumerate() {
            acc += o.probability;
            if u < acc {
                idx = i;
                break;
            }
        }
        let outcome = &outcomes[idx];
        let HeraldClass::Accepted { outcome: bell, .. } = outcome.herald else {
            continue;
        };
        accepted += 1;

        // Draw a pure state from the heralded ensemble.
        let v: f64 = rng.gen();
        let mut acc = 0.0;
        let mut member = outcome.ensemble.len() - 1;
        for (i, (w, _)) in outcome.ensemble.iter().enumerate() {
            acc += w;
            if v < acc {
                member = i;
                break;
            }
        }
        let state = &outcome.ensemble[member].1;
        let dist = state.number_distribution(0)?;
        let p_photon: f64 = dist.iter().skip(1).sum();
        if rng.gen::<f64>() < p_photon {
            photon += 1;
        }
        if let Ok(q) =
            QubitAmplitudes::from_unnormalized(state.amplitude(&[0]), state.amplitude(&[1]))
        {
            let reference = analytic
                .iter()
                .find(|b| b.outcome == bell)
                .expect("branch present");
            fidelity_sum += reference.output.fidelity(&q);
        }
    }

    let herald_probability = accepted as f64 / trials as f64;
    let (cond_photon, cond_vacuum, fid) = if accepted > 0 {
        let p = photon as f64 / accepted as f64;
        (Some(p), Some(1.0 - p), Some(fidelity_sum / accepted as f64))
    } else {
        (None, None, None)
    };
    Ok(HeraldStats {
        herald_probability,
        conditional_photon_probability: cond_photon,
        conditional_vacuum_probability: cond_vacuum,
        fidelity_to_analytic: fid,
        trials,
        accepted,
        seed,
    })
}

/// Smallest transmission amplitude above which accepted heralds carry a
/// larger photon probability than the input (`> |s|²`), located by a coarse
/// scan for the first sign change followed by bisection to 1e-4 on `t`.
///
/// Ideal PNR detectors give `t² = 1/2`; ideal threshold detectors give a
/// strictly larger value for weak inputs (bunched two-photon events
/// masquerade as valid heralds of vacuum). Errors when heralded
/// amplification never happens for any t in (0, 1) — a definite photon
/// (`|s|² = 1`) cannot be amplified.
pub fn amplification_threshold(
    input: &QubitAmplitudes,
    detector: &DetectorModel,
) -> Result<f64, AmplifierError> {
    const TOL: f64 = 1e-4;
    const SCAN_POINTS: usize = 64;
    if input.photon_prob() <= 0.0 {
        return Err(AmplifierError::DegenerateInput);
    }
    let target = input.photon_prob();
    let excess = |t: f64| -> Result<f64, AmplifierError> {
        let resource = ResourceSplit::new(t)?;
        let summary = herald_summary(&circuit_oracle(input, &resource, detector)?);
        Ok(summary.conditional_photon_probability.unwrap_or(0.0) - target)
    };

    let t_at = |i: usize| {
        let lo = 1e-3;
        let hi = 1.0 - 1e-9;
        lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64
    };
    let mut bracket = None;
    let mut prev = (t_at(0), excess(t_at(0))?);
    if prev.1 > 0.0 {
        return Ok(prev.0);
    }
    for i in 1..SCAN_POINTS {
        let t = t_at(i);
        let e = excess(t)?;
        if e > 0.0 {
            bracket = Some((prev.0, t));
            break;
        }
        prev = (t, e);
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(AmplifierError::NoAmplificationThreshold);
    };
    while hi - lo > TOL {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
