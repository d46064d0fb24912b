//! Sparse multimode Fock-state algebra: basis states, beam splitters and
//! photon-counting detection.
//!
//! States are pure superpositions of photon-occupation vectors with a hard
//! per-mode cutoff. The single global phase convention used everywhere is
//! "i on reflection": a beam splitter of transmission amplitude `t` maps the
//! creation operators as
//!
//! ```text
//! a† → t·a† + i·r·b†,    b† → i·r·a† + t·b†,    r = sqrt(1 − t²)
//! ```
//!
//! so a single photon entering mode `b` produces `t|0,1⟩ + i·r|1,0⟩`.
//!
//! Heralded measurement outcomes are represented as ensembles of weighted
//! pure states; density matrices never appear.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on squared norms after normalization.
pub const NORM_TOL: f64 = 1e-12;

/// Default per-mode photon cutoff.
pub const DEFAULT_CUTOFF: u8 = 2;

/// Default amplitude-pruning threshold (well below every test tolerance).
pub const DEFAULT_PRUNE_EPS: f64 = 1e-15;

/// Probabilities below this are treated as impossible outcomes.
const ZERO_PROB_EPS: f64 = 1e-24;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("occupation vector has length {got}, state has {expected} modes")]
    WrongVectorLength { expected: usize, got: usize },
    #[error("occupation {occupation} exceeds cutoff {cutoff}")]
    OccupationExceedsCutoff { occupation: u8, cutoff: u8 },
    #[error("mode index {mode} out of range for {num_modes} modes")]
    ModeOutOfRange { mode: usize, num_modes: usize },
    #[error("beam splitter would populate occupation {needed} above cutoff {cutoff}")]
    CutoffOverflow { needed: usize, cutoff: u8 },
    #[error("transmission amplitude {0} outside [0, 1]")]
    InvalidTransmission(f64),
    #[error("modes {0} and {1} must be distinct")]
    ModesNotDistinct(usize, usize),
    #[error("requested collapse onto a zero-probability outcome")]
    ZeroProbabilityBranch,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("invalid detector model: {0}")]
    InvalidDetector(String),
}

/// Photon-counting detector model applied to measured modes.
///
/// Efficiency acts as binomial thinning of the true photon number; a dark
/// event (probability `dark_click_prob` per detector per gate) adds one
/// reported count for PNR detectors and is OR-ed with photon-induced clicks
/// for threshold detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub efficiency: f64,
    pub dark_click_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    /// Photon-number resolving: reports the exact (thinned) count.
    Pnr,
    /// Click/no-click: conflates one or more photons.
    Threshold,
}

impl DetectorModel {
    pub fn ideal_pnr() -> Self {
        DetectorModel { kind: DetectorKind::Pnr, efficiency: 1.0, dark_click_prob: 0.0 }
    }

    pub fn ideal_threshold() -> Self {
        DetectorModel { kind: DetectorKind::Threshold, efficiency: 1.0, dark_click_prob: 0.0 }
    }

    pub fn validate(&self) -> Result<(), FockError> {
        if !(0.0..=1.0).contains(&self.efficiency) || !self.efficiency.is_finite() {
            return Err(FockError::InvalidDetector(format!(
                "efficiency {} outside [0, 1]",
                self.efficiency
            )));
        }
        if !(0.0..1.0).contains(&self.dark_click_prob) {
            return Err(FockError::InvalidDetector(format!(
                "dark_click_prob {} outside [0, 1)",
                self.dark_click_prob
            )));
        }
        Ok(())
    }
}

/// Joint outcome of the detectors on the measured modes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClickPattern {
    /// Exact reported counts, one per measured mode (PNR detectors).
    Counts(Vec<u8>),
    /// Click booleans, one per measured mode (threshold detectors).
    Clicks(Vec<bool>),
}

impl std::fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClickPattern::Counts(c) => {
                let parts: Vec<String> = c.iter().map(|n| n.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
            ClickPattern::Clicks(c) => {
                let parts: Vec<&str> = c.iter().map(|b| if *b { "click" } else { "-" }).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

/// One detection outcome: a click pattern, its probability, and the heralded
/// ensemble of pure states on the unmeasured modes (weights conditional on
/// the pattern, summing to 1).
#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub pattern: ClickPattern,
    pub probability: f64,
    pub ensemble: Vec<(f64, FockState)>,
}

/// Pure multimode photon-number state with sparse complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    num_modes: usize,
    cutoff: u8,
    prune_eps: f64,
    amps: BTreeMap<Vec<u8>, Complex64>,
}

impl FockState {
    /// Basis state |n₁,…,n_k⟩ with the default cutoff.
    pub fn basis(num_modes: usize, occupation: &[u8]) -> Result<Self, FockError> {
        Self::basis_with_cutoff(num_modes, occupation, DEFAULT_CUTOFF)
    }

    /// Basis state with an explicit per-mode cutoff.
    pub fn basis_with_cutoff(
        num_modes: usize,
        occupation: &[u8],
        cutoff: u8,
    ) -> Result<Self, FockError> {
        let mut state = FockState {
            num_modes,
            cutoff,
            prune_eps: DEFAULT_PRUNE_EPS,
            amps: BTreeMap::new(),
        };
        state.check_occupation(occupation)?;
        state.amps.insert(occupation.to_vec(), Complex64::new(1.0, 0.0));
        Ok(state)
    }

    /// Build a state from explicit (occupation, amplitude) pairs and
    /// normalize it.
    pub fn from_amplitudes<I>(
        num_modes: usize,
        cutoff: u8,
        amplitudes: I,
    ) -> Result<Self, FockError>
    where
        I: IntoIterator<Item = (Vec<u8>, Complex64)>,
    {
        let mut state = FockState {
            num_modes,
            cutoff,
            prune_eps: DEFAULT_PRUNE_EPS,
            amps: BTreeMap::new(),
        };
        for (occ, amp) in amplitudes {
            state.check_occupation(&occ)?;
            *state.amps.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        state.normalize()?;
        Ok(state)
    }

    fn check_occupation(&self, occ: &[u8]) -> Result<(), FockError> {
        if occ.len() != self.num_modes {
            return Err(FockError::WrongVectorLength {
                expected: self.num_modes,
                got: occ.len(),
            });
        }
        for &n in occ {
            if n > self.cutoff {
                return Err(FockError::OccupationExceedsCutoff {
                    occupation: n,
                    cutoff: self.cutoff,
                });
            }
        }
        Ok(())
    }

    fn check_mode(&self, mode: usize) -> Result<(), FockError> {
        if mode >= self.num_modes {
            return Err(FockError::ModeOutOfRange { mode, num_modes: self.num_modes });
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cutoff(&self) -> u8 {
        self.cutoff
    }

    /// Amplitude on one occupation vector (zero if absent).
    pub fn amplitude(&self, occupation: &[u8]) -> Complex64 {
        self.amps.get(occupation).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Iterate stored (occupation, amplitude) pairs in deterministic order.
    pub fn iter(&self) -> impl Iterator<Item = (&[u8], Complex64)> {
        self.amps.iter().map(|(occ, amp)| (occ.as_slice(), *amp))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Rescale to unit norm and drop amplitudes below the prune threshold.
    pub fn normalize(&mut self) -> Result<(), FockError> {
        let norm = self.norm_sqr().sqrt();
        if norm < 1e-150 {
            return Err(FockError::ZeroNorm);
        }
        for amp in self.amps.values_mut() {
            *amp /= norm;
        }
        self.prune();
        Ok(())
    }

    /// Drop amplitudes with magnitude below the prune threshold.
    pub fn prune(&mut self) {
        let eps = self.prune_eps;
        self.amps.retain(|_, amp| amp.norm() >= eps);
    }

    /// Probability distribution of photon number in one mode,
    /// indexed 0..=cutoff.
    pub fn number_distribution(&self, mode: usize) -> Result<Vec<f64>, FockError> {
        self.check_mode(mode)?;
        let mut dist = vec![0.0; self.cutoff as usize + 1];
        for (occ, amp) in &self.amps {
            dist[occ[mode] as usize] += amp.norm_sqr();
        }
        Ok(dist)
    }

    /// Apply a beam splitter of transmission amplitude `t` to a mode pair.
    ///
    /// Creation operators transform as `a† → t·a† + i·r·b†`,
    /// `b† → i·r·a† + t·b†`. Errors if any transformed occupation above the
    /// cutoff would carry non-negligible amplitude.
    pub fn apply_beam_splitter(
        &self,
        mode_a: usize,
        mode_b: usize,
        t: f64,
    ) -> Result<FockState, FockError> {
        self.check_mode(mode_a)?;
        self.check_mode(mode_b)?;
        if mode_a == mode_b {
            return Err(FockError::ModesNotDistinct(mode_a, mode_b));
        }
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(FockError::InvalidTransmission(t));
        }
        let r = (1.0 - t * t).max(0.0).sqrt();

        let mut out: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        for (occ, amp) in &self.amps {
            let m = occ[mode_a] as usize;
            let n = occ[mode_b] as usize;
            // |m,n⟩ = a†^m b†^n / sqrt(m! n!) |0,0⟩; expand both transformed
            // operator powers binomially and re-collect number states.
            for j in 0..=m {
                for k in 0..=n {
                    let p = j + k;
                    let q = (m - j) + (n - k);
                    let reflections = (m - j) + k;
                    let magnitude = binom(m, j)
                        * binom(n, k)
                        * powi(t, j + (n - k))
                        * powi(r, reflections)
                        * (factorial(p) * factorial(q) / (factorial(m) * factorial(n))).sqrt();
                    if magnitude == 0.0 {
                        continue;
                    }
                    let term = amp * i_power(reflections) * magnitude;
                    if term.norm() < self.prune_eps {
                        continue;
                    }
                    if p > self.cutoff as usize || q > self.cutoff as usize {
                        return Err(FockError::CutoffOverflow {
                            needed: p.max(q),
                            cutoff: self.cutoff,
                        });
                    }
                    let mut new_occ = occ.clone();
                    new_occ[mode_a] = p as u8;
                    new_occ[mode_b] = q as u8;
                    *out.entry(new_occ).or_insert(Complex64::new(0.0, 0.0)) += term;
                }
            }
        }

        let mut state = FockState {
            num_modes: self.num_modes,
            cutoff: self.cutoff,
            prune_eps: self.prune_eps,
            amps: out,
        };
        state.prune();
        Ok(state)
    }

    /// Project one mode onto exactly `n` photons.
    ///
    /// Returns the outcome probability and the renormalized post-measurement
    /// state; the measured mode is kept at fixed occupation `n`. Errors when
    /// the requested outcome has zero probability.
    pub fn project_number(&self, mode: usize, n: u8) -> Result<(f64, FockState), FockError> {
        self.check_mode(mode)?;
        if n > self.cutoff {
            return Err(FockError::OccupationExceedsCutoff { occupation: n, cutoff: self.cutoff });
        }
        let mut kept: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        let mut prob = 0.0;
        for (occ, amp) in &self.amps {
            if occ[mode] == n {
                prob += amp.norm_sqr();
                kept.insert(occ.clone(), *amp);
            }
        }
        if prob <= ZERO_PROB_EPS {
            return Err(FockError::ZeroProbabilityBranch);
        }
        let mut collapsed = FockState {
            num_modes: self.num_modes,
            cutoff: self.cutoff,
            prune_eps: self.prune_eps,
            amps: kept,
        };
        collapsed.normalize()?;
        Ok((prob, collapsed))
    }

    /// Pure state on the complement of `modes`, keeping amplitudes of all
    /// occupation vectors whose restriction to `modes` equals `measured`.
    fn restricted(&self, modes: &[usize], measured: &[u8]) -> FockState {
        let mut amps: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        for (occ, amp) in &self.amps {
            if modes.iter().zip(measured).all(|(&m, &n)| occ[m] == n) {
                let rest: Vec<u8> = occ
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !modes.contains(i))
                    .map(|(_, &n)| n)
                    .collect();
                *amps.entry(rest).or_insert(Complex64::new(0.0, 0.0)) += *amp;
            }
        }
        FockState {
            num_modes: self.num_modes - modes.len(),
            cutoff: self.cutoff,
            prune_eps: self.prune_eps,
            amps,
        }
    }
}

/// Measure a set of modes with the given detector model, enumerating every
/// outcome exactly.
///
/// All PNR outcomes on the measured modes are enumerated, detector
/// efficiency is applied as binomial thinning, dark events are added, and
/// (for threshold detectors) reported counts are coarse-grained into click
/// booleans. Outcome probabilities sum to 1; the measured modes are removed
/// from the returned states.
pub fn detect(
    state: &FockState,
    modes: &[usize],
    model: &DetectorModel,
) -> Result<Vec<DetectionOutcome>, FockError> {
    model.validate()?;
    for &m in modes {
        state.check_mode(m)?;
    }
    for (i, &m) in modes.iter().enumerate() {
        if modes[i + 1..].contains(&m) {
            return Err(FockError::ModesNotDistinct(m, m));
        }
    }

    // True joint photon counts on the measured modes -> pure branch.
    let mut true_branches: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    for (occ, amp) in &state.amps {
        let key: Vec<u8> = modes.iter().map(|&m| occ[m]).collect();
        *true_branches.entry(key).or_insert(0.0) += amp.norm_sqr();
    }

    let mut pooled: BTreeMap<ClickPattern, (f64, Vec<(f64, FockState)>)> = BTreeMap::new();
    for (true_counts, branch_prob) in &true_branches {
        if *branch_prob <= ZERO_PROB_EPS {
            continue;
        }
        let mut collapsed = state.restricted(modes, true_counts);
        collapsed.normalize()?;

        // Per-detector reported-outcome distributions, then their product.
        let per_detector: Vec<Vec<(ReportedOutcome, f64)>> = true_counts
            .iter()
            .map(|&k| reported_distribution(k, model))
            .collect();
        let mut joint: Vec<(Vec<ReportedOutcome>, f64)> = vec![(Vec::new(), 1.0)];
        for dist in &per_detector {
            let mut next = Vec::with_capacity(joint.len() * dist.len());
            for (prefix, p) in &joint {
                for (rep, q) in dist {
                    let mut v = prefix.clone();
                    v.push(*rep);
                    next.push((v, p * q));
                }
            }
            joint = next;
        }

        for (reported, rep_prob) in joint {
            let weight = branch_prob * rep_prob;
            if weight <= ZERO_PROB_EPS {
                continue;
            }
            let pattern = match model.kind {
                DetectorKind::Pnr => ClickPattern::Counts(
                    reported.iter().map(|r| r.count()).collect(),
                ),
                DetectorKind::Threshold => ClickPattern::Clicks(
                    reported.iter().map(|r| r.count() > 0).collect(),
                ),
            };
            let entry = pooled.entry(pattern).or_insert((0.0, Vec::new()));
            entry.0 += weight;
            if let Some((w, s)) = entry.1.iter_mut().find(|(_, s)| s == &collapsed) {
                *w += weight;
                let _ = s;
            } else {
                entry.1.push((weight, collapsed.clone()));
            }
        }
    }

    let outcomes = pooled
        .into_iter()
        .map(|(pattern, (probability, mut ensemble))| {
            for (w, _) in &mut ensemble {
                *w /= probability;
            }
            DetectionOutcome { pattern, probability, ensemble }
        })
        .collect();
    Ok(outcomes)
}

/// Sample one detection outcome: draws a click pattern from the enumerated
/// distribution, then a pure state from the heralded ensemble.
pub fn sample_detection<R: Rng + ?Sized>(
    state: &FockState,
    modes: &[usize],
    model: &DetectorModel,
    rng: &mut R,
) -> Result<(ClickPattern, FockState), FockError> {
    let outcomes = detect(state, modes, model)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = outcomes.len() - 1;
    for (i, outcome) in outcomes.iter().enumerate() {
        acc += outcome.probability;
        if u < acc {
            chosen = i;
            break;
        }
    }
    let outcome = &outcomes[chosen];
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
    Ok((outcome.pattern.clone(), outcome.ensemble[member].1.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ReportedOutcome {
    Count(u8),
}

impl ReportedOutcome {
    fn count(self) -> u8 {
        match self {
            ReportedOutcome::Count(n) => n,
        }
    }
}

/// Distribution of the reported count for a detector seeing `k` true
/// photons: binomial thinning at the efficiency, then a dark event adding
/// one count with probability `dark_click_prob`.
fn reported_distribution(k: u8, model: &DetectorModel) -> Vec<(ReportedOutcome, f64)> {
    let eta = model.efficiency;
    let d = model.dark_click_prob;
    let mut dist: BTreeMap<u8, f64> = BTreeMap::new();
    for j in 0..=k {
        let pj = binom(k as usize, j as usize)
            * powi(eta, j as usize)
            * powi(1.0 - eta, (k - j) as usize);
        if pj == 0.0 {
            continue;
        }
        *dist.entry(j).or_insert(0.0) += pj * (1.0 - d);
        if d > 0.0 {
            *dist.entry(j + 1).or_insert(0.0) += pj * d;
        }
    }
    dist.into_iter().map(|(n, p)| (ReportedOutcome::Count(n), p)).collect()
}

const FACTORIALS: [f64; 17] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
];

fn factorial(n: usize) -> f64 {
    FACTORIALS[n]
}

fn binom(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn powi(base: f64, exp: usize) -> f64 {
    if exp == 0 {
        1.0
    } else {
        base.powi(exp as i32)
    }
}

/// i^n for the reflection phase.
fn i_power(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}
