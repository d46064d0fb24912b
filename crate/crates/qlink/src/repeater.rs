//! Slot-stepped simulation of an entanglement repeater chain: per-link
//! distribution attempts, quantum memories with exponential retrieval decay
//! and multimode capacity, entanglement swapping, and the serial /
//! parallel-without-memory / parallel-with-memory strategy comparison.
//!
//! Time is discretized into slots (default duration: one link length at the
//! fiber group velocity, which also covers the link-level heralding
//! exchange). Swap results can optionally wait for classical signaling
//! across the swapped span. Serial and all-links-at-once strategies have
//! exactly geometric waiting times, so their trials are sampled by direct
//! geometric draws; the memory-assisted strategy runs a literal slot loop.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT_KM_PER_S: f64 = 299_792.458;

/// Group index of standard single-mode fiber; photons propagate at c/n.
pub const FIBER_GROUP_INDEX: f64 = 1.468;

pub const DEFAULT_MAX_SLOTS: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum RepeaterError {
    #[error("{field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error(
        "photon bandwidth {photon_hz} Hz exceeds memory bandwidth {memory_hz} Hz; \
         the memory cannot store these photons"
    )]
    BandwidthExceeded { photon_hz: f64, memory_hz: f64 },
    #[error(
        "num_links = {0} is not a power of two; the nested-doubling swap schedule needs one \
         (set allow_left_associative for the non-canonical left-associative schedule)"
    )]
    NonDoublingChain(u32),
    #[error("link success probability {0} must lie in (0, 1]")]
    InvalidLinkProbability(f64),
    #[error("trials must be at least 1")]
    NoTrials,
}

/// Propagation medium used to convert a memory time into a reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Medium {
    Vacuum,
    Fiber,
}

/// Distance covered at the speed of light during one memory time.
pub fn memory_distance_km(storage_time_s: f64, medium: Medium) -> f64 {
    assert!(storage_time_s > 0.0, "storage time must be positive");
    let speed = match medium {
        Medium::Vacuum => SPEED_OF_LIGHT_KM_PER_S,
        Medium::Fiber => SPEED_OF_LIGHT_KM_PER_S / FIBER_GROUP_INDEX,
    };
    storage_time_s * speed
}

/// Quantum-memory figure set: write/read efficiency, exponential decay
/// constant, multimode capacity, acceptance bandwidth and recall fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySpec {
    pub efficiency: f64,
    /// Exponential-decay constant of the retrieval efficiency, in seconds.
    /// `f64::INFINITY` disables decay.
    pub storage_time_s: f64,
    pub multimode_capacity: u32,
    pub bandwidth_hz: f64,
    pub fidelity: f64,
}

impl MemorySpec {
    pub fn ideal() -> Self {
        MemorySpec {
            efficiency: 1.0,
            storage_time_s: f64::INFINITY,
            multimode_capacity: 1,
            bandwidth_hz: 1e9,
            fidelity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), RepeaterError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(RepeaterError::InvalidConfig {
                field: "memory.efficiency",
                message: format!("{} must lie in [0, 1]", self.efficiency),
            });
        }
        if !(self.storage_time_s > 0.0) {
            return Err(RepeaterError::InvalidConfig {
                field: "memory.storage_time_s",
                message: format!("{} must be positive (infinity allowed)", self.storage_time_s),
            });
        }
        if self.multimode_capacity < 1 {
            return Err(RepeaterError::InvalidConfig {
                field: "memory.multimode_capacity",
                message: "must be at least 1".into(),
            });
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(RepeaterError::InvalidConfig {
                field: "memory.bandwidth_hz",
                message: format!("{} must be positive", self.bandwidth_hz),
            });
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(RepeaterError::InvalidConfig {
                field: "memory.fidelity",
                message: format!("{} must lie in [0, 1]", self.fidelity),
            });
        }
        Ok(())
    }
}

/// Probability that a photon stored `hold_time_s` ago is still retrieved:
/// `η₀ · exp(−hold/τ)`.
pub fn memory_retrieval_efficiency(memory: &MemorySpec, hold_time_s: f64) -> f64 {
    assert!(hold_time_s >= 0.0, "hold time must be non-negative");
    memory.efficiency * (-hold_time_s / memory.storage_time_s).exp()
}

/// How raw entanglement is distributed over one elementary link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkScheme {
    /// A pair source at the link midpoint sends one photon to each end;
    /// both halves must arrive, be detected and be stored.
    MidpointSource,
    /// One end sends a photon across the whole link to the other.
    EndToEnd,
}

/// Chain geometry and per-link physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeaterConfig {
    pub total_distance_km: f64,
    pub num_links: u32,
    pub attenuation_db_per_km: f64,
    pub link_scheme: LinkScheme,
    pub detector_efficiency: f64,
    /// Photon (pair) emission probability per attempt.
    pub source_success: f64,
    pub swap_success: f64,
    /// Defaults to one link length at the fiber group velocity.
    pub slot_duration_s: Option<f64>,
    /// When set, swap results wait for classical signaling across the
    /// swapped span (one slot per link of span width).
    pub classical_comm: bool,
    pub memory: MemorySpec,
    pub photon_bandwidth_hz: f64,
    /// Bypass the physical link model with an explicit per-mode success
    /// probability.
    pub link_success_override: Option<f64>,
    pub max_slots: u64,
    /// Permit chains whose length is not a power of two, swapped on a
    /// left-associative (non-canonical) schedule.
    pub allow_left_associative: bool,
}

impl Default for RepeaterConfig {
    fn default() -> Self {
        RepeaterConfig {
            total_distance_km: 100.0,
            num_links: 2,
            attenuation_db_per_km: 0.2,
            link_scheme: LinkScheme::MidpointSource,
            detector_efficiency: 1.0,
            source_success: 1.0,
            swap_success: 1.0,
            slot_duration_s: None,
            classical_comm: false,
            memory: MemorySpec::ideal(),
            photon_bandwidth_hz: 1e7,
            link_success_override: None,
            max_slots: DEFAULT_MAX_SLOTS,
            allow_left_associative: false,
        }
    }
}

impl RepeaterConfig {
    pub fn validate(&self) -> Result<(), RepeaterError> {
        if !(self.total_distance_km > 0.0) {
            return Err(RepeaterError::InvalidConfig {
                field: "total_distance_km",
                message: format!("{} must be positive", self.total_distance_km),
            });
        }
        if self.num_links < 1 {
            return Err(RepeaterError::InvalidConfig {
                field: "num_links",
                message: "must be at least 1".into(),
            });
        }
        if self.attenuation_db_per_km < 0.0 || !self.attenuation_db_per_km.is_finite() {
            return Err(RepeaterError::InvalidConfig {
                field: "attenuation_db_per_km",
                message: format!("{} must be non-negative", self.attenuation_db_per_km),
            });
        }
        for (field, value) in [
            ("detector_efficiency", self.detector_efficiency),
            ("source_success", self.source_success),
            ("swap_success", self.swap_success),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(RepeaterError::InvalidConfig {
                    field,
                    message: format!("{value} must lie in (0, 1]"),
                });
            }
        }
        if let Some(slot) = self.slot_duration_s {
            if !(slot > 0.0) {
                return Err(RepeaterError::InvalidConfig {
                    field: "slot_duration_s",
                    message: format!("{slot} must be positive"),
                });
            }
        }
        self.memory.validate()?;
        if !(self.photon_bandwidth_hz > 0.0) {
            return Err(RepeaterError::InvalidConfig {
                field: "photon_bandwidth_hz",
                message: format!("{} must be positive", self.photon_bandwidth_hz),
            });
        }
        if self.photon_bandwidth_hz > self.memory.bandwidth_hz {
            return Err(RepeaterError::BandwidthExceeded {
                photon_hz: self.photon_bandwidth_hz,
                memory_hz: self.memory.bandwidth_hz,
            });
        }
        if let Some(p) = self.link_success_override {
            if !(p > 0.0 && p <= 1.0) {
                return Err(RepeaterError::InvalidLinkProbability(p));
            }
        }
        if self.max_slots < 1 {
            return Err(RepeaterError::InvalidConfig {
                field: "max_slots",
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn link_length_km(&self) -> f64 {
        self.total_distance_km / self.num_links as f64
    }

    pub fn resolved_slot_duration_s(&self) -> f64 {
        self.slot_duration_s.unwrap_or_else(|| {
            self.link_length_km() / (SPEED_OF_LIGHT_KM_PER_S / FIBER_GROUP_INDEX)
        })
    }
}

/// Per-attempt, per-mode success probability of one elementary link.
///
/// Midpoint source: `source × T(L₀/2)² × η_det² × η_mem²` (two photons, each
/// crossing half the link, each detected and stored). End-to-end:
/// `source × T(L₀) × η_det × η_mem` (one photon across the whole link, one
/// detection, one storage). Both scale as `10^(−α·L₀/10)`.
pub fn link_success_prob(config: &RepeaterConfig) -> f64 {
    if let Some(p) = config.link_success_override {
        return p;
    }
    let l0 = config.link_length_km();
    let alpha = config.attenuation_db_per_km;
    match config.link_scheme {
        LinkScheme::EndToEnd => {
            config.source_success
                * 10f64.powf(-alpha * l0 / 10.0)
                * config.detector_efficiency
                * config.memory.efficiency
        }
        LinkScheme::MidpointSource => {
            let half = 10f64.powf(-alpha * (l0 / 2.0) / 10.0);
            config.source_success
                * half
                * half
                * config.detector_efficiency
                * config.detector_efficiency
                * config.memory.efficiency
                * config.memory.efficiency
        }
    }
}

/// Chain operating strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Establish and swap links strictly left to right; a swap failure
    /// destroys the accumulated span and restarts the chain.
    Serial,
    /// All links must succeed within the same slot.
    ParallelNoMemory,
    /// Every empty link attempts each slot; successes wait in memory until
    /// their swap partner arrives.
    ParallelWithMemory,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Serial => "serial",
            Strategy::ParallelNoMemory => "parallel-nomem",
            Strategy::ParallelWithMemory => "parallel-memory",
        };
        write!(f, "{s}")
    }
}

/// Swap order used by the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapSchedule {
    NestedDoubling,
    LeftAssociative,
}

/// Moments and quantiles of the delivery-time distribution, in slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryStats {
    pub mean: f64,
    pub variance: f64,
    pub min: u64,
    pub max: u64,
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
}

/// Outcome of a simulation batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub strategy: Strategy,
    pub trials: u64,
    pub seed: u64,
    pub delivered: u64,
    pub delivered_fraction: f64,
    /// Delivery-time statistics over delivered trials; None when nothing
    /// was delivered within the slot budget.
    pub slots: Option<DeliveryStats>,
    /// 1 / (mean delivery time × slot duration).
    pub end_to_end_rate_hz: Option<f64>,
    /// Mean retrieval efficiency over all memory reads performed (swap
    /// inputs and final end-pair reads); None when memories were never read.
    pub mean_retrieval_efficiency: Option<f64>,
    /// Recall-fidelity product along the delivered pair: one factor per
    /// memory passage, 2·num_links in total (1 for the memoryless strategy).
    pub fidelity_product: f64,
    /// Ten times the mean worst hold time over delivered trials, divided by
    /// the storage time: the conventional safety margin on τ.
    pub memory_margin: Option<f64>,
    pub link_success_prob: f64,
    pub effective_link_prob: f64,
    pub slot_duration_s: f64,
    pub schedule: Option<SwapSchedule>,
}

#[derive(Default)]
struct TrialAccumulator {
    delivered_slots: Vec<u64>,
    attempts: u64,
    retrieval_sum: f64,
    retrieval_count: u64,
    max_hold_sum_slots: f64,
}

struct TrialOutcome {
    delivered: Option<u64>,
    attempts: u64,
    retrieval_sum: f64,
    retrieval_count: u64,
    max_hold_slots: u64,
}

/// Run `trials` independent chain deliveries and collect statistics.
/// Deterministic for a given config, strategy, trial count and seed.
pub fn simulate_chain(
    config: &RepeaterConfig,
    strategy: Strategy,
    trials: u64,
    seed: u64,
) -> Result<SimResult, RepeaterError> {
    config.validate()?;
    if trials == 0 {
        return Err(RepeaterError::NoTrials);
    }
    let p = link_success_prob(config);
    if !(p > 0.0 && p <= 1.0) {
        return Err(RepeaterError::InvalidLinkProbability(p));
    }
    let n = config.num_links;
    let capacity = config.memory.multimode_capacity;
    let p_eff = 1.0 - (1.0 - p).powi(capacity as i32);
    let slot_duration = config.resolved_slot_duration_s();

    let schedule = match strategy {
        Strategy::ParallelNoMemory => None,
        Strategy::Serial => Some(SwapSchedule::LeftAssociative),
        Strategy::ParallelWithMemory => {
            if n.is_power_of_two() {
                Some(SwapSchedule::NestedDoubling)
            } else if config.allow_left_associative {
                Some(SwapSchedule::LeftAssociative)
            } else {
                return Err(RepeaterError::NonDoublingChain(n));
            }
        }
    };

    let tree = match strategy {
        Strategy::ParallelWithMemory => Some(MergeTree::build(
            n,
            schedule == Some(SwapSchedule::NestedDoubling),
        )),
        _ => None,
    };

    let mut rng = StdRng::seed_from_u64(seed);
    let mut acc = TrialAccumulator::default();
    for _ in 0..trials {
        let outcome = match strategy {
            Strategy::ParallelNoMemory => run_no_memory_trial(config, p_eff, &mut rng),
            Strategy::Serial => run_serial_trial(config, p_eff, slot_duration, &mut rng),
            Strategy::ParallelWithMemory => run_memory_trial(
                config,
                tree.as_ref().expect("tree built"),
                p,
                slot_duration,
                &mut rng,
            ),
        };
        acc.attempts += outcome.attempts;
        acc.retrieval_sum += outcome.retrieval_sum;
        acc.retrieval_count += outcome.retrieval_count;
        if let Some(slot) = outcome.delivered {
            acc.delivered_slots.push(slot);
            acc.max_hold_sum_slots += outcome.max_hold_slots as f64;
        }
    }

    let delivered = acc.delivered_slots.len() as u64;
    let slots_stats = delivery_stats(&mut acc.delivered_slots);
    let rate = slots_stats.as_ref().map(|s| 1.0 / (s.mean * slot_duration));
    let mean_retrieval = if acc.retrieval_count > 0 {
        Some(acc.retrieval_sum / acc.retrieval_count as f64)
    } else {
        None
    };
    let memory_margin = if delivered > 0 && strategy != Strategy::ParallelNoMemory {
        let mean_max_hold_s = acc.max_hold_sum_slots / delivered as f64 * slot_duration;
        Some(10.0 * mean_max_hold_s / config.memory.storage_time_s)
    } else {
        None
    };
    let fidelity_product = match strategy {
        Strategy::ParallelNoMemory => 1.0,
        _ => config.memory.fidelity.powi(2 * n as i32),
    };

    Ok(SimResult {
        strategy,
        trials,
        seed,
        delivered,
        delivered_fraction: delivered as f64 / trials as f64,
        slots: slots_stats,
        end_to_end_rate_hz: rate,
        mean_retrieval_efficiency: mean_retrieval,
        fidelity_product,
        memory_margin,
        link_success_prob: p,
        effective_link_prob: p_eff,
        slot_duration_s: slot_duration,
        schedule,
    })
}

fn delivery_stats(slots: &mut Vec<u64>) -> Option<DeliveryStats> {
    if slots.is_empty() {
        return None;
    }
    slots.sort_unstable();
    let count = slots.len() as f64;
    let mean = slots.iter().map(|&s| s as f64).sum::<f64>() / count;
    let variance = slots.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / count;
    let quantile = |q: f64| {
        let rank = ((q * count).ceil() as usize).clamp(1, slots.len());
        slots[rank - 1]
    };
    Some(DeliveryStats {
        mean,
        variance,
        min: slots[0],
        max: *slots.last().unwrap(),
        p50: quantile(0.5),
        p90: quantile(0.9),
        p99: quantile(0.99),
    })
}

/// First slot of a success with per-slot probability `p`, sampled by
/// inversion (exactly the distribution of a per-slot Bernoulli scan).
fn geometric_slots(rng: &mut StdRng, p: f64) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.gen();
    let k = ((1.0 - u).ln() / (1.0 - p).ln()).floor() + 1.0;
    if k >= 9.0e18 {
        u64::MAX
    } else {
        k as u64
    }
}

/// All links (and all swaps) must succeed within one slot: the delivery
/// time is geometric with probability p_eff^n · p_swap^(n−1).
fn run_no_memory_trial(config: &RepeaterConfig, p_eff: f64, rng: &mut StdRng) -> TrialOutcome {
    let n = config.num_links;
    let p_all = p_eff.powi(n as i32) * config.swap_success.powi(n as i32 - 1);
    let wait = geometric_slots(rng, p_all);
    let confirm = if config.classical_comm { n as u64 } else { 0 };
    let slot = wait.saturating_add(confirm);
    let delivered = (slot <= config.max_slots).then_some(slot);
    TrialOutcome {
        delivered,
        attempts: wait
            .saturating_mul(n as u64)
            .saturating_mul(config.memory.multimode_capacity as u64),
        retrieval_sum: 0.0,
        retrieval_count: 0,
        max_hold_slots: 0,
    }
}

/// Left-to-right growth: wait for the next link, swap it onto the
/// accumulated span, restart from scratch when a swap fails.
fn run_serial_trial(
    config: &RepeaterConfig,
    p_eff: f64,
    slot_duration: f64,
    rng: &mut StdRng,
) -> TrialOutcome {
    let n = config.num_links as u64;
    let mut attempts = 0u64;
    let mut retrieval_sum = 0.0;
    let mut retrieval_count = 0u64;
    let mut max_hold = 0u64;
    let mut slot = 0u64;

    'restart: loop {
        let wait = geometric_slots(rng, p_eff);
        attempts += wait.min(config.max_slots);
        slot = slot.saturating_add(wait);
        if slot > config.max_slots {
            return TrialOutcome {
                delivered: None,
                attempts,
                retrieval_sum,
                retrieval_count,
                max_hold_slots: max_hold,
            };
        }
        let span_left_since = slot;
        let mut span_right_since = slot;

        for merged_width in 2..=n {
            let wait = geometric_slots(rng, p_eff);
            attempts += wait.min(config.max_slots);
            let link_ready = slot.saturating_add(wait);
            if link_ready > config.max_slots {
                return TrialOutcome {
                    delivered: None,
                    attempts,
                    retrieval_sum,
                    retrieval_count,
                    max_hold_slots: max_hold,
                };
            }
            // Swap consumes the span's right end (held since its link was
            // created) and the fresh link's near end.
            let hold = link_ready - span_right_since;
            max_hold = max_hold.max(hold);
            let eta_held =
                memory_retrieval_efficiency(&config.memory, hold as f64 * slot_duration);
            let eta_fresh = memory_retrieval_efficiency(&config.memory, 0.0);
            retrieval_sum += eta_held + eta_fresh;
            retrieval_count += 2;

            let success = rng.gen::<f64>() < config.swap_success * eta_held * eta_fresh;
            let confirm = if config.classical_comm { merged_width } else { 0 };
            slot = link_ready.saturating_add(confirm);
            if slot > config.max_slots {
                return TrialOutcome {
                    delivered: None,
                    attempts,
                    retrieval_sum,
                    retrieval_count,
                    max_hold_slots: max_hold,
                };
            }
            if !success {
                continue 'restart;
            }
            span_right_since = link_ready;
        }

        // Delivered: the end memories are finally read out.
        let eta_left = memory_retrieval_efficiency(
            &config.memory,
            (slot - span_left_since) as f64 * slot_duration,
        );
        let eta_right = memory_retrieval_efficiency(
            &config.memory,
            (slot - span_right_since) as f64 * slot_duration,
        );
        retrieval_sum += eta_left + eta_right;
        retrieval_count += 2;
        max_hold = max_hold.max(slot - span_left_since);
        return TrialOutcome {
            delivered: Some(slot.max(1)),
            attempts,
            retrieval_sum,
            retrieval_count,
            max_hold_slots: max_hold,
        };
    }
}

/// Binary merge plan over the chain: balanced for the nested-doubling
/// schedule, a left comb otherwise. Leaves are elementary links.
struct MergeTree {
    children: Vec<Option<(usize, usize)>>,
    parent: Vec<Option<usize>>,
    width: Vec<u32>,
    root: usize,
}

impl MergeTree {
    fn build(num_links: u32, balanced: bool) -> Self {
        let mut tree = MergeTree {
            children: Vec::new(),
            parent: Vec::new(),
            width: Vec::new(),
            root: 0,
        };
        tree.root = tree.build_range(0, num_links, balanced);
        tree
    }

    fn build_range(&mut self, lo: u32, hi: u32, balanced: bool) -> usize {
        if hi - lo == 1 {
            self.children.push(None);
            self.parent.push(None);
            self.width.push(1);
            return self.children.len() - 1;
        }
        let mid = if balanced { lo + (hi - lo) / 2 } else { hi - 1 };
        let left = self.build_range(lo, mid, balanced);
        let right = self.build_range(mid, hi, balanced);
        self.children.push(Some((left, right)));
        self.parent.push(None);
        self.width.push(hi - lo);
        let idx = self.children.len() - 1;
        self.parent[left] = Some(idx);
        self.parent[right] = Some(idx);
        idx
    }

    fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.children.len()).filter(|&i| self.children[i].is_none())
    }

    fn descendants_into(&self, node: usize, out: &mut Vec<usize>) {
        out.push(node);
        if let Some((a, b)) = self.children[node] {
            self.descendants_into(a, out);
            self.descendants_into(b, out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeStatus {
    Empty,
    Ready { left_since: u64, right_since: u64 },
    Consumed,
}

struct PendingSwap {
    node: usize,
    resolve_slot: u64,
    success: bool,
    left_since: u64,
    right_since: u64,
}

/// Literal slot loop: every empty link attempts each slot (one try per
/// memory mode, first success kept), ready sibling spans swap per the merge
/// plan, swap results optionally wait for classical confirmation, and
/// memories decay while they hold.
fn run_memory_trial(
    config: &RepeaterConfig,
    tree: &MergeTree,
    p: f64,
    slot_duration: f64,
    rng: &mut StdRng,
) -> TrialOutcome {
    let capacity = config.memory.multimode_capacity;
    let mut status = vec![NodeStatus::Empty; tree.children.len()];
    let mut pending: Vec<PendingSwap> = Vec::new();
    let mut attempts = 0u64;
    let mut retrieval_sum = 0.0;
    let mut retrieval_count = 0u64;
    let mut max_hold = 0u64;
    let mut scratch = Vec::new();

    for slot in 1..=config.max_slots {
        let mut ready_queue: Vec<usize> = Vec::new();

        // Fresh photons on every empty link.
        for leaf in tree.leaves() {
            if status[leaf] != NodeStatus::Empty {
                continue;
            }
            let mut success = false;
            for _ in 0..capacity {
                attempts += 1;
                if rng.gen::<f64>() < p {
                    success = true;
                    break;
                }
            }
            if success {
                status[leaf] = NodeStatus::Ready { left_since: slot, right_since: slot };
                ready_queue.push(leaf);
            }
        }

        // Swaps fire wherever both sibling spans are ready.
        while let Some(node) = ready_queue.pop() {
            if matches!(status[tree.root], NodeStatus::Ready { .. }) {
                break;
            }
            let Some(parent) = tree.parent[node] else { continue };
            let (left, right) = tree.children[parent].expect("parent is internal");
            let (NodeStatus::Ready { left_since: ll, right_since: lr },
                 NodeStatus::Ready { left_since: rl, right_since: rr }) =
                (status[left], status[right])
            else {
                continue;
            };

            // The two memories at the swapping node are read out.
            let hold_left = slot - lr;
            let hold_right = slot - rl;
            max_hold = max_hold.max(hold_left).max(hold_right);
            let eta_left =
                memory_retrieval_efficiency(&config.memory, hold_left as f64 * slot_duration);
            let eta_right =
                memory_retrieval_efficiency(&config.memory, hold_right as f64 * slot_duration);
            retrieval_sum += eta_left + eta_right;
            retrieval_count += 2;

            let success = rng.gen::<f64>() < config.swap_success * eta_left * eta_right;
            status[left] = NodeStatus::Consumed;
            status[right] = NodeStatus::Consumed;
            if config.classical_comm {
                pending.push(PendingSwap {
                    node: parent,
                    resolve_slot: slot + tree.width[parent] as u64,
                    success,
                    left_since: ll,
                    right_since: rr,
                });
            } else if success {
                status[parent] = NodeStatus::Ready { left_since: ll, right_since: rr };
                ready_queue.push(parent);
            } else {
                reset_subtree(tree, &mut status, parent, &mut scratch);
            }
        }

        // Swap confirmations arriving this slot.
        let mut idx = 0;
        while idx < pending.len() {
            if pending[idx].resolve_slot != slot {
                idx += 1;
                continue;
            }
            let swap = pending.swap_remove(idx);
            if swap.success {
                status[swap.node] = NodeStatus::Ready {
                    left_since: swap.left_since,
                    right_since: swap.right_since,
                };
                // A confirmed span may immediately swap with its sibling.
                let mut queue = vec![swap.node];
                while let Some(node) = queue.pop() {
                    let Some(parent) = tree.parent[node] else { continue };
                    let (left, right) = tree.children[parent].expect("parent is internal");
                    let (NodeStatus::Ready { left_since: ll, right_since: lr },
                         NodeStatus::Ready { left_since: rl, right_since: rr }) =
                        (status[left], status[right])
                    else {
                        continue;
                    };
                    let hold_left = slot - lr;
                    let hold_right = slot - rl;
                    max_hold = max_hold.max(hold_left).max(hold_right);
                    let eta_left = memory_retrieval_efficiency(
                        &config.memory,
                        hold_left as f64 * slot_duration,
                    );
                    let eta_right = memory_retrieval_efficiency(
                        &config.memory,
                        hold_right as f64 * slot_duration,
                    );
                    retrieval_sum += eta_left + eta_right;
                    retrieval_count += 2;
                    let success =
                        rng.gen::<f64>() < config.swap_success * eta_left * eta_right;
                    status[left] = NodeStatus::Consumed;
                    status[right] = NodeStatus::Consumed;
                    pending.push(PendingSwap {
                        node: parent,
                        resolve_slot: slot + tree.width[parent] as u64,
                        success,
                        left_since: ll,
                        right_since: rr,
                    });
                    let _ = queue.len();
                }
            } else {
                reset_subtree(tree, &mut status, swap.node, &mut scratch);
            }
        }

        if let NodeStatus::Ready { left_since, right_since } = status[tree.root] {
            let hold_left = slot - left_since;
            let hold_right = slot - right_since;
            max_hold = max_hold.max(hold_left).max(hold_right);
            retrieval_sum += memory_retrieval_efficiency(
                &config.memory,
                hold_left as f64 * slot_duration,
            );
            retrieval_sum += memory_retrieval_efficiency(
                &config.memory,
                hold_right as f64 * slot_duration,
            );
            retrieval_count += 2;
            return TrialOutcome {
                delivered: Some(slot),
                attempts,
                retrieval_sum,
                retrieval_count,
                max_hold_slots: max_hold,
            };
        }
    }

    TrialOutcome {
        delivered: None,
        attempts,
        retrieval_sum,
        retrieval_count,
        max_hold_slots: max_hold,
    }
}

fn reset_subtree(
    tree: &MergeTree,
    status: &mut [NodeStatus],
    node: usize,
    scratch: &mut Vec<usize>,
) {
    scratch.clear();
    tree.descendants_into(node, scratch);
    for &n in scratch.iter() {
        status[n] = NodeStatus::Empty;
    }
}

/// Closed-form / series mean delivery time in slots, for the ideal chain
/// (perfect swaps, no decay, no signaling delay).
///
/// Serial: n/p_eff. All-at-once: (1/p_eff)^n. Memory-assisted: mean of the
/// maximum of n geometric waits, Σ_{k≥0} (1 − (1 − q^k)^n) with q = 1−p_eff,
/// truncated at relative tail 1e-12.
pub fn expected_time_analytic(num_links: u32, p: f64, capacity: u32, strategy: Strategy) -> f64 {
    assert!(num_links >= 1, "need at least one link");
    assert!(p > 0.0 && p <= 1.0, "p must lie in (0, 1]");
    assert!(capacity >= 1, "capacity must be at least 1");
    let p_eff = 1.0 - (1.0 - p).powi(capacity as i32);
    let n = num_links;
    match strategy {
        Strategy::Serial => n as f64 / p_eff,
        Strategy::ParallelNoMemory => (1.0 / p_eff).powi(n as i32),
        Strategy::ParallelWithMemory => {
            let q = 1.0 - p_eff;
            let mut sum = 0.0;
            let mut qk = 1.0_f64;
            loop {
                let term = 1.0 - (1.0 - qk).powi(n as i32);
                sum += term;
                if term < 1e-12 * sum || term < 1e-300 {
                    break;
                }
                qk *= q;
            }
            sum
        }
    }
}
