//! Fiber link-budget arithmetic for direct quantum communication:
//! transmission, detection rates, maximum-distance inversion, dB improvement
//! ledgers and the device-independent detection-efficiency gate.
//!
//! All arithmetic is signal-only; dark counts are carried in
//! [`ReceiverSpec`] and reported separately as a signal-to-dark ratio so the
//! headline numbers stay pure loss arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("{field}: {message}")]
    InvalidParameter { field: &'static str, message: String },
    #[error("minimum rate {min_rate} exceeds the zero-length rate {zero_length_rate}")]
    RateUnreachable { min_rate: f64, zero_length_rate: f64 },
}

fn expect_positive(field: &'static str, value: f64) -> Result<(), BudgetError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(BudgetError::InvalidParameter {
            field,
            message: format!("{value} must be positive and finite"),
        });
    }
    Ok(())
}

/// Fiber span: attenuation in dB/km and length in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub attenuation_db_per_km: f64,
    pub length_km: f64,
}

impl ChannelSpec {
    pub fn new(attenuation_db_per_km: f64, length_km: f64) -> Result<Self, BudgetError> {
        let spec = ChannelSpec { attenuation_db_per_km, length_km };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        expect_positive("channel.attenuation_db_per_km", self.attenuation_db_per_km)?;
        if self.length_km < 0.0 || !self.length_km.is_finite() {
            return Err(BudgetError::InvalidParameter {
                field: "channel.length_km",
                message: format!("{} must be non-negative and finite", self.length_km),
            });
        }
        Ok(())
    }
}

/// Pulsed photon source: clock rate and mean photon number per pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub clock_rate_hz: f64,
    pub mean_photon: f64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), BudgetError> {
        expect_positive("source.clock_rate_hz", self.clock_rate_hz)?;
        if !(self.mean_photon > 0.0 && self.mean_photon <= 1.0) {
            return Err(BudgetError::InvalidParameter {
                field: "source.mean_photon",
                message: format!("{} must lie in (0, 1]", self.mean_photon),
            });
        }
        Ok(())
    }
}

/// Receiving detector: efficiency and dark-count rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub detector_efficiency: f64,
    pub dark_count_rate_hz: f64,
}

impl ReceiverSpec {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(BudgetError::InvalidParameter {
                field: "receiver.detector_efficiency",
                message: format!("{} must lie in (0, 1]", self.detector_efficiency),
            });
        }
        if self.dark_count_rate_hz < 0.0 || !self.dark_count_rate_hz.is_finite() {
            return Err(BudgetError::InvalidParameter {
                field: "receiver.dark_count_rate_hz",
                message: format!("{} must be non-negative", self.dark_count_rate_hz),
            });
        }
        Ok(())
    }
}

/// Photon survival probability over the span: `10^(−attenuation·length/10)`.
/// Multiplicative over concatenated segments.
pub fn transmission(channel: &ChannelSpec) -> f64 {
    10f64.powf(-channel.attenuation_db_per_km * channel.length_km / 10.0)
}

/// Signal detection rate: clock × mean photon × transmission × efficiency.
pub fn detection_rate(source: &SourceSpec, channel: &ChannelSpec, receiver: &ReceiverSpec) -> f64 {
    source.clock_rate_hz * source.mean_photon * transmission(channel) * receiver.detector_efficiency
}

/// Signal rate divided by the dark-count rate; None when dark counts are
/// zero.
pub fn signal_to_dark_ratio(
    source: &SourceSpec,
    channel: &ChannelSpec,
    receiver: &ReceiverSpec,
) -> Option<f64> {
    if receiver.dark_count_rate_hz <= 0.0 {
        None
    } else {
        Some(detection_rate(source, channel, receiver) / receiver.dark_count_rate_hz)
    }
}

/// Longest span at which the detection rate still reaches `min_rate`:
/// `L = (10/attenuation) · log10(clock·μ·η / min_rate)`.
pub fn max_distance(
    source: &SourceSpec,
    attenuation_db_per_km: f64,
    receiver: &ReceiverSpec,
    min_rate_hz: f64,
) -> Result<f64, BudgetError> {
    source.validate()?;
    receiver.validate()?;
    expect_positive("attenuation_db_per_km", attenuation_db_per_km)?;
    expect_positive("min_rate_hz", min_rate_hz)?;
    let zero_length_rate =
        source.clock_rate_hz * source.mean_photon * receiver.detector_efficiency;
    if min_rate_hz > zero_length_rate {
        return Err(BudgetError::RateUnreachable { min_rate: min_rate_hz, zero_length_rate });
    }
    Ok(10.0 / attenuation_db_per_km * (zero_length_rate / min_rate_hz).log10())
}

/// Ratio of two positive quantities in dB: `10·log10(after/before)`.
pub fn db_gain(before: f64, after: f64) -> f64 {
    assert!(before > 0.0 && after > 0.0, "db_gain needs positive values");
    10.0 * (after / before).log10()
}

/// Itemized list of dB improvements over a baseline system.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImprovementLedger {
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub gain_db: f64,
}

impl ImprovementLedger {
    pub fn new(entries: Vec<(&str, f64)>) -> Self {
        ImprovementLedger {
            entries: entries
                .into_iter()
                .map(|(label, gain_db)| LedgerEntry { label: label.to_string(), gain_db })
                .collect(),
        }
    }

    pub fn total_db(&self) -> f64 {
        self.entries.iter().map(|e| e.gain_db).sum()
    }

    /// Extra reach bought by the ledger: total dB divided by the fiber
    /// attenuation.
    pub fn extension_km(&self, attenuation_db_per_km: f64) -> f64 {
        assert!(attenuation_db_per_km > 0.0, "attenuation must be positive");
        self.total_db() / attenuation_db_per_km
    }
}

/// Total-gain-to-extension helper mirroring [`ImprovementLedger::extension_km`].
pub fn ledger_extension(ledger: &ImprovementLedger, attenuation_db_per_km: f64) -> f64 {
    ledger.extension_km(attenuation_db_per_km)
}

/// The plausible band for the device-independent detection threshold.
pub const DIQIP_BAND: (f64, f64) = (0.7, 0.9);

/// Verdict of the device-independent feasibility gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiqipAssessment {
    pub feasible: bool,
    /// efficiency − threshold.
    pub margin: f64,
    pub threshold: f64,
    /// Set when the supplied threshold lies outside the documented
    /// plausible band [0.7, 0.9].
    pub outside_plausible_band: bool,
}

/// Gate on the end-to-end heralded detection efficiency required for
/// device-independent protocols. Thresholds outside [0.7, 0.9] are accepted
/// but flagged.
pub fn diqip_feasible(end_to_end_heralded_efficiency: f64, threshold: f64) -> DiqipAssessment {
    let outside = !(DIQIP_BAND.0..=DIQIP_BAND.1).contains(&threshold);
    DiqipAssessment {
        feasible: end_to_end_heralded_efficiency >= threshold,
        margin: end_to_end_heralded_efficiency - threshold,
        threshold,
        outside_plausible_band: outside,
    }
}

/// Heralded rate behind an amplifier: detection rate times the accepted
/// herald fraction (1/2 for an ideal amplifier — one success every two
/// photons).
pub fn amplified_link_rate(detection_rate_hz: f64, accepted_herald_fraction: f64) -> f64 {
    assert!(
        accepted_herald_fraction > 0.0 && accepted_herald_fraction <= 1.0,
        "herald fraction must lie in (0, 1]"
    );
    detection_rate_hz * accepted_herald_fraction
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(att: f64, len: f64) -> ChannelSpec {
        ChannelSpec::new(att, len).unwrap()
    }

    #[test]
    fn transmission_reference_points() {
        // 500 km of 0.15 dB/km fiber: 75 dB, i.e. 10^-7.5.
        let t = transmission(&channel(0.15, 500.0));
        assert!((t / 10f64.powf(-7.5) - 1.0).abs() < 1e-12);

        assert_eq!(transmission(&channel(0.2, 0.0)), 1.0);

        // A 50 km span at 0.2 dB/km keeps 10% of the photons.
        let t = transmission(&channel(0.2, 50.0));
        assert!((t - 0.10).abs() < 1e-12);
    }

    #[test]
    fn transmission_is_multiplicative_and_monotone() {
        for (l1, l2) in [(10.0, 90.0), (250.0, 250.0), (1.0, 499.0)] {
            let prod = transmission(&channel(0.17, l1)) * transmission(&channel(0.17, l2));
            let whole = transmission(&channel(0.17, l1 + l2));
            assert!((prod - whole).abs() < 1e-12);
        }
        assert!(transmission(&channel(0.15, 100.0)) > transmission(&channel(0.15, 101.0)));
        assert!(transmission(&channel(0.15, 100.0)) > transmission(&channel(0.16, 100.0)));
    }

    #[test]
    fn detection_rate_reference_points() {
        let source = SourceSpec { clock_rate_hz: 1e10, mean_photon: 1.0 };
        let receiver = ReceiverSpec { detector_efficiency: 1.0, dark_count_rate_hz: 0.0 };
        let rate = detection_rate(&source, &channel(0.15, 500.0), &receiver);
        assert!((rate / 10f64.powf(2.5) - 1.0).abs() < 1e-9);

        let half = SourceSpec { mean_photon: 0.5, ..source };
        assert!((detection_rate(&half, &channel(0.15, 500.0), &receiver) / rate - 0.5).abs() < 1e-12);

        let local = detection_rate(
            &SourceSpec { clock_rate_hz: 1e9, mean_photon: 1.0 },
            &channel(0.15, 0.0),
            &receiver,
        );
        assert_eq!(local, 1e9);
    }

    #[test]
    fn max_distance_inverts_detection_rate() {
        let source = SourceSpec { clock_rate_hz: 1e10, mean_photon: 1.0 };
        let receiver = ReceiverSpec { detector_efficiency: 1.0, dark_count_rate_hz: 0.0 };
        let length = max_distance(&source, 0.15, &receiver, 10f64.powf(2.5)).unwrap();
        assert!((length - 500.0).abs() < 1e-9);

        // Round trip within 1e-9 relative.
        let rate = detection_rate(&source, &channel(0.15, length), &receiver);
        assert!((rate / 10f64.powf(2.5) - 1.0).abs() < 1e-9);

        // Bisection oracle on the monotone rate curve agrees with the
        // closed form.
        let target = 31.6;
        let fast = SourceSpec { clock_rate_hz: 1e11, mean_photon: 1.0 };
        let closed = max_distance(&fast, 0.15, &receiver, target).unwrap();
        let (mut lo, mut hi) = (0.0, 2000.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if detection_rate(&fast, &channel(0.15, mid), &receiver) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((closed - 0.5 * (lo + hi)).abs() < 1e-6);
        assert!((closed - 633.0).abs() < 1.0);
    }

    #[test]
    fn max_distance_edge_cases() {
        let source = SourceSpec { clock_rate_hz: 1e9, mean_photon: 1.0 };
        let receiver = ReceiverSpec { detector_efficiency: 1.0, dark_count_rate_hz: 0.0 };
        assert_eq!(max_distance(&source, 0.2, &receiver, 1e9).unwrap(), 0.0);
        assert!(matches!(
            max_distance(&source, 0.2, &receiver, 2e9),
            Err(BudgetError::RateUnreachable { .. })
        ));

        // Doubling the attenuation halves the reach.
        let l1 = max_distance(&source, 0.2, &receiver, 100.0).unwrap();
        let l2 = max_distance(&source, 0.4, &receiver, 100.0).unwrap();
        assert!((l1 / l2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_reproduces_reach_extension() {
        let ledger = ImprovementLedger::new(vec![
            ("source", 20.0),
            ("detectors", 7.0),
            ("fiber", 3.0),
            ("single-photons", 3.0),
        ]);
        assert!((ledger.total_db() - 33.0).abs() < 1e-12);
        assert!((ledger.extension_km(0.15) - 220.0).abs() < 1e-9);

        assert_eq!(ImprovementLedger::default().extension_km(0.15), 0.0);
        let single = ImprovementLedger::new(vec![("fiber", 3.0)]);
        assert!((single.extension_km(0.15) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_total_is_permutation_invariant() {
        let a = ImprovementLedger::new(vec![("x", 1.5), ("y", 20.0), ("z", 0.25)]);
        let b = ImprovementLedger::new(vec![("z", 0.25), ("x", 1.5), ("y", 20.0)]);
        assert_eq!(a.total_db(), b.total_db());
    }

    #[test]
    fn db_gain_reference_points() {
        assert!((db_gain(0.2, 1.0) - 6.9897000433601875).abs() < 1e-12);
        assert!((db_gain(1e9, 1e11) - 20.0).abs() < 1e-12);
        assert_eq!(db_gain(3.7, 3.7), 0.0);
    }

    #[test]
    fn db_gain_is_additive() {
        let (a, b, c) = (0.2, 0.5, 0.97);
        assert!((db_gain(a, b) + db_gain(b, c) - db_gain(a, c)).abs() < 1e-12);
    }

    #[test]
    fn diqip_gate() {
        let ok = diqip_feasible(0.95, 0.9);
        assert!(ok.feasible && !ok.outside_plausible_band);
        assert!((ok.margin - 0.05).abs() < 1e-12);

        let fail = diqip_feasible(0.75, 0.8);
        assert!(!fail.feasible);
        assert!((fail.margin + 0.05).abs() < 1e-12);

        let flagged = diqip_feasible(0.99, 0.6);
        assert!(flagged.feasible && flagged.outside_plausible_band);
    }

    #[test]
    fn amplified_rate() {
        assert!((amplified_link_rate(1.0, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(amplified_link_rate(123.0, 1.0), 123.0);
    }
}
