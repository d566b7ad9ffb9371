//! GNSS time-transfer uncertainty presets.
//!
//! A GNSS-disciplined server reads wall-clock time plus a one-way transfer
//! jitter drawn uniformly from a half-open nanosecond interval.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};

/// Half-open jitter interval `[lo_ns, hi_ns)`. `lo_ns == hi_ns` is degenerate and
/// always yields `lo_ns`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterBound {
    pub lo_ns: f64,
    pub hi_ns: f64,
}

impl JitterBound {
    pub const fn new(lo_ns: f64, hi_ns: f64) -> Self {
        Self { lo_ns, hi_ns }
    }

    pub fn is_valid(&self) -> bool {
        self.lo_ns.is_finite() && self.hi_ns.is_finite() && self.lo_ns >= 0.0 && self.hi_ns >= self.lo_ns
    }

    pub fn contains(&self, ns: f64) -> bool {
        if self.hi_ns == self.lo_ns {
            ns == self.lo_ns
        } else {
            ns >= self.lo_ns && ns < self.hi_ns
        }
    }

    /// Deterministic draw keyed by `(seed, entity, counter)`, in nanoseconds.
    ///
    /// The draw is an integer picosecond count so the upper bound is never hit
    /// by float rounding.
    pub fn sample(&self, seed: u64, entity: &str, counter: u64) -> f64 {
        let lo = (self.lo_ns * 1e3).round_ties_even() as i64;
        let hi = (self.hi_ns * 1e3).round_ties_even() as i64;
        if hi <= lo {
            return self.lo_ns;
        }
        let mut g = rng::stream(seed, Domain::GnssJitter, entity, &[counter]);
        g.random_range(lo..hi) as f64 / 1e3
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnssPreset {
    Gps,
    Beidou,
    Galileo,
    Glonass,
}

impl GnssPreset {
    pub const ALL: [GnssPreset; 4] = [GnssPreset::Gps, GnssPreset::Beidou, GnssPreset::Galileo, GnssPreset::Glonass];

    /// One-way time-transfer uncertainty.
    pub fn jitter_bound(self) -> JitterBound {
        match self {
            GnssPreset::Gps => JitterBound::new(0.0, 30.0),
            GnssPreset::Beidou => JitterBound::new(0.0, 50.0),
            GnssPreset::Galileo => JitterBound::new(0.0, 30.0),
            GnssPreset::Glonass => JitterBound::new(0.0, 40.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GnssPreset::Gps => "gps",
            GnssPreset::Beidou => "beidou",
            GnssPreset::Galileo => "galileo",
            GnssPreset::Glonass => "glonass",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Draws one jitter sample for `preset` under the given stream key.
pub fn sample_gnss_jitter(preset: GnssPreset, seed: u64, entity: &str, counter: u64) -> f64 {
    preset.jitter_bound().sample(seed, entity, counter)
}
