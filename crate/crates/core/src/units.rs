//! Simulated time in integer picoseconds.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

pub const PS_PER_SECOND: f64 = 1e12;

/// Rounds a non-integral picosecond quantity half-to-even.
pub fn round_ps(ps: f64) -> i64 {
    ps.round_ties_even() as i64
}

/// Seconds to integer picoseconds, rounding half-to-even.
pub fn secs_to_ps(secs: f64) -> i64 {
    round_ps(secs * PS_PER_SECOND)
}

pub fn ps_to_secs(ps: i64) -> f64 {
    ps as f64 / PS_PER_SECOND
}

/// Wall-clock (ground truth) simulation time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(secs: f64) -> Self {
        SimTime(secs_to_ps(secs))
    }

    pub fn from_ps(ps: i64) -> Self {
        SimTime(ps)
    }

    pub fn ps(self) -> i64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        ps_to_secs(self.0)
    }
}

impl Add<i64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: i64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = i64;
    fn sub(self, rhs: SimTime) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}
