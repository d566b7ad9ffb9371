//! Software clock models.
//!
//! A software clock reads `C(t) = α₀ + βt + γt² + ε(t)` at wall-clock time `t`,
//! plus whatever correction synchronization has applied. The linear model drops
//! the quadratic term; the user-defined model replaces the polynomial with a
//! piecewise-linear offset table.
//!
//! Offsets are computed in the generic [`Scalar`] and added to an integer
//! picosecond base when the engine needs a reading.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::gnss::{GnssPreset, JitterBound};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;
use crate::units::{ps_to_secs, round_ps, SimTime, PS_PER_SECOND};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    #[default]
    Quadratic,
    UserDefined,
}

/// Piecewise-linear `(time s, offset s)` table, interpolated between points and
/// held flat outside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OffsetTable(pub Vec<(f64, f64)>);

impl OffsetTable {
    pub fn validate(&self) -> Result<(), String> {
        if self.0.is_empty() {
            return Err("offset table is empty".into());
        }
        for w in self.0.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(format!("offset table times must strictly increase ({} then {})", w[0].0, w[1].0));
            }
        }
        if self.0.iter().any(|(t, o)| !t.is_finite() || !o.is_finite()) {
            return Err("offset table has a non-finite entry".into());
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.0;
        let Some(first) = pts.first() else { return 0.0 };
        if t <= first.0 {
            return first.1;
        }
        let last = pts[pts.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|p| p.0 <= t);
        let (t0, o0) = pts[i - 1];
        let (t1, o1) = pts[i];
        o0 + (o1 - o0) * (t - t0) / (t1 - t0)
    }
}

/// Named clock presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockPreset {
    Perfect,
    Cesium,
    Quartz,
    Gps,
    Beidou,
    Galileo,
    Glonass,
}

impl ClockPreset {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "perfect" => Self::Perfect,
            "cesium" => Self::Cesium,
            "quartz" => Self::Quartz,
            other => match GnssPreset::from_name(other)? {
                GnssPreset::Gps => Self::Gps,
                GnssPreset::Beidou => Self::Beidou,
                GnssPreset::Galileo => Self::Galileo,
                GnssPreset::Glonass => Self::Glonass,
            },
        })
    }

    pub fn gnss(self) -> Option<GnssPreset> {
        match self {
            Self::Gps => Some(GnssPreset::Gps),
            Self::Beidou => Some(GnssPreset::Beidou),
            Self::Galileo => Some(GnssPreset::Galileo),
            Self::Glonass => Some(GnssPreset::Glonass),
            _ => None,
        }
    }

    /// Presets whose offset stays bounded, suitable for time servers.
    pub fn is_reference_grade(self) -> bool {
        !matches!(self, Self::Quartz)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClockParameters<S> {
    pub model: ModelKind,
    /// Initial offset, seconds.
    pub alpha0: S,
    /// Frequency offset, s/s.
    pub beta: S,
    /// Frequency drift, 1/s.
    pub gamma: S,
    /// Standard deviation of the white Gaussian noise term, seconds.
    pub noise_sigma: S,
    pub table: Option<OffsetTable>,
    /// Per-reading time-transfer jitter, for GNSS-disciplined clocks.
    pub jitter: Option<JitterBound>,
    /// Forces `gamma = 0` in every evaluation.
    pub gamma_locked: bool,
}

impl<S: Scalar> Default for ClockParameters<S> {
    fn default() -> Self {
        Self::perfect()
    }
}

impl<S: Scalar> ClockParameters<S> {
    pub fn perfect() -> Self {
        Self {
            model: ModelKind::Linear,
            alpha0: S::zero(),
            beta: S::zero(),
            gamma: S::zero(),
            noise_sigma: S::zero(),
            table: None,
            jitter: None,
            gamma_locked: false,
        }
    }

    pub fn linear(alpha0: S, beta: S) -> Self {
        Self { alpha0, beta, ..Self::perfect() }
    }

    pub fn quadratic(alpha0: S, beta: S, gamma: S) -> Self {
        Self { model: ModelKind::Quadratic, alpha0, beta, gamma, ..Self::perfect() }
    }

    pub fn user_defined(table: OffsetTable) -> Self {
        Self { model: ModelKind::UserDefined, table: Some(table), ..Self::perfect() }
    }

    /// Cesium standard: drift term pinned to zero.
    pub fn cesium(beta: S) -> Self {
        Self { gamma_locked: true, ..Self::linear(S::zero(), beta) }
    }

    /// Quartz oscillator with β = 10 ppm and γ = −1e-10 /s.
    pub fn quartz() -> Self {
        Self::quadratic(S::zero(), S::of(1e-5), S::of(-1e-10))
    }

    pub fn gnss(preset: GnssPreset) -> Self {
        Self { jitter: Some(preset.jitter_bound()), gamma_locked: true, ..Self::perfect() }
    }

    pub fn from_preset(preset: ClockPreset) -> Self {
        match preset {
            ClockPreset::Perfect => Self::perfect(),
            ClockPreset::Cesium => Self::cesium(S::zero()),
            ClockPreset::Quartz => Self::quartz(),
            p => Self::gnss(p.gnss().expect("remaining presets are gnss")),
        }
    }

    pub fn with_noise(mut self, sigma: S) -> Self {
        self.noise_sigma = sigma;
        self
    }

    /// The γ actually used in evaluation.
    pub fn effective_gamma(&self) -> S {
        if self.gamma_locked || self.model != ModelKind::Quadratic {
            S::zero()
        } else {
            self.gamma
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [self.alpha0, self.beta, self.gamma, self.noise_sigma].iter().all(|v| v.is_finite());
        if !finite {
            return Err(ConfigError::invalid("clock parameters must be finite"));
        }
        if self.noise_sigma < S::zero() {
            return Err(ConfigError::invalid("noise_sigma must be >= 0"));
        }
        if let Some(j) = &self.jitter {
            if !j.is_valid() {
                return Err(ConfigError::invalid("jitter bound must satisfy 0 <= lo <= hi"));
            }
        }
        match (&self.model, &self.table) {
            (ModelKind::UserDefined, None) => Err(ConfigError::invalid("user_defined model needs an offset table")),
            (ModelKind::UserDefined, Some(t)) => t.validate().map_err(ConfigError::invalid),
            _ => Ok(()),
        }
    }

    /// Deterministic part of `α(t)`, seconds.
    pub fn model_offset(&self, t: S) -> S {
        match self.model {
            ModelKind::UserDefined => S::of(self.table.as_ref().map_or(0.0, |tb| tb.eval(t.as_f64()))),
            _ => self.alpha0 + self.beta * t + self.effective_gamma() * t * t,
        }
    }

    /// `C'(t) = β + 2γt` for the polynomial models.
    pub fn rate(&self, t: S) -> S {
        self.beta + S::of(2.0) * self.effective_gamma() * t
    }
}

/// How a synchronization correction is applied to a clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectionPolicy {
    Step,
    /// Linear application at `rate` seconds of correction per simulated second.
    Slew { rate: f64 },
}

impl Default for CorrectionPolicy {
    fn default() -> Self {
        CorrectionPolicy::Step
    }
}

impl CorrectionPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            CorrectionPolicy::Slew { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                Err(ConfigError::invalid(format!("slew rate must be > 0, got {rate}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Slew {
    start: SimTime,
    delta_ps: i64,
    rate: f64,
}

impl Slew {
    fn applied_at(&self, t: SimTime) -> i64 {
        if t <= self.start {
            return 0;
        }
        let progressed = round_ps((t - self.start) as f64 * self.rate);
        progressed.min(self.delta_ps.abs()) * self.delta_ps.signum()
    }

    fn completes_at(&self) -> SimTime {
        self.start + round_ps(self.delta_ps.abs() as f64 / self.rate)
    }
}

/// A drifting clock owned by one node.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftwareClock<S> {
    id: String,
    params: ClockParameters<S>,
    seed: u64,
    step_ps: i64,
    slews: Vec<Slew>,
}

impl<S: Scalar> SoftwareClock<S> {
    pub fn new(id: impl Into<String>, params: ClockParameters<S>, seed: u64) -> Self {
        Self { id: id.into(), params, seed, step_ps: 0, slews: Vec::new() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &ClockParameters<S> {
        &self.params
    }

    /// Gaussian white noise `ε(t)`, keyed by `(seed, clock id, t in ps)`.
    pub fn sample_noise(&self, t: SimTime) -> S {
        if self.params.noise_sigma == S::zero() {
            return S::zero();
        }
        let mut g = rng::stream(self.seed, Domain::ClockNoise, &self.id, &[t.ps() as u64]);
        let z: f64 = StandardNormal.sample(&mut g);
        self.params.noise_sigma * S::of(z)
    }

    /// Time-transfer jitter for GNSS-disciplined clocks, seconds.
    pub fn sample_jitter(&self, t: SimTime) -> S {
        match &self.params.jitter {
            Some(b) => S::of(b.sample(self.seed, &self.id, t.ps() as u64) * 1e-9),
            None => S::zero(),
        }
    }

    /// Offset without applied corrections.
    pub fn free_offset_at(&self, t: SimTime) -> S {
        self.params.model_offset(S::of(t.as_secs())) + self.sample_noise(t) + self.sample_jitter(t)
    }

    /// Total correction in effect at `t`, picoseconds.
    pub fn correction_at(&self, t: SimTime) -> i64 {
        self.step_ps + self.slews.iter().map(|s| s.applied_at(t)).sum::<i64>()
    }

    /// Correction scheduled so far, including slews still in progress.
    pub fn pending_correction(&self) -> f64 {
        ps_to_secs(self.step_ps + self.slews.iter().map(|s| s.delta_ps).sum::<i64>())
    }

    /// `α(t) = C(t) − t` in seconds, at wall-clock seconds `t`.
    pub fn offset(&self, t: S) -> S {
        let at = SimTime::from_secs(t.as_f64());
        self.params.model_offset(t)
            + self.sample_noise(at)
            + self.sample_jitter(at)
            + S::of(self.correction_at(at) as f64 / PS_PER_SECOND)
    }

    /// `C(t)` in seconds. `read(t) - t == offset(t)` up to one rounding.
    pub fn read(&self, t: S) -> S {
        t + self.offset(t)
    }

    /// Offset at a simulation instant, integer picoseconds.
    pub fn offset_ps(&self, t: SimTime) -> i64 {
        round_ps(self.free_offset_at(t).as_f64() * PS_PER_SECOND) + self.correction_at(t)
    }

    /// Reading at a simulation instant, integer picoseconds.
    pub fn read_ps(&self, t: SimTime) -> i64 {
        t.ps() + self.offset_ps(t)
    }

    /// Applies `delta_ps` under `policy` starting at `now`; returns when the
    /// correction is fully in effect.
    pub fn apply_correction(
        &mut self,
        delta_ps: i64,
        policy: CorrectionPolicy,
        now: SimTime,
    ) -> Result<SimTime, ConfigError> {
        policy.validate()?;
        match policy {
            CorrectionPolicy::Step => {
                self.step_ps += delta_ps;
                Ok(now)
            }
            CorrectionPolicy::Slew { rate } => {
                if delta_ps == 0 {
                    return Ok(now);
                }
                let slew = Slew { start: now, delta_ps, rate };
                let done = slew.completes_at();
                self.slews.push(slew);
                Ok(done)
            }
        }
    }
}

/// Free-standing form of [`SoftwareClock::read`] for a seconds-valued query.
pub fn read_clock<S: Scalar>(clock: &SoftwareClock<S>, t: S) -> S {
    clock.read(t)
}

pub fn clock_offset<S: Scalar>(clock: &SoftwareClock<S>, t: S) -> S {
    clock.offset(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    LocalMaximum,
    LocalMinimum,
    None,
}

/// Where the quadratic model's offset turns around, if it does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtremumReport<S> {
    pub has_extremum: bool,
    /// Wall-clock time of the extremum; may be negative.
    pub t_star: Option<S>,
    pub classification: Extremum,
    /// `C''(t) = 2γ`.
    pub concavity: S,
}

/// Second-derivative test on the polynomial clock.
pub fn extremum_analysis<S: Scalar>(params: &ClockParameters<S>) -> ExtremumReport<S> {
    let gamma = params.effective_gamma();
    let concavity = S::of(2.0) * gamma;
    if gamma == S::zero() {
        return ExtremumReport { has_extremum: false, t_star: None, classification: Extremum::None, concavity };
    }
    let t_star = -params.beta / concavity;
    let classification = if gamma < S::zero() { Extremum::LocalMaximum } else { Extremum::LocalMinimum };
    ExtremumReport { has_extremum: true, t_star: Some(t_star), classification, concavity }
}
