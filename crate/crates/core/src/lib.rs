//! Deterministic discrete-event simulator for clock synchronization over
//! routed networks.
//!
//! Clocks follow a polynomial offset model with optional noise. Messages are
//! routed over a graph of clients, time servers and routers whose delays and
//! availability can be perturbed by attacks. Cristian and Berkeley
//! synchronization run as event-driven sessions, and every run emits a
//! byte-reproducible JSONL trace.

pub mod attacks;
pub mod clock;
pub mod delay;
pub mod dot;
pub mod engine;
pub mod error;
pub mod gnss;
pub mod metrics;
pub mod rng;
pub mod routing;
pub mod scalar;
pub mod scenario;
pub mod sync;
pub mod topology;
pub mod trace;
pub mod units;

pub use attacks::{AttackKind, AttackSpec, HijackMode, NetworkView};
pub use clock::{extremum_analysis, CorrectionPolicy, Extremum, ModelKind};
pub use delay::PathDelayBreakdown;
pub use engine::{Engine, EngineConfig};
pub use error::{ConfigError, DomainError, EngineError, NoRoute, PathBlocked};
pub use gnss::{sample_gnss_jitter, GnssPreset, JitterBound};
pub use metrics::{metrics_report, MetricsReport};
pub use routing::{shortest_path, Route, RouteQuery};
pub use scalar::Scalar;
pub use scenario::{load_scenario, write_scenario, Scenario};
pub use sync::{berkeley_round, cristian_sync, SyncReport, SyncRequest};
pub use topology::{FailureModel, LinkSpec, Medium, NetworkGraph, NodeKind, NodeSpec, RouterKind};
pub use units::SimTime;

pub type ClockParameters = clock::ClockParameters<f64>;
pub type SoftwareClock = clock::SoftwareClock<f64>;
pub type ExtremumReport = clock::ExtremumReport<f64>;

pub type ClockParametersF32 = clock::ClockParameters<f32>;
pub type SoftwareClockF32 = clock::SoftwareClock<f32>;
pub type ExtremumReportF32 = clock::ExtremumReport<f32>;
