//! Experiment configuration: one TOML document fully specifies a run.
//!
//! A config names the block-size spec, the start state, a recording
//! schedule (absolute times, a beta grid through `t_ent + beta * t_w`, or
//! offsets `floor(beta n/k)` after the start site's first hit), replica
//! and seeding choices, and the optional ledger/chunk instrumentation.
//! [`ExperimentConfig::plan`] validates everything upfront and resolves it
//! into the concrete objects the runner consumes, so a malformed or
//! over-budget config is refused before any work starts.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::StartState;
use crate::error::{Error, Result};
use crate::piles::{worst_case_buckets, DEFAULT_DUST_SCALE};
use crate::profiles::ProfileCurve;
use crate::sizespec::{BlockSizeSpec, SpecDoc};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub replicas: u64,
    /// Worker threads for the replica pool; defaults to all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub spec: SpecDoc,
    pub start: StartConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub ledger: LedgerConfig,
    #[serde(default)]
    pub chunks: ChunkConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    /// Reference curve evaluated at each beta label for comparison columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<ProfileCurve>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartConfig {
    /// Unit mass on one site.
    Dirac {
        #[serde(default)]
        x0: usize,
    },
    /// k sites of mass 1/k: the canonical spread (small-distance) start.
    Spread { k: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// Record at these absolute times (strictly increasing).
    Times { times: Vec<u64> },
    /// Record at t = round-half-up(t_ent + beta * t_w), clamped at 0.
    BetaGrid { betas: Vec<f64> },
    /// Record at tau_start + floor(beta * n/k); deterministic specs only.
    TauRelative { betas: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for aggregate.csv, per-replica CSVs, histogram.csv and
    /// manifest.toml; nothing is written when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write one CSV per replica.
    pub per_replica: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerConfig {
    pub enabled: bool,
    /// Pile size below which mass becomes dust; default 1/(n * 2^20).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dust_floor: Option<f64>,
    /// Scale a of the certified lower bound (piles of size >= a/n).
    pub glb_a: f64,
    /// Epsilon of the certified lower bound.
    pub glb_eps: f64,
    /// Record per-generation mass histograms (deterministic specs only).
    pub histogram: bool,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            enabled: false,
            dust_floor: None,
            glb_a: 4.0,
            glb_eps: 0.25,
            histogram: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    pub enabled: bool,
    /// Marked chunks carried per replica.
    pub per_replica: u64,
    /// Chunk sizes are compared against this threshold (fraction with size
    /// >= threshold is reported); default glb_a/n, pairing the chunk
    /// frequency with the ledger's thresholded mass.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig { enabled: false, per_replica: 1, threshold: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Ledger admission: configs whose worst-case aggregate bucket count
    /// exceeds this are refused upfront.
    pub max_buckets: u64,
    /// Absolute-schedule cap: scheduled times beyond it are truncated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// Cap on the wait for tau_start; default ceil(200 n / E[X]) steps
    /// (exceeding it is a ~e^-200 event under the model).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_wait_cap: Option<u64>,
    /// Soft wall-clock limit checked between replicas; exceeding it yields
    /// partial results with an explicit truncation marker.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_secs: Option<u64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_buckets: 1 << 22,
            horizon: None,
            tau_wait_cap: None,
            time_limit_secs: None,
        }
    }
}

/// One output row of the schedule: an optional beta label and a time — an
/// absolute step count, or an offset after tau_start in tau-relative mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub beta: Option<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedSchedule {
    Absolute(Vec<ScheduleRow>),
    TauRelative(Vec<ScheduleRow>),
}

impl ResolvedSchedule {
    pub fn rows(&self) -> &[ScheduleRow] {
        match self {
            ResolvedSchedule::Absolute(rows) | ResolvedSchedule::TauRelative(rows) => rows,
        }
    }

    pub fn is_tau_relative(&self) -> bool {
        matches!(self, ResolvedSchedule::TauRelative(_))
    }

    /// The sorted distinct recording times (or offsets) the driver visits.
    pub fn distinct_times(&self) -> Vec<u64> {
        let mut times: Vec<u64> = self.rows().iter().map(|r| r.t).collect();
        times.sort_unstable();
        times.dedup();
        times
    }
}

/// Everything a run needs, validated and resolved from a config.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub config: ExperimentConfig,
    pub spec: BlockSizeSpec,
    pub start: StartState,
    pub schedule: ResolvedSchedule,
    pub ledger: Option<LedgerPlan>,
    pub chunks: Option<ChunkPlan>,
    pub compare: Option<ProfileCurve>,
    pub tau_wait_cap: u64,
    pub horizon: Option<u64>,
    pub time_limit: Option<Duration>,
}

#[derive(Debug, Clone, Copy)]
pub struct LedgerPlan {
    pub dust_floor: f64,
    pub glb_a: f64,
    pub glb_eps: f64,
    /// Generation base for histograms (the deterministic block size).
    pub histogram_base: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct ChunkPlan {
    pub per_replica: u64,
    pub threshold: f64,
}

fn round_half_up(x: f64) -> u64 {
    let r = (x + 0.5).floor();
    if r <= 0.0 {
        0
    } else {
        r as u64
    }
}

impl ExperimentConfig {
    pub fn from_document(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("malformed experiment config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_document(&text)
    }

    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validate and resolve into a runnable plan. All admission checks live
    /// here: bad geometry, unlabeled comparison schedules and over-budget
    /// ledgers are refused before any stepping happens.
    pub fn plan(&self) -> Result<ExperimentPlan> {
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be at least 1".into()));
        }
        let spec = self.spec.to_spec()?;
        let n = spec.n();

        let start = match self.start {
            StartConfig::Dirac { x0 } => {
                if x0 >= n {
                    return Err(Error::InvalidConfig(format!(
                        "start site x0 = {x0} out of range for n = {n}"
                    )));
                }
                StartState::Dirac { x0 }
            }
            StartConfig::Spread { k } => {
                if !(2..=n).contains(&k) {
                    return Err(Error::InvalidConfig(format!(
                        "spread width k = {k} out of range 2..={n}"
                    )));
                }
                StartState::Spread { k }
            }
        };

        let schedule = self.resolve_schedule(&spec)?;

        let ledger = if self.ledger.enabled {
            let floor = self.ledger.dust_floor.unwrap_or(DEFAULT_DUST_SCALE / n as f64);
            if !(floor > 0.0 && floor < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "dust floor {floor} must lie in (0, 1)"
                )));
            }
            let (a, eps) = (self.ledger.glb_a, self.ledger.glb_eps);
            if !(a > 1.0) || !a.is_finite() {
                return Err(Error::InvalidConfig(format!("glb_a = {a} must exceed 1")));
            }
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidConfig(format!("glb_eps = {eps} must lie in (0, 1)")));
            }
            if a / (n as f64) < floor {
                return Err(Error::InvalidConfig(format!(
                    "glb threshold a/n = {} lies below the dust floor {floor}",
                    a / n as f64
                )));
            }
            let worst = worst_case_buckets(&spec, floor);
            if worst > self.budget.max_buckets as u128 {
                return Err(Error::ResourceBudget(format!(
                    "worst-case ledger bucket count {worst} exceeds the budget {} \
                     (raise budget.max_buckets, coarsen the dust floor, or disable the ledger)",
                    self.budget.max_buckets
                )));
            }
            let histogram_base = if self.ledger.histogram {
                Some(spec.fixed_size().ok_or_else(|| {
                    Error::InvalidConfig(
                        "generation histograms require a deterministic block size".into(),
                    )
                })?)
            } else {
                None
            };
            Some(LedgerPlan { dust_floor: floor, glb_a: a, glb_eps: eps, histogram_base })
        } else {
            None
        };

        let chunks = if self.chunks.enabled {
            if self.chunks.per_replica == 0 {
                return Err(Error::InvalidConfig("chunks.per_replica must be at least 1".into()));
            }
            let threshold = self.chunks.threshold.unwrap_or(self.ledger.glb_a / n as f64);
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "chunk threshold {threshold} must lie in (0, 1]"
                )));
            }
            Some(ChunkPlan { per_replica: self.chunks.per_replica, threshold })
        } else {
            None
        };

        if self.compare.is_some() && schedule.rows().iter().any(|r| r.beta.is_none()) {
            return Err(Error::InvalidConfig(
                "profile comparison needs a beta-labeled schedule (beta-grid or tau-relative)"
                    .into(),
            ));
        }

        let tau_wait_cap = self
            .budget
            .tau_wait_cap
            .unwrap_or_else(|| (200.0 * n as f64 / spec.mean()).ceil() as u64);

        Ok(ExperimentPlan {
            config: self.clone(),
            spec,
            start,
            schedule,
            ledger,
            chunks,
            compare: self.compare.clone(),
            tau_wait_cap,
            horizon: self.budget.horizon,
            time_limit: self.budget.time_limit_secs.map(Duration::from_secs),
        })
    }

    fn resolve_schedule(&self, spec: &BlockSizeSpec) -> Result<ResolvedSchedule> {
        match &self.schedule {
            ScheduleConfig::Times { times } => {
                if times.is_empty() {
                    return Err(Error::InvalidConfig("schedule.times is empty".into()));
                }
                if times.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidConfig(
                        "schedule.times must be strictly increasing".into(),
                    ));
                }
                Ok(ResolvedSchedule::Absolute(
                    times.iter().map(|&t| ScheduleRow { beta: None, t }).collect(),
                ))
            }
            ScheduleConfig::BetaGrid { betas } => {
                check_betas(betas, f64::NEG_INFINITY)?;
                let ts = spec.timescales();
                let mut rows: Vec<ScheduleRow> = betas
                    .iter()
                    .map(|&b| ScheduleRow {
                        beta: Some(b),
                        t: round_half_up(ts.entropic + b * ts.window),
                    })
                    .collect();
                rows.sort_by(|a, b| a.t.cmp(&b.t));
                Ok(ResolvedSchedule::Absolute(rows))
            }
            ScheduleConfig::TauRelative { betas } => {
                check_betas(betas, 0.0)?;
                let k = spec.fixed_size().ok_or_else(|| {
                    Error::InvalidConfig(
                        "tau-relative schedules require a deterministic block size".into(),
                    )
                })?;
                let scale = spec.n() as f64 / k as f64;
                let mut rows: Vec<ScheduleRow> = betas
                    .iter()
                    .map(|&b| ScheduleRow { beta: Some(b), t: (b * scale).floor() as u64 })
                    .collect();
                rows.sort_by(|a, b| a.t.cmp(&b.t));
                Ok(ResolvedSchedule::TauRelative(rows))
            }
        }
    }
}

fn check_betas(betas: &[f64], min: f64) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::InvalidConfig("schedule.betas is empty".into()));
    }
    for &b in betas {
        if !b.is_finite() || b < min {
            return Err(Error::InvalidConfig(format!(
                "schedule beta {b} must be finite{}",
                if min == 0.0 { " and nonnegative" } else { "" }
            )));
        }
    }
    Ok(())
}
