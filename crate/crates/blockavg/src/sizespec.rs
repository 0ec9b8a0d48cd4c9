//! Block-size specifications: the law of the random block size X on
//! {2, ..., n}, its size-biased companion, and the timescales they induce.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for user-supplied probabilities: the total may deviate from 1 by
/// this much and is then renormalized exactly.
const PROB_SUM_TOL: f64 = 1e-12;

/// How a [`BlockSizeSpec`] was constructed; kept for exact round-tripping
/// through the on-disk document format.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecKind {
    /// X = k with probability one.
    Deterministic { k: usize },
    /// P(X = 2) = 1 - a/n, P(X = n) = a/n.
    TwoPoint { a: f64 },
    /// Arbitrary finite table of (size, probability) pairs.
    Table,
}

/// Distribution of the block size X on {2, ..., n}.
///
/// The stored pmf contains only strictly positive entries and sums to 1
/// exactly (after renormalization at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSizeSpec {
    n: usize,
    kind: SpecKind,
    pmf: BTreeMap<usize, f64>,
}

impl BlockSizeSpec {
    /// Deterministic block size: X = k always.
    pub fn deterministic(n: usize, k: usize) -> Result<Self> {
        Self::build(n, SpecKind::Deterministic { k }, vec![(k, 1.0)])
    }

    /// The two-point family P(X = 2) = 1 - a/n, P(X = n) = a/n, 0 <= a <= n.
    pub fn two_point(n: usize, a: f64) -> Result<Self> {
        if !a.is_finite() || a < 0.0 || a > n as f64 {
            return Err(Error::InvalidSpec(format!(
                "two-point parameter a = {a} must lie in [0, n] with n = {n}"
            )));
        }
        let p_big = a / n as f64;
        // At n = 2 the two atoms coincide; merge them.
        let entries = if n == 2 {
            vec![(2, 1.0)]
        } else {
            vec![(2, 1.0 - p_big), (n, p_big)]
        };
        Self::build(n, SpecKind::TwoPoint { a }, entries)
    }

    /// A finite table of (size, probability) pairs. Probabilities must be
    /// nonnegative and sum to 1 within 1e-12; they are then renormalized.
    pub fn from_table(n: usize, entries: &[(usize, f64)]) -> Result<Self> {
        Self::build(n, SpecKind::Table, entries.to_vec())
    }

    fn build(n: usize, kind: SpecKind, entries: Vec<(usize, f64)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSpec(format!("n = {n} must be at least 2")));
        }
        let mut pmf = BTreeMap::new();
        for (k, p) in entries {
            if k < 2 || k > n {
                return Err(Error::InvalidSpec(format!(
                    "block size {k} outside the admissible range 2..={n}"
                )));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "probability {p} for block size {k} must be finite and nonnegative"
                )));
            }
            if pmf.insert(k, p).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate block size {k} in table")));
            }
        }
        let total: f64 = pmf.values().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidSpec(format!(
                "probabilities sum to {total}, which deviates from 1 by more than {PROB_SUM_TOL}"
            )));
        }
        pmf.retain(|_, p| *p > 0.0);
        if pmf.is_empty() {
            return Err(Error::InvalidSpec("no block size has positive probability".into()));
        }
        for p in pmf.values_mut() {
            *p /= total;
        }
        Ok(BlockSizeSpec { n, kind, pmf })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &SpecKind {
        &self.kind
    }

    /// The pmf; keys are the support (strictly positive entries only).
    pub fn pmf(&self) -> &BTreeMap<usize, f64> {
        &self.pmf
    }

    /// The deterministic block size, if this spec is deterministic.
    pub fn fixed_size(&self) -> Option<usize> {
        match self.kind {
            SpecKind::Deterministic { k } => Some(k),
            _ => match self.pmf.len() {
                1 => self.pmf.keys().next().copied(),
                _ => None,
            },
        }
    }

    /// E[X].
    pub fn mean(&self) -> f64 {
        self.pmf.iter().map(|(&k, &p)| k as f64 * p).sum()
    }

    /// E[X log X].
    pub fn mean_x_log_x(&self) -> f64 {
        self.pmf.iter().map(|(&k, &p)| k as f64 * (k as f64).ln() * p).sum()
    }

    /// E[X (log X)^2].
    pub fn mean_x_log_sq_x(&self) -> f64 {
        self.pmf
            .iter()
            .map(|(&k, &p)| {
                let l = (k as f64).ln();
                k as f64 * l * l * p
            })
            .sum()
    }

    /// Draw one block size.
    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        // Supports in practice are tiny; a linear cdf scan is fine.
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 2;
        for (&k, &p) in &self.pmf {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
        last
    }

    /// The size-biased law p_Y(k) = k p_X(k) / E[X].
    pub fn size_biased(&self) -> SizeBiasedLaw {
        let mean = self.mean();
        let pmf: BTreeMap<usize, f64> =
            self.pmf.iter().map(|(&k, &p)| (k, k as f64 * p / mean)).collect();
        SizeBiasedLaw::new(pmf)
    }

    /// All timescales induced by this spec.
    pub fn timescales(&self) -> Timescales {
        let n = self.n as f64;
        let log_n = n.ln();
        let mean = self.mean();
        let sb = self.size_biased();
        let mu = sb.mean_log();
        let sigma_sq = sb.var_log();
        let sigma = sigma_sq.sqrt();
        let rho = sigma / mu;
        Timescales {
            relaxation: (n - 1.0) / (mean - 1.0),
            entropic: n * log_n / self.mean_x_log_x(),
            window: (1.0 + rho) * n * log_n.sqrt() / (mean * mu.sqrt()),
            mu,
            sigma_sq,
            rho,
        }
    }

    /// Finite-n regime diagnostics and a heuristic label.
    pub fn classify_regime(&self, thresholds: &RegimeThresholds) -> RegimeDiagnostics {
        let log_n = (self.n as f64).ln();
        let sb = self.size_biased();
        let mu = sb.mean_log();
        let sigma_sq = sb.var_log();
        let mu_over_log_n = mu / log_n;
        let window_ratio = sigma_sq / (mu * log_n);
        let lindeberg = sb.lindeberg_statistic(log_n, thresholds.lindeberg_delta);
        let label = if mu_over_log_n >= thresholds.timescale_ratio
            || window_ratio >= thresholds.window_ratio
        {
            RegimeLabel::NoCutoffCandidate
        } else if lindeberg <= thresholds.lindeberg {
            RegimeLabel::CutoffCandidate
        } else {
            RegimeLabel::WindowCandidate
        };
        RegimeDiagnostics { mu_over_log_n, window_ratio, lindeberg, label }
    }

    // ----- document (de)serialization -----

    /// Render as the on-disk TOML document.
    pub fn to_document(&self) -> String {
        let doc = SpecDoc::from_spec(self);
        toml::to_string(&doc).expect("spec document serializes")
    }

    /// Parse from the on-disk TOML document.
    pub fn from_document(text: &str) -> Result<Self> {
        let doc: SpecDoc = toml::from_str(text)
            .map_err(|e| Error::InvalidSpec(format!("malformed spec document: {e}")))?;
        doc.to_spec()
    }

    pub fn from_document_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_document(&text)
    }
}

/// The size-biased law Y of a block-size spec: p_Y(k) = k p_X(k) / E[X].
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBiasedLaw {
    pmf: BTreeMap<usize, f64>,
    cdf: Vec<(usize, f64)>,
}

impl SizeBiasedLaw {
    fn new(pmf: BTreeMap<usize, f64>) -> Self {
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for (&k, &p) in &pmf {
            acc += p;
            cdf.push((k, acc));
        }
        SizeBiasedLaw { pmf, cdf }
    }

    pub fn pmf(&self) -> &BTreeMap<usize, f64> {
        &self.pmf
    }

    /// mu = E[log Y].
    pub fn mean_log(&self) -> f64 {
        self.pmf.iter().map(|(&k, &p)| (k as f64).ln() * p).sum()
    }

    /// sigma^2 = Var(log Y). Clamped at zero against fp rounding for
    /// deterministic specs.
    pub fn var_log(&self) -> f64 {
        let mu = self.mean_log();
        let second: f64 = self
            .pmf
            .iter()
            .map(|(&k, &p)| {
                let l = (k as f64).ln();
                l * l * p
            })
            .sum();
        (second - mu * mu).max(0.0)
    }

    /// Lindeberg-type truncated second moment of z = (log Y - mu)/sigma at
    /// truncation level delta * sqrt(log n / mu). Zero when sigma = 0.
    pub fn lindeberg_statistic(&self, log_n: f64, delta: f64) -> f64 {
        let mu = self.mean_log();
        let sigma = self.var_log().sqrt();
        if sigma == 0.0 {
            return 0.0;
        }
        let cut = delta * (log_n / mu).sqrt();
        self.pmf
            .iter()
            .map(|(&k, &p)| {
                let z = ((k as f64).ln() - mu) / sigma;
                if z.abs() > cut {
                    p * z * z
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Draw one size-biased sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&(_, c)| c <= u);
        self.cdf[idx.min(self.cdf.len() - 1)].0
    }
}

/// The timescales of a block-size spec on n sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timescales {
    /// Relaxation time (n-1)/(E[X]-1); governs the L2 decay rate.
    pub relaxation: f64,
    /// Entropic time n log n / E[X log X]; the cutoff location candidate.
    pub entropic: f64,
    /// Cutoff window width (1 + sigma/mu) n sqrt(log n) / (E[X] sqrt(mu)).
    pub window: f64,
    /// mu = E[log Y] of the size-biased law.
    pub mu: f64,
    /// sigma^2 = Var(log Y) of the size-biased law.
    pub sigma_sq: f64,
    /// rho = sigma/mu; shape parameter of the Gaussian profile.
    pub rho: f64,
}

/// Thresholds for [`BlockSizeSpec::classify_regime`]. All are heuristic
/// finite-n choices and deliberately configurable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeThresholds {
    /// Cut on mu / log n (big-timescale test: t_ent comparable to n).
    pub timescale_ratio: f64,
    /// Cut on sigma^2 / (mu log n) (window comparable to t_ent).
    pub window_ratio: f64,
    /// Cut on the Lindeberg statistic below which the Gaussian profile is
    /// plausible.
    pub lindeberg: f64,
    /// Truncation level delta in the Lindeberg statistic.
    pub lindeberg_delta: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            timescale_ratio: 0.2,
            window_ratio: 0.2,
            lindeberg: 0.2,
            lindeberg_delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeLabel {
    /// Small window, Gaussian-compatible jumps: expect an abrupt transition.
    CutoffCandidate,
    /// Small window but heavy size-biased tails: expect a non-Gaussian shape.
    WindowCandidate,
    /// Window or timescale comparable to the whole evolution: no abrupt
    /// transition expected.
    NoCutoffCandidate,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegimeLabel::CutoffCandidate => "cutoff-candidate",
            RegimeLabel::WindowCandidate => "window-candidate",
            RegimeLabel::NoCutoffCandidate => "no-cutoff-candidate",
        })
    }
}

/// Diagnostic ratios from [`BlockSizeSpec::classify_regime`].
#[derive(Debug, Clone, Copy)]
pub struct RegimeDiagnostics {
    pub mu_over_log_n: f64,
    pub window_ratio: f64,
    pub lindeberg: f64,
    pub label: RegimeLabel,
}

// ----- on-disk document format -----

/// The TOML shape of a spec on disk, also embedded in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDoc {
    n: usize,
    kind: String,
    parameters: SpecParams,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SpecParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<(usize, f64)>>,
}

impl SpecDoc {
    pub fn from_spec(spec: &BlockSizeSpec) -> SpecDoc {
        let (kind, parameters) = match &spec.kind {
            SpecKind::Deterministic { k } => {
                ("deterministic".to_string(), SpecParams { k: Some(*k), ..Default::default() })
            }
            SpecKind::TwoPoint { a } => {
                ("two_point".to_string(), SpecParams { a: Some(*a), ..Default::default() })
            }
            SpecKind::Table => {
                let entries = spec.pmf.iter().map(|(&k, &p)| (k, p)).collect();
                ("table".to_string(), SpecParams { entries: Some(entries), ..Default::default() })
            }
        };
        SpecDoc { n: spec.n, kind, parameters }
    }

    pub fn to_spec(&self) -> Result<BlockSizeSpec> {
        let missing = |what: &str, kind: &str| {
            Error::InvalidSpec(format!("kind \"{kind}\" requires parameters.{what}"))
        };
        match self.kind.as_str() {
            "deterministic" => {
                let k = self.parameters.k.ok_or_else(|| missing("k", "deterministic"))?;
                BlockSizeSpec::deterministic(self.n, k)
            }
            "two_point" => {
                let a = self.parameters.a.ok_or_else(|| missing("a", "two_point"))?;
                BlockSizeSpec::two_point(self.n, a)
            }
            "table" => {
                let entries =
                    self.parameters.entries.as_ref().ok_or_else(|| missing("entries", "table"))?;
                BlockSizeSpec::from_table(self.n, entries)
            }
            other => Err(Error::InvalidSpec(format!(
                "unknown spec kind \"{other}\" (expected deterministic, two_point or table)"
            ))),
        }
    }
}
