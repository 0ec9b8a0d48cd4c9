//! Pile dynamics: the refinement of the mass vector into piles.
//!
//! Every averaging step splits each pile sitting in the block into `k` equal
//! fragments, assigned to the `k` block sites by a uniform permutation — one
//! fragment per site. Summing pile sizes at a site recovers the engine mass
//! exactly, while the piles themselves carry the size information that
//! drives the sharp total-variation analysis.
//!
//! The aggregate [`PileLedger`] here tracks (size, count) buckets per site;
//! fragment assignment is deterministic in aggregate (every block site
//! receives one fragment of every pooled pile), so this mode needs no
//! randomness. Sizes below a configurable dust floor are swept into a
//! per-site dust term. [`literal::LiteralLedger`] keeps every pile as an
//! object with an identity instead (small n only), and [`chunk`] follows
//! single marked chunks through the dynamics.

pub mod chunk;
pub mod literal;

use std::collections::BTreeMap;
use std::io::Write;

use crate::engine::{BlockSample, StartState};
use crate::error::{Error, Result};
use crate::sizespec::BlockSizeSpec;

/// Quantum for merging pile sizes: buckets are keyed by
/// `round(log_size / LOG_QUANTUM)`.
pub const LOG_QUANTUM: f64 = 1e-12;

/// Default dust floor, as a fraction of the uniform mass: piles smaller than
/// `1/(n * 2^20)` are dust.
pub const DEFAULT_DUST_SCALE: f64 = 1.0 / (1u64 << 20) as f64;

fn quantize(log_size: f64) -> i64 {
    (log_size / LOG_QUANTUM).round() as i64
}

/// A merged class of piles of (numerically) equal size at one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    pub count: u64,
    /// Representative log size (first inserted; within one quantum of all
    /// merged members).
    pub log_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SiteLedger {
    buckets: BTreeMap<i64, Bucket>,
    dust: f64,
}

/// Aggregate per-site pile bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PileLedger {
    n: usize,
    floor_log: f64,
    sites: Vec<SiteLedger>,
}

impl PileLedger {
    /// Ledger for a unit pile at `x0`, with the default dust floor.
    pub fn dirac(n: usize, x0: usize) -> Self {
        Self::from_start(n, StartState::Dirac { x0 }, None).expect("valid dirac start")
    }

    /// Ledger for `k` piles of size 1/k at sites 0..k.
    pub fn spread_start(n: usize, k: usize) -> Self {
        Self::from_start(n, StartState::Spread { k }, None).expect("valid spread start")
    }

    /// General constructor; `dust_floor` is a pile size in (0, 1), default
    /// `1/(n * 2^20)`.
    pub fn from_start(n: usize, start: StartState, dust_floor: Option<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("n = {n} must be at least 2")));
        }
        let floor = dust_floor.unwrap_or(DEFAULT_DUST_SCALE / n as f64);
        if !(floor > 0.0 && floor < 1.0) {
            return Err(Error::Domain(format!("dust floor {floor} must lie in (0, 1)")));
        }
        let mut sites = vec![SiteLedger::default(); n];
        match start {
            StartState::Dirac { x0 } => {
                if x0 >= n {
                    return Err(Error::Domain(format!("start site {x0} out of range")));
                }
                sites[x0].buckets.insert(quantize(0.0), Bucket { count: 1, log_size: 0.0 });
            }
            StartState::Spread { k } => {
                if !(2..=n).contains(&k) {
                    return Err(Error::Domain(format!("spread width {k} out of range 2..={n}")));
                }
                let l = -(k as f64).ln();
                for site in sites.iter_mut().take(k) {
                    site.buckets.insert(quantize(l), Bucket { count: 1, log_size: l });
                }
            }
        }
        Ok(PileLedger { n, floor_log: floor.ln(), sites })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Natural log of the dust floor.
    pub fn floor_log(&self) -> f64 {
        self.floor_log
    }

    /// Split every pile in the block and redistribute the fragments.
    ///
    /// In aggregate this is deterministic: the block's piles are pooled and
    /// every block site receives one `1/k`-fragment of each pooled pile
    /// (plus an equal share of the pooled dust).
    pub fn apply_block(&mut self, block: &BlockSample) {
        self.apply_sites(block.sites());
    }

    /// Same over a bare slice of distinct sites (driver hot loops).
    pub fn apply_sites(&mut self, sites: &[usize]) {
        let k = sites.len();
        let ln_k = (k as f64).ln();
        let mut pooled: BTreeMap<i64, Bucket> = BTreeMap::new();
        let mut old_dust = 0.0;
        let mut new_dust_per_site = 0.0;
        for &x in sites {
            let site = &mut self.sites[x];
            old_dust += std::mem::take(&mut site.dust);
            for (_, b) in std::mem::take(&mut site.buckets) {
                let shifted = b.log_size - ln_k;
                if shifted < self.floor_log {
                    // Each block site receives one fragment of this pile.
                    new_dust_per_site += b.count as f64 * shifted.exp();
                } else {
                    pooled
                        .entry(quantize(shifted))
                        .and_modify(|e| e.count += b.count)
                        .or_insert(Bucket { count: b.count, log_size: shifted });
                }
            }
        }
        let dust_each = old_dust / k as f64 + new_dust_per_site;
        let mut remaining = k;
        for &x in sites {
            remaining -= 1;
            self.sites[x].dust = dust_each;
            self.sites[x].buckets =
                if remaining == 0 { std::mem::take(&mut pooled) } else { pooled.clone() };
        }
    }

    /// Mass at one site: live piles plus dust. Agrees with the co-driven
    /// engine mass to within accumulated rounding.
    pub fn site_mass(&self, x: usize) -> f64 {
        let site = &self.sites[x];
        site.buckets.values().map(|b| b.count as f64 * b.log_size.exp()).sum::<f64>() + site.dust
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.n).map(|x| self.site_mass(x)).sum()
    }

    pub fn total_dust(&self) -> f64 {
        self.sites.iter().map(|s| s.dust).sum()
    }

    /// Number of live buckets across all sites.
    pub fn bucket_count(&self) -> usize {
        self.sites.iter().map(|s| s.buckets.len()).sum()
    }

    /// The (quantized log-size, count) pairs at one site, smallest first.
    pub fn site_buckets(&self, x: usize) -> impl Iterator<Item = (&i64, &Bucket)> {
        self.sites[x].buckets.iter()
    }

    /// Sorted multiset of quantized log sizes at each site (counts expanded);
    /// the aggregate/literal comparison hook.
    pub fn site_size_multisets(&self) -> Vec<Vec<i64>> {
        self.sites
            .iter()
            .map(|s| {
                let mut v = Vec::new();
                for (&key, b) in &s.buckets {
                    v.extend(std::iter::repeat_n(key, b.count as usize));
                }
                v
            })
            .collect()
    }

    /// Total mass in piles of size >= theta. Errors below the dust floor,
    /// where swept piles make the answer ill-defined; thresholds above 1
    /// trivially return 0.
    pub fn thresholded_mass(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Domain(format!("threshold {theta} must be positive")));
        }
        let lt = theta.ln();
        if lt < self.floor_log - LOG_QUANTUM {
            return Err(Error::Domain(format!(
                "threshold {theta} lies below the dust floor {}",
                self.floor_log.exp()
            )));
        }
        let cut = lt - LOG_QUANTUM;
        let mut mass = 0.0;
        for site in &self.sites {
            for b in site.buckets.values() {
                if b.log_size >= cut {
                    mass += b.count as f64 * b.log_size.exp();
                }
            }
        }
        Ok(mass)
    }

    /// Certified total-variation lower bound from big piles: with
    /// `w = thresholded_mass(a/n)`, returns `1 - eps - 1/a` when
    /// `w > 1 - eps` and 0 otherwise.
    pub fn tv_lower_bound(&self, a: f64, eps: f64) -> Result<f64> {
        if !(a > 1.0) || !a.is_finite() {
            return Err(Error::Domain(format!("pile-size scale a = {a} must exceed 1")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps = {eps} must lie in (0, 1)")));
        }
        let w = self.thresholded_mass(a / self.n as f64)?;
        if w > 1.0 - eps {
            Ok(1.0 - eps - 1.0 / a)
        } else {
            Ok(0.0)
        }
    }

    /// Mass per generation for a deterministic-k run: generation j holds the
    /// piles of size `k^{-j}`. Errors if any live pile size is not a power
    /// of 1/k (i.e. the run used a non-deterministic spec).
    pub fn generation_histogram(&self, k: usize) -> Result<GenerationHistogram> {
        if k < 2 {
            return Err(Error::Domain(format!("generation base k = {k} must be at least 2")));
        }
        let ln_k = (k as f64).ln();
        let mut masses: BTreeMap<u64, f64> = BTreeMap::new();
        for site in &self.sites {
            for b in site.buckets.values() {
                let g = -b.log_size / ln_k;
                let j = g.round();
                if (g - j).abs() > 1e-6 || j < 0.0 {
                    return Err(Error::UnsupportedMode(format!(
                        "pile of log size {} is not a power of 1/{k}; generation histograms \
                         require a deterministic-k run",
                        b.log_size
                    )));
                }
                *masses.entry(j as u64).or_default() += b.count as f64 * b.log_size.exp();
            }
        }
        Ok(GenerationHistogram { masses, dust: self.total_dust() })
    }
}

/// Worst-case number of live buckets an aggregate ledger over this spec can
/// hold (distinct size multisets above the floor, per site, times n). Used
/// as an upfront admission check: configs whose worst case exceeds the
/// budget are refused instead of degrading midway.
pub fn worst_case_buckets(spec: &BlockSizeSpec, dust_floor: f64) -> u128 {
    let depth = -dust_floor.ln();
    let mut per_site: u128 = 1;
    for &k in spec.pmf().keys() {
        let levels = (depth / (k as f64).ln()).floor() as u128 + 1;
        per_site = per_site.saturating_mul(levels);
    }
    (spec.n() as u128).saturating_mul(per_site)
}

/// Mass per generation (piles of size `k^{-j}`), with sub-floor mass
/// reported separately as dust.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationHistogram {
    pub masses: BTreeMap<u64, f64>,
    pub dust: f64,
}

impl GenerationHistogram {
    pub fn mass_at(&self, j: u64) -> f64 {
        self.masses.get(&j).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum::<f64>() + self.dust
    }
}

/// CSV with header `t,j,mass`: one row per generation per recorded time,
/// with the below-floor mass as a final `dust` row for each time.
pub fn write_histogram_csv<W: Write>(rows: &[(u64, GenerationHistogram)], mut w: W) -> Result<()> {
    writeln!(w, "t,j,mass")?;
    for (t, h) in rows {
        for (j, m) in &h.masses {
            writeln!(w, "{t},{j},{m}")?;
        }
        writeln!(w, "{t},dust,{}", h.dust)?;
    }
    Ok(())
}
