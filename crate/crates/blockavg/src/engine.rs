//! Exact-state simulation of the block-average dynamics on the n-simplex.
//!
//! One step samples a block (an i.i.d. size, then a uniform subset of sites
//! of that size) and replaces every mass in the block by the block mean.

use std::io::Write;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::sizespec::BlockSizeSpec;

/// Steps between exact renormalizations of the mass vector; drift over one
/// period is far below the 1e-9 conservation tolerance.
pub const RENORM_INTERVAL: u64 = 1 << 16;

/// Tolerance on total mass; checked at construction and at every functional
/// evaluation point in a trajectory.
pub const MASS_TOL: f64 = 1e-9;

/// A point of the n-simplex: nonnegative masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MassDistribution {
    masses: Vec<f64>,
}

impl MassDistribution {
    /// Unit mass at site `x0`; the worst starting state.
    pub fn dirac(n: usize, x0: usize) -> Self {
        assert!(n >= 2 && x0 < n);
        let mut masses = vec![0.0; n];
        masses[x0] = 1.0;
        MassDistribution { masses }
    }

    /// The uniform (stationary) state.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 2);
        MassDistribution { masses: vec![1.0 / n as f64; n] }
    }

    /// `k` sites of mass `1/k` (sites 0..k): the state right after a point
    /// mass is hit by a block of size k.
    pub fn spread_start(n: usize, k: usize) -> Self {
        assert!(n >= 2 && (2..=n).contains(&k));
        let mut masses = vec![0.0; n];
        for m in masses.iter_mut().take(k) {
            *m = 1.0 / k as f64;
        }
        MassDistribution { masses }
    }

    /// Validated construction from raw masses.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::Domain("a mass distribution needs at least two sites".into()));
        }
        if masses.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::Domain("masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!(
                "masses sum to {total}, deviating from 1 by more than {MASS_TOL}"
            )));
        }
        Ok(MassDistribution { masses })
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn get(&self, x: usize) -> f64 {
        self.masses[x]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Total-variation distance to the uniform state: the sum of positive
    /// parts of `mass - 1/n`. Lies in [0, 1 - 1/n].
    pub fn tv_distance(&self) -> f64 {
        let inv_n = 1.0 / self.masses.len() as f64;
        self.masses.iter().map(|&m| (m - inv_n).max(0.0)).sum()
    }

    /// Relative entropy to the uniform state, `sum eta(x) log(n eta(x))`,
    /// with the 0 log 0 = 0 convention. Equals log n at a point mass.
    pub fn relative_entropy(&self) -> f64 {
        let n = self.masses.len() as f64;
        self.masses
            .iter()
            .map(|&m| if m > 0.0 { m * (n * m).ln() } else { 0.0 })
            .sum()
    }

    /// Squared chi-square/L2 norm `n sum eta(x)^2 - 1`. Equals n - 1 at a
    /// point mass and 0 at uniformity.
    pub fn l2_sq(&self) -> f64 {
        let n = self.masses.len() as f64;
        n * self.masses.iter().map(|&m| m * m).sum::<f64>() - 1.0
    }

    pub fn max_mass(&self) -> f64 {
        self.masses.iter().cloned().fold(0.0, f64::max)
    }

    /// Rescale so masses sum to exactly one.
    pub fn renormalize(&mut self) {
        let total = self.total_mass();
        for m in &mut self.masses {
            *m /= total;
        }
    }

    /// Replace every mass in the block by the block mean (one pass).
    pub fn average_block(&mut self, block: &BlockSample) {
        self.average_sites(block.sites());
    }

    /// Same over a bare slice of distinct sites (driver hot loops).
    pub fn average_sites(&mut self, sites: &[usize]) {
        let sum: f64 = sites.iter().map(|&x| self.masses[x]).sum();
        let mean = sum / sites.len() as f64;
        for &x in sites {
            self.masses[x] = mean;
        }
    }
}

/// A sampled block: sorted, distinct site indices, at least two of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSample {
    sites: Vec<usize>,
}

impl BlockSample {
    pub fn new(mut sites: Vec<usize>) -> Result<Self> {
        sites.sort_unstable();
        if sites.len() < 2 || sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("a block needs at least two distinct sites".into()));
        }
        Ok(BlockSample { sites })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: usize) -> bool {
        self.sites.binary_search(&x).is_ok()
    }
}

/// Draws blocks for a fixed spec: an i.i.d. size from the spec's pmf, then a
/// uniform subset of that size.
///
/// Subset sampling uses Floyd's algorithm for k <= max(n/64, 8) and a
/// partial Fisher-Yates shuffle of a persistent index pool otherwise.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    n: usize,
    spec: BlockSizeSpec,
    pool: Vec<usize>,
}

impl BlockSampler {
    pub fn new(spec: &BlockSizeSpec) -> Self {
        BlockSampler { n: spec.n(), spec: spec.clone(), pool: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fill `out` with a sorted uniform block, drawing the size from
    /// `size_rng` and the subset from `site_rng` (disjoint streams in
    /// experiment runs; pass the same rng twice elsewhere if convenient).
    pub fn sample_into<R1, R2>(&mut self, out: &mut Vec<usize>, size_rng: &mut R1, site_rng: &mut R2)
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        let k = self.spec.sample_size(size_rng);
        self.sample_subset_into(k, out, site_rng);
    }

    /// Uniform subset of fixed size k, sorted.
    pub fn sample_subset_into<R: Rng + ?Sized>(&mut self, k: usize, out: &mut Vec<usize>, rng: &mut R) {
        debug_assert!((2..=self.n).contains(&k));
        out.clear();
        if k == self.n {
            out.extend(0..self.n);
            return;
        }
        if k <= (self.n / 64).max(8) {
            // Floyd: uniform over k-subsets; sorted insertion keeps `out`
            // ordered, and k is small enough that inserts are cheap.
            for j in (self.n - k)..self.n {
                let t = rng.random_range(0..=j);
                match out.binary_search(&t) {
                    Ok(_) => {
                        let pos = out.binary_search(&j).unwrap_err();
                        out.insert(pos, j);
                    }
                    Err(pos) => out.insert(pos, t),
                }
            }
        } else {
            if self.pool.len() != self.n {
                self.pool = (0..self.n).collect();
            }
            for i in 0..k {
                let j = rng.random_range(i..self.n);
                self.pool.swap(i, j);
            }
            out.extend_from_slice(&self.pool[..k]);
            out.sort_unstable();
        }
    }

    /// Convenience allocating form with a single rng for size and subset.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> BlockSample {
        let mut sites = Vec::new();
        let k = self.spec.sample_size(rng);
        self.sample_subset_into(k, &mut sites, rng);
        BlockSample { sites }
    }
}

/// One dynamics step: sample a block, average over it, return the block.
pub fn step<R: Rng + ?Sized>(
    eta: &mut MassDistribution,
    sampler: &mut BlockSampler,
    rng: &mut R,
) -> BlockSample {
    let block = sampler.sample(rng);
    eta.average_block(&block);
    block
}

/// Starting state of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    /// Unit mass at `x0`.
    Dirac { x0: usize },
    /// `k` sites of mass 1/k.
    Spread { k: usize },
}

impl StartState {
    pub fn build(&self, n: usize) -> MassDistribution {
        match *self {
            StartState::Dirac { x0 } => MassDistribution::dirac(n, x0),
            StartState::Spread { k } => MassDistribution::spread_start(n, k),
        }
    }

    /// The site whose first hit defines tau_start.
    pub fn tracked_site(&self) -> usize {
        match *self {
            StartState::Dirac { x0 } => x0,
            StartState::Spread { .. } => 0,
        }
    }
}

/// Functionals recorded at one scheduled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: u64,
    pub d_tv: f64,
    pub entropy: f64,
    pub l2_sq: f64,
    pub max_mass: f64,
}

impl TrajectoryPoint {
    pub fn measure(t: u64, eta: &MassDistribution) -> TrajectoryPoint {
        TrajectoryPoint {
            t,
            d_tv: eta.tv_distance(),
            entropy: eta.relative_entropy(),
            l2_sq: eta.l2_sq(),
            max_mass: eta.max_mass(),
        }
    }
}

/// Time series of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub n: usize,
    pub replica: u64,
    pub points: Vec<TrajectoryPoint>,
    /// First t >= 1 at which the tracked site lay in the sampled block;
    /// None if that never happened before the horizon.
    pub tau_start: Option<u64>,
    /// True when scheduled times beyond the horizon were dropped.
    pub truncated: bool,
}

impl TrajectoryRecord {
    /// CSV with the fixed header `t,d_tv,entropy,l2_sq,max_mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,d_tv,entropy,l2_sq,max_mass")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{},{}", p.t, p.d_tv, p.entropy, p.l2_sq, p.max_mass)?;
        }
        Ok(())
    }
}

/// Run one replica over an increasing schedule of recording times, stepping
/// up to `t_max = min(last scheduled time, horizon cap)`.
///
/// Scheduled times beyond `horizon` (when given) are reported as truncation
/// rather than silently extending the run.
pub fn run_trajectory<R1, R2>(
    spec: &BlockSizeSpec,
    start: StartState,
    times: &[u64],
    horizon: Option<u64>,
    replica: u64,
    size_rng: &mut R1,
    site_rng: &mut R2,
) -> Result<TrajectoryRecord>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    if times.is_empty() {
        return Err(Error::InvalidConfig("empty recording schedule".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("recording schedule must be strictly increasing".into()));
    }
    let n = spec.n();
    let mut eta = start.build(n);
    let tracked = start.tracked_site();
    let last = *times.last().expect("nonempty");
    let t_max = horizon.map_or(last, |h| h.min(last));
    let truncated = last > t_max;

    let mut sampler = BlockSampler::new(spec);
    let mut block_sites: Vec<usize> = Vec::new();
    let mut points = Vec::with_capacity(times.len());
    let mut tau_start = None;
    let mut next_record = 0usize;

    let mut record_if_due = |t: u64, eta: &MassDistribution, next_record: &mut usize| {
        while *next_record < times.len() && times[*next_record] == t {
            debug_assert!((eta.total_mass() - 1.0).abs() <= MASS_TOL);
            points.push(TrajectoryPoint::measure(t, eta));
            *next_record += 1;
        }
    };

    record_if_due(0, &eta, &mut next_record);
    for t in 1..=t_max {
        sampler.sample_into(&mut block_sites, size_rng, site_rng);
        let sum: f64 = block_sites.iter().map(|&x| eta.masses[x]).sum();
        let mean = sum / block_sites.len() as f64;
        for &x in &block_sites {
            eta.masses[x] = mean;
        }
        if tau_start.is_none() && block_sites.binary_search(&tracked).is_ok() {
            tau_start = Some(t);
        }
        if t % RENORM_INTERVAL == 0 {
            eta.renormalize();
        }
        record_if_due(t, &eta, &mut next_record);
    }
    Ok(TrajectoryRecord { n, replica, points, tau_start, truncated })
}
