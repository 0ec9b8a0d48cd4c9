//! Marked infinitesimal chunks and the direct pile-size sampler.
//!
//! A mark tags one infinitesimal chunk of mass and follows its pile lineage:
//! when a block hits the mark's site, the pile splits and the mark picks a
//! uniform fragment, so its size divides by the block size and its new site
//! is uniform on the block. The position of a mark is exactly the dual
//! random walk, and its log size is a sum of `-log Y` over the hitting
//! events with `Y` size-biased — which [`PileSizeSampler`] exploits to draw
//! pile sizes without simulating the system at all.

use rand::{Rng, RngExt};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use std::io::Write;

use crate::engine::{BlockSample, BlockSampler};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamPurpose};
use crate::sizespec::{BlockSizeSpec, SizeBiasedLaw};

/// A marked chunk: current site, log of its pile's size, and how many
/// averaging events have hit it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkMark {
    pub site: usize,
    /// log |pile| in nats; non-positive, and non-increasing along any path.
    pub log_size: f64,
    pub splits: u64,
}

impl ChunkMark {
    pub fn new(x0: usize) -> Self {
        ChunkMark { site: x0, log_size: 0.0, splits: 0 }
    }

    pub fn size(&self) -> f64 {
        self.log_size.exp()
    }

    /// Advance through one block: a hit divides the pile size by the block
    /// size and relocates the mark uniformly on the block (the fragment
    /// permutation marginalizes to a uniform site); a miss changes nothing.
    pub fn step<R: Rng + ?Sized>(&mut self, block: &BlockSample, rng: &mut R) {
        self.step_sites(block.sites(), rng);
    }

    /// Same as [`step`](Self::step) over a sorted slice of block sites.
    pub fn step_sites<R: Rng + ?Sized>(&mut self, sites: &[usize], rng: &mut R) {
        if sites.binary_search(&self.site).is_ok() {
            let k = sites.len();
            self.log_size -= (k as f64).ln();
            self.splits += 1;
            self.site = sites[rng.random_range(0..k)];
        }
    }
}

/// Two marks co-evolved through one block stream.
///
/// While the marks share a pile they share every hit: each independently
/// picks a fragment, landing together (same fragment, hence same site) with
/// probability 1/k and otherwise on a uniform ordered pair of distinct
/// block sites. Once their piles differ they can never rejoin a common pile
/// — though they may well occupy the same site — and each then reacts to
/// blocks on its own.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedChunks {
    pub first: ChunkMark,
    pub second: ChunkMark,
    pub same_pile: bool,
}

impl PairedChunks {
    /// Both marks in the unit pile at `x0`.
    pub fn new(x0: usize) -> Self {
        PairedChunks { first: ChunkMark::new(x0), second: ChunkMark::new(x0), same_pile: true }
    }

    pub fn step_sites<R: Rng + ?Sized>(&mut self, sites: &[usize], rng: &mut R) {
        if self.same_pile {
            debug_assert_eq!(self.first.site, self.second.site);
            if sites.binary_search(&self.first.site).is_err() {
                return;
            }
            let k = sites.len();
            let ln_k = (k as f64).ln();
            for mark in [&mut self.first, &mut self.second] {
                mark.log_size -= ln_k;
                mark.splits += 1;
            }
            if rng.random_range(0..k) == 0 {
                // Same fragment: still one pile, at a common uniform site.
                let s = sites[rng.random_range(0..k)];
                self.first.site = s;
                self.second.site = s;
            } else {
                // Distinct fragments land on a uniform ordered pair of
                // distinct sites; the split is permanent.
                let i = rng.random_range(0..k);
                let mut j = rng.random_range(0..k - 1);
                if j >= i {
                    j += 1;
                }
                self.first.site = sites[i];
                self.second.site = sites[j];
                self.same_pile = false;
            }
        } else {
            self.first.step_sites(sites, rng);
            self.second.step_sites(sites, rng);
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, block: &BlockSample, rng: &mut R) {
        self.step_sites(block.sites(), rng);
    }
}

/// Draws the law of a marked chunk's log size at time t directly: the number
/// of hits is Binomial(t, E[X]/n) and each hit divides the size by an
/// independent size-biased block size.
#[derive(Debug, Clone)]
pub struct PileSizeSampler {
    hits: Binomial,
    size_biased: SizeBiasedLaw,
}

impl PileSizeSampler {
    pub fn new(spec: &BlockSizeSpec, t: u64) -> Result<Self> {
        let p = spec.mean() / spec.n() as f64;
        let hits = Binomial::new(t, p)
            .map_err(|e| Error::Domain(format!("hit count Binomial({t}, {p}): {e}")))?;
        Ok(PileSizeSampler { hits, size_biased: spec.size_biased() })
    }

    pub fn sample_log_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let hits = self.hits.sample(rng);
        let mut log_size = 0.0;
        for _ in 0..hits {
            log_size -= (self.size_biased.sample(rng) as f64).ln();
        }
        log_size
    }
}

/// Monte Carlo estimate of the probability that two marks started in one
/// pile occupy the same site at time t with both pile sizes below theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeetingEstimate {
    pub t: u64,
    pub theta: f64,
    pub pairs: u64,
    pub estimate: f64,
    pub stderr: f64,
    /// The certified ceiling theta + 1/n.
    pub bound: f64,
}

impl MeetingEstimate {
    pub fn satisfies_bound(&self) -> bool {
        self.estimate <= self.bound + 3.0 * self.stderr
    }
}

/// Co-evolve `pairs` independent mark pairs from the unit pile at site 0 for
/// t steps and estimate `P(same site, both sizes < theta)`.
///
/// Each pair runs on its own block stream keyed by (`master_seed`, pair
/// index), so the estimate is reproducible and independent of thread
/// scheduling.
pub fn meeting_probe(
    spec: &BlockSizeSpec,
    t: u64,
    theta: f64,
    pairs: u64,
    master_seed: u64,
) -> Result<MeetingEstimate> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Domain(format!("theta = {theta} must lie in (0, 1]")));
    }
    if pairs == 0 {
        return Err(Error::Domain("meeting probe needs at least one pair".into()));
    }
    let n = spec.n();
    let log_theta = theta.ln();
    let hits: u64 = (0..pairs)
        .into_par_iter()
        .map(|pair| {
            let mut size_rng = stream_rng(master_seed, pair, StreamPurpose::BlockSizes);
            let mut site_rng = stream_rng(master_seed, pair, StreamPurpose::BlockSites);
            let mut chunk_rng = stream_rng(master_seed, pair, StreamPurpose::Chunks);
            let mut sampler = BlockSampler::new(spec);
            let mut marks = PairedChunks::new(0);
            let mut sites = Vec::new();
            for _ in 0..t {
                sampler.sample_into(&mut sites, &mut size_rng, &mut site_rng);
                marks.step_sites(&sites, &mut chunk_rng);
            }
            let met = marks.first.site == marks.second.site
                && marks.first.log_size < log_theta
                && marks.second.log_size < log_theta;
            met as u64
        })
        .sum();
    let estimate = hits as f64 / pairs as f64;
    let stderr = (estimate * (1.0 - estimate) / pairs as f64).sqrt();
    Ok(MeetingEstimate { t, theta, pairs, estimate, stderr, bound: theta + 1.0 / n as f64 })
}

/// CSV with header `t,theta,estimate,stderr,bound`.
pub fn write_meeting_csv<W: Write>(rows: &[MeetingEstimate], mut w: W) -> Result<()> {
    writeln!(w, "t,theta,estimate,stderr,bound")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.t, r.theta, r.estimate, r.stderr, r.bound)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi_square_gof;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn miss_leaves_mark_unchanged() {
        let mut mark = ChunkMark::new(0);
        let block = BlockSample::new(vec![1, 2]).unwrap();
        let mut rng = stream_rng(1, 0, StreamPurpose::Chunks);
        mark.step(&block, &mut rng);
        assert_eq!(mark, ChunkMark::new(0));
    }

    #[test]
    fn hit_divides_size_and_relocates_uniformly() {
        let block = BlockSample::new(vec![0, 2, 5]).unwrap();
        let mut rng = stream_rng(2, 0, StreamPurpose::Chunks);
        let mut counts = [0u64; 3];
        let samples = 30_000;
        for _ in 0..samples {
            let mut mark = ChunkMark::new(0);
            mark.step(&block, &mut rng);
            assert_close(mark.log_size, -(3f64).ln(), 1e-15);
            assert_eq!(mark.splits, 1);
            let pos = block.sites().iter().position(|&s| s == mark.site).unwrap();
            counts[pos] += 1;
        }
        let gof = chi_square_gof(&counts, &[1.0 / 3.0; 3]).unwrap();
        assert!(gof.p_value > 0.001, "landing sites not uniform: p = {}", gof.p_value);
    }

    #[test]
    fn sizes_never_increase_along_a_path() {
        let spec = BlockSizeSpec::from_table(12, &[(2, 0.5), (5, 0.5)]).unwrap();
        let mut sampler = BlockSampler::new(&spec);
        let mut rng = stream_rng(3, 0, StreamPurpose::Chunks);
        let mut mark = ChunkMark::new(0);
        let mut prev = 0.0;
        for _ in 0..400 {
            let block = sampler.sample(&mut rng);
            mark.step(&block, &mut rng);
            assert!(mark.log_size <= prev + 1e-15);
            prev = mark.log_size;
        }
        assert!(mark.splits > 0, "400 steps at n=12 should hit the mark");
    }

    #[test]
    fn direct_sampler_t0_is_unit_size() {
        let spec = BlockSizeSpec::deterministic(10, 3).unwrap();
        let sampler = PileSizeSampler::new(&spec, 0).unwrap();
        let mut rng = stream_rng(4, 0, StreamPurpose::Chunks);
        for _ in 0..10 {
            assert_eq!(sampler.sample_log_size(&mut rng), 0.0);
        }
    }

    #[test]
    fn direct_sampler_deterministic_k_is_binomial() {
        // X = k always: log sizes are multiples of log k and the hit count
        // is Binomial(t, k/n); check the mean within five standard errors.
        let (n, k, t) = (20usize, 4usize, 30u64);
        let spec = BlockSizeSpec::deterministic(n, k).unwrap();
        let sampler = PileSizeSampler::new(&spec, t).unwrap();
        let mut rng = stream_rng(5, 0, StreamPurpose::Chunks);
        let samples = 40_000;
        let ln_k = (k as f64).ln();
        let mut total_hits = 0.0;
        for _ in 0..samples {
            let ls = sampler.sample_log_size(&mut rng);
            let g = -ls / ln_k;
            assert_close(g, g.round(), 1e-9);
            total_hits += g.round();
        }
        let p = k as f64 / n as f64;
        let mean = total_hits / samples as f64;
        let expect = t as f64 * p;
        let se = (t as f64 * p * (1.0 - p) / samples as f64).sqrt();
        assert_close(mean, expect, 5.0 * se);
    }

    #[test]
    fn chunk_law_matches_direct_sampler_small_case() {
        // n=3, X=2, t=2: exact law of the pile size is
        // {1: 1/9, 1/2: 4/9, 1/4: 4/9}. Both the stream-driven chunk and
        // the direct sampler must reproduce it (chi-square, p > 0.001).
        let spec = BlockSizeSpec::deterministic(3, 2).unwrap();
        let exact = [1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0];
        let samples = 100_000u64;
        let ln2 = 2f64.ln();

        let mut driven = [0u64; 3];
        for s in 0..samples {
            let mut size_rng = stream_rng(6, s, StreamPurpose::BlockSizes);
            let mut site_rng = stream_rng(6, s, StreamPurpose::BlockSites);
            let mut chunk_rng = stream_rng(6, s, StreamPurpose::Chunks);
            let mut sampler = BlockSampler::new(&spec);
            let mut mark = ChunkMark::new(0);
            let mut sites = Vec::new();
            for _ in 0..2 {
                sampler.sample_into(&mut sites, &mut size_rng, &mut site_rng);
                mark.step_sites(&sites, &mut chunk_rng);
            }
            driven[mark.splits as usize] += 1;
        }
        let gof = chi_square_gof(&driven, &exact).unwrap();
        assert!(gof.p_value > 0.001, "driven law off: {driven:?}, p = {}", gof.p_value);

        let direct_sampler = PileSizeSampler::new(&spec, 2).unwrap();
        let mut rng = stream_rng(7, 0, StreamPurpose::Chunks);
        let mut direct = [0u64; 3];
        for _ in 0..samples {
            let g = (-direct_sampler.sample_log_size(&mut rng) / ln2).round() as usize;
            direct[g] += 1;
        }
        let gof = chi_square_gof(&direct, &exact).unwrap();
        assert!(gof.p_value > 0.001, "direct law off: {direct:?}, p = {}", gof.p_value);
    }

    #[test]
    fn paired_chunks_share_hits_while_co_piled() {
        let block = BlockSample::new(vec![0, 1, 4]).unwrap();
        let mut rng = stream_rng(8, 0, StreamPurpose::Chunks);
        let (mut same_site_and_pile, mut separated) = (0u64, 0u64);
        for _ in 0..30_000 {
            let mut pair = PairedChunks::new(0);
            pair.step(&block, &mut rng);
            // One shared hit: both sizes divide by 3 regardless of fragments.
            assert_close(pair.first.log_size, -(3f64).ln(), 1e-15);
            assert_close(pair.second.log_size, -(3f64).ln(), 1e-15);
            if pair.same_pile {
                assert_eq!(pair.first.site, pair.second.site);
                same_site_and_pile += 1;
            } else {
                assert_ne!(pair.first.site, pair.second.site);
                separated += 1;
            }
        }
        // Same fragment with probability 1/3.
        let gof = chi_square_gof(
            &[same_site_and_pile, separated],
            &[1.0 / 3.0, 2.0 / 3.0],
        )
        .unwrap();
        assert!(gof.p_value > 0.001, "fragment split off: p = {}", gof.p_value);
    }

    #[test]
    fn meeting_probe_t0_is_zero() {
        let spec = BlockSizeSpec::deterministic(6, 2).unwrap();
        let probe = meeting_probe(&spec, 0, 0.5, 1000, 9).unwrap();
        assert_eq!(probe.estimate, 0.0);
        // Sizes are exactly 1 at t=0, so even theta = 1 gives zero.
        let probe = meeting_probe(&spec, 0, 1.0, 1000, 9).unwrap();
        assert_eq!(probe.estimate, 0.0);
    }

    #[test]
    fn meeting_probe_matches_enumeration_at_n4_t1() {
        // n=4, X=2, t=1, theta=1: the block hits site 0 with probability
        // 1/2 (sizes then 1/2 < 1), and the marks pick the same fragment
        // with probability 1/2 — exact meeting probability 1/4.
        let spec = BlockSizeSpec::deterministic(4, 2).unwrap();
        let probe = meeting_probe(&spec, 1, 1.0, 40_000, 10).unwrap();
        assert_close(probe.estimate, 0.25, 3.0 * probe.stderr.max(1e-4));
        assert_close(probe.bound, 1.25, 1e-15);
    }

    #[test]
    fn meeting_probe_respects_bound() {
        let spec = BlockSizeSpec::deterministic(50, 2).unwrap();
        let probe = meeting_probe(&spec, 50, 0.1, 20_000, 11).unwrap();
        assert!(
            probe.satisfies_bound(),
            "estimate {} above {} + 3se",
            probe.estimate,
            probe.bound
        );
        assert_close(probe.bound, 0.1 + 0.02, 1e-15);
    }

    #[test]
    fn meeting_probe_rejects_bad_arguments() {
        let spec = BlockSizeSpec::deterministic(6, 2).unwrap();
        assert!(meeting_probe(&spec, 1, 0.0, 100, 0).is_err());
        assert!(meeting_probe(&spec, 1, 1.5, 100, 0).is_err());
        assert!(meeting_probe(&spec, 1, 0.5, 0, 0).is_err());
    }

    #[test]
    fn meeting_csv_format() {
        let row = MeetingEstimate {
            t: 7,
            theta: 0.5,
            pairs: 100,
            estimate: 0.25,
            stderr: 0.04330127018922193,
            bound: 0.52,
        };
        let mut buf = Vec::new();
        write_meeting_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,theta,estimate,stderr,bound\n7,0.5,0.25,0.04330127018922193,0.52\n"
        );
    }
}
