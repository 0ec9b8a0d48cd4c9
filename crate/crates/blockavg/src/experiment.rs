//! Replicated experiment runs: parallel replicas, order-insensitive
//! aggregation, CSV/manifest outputs, and mixing-time estimation.
//!
//! Determinism contract: a (config, seed) pair fixes every output byte of
//! the CSVs. Each replica draws from its own counter-keyed streams, results
//! merge through sorted sample vectors, and floats print through their
//! shortest round-trip form — so thread scheduling never shows through.
//! The run manifest (wall time and similar) is deliberately outside the
//! contract.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentPlan, ResolvedSchedule, ScheduleRow};
use crate::engine::{BlockSampler, MassDistribution, StartState};
use crate::error::{Error, Result};
use crate::piles::chunk::ChunkMark;
use crate::piles::{write_histogram_csv, GenerationHistogram, PileLedger};
use crate::rng::{stream_rng, StreamPurpose};
use crate::stats::SampleSummary;

/// Functionals of one replica at one scheduled time; the optional members
/// follow the enabled instrumentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSample {
    /// Label time: absolute step count, or offset past tau_start in
    /// tau-relative runs.
    pub t: u64,
    pub d_tv: f64,
    pub entropy: f64,
    pub l2_sq: f64,
    pub max_mass: f64,
    /// Ledger mass in piles of size >= glb_a/n.
    pub w: Option<f64>,
    /// Certified total-variation lower bound for this realization.
    pub glb: Option<f64>,
    /// How many of the replica's marked chunks have size >= the chunk
    /// threshold.
    pub chunks_big: Option<u64>,
}

/// Everything one replica produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRun {
    pub replica: u64,
    pub tau_start: Option<u64>,
    /// Set when the schedule was cut short (horizon or tau-wait cap).
    pub truncated: bool,
    pub points: Vec<PointSample>,
    pub histograms: Vec<(u64, GenerationHistogram)>,
}

impl ReplicaRun {
    /// CSV with the fixed header
    /// `t,d_tv,entropy,l2_sq,max_mass,w,glb,chunks_big` (blank optionals).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,d_tv,entropy,l2_sq,max_mass,w,glb,chunks_big")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                p.t,
                p.d_tv,
                p.entropy,
                p.l2_sq,
                p.max_mass,
                opt(p.w),
                opt(p.glb),
                p.chunks_big.map(|c| c.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Run one replica of the plan. Public for the test suites; ordinary use
/// goes through [`run_experiment`].
pub fn run_replica(plan: &ExperimentPlan, replica: u64) -> Result<ReplicaRun> {
    let seed = plan.config.master_seed;
    let mut size_rng = stream_rng(seed, replica, StreamPurpose::BlockSizes);
    let mut site_rng = stream_rng(seed, replica, StreamPurpose::BlockSites);
    let mut chunk_rng = stream_rng(seed, replica, StreamPurpose::Chunks);

    let n = plan.spec.n();
    let mut eta = plan.start.build(n);
    let mut sampler = BlockSampler::new(&plan.spec);
    let mut ledger = match &plan.ledger {
        Some(lp) => Some(PileLedger::from_start(n, plan.start, Some(lp.dust_floor))?),
        None => None,
    };
    let mut chunks: Vec<ChunkMark> = match &plan.chunks {
        Some(cp) => (0..cp.per_replica)
            .map(|_| ChunkMark::new(chunk_start_site(plan.start, &mut chunk_rng)))
            .collect(),
        None => Vec::new(),
    };

    let times = plan.schedule.distinct_times();
    let tracked = plan.start.tracked_site();
    let mut points = Vec::with_capacity(times.len());
    let mut histograms = Vec::new();
    let mut sites: Vec<usize> = Vec::new();
    let mut tau_start = None;

    let measure = |t: u64,
                       eta: &MassDistribution,
                       ledger: &Option<PileLedger>,
                       chunks: &[ChunkMark],
                       histograms: &mut Vec<(u64, GenerationHistogram)>|
     -> Result<PointSample> {
        let (mut w, mut glb) = (None, None);
        if let (Some(lp), Some(ledger)) = (&plan.ledger, ledger) {
            w = Some(ledger.thresholded_mass(lp.glb_a / n as f64)?);
            glb = Some(ledger.tv_lower_bound(lp.glb_a, lp.glb_eps)?);
            if let Some(base) = lp.histogram_base {
                histograms.push((t, ledger.generation_histogram(base)?));
            }
        }
        let chunks_big = plan.chunks.as_ref().map(|cp| {
            let cut = cp.threshold.ln() - 1e-12;
            chunks.iter().filter(|m| m.log_size >= cut).count() as u64
        });
        Ok(PointSample {
            t,
            d_tv: eta.tv_distance(),
            entropy: eta.relative_entropy(),
            l2_sq: eta.l2_sq(),
            max_mass: eta.max_mass(),
            w,
            glb,
            chunks_big,
        })
    };

    // One co-driven step across every enabled structure.
    macro_rules! step {
        () => {{
            sampler.sample_into(&mut sites, &mut size_rng, &mut site_rng);
            eta.average_sites(&sites);
            if let Some(ledger) = ledger.as_mut() {
                ledger.apply_sites(&sites);
            }
            for mark in chunks.iter_mut() {
                mark.step_sites(&sites, &mut chunk_rng);
            }
            sites.binary_search(&tracked).is_ok()
        }};
    }

    match &plan.schedule {
        ResolvedSchedule::Absolute(_) => {
            let last = *times.last().expect("validated nonempty");
            let t_max = plan.horizon.map_or(last, |h| h.min(last));
            let truncated = last > t_max;
            let mut next = 0usize;
            while next < times.len() && times[next] == 0 {
                points.push(measure(0, &eta, &ledger, &chunks, &mut histograms)?);
                next += 1;
            }
            for t in 1..=t_max {
                let hit = step!();
                if hit && tau_start.is_none() {
                    tau_start = Some(t);
                }
                if next < times.len() && times[next] == t {
                    points.push(measure(t, &eta, &ledger, &chunks, &mut histograms)?);
                    next += 1;
                }
            }
            Ok(ReplicaRun { replica, tau_start, truncated, points, histograms })
        }
        ResolvedSchedule::TauRelative(_) => {
            for t in 1..=plan.tau_wait_cap {
                let hit = step!();
                if hit {
                    tau_start = Some(t);
                    break;
                }
            }
            if tau_start.is_none() {
                // Astronomically unlikely under the model; reported as a
                // truncated replica rather than poisoning the aggregate.
                return Ok(ReplicaRun {
                    replica,
                    tau_start: None,
                    truncated: true,
                    points,
                    histograms,
                });
            }
            let mut next = 0usize;
            while next < times.len() && times[next] == 0 {
                points.push(measure(0, &eta, &ledger, &chunks, &mut histograms)?);
                next += 1;
            }
            let last = *times.last().expect("validated nonempty");
            for offset in 1..=last {
                let _ = step!();
                if next < times.len() && times[next] == offset {
                    points.push(measure(offset, &eta, &ledger, &chunks, &mut histograms)?);
                    next += 1;
                }
            }
            Ok(ReplicaRun { replica, tau_start, truncated: false, points, histograms })
        }
    }
}

fn chunk_start_site<R: rand::Rng + ?Sized>(start: StartState, rng: &mut R) -> usize {
    use rand::RngExt;
    match start {
        StartState::Dirac { x0 } => x0,
        // A uniform chunk of the spread start lies at a uniform one of the
        // k charged sites.
        StartState::Spread { k } => rng.random_range(0..k),
    }
}

/// One schedule row aggregated over completed replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub beta: Option<f64>,
    pub t: u64,
    pub replicas: u64,
    pub d_tv: SampleSummary,
    pub entropy: SampleSummary,
    pub l2_sq: SampleSummary,
    pub max_mass_mean: f64,
    pub w: Option<SampleSummary>,
    pub glb: Option<SampleSummary>,
    /// Pooled fraction of marked chunks at or above the threshold, with
    /// its binomial standard error.
    pub chunk_fraction: Option<(f64, f64)>,
    /// Reference curve value at this row's beta.
    pub profile: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub rows: Vec<AggregateRow>,
}

impl AggregateResult {
    /// CSV with one row per schedule row; fixed header, blank optionals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "beta,t,replicas,d_tv_mean,d_tv_stderr,d_tv_q05,d_tv_q25,d_tv_q50,d_tv_q75,\
             d_tv_q95,entropy_mean,entropy_stderr,l2_mean,l2_stderr,max_mass_mean,\
             w_mean,w_stderr,glb_mean,glb_stderr,chunk_frac,chunk_frac_stderr,profile"
        )?;
        for r in &self.rows {
            let q = &r.d_tv.quantiles;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                opt(r.beta),
                r.t,
                r.replicas,
                r.d_tv.mean,
                r.d_tv.stderr,
                q[0],
                q[1],
                q[2],
                q[3],
                q[4],
                r.entropy.mean,
                r.entropy.stderr,
                r.l2_sq.mean,
                r.l2_sq.stderr,
                r.max_mass_mean,
                opt(r.w.as_ref().map(|s| s.mean)),
                opt(r.w.as_ref().map(|s| s.stderr)),
                opt(r.glb.as_ref().map(|s| s.mean)),
                opt(r.glb.as_ref().map(|s| s.stderr)),
                opt(r.chunk_fraction.map(|c| c.0)),
                opt(r.chunk_fraction.map(|c| c.1)),
                opt(r.profile),
            )?;
        }
        Ok(())
    }
}

/// A full run's outcome.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub aggregate: AggregateResult,
    pub replicas: Vec<ReplicaRun>,
    /// Replica-mean mass per generation at each recorded time, when
    /// histograms were enabled.
    pub mean_histograms: Option<Vec<(u64, GenerationHistogram)>>,
    /// Replicas contributing samples.
    pub completed: u64,
    /// Replicas dropped by the tau-wait cap.
    pub skipped: u64,
    /// Replicas never started under the soft time limit.
    pub unstarted: u64,
    pub truncated: bool,
    pub wall: Duration,
}

/// Run every replica of the plan (in parallel) and aggregate.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    match plan.config.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
            pool.install(|| run_experiment_inner(plan))
        }
        None => run_experiment_inner(plan),
    }
}

fn run_experiment_inner(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let started = Instant::now();
    let outcomes: Vec<Option<ReplicaRun>> = (0..plan.config.replicas)
        .into_par_iter()
        .map(|replica| {
            if let Some(limit) = plan.time_limit {
                if started.elapsed() > limit {
                    return Ok(None);
                }
            }
            run_replica(plan, replica).map(Some)
        })
        .collect::<Result<_>>()?;

    let unstarted = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let replicas: Vec<ReplicaRun> = outcomes.into_iter().flatten().collect();
    let skipped = replicas.iter().filter(|r| r.points.is_empty()).count() as u64;
    let truncated = unstarted > 0 || replicas.iter().any(|r| r.truncated);
    let aggregate = aggregate_rows(plan, &replicas)?;
    let mean_histograms = mean_histograms(plan, &replicas);
    let completed = replicas.iter().filter(|r| !r.points.is_empty()).count() as u64;

    Ok(ExperimentResult {
        aggregate,
        replicas,
        mean_histograms,
        completed,
        skipped,
        unstarted,
        truncated,
        wall: started.elapsed(),
    })
}

fn aggregate_rows(plan: &ExperimentPlan, replicas: &[ReplicaRun]) -> Result<AggregateResult> {
    let times = plan.schedule.distinct_times();
    let mut rows = Vec::with_capacity(plan.schedule.rows().len());
    for &ScheduleRow { beta, t } in plan.schedule.rows() {
        let idx = times.binary_search(&t).expect("schedule row time is recorded");
        // Truncation only ever cuts the tail of a replica's schedule, so a
        // replica contributes to this row iff it recorded index `idx`.
        let samples: Vec<&PointSample> =
            replicas.iter().filter_map(|r| r.points.get(idx)).collect();
        let count = samples.len() as u64;
        let collect = |f: &dyn Fn(&PointSample) -> f64| -> Vec<f64> {
            samples.iter().map(|p| f(p)).collect()
        };
        let d_tv = SampleSummary::from_samples(&collect(&|p| p.d_tv));
        let entropy = SampleSummary::from_samples(&collect(&|p| p.entropy));
        let l2_sq = SampleSummary::from_samples(&collect(&|p| p.l2_sq));
        let max_mass_mean = if count == 0 {
            f64::NAN
        } else {
            collect(&|p| p.max_mass).iter().sum::<f64>() / count as f64
        };
        let w = plan
            .ledger
            .as_ref()
            .map(|_| SampleSummary::from_samples(&collect(&|p| p.w.expect("ledger on"))));
        let glb = plan
            .ledger
            .as_ref()
            .map(|_| SampleSummary::from_samples(&collect(&|p| p.glb.expect("ledger on"))));
        let chunk_fraction = plan.chunks.as_ref().map(|cp| {
            let big: u64 = samples.iter().map(|p| p.chunks_big.expect("chunks on")).sum();
            let total = count * cp.per_replica;
            if total == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let p = big as f64 / total as f64;
                (p, (p * (1.0 - p) / total as f64).sqrt())
            }
        });
        let profile = match (&plan.compare, beta) {
            (Some(curve), Some(beta)) => Some(curve.evaluate(beta)?),
            _ => None,
        };
        rows.push(AggregateRow {
            beta,
            t,
            replicas: count,
            d_tv,
            entropy,
            l2_sq,
            max_mass_mean,
            w,
            glb,
            chunk_fraction,
            profile,
        });
    }
    Ok(AggregateResult { rows })
}

fn mean_histograms(
    plan: &ExperimentPlan,
    replicas: &[ReplicaRun],
) -> Option<Vec<(u64, GenerationHistogram)>> {
    plan.ledger.as_ref()?.histogram_base?;
    let times = plan.schedule.distinct_times();
    let mut merged: Vec<(u64, GenerationHistogram, u64)> = times
        .iter()
        .map(|&t| (t, GenerationHistogram { masses: Default::default(), dust: 0.0 }, 0))
        .collect();
    for r in replicas {
        // Histograms share the recorded prefix of the schedule.
        for (slot, (t, h)) in merged.iter_mut().zip(&r.histograms) {
            debug_assert_eq!(slot.0, *t);
            for (&j, &m) in &h.masses {
                *slot.1.masses.entry(j).or_insert(0.0) += m;
            }
            slot.1.dust += h.dust;
            slot.2 += 1;
        }
    }
    Some(
        merged
            .into_iter()
            .filter(|(_, _, c)| *c > 0)
            .map(|(t, mut h, c)| {
                for m in h.masses.values_mut() {
                    *m /= c as f64;
                }
                h.dust /= c as f64;
                (t, h)
            })
            .collect(),
    )
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    master_seed: u64,
    replicas_requested: u64,
    replicas_completed: u64,
    replicas_skipped: u64,
    replicas_unstarted: u64,
    truncated: bool,
    wall_secs: f64,
    /// Largest d_tv standard error over the schedule (the achieved MC
    /// resolution).
    max_d_tv_stderr: f64,
    config: &'a crate::config::ExperimentConfig,
}

/// Write aggregate.csv, optional per-replica CSVs, optional histogram.csv
/// and manifest.toml under the given directory.
pub fn write_outputs(plan: &ExperimentPlan, result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut agg = Vec::new();
    result.aggregate.write_csv(&mut agg)?;
    std::fs::write(dir.join("aggregate.csv"), agg)?;

    if plan.config.output.per_replica {
        for r in &result.replicas {
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            std::fs::write(dir.join(format!("replica_{:05}.csv", r.replica)), buf)?;
        }
    }
    if let Some(h) = &result.mean_histograms {
        let mut buf = Vec::new();
        write_histogram_csv(h, &mut buf)?;
        std::fs::write(dir.join("histogram.csv"), buf)?;
    }

    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        master_seed: plan.config.master_seed,
        replicas_requested: plan.config.replicas,
        replicas_completed: result.completed,
        replicas_skipped: result.skipped,
        replicas_unstarted: result.unstarted,
        truncated: result.truncated,
        wall_secs: result.wall.as_secs_f64(),
        max_d_tv_stderr: result
            .aggregate
            .rows
            .iter()
            .map(|r| r.d_tv.stderr)
            .fold(0.0, f64::max),
        config: &plan.config,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// The mixing-time estimate: the first scheduled time whose mean distance
/// dropped below eps.
#[derive(Debug, Clone, PartialEq)]
pub struct TmixReport {
    pub eps: f64,
    /// (t, mean, stderr) over the schedule — the evidence base.
    pub rows: Vec<(u64, f64, f64)>,
    pub crossing: Option<TmixCrossing>,
    /// The underlying run hit a resource cap, so the scan may be partial.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmixCrossing {
    /// First scheduled time with mean < eps.
    pub t_mix: u64,
    /// Last scheduled time before it with mean >= eps (the bracket's other
    /// end), unless the first row already crossed.
    pub lower: Option<u64>,
    /// Both bracket ends clear eps by three standard errors.
    pub confident: bool,
}

/// Run the plan and scan its schedule for the eps-crossing of the mean
/// total-variation distance. An absent crossing is a report, not an error.
pub fn estimate_tmix(plan: &ExperimentPlan, eps: f64) -> Result<TmixReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} must lie in (0, 1)")));
    }
    let result = run_experiment(plan)?;
    let rows: Vec<(u64, f64, f64)> = result
        .aggregate
        .rows
        .iter()
        .map(|r| (r.t, r.d_tv.mean, r.d_tv.stderr))
        .collect();
    let crossing = rows.iter().position(|&(_, mean, _)| mean < eps).map(|i| {
        let (t_mix, mean, stderr) = rows[i];
        let below_ok = mean + 3.0 * stderr < eps;
        let (lower, above_ok) = if i == 0 {
            (None, false)
        } else {
            let (lt, lmean, lse) = rows[i - 1];
            (Some(lt), lmean - 3.0 * lse >= eps)
        };
        TmixCrossing { t_mix, lower, confident: below_ok && above_ok }
    });
    Ok(TmixReport { eps, rows, crossing, truncated: result.truncated })
}
