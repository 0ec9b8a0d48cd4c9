//! Named validation suites: each one measures a family of invariants
//! against exact references or certified bounds and reports machine-readable
//! pass/fail lines.
//!
//! Every suite runs from fixed seeds, so a report is reproducible; the
//! stochastic checks compare Monte Carlo estimates against references at
//! three standard errors.

use crate::config::{ExperimentConfig, ExperimentPlan, ScheduleConfig, StartConfig};
use crate::dualwalk::DualWalk;
use crate::engine::{BlockSampler, MassDistribution};
use crate::error::{Error, Result};
use crate::experiment::run_experiment;
use crate::oracle;
use crate::piles::chunk::{meeting_probe, ChunkMark, PileSizeSampler};
use crate::profiles::{poisson_profile, psi, xi};
use crate::rng::{stream_rng, StreamPurpose};
use crate::sizespec::{BlockSizeSpec, SpecDoc};
use crate::stats::chi_square_gof;

pub const SUITE_NAMES: [&str; 6] =
    ["duality", "l2_identity", "entropy_bounds", "pile_law", "meeting_bound", "profile_math"];

/// One measured quantity against its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    /// `"<="`: measured must not exceed the limit; `">="`: must reach it.
    pub comparison: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl CheckResult {
    fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> CheckResult {
        CheckResult { name: name.into(), measured, comparison: "<=", limit, pass: measured <= limit }
    }

    fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> CheckResult {
        CheckResult { name: name.into(), measured, comparison: ">=", limit, pass: measured >= limit }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// CSV rows `suite,check,comparison,measured,limit,status` for any number of
/// reports (header included).
pub fn render_reports(reports: &[SuiteReport]) -> String {
    let mut out = String::from("suite,check,comparison,measured,limit,status\n");
    for report in reports {
        for c in &report.checks {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                report.suite,
                c.name,
                c.comparison,
                c.measured,
                c.limit,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
    }
    out
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "duality" => duality_suite(),
        "l2_identity" => l2_identity_suite(),
        "entropy_bounds" => entropy_bounds_suite(),
        "pile_law" => pile_law_suite(),
        "meeting_bound" => meeting_bound_suite(),
        "profile_math" => profile_math_suite(),
        other => Err(Error::InvalidConfig(format!(
            "unknown validation suite \"{other}\" (expected one of {})",
            SUITE_NAMES.join(", ")
        ))),
    }
}

pub fn run_all() -> Result<Vec<SuiteReport>> {
    SUITE_NAMES.iter().map(|name| run_suite(name)).collect()
}

/// The three block-size laws every small-n suite exercises.
fn small_specs(n: usize) -> Vec<(String, BlockSizeSpec)> {
    let mut specs = vec![
        (format!("n{n}_fixed2"), BlockSizeSpec::deterministic(n, 2).unwrap()),
        (format!("n{n}_fixed3"), BlockSizeSpec::deterministic(n, 3).unwrap()),
    ];
    specs.push((
        format!("n{n}_mixed23"),
        BlockSizeSpec::from_table(n, &[(2, 0.5), (3, 0.5)]).unwrap(),
    ));
    specs
}

/// A plan for a replicated Dirac-start run with no instrumentation, used by
/// the Monte Carlo checks.
fn mc_plan(
    spec: &BlockSizeSpec,
    replicas: u64,
    seed: u64,
    times: Vec<u64>,
) -> Result<ExperimentPlan> {
    ExperimentConfig {
        master_seed: seed,
        replicas,
        workers: None,
        spec: SpecDoc::from_spec(spec),
        start: StartConfig::Dirac { x0: 0 },
        schedule: ScheduleConfig::Times { times },
        output: Default::default(),
        ledger: Default::default(),
        chunks: Default::default(),
        budget: Default::default(),
        compare: None,
    }
    .plan()
}

/// Expected one-step (and composed three-step) mass vectors from a Dirac
/// start, computed by exhaustive block enumeration, against the dual walk's
/// transition row and closed-form t-step distribution.
fn duality_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for n in 3..=6 {
        for (label, spec) in small_specs(n) {
            let walk = DualWalk::new(&spec);
            let mut worst = 0.0f64;

            let one = oracle::one_step_mean(&spec, &MassDistribution::dirac(n, 0))?;
            let row = walk.transition_row(0)?;
            for x in 0..n {
                worst = worst.max((one.get(x) - row.get(x)).abs());
            }

            // Composition: three exhaustive steps against the closed form.
            let mut mean = MassDistribution::dirac(n, 0);
            for _ in 0..3 {
                mean = oracle::one_step_mean(&spec, &mean)?;
            }
            let closed = walk.distribution_after(0, 3)?;
            for x in 0..n {
                worst = worst.max((mean.get(x) - closed.get(x)).abs());
            }
            checks.push(CheckResult::at_most(label, worst, 1e-12));
        }
    }
    Ok(SuiteReport { suite: "duality", checks })
}

/// One-step mean contraction of the squared L2 distance at the exact rate
/// 1 - 1/t_rel: exhaustively for n <= 8, then a replicated run at n = 100.
fn l2_identity_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for n in 3..=8 {
        let entries: &[(usize, f64)] =
            if n == 3 { &[(2, 0.5), (3, 0.5)] } else { &[(2, 0.5), (3, 0.3), (n, 0.2)] };
        let spec = BlockSizeSpec::from_table(n, entries).unwrap();
        let rate = 1.0 - 1.0 / spec.timescales().relaxation;
        let uneven = {
            let masses: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            let total: f64 = masses.iter().sum();
            MassDistribution::from_masses(masses.iter().map(|m| m / total).collect())?
        };
        let states =
            [MassDistribution::dirac(n, 0), MassDistribution::spread_start(n, 2), uneven];
        let mut worst = 0.0f64;
        for eta in &states {
            let predicted = rate * eta.l2_sq();
            worst = worst.max((oracle::one_step_mean_l2(&spec, eta)? - predicted).abs());
        }
        checks.push(CheckResult::at_most(format!("exhaustive_n{n}"), worst, 1e-10));
    }

    // Monte Carlo at n = 100, X = 2: mean L2 at t in {50, 200} within three
    // standard errors of (1 - 1/t_rel)^t (n - 1).
    let spec = BlockSizeSpec::deterministic(100, 2).unwrap();
    let rate = 1.0 - 1.0 / spec.timescales().relaxation;
    let plan = mc_plan(&spec, 400, 0x11, vec![50, 200])?;
    let result = run_experiment(&plan)?;
    for row in &result.aggregate.rows {
        let predicted = rate.powf(row.t as f64) * 99.0;
        checks.push(CheckResult::at_most(
            format!("mc_n100_t{}", row.t),
            (row.l2_sq.mean - predicted).abs(),
            3.0 * row.l2_sq.stderr,
        ));
    }
    Ok(SuiteReport { suite: "l2_identity", checks })
}

/// Replicated mean relative entropy from a Dirac start stays inside the
/// certified envelope: at least log n (1 - t/t_ent) and at most
/// (1 - 1/t_ent)^t log n, each relaxed by three standard errors.
fn entropy_bounds_suite() -> Result<SuiteReport> {
    let n = 100usize;
    let spec =
        BlockSizeSpec::from_table(n, &[(2, 1.0 / 3.0), (3, 1.0 / 3.0), (4, 1.0 / 3.0)]).unwrap();
    let t_ent = spec.timescales().entropic;
    let log_n = (n as f64).ln();
    let times: Vec<u64> = (0..=12).map(|i| i * 25).collect();
    let plan = mc_plan(&spec, 400, 0x22, times)?;
    let result = run_experiment(&plan)?;
    let mut worst = f64::NEG_INFINITY;
    for row in &result.aggregate.rows {
        let t = row.t as f64;
        let lower = log_n * (1.0 - t / t_ent);
        let upper = (1.0 - 1.0 / t_ent).powf(t) * log_n;
        let slack = 3.0 * row.entropy.stderr;
        let violation = (lower - slack - row.entropy.mean).max(row.entropy.mean - upper - slack);
        worst = worst.max(violation);
    }
    // Tolerance 1e-9 absorbs pure floating-point noise at the exact t = 0
    // endpoint; the statistical slack is the 3-stderr term above.
    Ok(SuiteReport {
        suite: "entropy_bounds",
        checks: vec![CheckResult::at_most("envelope_excess", worst, 1e-9)],
    })
}

/// The pile-size law at n = 3, X = 2, t = 2: engine-driven marks and the
/// direct sampler both match the exact three-atom law, and the exact
/// enumeration agrees with the analytic form.
fn pile_law_suite() -> Result<SuiteReport> {
    let spec = BlockSizeSpec::deterministic(3, 2).unwrap();
    let probs = [1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0]; // sizes 1, 1/2, 1/4
    let classify = |log_size: f64| -> usize {
        let j = (-log_size / 2f64.ln()).round();
        assert!((-log_size / 2f64.ln() - j).abs() < 1e-9, "off-lattice pile size");
        j as usize
    };
    let samples = 100_000u64;
    let mut checks = Vec::new();

    let mut size_rng = stream_rng(0x33, 0, StreamPurpose::BlockSizes);
    let mut site_rng = stream_rng(0x33, 0, StreamPurpose::BlockSites);
    let mut chunk_rng = stream_rng(0x33, 0, StreamPurpose::Chunks);
    let mut sampler = BlockSampler::new(&spec);
    let mut sites = Vec::new();
    let mut counts = [0u64; 3];
    for _ in 0..samples {
        let mut mark = ChunkMark::new(0);
        for _ in 0..2 {
            sampler.sample_into(&mut sites, &mut size_rng, &mut site_rng);
            mark.step_sites(&sites, &mut chunk_rng);
        }
        counts[classify(mark.log_size)] += 1;
    }
    let gof = chi_square_gof(&counts, &probs)?;
    checks.push(CheckResult::at_least("engine_chi_square_p", gof.p_value, 0.001));

    let direct = PileSizeSampler::new(&spec, 2)?;
    let mut counts = [0u64; 3];
    for _ in 0..samples {
        counts[classify(direct.sample_log_size(&mut chunk_rng))] += 1;
    }
    let gof = chi_square_gof(&counts, &probs)?;
    checks.push(CheckResult::at_least("direct_chi_square_p", gof.p_value, 0.001));

    // The two exact derivations of the law agree atom by atom.
    let dp = oracle::chunk_size_law_exact(&spec, 0, 2)?;
    let analytic = oracle::pile_size_law_analytic(&spec, 2);
    let mut worst = (dp.len() as f64 - analytic.len() as f64).abs();
    for (&(la, pa), &(lb, pb)) in dp.iter().zip(&analytic) {
        worst = worst.max((la - lb).abs()).max((pa - pb).abs());
    }
    checks.push(CheckResult::at_most("exact_forms_agree", worst, 1e-12));

    Ok(SuiteReport { suite: "pile_law", checks })
}

/// Pair-meeting probabilities: the exact enumeration on a frozen case, the
/// Monte Carlo probe against the enumeration, and the theta + 1/n ceiling on
/// a grid.
fn meeting_bound_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();

    // Frozen exact case: one step of X = 2 on n = 4 meets with probability
    // (block hit) x (same fragment) = 1/2 x 1/2.
    let spec4 = BlockSizeSpec::deterministic(4, 2).unwrap();
    let exact = oracle::meeting_exact(&spec4, 1, 1.0)?;
    checks.push(CheckResult::at_most("frozen_exact", (exact - 0.25).abs(), 1e-15));

    // Probe vs enumeration on a mixed spec.
    let spec6 = BlockSizeSpec::from_table(6, &[(2, 0.5), (3, 0.5)]).unwrap();
    let exact = oracle::meeting_exact(&spec6, 4, 0.7)?;
    let probe = meeting_probe(&spec6, 4, 0.7, 30_000, 0x44)?;
    checks.push(CheckResult::at_most(
        "probe_vs_exact",
        (probe.estimate - exact).abs(),
        3.0 * probe.stderr + 1e-12,
    ));

    // Ceiling on a grid at n = 50, X = 2.
    let spec50 = BlockSizeSpec::deterministic(50, 2).unwrap();
    for t in [50u64, 250] {
        for theta in [0.1, 0.5] {
            let est = meeting_probe(&spec50, t, theta, 20_000, 0x45)?;
            checks.push(CheckResult::at_most(
                format!("ceiling_t{t}_theta{theta}"),
                est.estimate,
                est.bound + 3.0 * est.stderr,
            ));
        }
    }
    Ok(SuiteReport { suite: "meeting_bound", checks })
}

/// Closed-form profile functions against quadrature, their symmetries and
/// orderings, and the two-sided staircase at integer boundaries.
fn profile_math_suite() -> Result<SuiteReport> {
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for &rho in &[0.25, 1.0, 4.0] {
        for &beta in &[-1.5, 0.0, 1.5] {
            for &gamma in &[0.0, 0.8] {
                let quad = oracle::xi_quadrature(rho, beta, gamma)?;
                worst = worst.max((xi(rho, beta, gamma)? - quad).abs());
            }
        }
    }
    checks.push(CheckResult::at_most("xi_vs_quadrature", worst, 1e-8));

    let mut worst = 0.0f64;
    for &rho in &[0.1, 0.3, 1.0, 2.5, 10.0] {
        for &beta in &[-2.0, -0.5, 0.0, 0.7, 3.0] {
            worst = worst.max((psi(rho, beta)? - psi(1.0 / rho, beta)?).abs());
        }
    }
    checks.push(CheckResult::at_most("psi_shape_symmetry", worst, 1e-12));

    // For beta > 0 the profile is lowest at rho = 1 and highest at rho = 0.
    let mut worst = 0.0f64;
    for &beta in &[0.25, 1.0, 2.5] {
        for &rho in &[0.1, 0.5, 1.0, 2.0, 7.0] {
            let p = psi(rho, beta)?;
            worst = worst.max(p - psi(0.0, beta)?).max(psi(1.0, beta)? - p);
        }
    }
    checks.push(CheckResult::at_most("psi_ordering", worst, 1e-15));

    // Integer staircase boundaries report a genuinely two-sided value.
    let mut min_gap = f64::INFINITY;
    for &delta in &[0.5, 0.25, 0.2, 0.1] {
        let (lo, hi) = poisson_profile(delta, 1.0)?;
        min_gap = min_gap.min(hi - lo);
    }
    checks.push(CheckResult::at_least("staircase_boundary_gap", min_gap, 1e-12));

    Ok(SuiteReport { suite: "profile_math", checks })
}
