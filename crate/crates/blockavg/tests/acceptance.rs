//! Acceptance gate: eleven end-to-end criteria, one test each, every test
//! printing exactly one pass/fail line with the measured value and its
//! tolerance. Exact identities are checked at floating-point scale;
//! replicated Monte Carlo runs are checked against limit references at the
//! stated bands, with replica counts sized so three standard errors stay
//! below half the band.

use blockavg::config::{
    ExperimentConfig, ExperimentPlan, LedgerConfig, ScheduleConfig, StartConfig,
};
use blockavg::dualwalk::DualWalk;
use blockavg::engine::{BlockSampler, MassDistribution};
use blockavg::experiment::{estimate_tmix, run_experiment};
use blockavg::oracle;
use blockavg::piles::chunk::{meeting_probe, ChunkMark, PileSizeSampler};
use blockavg::profiles::ProfileCurve;
use blockavg::rng::{stream_rng, StreamPurpose};
use blockavg::sizespec::{BlockSizeSpec, SpecDoc};
use blockavg::stats::chi_square_gof;
use blockavg::validate;

fn report(number: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} {name}: {status} — {detail}");
    assert!(pass, "criterion {number:02} {name}: {detail}");
}

/// A replicated run from the canonical worst start with optional extras.
fn plan(
    spec: &BlockSizeSpec,
    replicas: u64,
    seed: u64,
    schedule: ScheduleConfig,
    ledger: bool,
    compare: Option<ProfileCurve>,
) -> ExperimentPlan {
    ExperimentConfig {
        master_seed: seed,
        replicas,
        workers: None,
        spec: SpecDoc::from_spec(spec),
        start: StartConfig::Dirac { x0: 0 },
        schedule,
        output: Default::default(),
        ledger: LedgerConfig { enabled: ledger, ..Default::default() },
        chunks: Default::default(),
        budget: Default::default(),
        compare,
    }
    .plan()
    .expect("valid acceptance plan")
}

fn times(ts: Vec<u64>) -> ScheduleConfig {
    ScheduleConfig::Times { times: ts }
}

#[test]
fn criterion_01_duality() {
    let mut worst = 0.0f64;
    for n in 3..=6 {
        let specs = [
            BlockSizeSpec::deterministic(n, 2).unwrap(),
            BlockSizeSpec::deterministic(n, 3).unwrap(),
            BlockSizeSpec::from_table(n, &[(2, 0.5), (3, 0.5)]).unwrap(),
        ];
        for spec in &specs {
            let mean = oracle::one_step_mean(spec, &MassDistribution::dirac(n, 0)).unwrap();
            let row = DualWalk::new(spec).transition_row(0).unwrap();
            for x in 0..n {
                worst = worst.max((mean.get(x) - row.get(x)).abs());
            }
        }
    }
    report(
        1,
        "duality",
        worst <= 1e-12,
        &format!("max |exhaustive one-step mean - dual row| = {worst:.2e} (tol 1e-12)"),
    );
}

#[test]
fn criterion_02_l2_identity() {
    // Exhaustive one-step contraction at the exact rate, n <= 8.
    let mut worst = 0.0f64;
    for n in 3..=8 {
        let entries: &[(usize, f64)] =
            if n == 3 { &[(2, 0.5), (3, 0.5)] } else { &[(2, 0.5), (3, 0.3), (n, 0.2)] };
        let spec = BlockSizeSpec::from_table(n, entries).unwrap();
        let rate = 1.0 - 1.0 / spec.timescales().relaxation;
        let states = [MassDistribution::dirac(n, 0), MassDistribution::spread_start(n, 2)];
        for eta in &states {
            let got = oracle::one_step_mean_l2(&spec, eta).unwrap();
            worst = worst.max((got - rate * eta.l2_sq()).abs());
        }
    }
    let exhaustive_ok = worst <= 1e-10;

    // Replicated check at n = 100: mean squared L2 distance tracks
    // (1 - 1/t_rel)^t (n - 1) within three standard errors.
    let spec = BlockSizeSpec::deterministic(100, 2).unwrap();
    let rate = 1.0 - 1.0 / spec.timescales().relaxation;
    let result =
        run_experiment(&plan(&spec, 1000, 0xAC02, times(vec![50, 100, 200]), false, None))
            .unwrap();
    let mut mc_ok = true;
    let mut mc_detail = String::new();
    for row in &result.aggregate.rows {
        let predicted = rate.powf(row.t as f64) * 99.0;
        let dev = (row.l2_sq.mean - predicted).abs();
        mc_ok &= dev <= 3.0 * row.l2_sq.stderr;
        mc_detail = format!("t={}: |mean-pred| = {dev:.3} vs 3se = {:.3}", row.t, 3.0 * row.l2_sq.stderr);
    }
    report(
        2,
        "l2-identity",
        exhaustive_ok && mc_ok,
        &format!("exhaustive max dev = {worst:.2e} (tol 1e-10); MC {mc_detail}"),
    );
}

#[test]
fn criterion_03_pile_size_law() {
    // n = 3, X = 2, t = 2: the law {1: 1/9, 1/2: 4/9, 1/4: 4/9}.
    let spec = BlockSizeSpec::deterministic(3, 2).unwrap();
    let probs = [1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0];
    let classify = |log_size: f64| (-log_size / 2f64.ln()).round() as usize;
    let samples = 100_000u64;

    let mut size_rng = stream_rng(0xAC03, 0, StreamPurpose::BlockSizes);
    let mut site_rng = stream_rng(0xAC03, 0, StreamPurpose::BlockSites);
    let mut chunk_rng = stream_rng(0xAC03, 0, StreamPurpose::Chunks);
    let mut sampler = BlockSampler::new(&spec);
    let mut sites = Vec::new();
    let mut engine_counts = [0u64; 3];
    for _ in 0..samples {
        let mut mark = ChunkMark::new(0);
        for _ in 0..2 {
            sampler.sample_into(&mut sites, &mut size_rng, &mut site_rng);
            mark.step_sites(&sites, &mut chunk_rng);
        }
        engine_counts[classify(mark.log_size)] += 1;
    }
    let engine_p = chi_square_gof(&engine_counts, &probs).unwrap().p_value;

    let direct = PileSizeSampler::new(&spec, 2).unwrap();
    let mut direct_counts = [0u64; 3];
    for _ in 0..samples {
        direct_counts[classify(direct.sample_log_size(&mut chunk_rng))] += 1;
    }
    let direct_p = chi_square_gof(&direct_counts, &probs).unwrap().p_value;

    report(
        3,
        "pile-size-law",
        engine_p > 0.001 && direct_p > 0.001,
        &format!("chi-square p: engine = {engine_p:.3}, direct sampler = {direct_p:.3} (floor 0.001)"),
    );
}

#[test]
fn criterion_04_cutoff_location() {
    let spec = BlockSizeSpec::deterministic(20_000, 2).unwrap();
    let t_ent = spec.timescales().entropic;
    let grid: Vec<u64> = (85..=115).map(|i| (i as f64 / 100.0 * t_ent).round() as u64).collect();
    let plan = plan(&spec, 24, 0xAC04, times(grid), false, None);
    let tmix = estimate_tmix(&plan, 0.5).unwrap();
    let crossing = tmix.crossing.expect("the grid covers the crossing");
    let ratio = crossing.t_mix as f64 / t_ent;
    report(
        4,
        "cutoff-location",
        (0.9..=1.1).contains(&ratio),
        &format!(
            "t_mix(0.5) = {t} over t_ent = {t_ent:.0}: ratio = {ratio:.4} (band [0.9, 1.1])",
            t = crossing.t_mix
        ),
    );
}

#[test]
fn criterion_05_gaussian_profile() {
    let spec = BlockSizeSpec::deterministic(100_000, 2).unwrap();
    let plan = plan(
        &spec,
        64,
        0xAC05,
        ScheduleConfig::BetaGrid { betas: vec![-1.0, 0.0, 1.0] },
        false,
        Some(ProfileCurve::GaussianCutoff { rho: 0.0 }),
    );
    let result = run_experiment(&plan).unwrap();
    let mut worst = 0.0f64;
    for row in &result.aggregate.rows {
        worst = worst.max((row.d_tv.mean - row.profile.unwrap()).abs());
    }
    report(
        5,
        "gaussian-profile",
        worst <= 0.1,
        &format!("worst |mean d_tv(t*(beta)) - Phi(-beta)| over beta in {{-1,0,1}} = {worst:.4} (band 0.1)"),
    );
}

#[test]
fn criterion_06_poisson_profile() {
    // k = floor(n^0.7) and floor(n^0.4) at n = 1e5, grid relative to the
    // start site's first averaging.
    let mut details = Vec::new();
    let mut pass = true;
    for (exponent, k) in [(0.7, 3162usize), (0.4, 100usize)] {
        let spec = BlockSizeSpec::deterministic(100_000, k).unwrap();
        let plan = plan(
            &spec,
            128,
            0xAC06,
            ScheduleConfig::TauRelative { betas: vec![0.5, 1.0, 2.0] },
            false,
            Some(ProfileCurve::PoissonNoncutoff { delta: exponent, expected: false }),
        );
        let result = run_experiment(&plan).unwrap();
        let mut worst = 0.0f64;
        for row in &result.aggregate.rows {
            worst = worst.max((row.d_tv.mean - row.profile.unwrap()).abs());
        }
        pass &= worst <= 0.1;
        details.push(format!("k = n^{exponent}: worst dev = {worst:.4}"));
    }
    report(
        6,
        "poisson-profile",
        pass,
        &format!("{} (band 0.1)", details.join("; ")),
    );
}

#[test]
fn criterion_07_lower_bound_consistency() {
    // Certified total-variation lower bound never exceeds the engine's
    // distance, in any ledger replica at any recorded time.
    let spec = BlockSizeSpec::from_table(2000, &[(2, 0.7), (4, 0.3)]).unwrap();
    let plan = plan(&spec, 12, 0xAC07, times(vec![0, 200, 1000, 3000, 8000]), true, None);
    let result = run_experiment(&plan).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut points = 0u64;
    for replica in &result.replicas {
        for p in &replica.points {
            worst = worst.max(p.glb.unwrap() - p.d_tv);
            points += 1;
        }
    }
    report(
        7,
        "lower-bound-consistency",
        worst <= 1e-9,
        &format!("max (certified bound - d_tv) over {points} recorded points = {worst:.2e} (tol 1e-9)"),
    );
}

#[test]
fn criterion_08_meeting_bound() {
    let mut pass = true;
    let mut worst_margin = f64::INFINITY;
    for n in [50usize, 200] {
        let spec = BlockSizeSpec::deterministic(n, 2).unwrap();
        for t in [n as u64, 5 * n as u64] {
            for theta in [0.1, 0.5] {
                let est = meeting_probe(&spec, t, theta, 20_000, 0xAC08).unwrap();
                pass &= est.satisfies_bound();
                worst_margin =
                    worst_margin.min(est.bound + 3.0 * est.stderr - est.estimate);
            }
        }
    }
    report(
        8,
        "meeting-bound",
        pass,
        &format!(
            "estimate <= theta + 1/n + 3se on all 8 grid cells; slimmest margin = {worst_margin:.4}"
        ),
    );
}

#[test]
fn criterion_09_entropy_envelope() {
    let n = 100usize;
    let spec =
        BlockSizeSpec::from_table(n, &[(2, 1.0 / 3.0), (3, 1.0 / 3.0), (4, 1.0 / 3.0)]).unwrap();
    let t_ent = spec.timescales().entropic;
    let log_n = (n as f64).ln();
    let grid: Vec<u64> = (0..=30).map(|i| i * 10).collect();
    let result = run_experiment(&plan(&spec, 1000, 0xAC09, times(grid), false, None)).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for row in &result.aggregate.rows {
        let t = row.t as f64;
        let lower = log_n * (1.0 - t / t_ent);
        let upper = (1.0 - 1.0 / t_ent).powf(t) * log_n;
        let slack = 3.0 * row.entropy.stderr;
        let excess = (lower - slack - row.entropy.mean).max(row.entropy.mean - upper - slack);
        worst = worst.max(excess);
    }
    report(
        9,
        "entropy-envelope",
        worst <= 1e-9,
        &format!("worst envelope excess over t in 0..=300 = {worst:.2e} (tol 1e-9 beyond 3se)"),
    );
}

#[test]
fn criterion_10_profile_math() {
    let suite = validate::run_suite("profile_math").unwrap();
    let detail: Vec<String> = suite
        .checks
        .iter()
        .map(|c| format!("{} = {:.2e} ({} {:.0e})", c.name, c.measured, c.comparison, c.limit))
        .collect();
    report(10, "profile-math", suite.passed(), &detail.join("; "));
}

#[test]
fn criterion_11_metastability() {
    // Two-point sizes with a log n = 10 at n = 1e4: the expected distance
    // decays exponentially on the entropic timescale.
    let n = 10_000usize;
    let a = 10.0 / (n as f64).ln();
    let spec = BlockSizeSpec::two_point(n, a).unwrap();
    let t_ent = spec.timescales().entropic;
    let s_grid = [0.5, 1.0, 2.0];
    let grid: Vec<u64> = s_grid.iter().map(|s| (s * t_ent).round() as u64).collect();
    let result = run_experiment(&plan(&spec, 1000, 0xAC11, times(grid), false, None)).unwrap();
    let mut worst = 0.0f64;
    for (row, s) in result.aggregate.rows.iter().zip(s_grid) {
        worst = worst.max((row.d_tv.mean - (-s).exp()).abs());
    }
    report(
        11,
        "metastability",
        worst <= 0.1,
        &format!("worst |mean d_tv(s t_ent) - exp(-s)| over s in {{0.5,1,2}} = {worst:.4} (band 0.1)"),
    );
}
