//! Exact small-instance oracles.
//!
//! Everything here is brute force on purpose: block distributions are
//! enumerated rather than sampled, chunk laws come from dynamic programs
//! over the full state space, and profile integrals are evaluated by
//! quadrature rather than through the closed forms they are meant to
//! check. The rest of the crate is tested against these references, so
//! none of them may share shortcuts with the implementations under test.

use std::collections::HashMap;

use crate::engine::{BlockSample, MassDistribution};
use crate::error::{Error, Result};
use crate::piles::LOG_QUANTUM;
use crate::profiles::{std_normal_cdf, std_normal_pdf};
use crate::sizespec::BlockSizeSpec;

/// Enumeration is limited to instances whose full block list is tiny.
pub const MAX_ORACLE_SITES: usize = 12;

fn quantize(log_size: f64) -> i64 {
    (log_size / LOG_QUANTUM).round() as i64
}

/// Every block the spec can produce, with its probability
/// `p(k) / C(n, k)`; probabilities sum to 1.
pub fn enumerate_blocks(spec: &BlockSizeSpec) -> Result<Vec<(BlockSample, f64)>> {
    let n = spec.n();
    if n > MAX_ORACLE_SITES {
        return Err(Error::UnsupportedMode(format!(
            "block enumeration supports n <= {MAX_ORACLE_SITES}, got {n}"
        )));
    }
    let mut blocks = Vec::new();
    for (&k, &pk) in spec.pmf() {
        let count = binomial_coefficient(n, k);
        let each = pk / count as f64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let sites: Vec<usize> = (0..n).filter(|&x| mask >> x & 1 == 1).collect();
            blocks.push((BlockSample::new(sites)?, each));
        }
    }
    Ok(blocks)
}

fn binomial_coefficient(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut c = 1u64;
    for i in 0..k {
        c = c * (n - i) as u64 / (i + 1) as u64;
    }
    c
}

/// Exact expectation of the mass vector after one block averaging.
pub fn one_step_mean(spec: &BlockSizeSpec, eta: &MassDistribution) -> Result<MassDistribution> {
    let n = spec.n();
    let mut out = vec![0.0; n];
    for (block, p) in enumerate_blocks(spec)? {
        let mean =
            block.sites().iter().map(|&x| eta.get(x)).sum::<f64>() / block.len() as f64;
        for x in 0..n {
            out[x] += p * if block.contains(x) { mean } else { eta.get(x) };
        }
    }
    MassDistribution::from_masses(out)
}

/// Exact expectation of the squared-norm distance after one averaging.
pub fn one_step_mean_l2(spec: &BlockSizeSpec, eta: &MassDistribution) -> Result<f64> {
    let mut total = 0.0;
    for (block, p) in enumerate_blocks(spec)? {
        let mut averaged = eta.clone();
        averaged.average_block(&block);
        total += p * averaged.l2_sq();
    }
    Ok(total)
}

/// Exact law of a marked chunk's log pile size at time t, as sorted
/// (log size, probability) pairs, by dynamic programming over
/// (site, size) states with the block distribution enumerated at each
/// step. Deliberately ignores the hit-count representation of this law.
pub fn chunk_size_law_exact(spec: &BlockSizeSpec, x0: usize, t: u32) -> Result<Vec<(f64, f64)>> {
    let n = spec.n();
    if x0 >= n {
        return Err(Error::Domain(format!("start site {x0} out of range")));
    }
    if t > 8 {
        return Err(Error::UnsupportedMode(format!(
            "chunk law enumeration supports t <= 8, got {t}"
        )));
    }
    let blocks = enumerate_blocks(spec)?;
    // State: (site, quantized log size) with a representative log size.
    let mut states: HashMap<(usize, i64), (f64, f64)> = HashMap::new();
    states.insert((x0, quantize(0.0)), (0.0, 1.0));
    for _ in 0..t {
        let mut next: HashMap<(usize, i64), (f64, f64)> = HashMap::new();
        for (&(site, key), &(log_size, prob)) in &states {
            for (block, pb) in &blocks {
                if block.contains(site) {
                    let k = block.len();
                    let shifted = log_size - (k as f64).ln();
                    let each = prob * pb / k as f64;
                    for &s in block.sites() {
                        next.entry((s, quantize(shifted)))
                            .and_modify(|e| e.1 += each)
                            .or_insert((shifted, each));
                    }
                } else {
                    next.entry((site, key))
                        .and_modify(|e| e.1 += prob * pb)
                        .or_insert((log_size, prob * pb));
                }
            }
        }
        states = next;
    }
    let mut law: HashMap<i64, (f64, f64)> = HashMap::new();
    for ((_, key), (log_size, prob)) in states {
        law.entry(key).and_modify(|e| e.1 += prob).or_insert((log_size, prob));
    }
    let mut out: Vec<(f64, f64)> = law.into_values().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// The same law computed through its hit-count representation: a
/// Binomial(t, E[X]/n) number of independent size-biased divisions,
/// convolved exactly. Agreement with [`chunk_size_law_exact`] certifies,
/// at enumeration scale, that a typical pile's size is a product of
/// independent size-biased block fractions.
pub fn pile_size_law_analytic(spec: &BlockSizeSpec, t: u32) -> Vec<(f64, f64)> {
    let p_hit = spec.mean() / spec.n() as f64;
    let size_biased = spec.size_biased();
    // Binomial pmf by multiplicative recurrence; p_hit = 1 (full-support
    // blocks) degenerates to all mass at t hits.
    let mut binom = vec![0.0; t as usize + 1];
    if p_hit >= 1.0 {
        binom[t as usize] = 1.0;
    } else {
        binom[0] = (1.0 - p_hit).powi(t as i32);
        for j in 1..=t as usize {
            binom[j] = binom[j - 1] * (t as usize - j + 1) as f64 / j as f64 * p_hit
                / (1.0 - p_hit);
        }
    }
    let mut law: HashMap<i64, (f64, f64)> = HashMap::new();
    // Convolve j size-biased log divisions, weighting slice j by binom[j].
    let mut conv: HashMap<i64, (f64, f64)> = HashMap::new();
    conv.insert(quantize(0.0), (0.0, 1.0));
    for j in 0..=t as usize {
        for (&key, &(log_size, prob)) in &conv {
            law.entry(key)
                .and_modify(|e| e.1 += binom[j] * prob)
                .or_insert((log_size, binom[j] * prob));
        }
        if j == t as usize {
            break;
        }
        let mut next: HashMap<i64, (f64, f64)> = HashMap::new();
        for (_, &(log_size, prob)) in &conv {
            for (&y, &py) in size_biased.pmf() {
                let shifted = log_size - (y as f64).ln();
                next.entry(quantize(shifted))
                    .and_modify(|e| e.1 += prob * py)
                    .or_insert((shifted, prob * py));
            }
        }
        conv = next;
    }
    let mut out: Vec<(f64, f64)> = law.into_values().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Exact P(two marks from one pile sit on the same site at time t with
/// both pile sizes < theta), by dynamic programming over the joint
/// pair state.
pub fn meeting_exact(spec: &BlockSizeSpec, t: u32, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Domain(format!("theta = {theta} must lie in (0, 1]")));
    }
    let n = spec.n();
    if n > 8 || t > 6 {
        return Err(Error::UnsupportedMode(format!(
            "meeting enumeration supports n <= 8 and t <= 6, got n = {n}, t = {t}"
        )));
    }
    let blocks = enumerate_blocks(spec)?;
    #[derive(Clone, Copy, PartialEq, Eq, Hash)]
    enum Pair {
        Co { site: usize, key: i64 },
        Sep { s1: usize, s2: usize, k1: i64, k2: i64 },
    }
    let mut states: HashMap<Pair, f64> = HashMap::new();
    states.insert(Pair::Co { site: 0, key: quantize(0.0) }, 1.0);
    for _ in 0..t {
        let mut next: HashMap<Pair, f64> = HashMap::new();
        let add = |state: Pair, p: f64, next: &mut HashMap<Pair, f64>| {
            *next.entry(state).or_insert(0.0) += p;
        };
        for (&state, &prob) in &states {
            for (block, pb) in &blocks {
                let k = block.len();
                let ln_k = (k as f64).ln();
                let p = prob * pb;
                match state {
                    Pair::Co { site, key } => {
                        if !block.contains(site) {
                            add(Pair::Co { site, key }, p, &mut next);
                            continue;
                        }
                        let nk = quantize(key as f64 * LOG_QUANTUM - ln_k);
                        // Same fragment (1/k): co-piled at a uniform site.
                        let co_each = p / (k * k) as f64;
                        for &s in block.sites() {
                            add(Pair::Co { site: s, key: nk }, co_each, &mut next);
                        }
                        // Distinct fragments ((k-1)/k) landing on a uniform
                        // ordered distinct pair (1/(k(k-1)) each): 1/k^2 per pair.
                        let sep_each = p / (k * k) as f64;
                        for &s1 in block.sites() {
                            for &s2 in block.sites() {
                                if s1 != s2 {
                                    add(
                                        Pair::Sep { s1, s2, k1: nk, k2: nk },
                                        sep_each,
                                        &mut next,
                                    );
                                }
                            }
                        }
                    }
                    Pair::Sep { s1, s2, k1, k2 } => {
                        let hit1 = block.contains(s1);
                        let hit2 = block.contains(s2);
                        let n1 = quantize(k1 as f64 * LOG_QUANTUM - ln_k);
                        let n2 = quantize(k2 as f64 * LOG_QUANTUM - ln_k);
                        match (hit1, hit2) {
                            (false, false) => add(Pair::Sep { s1, s2, k1, k2 }, p, &mut next),
                            (true, false) => {
                                for &s in block.sites() {
                                    add(
                                        Pair::Sep { s1: s, s2, k1: n1, k2 },
                                        p / k as f64,
                                        &mut next,
                                    );
                                }
                            }
                            (false, true) => {
                                for &s in block.sites() {
                                    add(
                                        Pair::Sep { s1, s2: s, k1, k2: n2 },
                                        p / k as f64,
                                        &mut next,
                                    );
                                }
                            }
                            (true, true) => {
                                // Different piles relocate independently and
                                // may land on one site without re-piling.
                                let each = p / (k * k) as f64;
                                for &a in block.sites() {
                                    for &b in block.sites() {
                                        add(
                                            Pair::Sep { s1: a, s2: b, k1: n1, k2: n2 },
                                            each,
                                            &mut next,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        states = next;
    }
    let cut = theta.ln() - 1e-9;
    let mut meet = 0.0;
    for (&state, &prob) in &states {
        let met = match state {
            Pair::Co { key, .. } => (key as f64 * LOG_QUANTUM) < cut,
            Pair::Sep { s1, s2, k1, k2 } => {
                s1 == s2 && (k1 as f64 * LOG_QUANTUM) < cut && (k2 as f64 * LOG_QUANTUM) < cut
            }
        };
        if met {
            meet += prob;
        }
    }
    Ok(meet)
}

/// The Gaussian mixture integral behind the inhomogeneous cutoff
/// profile, by composite Simpson quadrature on [-10, 10] — the closed
/// form under test never appears here.
pub fn xi_quadrature(rho: f64, beta: f64, gamma: f64) -> Result<f64> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::Domain(format!("rho = {rho} must be finite and nonnegative")));
    }
    let f = |g: f64| std_normal_pdf(g) * std_normal_cdf(-beta - gamma + rho * (g - beta));
    Ok(simpson(f, -10.0, 10.0, 80_000))
}

/// The corresponding homogeneous profile integral (no offset).
pub fn psi_quadrature(rho: f64, beta: f64) -> Result<f64> {
    xi_quadrature(rho, beta, 0.0)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    debug_assert!(intervals % 2 == 0);
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
