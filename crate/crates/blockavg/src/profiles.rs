//! Limit profiles: the Gaussian cutoff shapes, the Poisson staircases of the
//! polynomial-block regime, and the two-point reference curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard normal CDF, accurate to full double precision (libm's erfc is
/// the fdlibm rational approximation, correct to a couple of ulp).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn check_rho(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::Domain(format!("profile shape rho = {rho} must be in [0, +inf]")));
    }
    Ok(rho)
}

/// Gaussian cutoff profile `psi_rho(beta) = Phi(-beta (1+rho)/sqrt(1+rho^2))`.
///
/// `rho = +inf` is accepted and maps to the `rho = 0` profile `Phi(-beta)`
/// via the exact `rho <-> 1/rho` symmetry.
pub fn psi(rho: f64, beta: f64) -> Result<f64> {
    let rho = check_rho(rho)?;
    let coeff = if rho.is_infinite() { 1.0 } else { (1.0 + rho) / (1.0 + rho * rho).sqrt() };
    Ok(std_normal_cdf(-beta * coeff))
}

/// Two-parameter profile `Xi_rho(beta, gamma)`, the Gaussian mixture
/// `int phi(alpha) Phi(-(alpha + beta (1+rho) + gamma)/rho) d alpha`, which
/// collapses to the closed form `Phi(-(beta (1+rho) + gamma)/sqrt(1+rho^2))`.
///
/// At `rho = 0` the convention is `Xi_0(beta, gamma) = Phi(-beta)`: the
/// second coordinate only matters when the size-biased log has variance.
pub fn xi(rho: f64, beta: f64, gamma: f64) -> Result<f64> {
    let rho = check_rho(rho)?;
    if rho == 0.0 {
        return Ok(std_normal_cdf(-beta));
    }
    if rho.is_infinite() {
        return Ok(std_normal_cdf(-beta));
    }
    Ok(std_normal_cdf(-(beta * (1.0 + rho) + gamma) / (1.0 + rho * rho).sqrt()))
}

/// Poisson pmf `p_j(beta) = e^{-beta} beta^j / j!`, computed by upward
/// recursion (desk-scale betas only).
pub fn poisson_pmf(beta: f64, j: u64) -> f64 {
    let mut term = (-beta).exp();
    for i in 1..=j {
        term *= beta / i as f64;
    }
    term
}

/// Poisson CDF `P(Poi(beta) <= j)`.
pub fn poisson_cdf(beta: f64, j: u64) -> f64 {
    let mut term = (-beta).exp();
    let mut acc = term;
    for i in 1..=j {
        term *= beta / i as f64;
        acc += term;
    }
    acc.min(1.0)
}

/// Detects whether x is (numerically) a nonnegative integer and returns the
/// floor with a relative guard band of 1e-9 against decimal artifacts like
/// 0.9/0.1 = 9.000000000000002.
fn guarded_floor(x: f64) -> (u64, bool) {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * (1.0 + x.abs()) {
        (r as u64, true)
    } else {
        (x.floor() as u64, false)
    }
}

/// Poisson staircase of the polynomial-block regime with `k = n^delta`:
/// returns `(P(Poi(beta) < m), P(Poi(beta) <= m))` with `m = (1-delta)/delta`.
///
/// Away from the integer boundary (`1/delta` not an integer) the two values
/// coincide; on the boundary they differ by one Poisson atom and both limits
/// are reported rather than silently picking one.
pub fn poisson_profile(delta: f64, beta: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::Domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta = {beta} must be nonnegative")));
    }
    let m = (1.0 - delta) / delta;
    let (f, integral) = guarded_floor(m);
    if integral {
        let lower = if f == 0 { 0.0 } else { poisson_cdf(beta, f - 1) };
        Ok((lower, poisson_cdf(beta, f)))
    } else {
        let v = poisson_cdf(beta, f);
        Ok((v, v))
    }
}

/// Mean profile of the polynomial-block regime: `P(Poi(beta) <= floor(1/delta))`.
pub fn expected_poisson_profile(delta: f64, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) || delta == 0.0 {
        return Err(Error::Domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta = {beta} must be nonnegative")));
    }
    let (jstar, _) = guarded_floor(1.0 / delta);
    Ok(poisson_cdf(beta, jstar))
}

/// Metastable reference curve `s -> e^{-s}` (time in units of the entropic
/// time).
pub fn metastable_reference(s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("s = {s} must be nonnegative")));
    }
    Ok((-s).exp())
}

/// Half-cutoff reference curve `s -> 1_{s<1} e^{-s c / (2 log 2)}`.
///
/// The curve jumps at `s = 1`, where its value is genuinely undefined;
/// evaluation there is refused.
pub fn half_cutoff_reference(c: f64, s: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("c = {c} must be positive")));
    }
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("s = {s} must be nonnegative")));
    }
    if s == 1.0 {
        return Err(Error::Domain(
            "the half-cutoff profile is discontinuous at s = 1; evaluate on either side".into(),
        ));
    }
    if s < 1.0 {
        Ok((-s * c / (2.0 * 2f64.ln())).exp())
    } else {
        Ok(0.0)
    }
}

/// A named profile curve over a beta grid, as used for CSV emission and for
/// comparison columns in aggregated experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "curve", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileCurve {
    GaussianCutoff {
        rho: f64,
    },
    PoissonNoncutoff {
        delta: f64,
        /// Emit the mean profile rather than the realized-limit staircase.
        #[serde(default)]
        expected: bool,
    },
    MetastableExp,
    HalfCutoff {
        c: f64,
    },
}

impl ProfileCurve {
    /// Value of the curve at abscissa `beta` (interpreted as `s` for the
    /// two-point reference curves).
    pub fn evaluate(&self, beta: f64) -> Result<f64> {
        match *self {
            ProfileCurve::GaussianCutoff { rho } => psi(rho, beta),
            ProfileCurve::PoissonNoncutoff { delta, expected } => {
                if expected {
                    expected_poisson_profile(delta, beta)
                } else {
                    Ok(poisson_profile(delta, beta)?.0)
                }
            }
            ProfileCurve::MetastableExp => metastable_reference(beta),
            ProfileCurve::HalfCutoff { c } => half_cutoff_reference(c, beta),
        }
    }

    /// Evaluate over an inclusive grid; returns (beta, value) rows.
    pub fn grid(&self, beta_min: f64, beta_max: f64, step: f64) -> Result<Vec<(f64, f64)>> {
        if !(step > 0.0) || beta_max < beta_min {
            return Err(Error::Domain("profile grid needs beta_min <= beta_max and step > 0".into()));
        }
        let mut rows = Vec::new();
        let count = ((beta_max - beta_min) / step).round() as i64;
        for i in 0..=count.max(0) {
            let beta = beta_min + i as f64 * step;
            if beta > beta_max + 1e-12 {
                break;
            }
            rows.push((beta, self.evaluate(beta)?));
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_close(std_normal_cdf(-1.96), 0.024997895148220434, 1e-12);
        assert_close(std_normal_cdf(-2f64.sqrt()), 0.078649603525142565, 1e-12);
        assert_close(std_normal_cdf(-1.0), 0.15865525393145705, 1e-12);
        assert_close(std_normal_cdf(1.0), 0.8413447460685429, 1e-12);
        // Symmetry to machine precision on a grid.
        for i in 0..400 {
            let x = -5.0 + i as f64 * 0.025;
            assert_close(std_normal_cdf(x) + std_normal_cdf(-x), 1.0, 1e-14);
        }
    }

    #[test]
    fn psi_values_and_symmetry() {
        assert_close(psi(1.0, 1.0).unwrap(), 0.078649603525142565, 1e-12);
        assert_close(psi(0.0, 0.0).unwrap(), 0.5, 1e-15);
        // rho <-> 1/rho symmetry.
        for &rho in &[0.1, 0.3, 1.0, 2.5, 10.0] {
            for &beta in &[-2.0, -0.5, 0.0, 0.7, 3.0] {
                assert_close(psi(rho, beta).unwrap(), psi(1.0 / rho, beta).unwrap(), 1e-12);
            }
        }
        // rho = +inf maps to the rho = 0 profile.
        assert_close(psi(f64::INFINITY, 0.8).unwrap(), psi(0.0, 0.8).unwrap(), 1e-15);
        assert!(psi(-0.5, 0.0).is_err());
        assert!(psi(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn psi_slope_ordering() {
        // The slope coefficient (1+rho)/sqrt(1+rho^2) is maximal at rho = 1
        // and equals 1 at rho in {0, inf}; hence for beta > 0 the profile is
        // lowest at rho = 1.
        let coeff = |rho: f64| (1.0 + rho) / (1.0 + rho * rho).sqrt();
        for &rho in &[0.0, 0.05, 0.3, 0.9, 1.0, 1.2, 4.0, 100.0] {
            assert!(coeff(rho) <= coeff(1.0) + 1e-15);
            assert!(coeff(rho) >= 1.0 - 1e-15);
        }
        for &beta in &[0.25, 1.0, 2.5] {
            for &rho in &[0.1, 0.5, 1.0, 2.0, 7.0] {
                let p = psi(rho, beta).unwrap();
                assert!(p <= psi(0.0, beta).unwrap() + 1e-15);
                assert!(p >= psi(1.0, beta).unwrap() - 1e-15);
            }
        }
    }

    #[test]
    fn xi_conventions() {
        // gamma = 0 reduces to psi for every rho.
        for &rho in &[0.0, 0.4, 1.0, 3.0] {
            for &beta in &[-1.5, 0.0, 2.0] {
                assert_close(xi(rho, beta, 0.0).unwrap(), psi(rho, beta).unwrap(), 1e-14);
            }
        }
        // rho = 0 ignores gamma by convention.
        assert_close(xi(0.0, 0.7, 5.0).unwrap(), std_normal_cdf(-0.7), 1e-15);
        // Closed-form spot value: rho = 1, beta = 0.5, gamma = -1 gives
        // Phi(0) = 0.5 since beta(1+rho)+gamma = 0.
        assert_close(xi(1.0, 0.5, -1.0).unwrap(), 0.5, 1e-15);
    }

    #[test]
    fn poisson_staircase_values() {
        // delta = 0.7: floor(1/delta) = 1, profile e^{-beta}.
        for &beta in &[0.0, 0.5, 1.0, 2.0] {
            let (lo, hi) = poisson_profile(0.7, beta).unwrap();
            assert_close(lo, (-beta).exp(), 1e-14);
            assert_eq!(lo, hi);
        }
        // delta = 0.4, beta = 1: P(Poi(1) <= 1) = 2/e.
        let (lo, hi) = poisson_profile(0.4, 1.0).unwrap();
        assert_close(lo, 0.7357588823428846, 1e-12);
        assert_eq!(lo, hi);
        // Integer boundary delta = 0.5: the two one-sided values differ.
        let (lo, hi) = poisson_profile(0.5, 1.0).unwrap();
        assert_close(lo, (-1f64).exp(), 1e-14);
        assert_close(hi, 0.7357588823428846, 1e-12);
        assert!(hi > lo);
        // Decimal artifact: delta = 0.1 has (1-delta)/delta = 9 up to fp.
        let (lo, hi) = poisson_profile(0.1, 1.0).unwrap();
        assert_close(lo, poisson_cdf(1.0, 8), 1e-14);
        assert_close(hi, poisson_cdf(1.0, 9), 1e-14);
        assert!(poisson_profile(0.0, 1.0).is_err());
        assert!(poisson_profile(1.0, 1.0).is_err());
        assert!(poisson_profile(0.5, -0.1).is_err());
    }

    #[test]
    fn expected_profile_values() {
        // delta = 0.7: floor(1/delta) = 1, P(Poi(1) <= 1) = 2/e.
        assert_close(expected_poisson_profile(0.7, 1.0).unwrap(), 0.7357588823428846, 1e-12);
        // delta = 0.4, beta = 2: P(Poi(2) <= 2) = 5 e^{-2}.
        assert_close(expected_poisson_profile(0.4, 2.0).unwrap(), 0.6766764161830635, 1e-12);
        // beta = 0: the profile starts at 1.
        assert_close(expected_poisson_profile(0.37, 0.0).unwrap(), 1.0, 1e-15);
        // The mean profile dominates the realized-limit staircase.
        for &delta in &[0.3, 0.4, 0.61, 0.7] {
            for &beta in &[0.2, 1.0, 3.0] {
                let (_, hi) = poisson_profile(delta, beta).unwrap();
                assert!(expected_poisson_profile(delta, beta).unwrap() >= hi - 1e-14);
            }
        }
    }

    #[test]
    fn poisson_pmf_cdf_consistency() {
        for &beta in &[0.3, 1.0, 4.5] {
            let mut acc = 0.0;
            for j in 0..20 {
                acc += poisson_pmf(beta, j);
                assert_close(poisson_cdf(beta, j), acc.min(1.0), 1e-13);
            }
            assert_close(poisson_cdf(beta, 200), 1.0, 1e-12);
        }
    }

    #[test]
    fn trichotomy_references() {
        assert_close(metastable_reference(0.0).unwrap(), 1.0, 1e-15);
        assert_close(metastable_reference(2.0).unwrap(), (-2f64).exp(), 1e-15);
        assert!(metastable_reference(-0.1).is_err());

        let c = 3.0;
        // Continuous decay below 1, zero above, refused exactly at 1.
        assert_close(half_cutoff_reference(c, 0.0).unwrap(), 1.0, 1e-15);
        let jump = half_cutoff_reference(c, 1.0 - 1e-9).unwrap();
        assert_close(jump, (-c / (2.0 * 2f64.ln())).exp(), 1e-6);
        assert_eq!(half_cutoff_reference(c, 1.5).unwrap(), 0.0);
        assert!(half_cutoff_reference(c, 1.0).is_err());
        assert!(half_cutoff_reference(-1.0, 0.5).is_err());
    }

    #[test]
    fn curve_grid_emission() {
        let curve = ProfileCurve::GaussianCutoff { rho: 1.0 };
        let rows = curve.grid(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(rows.len(), 5);
        assert_close(rows[0].0, -1.0, 1e-12);
        assert_close(rows[4].0, 1.0, 1e-12);
        for &(_, v) in &rows {
            assert!((0.0..=1.0).contains(&v));
        }
        // Monotone nonincreasing in beta.
        for w in rows.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-15);
        }
        // The half-cutoff curve refuses a grid containing s = 1 exactly.
        let bad = ProfileCurve::HalfCutoff { c: 2.0 };
        assert!(bad.grid(0.0, 2.0, 0.5).is_err());
        assert!(bad.grid(0.05, 1.95, 0.1).is_ok());
    }

    #[test]
    fn curve_serde_round_trip() {
        let curves = [
            ProfileCurve::GaussianCutoff { rho: 0.5 },
            ProfileCurve::PoissonNoncutoff { delta: 0.7, expected: false },
            ProfileCurve::PoissonNoncutoff { delta: 0.4, expected: true },
            ProfileCurve::MetastableExp,
            ProfileCurve::HalfCutoff { c: 10.0 },
        ];
        for c in &curves {
            let s = toml::to_string(c).unwrap();
            let back: ProfileCurve = toml::from_str(&s).unwrap();
            assert_eq!(&back, c);
        }
    }
}
