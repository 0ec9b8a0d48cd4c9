//! The dual single-particle random walk.
//!
//! Averaging dynamics are dual to a lazy uniform walk: the expected mass
//! vector evolves by one walk step per block step. The walk stays put with
//! probability `1 - (E[X]-1)/n` and otherwise jumps to a uniformly chosen
//! other site, so its transition matrix has the single nontrivial eigenvalue
//! `lambda = 1 - (E[X]-1)/(n-1)` with multiplicity n-1.

use crate::engine::MassDistribution;
use crate::error::{Error, Result};
use crate::sizespec::BlockSizeSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualWalk {
    n: usize,
    stay: f64,
    hop: f64,
    lambda: f64,
}

impl DualWalk {
    pub fn new(spec: &BlockSizeSpec) -> Self {
        let n = spec.n() as f64;
        let drift = spec.mean() - 1.0;
        DualWalk {
            n: spec.n(),
            stay: 1.0 - drift / n,
            hop: drift / (n * (n - 1.0)),
            lambda: 1.0 - drift / (n - 1.0),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Holding probability `1 - (E[X]-1)/n`.
    pub fn stay(&self) -> f64 {
        self.stay
    }

    /// Per-target jump probability `(E[X]-1)/(n(n-1))`.
    pub fn hop(&self) -> f64 {
        self.hop
    }

    /// The nontrivial eigenvalue `1 - (E[X]-1)/(n-1)`; equals `1 - 1/t_rel`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Row x of the transition matrix as a mass distribution.
    pub fn transition_row(&self, x: usize) -> Result<MassDistribution> {
        if x >= self.n {
            return Err(Error::Domain(format!("site {x} out of range for n = {}", self.n)));
        }
        let mut masses = vec![self.hop; self.n];
        masses[x] = self.stay;
        MassDistribution::from_masses(masses)
    }

    /// The walk's distribution after t steps from `x0`, in closed form:
    /// mass `1/n + (1 - 1/n) lambda^t` at `x0` and the uniform remainder
    /// elsewhere. By duality this is the expected mass vector at time t from
    /// a Dirac start.
    pub fn distribution_after(&self, x0: usize, t: u64) -> Result<MassDistribution> {
        if x0 >= self.n {
            return Err(Error::Domain(format!("site {x0} out of range for n = {}", self.n)));
        }
        let n = self.n as f64;
        let decay = self.lambda.powf(t as f64);
        let at_start = 1.0 / n + (1.0 - 1.0 / n) * decay;
        let elsewhere = (1.0 - at_start) / (n - 1.0);
        let mut masses = vec![elsewhere; self.n];
        masses[x0] = at_start;
        MassDistribution::from_masses(masses)
    }

    /// The spectral lower bound on total-variation distance from a Dirac
    /// start: `d_tv(t) >= (1/2) (1 - 1/t_rel)^t`.
    pub fn jensen_lower_bound(&self, t: u64) -> f64 {
        0.5 * self.lambda.powf(t as f64)
    }
}
