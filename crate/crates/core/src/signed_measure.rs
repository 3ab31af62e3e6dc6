//! Finite signed measures supported on a shifted/scaled integer lattice.
//!
//! A [`LatticeSignedMeasure`] stores real weights at the points
//! `origin + i * step` for `i = 0..len`. The representation is canonical:
//! exact zero weights are trimmed from both ends and the origin is realigned
//! to the lowest-index nonzero weight, so structural equality is meaningful.
//!
//! Besides the usual arithmetic (addition, Jordan decomposition, discrete
//! convolution) this module provides the convolution exponential
//! `exp(ν) = Σ_{n≥0} ν^{*n}/n!` with a rigorous factorial tail bound on the
//! truncation, which is the computational core of the Cuppens test: a finite
//! signed lattice measure ν is the quasi-Lévy measure of a probability law
//! exactly when `exp(ν)` has no negative weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Offsets between lattices must be integers within this tolerance.
const OFFSET_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("lattice step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite weight at offset {0}")]
    NonFiniteWeight(usize),
    #[error("mismatched lattice: {0}")]
    MismatchedLattice(String),
}

/// A finite signed measure on the lattice `{origin + i·step}`.
///
/// `weights[i]` is the mass at `origin + i·step`. After construction the
/// weight vector is trimmed: `weights.first()` and `weights.last()` are
/// nonzero unless the measure is zero (empty vector, origin 0).
///
/// Serialized form is the wire schema shared by the CLI:
/// `{"origin": r, "step": r, "min_index": i, "weights": [r, ...]}` with
/// `weights[i]` at `origin + (min_index + i)·step`; canonical output always
/// has `min_index = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LatticeWire", try_from = "LatticeWire")]
pub struct LatticeSignedMeasure {
    origin: f64,
    step: f64,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LatticeWire {
    origin: f64,
    step: f64,
    min_index: i64,
    weights: Vec<f64>,
}

impl From<LatticeSignedMeasure> for LatticeWire {
    fn from(m: LatticeSignedMeasure) -> Self {
        Self { origin: m.origin, step: m.step, min_index: 0, weights: m.weights }
    }
}

impl TryFrom<LatticeWire> for LatticeSignedMeasure {
    type Error = MeasureError;

    fn try_from(w: LatticeWire) -> Result<Self, MeasureError> {
        Self::from_indexed(w.origin, w.step, w.min_index, w.weights)
    }
}

impl LatticeSignedMeasure {
    /// Build a measure from weights anchored at `origin`.
    pub fn new(origin: f64, step: f64, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if !step.is_finite() || step <= 0.0 {
            return Err(MeasureError::InvalidStep(step));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(MeasureError::NonFiniteWeight(i));
        }
        Ok(Self { origin, step, weights }.canonicalized())
    }

    /// Build from the indexed form used by the JSON schema: `weights[i]`
    /// sits at `origin + (min_index + i)·step`.
    pub fn from_indexed(
        origin: f64,
        step: f64,
        min_index: i64,
        weights: Vec<f64>,
    ) -> Result<Self, MeasureError> {
        Self::new(origin + min_index as f64 * step, step, weights)
    }

    /// The zero measure on a lattice of the given step.
    pub fn zero(step: f64) -> Self {
        Self { origin: 0.0, step, weights: Vec::new() }
    }

    /// A point mass `mass·δ_location` on a lattice of the given step.
    pub fn dirac(location: f64, step: f64, mass: f64) -> Result<Self, MeasureError> {
        Self::new(location, step, vec![mass])
    }

    fn canonicalized(mut self) -> Self {
        let first = self.weights.iter().position(|&w| w != 0.0);
        match first {
            None => {
                self.weights.clear();
                self.origin = 0.0;
            }
            Some(lo) => {
                let hi = self.weights.iter().rposition(|&w| w != 0.0).unwrap();
                self.weights.drain(hi + 1..);
                self.weights.drain(..lo);
                self.origin += lo as f64 * self.step;
            }
        }
        self
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_zero(&self) -> bool {
        self.weights.is_empty()
    }

    /// Iterate over `(location, weight)` pairs of the support window.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.origin + i as f64 * self.step, w))
    }

    /// Total variation `Σ_i |w_i|`; coincides with the partition-supremum
    /// definition because the measure is purely atomic.
    pub fn total_variation(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Signed total mass `ν(ℝ) = Σ_i w_i`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Jordan decomposition `(ν⁺, ν⁻)` with `ν = ν⁺ − ν⁻`.
    pub fn jordan_decompose(&self) -> (Self, Self) {
        let pos: Vec<f64> = self.weights.iter().map(|w| w.max(0.0)).collect();
        let neg: Vec<f64> = self.weights.iter().map(|w| (-w).max(0.0)).collect();
        (
            Self { origin: self.origin, step: self.step, weights: pos }.canonicalized(),
            Self { origin: self.origin, step: self.step, weights: neg }.canonicalized(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let weights = self.weights.iter().map(|w| w * factor).collect();
        Self { origin: self.origin, step: self.step, weights }.canonicalized()
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    fn step_compatible(&self, other: &Self) -> bool {
        (self.step - other.step).abs() <= 1e-12 * self.step.max(other.step)
    }

    /// Integer lattice offset of `other` relative to `self`, if the origins
    /// differ by an integer multiple of the common step.
    fn integer_offset(&self, other: &Self) -> Option<i64> {
        let k = (other.origin - self.origin) / self.step;
        let rounded = k.round();
        if (k - rounded).abs() <= OFFSET_TOL {
            Some(rounded as i64)
        } else {
            None
        }
    }

    /// Pointwise sum. The lattices must share the step and have origins
    /// congruent modulo the step.
    pub fn add(&self, other: &Self) -> Result<Self, MeasureError> {
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        if !self.step_compatible(other) {
            return Err(MeasureError::MismatchedLattice(format!(
                "steps {} and {} differ",
                self.step, other.step
            )));
        }
        let offset = self.integer_offset(other).ok_or_else(|| {
            MeasureError::MismatchedLattice(format!(
                "origins {} and {} are not congruent modulo step {}",
                self.origin, other.origin, self.step
            ))
        })?;
        let lo = 0.min(offset);
        let hi = (self.weights.len() as i64).max(offset + other.weights.len() as i64);
        let mut weights = vec![0.0; (hi - lo) as usize];
        for (i, &w) in self.weights.iter().enumerate() {
            weights[(i as i64 - lo) as usize] += w;
        }
        for (i, &w) in other.weights.iter().enumerate() {
            weights[(i as i64 + offset - lo) as usize] += w;
        }
        Self::new(self.origin + lo as f64 * self.step, self.step, weights)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MeasureError> {
        self.add(&other.negated())
    }

    /// Total variation of the difference; `0` iff the measures agree.
    pub fn tv_distance(&self, other: &Self) -> Result<f64, MeasureError> {
        Ok(self.sub(other)?.total_variation())
    }

    /// Exact discrete convolution. Origins add, total masses multiply.
    pub fn convolve(&self, other: &Self) -> Result<Self, MeasureError> {
        if !self.step_compatible(other) {
            return Err(MeasureError::MismatchedLattice(format!(
                "steps {} and {} differ",
                self.step, other.step
            )));
        }
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.step));
        }
        let mut weights = vec![0.0; self.weights.len() + other.weights.len() - 1];
        for (i, &a) in self.weights.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.weights.iter().enumerate() {
                weights[i + j] += a * b;
            }
        }
        Self::new(self.origin + other.origin, self.step, weights)
    }

    /// Convolution exponential `Σ_{n=0}^{N} ν^{*n}/n!` with `ν^{*0} = δ_0`.
    ///
    /// `N` is the first index at which the omitted tail is provably below
    /// `eps_series` in total variation: `TV(ν)^{N+1}/(N+1)! · e^{TV(ν)} <
    /// eps_series`. The total mass of the result is `e^{ν(ℝ)}` up to
    /// `eps_series`.
    ///
    /// The lattice of ν must contain the point 0 (it always does for
    /// quasi-Lévy measures, which have no mass at the origin but live on
    /// `±m·step`).
    pub fn conv_exp(&self, eps_series: f64) -> Result<Self, MeasureError> {
        assert!(eps_series > 0.0, "eps_series must be positive");
        let delta0 = Self::dirac(0.0, self.step, 1.0)?;
        if self.is_zero() {
            return Ok(delta0);
        }
        if self.integer_offset(&delta0).is_none() {
            return Err(MeasureError::MismatchedLattice(format!(
                "origin {} is not an integer multiple of step {}",
                self.origin, self.step
            )));
        }
        let tv = self.total_variation();
        let n_terms = series_length(tv, eps_series);
        // Edge weights below this threshold cannot move any partial sum by
        // more than eps_series/10 in total.
        let trim_tol = eps_series / (10.0 * (n_terms + 1) as f64);
        let mut acc = delta0.clone();
        let mut term = delta0;
        for n in 1..=n_terms {
            term = term.convolve(self)?.scaled(1.0 / n as f64).trim_edges(trim_tol);
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    /// Drop leading/trailing weights of magnitude `≤ tol` (windowing for the
    /// exponential series; interior weights are never touched).
    fn trim_edges(mut self, tol: f64) -> Self {
        let first = self.weights.iter().position(|w| w.abs() > tol);
        match first {
            None => Self::zero(self.step),
            Some(lo) => {
                let hi = self.weights.iter().rposition(|w| w.abs() > tol).unwrap();
                self.weights.drain(hi + 1..);
                self.weights.drain(..lo);
                self.origin += lo as f64 * self.step;
                self
            }
        }
    }

    /// Check whether every weight is `≥ −tol`. On failure the most negative
    /// `(location, weight)` pair is reported as witness.
    pub fn is_measure(&self, tol: f64) -> MeasureCheck {
        let mut witness: Option<(f64, f64)> = None;
        for (x, w) in self.points() {
            if w < -tol && witness.is_none_or(|(_, worst)| w < worst) {
                witness = Some((x, w));
            }
        }
        MeasureCheck { is_measure: witness.is_none(), witness }
    }
}

/// Result of the nonnegativity check behind the Cuppens criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureCheck {
    pub is_measure: bool,
    /// Most negative `(location, weight)` when the check fails.
    pub witness: Option<(f64, f64)>,
}

/// Smallest `N` with `tv^{N+1}/(N+1)! · e^{tv} < eps` (computed in log space
/// so large total variations do not overflow).
fn series_length(tv: f64, eps: f64) -> usize {
    if tv == 0.0 {
        return 0;
    }
    let log_eps = eps.ln();
    let mut log_term = tv.ln(); // log(tv^1/1!)
    let mut n = 0usize;
    while log_term + tv >= log_eps {
        n += 1;
        log_term += tv.ln() - ((n + 1) as f64).ln();
        assert!(n < 100_000, "series length bound failed to converge");
    }
    n
}
