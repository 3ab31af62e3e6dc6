//! Bayesian nonparametric posterior machinery for CRM priors with product
//! intensity `ν ⊗ G` (assumption: the atomless part has zero deterministic
//! component and stochastically independent weights and locations).
//!
//! The posterior after observing point measures `X_1, ..., X_m` has three
//! parts: prior fixed atoms reweighted by the likelihood of their observed
//! counts, one new fixed atom per distinct observed location (weight law
//! `∝ ν(dθ)·Π_j h(x_j|θ)`), and the ordinary component thinned to
//! `ν(dθ)·h(0|θ)^m`. The conjugacy checker certifies, for every count `x`
//! up to a stated bound, that the reweighted coefficient polynomials keep
//! their roots off the unit circle — which is exactly the condition for the
//! posterior to stay inside the QID point-process class.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crm::{
    sample as crm_sample, truncate_spec, CrmError, CrmSpec, TestFn, WeightsDensity, WeightsRate,
};
use crate::qid_lattice::{find_roots, FinitePmf, QidError};

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("posterior normalizer vanished for {context}")]
    DegeneratePosterior { context: String },
    #[error("new-atom posterior at ψ = {location} is not normalizable")]
    UnnormalizableNewAtom { location: f64 },
    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),
    #[error("invalid likelihood: {0}")]
    InvalidLikelihood(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error(transparent)]
    Crm(#[from] CrmError),
    #[error(transparent)]
    Qid(#[from] QidError),
}

/// Discrete likelihood `h(x|θ)`: a proper pmf over `x ∈ ℤ₊` for every
/// parameter `θ ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// `x | θ ~ Poisson(mean_scale · θ)`; `h(·|0) = δ_0`.
    Poisson { mean_scale: f64 },
    /// `x | θ ~ Binomial(θ trials, success)`; θ must be a nonnegative
    /// integer, and `h(·|0) = δ_0`.
    Binomial { success: f64 },
    /// Table rows: `rows[i][x] = h(x | thetas[i])`. Parameters must match
    /// table entries exactly; each row is a proper pmf.
    Table { thetas: Vec<f64>, rows: Vec<Vec<f64>> },
}

impl Likelihood {
    pub fn poisson(mean_scale: f64) -> Result<Self, BayesError> {
        if !mean_scale.is_finite() || mean_scale <= 0.0 {
            return Err(BayesError::InvalidLikelihood("poisson scale must be positive".into()));
        }
        Ok(Likelihood::Poisson { mean_scale })
    }

    pub fn binomial(success: f64) -> Result<Self, BayesError> {
        if !(0.0..1.0).contains(&success) || success <= 0.0 {
            return Err(BayesError::InvalidLikelihood(
                "binomial success probability must lie in (0, 1)".into(),
            ));
        }
        Ok(Likelihood::Binomial { success })
    }

    /// Table constructor; every row must sum to 1 within 1e-10.
    pub fn table(thetas: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self, BayesError> {
        if thetas.len() != rows.len() || thetas.is_empty() {
            return Err(BayesError::InvalidLikelihood(
                "table needs one row per theta".into(),
            ));
        }
        for (theta, row) in thetas.iter().zip(&rows) {
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(BayesError::InvalidLikelihood(format!(
                    "row for θ = {theta} has invalid entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(BayesError::InvalidLikelihood(format!(
                    "row for θ = {theta} sums to {sum}"
                )));
            }
        }
        Ok(Likelihood::Table { thetas, rows })
    }

    /// `h(x | θ)`.
    pub fn pmf(&self, x: u64, theta: f64) -> Result<f64, BayesError> {
        if theta < 0.0 {
            return Err(BayesError::InvalidLikelihood(format!("negative parameter {theta}")));
        }
        match self {
            Likelihood::Poisson { mean_scale } => {
                let mean = mean_scale * theta;
                if mean == 0.0 {
                    return Ok(if x == 0 { 1.0 } else { 0.0 });
                }
                // exp(x ln μ − μ − ln x!)
                let mut log_p = x as f64 * mean.ln() - mean;
                for k in 2..=x {
                    log_p -= (k as f64).ln();
                }
                Ok(log_p.exp())
            }
            Likelihood::Binomial { success } => {
                let trials = integer_theta(theta)?;
                if x > trials {
                    return Ok(0.0);
                }
                if trials == 0 {
                    return Ok(if x == 0 { 1.0 } else { 0.0 });
                }
                let mut log_p = x as f64 * success.ln()
                    + (trials - x) as f64 * (1.0 - success).ln();
                // ln C(trials, x)
                for k in 0..x {
                    log_p += ((trials - k) as f64).ln() - ((k + 1) as f64).ln();
                }
                Ok(log_p.exp())
            }
            Likelihood::Table { thetas, rows } => {
                let i = thetas
                    .iter()
                    .position(|t| *t == theta)
                    .ok_or_else(|| {
                        BayesError::InvalidLikelihood(format!("no table row for θ = {theta}"))
                    })?;
                Ok(rows[i].get(x as usize).copied().unwrap_or(0.0))
            }
        }
    }

    /// The rate λ with `h(0|θ) = e^{−λθ}` for all θ, when the zero
    /// probability is exactly exponential in the parameter (true for both
    /// built-ins; tables have no such structure).
    pub fn zero_prob_exponential_rate(&self) -> Option<f64> {
        match self {
            Likelihood::Poisson { mean_scale } => Some(*mean_scale),
            Likelihood::Binomial { success } => Some(-(1.0 - success).ln()),
            Likelihood::Table { .. } => None,
        }
    }

    /// Numeric properness check: `Σ_x h(x|θ)` accumulated until the summed
    /// tail bound drops below 1e-13, compared against 1 within `tol`.
    pub fn is_proper(&self, theta: f64, tol: f64) -> Result<bool, BayesError> {
        match self {
            Likelihood::Table { .. } => {
                let mut sum = 0.0;
                let mut x = 0u64;
                loop {
                    let p = self.pmf(x, theta)?;
                    sum += p;
                    x += 1;
                    if x > 10_000 {
                        break;
                    }
                }
                Ok((sum - 1.0).abs() <= tol)
            }
            _ => {
                let mut sum = 0.0;
                let mut x = 0u64;
                let mut last = f64::INFINITY;
                loop {
                    let p = self.pmf(x, theta)?;
                    sum += p;
                    // Both built-ins decay at least geometrically once the
                    // terms start shrinking; bound the tail by a ratio test.
                    if x > 4 && p < last {
                        let ratio = p / last;
                        if ratio < 0.9 && p * ratio / (1.0 - ratio) < 1e-13 {
                            break;
                        }
                    }
                    last = p.max(1e-300);
                    x += 1;
                    if x > 100_000 {
                        break;
                    }
                }
                Ok((sum - 1.0).abs() <= tol)
            }
        }
    }

    /// Draw one count from `h(· | θ)`.
    pub fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> Result<u64, BayesError> {
        match self {
            Likelihood::Poisson { mean_scale } => {
                let mean = mean_scale * theta;
                if mean <= 0.0 {
                    return Ok(0);
                }
                let dist = rand_distr::Poisson::new(mean)
                    .map_err(|e| BayesError::InvalidLikelihood(e.to_string()))?;
                Ok(rand_distr::Distribution::sample(&dist, rng) as u64)
            }
            Likelihood::Binomial { success } => {
                let trials = integer_theta(theta)?;
                if trials == 0 {
                    return Ok(0);
                }
                let dist = rand_distr::Binomial::new(trials, *success)
                    .map_err(|e| BayesError::InvalidLikelihood(e.to_string()))?;
                Ok(rand_distr::Distribution::sample(&dist, rng))
            }
            Likelihood::Table { .. } => {
                let target: f64 = rng.random();
                let mut acc = 0.0;
                let mut x = 0u64;
                loop {
                    acc += self.pmf(x, theta)?;
                    if acc >= target || x > 100_000 {
                        return Ok(x);
                    }
                    x += 1;
                }
            }
        }
    }
}

fn integer_theta(theta: f64) -> Result<u64, BayesError> {
    let rounded = theta.round();
    if (theta - rounded).abs() > 1e-9 || rounded < 0.0 {
        return Err(BayesError::InvalidLikelihood(format!(
            "binomial trials parameter must be a nonnegative integer, got {theta}"
        )));
    }
    Ok(rounded as u64)
}

/// One individual's observation: a point measure `Σ x_k δ_{ψ_k}` recorded
/// as `(ψ, x)` pairs with `x ≥ 1` (zero draws are unobserved by
/// definition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointObservation {
    pub atoms: Vec<(f64, u64)>,
}

impl PointObservation {
    pub fn new(atoms: Vec<(f64, u64)>) -> Result<Self, BayesError> {
        if atoms.iter().any(|&(_, x)| x == 0) {
            return Err(BayesError::InvalidObservation(
                "observed counts must be at least 1".into(),
            ));
        }
        let mut seen = Vec::new();
        for &(psi, _) in &atoms {
            if seen.contains(&psi) {
                return Err(BayesError::InvalidObservation(format!(
                    "duplicate location {psi} within one individual"
                )));
            }
            seen.push(psi);
        }
        Ok(Self { atoms })
    }

    /// Count at an exact location (0 when the location is absent).
    pub fn count_at(&self, psi: f64) -> u64 {
        self.atoms.iter().find(|&&(p, _)| p == psi).map_or(0, |&(_, x)| x)
    }
}

/// A CRM prior under the product-intensity assumption: the deterministic
/// part must vanish. Locations are matched to atoms by exact coordinate
/// equality — the model says a location either coincides with an existing
/// atom or is new.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub spec: CrmSpec,
}

impl PriorSpec {
    pub fn new(spec: CrmSpec) -> Result<Self, BayesError> {
        if spec.drift.total_mass() != 0.0 {
            return Err(BayesError::UnsupportedPrior(
                "the prior's deterministic component must vanish".into(),
            ));
        }
        spec.weights_rate.validate()?;
        Ok(Self { spec })
    }
}

/// Exact posterior of a prior in the finite class given observations
/// `X_1, ..., X_m`.
///
/// Part 1: each prior fixed atom's weight law is reweighted by
/// `Π_j h(x_j|θ)` over its lattice and renormalized. Part 2: every distinct
/// new location gets a fixed atom with law `∝ ν(dθ)·Π_j h(x_j|θ)` (exact on
/// atom-form ν; discretized onto an adaptive grid for density-form ν).
/// Part 3: the ordinary weights rate becomes the unnormalized measure
/// `ν(dθ)·h(0|θ)^m` (pointwise on atoms; an exponential tilt on densities,
/// which is exact for the built-in likelihoods).
pub fn posterior(
    prior: &PriorSpec,
    observations: &[PointObservation],
    likelihood: &Likelihood,
) -> Result<PriorSpec, BayesError> {
    if observations.is_empty() {
        return Ok(prior.clone());
    }
    let m = observations.len();
    let mut spec = prior.spec.clone();

    // Part 1: reweight prior fixed atoms.
    for atom in spec.fixed_atoms.iter_mut() {
        let counts: Vec<u64> =
            observations.iter().map(|obs| obs.count_at(atom.location)).collect();
        let mut weights = Vec::with_capacity(atom.weight_law.weights().len());
        for (theta, w) in atom.weight_law.points() {
            let mut v = w;
            for &x in &counts {
                if v == 0.0 {
                    break;
                }
                v *= likelihood.pmf(x, theta)?;
            }
            weights.push(v);
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(BayesError::DegeneratePosterior {
                context: format!("fixed atom at ψ = {}", atom.location),
            });
        }
        atom.weight_law =
            FinitePmf::normalized(atom.weight_law.origin(), atom.weight_law.step(), weights)?;
    }

    // Part 2: new atoms at observed locations absent from the prior.
    let mut new_locations: Vec<f64> = Vec::new();
    for obs in observations {
        for &(psi, _) in &obs.atoms {
            let known = prior.spec.fixed_atoms.iter().any(|a| a.location == psi)
                || new_locations.contains(&psi);
            if !known {
                new_locations.push(psi);
            }
        }
    }
    new_locations.sort_by(f64::total_cmp);
    for psi in new_locations {
        let counts: Vec<u64> = observations.iter().map(|obs| obs.count_at(psi)).collect();
        let weight_law = new_atom_law(&prior.spec.weights_rate, &counts, likelihood, psi)?;
        spec.fixed_atoms.push(crate::crm::FixedAtom { location: psi, weight_law });
    }
    spec.fixed_atoms.sort_by(|a, b| a.location.total_cmp(&b.location));

    // Part 3: thin the ordinary component by h(0|θ)^m.
    spec.weights_rate = thin_weights_rate(&prior.spec.weights_rate, likelihood, m)?;

    Ok(PriorSpec { spec })
}

/// `ν(dθ)·h(0|θ)^m` as a weights-rate measure.
fn thin_weights_rate(
    nu: &WeightsRate,
    likelihood: &Likelihood,
    m: usize,
) -> Result<WeightsRate, BayesError> {
    match nu {
        WeightsRate::Atoms(atoms) => {
            let mut thinned = Vec::with_capacity(atoms.len());
            for &(theta, mass) in atoms {
                let z = likelihood.pmf(0, theta)?;
                // One multiplication per individual, so updating on a batch
                // and updating sequentially produce identical floats.
                let mut new_mass = mass;
                for _ in 0..m {
                    new_mass *= z;
                }
                if new_mass > 0.0 {
                    thinned.push((theta, new_mass));
                }
            }
            Ok(WeightsRate::Atoms(thinned))
        }
        WeightsRate::Density(d) => {
            let rate = likelihood.zero_prob_exponential_rate().ok_or_else(|| {
                BayesError::UnsupportedPrior(
                    "density-form weights rate can only be thinned by a likelihood with \
                     exponential zero probability"
                        .into(),
                )
            })?;
            let mut tilt = d.tilt;
            for _ in 0..m {
                tilt += rate;
            }
            Ok(WeightsRate::Density(WeightsDensity { form: d.form.clone(), lower: d.lower, tilt }))
        }
    }
}

/// Grid resolution used when a new-atom law must be built from a
/// density-form weights rate.
const NEW_ATOM_GRID: usize = 4001;

/// Weight law of a new fixed atom: `∝ ν(dθ)·Π_j h(x_j|θ)`.
fn new_atom_law(
    nu: &WeightsRate,
    counts: &[u64],
    likelihood: &Likelihood,
    psi: f64,
) -> Result<FinitePmf, BayesError> {
    match nu {
        WeightsRate::Atoms(atoms) => {
            if atoms.is_empty() {
                return Err(BayesError::UnnormalizableNewAtom { location: psi });
            }
            // Embed the atom positions into a uniform lattice.
            let step = lattice_step(atoms)
                .ok_or_else(|| {
                    BayesError::UnsupportedPrior(format!(
                        "weights-rate atoms are not lattice-aligned; cannot build the \
                         new-atom law at ψ = {psi}"
                    ))
                })?;
            let origin = atoms[0].0;
            let top = atoms.last().unwrap().0;
            let len = ((top - origin) / step).round() as usize + 1;
            let mut weights = vec![0.0; len];
            for &(theta, mass) in atoms {
                let idx = ((theta - origin) / step).round() as usize;
                let mut v = mass;
                for &x in counts {
                    if v == 0.0 {
                        break;
                    }
                    v *= likelihood.pmf(x, theta)?;
                }
                weights[idx] += v;
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                return Err(BayesError::DegeneratePosterior {
                    context: format!("new atom at ψ = {psi}"),
                });
            }
            Ok(FinitePmf::normalized(origin, step, weights)?)
        }
        WeightsRate::Density(d) => {
            // Adaptive grid: find the effective support of
            // q(θ) = ν(θ)·Π h(x_j|θ), then lay a uniform lattice over it.
            let q = |theta: f64| -> Result<f64, BayesError> {
                let mut v = d.eval(theta);
                for &x in counts {
                    if v == 0.0 {
                        break;
                    }
                    v *= likelihood.pmf(x, theta)?;
                }
                Ok(v)
            };
            let lo = d.lower.max(1e-12);
            let mut hi = (lo + 1.0).max(1.0);
            let mut peak: f64 = 0.0;
            for _ in 0..48 {
                let mut probe_peak: f64 = 0.0;
                let steps = 256;
                for i in 0..=steps {
                    let theta = lo + (hi - lo) * i as f64 / steps as f64;
                    probe_peak = probe_peak.max(q(theta)?);
                }
                peak = peak.max(probe_peak);
                if q(hi)? < peak * 1e-18 && peak > 0.0 {
                    break;
                }
                hi *= 2.0;
            }
            if peak <= 0.0 {
                return Err(BayesError::UnnormalizableNewAtom { location: psi });
            }
            let step = (hi - lo) / (NEW_ATOM_GRID - 1) as f64;
            let mut weights = Vec::with_capacity(NEW_ATOM_GRID);
            for i in 0..NEW_ATOM_GRID {
                weights.push(q(lo + i as f64 * step)?);
            }
            Ok(FinitePmf::normalized(lo, step, weights)?)
        }
    }
}

/// Common lattice step of a sorted atom list, if one exists.
fn lattice_step(atoms: &[(f64, f64)]) -> Option<f64> {
    if atoms.len() == 1 {
        return Some(1.0);
    }
    let origin = atoms[0].0;
    let mut step = f64::INFINITY;
    for pair in atoms.windows(2) {
        let d = pair[1].0 - pair[0].0;
        if d > 0.0 {
            step = step.min(d);
        }
    }
    if !step.is_finite() {
        return None;
    }
    for &(theta, _) in atoms {
        let k = (theta - origin) / step;
        if (k - k.round()).abs() > 1e-9 {
            return None;
        }
    }
    Some(step)
}

/// Simulate `m` individuals conditional on one draw of the prior:
/// `Θ ~ prior` once, then `x_{j,k} ~ h(·|θ_k)` independently across
/// individuals and atoms, recording only nonzero counts. Reproducible:
/// the prior draw uses `seed` and individual `j` draws on ChaCha stream
/// `j` of a seed derived from it.
pub fn simulate_dataset(
    prior: &PriorSpec,
    likelihood: &Likelihood,
    m: usize,
    seed: u64,
) -> Result<Vec<PointObservation>, BayesError> {
    let theta = crm_sample(&prior.spec, seed, 1)?.into_iter().next().expect("one replicate");
    let atoms: Vec<(f64, f64)> =
        theta.ordinary.iter().chain(theta.fixed.iter()).copied().collect();
    let mut observations = Vec::with_capacity(m);
    let obs_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    for j in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(obs_seed);
        rng.set_stream(j as u64);
        let mut recorded = Vec::new();
        for &(psi, weight) in &atoms {
            let x = likelihood.sample(weight, &mut rng)?;
            if x >= 1 {
                recorded.push((psi, x));
            }
        }
        observations.push(PointObservation { atoms: recorded });
    }
    Ok(observations)
}

/// Which polynomial a conjugacy-check entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckTarget {
    /// Fixed atom index `k` in the prior's atom list.
    Fixed(usize),
    /// The weights-rate vector.
    Ordinary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyEntry {
    pub target: CheckTarget,
    pub x: u64,
    /// Minimum circle distance over the roots of the reweighted polynomial;
    /// infinite when the polynomial vanishes identically (that count is
    /// unobservable at this atom).
    pub min_circle_distance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyReport {
    pub x_max: u64,
    pub eps_circle: f64,
    pub entries: Vec<ConjugacyEntry>,
    /// True when every checked polynomial clears the band. The certificate
    /// covers only `x ≤ x_max`; the report never claims more.
    pub conjugate: bool,
}

impl ConjugacyReport {
    pub fn violations(&self) -> impl Iterator<Item = &ConjugacyEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Automatic-conjugacy check for point-process priors: for every fixed-atom
/// law `(a_j)` and for the weights-rate vector `(b_j)`, and for every count
/// `x = 1..=x_max`, the polynomial `w ↦ Σ_j h(x|j)·c_j·w^j` must keep its
/// roots off the unit circle. Requires finite ℤ₊ support everywhere.
pub fn conjugacy_check(
    prior: &PriorSpec,
    likelihood: &Likelihood,
    x_max: u64,
    eps_circle: f64,
) -> Result<ConjugacyReport, BayesError> {
    let mut targets: Vec<(CheckTarget, Vec<(u64, f64)>)> = Vec::new();
    for (k, atom) in prior.spec.fixed_atoms.iter().enumerate() {
        let law = &atom.weight_law;
        if law.step() != 1.0 || law.origin() < 0.0 || law.origin().fract() != 0.0 {
            return Err(BayesError::UnsupportedPrior(format!(
                "fixed atom {k} is not supported on ℤ₊"
            )));
        }
        let coeffs = law
            .points()
            .map(|(theta, w)| (theta as u64, w))
            .collect();
        targets.push((CheckTarget::Fixed(k), coeffs));
    }
    match &prior.spec.weights_rate {
        WeightsRate::Atoms(atoms) => {
            if !atoms.is_empty() {
                let mut coeffs = Vec::with_capacity(atoms.len());
                for &(theta, mass) in atoms {
                    if theta < 1.0 || (theta - theta.round()).abs() > 1e-9 {
                        return Err(BayesError::UnsupportedPrior(
                            "weights-rate atoms must sit on positive integers".into(),
                        ));
                    }
                    coeffs.push((theta.round() as u64, mass));
                }
                targets.push((CheckTarget::Ordinary, coeffs));
            }
        }
        WeightsRate::Density(_) => {
            return Err(BayesError::UnsupportedPrior(
                "the conjugacy check needs an atom-form weights rate".into(),
            ));
        }
    }

    let mut entries = Vec::new();
    let mut conjugate = true;
    for (target, coeffs) in &targets {
        let top = coeffs.iter().map(|&(j, _)| j).max().unwrap_or(0) as usize;
        for x in 1..=x_max {
            let mut poly = vec![0.0; top + 1];
            for &(j, c) in coeffs {
                poly[j as usize] = c * likelihood.pmf(x, j as f64)?;
            }
            let degree = poly.iter().rposition(|&c| c != 0.0);
            let (distance, passed) = match degree {
                // Identically zero: the count x cannot be observed here.
                None => (f64::INFINITY, true),
                Some(d) => {
                    let set = find_roots(&poly[..=d])?;
                    let dist = set.min_circle_distance();
                    (dist, dist > eps_circle)
                }
            };
            if !passed {
                conjugate = false;
            }
            entries.push(ConjugacyEntry {
                target: *target,
                x,
                min_circle_distance: distance,
                passed,
            });
        }
    }
    Ok(ConjugacyReport { x_max, eps_circle, entries, conjugate })
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationConsistencyReport {
    /// Representations agree (atoms bitwise; densities on a shared grid
    /// within 1e-12).
    pub representations_equal: bool,
    /// Largest pointwise discrepancy observed.
    pub max_discrepancy: f64,
    /// Laplace-functional gaps of the two ordinary posteriors for the
    /// default test-function family.
    pub laplace_gaps: Vec<f64>,
}

/// Verify that truncating commutes with the posterior update on the
/// ordinary component: `ν_{n,post} = ν_{post} restricted to (1/n, ∞)`.
/// Both sides are computed along their own route (truncate-then-update vs
/// update-then-restrict) and compared on the representation.
pub fn posterior_truncation_consistency(
    prior: &PriorSpec,
    n: usize,
    observations: &[PointObservation],
    likelihood: &Likelihood,
) -> Result<TruncationConsistencyReport, BayesError> {
    assert!(n >= 1);
    let m = observations.len();
    // Route 1: full posterior, then restrict.
    let full_thinned = thin_weights_rate(&prior.spec.weights_rate, likelihood, m)?;
    let restricted = full_thinned.restricted_above(1.0 / n as f64);
    // Route 2: truncate the prior, then update.
    let truncated_prior = PriorSpec::new(truncate_spec(&prior.spec, n))?;
    let truncated_thinned =
        thin_weights_rate(&truncated_prior.spec.weights_rate, likelihood, m)?;

    let (representations_equal, max_discrepancy) =
        weights_rates_agree(&restricted, &truncated_thinned);

    let mut laplace_gaps = Vec::new();
    for value in [0.5, 1.0, 2.0] {
        let f = TestFn::constant_on(0.0, 1.0, value)?;
        let mut gap = 0.0;
        for &(lo, hi, v) in &f.pieces {
            let g = prior.spec.location_mass(&[(lo, hi)]);
            gap += g
                * (full_thinned.one_minus_exp_integral(v, 0.0, f64::INFINITY)
                    - truncated_thinned.one_minus_exp_integral(v, 0.0, f64::INFINITY));
        }
        laplace_gaps.push(gap);
    }
    Ok(TruncationConsistencyReport { representations_equal, max_discrepancy, laplace_gaps })
}

fn weights_rates_agree(a: &WeightsRate, b: &WeightsRate) -> (bool, f64) {
    match (a, b) {
        (WeightsRate::Atoms(xs), WeightsRate::Atoms(ys)) => {
            if xs.len() != ys.len() {
                return (false, f64::INFINITY);
            }
            let mut worst = 0.0f64;
            for (&(x0, m0), &(x1, m1)) in xs.iter().zip(ys) {
                if x0 != x1 {
                    return (false, f64::INFINITY);
                }
                worst = worst.max((m0 - m1).abs());
            }
            (worst == 0.0, worst)
        }
        (WeightsRate::Density(da), WeightsRate::Density(db)) => {
            // Shared evaluation grid across both supports.
            let lo = da.lower.min(db.lower).max(1e-9);
            let hi = 2.0 * (da.lower.max(db.lower) + 10.0);
            let mut worst = 0.0f64;
            let steps = 2000;
            for i in 0..=steps {
                let x = lo + (hi - lo) * i as f64 / steps as f64;
                worst = worst.max((da.eval(x) - db.eval(x)).abs());
            }
            (worst <= 1e-12, worst)
        }
        _ => (false, f64::INFINITY),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crm::{Domain, FixedAtom, PiecewiseDensity};
    use crate::qid_lattice::{classify_qid, QidVerdict};

    fn unit_prior(weights_rate: WeightsRate, fixed_atoms: Vec<FixedAtom>) -> PriorSpec {
        PriorSpec::new(CrmSpec {
            domain: Domain::new(vec![(0.0, 1.0)]).unwrap(),
            drift: PiecewiseDensity::empty(),
            weights_rate,
            locations: PiecewiseDensity::new(vec![(0.0, 1.0, 1.0)]).unwrap(),
            fixed_atoms,
        })
        .unwrap()
    }

    fn atom(location: f64, origin: f64, weights: &[f64]) -> FixedAtom {
        FixedAtom {
            location,
            weight_law: FinitePmf::new(origin, 1.0, weights.to_vec()).unwrap(),
        }
    }

    #[test]
    fn poisson_pmf_values() {
        let h = Likelihood::poisson(1.0).unwrap();
        // h(3|1) = e⁻¹/6, h(3|2) = 8e⁻²/6
        assert!((h.pmf(3, 1.0).unwrap() - (-1.0f64).exp() / 6.0).abs() < 1e-15);
        assert!((h.pmf(3, 2.0).unwrap() - 8.0 * (-2.0f64).exp() / 6.0).abs() < 1e-15);
        // θ = 0 is a point mass at 0.
        assert_eq!(h.pmf(0, 0.0).unwrap(), 1.0);
        assert_eq!(h.pmf(2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn binomial_pmf_values() {
        let h = Likelihood::binomial(0.25).unwrap();
        assert_eq!(h.pmf(0, 0.0).unwrap(), 1.0);
        let p = h.pmf(2, 4.0).unwrap();
        let want = 6.0 * 0.25f64.powi(2) * 0.75f64.powi(2);
        assert!((p - want).abs() < 1e-14);
        assert!(h.pmf(1, 2.5).is_err());
    }

    #[test]
    fn likelihoods_are_proper() {
        let h = Likelihood::poisson(1.0).unwrap();
        for theta in [0.0, 0.5, 1.0, 3.0, 10.0] {
            assert!(h.is_proper(theta, 1e-10).unwrap(), "theta={theta}");
        }
        let b = Likelihood::binomial(0.3).unwrap();
        for theta in [0.0, 1.0, 5.0, 20.0] {
            assert!(b.is_proper(theta, 1e-10).unwrap());
        }
        let t = Likelihood::table(
            vec![0.0, 1.0],
            vec![vec![1.0], vec![0.25, 0.5, 0.25]],
        )
        .unwrap();
        assert!(t.is_proper(1.0, 1e-10).unwrap());
    }

    #[test]
    fn empty_observation_set_returns_prior() {
        let prior = unit_prior(
            WeightsRate::Atoms(vec![(1.0, 0.5)]),
            vec![atom(0.5, 1.0, &[0.5, 0.5])],
        );
        let h = Likelihood::poisson(1.0).unwrap();
        let post = posterior(&prior, &[], &h).unwrap();
        assert_eq!(post, prior);
    }

    /// Fixture: prior ½δ₁ + ½δ₂ at a fixed atom, Poisson likelihood, one
    /// observation x = 3 → weights ∝ (e⁻¹/6, 8e⁻²/6) ≈ (0.2536, 0.7464).
    #[test]
    fn posterior_fixed_atom_fixture() {
        let prior = unit_prior(WeightsRate::empty(), vec![atom(0.5, 1.0, &[0.5, 0.5])]);
        let h = Likelihood::poisson(1.0).unwrap();
        let obs = vec![PointObservation::new(vec![(0.5, 3)]).unwrap()];
        let post = posterior(&prior, &obs, &h).unwrap();
        let w = post.spec.fixed_atoms[0].weight_law.weights();
        assert!((w[0] - 0.253_611_714_262_028_3).abs() < 1e-12, "w0 = {}", w[0]);
        assert!((w[1] - 0.746_388_285_737_971_7).abs() < 1e-12, "w1 = {}", w[1]);
    }

    /// ν = 0.7δ₁, Poisson, m = 3, nothing observed at ordinary atoms:
    /// ν_post = 0.7·e⁻³·δ₁.
    #[test]
    fn posterior_thins_ordinary_component() {
        let prior = unit_prior(WeightsRate::Atoms(vec![(1.0, 0.7)]), Vec::new());
        let h = Likelihood::poisson(1.0).unwrap();
        let obs = vec![
            PointObservation::new(vec![]).unwrap(),
            PointObservation::new(vec![]).unwrap(),
            PointObservation::new(vec![]).unwrap(),
        ];
        let post = posterior(&prior, &obs, &h).unwrap();
        match &post.spec.weights_rate {
            WeightsRate::Atoms(atoms) => {
                assert_eq!(atoms.len(), 1);
                assert_eq!(atoms[0].0, 1.0);
                assert!((atoms[0].1 - 0.7 * (-3.0f64).exp()).abs() < 1e-15);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn posterior_creates_new_atoms_from_atom_nu() {
        let prior = unit_prior(WeightsRate::Atoms(vec![(1.0, 0.5), (2.0, 0.25)]), Vec::new());
        let h = Likelihood::poisson(1.0).unwrap();
        let obs = vec![PointObservation::new(vec![(0.3, 2)]).unwrap()];
        let post = posterior(&prior, &obs, &h).unwrap();
        assert_eq!(post.spec.fixed_atoms.len(), 1);
        let new_atom = &post.spec.fixed_atoms[0];
        assert_eq!(new_atom.location, 0.3);
        // ∝ (0.5·h(2|1), 0.25·h(2|2))
        let a = 0.5 * h.pmf(2, 1.0).unwrap();
        let b = 0.25 * h.pmf(2, 2.0).unwrap();
        let w = new_atom.weight_law.weights();
        assert!((w[0] - a / (a + b)).abs() < 1e-14);
        assert!((w[1] - b / (a + b)).abs() < 1e-14);
    }

    #[test]
    fn posterior_new_atom_from_gamma_density_matches_gamma_law() {
        // ν(dθ) = θ⁻¹e^{−θ}dθ with Poisson counts x₁ = 3, x₂ = 2 gives the
        // Gamma(5, 3) posterior; check the grid law's mean and variance.
        let prior = unit_prior(
            WeightsRate::Density(WeightsDensity {
                form: crate::crm::DensityForm::GammaType { coef: 1.0, rate: 1.0 },
                lower: 0.0,
                tilt: 0.0,
            }),
            Vec::new(),
        );
        let h = Likelihood::poisson(1.0).unwrap();
        let obs = vec![
            PointObservation::new(vec![(0.4, 3)]).unwrap(),
            PointObservation::new(vec![(0.4, 2)]).unwrap(),
        ];
        let post = posterior(&prior, &obs, &h).unwrap();
        let law = &post.spec.fixed_atoms[0].weight_law;
        let mean: f64 = law.points().map(|(x, w)| x * w).sum();
        let var: f64 = law.points().map(|(x, w)| (x - mean).powi(2) * w).sum();
        assert!((mean - 5.0 / 3.0).abs() < 1e-3, "mean = {mean}");
        assert!((var - 5.0 / 9.0).abs() < 1e-3, "var = {var}");
        // And the thinned ordinary part is the tilted gamma form.
        match &post.spec.weights_rate {
            WeightsRate::Density(d) => assert_eq!(d.tilt, 2.0),
            _ => panic!(),
        }
    }

    #[test]
    fn sequential_updates_compose() {
        let prior = unit_prior(
            WeightsRate::Atoms(vec![(1.0, 0.6), (2.0, 0.4)]),
            vec![atom(0.5, 0.0, &[0.3, 0.4, 0.3])],
        );
        let h = Likelihood::poisson(0.8).unwrap();
        let obs1 = vec![PointObservation::new(vec![(0.5, 1), (0.2, 2)]).unwrap()];
        let obs2 = vec![PointObservation::new(vec![(0.2, 1)]).unwrap()];
        let all: Vec<PointObservation> =
            obs1.iter().cloned().chain(obs2.iter().cloned()).collect();
        let joint = posterior(&prior, &all, &h).unwrap();
        let staged = posterior(&posterior(&prior, &obs1, &h).unwrap(), &obs2, &h).unwrap();
        // Identical in exact arithmetic; normalization order costs a few ulps.
        assert_eq!(joint.spec.fixed_atoms.len(), staged.spec.fixed_atoms.len());
        for (a, b) in joint.spec.fixed_atoms.iter().zip(&staged.spec.fixed_atoms) {
            assert_eq!(a.location, b.location);
            assert!(
                a.weight_law.tv_distance(&b.weight_law).unwrap() < 1e-12,
                "atom at {}",
                a.location
            );
        }
        let (eq, worst) =
            weights_rates_agree(&joint.spec.weights_rate, &staged.spec.weights_rate);
        assert!(eq || worst < 1e-15);
    }

    #[test]
    fn thinning_never_increases_mass() {
        let prior = unit_prior(
            WeightsRate::Atoms(vec![(1.0, 0.5), (2.0, 0.25), (3.0, 0.125)]),
            Vec::new(),
        );
        let h = Likelihood::poisson(0.5).unwrap();
        let obs = vec![PointObservation::new(vec![]).unwrap(); 2];
        let post = posterior(&prior, &obs, &h).unwrap();
        let before = prior.spec.weights_rate.total_mass().unwrap();
        let after = post.spec.weights_rate.total_mass().unwrap();
        assert!(after <= before);
        match (&prior.spec.weights_rate, &post.spec.weights_rate) {
            (WeightsRate::Atoms(a), WeightsRate::Atoms(b)) => {
                for (&(x0, m0), &(x1, m1)) in a.iter().zip(b) {
                    assert_eq!(x0, x1);
                    assert!(m1 <= m0);
                    assert!((m1 - m0 * h.pmf(0, x0).unwrap().powi(2)).abs() < 1e-15);
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn simulate_dataset_trivial_cases() {
        let prior = unit_prior(WeightsRate::empty(), Vec::new());
        let h = Likelihood::poisson(1.0).unwrap();
        let data = simulate_dataset(&prior, &h, 5, 9).unwrap();
        assert_eq!(data.len(), 5);
        assert!(data.iter().all(|d| d.atoms.is_empty()));

        // A likelihood with h(0|θ) = 1 everywhere observes nothing.
        let prior = unit_prior(WeightsRate::Atoms(vec![(1.0, 2.0)]), Vec::new());
        let degenerate = Likelihood::table(vec![0.0, 1.0], vec![vec![1.0], vec![1.0]]).unwrap();
        let data = simulate_dataset(&prior, &degenerate, 4, 9).unwrap();
        assert!(data.iter().all(|d| d.atoms.is_empty()));
    }

    #[test]
    fn simulate_dataset_zero_frequency_matches_expectation() {
        // One fixed atom with law (2/3)δ₀ + (1/3)δ₁ under Poisson(θ):
        // P(x = 0) = 2/3 + e⁻¹/3.
        let prior = unit_prior(WeightsRate::empty(), vec![atom(0.5, 0.0, &[2.0 / 3.0, 1.0 / 3.0])]);
        let h = Likelihood::poisson(1.0).unwrap();
        let runs = 10_000;
        let mut zeros = 0usize;
        for seed in 0..runs {
            let data = simulate_dataset(&prior, &h, 1, seed as u64).unwrap();
            if data[0].atoms.is_empty() {
                zeros += 1;
            }
        }
        let p = 2.0 / 3.0 + (-1.0f64).exp() / 3.0;
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        let freq = zeros as f64 / runs as f64;
        assert!((freq - p).abs() < 3.0 * se, "freq = {freq}, want ≈ {p}");
    }

    #[test]
    fn conjugacy_monomial_always_passes() {
        // Single-support-point law: every reweighted polynomial is a
        // monomial with all roots at 0.
        let prior = unit_prior(WeightsRate::empty(), vec![atom(0.5, 2.0, &[1.0])]);
        let h = Likelihood::poisson(1.0).unwrap();
        let report = conjugacy_check(&prior, &h, 10, 1e-9).unwrap();
        assert!(report.conjugate);
    }

    #[test]
    fn conjugacy_detects_engineered_circle_root() {
        // h(1|0) = h(1|1) over the law ½δ₀ + ½δ₁: the x = 1 polynomial is
        // ∝ ½ + ½w with root −1 on the circle.
        let prior = unit_prior(WeightsRate::empty(), vec![atom(0.5, 0.0, &[0.5, 0.5])]);
        let h = Likelihood::table(
            vec![0.0, 1.0],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        let report = conjugacy_check(&prior, &h, 3, 1e-9).unwrap();
        assert!(!report.conjugate);
        let violation = report.violations().next().unwrap();
        assert_eq!(violation.target, CheckTarget::Fixed(0));
        assert_eq!(violation.x, 1);
        assert!(violation.min_circle_distance <= 1e-9);
    }

    #[test]
    fn conjugacy_poisson_zero_column_leaves_monomials() {
        // (2/3)δ₀ + (1/3)δ₁ with Poisson: h(x|0) = 0 for x ≥ 1 kills the
        // constant coefficient, leaving a monomial — passes every x.
        let prior = unit_prior(WeightsRate::empty(), vec![atom(0.5, 0.0, &[2.0 / 3.0, 1.0 / 3.0])]);
        let h = Likelihood::poisson(1.0).unwrap();
        let report = conjugacy_check(&prior, &h, 8, 1e-9).unwrap();
        assert!(report.conjugate);
    }

    #[test]
    fn conjugacy_requires_integer_lattice() {
        let prior = unit_prior(
            WeightsRate::empty(),
            vec![FixedAtom {
                location: 0.5,
                weight_law: FinitePmf::new(0.0, 0.5, vec![0.5, 0.5]).unwrap(),
            }],
        );
        let h = Likelihood::poisson(1.0).unwrap();
        assert!(matches!(
            conjugacy_check(&prior, &h, 3, 1e-9),
            Err(BayesError::UnsupportedPrior(_))
        ));
    }

    #[test]
    fn conjugacy_pass_implies_posterior_atoms_stay_qid() {
        let prior = unit_prior(
            WeightsRate::Atoms(vec![(1.0, 0.4), (2.0, 0.2)]),
            vec![atom(0.5, 0.0, &[0.5, 0.3, 0.2])],
        );
        let h = Likelihood::poisson(0.7).unwrap();
        let report = conjugacy_check(&prior, &h, 12, 1e-9).unwrap();
        assert!(report.conjugate);
        let obs = vec![
            PointObservation::new(vec![(0.5, 2), (0.25, 1)]).unwrap(),
            PointObservation::new(vec![(0.5, 1)]).unwrap(),
        ];
        let post = posterior(&prior, &obs, &h).unwrap();
        for a in &post.spec.fixed_atoms {
            let verdict = classify_qid(&a.weight_law, 1e-9).unwrap();
            assert!(
                matches!(verdict, QidVerdict::Qid),
                "atom at {} gave {verdict}",
                a.location
            );
        }
    }

    #[test]
    fn truncation_consistency_on_atoms_is_exact() {
        let prior = unit_prior(
            WeightsRate::Atoms(vec![(0.05, 0.3), (0.5, 0.4), (2.0, 0.2)]),
            Vec::new(),
        );
        let h = Likelihood::poisson(1.0).unwrap();
        let obs = vec![PointObservation::new(vec![]).unwrap(); 2];
        let report = posterior_truncation_consistency(&prior, 10, &obs, &h).unwrap();
        assert!(report.representations_equal, "max diff {}", report.max_discrepancy);
    }

    #[test]
    fn truncation_consistency_on_gamma_density() {
        let prior = unit_prior(
            WeightsRate::Density(WeightsDensity {
                form: crate::crm::DensityForm::GammaType { coef: 1.0, rate: 1.0 },
                lower: 0.0,
                tilt: 0.0,
            }),
            Vec::new(),
        );
        let h = Likelihood::poisson(1.0).unwrap();
        let obs = vec![PointObservation::new(vec![]).unwrap(); 2];
        let report = posterior_truncation_consistency(&prior, 10, &obs, &h).unwrap();
        assert!(report.representations_equal, "max diff {}", report.max_discrepancy);

        // The Laplace gap shrinks along the exhaustion.
        let mut last = f64::INFINITY;
        for n in [1usize, 2, 5, 10, 20] {
            let r = posterior_truncation_consistency(&prior, n, &obs, &h).unwrap();
            let gap = r.laplace_gaps[1].abs();
            assert!(gap <= last + 1e-15, "n = {n}");
            last = gap;
        }
    }

    #[test]
    fn posterior_mode_recovers_generating_weight() {
        // Identifiability sanity: one fixed atom, weight drawn from the
        // prior, data simulated conditionally; the posterior mode matches
        // the realized weight for a clear majority of replicates.
        let law = FinitePmf::new(0.0, 1.0, vec![0.35, 0.4, 0.25]).unwrap();
        let prior = unit_prior(
            WeightsRate::empty(),
            vec![FixedAtom { location: 0.5, weight_law: law }],
        );
        let h = Likelihood::poisson(2.0).unwrap();
        let m = 6;
        let mut hits = 0usize;
        let runs = 10_000;
        for seed in 0..runs {
            let theta_draw = crm_sample(&prior.spec, seed as u64, 1).unwrap();
            let truth = theta_draw[0].fixed.first().map_or(0.0, |&(_, w)| w);
            let data = simulate_dataset(&prior, &h, m, seed as u64).unwrap();
            let post = posterior(&prior, &data, &h).unwrap();
            let law = &post.spec.fixed_atoms[0].weight_law;
            let mode = law
                .points()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(x, _)| x)
                .unwrap();
            if mode == truth {
                hits += 1;
            }
        }
        assert!(
            hits as f64 / runs as f64 > 0.5,
            "posterior mode hit rate {}",
            hits as f64 / runs as f64
        );
    }
}
