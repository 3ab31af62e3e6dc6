//! The Lévy metric `ρ(F,G) = inf{ε > 0 : F(x−ε)−ε ≤ G(x) ≤ F(x+ε)+ε ∀x}`
//! between finitely supported distributions on ℝ.
//!
//! Both CDFs are right-continuous step functions, so each side of the
//! defining inequality is a step function of x whose supremum is attained at
//! one of finitely many event points (an atom location, or an atom location
//! shifted by ±ε) or at a left limit there. Feasibility of a given ε is
//! therefore decided exactly, and the distance follows by bisection.

use thiserror::Error;

use crate::qid_lattice::FinitePmf;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid step cdf: {0}")]
    InvalidCdf(String),
}

/// A probability distribution on ℝ with finitely many atoms, addressed
/// through its CDF. Locations are strictly increasing with positive masses
/// summing to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    atoms: Vec<(f64, f64)>,
}

impl StepCdf {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self, MetricError> {
        if atoms.is_empty() {
            return Err(MetricError::InvalidCdf("no atoms".into()));
        }
        if atoms.iter().any(|(x, m)| !x.is_finite() || !m.is_finite() || *m < 0.0) {
            return Err(MetricError::InvalidCdf("non-finite atom or negative mass".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Merge duplicate locations so the sequence is strictly increasing.
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, m) in atoms {
            match merged.last_mut() {
                Some((last, acc)) if *last == x => *acc += m,
                _ => merged.push((x, m)),
            }
        }
        merged.retain(|&(_, m)| m > 0.0);
        let total: f64 = merged.iter().map(|(_, m)| m).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MetricError::InvalidCdf(format!("masses sum to {total}")));
        }
        Ok(Self { atoms: merged })
    }

    pub fn from_pmf(pmf: &FinitePmf) -> Result<Self, MetricError> {
        Self::new(pmf.points().collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// `F(x)`: total mass at locations `≤ x`.
    pub fn eval(&self, x: f64) -> f64 {
        let end = self.atoms.partition_point(|&(loc, _)| loc <= x);
        self.atoms[..end].iter().map(|(_, m)| m).sum()
    }

    /// Left limit `F(x⁻)`: total mass at locations `< x`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let end = self.atoms.partition_point(|&(loc, _)| loc < x);
        self.atoms[..end].iter().map(|(_, m)| m).sum()
    }

    /// Law of `c·X` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0, "scaling constant must be positive");
        Self { atoms: self.atoms.iter().map(|&(x, m)| (c * x, m)).collect() }
    }
}

/// Exact feasibility of `ε` in the Lévy metric definition:
/// `F(x−ε)−ε ≤ G(x) ≤ F(x+ε)+ε` for all real x.
pub fn levy_feasible(f: &StepCdf, g: &StepCdf, eps: f64) -> bool {
    assert!(eps >= 0.0);
    // Upper side: sup_x [G(x) − F(x+ε)] ≤ ε. The difference is a step
    // function jumping only at G-atoms and at F-atoms − ε.
    let upper_ok = {
        let mut ok = true;
        let events = g
            .atoms
            .iter()
            .map(|&(x, _)| x)
            .chain(f.atoms.iter().map(|&(x, _)| x - eps));
        for e in events {
            let at = g.eval(e) - f.eval(e + eps);
            let left = g.eval_left(e) - f.eval_left(e + eps);
            if at > eps || left > eps {
                ok = false;
                break;
            }
        }
        ok
    };
    if !upper_ok {
        return false;
    }
    // Lower side: sup_x [F(x−ε) − G(x)] ≤ ε, jumping at F-atoms + ε and at
    // G-atoms.
    let events = f
        .atoms
        .iter()
        .map(|&(x, _)| x + eps)
        .chain(g.atoms.iter().map(|&(x, _)| x));
    for e in events {
        let at = f.eval(e - eps) - g.eval(e);
        let left = f.eval_left(e - eps) - g.eval_left(e);
        if at > eps || left > eps {
            return false;
        }
    }
    true
}

/// Lévy distance by bisection over `[0, 1]`; the result is within `tol` of
/// `ρ(F, G)` and always lies in `[0, 1]` (ε = 1 is feasible for any pair of
/// probability distributions).
pub fn levy_distance(f: &StepCdf, g: &StepCdf, tol: f64) -> f64 {
    assert!(tol > 0.0);
    if levy_feasible(f, g, 0.0) {
        return 0.0;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if levy_feasible(f, g, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
