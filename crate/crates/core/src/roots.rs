//! Roots of real polynomials via the Aberth–Ehrlich simultaneous iteration.
//!
//! Degrees 1 and 2 are solved in closed form so that the textbook fixtures
//! (single roots, perfect squares) come out exact. Higher degrees run the
//! Aberth iteration from staggered circular starting points, followed by a
//! conjugate-pairing pass that restores the exact symmetry a real polynomial
//! must have. Every returned root is residual-checked.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RootError {
    #[error("leading coefficient must be nonzero")]
    ZeroLeadingCoefficient,
    #[error("root iteration failed to converge: residual {residual:e} exceeds bound {bound:e}")]
    ConvergenceFailure { residual: f64, bound: f64 },
}

const MAX_ITERATIONS: usize = 400;

/// Relative residual bound: every root z must satisfy
/// `|p(z)| ≤ RESIDUAL_FACTOR · Σ|coeffs|`.
pub const RESIDUAL_FACTOR: f64 = 1e-8;

/// All complex roots of `Σ coeffs[j]·w^j`, repeated according to
/// multiplicity. Degree 0 yields no roots.
pub fn find_roots(coeffs: &[f64]) -> Result<Vec<Complex64>, RootError> {
    let degree = match coeffs.iter().rposition(|&c| c != 0.0) {
        Some(d) => d,
        None => return Err(RootError::ZeroLeadingCoefficient),
    };
    if degree + 1 != coeffs.len() {
        return Err(RootError::ZeroLeadingCoefficient);
    }
    if degree == 0 {
        return Ok(Vec::new());
    }

    // Factor out roots at the origin exactly.
    let zeros_at_origin = coeffs.iter().position(|&c| c != 0.0).unwrap();
    let reduced = &coeffs[zeros_at_origin..];
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros_at_origin];

    match reduced.len() {
        1 => {}
        2 => roots.push(Complex64::new(-reduced[0] / reduced[1], 0.0)),
        3 => roots.extend_from_slice(&quadratic_roots(reduced[0], reduced[1], reduced[2])),
        _ => {
            let found = aberth(reduced)?;
            roots.extend(pair_conjugates(found));
        }
    }

    let coeff_scale: f64 = coeffs.iter().map(|c| c.abs()).sum();
    let bound = RESIDUAL_FACTOR * coeff_scale;
    let mut worst = 0.0f64;
    for &z in &roots {
        worst = worst.max(eval(coeffs, z).norm());
    }
    if worst > bound {
        return Err(RootError::ConvergenceFailure { residual: worst, bound });
    }
    Ok(roots)
}

/// Roots of `a + b·w + c·w²` with `c ≠ 0`, exact for zero discriminant.
fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        // Avoid cancellation: compute the large-magnitude root first.
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let r1 = if q != 0.0 { a / q } else { 0.0 };
        let r2 = if c != 0.0 && q != 0.0 { q / c } else { -b / (2.0 * c) };
        [Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
    } else {
        let re = -b / (2.0 * c);
        let im = (-disc).sqrt() / (2.0 * c.abs());
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

fn eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

fn eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Starting points from the Newton polygon (Bini's heuristic): for each
/// edge of the upper convex hull of `(i, ln|a_i|)` spanning `k1..k2`, place
/// `k2 − k1` guesses on the circle of radius `(|a_{k1}|/|a_{k2}|)^{1/(k2−k1)}`.
/// This seeds every root-modulus cluster at roughly the right scale.
fn initial_guesses(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    let logs: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| (i, c.abs().ln()))
        .collect();
    // Upper convex hull by monotone scan (indices are already increasing).
    let mut hull: Vec<(usize, f64)> = Vec::with_capacity(logs.len());
    for &(i, y) in &logs {
        while hull.len() >= 2 {
            let (i1, y1) = hull[hull.len() - 2];
            let (i2, y2) = hull[hull.len() - 1];
            let cross = (i2 - i1) as f64 * (y - y1) - (i - i1) as f64 * (y2 - y1);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((i, y));
    }
    let mut guesses = Vec::with_capacity(degree);
    let stagger = 0.376;
    for edge in hull.windows(2) {
        let (k1, y1) = edge[0];
        let (k2, y2) = edge[1];
        let span = k2 - k1;
        let radius = ((y1 - y2) / span as f64).exp().clamp(1e-6, 1e6);
        for j in 0..span {
            let angle = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / span as f64
                + stagger
                + k1 as f64;
            guesses.push(radius * Complex64::new(angle.cos(), angle.sin()));
        }
    }
    guesses
}

/// Aberth–Ehrlich iteration on a polynomial with nonzero constant and
/// leading coefficients.
fn aberth(coeffs: &[f64]) -> Result<Vec<Complex64>, RootError> {
    let degree = coeffs.len() - 1;
    let mut z = initial_guesses(coeffs);
    debug_assert_eq!(z.len(), degree);

    for _ in 0..MAX_ITERATIONS {
        let mut moved = 0.0f64;
        for k in 0..degree {
            let (p, dp) = eval_with_derivative(coeffs, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { Complex64::new(1e-12, 1e-12) };
            let mut repulsion = Complex64::new(0.0, 0.0);
            for j in 0..degree {
                if j == k {
                    continue;
                }
                let diff = z[k] - z[j];
                if diff.norm_sqr() > 0.0 {
                    repulsion += diff.finv();
                }
            }
            let denom = Complex64::new(1.0, 0.0) - newton * repulsion;
            let delta = if denom.norm() > 1e-300 { newton / denom } else { newton };
            z[k] -= delta;
            moved = moved.max(delta.norm() / (1.0 + z[k].norm()));
        }
        if moved < 1e-14 {
            break;
        }
    }
    Ok(z)
}

/// Restore the conjugate symmetry of the root multiset of a real
/// polynomial: near-real roots are snapped to the real axis, the rest are
/// greedily matched with their conjugates and symmetrized.
fn pair_conjugates(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(roots.len());
    while let Some(z) = roots.pop() {
        let scale = 1.0 + z.norm();
        if z.im.abs() <= 1e-9 * scale {
            out.push(Complex64::new(z.re, 0.0));
            continue;
        }
        // Closest remaining candidate to conj(z).
        let target = z.conj();
        let (idx, dist) = roots
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (w - target).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or((usize::MAX, f64::INFINITY), |(i, d)| (i, d));
        if dist <= 1e-6 * scale {
            let partner = roots.swap_remove(idx);
            let sym = 0.5 * (z + partner.conj());
            out.push(sym);
            out.push(sym.conj());
        } else {
            // No partner found; keep the root as computed.
            out.push(z);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_by_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn linear_roots_are_exact() {
        // ½ + ½w and 2/3 + w/3
        assert_eq!(find_roots(&[0.5, 0.5]).unwrap(), vec![Complex64::new(-1.0, 0.0)]);
        assert_eq!(
            find_roots(&[2.0 / 3.0, 1.0 / 3.0]).unwrap(),
            vec![Complex64::new(-2.0, 0.0)]
        );
    }

    #[test]
    fn perfect_square_has_double_root() {
        let roots = find_roots(&[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(roots, vec![Complex64::new(-1.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn degree_zero_has_no_roots() {
        assert!(find_roots(&[1.0]).unwrap().is_empty());
    }

    #[test]
    fn origin_roots_are_factored_exactly() {
        // w²·(w − 3)
        let roots = sorted_by_re(find_roots(&[0.0, 0.0, -3.0, 1.0]).unwrap());
        assert_eq!(roots[0], Complex64::new(0.0, 0.0));
        assert_eq!(roots[1], Complex64::new(0.0, 0.0));
        assert!((roots[2] - Complex64::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn roots_of_unity_polynomial() {
        // 1 + w + ... + w^15 has the 16th roots of unity except 1.
        let coeffs = vec![1.0; 16];
        let roots = find_roots(&coeffs).unwrap();
        assert_eq!(roots.len(), 15);
        for z in &roots {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.powu(16) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn conjugate_pairs_are_exact() {
        // Random-ish real polynomial with complex roots.
        let coeffs = [0.3, -0.2, 0.5, 0.1, 0.7, 0.05];
        let roots = find_roots(&coeffs).unwrap();
        for z in &roots {
            if z.im != 0.0 {
                assert!(roots.iter().any(|w| *w == z.conj()), "unpaired root {z}");
            }
        }
    }

    #[test]
    fn residuals_within_bound_for_random_pmf_polynomials() {
        // Deterministic pseudo-random nonnegative coefficients — the weight
        // vectors this solver actually sees.
        let mut state = 0x12345678u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for deg in 3..=16 {
            let coeffs: Vec<f64> = (0..=deg).map(|_| 0.01 + next()).collect();
            let scale: f64 = coeffs.iter().map(|c| c.abs()).sum();
            let roots = find_roots(&coeffs).unwrap();
            assert_eq!(roots.len(), deg);
            for z in roots {
                assert!(eval(&coeffs, z).norm() <= RESIDUAL_FACTOR * scale);
            }
        }
    }

    #[test]
    fn geometric_decay_coefficients_converge() {
        // Exponential-law discretizations produce geometrically decaying
        // weights with a tiny top coefficient; the Newton-polygon starting
        // points must still converge.
        let q: f64 = (-0.5f64).exp();
        let n = 17;
        let mut coeffs: Vec<f64> = (0..n).map(|j| (1.0 - q) * q.powi(j)).collect();
        coeffs.push(q.powi(n));
        let scale: f64 = coeffs.iter().sum();
        let roots = find_roots(&coeffs).unwrap();
        assert_eq!(roots.len(), n as usize);
        for z in roots {
            assert!(eval(&coeffs, z).norm() <= RESIDUAL_FACTOR * scale);
        }
    }
}
