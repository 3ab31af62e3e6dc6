//! Quasi-infinitely divisible (QID) lattice distributions, completely
//! random measures built from them, and the Bayesian nonparametric
//! machinery they support.
//!
//! The crate has three layers:
//!
//! * **Lattice analysis** — [`signed_measure`] (finite signed measures,
//!   convolution exponential), [`qid_lattice`] (QID verdict, characteristic
//!   triplets via polynomial roots, two independent reconstruction routes),
//!   [`levy_metric`] (exact Lévy distance between step CDFs),
//!   [`density_approx`] (interval discretization and the root-perturbation
//!   step producing QID approximants of arbitrary laws).
//! * **Random measures** — [`crm`]: characteristic sets with product
//!   ordinary intensity, Laplace functionals, characteristic functions, the
//!   `(S_n, 1/n)` truncation sequence, and seeded Poisson-representation
//!   simulation.
//! * **Bayesian layer** — [`bayes`]: priors in the finite QID class,
//!   three-part posterior updates, posterior/truncation consistency, and
//!   the automatic-conjugacy checker.
//!
//! Monte Carlo replicates and batch pipelines run data-parallel through
//! rayon by default; disable the `parallel` feature for a sequential
//! build (`benches/parallel.rs` compares the two).

#![forbid(unsafe_code)]

pub mod bayes;
pub mod crm;
pub mod density_approx;
pub mod exec;
pub mod levy_metric;
pub mod qid_lattice;
mod roots;
pub mod quad;
pub mod signed_measure;

pub use qid_lattice::{FinitePmf, QidVerdict, QuasiLevyTriplet};
pub use signed_measure::LatticeSignedMeasure;
