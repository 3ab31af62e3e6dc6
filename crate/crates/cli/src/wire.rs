//! Wire formats and canonical JSON emission.
//!
//! Output is canonical: objects are re-sorted by key (serde_json's default
//! map is a BTreeMap) and floats use the shortest round-trip
//! representation, so identical inputs produce byte-identical files.

use serde::{Deserialize, Serialize};

use qid_core::bayes::PointObservation;
use qid_core::qid_lattice::QuasiLevyTriplet;

/// Serialize any value canonically: sorted keys, compact separators.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

/// `qid analyze` output.
#[derive(Serialize)]
pub struct AnalyzeOut {
    pub verdict: String,
    pub drift: f64,
    pub gaussian: f64,
    pub qlm: qid_core::LatticeSignedMeasure,
    /// Root multiset as `[re, im]` pairs.
    pub roots: Vec<[f64; 2]>,
}

/// Triplet file: mirrors [`QuasiLevyTriplet`].
#[derive(Serialize, Deserialize)]
pub struct TripletWire {
    pub drift: f64,
    #[serde(default)]
    pub gaussian: f64,
    pub qlm: qid_core::LatticeSignedMeasure,
}

impl From<TripletWire> for QuasiLevyTriplet {
    fn from(w: TripletWire) -> Self {
        QuasiLevyTriplet { drift: w.drift, gaussian: w.gaussian, qlm: w.qlm }
    }
}

/// One observed atom in the per-individual observation list.
#[derive(Serialize, Deserialize)]
pub struct ObsAtomWire {
    pub psi: f64,
    pub x: u64,
}

/// Observation file: one list of `{psi, x}` objects per individual.
pub type ObsWire = Vec<Vec<ObsAtomWire>>;

pub fn observations_from_wire(
    wire: ObsWire,
) -> Result<Vec<PointObservation>, qid_core::bayes::BayesError> {
    wire.into_iter()
        .map(|individual| {
            PointObservation::new(individual.into_iter().map(|a| (a.psi, a.x)).collect())
        })
        .collect()
}

pub fn observations_to_wire(observations: &[PointObservation]) -> ObsWire {
    observations
        .iter()
        .map(|obs| obs.atoms.iter().map(|&(psi, x)| ObsAtomWire { psi, x }).collect())
        .collect()
}

/// Table-likelihood file.
#[derive(Serialize, Deserialize)]
pub struct TableLikelihoodWire {
    pub thetas: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}
