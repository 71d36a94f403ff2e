//! Quasi-probability decompositions of inverse noise and of the ideal initial
//! state over experimentally available operations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::device::PauliModel;
use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{compose, ideal_ptm, GateLabel, PauliLabel, PauliTransferMatrix, PauliVector};

type Ptm = PauliTransferMatrix<f64>;

/// Experimental PTMs with a larger 1-norm condition number are refused.
pub const CONDITION_LIMIT: f64 = 1e8;

const RECONSTRUCTION_TOL: f64 = 1e-9;

/// Signed coefficients over a basis of experimental operations or states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiDecomposition {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub one_norm: f64,
}

impl QuasiDecomposition {
    pub fn new(labels: Vec<String>, coefficients: Vec<f64>) -> Self {
        let one_norm = coefficients.iter().map(|q| q.abs()).sum();
        Self {
            labels,
            coefficients,
            one_norm,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// `|q_j| / C`, the sampling distribution.
    pub fn probabilities(&self) -> Vec<f64> {
        self.coefficients.iter().map(|q| q.abs() / self.one_norm).collect()
    }
}

/// `N^{-1} = R^{id} R^{-1}`, so that `N^{-1} R = R^{id}`.
pub fn inverse_noise(experimental: &Ptm, ideal: &Ptm) -> Result<Ptm> {
    let condition = experimental.matrix().cond1();
    if !(condition < CONDITION_LIMIT) {
        return Err(PecError::IllConditioned {
            condition,
            limit: CONDITION_LIMIT,
        });
    }
    compose(ideal, &experimental.inverse()?)
}

fn basis_labels(n: usize) -> Vec<String> {
    PauliLabel::all(n).map(|p| p.to_string()).collect()
}

/// Expands `n_inv` over `basis` (all diagonal under the Pauli ansatz).
///
/// The coefficients come from the diagonal system; the full-matrix
/// reconstruction is then checked so non-diagonal targets are rejected.
pub fn decompose_inverse(n_inv: &Ptm, basis: &[Ptm]) -> Result<QuasiDecomposition> {
    let dim = n_inv.dim();
    if basis.len() != dim || basis.iter().any(|b| b.dim() != dim) {
        return Err(PecError::DimensionMismatch {
            expected: dim,
            found: basis.len(),
        });
    }
    let d = Matrix::from_fn(dim, dim, |k, j| basis[j].matrix()[(k, k)]);
    let q = d
        .solve(&n_inv.matrix().diagonal())
        .map_err(|_| PecError::DeficientBasis { residual: f64::INFINITY })?;
    let mut recon = Matrix::zeros(dim, dim);
    for (b, &qj) in basis.iter().zip(&q) {
        recon = recon.add(&b.matrix().scale(qj))?;
    }
    let residual = recon.max_abs_diff(n_inv.matrix())?;
    if !(residual < RECONSTRUCTION_TOL) {
        return Err(PecError::DeficientBasis { residual });
    }
    Ok(QuasiDecomposition::new(basis_labels(n_inv.n()), q))
}

/// Expands the ideal state over the experimentally prepared states.
pub fn decompose_initial_state(ideal: &PauliVector<f64>, states: &[PauliVector<f64>]) -> Result<QuasiDecomposition> {
    let dim = ideal.entries().len();
    if states.len() != dim || states.iter().any(|s| s.n() != ideal.n()) {
        return Err(PecError::DimensionMismatch {
            expected: dim,
            found: states.len(),
        });
    }
    let m = Matrix::from_fn(dim, dim, |r, c| states[c].entries()[r]);
    let q = m.solve(ideal.entries()).map_err(|_| {
        PecError::InvalidArgument("prepared states are linearly dependent".into())
    })?;
    let recon = m.mul_vec(&q)?;
    let residual = recon
        .iter()
        .zip(ideal.entries())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    if !(residual < RECONSTRUCTION_TOL) {
        return Err(PecError::DeficientBasis { residual });
    }
    let labels = (0..dim)
        .map(|i| GateLabel::prep_fiducial(ideal.n(), i).map(|g| g.to_string()))
        .collect::<Result<_>>()?;
    Ok(QuasiDecomposition::new(labels, q))
}

/// Total sampling cost of a circuit: `C_state * Prod C_gate`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceCost {
    pub total_c: f64,
    pub per_element: Vec<f64>,
}

pub fn sequence_cost(state: &QuasiDecomposition, gates: &[&QuasiDecomposition]) -> SequenceCost {
    let per_element: Vec<f64> = std::iter::once(state.one_norm)
        .chain(gates.iter().map(|g| g.one_norm))
        .collect();
    SequenceCost {
        total_c: per_element.iter().product(),
        per_element,
    }
}

/// Decompositions of the ideal initial state and of every gate's inverse noise.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionSet {
    pub n: usize,
    pub state: QuasiDecomposition,
    pub gates: BTreeMap<GateLabel, QuasiDecomposition>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecompositionDoc {
    schema_version: u32,
    n: usize,
    state: QuasiDecomposition,
    gates: BTreeMap<GateLabel, QuasiDecomposition>,
}

impl DecompositionSet {
    /// Builds decompositions for `gates` (default: the whole gate set) from a
    /// characterized model, over that model's own Pauli operations.
    pub fn from_model(model: &PauliModel, gates: Option<&[GateLabel]>) -> Result<Self> {
        let n = model.n();
        let basis = (0..1usize << (2 * n))
            .map(|j| model.gate_ptm(&GateLabel::pauli_gate(n, j)?))
            .collect::<Result<Vec<_>>>()?;
        let all = GateLabel::gate_set(n);
        let gates = gates.unwrap_or(&all);
        let mut out = BTreeMap::new();
        for g in gates {
            let n_inv = inverse_noise(&model.gate_ptm(g)?, &ideal_ptm(g))?;
            out.insert(*g, decompose_inverse(&n_inv, &basis)?);
        }
        let states = (0..1usize << (2 * n))
            .map(|i| model.fiducial_state(i))
            .collect::<Result<Vec<_>>>()?;
        let state = decompose_initial_state(&PauliVector::zero_state(n), &states)?;
        Ok(Self { n, state, gates: out })
    }

    pub fn get(&self, gate: &GateLabel) -> Result<&QuasiDecomposition> {
        self.gates
            .get(gate)
            .ok_or_else(|| PecError::IncompleteData(format!("no decomposition for {gate}")))
    }

    /// The compensation operation for basis index `j`.
    pub fn basis_gate(&self, j: usize) -> Result<GateLabel> {
        GateLabel::pauli_gate(self.n, j)
    }

    pub fn cost(&self, sequence: &[GateLabel]) -> Result<SequenceCost> {
        let gates = sequence.iter().map(|g| self.get(g)).collect::<Result<Vec<_>>>()?;
        Ok(sequence_cost(&self.state, &gates))
    }

    pub fn to_json(&self) -> String {
        let doc = DecompositionDoc {
            schema_version: 1,
            n: self.n,
            state: self.state.clone(),
            gates: self.gates.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DecompositionDoc = serde_json::from_str(text).map_err(|e| PecError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.schema_version != 1 {
            return Err(PecError::Config(format!(
                "unsupported decomposition schema_version {}",
                doc.schema_version
            )));
        }
        Ok(Self {
            n: doc.n,
            state: doc.state,
            gates: doc.gates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{channel_ptm, Gate1, PauliChannel};

    fn ideal_paulis(n: usize) -> Vec<Ptm> {
        (0..1usize << (2 * n))
            .map(|j| ideal_ptm(&GateLabel::pauli_gate(n, j).unwrap()))
            .collect()
    }

    fn depolarized() -> Ptm {
        channel_ptm(&PauliChannel::new(1, vec![0.97, 0.01, 0.01, 0.01]).unwrap())
    }

    #[test]
    fn inverse_of_ideal_is_identity() {
        let x = ideal_ptm(&GateLabel::One(Gate1::XHalfPi));
        let n_inv = inverse_noise(&x, &x).unwrap();
        assert!(n_inv.max_abs_diff(&Ptm::identity(1)).unwrap() < 1e-15);
    }

    #[test]
    fn inverse_of_depolarizing_noise_is_reciprocal() {
        let ideal = ideal_ptm(&GateLabel::One(Gate1::YHalfPi));
        let exp = compose(&depolarized(), &ideal).unwrap();
        let n_inv = inverse_noise(&exp, &ideal).unwrap();
        let want = [1.0, 1.0 / 0.96, 1.0 / 0.96, 1.0 / 0.96];
        for (a, b) in n_inv.matrix().diagonal().iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(compose(&n_inv, &exp).unwrap().max_abs_diff(&ideal).unwrap() < 1e-10);
    }

    #[test]
    fn singular_experimental_ptm_is_refused() {
        let dead = channel_ptm(&PauliChannel::new(1, vec![0.25, 0.25, 0.25, 0.25]).unwrap());
        assert!(matches!(
            inverse_noise(&dead, &Ptm::identity(1)),
            Err(PecError::IllConditioned { .. })
        ));
    }

    #[test]
    fn depolarizing_decomposition_matches_the_walsh_solve() {
        let n_inv = Ptm::from_diagonal(1, &[1.0, 1.0 / 0.96, 1.0 / 0.96, 1.0 / 0.96]).unwrap();
        let q = decompose_inverse(&n_inv, &ideal_paulis(1)).unwrap();
        // Rows read q_I + q_X + q_Y + q_Z = 1 and q_I + q_P - q_others = 1/0.96,
        // so q_I = (1 + 3/0.96) / 4 and q_P = (1 - 1/0.96) / 4.
        let qi = (1.0 + 3.0 / 0.96) / 4.0;
        let qp = (1.0 - 1.0 / 0.96) / 4.0;
        assert!((q.coefficients[0] - qi).abs() < 1e-12);
        for &c in &q.coefficients[1..] {
            assert!((c - qp).abs() < 1e-12);
        }
        assert!((q.one_norm - 1.0625).abs() < 1e-10);
        assert!((q.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_target_gives_unit_vector() {
        let q = decompose_inverse(&Ptm::identity(2), &ideal_paulis(2)).unwrap();
        assert_eq!(q.coefficients[0], 1.0);
        assert!(q.coefficients[1..].iter().all(|&c| c == 0.0));
        assert_eq!(q.one_norm, 1.0);
    }

    #[test]
    fn non_diagonal_target_is_deficient() {
        let rot = ideal_ptm(&GateLabel::One(Gate1::XHalfPi));
        assert!(matches!(
            decompose_inverse(&rot, &ideal_paulis(1)),
            Err(PecError::DeficientBasis { .. })
        ));
    }

    #[test]
    fn state_decomposition_of_depolarized_preparation() {
        let shrink = 0.99;
        let states: Vec<_> = crate::pauli::PREP_FIDUCIALS
            .iter()
            .map(|&f| {
                let s = ideal_ptm::<f64>(&GateLabel::One(f)).apply(&PauliVector::zero_state(1)).unwrap();
                let e = s.entries();
                PauliVector::from_entries(1, vec![e[0], e[1] * shrink, e[2] * shrink, e[3] * shrink]).unwrap()
            })
            .collect();
        let q = decompose_initial_state(&PauliVector::zero_state(1), &states).unwrap();
        assert!((q.sum() - 1.0).abs() < 1e-12);
        assert_eq!(q.coefficients.iter().filter(|&&c| c > 1.0).count(), 1);
        assert!(q.coefficients[0] > 1.0);
        assert!(q.coefficients[1..].iter().any(|&c| c < 0.0));
    }

    #[test]
    fn cost_is_the_product_of_local_norms() {
        let n_inv = Ptm::from_diagonal(1, &[1.0, 1.0 / 0.96, 1.0 / 0.96, 1.0 / 0.96]).unwrap();
        let q = decompose_inverse(&n_inv, &ideal_paulis(1)).unwrap();
        let unit = QuasiDecomposition::new(vec!["I".into()], vec![1.0]);
        let cost = sequence_cost(&unit, &[&q, &q, &q]);
        assert!((cost.total_c - 1.0625f64.powi(3)).abs() < 1e-12);
        // Brute force over 4^3 products (the state contributes one term).
        let mut brute = 0.0;
        for a in &q.coefficients {
            for b in &q.coefficients {
                for c in &q.coefficients {
                    brute += (a * b * c).abs();
                }
            }
        }
        assert!((brute - cost.total_c).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let set = DecompositionSet::from_model(&PauliModel::noiseless(1), None).unwrap();
        let back = DecompositionSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
        assert!((set.cost(&[GateLabel::One(Gate1::XPi)]).unwrap().total_c - 1.0).abs() < 1e-15);
    }
}
