use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{compose, pauli_dim, tensor, Axis, PauliLabel, PauliTransferMatrix, Phase};
use crate::scalar::Scalar;

/// The eleven single-qubit operations: identity, `±π` and `±π/2` rotations.
///
/// Rotations follow `R_axis(θ) = exp(-iθ·axis/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gate1 {
    I,
    XPi,
    XMinusPi,
    YPi,
    YMinusPi,
    ZPi,
    ZMinusPi,
    XHalfPi,
    XMinusHalfPi,
    YHalfPi,
    YMinusHalfPi,
}

/// State-preparation fiducials: `|0>, |1>, |1>_X, |1>_Y`.
pub const PREP_FIDUCIALS: [Gate1; 4] = [Gate1::I, Gate1::XPi, Gate1::YMinusHalfPi, Gate1::XHalfPi];

/// Measurement fiducials that turn the `X`, `Y` and `Z` expectations into a `Z` readout.
pub const MEASUREMENT_FIDUCIALS: [Gate1; 3] = [Gate1::YMinusHalfPi, Gate1::XHalfPi, Gate1::I];

/// Experimental Pauli operations used as the compensation basis, in `(I, X, Y, Z)` order.
pub const PAULI_GATES: [Gate1; 4] = [Gate1::I, Gate1::XPi, Gate1::YPi, Gate1::ZPi];

pub const COMPUTATIONAL_1Q: [Gate1; 4] = [
    Gate1::XHalfPi,
    Gate1::XMinusHalfPi,
    Gate1::YHalfPi,
    Gate1::YMinusHalfPi,
];

pub const INTERLEAVED_1Q: [Gate1; 7] = [
    Gate1::I,
    Gate1::XPi,
    Gate1::XMinusPi,
    Gate1::YPi,
    Gate1::YMinusPi,
    Gate1::ZPi,
    Gate1::ZMinusPi,
];

impl Gate1 {
    pub const ALL: [Gate1; 11] = [
        Gate1::I,
        Gate1::XPi,
        Gate1::XMinusPi,
        Gate1::YPi,
        Gate1::YMinusPi,
        Gate1::ZPi,
        Gate1::ZMinusPi,
        Gate1::XHalfPi,
        Gate1::XMinusHalfPi,
        Gate1::YHalfPi,
        Gate1::YMinusHalfPi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gate1::I => "I",
            Gate1::XPi => "X_pi",
            Gate1::XMinusPi => "X_-pi",
            Gate1::YPi => "Y_pi",
            Gate1::YMinusPi => "Y_-pi",
            Gate1::ZPi => "Z_pi",
            Gate1::ZMinusPi => "Z_-pi",
            Gate1::XHalfPi => "X_pi/2",
            Gate1::XMinusHalfPi => "X_-pi/2",
            Gate1::YHalfPi => "Y_pi/2",
            Gate1::YMinusHalfPi => "Y_-pi/2",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&g| g == self).expect("listed")
    }

    /// Rotation axis; `I` for the identity.
    pub fn axis(self) -> Axis {
        match self {
            Gate1::I => Axis::I,
            Gate1::XPi | Gate1::XMinusPi | Gate1::XHalfPi | Gate1::XMinusHalfPi => Axis::X,
            Gate1::YPi | Gate1::YMinusPi | Gate1::YHalfPi | Gate1::YMinusHalfPi => Axis::Y,
            Gate1::ZPi | Gate1::ZMinusPi => Axis::Z,
        }
    }

    /// Rotation angle in units of `π/2`.
    pub fn quarter_turns(self) -> i32 {
        match self {
            Gate1::I => 0,
            Gate1::XPi | Gate1::YPi | Gate1::ZPi => 2,
            Gate1::XMinusPi | Gate1::YMinusPi | Gate1::ZMinusPi => -2,
            Gate1::XHalfPi | Gate1::YHalfPi => 1,
            Gate1::XMinusHalfPi | Gate1::YMinusHalfPi => -1,
        }
    }

    pub fn angle(self) -> f64 {
        self.quarter_turns() as f64 * std::f64::consts::FRAC_PI_2
    }

    /// Identity or a `±π` rotation.
    pub fn is_pauli(self) -> bool {
        self.quarter_turns().abs() != 1
    }
}

impl fmt::Display for Gate1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate1 {
    type Err = PecError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s.trim())
            .ok_or_else(|| PecError::UnknownGate(s.to_string()))
    }
}

/// An operation of the one- or two-qubit gate set.
///
/// `Local(a, b)` applies `a` to qubit 0 and `b` to qubit 1 as two individually
/// addressed pulses (qubit 0 first). `MsZz` is the composite
/// `X_{-π/2}⊗X_{-π/2} · MS_YY · X_{π/2}⊗X_{π/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateLabel {
    One(Gate1),
    Local(Gate1, Gate1),
    MsYy,
    MsZz,
}

impl GateLabel {
    pub fn n(self) -> usize {
        match self {
            GateLabel::One(_) => 1,
            _ => 2,
        }
    }

    pub fn is_two_qubit_entangler(self) -> bool {
        matches!(self, GateLabel::MsYy | GateLabel::MsZz)
    }

    /// Position in [`gate_set`](Self::gate_set) for an `n`-qubit register.
    pub fn dense_index(self) -> usize {
        match self {
            GateLabel::One(g) => g.index(),
            GateLabel::Local(a, b) => a.index() * 11 + b.index(),
            GateLabel::MsYy => 121,
            GateLabel::MsZz => 122,
        }
    }

    pub fn from_dense_index(n: usize, index: usize) -> Result<GateLabel> {
        let size = Self::gate_set_size(n);
        if index >= size {
            return Err(PecError::InvalidArgument(format!(
                "gate index {index} out of range for {n} qubit(s)"
            )));
        }
        Ok(match (n, index) {
            (1, i) => GateLabel::One(Gate1::ALL[i]),
            (_, 121) => GateLabel::MsYy,
            (_, 122) => GateLabel::MsZz,
            (_, i) => GateLabel::Local(Gate1::ALL[i / 11], Gate1::ALL[i % 11]),
        })
    }

    pub fn gate_set_size(n: usize) -> usize {
        match n {
            1 => 11,
            2 => 123,
            _ => 0,
        }
    }

    /// State-preparation fiducial `F_i` of `S_n`; for two qubits `i = 4 i0 + i1`.
    pub fn prep_fiducial(n: usize, i: usize) -> Result<GateLabel> {
        match n {
            1 if i < 4 => Ok(GateLabel::One(PREP_FIDUCIALS[i])),
            2 if i < 16 => Ok(GateLabel::Local(PREP_FIDUCIALS[i / 4], PREP_FIDUCIALS[i % 4])),
            _ => Err(PecError::InvalidArgument(format!("no preparation fiducial {i} on {n} qubit(s)"))),
        }
    }

    /// Measurement fiducial; for two qubits `k = 3 k0 + k1`.
    pub fn measurement_fiducial(n: usize, k: usize) -> Result<GateLabel> {
        match n {
            1 if k < 3 => Ok(GateLabel::One(MEASUREMENT_FIDUCIALS[k])),
            2 if k < 9 => Ok(GateLabel::Local(
                MEASUREMENT_FIDUCIALS[k / 3],
                MEASUREMENT_FIDUCIALS[k % 3],
            )),
            _ => Err(PecError::InvalidArgument(format!("no measurement fiducial {k} on {n} qubit(s)"))),
        }
    }

    /// Experimental Pauli operation for basis label `j` (same ordering as [`PauliLabel`]).
    pub fn pauli_gate(n: usize, j: usize) -> Result<GateLabel> {
        match n {
            1 if j < 4 => Ok(GateLabel::One(PAULI_GATES[j])),
            2 if j < 16 => Ok(GateLabel::Local(PAULI_GATES[j / 4], PAULI_GATES[j % 4])),
            _ => Err(PecError::InvalidArgument(format!("no Pauli operation {j} on {n} qubit(s)"))),
        }
    }

    /// All gates of the single-qubit set, or `G1 (x) G1` plus the MS gates.
    pub fn gate_set(n: usize) -> Vec<GateLabel> {
        match n {
            1 => Gate1::ALL.into_iter().map(GateLabel::One).collect(),
            _ => {
                let mut v: Vec<GateLabel> = Gate1::ALL
                    .into_iter()
                    .flat_map(|a| Gate1::ALL.into_iter().map(move |b| GateLabel::Local(a, b)))
                    .collect();
                v.push(GateLabel::MsYy);
                v.push(GateLabel::MsZz);
                v
            }
        }
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateLabel::One(g) => write!(f, "{g}"),
            GateLabel::Local(a, b) => write!(f, "{a}|{b}"),
            GateLabel::MsYy => f.write_str("MS_YY"),
            GateLabel::MsZz => f.write_str("MS_ZZ"),
        }
    }
}

impl FromStr for GateLabel {
    type Err = PecError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "MS_YY" => Ok(GateLabel::MsYy),
            "MS_ZZ" => Ok(GateLabel::MsZz),
            _ => match s.split_once('|') {
                Some((a, b)) => Ok(GateLabel::Local(
                    a.parse().map_err(|_| PecError::UnknownGate(s.into()))?,
                    b.parse().map_err(|_| PecError::UnknownGate(s.into()))?,
                )),
                None => Ok(GateLabel::One(s.parse()?)),
            },
        }
    }
}

impl Serialize for GateLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GateLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn quarter_trig(quarter_turns: i32) -> (f64, f64) {
    match quarter_turns.rem_euclid(4) {
        0 => (1.0, 0.0),
        1 => (0.0, 1.0),
        2 => (-1.0, 0.0),
        _ => (0.0, -1.0),
    }
}

fn rotation_from_trig<T: Scalar>(pauli: PauliLabel, cos: T, sin: T) -> PauliTransferMatrix<T> {
    let n = pauli.n();
    let dim = pauli_dim(n);
    let mut m = Matrix::zeros(dim, dim);
    for q in PauliLabel::all(n) {
        if q.commutes_with(pauli) {
            m[(q.index(), q.index())] = T::one();
            continue;
        }
        // U Q U† = cos θ Q + i sin θ Q P for anticommuting Q and P.
        let (phase, r) = q.product(pauli);
        let sign = match phase {
            Phase::I => -T::one(),
            Phase::MinusI => T::one(),
            _ => unreachable!("anticommuting Paulis multiply to an imaginary phase"),
        };
        m[(q.index(), q.index())] = cos;
        m[(r.index(), q.index())] = sign * sin;
    }
    PauliTransferMatrix::from_matrix(n, m).expect("dimension matches label")
}

/// PTM of `exp(-iθ P / 2)` for a Pauli string `P`.
pub fn rotation_ptm<T: Scalar>(pauli: PauliLabel, angle: T) -> PauliTransferMatrix<T> {
    rotation_from_trig(pauli, angle.cos(), angle.sin())
}

/// PTM of `exp(-i k π P / 4)`, exact for every integer `k`.
pub fn rotation_ptm_quarter<T: Scalar>(pauli: PauliLabel, quarter_turns: i32) -> PauliTransferMatrix<T> {
    let (c, s) = quarter_trig(quarter_turns);
    rotation_from_trig(pauli, T::lit(c), T::lit(s))
}

fn gate1_ptm<T: Scalar>(g: Gate1) -> PauliTransferMatrix<T> {
    if g == Gate1::I {
        return PauliTransferMatrix::identity(1);
    }
    let p = PauliLabel::new(&[g.axis()]).expect("single axis");
    rotation_ptm_quarter(p, g.quarter_turns())
}

/// Exact PTM of the noiseless gate.
pub fn ideal_ptm<T: Scalar>(gate: &GateLabel) -> PauliTransferMatrix<T> {
    match *gate {
        GateLabel::One(g) => gate1_ptm(g),
        GateLabel::Local(a, b) => tensor(&gate1_ptm(a), &gate1_ptm(b)).expect("single-qubit factors"),
        GateLabel::MsYy => rotation_ptm_quarter("YY".parse().expect("valid label"), 1),
        GateLabel::MsZz => {
            let open = ideal_ptm(&GateLabel::Local(Gate1::XHalfPi, Gate1::XHalfPi));
            let close = ideal_ptm(&GateLabel::Local(Gate1::XMinusHalfPi, Gate1::XMinusHalfPi));
            let ms = ideal_ptm::<T>(&GateLabel::MsYy);
            compose(&close, &compose(&ms, &open).expect("two-qubit")).expect("two-qubit")
        }
    }
}

pub fn ideal_ptm_by_name<T: Scalar>(name: &str) -> Result<PauliTransferMatrix<T>> {
    let gate: GateLabel = name.parse()?;
    Ok(ideal_ptm(&gate))
}
