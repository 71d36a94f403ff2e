//! Pauli-basis linear algebra.
//!
//! Operators are expanded in the normalized basis `P_j / sqrt(2^n)`, so
//! unitary channels become orthogonal matrices and `<<E|rho>> = Tr(E rho)`.
//! Labels are ordered lexicographically in `(I, X, Y, Z)` per qubit with
//! the leftmost qubit (qubit 0) most significant.

mod channel;
mod gates;
mod ptm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PecError, Result};

pub use channel::{channel_ptm, commutation_sign, PauliChannel};
pub use gates::{
    ideal_ptm, ideal_ptm_by_name, rotation_ptm, rotation_ptm_quarter, Gate1, GateLabel,
    COMPUTATIONAL_1Q, INTERLEAVED_1Q, MEASUREMENT_FIDUCIALS, PAULI_GATES, PREP_FIDUCIALS,
};
pub use ptm::{compose, expectation, tensor, ObservableVector, PauliTransferMatrix, PauliVector};

/// Largest supported register.
pub const MAX_QUBITS: usize = 2;

/// Basis dimension `4^n`.
pub fn pauli_dim(n: usize) -> usize {
    1 << (2 * n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    I,
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::I, Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Self::ALL[i & 3]
    }

    pub fn from_char(c: char) -> Option<Axis> {
        match c {
            'I' => Some(Axis::I),
            'X' => Some(Axis::X),
            'Y' => Some(Axis::Y),
            'Z' => Some(Axis::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        ['I', 'X', 'Y', 'Z'][self.index()]
    }

    /// Single-qubit product `self * other = phase * result`.
    pub fn product(self, other: Axis) -> (Phase, Axis) {
        use Axis::*;
        match (self, other) {
            (I, p) | (p, I) => (Phase::One, p),
            (a, b) if a == b => (Phase::One, I),
            (X, Y) => (Phase::I, Z),
            (Y, X) => (Phase::MinusI, Z),
            (Y, Z) => (Phase::I, X),
            (Z, Y) => (Phase::MinusI, X),
            (Z, X) => (Phase::I, Y),
            (X, Z) => (Phase::MinusI, Y),
            _ => unreachable!(),
        }
    }

    pub fn commutes_with(self, other: Axis) -> bool {
        self == Axis::I || other == Axis::I || self == other
    }
}

/// A power of `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    One,
    I,
    MinusOne,
    MinusI,
}

impl Phase {
    fn exponent(self) -> u8 {
        match self {
            Phase::One => 0,
            Phase::I => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    fn from_exponent(e: u8) -> Phase {
        match e % 4 {
            0 => Phase::One,
            1 => Phase::I,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        Phase::from_exponent(self.exponent() + other.exponent())
    }
}

/// An n-qubit Pauli string (phase-free), `n` in `{1, 2}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliLabel {
    n: u8,
    index: u16,
}

impl PauliLabel {
    pub fn new(axes: &[Axis]) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_QUBITS {
            return Err(PecError::InvalidArgument(format!(
                "Pauli labels support 1..={MAX_QUBITS} qubits, got {}",
                axes.len()
            )));
        }
        let index = axes.iter().fold(0u16, |acc, a| (acc << 2) | a.index() as u16);
        Ok(Self {
            n: axes.len() as u8,
            index,
        })
    }

    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS || index >= pauli_dim(n) {
            return Err(PecError::InvalidArgument(format!(
                "no Pauli label with index {index} on {n} qubit(s)"
            )));
        }
        Ok(Self {
            n: n as u8,
            index: index as u16,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n: n as u8,
            index: 0,
        }
    }

    /// All labels on `n` qubits in basis order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliLabel> {
        (0..pauli_dim(n)).map(move |i| PauliLabel {
            n: n as u8,
            index: i as u16,
        })
    }

    pub fn n(self) -> usize {
        self.n as usize
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn axis(self, qubit: usize) -> Axis {
        let shift = 2 * (self.n() - 1 - qubit);
        Axis::from_index((self.index as usize >> shift) & 3)
    }

    pub fn axes(self) -> Vec<Axis> {
        (0..self.n()).map(|q| self.axis(q)).collect()
    }

    pub fn is_identity(self) -> bool {
        self.index == 0
    }

    pub fn weight(self) -> usize {
        (0..self.n()).filter(|&q| self.axis(q) != Axis::I).count()
    }

    pub fn commutes_with(self, other: PauliLabel) -> bool {
        debug_assert_eq!(self.n, other.n);
        let anticommuting = (0..self.n())
            .filter(|&q| !self.axis(q).commutes_with(other.axis(q)))
            .count();
        anticommuting % 2 == 0
    }

    /// `self * other = phase * label`.
    pub fn product(self, other: PauliLabel) -> (Phase, PauliLabel) {
        debug_assert_eq!(self.n, other.n);
        let mut phase = Phase::One;
        let mut axes = Vec::with_capacity(self.n());
        for q in 0..self.n() {
            let (p, a) = self.axis(q).product(other.axis(q));
            phase = phase.mul(p);
            axes.push(a);
        }
        (phase, PauliLabel::new(&axes).expect("same length as inputs"))
    }

    /// Tensor product `self (x) other`; qubits of `self` come first.
    pub fn tensor(self, other: PauliLabel) -> Result<PauliLabel> {
        let mut axes = self.axes();
        axes.extend(other.axes());
        PauliLabel::new(&axes)
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.axes() {
            write!(f, "{}", a.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliLabel({self})")
    }
}

impl FromStr for PauliLabel {
    type Err = PecError;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .chars()
            .map(|c| Axis::from_char(c).ok_or_else(|| PecError::InvalidArgument(format!("bad Pauli label `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        PauliLabel::new(&axes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_indexing_leftmost_most_significant() {
        let xz: PauliLabel = "XZ".parse().unwrap();
        assert_eq!(xz.index(), 4 + 3);
        assert_eq!(xz.axis(0), Axis::X);
        assert_eq!(xz.axis(1), Axis::Z);
        assert_eq!(PauliLabel::from_index(2, 7).unwrap(), xz);
        let names: Vec<String> = PauliLabel::all(1).map(|p| p.to_string()).collect();
        assert_eq!(names, ["I", "X", "Y", "Z"]);
    }

    #[test]
    fn rejects_out_of_range_labels() {
        assert!("XYZ".parse::<PauliLabel>().is_err());
        assert!("".parse::<PauliLabel>().is_err());
        assert!("XA".parse::<PauliLabel>().is_err());
        assert!(PauliLabel::from_index(1, 4).is_err());
    }

    #[test]
    fn products_follow_the_cyclic_rule() {
        assert_eq!(Axis::X.product(Axis::Y), (Phase::I, Axis::Z));
        assert_eq!(Axis::Z.product(Axis::X), (Phase::I, Axis::Y));
        assert_eq!(Axis::Y.product(Axis::X), (Phase::MinusI, Axis::Z));
        let xx: PauliLabel = "XX".parse().unwrap();
        let yy: PauliLabel = "YY".parse().unwrap();
        // (X Y) (X Y) = (iZ)(iZ) = -ZZ
        assert_eq!(xx.product(yy), (Phase::MinusOne, "ZZ".parse().unwrap()));
        assert!(xx.commutes_with(yy));
        assert!(!xx.commutes_with("ZI".parse().unwrap()));
    }
}
