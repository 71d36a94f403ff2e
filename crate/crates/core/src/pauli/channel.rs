use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PecError, Result};
use crate::pauli::{pauli_dim, PauliLabel, PauliTransferMatrix, MAX_QUBITS};
use crate::scalar::Scalar;

/// `+1` when `P_j` and `P_k` commute, `-1` otherwise.
pub fn commutation_sign<T: Scalar>(j: PauliLabel, k: PauliLabel) -> T {
    if j.commutes_with(k) {
        T::one()
    } else {
        -T::one()
    }
}

/// Pauli channel `rho -> sum_j p_j P_j rho P_j` with rates indexed by [`PauliLabel`].
#[derive(Clone, Debug, PartialEq)]
pub struct PauliChannel<T = f64> {
    n: usize,
    rates: Vec<T>,
}

impl TryFrom<Vec<f64>> for PauliChannel<f64> {
    type Error = PecError;

    fn try_from(rates: Vec<f64>) -> Result<Self> {
        let n = match rates.len() {
            4 => 1,
            16 => 2,
            len => {
                return Err(PecError::InvalidChannel(format!(
                    "expected 4 or 16 rates, got {len}"
                )))
            }
        };
        PauliChannel::new(n, rates)
    }
}

impl Serialize for PauliChannel<f64> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rates.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PauliChannel<f64> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rates = Vec::<f64>::deserialize(deserializer)?;
        PauliChannel::try_from(rates).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> PauliChannel<T> {
    /// Validates that the rates lie on the probability simplex (sum to 1 within `1e-12`).
    pub fn new(n: usize, rates: Vec<T>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(PecError::InvalidChannel(format!("unsupported qubit count {n}")));
        }
        if rates.len() != pauli_dim(n) {
            return Err(PecError::InvalidChannel(format!(
                "expected {} rates, got {}",
                pauli_dim(n),
                rates.len()
            )));
        }
        if let Some((j, r)) = rates.iter().enumerate().find(|(_, r)| !(**r >= T::zero())) {
            return Err(PecError::InvalidChannel(format!(
                "rate for {} is {r} (must be non-negative)",
                PauliLabel::from_index(n, j)?
            )));
        }
        let total: T = rates.iter().copied().sum();
        if (total - T::one()).abs() > T::tol(1e-12) {
            return Err(PecError::InvalidChannel(format!("rates sum to {total}, not 1")));
        }
        Ok(Self { n, rates })
    }

    pub fn identity(n: usize) -> Self {
        let mut rates = vec![T::zero(); pauli_dim(n)];
        rates[0] = T::one();
        Self { n, rates }
    }

    /// Uniform depolarizing channel with total error probability `error`.
    pub fn depolarizing(n: usize, error: T) -> Result<Self> {
        let others = pauli_dim(n) - 1;
        let each = error / T::lit(others as f64);
        let mut rates = vec![each; pauli_dim(n)];
        rates[0] = T::one() - error;
        Self::new(n, rates)
    }

    /// Inverse of [`eigenvalues`](Self::eigenvalues): `p_j = 4^-n sum_k s_jk lambda_k`.
    pub fn from_eigenvalues(n: usize, lambda: &[T]) -> Result<Self> {
        if lambda.len() != pauli_dim(n) {
            return Err(PecError::DimensionMismatch {
                expected: pauli_dim(n),
                found: lambda.len(),
            });
        }
        let scale = T::one() / T::lit(pauli_dim(n) as f64);
        let rates = PauliLabel::all(n)
            .map(|j| {
                PauliLabel::all(n)
                    .map(|k| commutation_sign::<T>(j, k) * lambda[k.index()])
                    .sum::<T>()
                    * scale
            })
            .collect();
        Ok(Self { n, rates })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn rate(&self, label: PauliLabel) -> T {
        self.rates[label.index()]
    }

    /// Total probability of a non-identity Pauli.
    pub fn error_probability(&self) -> T {
        T::one() - self.rates[0]
    }

    /// Diagonal of the PTM: `lambda_k = sum_j p_j s_jk`.
    pub fn eigenvalues(&self) -> Vec<T> {
        PauliLabel::all(self.n)
            .map(|k| {
                PauliLabel::all(self.n)
                    .map(|j| self.rates[j.index()] * commutation_sign(j, k))
                    .sum()
            })
            .collect()
    }

    /// Independent channels on two qubits; `self` acts on qubit 0.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.n != 1 || other.n != 1 {
            return Err(PecError::InvalidChannel("tensor expects single-qubit channels".into()));
        }
        let rates = self
            .rates
            .iter()
            .flat_map(|&a| other.rates.iter().map(move |&b| a * b))
            .collect();
        Ok(Self { n: 2, rates })
    }
}

/// Diagonal PTM of a Pauli channel.
pub fn channel_ptm<T: Scalar>(channel: &PauliChannel<T>) -> PauliTransferMatrix<T> {
    PauliTransferMatrix::from_diagonal(channel.n, &channel.eigenvalues()).expect("valid dimension")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{expectation, ObservableVector, PauliVector};
    use proptest::prelude::*;

    #[test]
    fn no_error_gives_identity() {
        let c = PauliChannel::<f64>::new(1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(channel_ptm(&c), PauliTransferMatrix::identity(1));
    }

    #[test]
    fn symmetric_channel_shrinks_all_axes_equally() {
        let c = PauliChannel::new(1, vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let d = channel_ptm(&c).matrix().diagonal();
        for (got, want) in d.iter().zip([1.0f64, 0.96, 0.96, 0.96]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn x_error_leaves_x_fixed() {
        let c = PauliChannel::new(1, vec![0.97, 0.03, 0.0, 0.0]).unwrap();
        let d = channel_ptm(&c).matrix().diagonal();
        for (got, want) in d.iter().zip([1.0f64, 1.0, 0.94, 0.94]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_state_survival_under_depolarizing() {
        let c = PauliChannel::new(1, vec![0.97, 0.01, 0.01, 0.01]).unwrap();
        let p0: f64 = expectation(
            &ObservableVector::zero_projector(1),
            &[channel_ptm(&c)],
            &PauliVector::zero_state(1),
        )
        .unwrap();
        assert!((p0 - 0.98).abs() < 1e-15);
    }

    #[test]
    fn rejects_off_simplex_rates() {
        assert!(PauliChannel::new(1, vec![1.01, -0.01, 0.0, 0.0]).is_err());
        assert!(PauliChannel::new(1, vec![0.9, 0.0, 0.0, 0.0]).is_err());
        assert!(PauliChannel::new(1, vec![1.0 + 2e-12, 0.0, 0.0, 0.0]).is_err());
        assert!(PauliChannel::new(1, vec![1.0 + 5e-13, 0.0, 0.0, 0.0]).is_ok());
        assert!(PauliChannel::<f64>::try_from(vec![1.0, 0.0]).is_err());
    }

    fn simplex(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, dim).prop_map(|w| {
            let s: f64 = w.iter().sum::<f64>().max(1e-9);
            let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let rest: f64 = p[1..].iter().sum();
            p[0] = 1.0 - rest;
            p
        })
    }

    proptest! {
        #[test]
        fn channel_ptm_is_diagonal_and_bounded(rates in simplex(16)) {
            prop_assume!(rates[0] >= 0.0);
            let c = PauliChannel::new(2, rates).unwrap();
            let r = channel_ptm(&c);
            prop_assert!(r.is_diagonal(0.0));
            prop_assert_eq!(r.matrix()[(0, 0)], c.rates().iter().sum::<f64>());
            prop_assert!((r.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
            for d in r.matrix().diagonal() {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&d));
            }
            let back = PauliChannel::from_eigenvalues(2, &c.eigenvalues()).unwrap();
            for (a, b) in back.rates().iter().zip(c.rates()) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
