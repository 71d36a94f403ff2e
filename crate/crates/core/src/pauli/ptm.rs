use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{pauli_dim, Axis, PauliLabel, MAX_QUBITS};
use crate::scalar::Scalar;

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(PecError::InvalidArgument(format!(
            "qubit count must be 1..={MAX_QUBITS}, got {n}"
        )));
    }
    Ok(())
}

fn check_same_n(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(PecError::DimensionMismatch {
            expected: pauli_dim(expected),
            found: pauli_dim(found),
        });
    }
    Ok(())
}

/// Pauli transfer matrix `R[i][j] = Tr(P_i G(P_j)) / 2^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTransferMatrix<T> {
    n: usize,
    m: Matrix<T>,
}

impl<T: Scalar> PauliTransferMatrix<T> {
    pub fn from_matrix(n: usize, m: Matrix<T>) -> Result<Self> {
        check_n(n)?;
        let dim = pauli_dim(n);
        if m.rows() != dim || m.cols() != dim {
            return Err(PecError::DimensionMismatch {
                expected: dim,
                found: m.rows().max(m.cols()),
            });
        }
        Ok(Self { n, m })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            m: Matrix::identity(pauli_dim(n)),
        }
    }

    pub fn from_diagonal(n: usize, diag: &[T]) -> Result<Self> {
        Self::from_matrix(n, Matrix::from_diagonal(diag))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        pauli_dim(self.n)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.m
    }

    pub fn entry(&self, row: PauliLabel, col: PauliLabel) -> T {
        self.m[(row.index(), col.index())]
    }

    /// Matrix product `self * first`: apply `first`, then `self`.
    pub fn after(&self, first: &Self) -> Result<Self> {
        compose(self, first)
    }

    pub fn apply(&self, rho: &PauliVector<T>) -> Result<PauliVector<T>> {
        check_same_n(self.n, rho.n)?;
        Ok(PauliVector {
            n: self.n,
            v: self.m.mul_vec(&rho.v)?,
        })
    }

    pub fn inverse(&self) -> Result<Self> {
        Ok(Self {
            n: self.n,
            m: self.m.inverse()?,
        })
    }

    pub fn transpose(&self) -> Self {
        Self {
            n: self.n,
            m: self.m.transpose(),
        }
    }

    pub fn is_diagonal(&self, tol: T) -> bool {
        self.m.is_diagonal(tol)
    }

    /// First row equals `(1, 0, ..., 0)`.
    pub fn is_trace_preserving(&self, tol: T) -> bool {
        self.m
            .row(0)
            .iter()
            .enumerate()
            .all(|(c, &x)| (x - if c == 0 { T::one() } else { T::zero() }).abs() <= tol)
    }

    pub fn is_orthogonal(&self, tol: T) -> bool {
        match self.m.transpose().matmul(&self.m) {
            Ok(g) => g
                .max_abs_diff(&Matrix::identity(self.dim()))
                .map(|d| d <= tol)
                .unwrap_or(false),
            Err(_) => false,
        }
    }

    /// Process (entanglement) fidelity with a unitary target, `Tr(R_target^T R) / d^2`.
    pub fn process_fidelity(&self, target: &Self) -> Result<T> {
        check_same_n(self.n, target.n)?;
        let overlap = target.m.transpose().matmul(&self.m)?.trace();
        Ok(overlap / T::lit(self.dim() as f64))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        check_same_n(self.n, other.n)?;
        self.m.max_abs_diff(&other.m)
    }
}

/// `second * first`.
pub fn compose<T: Scalar>(
    second: &PauliTransferMatrix<T>,
    first: &PauliTransferMatrix<T>,
) -> Result<PauliTransferMatrix<T>> {
    check_same_n(second.n, first.n)?;
    Ok(PauliTransferMatrix {
        n: first.n,
        m: second.m.matmul(&first.m)?,
    })
}

/// Kronecker product of two single-qubit PTMs; `a` acts on qubit 0.
pub fn tensor<T: Scalar>(
    a: &PauliTransferMatrix<T>,
    b: &PauliTransferMatrix<T>,
) -> Result<PauliTransferMatrix<T>> {
    if a.n != 1 || b.n != 1 {
        return Err(PecError::DimensionMismatch {
            expected: 4,
            found: a.dim().max(b.dim()),
        });
    }
    Ok(PauliTransferMatrix {
        n: 2,
        m: a.m.kron(&b.m),
    })
}

/// `<<E| ops[last] ... ops[0] |rho>>`; `ops` are listed in the order they are applied.
pub fn expectation<T: Scalar>(
    e: &ObservableVector<T>,
    ops: &[PauliTransferMatrix<T>],
    rho: &PauliVector<T>,
) -> Result<T> {
    check_same_n(e.n, rho.n)?;
    let mut state = rho.clone();
    for op in ops {
        state = op.apply(&state)?;
    }
    e.eval(&state)
}

/// Column vector `|rho>>` with entries `Tr(P_j rho) / sqrt(2^n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliVector<T> {
    n: usize,
    v: Vec<T>,
}

impl<T: Scalar> PauliVector<T> {
    pub fn from_entries(n: usize, v: Vec<T>) -> Result<Self> {
        check_n(n)?;
        if v.len() != pauli_dim(n) {
            return Err(PecError::DimensionMismatch {
                expected: pauli_dim(n),
                found: v.len(),
            });
        }
        Ok(Self { n, v })
    }

    /// Single-qubit state with Bloch vector `(x, y, z)`.
    pub fn from_bloch(bloch: [T; 3]) -> Self {
        let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
        Self {
            n: 1,
            v: vec![s, bloch[0] * s, bloch[1] * s, bloch[2] * s],
        }
    }

    /// `|0...0><0...0|`.
    pub fn zero_state(n: usize) -> Self {
        let s = T::one() / T::lit(pauli_dim(n) as f64).sqrt().sqrt();
        let v = PauliLabel::all(n)
            .map(|p| {
                if p.axes().iter().all(|&a| a == Axis::I || a == Axis::Z) {
                    s
                } else {
                    T::zero()
                }
            })
            .collect();
        Self { n, v }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[T] {
        &self.v
    }

    pub fn get(&self, label: PauliLabel) -> T {
        self.v[label.index()]
    }

    /// `Tr(P rho)` for a Pauli string `P`.
    pub fn pauli_expectation(&self, label: PauliLabel) -> T {
        self.v[label.index()] * T::lit(((1usize << self.n) as f64).sqrt())
    }

    /// `Tr(rho sigma)`; the state fidelity when one of the two is pure.
    pub fn overlap(&self, other: &Self) -> Result<T> {
        check_same_n(self.n, other.n)?;
        Ok(self.v.iter().zip(&other.v).map(|(&a, &b)| a * b).sum())
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.n + other.n > MAX_QUBITS {
            return Err(PecError::InvalidArgument("register too large".into()));
        }
        let mut v = Vec::with_capacity(self.v.len() * other.v.len());
        for &a in &self.v {
            for &b in &other.v {
                v.push(a * b);
            }
        }
        Ok(Self {
            n: self.n + other.n,
            v,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        check_same_n(self.n, other.n)?;
        Ok(self
            .v
            .iter()
            .zip(&other.v)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn norm(&self) -> T {
        self.v.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

/// Row vector `<<E|` with entries `Tr(P_j E) / sqrt(2^n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableVector<T> {
    n: usize,
    v: Vec<T>,
}

impl<T: Scalar> ObservableVector<T> {
    pub fn from_entries(n: usize, v: Vec<T>) -> Result<Self> {
        check_n(n)?;
        if v.len() != pauli_dim(n) {
            return Err(PecError::DimensionMismatch {
                expected: pauli_dim(n),
                found: v.len(),
            });
        }
        Ok(Self { n, v })
    }

    /// Projector onto the computational basis string `bits` (qubit 0 is the most significant bit).
    pub fn outcome_projector(n: usize, bits: usize) -> Self {
        let s = T::one() / T::lit(pauli_dim(n) as f64).sqrt().sqrt();
        let v = PauliLabel::all(n)
            .map(|p| {
                let mut sign = s;
                for q in 0..n {
                    match p.axis(q) {
                        Axis::I => {}
                        Axis::Z => {
                            if (bits >> (n - 1 - q)) & 1 == 1 {
                                sign = -sign;
                            }
                        }
                        _ => return T::zero(),
                    }
                }
                sign
            })
            .collect();
        Self { n, v }
    }

    /// `|0...0><0...0|`, the "dark state" outcome.
    pub fn zero_projector(n: usize) -> Self {
        Self::outcome_projector(n, 0)
    }

    /// The Pauli observable itself, so that `eval` returns `Tr(P rho)`.
    pub fn pauli(label: PauliLabel) -> Self {
        let n = label.n();
        let mut v = vec![T::zero(); pauli_dim(n)];
        v[label.index()] = T::lit(((1usize << n) as f64).sqrt());
        Self { n, v }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[T] {
        &self.v
    }

    pub fn eval(&self, rho: &PauliVector<T>) -> Result<T> {
        check_same_n(self.n, rho.n)?;
        Ok(self.v.iter().zip(&rho.v).map(|(&a, &b)| a * b).sum())
    }

    /// `<<E| R`, the Heisenberg-picture observable after `R`.
    pub fn then(&self, r: &PauliTransferMatrix<T>) -> Result<Self> {
        check_same_n(self.n, r.n())?;
        Ok(Self {
            n: self.n,
            v: r.matrix().vec_mul(&self.v)?,
        })
    }
}
