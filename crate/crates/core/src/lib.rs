pub mod device;
pub mod gst;
pub mod error;
pub mod linalg;
pub mod pauli;
pub mod pec;
pub mod qpd;
pub mod rb;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{PecError, Result};
pub use scalar::Scalar;

/// Double-precision PTM, the working type of the device and mitigation layers.
pub type Ptm = pauli::PauliTransferMatrix<f64>;
pub type PtmF32 = pauli::PauliTransferMatrix<f32>;
pub type StateVector = pauli::PauliVector<f64>;
pub type StateVectorF32 = pauli::PauliVector<f32>;
pub type Observable = pauli::ObservableVector<f64>;
pub type ObservableF32 = pauli::ObservableVector<f32>;
pub type Channel = pauli::PauliChannel<f64>;
pub type ChannelF32 = pauli::PauliChannel<f32>;
pub type RealMatrix = linalg::Matrix<f64>;
