//! Linear characterization of the `MS_YY` Pauli channel once the single-qubit
//! gates and the prepared state are known.

use crate::device::PauliModel;
use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{
    commutation_sign, ideal_ptm, GateLabel, ObservableVector, PauliChannel, PauliLabel, PauliTransferMatrix,
};

/// Default for how far below zero a solved rate may fall and still be
/// treated as noise (clipped) rather than a model violation.
pub const NEGATIVE_RATE_TOLERANCE: f64 = 1e-4;
const RANK_TOLERANCE: f64 = 1e-8;

/// Readout-corrected `|00>` frequency after `F_k · MS_YY · F_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsObservation {
    pub init: usize,
    pub meas: usize,
    pub freq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsFit {
    pub channel: PauliChannel,
    /// Settings `(i, k)` the 15 equations came from.
    pub settings: Vec<(usize, usize)>,
    /// 1-norm condition number of the solved system.
    pub condition: f64,
}

/// Coefficients `a_l` with `p00 = sum_l p_l a_l` for setting `(i, k)` under `model`.
fn row(model: &PauliModel, init: usize, meas: usize) -> Result<(Vec<f64>, f64)> {
    let state = model.fiducial_state(init)?;
    let after_ms = ideal_ptm::<f64>(&GateLabel::MsYy).apply(&state)?;
    let effect = ObservableVector::zero_projector(2).then(&model.gate_ptm(&GateLabel::measurement_fiducial(2, meas)?)?)?;
    let u = effect.entries();
    let v = after_ms.entries();
    let a: Vec<f64> = PauliLabel::all(2)
        .map(|l| {
            PauliLabel::all(2)
                .map(|c| u[c.index()] * v[c.index()] * commutation_sign::<f64>(l, c))
                .sum()
        })
        .collect();
    Ok((a[1..].iter().map(|x| x - a[0]).collect(), a[0]))
}

/// Greedy Gram-Schmidt choice of 15 independent equations among `candidates`,
/// scored on the ideal model. Deterministic settings (ideal `p00` of 0 or 1)
/// are exhausted first.
pub fn select_ms_settings(candidates: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let ideal = PauliModel::noiseless(2);
    let mut rows = Vec::with_capacity(candidates.len());
    for &(i, k) in candidates {
        // With every error rate at zero the ideal p00 is just the offset.
        let (r, p00) = row(&ideal, i, k)?;
        let deterministic = p00.abs() < 1e-12 || (p00 - 1.0).abs() < 1e-12;
        rows.push((r, deterministic));
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for phase in [true, false] {
        loop {
            if basis.len() == 15 {
                break;
            }
            let mut best: Option<(usize, f64, Vec<f64>)> = None;
            for (idx, (r, det)) in rows.iter().enumerate() {
                if *det != phase || chosen.contains(&idx) {
                    continue;
                }
                let mut res = r.clone();
                for b in &basis {
                    let dot: f64 = res.iter().zip(b).map(|(x, y)| x * y).sum();
                    res.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
                }
                let norm = res.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > RANK_TOLERANCE && best.as_ref().is_none_or(|b| norm > b.1 + 1e-12) {
                    best = Some((idx, norm, res));
                }
            }
            match best {
                Some((idx, norm, res)) => {
                    chosen.push(idx);
                    basis.push(res.into_iter().map(|x| x / norm).collect());
                }
                None => break,
            }
        }
    }
    if basis.len() < 15 {
        return Err(PecError::RankDeficient {
            rank: basis.len(),
            required: 15,
            condition: f64::INFINITY,
        });
    }
    Ok(chosen.into_iter().map(|idx| candidates[idx]).collect())
}

/// All 16 x 9 `(i, k)` pairs of the two-qubit fiducials.
pub fn all_ms_settings() -> Vec<(usize, usize)> {
    (0..16).flat_map(|i| (0..9).map(move |k| (i, k))).collect()
}

/// Solves for the 16 `MS_YY` rates from 15 selected equations.
///
/// `singles` supplies the state and the single-qubit gate PTMs; duplicate
/// observations of one setting are averaged. Rates below `-negative_tolerance`
/// are a [`PecError::ModelViolation`]; smaller negatives are clipped to zero.
pub fn characterize_ms_from(obs: &[MsObservation], singles: &PauliModel, negative_tolerance: f64) -> Result<MsFit> {
    if singles.n() != 2 {
        return Err(PecError::DimensionMismatch {
            expected: 2,
            found: singles.n(),
        });
    }
    let mut present: Vec<(usize, usize)> = obs.iter().map(|o| (o.init, o.meas)).collect();
    present.sort_unstable();
    present.dedup();
    let settings = select_ms_settings(&present)?;
    let mut a = Vec::with_capacity(15);
    let mut b = Vec::with_capacity(15);
    for &(i, k) in &settings {
        let (r, a0) = row(singles, i, k)?;
        let matching: Vec<f64> = obs
            .iter()
            .filter(|o| (o.init, o.meas) == (i, k))
            .map(|o| o.freq)
            .collect();
        let freq = matching.iter().sum::<f64>() / matching.len() as f64;
        a.push(r);
        b.push(freq - a0);
    }
    let system = Matrix::from_rows(&a)?;
    let condition = system.cond1();
    let solution = system.solve(&b).map_err(|_| PecError::RankDeficient {
        rank: 14,
        required: 15,
        condition,
    })?;
    let mut rates = Vec::with_capacity(16);
    rates.push(1.0 - solution.iter().sum::<f64>());
    rates.extend(solution);
    if let Some((idx, &worst)) = rates
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .filter(|(_, &r)| r < -negative_tolerance)
    {
        return Err(PecError::ModelViolation(format!(
            "MS_YY rate of {} came out at {worst:.3e}",
            PauliLabel::from_index(2, idx)?
        )));
    }
    let clipped: Vec<f64> = rates.iter().map(|r| r.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let channel = PauliChannel::new(2, clipped.iter().map(|r| r / total).collect())?;
    Ok(MsFit {
        channel,
        settings,
        condition,
    })
}

/// `X_{-π/2}⊗X_{-π/2} · MS_YY · X_{π/2}⊗X_{π/2}` with the characterized local gates.
pub fn derive_ms_zz(singles: &PauliModel, ms_yy: &PauliTransferMatrix<f64>) -> Result<PauliTransferMatrix<f64>> {
    use crate::pauli::Gate1::{XHalfPi, XMinusHalfPi};
    crate::device::derive_ms_zz_from(
        &singles.gate_ptm(&GateLabel::Local(XHalfPi, XHalfPi))?,
        ms_yy,
        &singles.gate_ptm(&GateLabel::Local(XMinusHalfPi, XMinusHalfPi))?,
    )
}
