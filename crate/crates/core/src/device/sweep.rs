use crate::device::{true_gate_ptm, DeviceSpec, PauliModel};
use crate::error::{PecError, Result};
use crate::pauli::{ideal_ptm, GateLabel, PauliVector};
use crate::qpd::inverse_noise;

/// Output-state fidelities of the MS gates on `|00>` at one crosstalk ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub raw_yy: f64,
    pub raw_zz: f64,
    pub mitigated_yy: f64,
    pub mitigated_zz: f64,
}

fn fidelities(spec: &DeviceSpec, characterized: &PauliModel, gate: GateLabel, ratio: f64) -> Result<(f64, f64)> {
    let input = PauliVector::zero_state(2);
    let ideal = ideal_ptm::<f64>(&gate);
    let target = ideal.apply(&input)?;
    let actual = true_gate_ptm(&spec.model, ratio, &gate)?;
    let raw = actual.apply(&input)?;
    // The compensation is the characterized inverse noise itself, so only the
    // part of the truth that the Pauli model misses survives mitigation.
    let correction = inverse_noise(&characterized.gate_ptm(&gate)?, &ideal)?;
    let mitigated = correction.apply(&raw)?;
    Ok((target.overlap(&raw)?, target.overlap(&mitigated)?))
}

/// Raw and error-mitigated `MS_YY` / `MS_ZZ` fidelities as a function of `Omega_eff / Omega`.
///
/// `characterized` is the crosstalk-free model the mitigation was built from.
pub fn state_fidelity_sweep(spec: &DeviceSpec, characterized: &PauliModel, ratios: &[f64]) -> Result<Vec<SweepRow>> {
    if spec.n() != 2 || characterized.n() != 2 {
        return Err(PecError::InvalidArgument("the crosstalk sweep needs a two-qubit device".into()));
    }
    ratios
        .iter()
        .map(|&ratio| {
            if !(ratio >= 0.0) {
                return Err(PecError::InvalidArgument(format!("negative crosstalk ratio {ratio}")));
            }
            let (raw_yy, mitigated_yy) = fidelities(spec, characterized, GateLabel::MsYy, ratio)?;
            let (raw_zz, mitigated_zz) = fidelities(spec, characterized, GateLabel::MsZz, ratio)?;
            Ok(SweepRow {
                ratio,
                raw_yy,
                raw_zz,
                mitigated_yy,
                mitigated_zz,
            })
        })
        .collect()
}

/// Smallest ratio at which crosstalk costs the mitigated `MS_ZZ` fidelity `target_error`.
pub fn calibrate_crosstalk_ratio(spec: &DeviceSpec, characterized: &PauliModel, target_error: f64) -> Result<f64> {
    let loss = |r: f64| -> Result<f64> {
        let rows = state_fidelity_sweep(spec, characterized, &[0.0, r])?;
        Ok(rows[0].mitigated_zz - rows[1].mitigated_zz)
    };
    let mut hi = 0.01;
    while loss(hi)? < target_error {
        hi *= 2.0;
        if hi > 1.0 {
            return Err(PecError::InvalidArgument(format!(
                "crosstalk cannot reach an error of {target_error}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if loss(mid)? < target_error {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
