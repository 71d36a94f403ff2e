//! Weighted least-squares fit of `F(L) = A p^L + B`.

use crate::error::{PecError, Result};
use crate::linalg::Matrix;

use super::RbPoint;

/// What the exponent `L` counts in the reported decay.
pub const EXPONENT_CONVENTION: &str = "L: one computational gate and one interleaved gate per step";

const MAX_ITERATIONS: usize = 2000;
const SIGMA_FLOOR: f64 = 1e-12;

/// Whether the asymptote `B` is fitted or held at a known value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayModel {
    /// `B` pinned (1/2 for readout-corrected survival of a unital channel).
    FixedOffset(f64),
    FreeOffset,
}

impl Default for DecayModel {
    fn default() -> Self {
        DecayModel::FixedOffset(0.5)
    }
}

impl DecayModel {
    fn parameters(self) -> usize {
        match self {
            DecayModel::FixedOffset(_) => 2,
            DecayModel::FreeOffset => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecayModel::FixedOffset(_) => "fixed",
            DecayModel::FreeOffset => "free",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    /// Qubit count, for the depolarizing conversion.
    pub n: usize,
    pub a: f64,
    pub p: f64,
    pub b: f64,
    /// Covariance of `(A, p, B)`; the `B` row is zero when it is fixed.
    pub covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub dof: usize,
}

impl DecayFit {
    pub fn a_se(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn p_se(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn b_se(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    /// `1 - p`.
    pub fn decay_rate(&self) -> f64 {
        1.0 - self.p
    }

    /// `(d - 1)(1 - p) / d`: `(1 - p)/2` for one qubit, `3(1 - p)/4` for two.
    pub fn error_rate(&self) -> f64 {
        self.depolarizing_factor() * (1.0 - self.p)
    }

    pub fn error_rate_se(&self) -> f64 {
        self.depolarizing_factor() * self.p_se()
    }

    fn depolarizing_factor(&self) -> f64 {
        let d = (1usize << self.n) as f64;
        (d - 1.0) / d
    }

    pub fn predict(&self, length: usize) -> f64 {
        self.a * self.p.powi(length as i32) + self.b
    }
}

struct Problem<'a> {
    points: &'a [RbPoint],
    model: DecayModel,
}

impl Problem<'_> {
    fn unpack(&self, theta: &[f64]) -> (f64, f64, f64) {
        match self.model {
            DecayModel::FixedOffset(b) => (theta[0], theta[1], b),
            DecayModel::FreeOffset => (theta[0], theta[1], theta[2]),
        }
    }

    fn sigma(point: &RbPoint) -> f64 {
        point.std_error.max(SIGMA_FLOOR)
    }

    fn chi2(&self, theta: &[f64]) -> f64 {
        let (a, p, b) = self.unpack(theta);
        self.points
            .iter()
            .map(|pt| {
                let r = (pt.mean - a * p.powi(pt.length as i32) - b) / Self::sigma(pt);
                r * r
            })
            .sum()
    }

    /// Weighted Jacobian rows and residuals.
    fn linearize(&self, theta: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (a, p, b) = self.unpack(theta);
        let k = self.model.parameters();
        let mut jac = Vec::with_capacity(self.points.len());
        let mut res = Vec::with_capacity(self.points.len());
        for pt in self.points {
            let s = Self::sigma(pt);
            let l = pt.length as i32;
            let mut row = vec![p.powi(l) / s, a * f64::from(l) * p.powi(l - 1) / s];
            if k == 3 {
                row.push(1.0 / s);
            }
            jac.push(row);
            res.push((pt.mean - a * p.powi(l) - b) / s);
        }
        (jac, res)
    }

    fn normal_equations(&self, theta: &[f64]) -> (Matrix<f64>, Vec<f64>) {
        let k = self.model.parameters();
        let (jac, res) = self.linearize(theta);
        let jtj = Matrix::from_fn(k, k, |r, c| jac.iter().map(|row| row[r] * row[c]).sum());
        let jtr = (0..k).map(|r| jac.iter().zip(&res).map(|(row, e)| row[r] * e).sum()).collect();
        (jtj, jtr)
    }

    fn initial(&self) -> Vec<f64> {
        let b0 = match self.model {
            DecayModel::FixedOffset(b) => b,
            DecayModel::FreeOffset => 0.5,
        };
        // Weighted straight line through ln(F - B) against L.
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for pt in self.points {
            let w = 1.0 / Self::sigma(pt).powi(2);
            let x = pt.length as f64;
            let y = (pt.mean - b0).max(1e-6).ln();
            sw += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            sxy += w * x * y;
        }
        let det = sw * sxx - sx * sx;
        let slope = if det.abs() > 0.0 { (sw * sxy - sx * sy) / det } else { 0.0 };
        let intercept = (sy - slope * sx) / sw;
        let mut theta = vec![intercept.exp(), slope.exp().clamp(0.1, 1.01)];
        if self.model == DecayModel::FreeOffset {
            theta.push(b0);
        }
        theta
    }
}

/// Levenberg-Marquardt fit with inverse-variance weights.
///
/// Uncertainties come from the inverse curvature, inflated by the reduced
/// chi-square when that exceeds one; directions the data cannot constrain
/// get infinite variance.
pub fn fit_decay(n: usize, points: &[RbPoint], model: DecayModel) -> Result<DecayFit> {
    let mut lengths: Vec<usize> = points.iter().map(|p| p.length).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 3 {
        return Err(PecError::InvalidArgument(format!(
            "decay fit needs at least 3 distinct lengths, got {}",
            lengths.len()
        )));
    }
    if points.iter().any(|p| !p.mean.is_finite() || !p.std_error.is_finite()) {
        return Err(PecError::InvalidArgument("non-finite survival point".into()));
    }
    let problem = Problem { points, model };
    let k = model.parameters();
    let mut theta = problem.initial();
    let mut chi2 = problem.chi2(&theta);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut stalls = 0;
    for _ in 0..MAX_ITERATIONS {
        let (jtj, jtr) = problem.normal_equations(&theta);
        let mut accepted = false;
        for _ in 0..60 {
            let damped = Matrix::from_fn(k, k, |r, c| {
                if r == c {
                    jtj.row(r)[c] * (1.0 + mu) + 1e-300
                } else {
                    jtj.row(r)[c]
                }
            });
            let Ok(step) = damped.solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
            let trial_chi2 = problem.chi2(&trial);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let gain = chi2 - trial_chi2;
                let size = step.iter().zip(&theta).map(|(s, t)| (s / t.abs().max(1e-3)).abs()).fold(0.0, f64::max);
                theta = trial;
                chi2 = trial_chi2;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if gain <= 1e-12 * chi2.max(1.0) || size < 1e-13 {
                    stalls += 1;
                    converged = stalls >= 3 || chi2 < 1e-28;
                } else {
                    stalls = 0;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: a minimum to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged || !chi2.is_finite() || theta.iter().any(|t| !t.is_finite()) {
        return Err(PecError::FitFailed { residual: chi2 });
    }
    let dof = points.len().saturating_sub(k);
    let inflation = if dof > 0 { (chi2 / dof as f64).max(1.0) } else { 1.0 };
    let (jtj, _) = problem.normal_equations(&theta);
    let mut covariance = [[0.0; 3]; 3];
    match jtj.inverse() {
        Ok(inv) => {
            for r in 0..k {
                for c in 0..k {
                    covariance[r][c] = inv.row(r)[c] * inflation;
                }
            }
        }
        Err(_) => {
            for (r, row) in covariance.iter_mut().enumerate().take(k) {
                row[r] = f64::INFINITY;
            }
        }
    }
    let (a, p, b) = problem.unpack(&theta);
    Ok(DecayFit {
        model,
        n,
        a,
        p,
        b,
        covariance,
        chi2,
        dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(a: f64, p: f64, b: f64, se: f64) -> Vec<RbPoint> {
        [1usize, 2, 4, 8, 16, 32, 64]
            .iter()
            .map(|&l| RbPoint {
                length: l,
                mean: a * p.powi(l as i32) + b,
                std_error: se,
                n_sequences: 10,
            })
            .collect()
    }

    #[test]
    fn exact_points_round_trip() {
        let points = synthetic(0.5, 0.998, 0.5, 1e-3);
        for model in [DecayModel::default(), DecayModel::FreeOffset] {
            let fit = fit_decay(1, &points, model).unwrap();
            assert!((fit.p - 0.998).abs() < 1e-9, "{model:?}: {}", fit.p);
            assert!((fit.a - 0.5).abs() < 1e-7);
            assert!(fit.chi2 < 1e-12);
            assert!((fit.error_rate() - 0.001).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_points_have_no_decay() {
        let points = synthetic(0.5, 1.0, 0.5, 1e-3);
        let fit = fit_decay(1, &points, DecayModel::default()).unwrap();
        assert!((fit.p - 1.0).abs() < 1e-12);
        assert!(fit.error_rate().abs() < 1e-12);
        let free = fit_decay(1, &points, DecayModel::FreeOffset).unwrap();
        assert!((free.p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_qubit_conversion() {
        let fit = fit_decay(2, &synthetic(0.45, 0.98, 0.5, 1e-3), DecayModel::default()).unwrap();
        assert!((fit.error_rate() - 0.75 * 0.02).abs() < 1e-9);
        assert!((fit.decay_rate() - 0.02).abs() < 1e-9);
    }

    #[test]
    fn too_few_lengths_are_refused() {
        let points = &synthetic(0.5, 0.99, 0.5, 1e-3)[..2];
        assert!(matches!(fit_decay(1, points, DecayModel::default()), Err(PecError::InvalidArgument(_))));
    }

    #[test]
    fn weights_rescale_without_moving_p() {
        let mut points = synthetic(0.5, 0.995, 0.5, 1e-3);
        for (i, p) in points.iter_mut().enumerate() {
            p.mean += if i % 2 == 0 { 1e-3 } else { -1e-3 };
        }
        let fit = fit_decay(1, &points, DecayModel::default()).unwrap();
        let mut wide = points.clone();
        wide.iter_mut().for_each(|p| p.std_error *= 10.0);
        let wide_fit = fit_decay(1, &wide, DecayModel::default()).unwrap();
        assert!((fit.p - wide_fit.p).abs() < 1e-10);
        assert!(wide_fit.p_se() >= fit.p_se());
    }
}
