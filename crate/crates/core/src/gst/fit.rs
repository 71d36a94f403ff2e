//! Maximum-likelihood fit of the single-qubit Pauli ansatz.
//!
//! Each gate's rates are a softmax of three logits (identity logit pinned at 0),
//! which keeps every iterate on the simplex.
//!
//! The ansatz is not fully identifiable from the 132 settings. The length of
//! the prepared Bloch vector trades off against a common shrinking of the
//! fiducial channels, so the state is taken to be pure. Two more directions
//! move weight between the `X`/`Z` rates of `Y_{±π/2}` (and the `Y`/`Z` rates
//! of `X_{±π/2}`) while tilting the state, leaving every probability unchanged.
//! They are pinned by requiring the ±π/2 pulses about an axis to share the
//! eigenvalue anisotropy of the ±π pulses about that axis.

use std::collections::BTreeMap;

use crate::device::QubitModel;
use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{ideal_ptm, Gate1, GateLabel, PauliChannel, MEASUREMENT_FIDUCIALS, PREP_FIDUCIALS};

const N_GATES: usize = 11;
const N_LOGITS: usize = 3 * N_GATES;
const LOGIT_RANGE: (f64, f64) = (-30.0, 20.0);

/// One single-qubit tomography datum: `F_i`, `G_j`, `F_k` and the observed
/// `|0>` frequency with its variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub init: usize,
    pub gate: Gate1,
    pub meas: usize,
    pub freq: f64,
    pub variance: f64,
}

/// Gauge ties: (π/2 pulses, π pulses, the two eigenvalue axes they exchange).
const GAUGE_TIES: [([Gate1; 2], [Gate1; 2], usize, usize); 2] = [
    ([Gate1::YHalfPi, Gate1::YMinusHalfPi], [Gate1::YPi, Gate1::YMinusPi], 1, 3),
    ([Gate1::XHalfPi, Gate1::XMinusHalfPi], [Gate1::XPi, Gate1::XMinusPi], 2, 3),
];
const N_STATE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 2000 }
    }
}

/// Fitted single-qubit model plus optimizer diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleQubitFit {
    pub model: QubitModel,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

type M4 = [[f64; 4]; 4];

fn sign_of(l: usize, c: usize) -> f64 {
    if l == 0 || c == 0 || l == c {
        1.0
    } else {
        -1.0
    }
}

fn ideal_arrays() -> [M4; N_GATES] {
    let mut out = [[[0.0; 4]; 4]; N_GATES];
    for g in Gate1::ALL {
        let m = ideal_ptm::<f64>(&GateLabel::One(g));
        for (r, row) in out[g.index()].iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = m.matrix()[(r, c)];
            }
        }
    }
    out
}

fn mv(m: &M4, v: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|r| (0..4).map(|c| m[r][c] * v[c]).sum())
}

fn vm(w: &[f64; 4], m: &M4) -> [f64; 4] {
    std::array::from_fn(|c| (0..4).map(|r| w[r] * m[r][c]).sum())
}

/// Parameter vector decoded into rates, eigenvalues and state.
struct Decoded {
    probs: [[f64; 4]; N_GATES],
    lambdas: [[f64; 4]; N_GATES],
    bloch: [f64; 3],
    /// d rho / d state parameter, Pauli-vector components.
    state_jac: [[f64; 4]; N_STATE],
}

impl Decoded {
    /// Gauge-tie residuals and their gradients.
    fn ties(&self) -> [(f64, Vec<(usize, f64)>); 2] {
        GAUGE_TIES.map(|(half, full, a, b)| {
            let mut value = 0.0;
            let mut grad = Vec::new();
            for (gates, sign) in [(half, 1.0), (full, -1.0)] {
                for gate in gates {
                    let g = gate.index();
                    let lam = &self.lambdas[g];
                    value += sign * (lam[a].ln() - lam[b].ln());
                    for l in 1..4 {
                        let p = self.probs[g][l];
                        let d = p * (sign_of(l, a) - lam[a]) / lam[a] - p * (sign_of(l, b) - lam[b]) / lam[b];
                        grad.push((3 * g + l - 1, sign * d));
                    }
                }
            }
            (value, grad)
        })
    }
}

struct Problem<'a> {
    obs: &'a [Observation],
    ideal: [M4; N_GATES],
    /// Weight of the gauge ties relative to the data.
    tie_weight: f64,
}

impl<'a> Problem<'a> {
    fn new(obs: &'a [Observation]) -> Self {
        let information: f64 = obs.iter().map(|o| 1.0 / o.variance).sum();
        Self {
            obs,
            ideal: ideal_arrays(),
            tie_weight: (1e3 * information).sqrt(),
        }
    }

    fn n_params(&self) -> usize {
        N_LOGITS + N_STATE
    }

    fn decode(&self, theta: &[f64]) -> Option<Decoded> {
        let mut probs = [[0.0; 4]; N_GATES];
        let mut lambdas = [[0.0; 4]; N_GATES];
        for g in 0..N_GATES {
            let t = &theta[3 * g..3 * g + 3];
            let mx = t.iter().copied().fold(0.0, f64::max);
            let e = [(-mx).exp(), (t[0] - mx).exp(), (t[1] - mx).exp(), (t[2] - mx).exp()];
            let z: f64 = e.iter().sum();
            for l in 0..4 {
                probs[g][l] = e[l] / z;
            }
            for c in 0..4 {
                lambdas[g][c] = (0..4).map(|l| probs[g][l] * sign_of(l, c)).sum();
            }
        }
        let s = &theta[N_LOGITS..];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r2 = s[0] * s[0] + s[1] * s[1];
        if r2 >= 1.0 {
            return None;
        }
        let z = (1.0 - r2).sqrt();
        let bloch = [s[0], s[1], z];
        let state_jac = [[0.0, h, 0.0, -h * s[0] / z], [0.0, 0.0, h, -h * s[1] / z]];
        Some(Decoded {
            probs,
            lambdas,
            bloch,
            state_jac,
        })
    }

    fn gate_matrix(&self, d: &Decoded, g: usize) -> M4 {
        let mut m = self.ideal[g];
        for (r, row) in m.iter_mut().enumerate() {
            for x in row.iter_mut() {
                *x *= d.lambdas[g][r];
            }
        }
        m
    }

    /// Predicted frequency of one observation and, optionally, its gradient.
    fn predict(&self, d: &Decoded, mats: &[M4; N_GATES], o: &Observation, grad: Option<&mut [f64]>) -> f64 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rho = [h, h * d.bloch[0], h * d.bloch[1], h * d.bloch[2]];
        let e0 = [h, 0.0, 0.0, h];
        let seq = [
            PREP_FIDUCIALS[o.init].index(),
            o.gate.index(),
            MEASUREMENT_FIDUCIALS[o.meas].index(),
        ];
        // Forward states s_t and backward effects w_t around each position.
        let mut fwd = [rho; 4];
        for t in 0..3 {
            fwd[t + 1] = mv(&mats[seq[t]], &fwd[t]);
        }
        let m: f64 = (0..4).map(|c| e0[c] * fwd[3][c]).sum();
        if let Some(grad) = grad {
            grad.iter_mut().for_each(|x| *x = 0.0);
            let mut back = [e0; 4];
            for t in (0..3).rev() {
                back[t] = vm(&back[t + 1], &mats[seq[t]]);
            }
            for t in 0..3 {
                let g = seq[t];
                let pre = mv(&self.ideal[g], &fwd[t]);
                let dm_dlambda: [f64; 4] = std::array::from_fn(|c| back[t + 1][c] * pre[c]);
                for l in 1..4 {
                    let p = d.probs[g][l];
                    let v: f64 = (1..4).map(|c| dm_dlambda[c] * p * (sign_of(l, c) - d.lambdas[g][c])).sum();
                    grad[3 * g + l - 1] += v;
                }
            }
            for (k, dr) in d.state_jac.iter().enumerate() {
                grad[N_LOGITS + k] = (0..4).map(|c| back[0][c] * dr[c]).sum();
            }
        }
        m
    }

    fn matrices(&self, d: &Decoded) -> [M4; N_GATES] {
        std::array::from_fn(|g| self.gate_matrix(d, g))
    }

    /// Data chi-square and the same with the gauge penalty added.
    fn chi2(&self, theta: &[f64]) -> Option<(f64, f64)> {
        let d = self.decode(theta)?;
        let mats = self.matrices(&d);
        let data: f64 = self
            .obs
            .iter()
            .map(|o| {
                let r = self.predict(&d, &mats, o, None) - o.freq;
                r * r / o.variance
            })
            .sum();
        let penalty: f64 = d.ties().iter().map(|(v, _)| (v * self.tie_weight).powi(2)).sum();
        Some((data, data + penalty))
    }

    /// Gauss-Newton normal equations `J^T J` and `J^T r`.
    fn normal_equations(&self, theta: &[f64]) -> (Matrix<f64>, Vec<f64>, f64) {
        let p = self.n_params();
        let d = self.decode(theta).expect("current iterate is feasible");
        let mats = self.matrices(&d);
        let mut jtj = Matrix::zeros(p, p);
        let mut jtr = vec![0.0; p];
        let mut grad = vec![0.0; p];
        let mut chi2 = 0.0;
        for o in self.obs {
            let w = 1.0 / o.variance.sqrt();
            let r = (self.predict(&d, &mats, o, Some(&mut grad)) - o.freq) * w;
            chi2 += r * r;
            let nz: Vec<usize> = (0..p).filter(|&a| grad[a] != 0.0).collect();
            for &a in &nz {
                let ja = grad[a] * w;
                jtr[a] += ja * r;
                for &b in &nz {
                    jtj[(a, b)] += ja * grad[b] * w;
                }
            }
        }
        for (value, g) in d.ties() {
            let r = value * self.tie_weight;
            chi2 += r * r;
            for &(a, ga) in &g {
                jtr[a] += ga * self.tie_weight * r;
                for &(b, gb) in &g {
                    jtj[(a, b)] += ga * gb * self.tie_weight * self.tie_weight;
                }
            }
        }
        (jtj, jtr, chi2)
    }

    fn initial(&self) -> Vec<f64> {
        let mut theta = vec![(1e-3f64 / 0.997).ln(); N_LOGITS];
        theta.extend([0.0; N_STATE]);
        theta
    }

    fn to_model(&self, theta: &[f64]) -> Result<QubitModel> {
        let d = self
            .decode(theta)
            .ok_or_else(|| PecError::InternalConsistency("fitted state left the Bloch ball".into()))?;
        let gates: BTreeMap<Gate1, PauliChannel> = Gate1::ALL
            .into_iter()
            .map(|g| Ok((g, PauliChannel::new(1, d.probs[g.index()].to_vec())?)))
            .collect::<Result<_>>()?;
        Ok(QubitModel { prep: d.bloch, gates })
    }
}

fn check_observations(obs: &[Observation]) -> Result<()> {
    for o in obs {
        if o.init >= 4 || o.meas >= 3 {
            return Err(PecError::InvalidArgument(format!(
                "observation ({}, {}, {}) is outside the design",
                o.init, o.gate, o.meas
            )));
        }
        if !(o.variance > 0.0) || !o.freq.is_finite() {
            return Err(PecError::InvalidArgument("observation needs a finite frequency and positive variance".into()));
        }
    }
    let mut seen = [[[false; 3]; N_GATES]; 4];
    for o in obs {
        seen[o.init][o.gate.index()][o.meas] = true;
    }
    let missing = seen.iter().flatten().flatten().filter(|&&s| !s).count();
    if missing > 0 {
        return Err(PecError::IncompleteData(format!(
            "{missing} of 132 (i, j, k) settings have no data"
        )));
    }
    Ok(())
}

/// Log-likelihood `-sum (m - m_bar)^2 / Delta^2` of `model` on `obs`.
pub fn likelihood(model: &QubitModel, obs: &[Observation]) -> Result<f64> {
    let norm = model.prep.iter().map(|x| x * x).sum::<f64>();
    if norm > 1.0 + 1e-12 {
        return Err(PecError::InvalidArgument("prepared Bloch vector outside the unit ball".into()));
    }
    let mut ptms = BTreeMap::new();
    for g in Gate1::ALL {
        ptms.insert(g, model.gate_ptm(g)?);
    }
    let state = model.state();
    let e0 = crate::pauli::ObservableVector::zero_projector(1);
    let mut total = 0.0;
    for o in obs {
        let mut s = ptms[&PREP_FIDUCIALS[o.init]].apply(&state)?;
        s = ptms[&o.gate].apply(&s)?;
        s = ptms[&MEASUREMENT_FIDUCIALS[o.meas]].apply(&s)?;
        let r = e0.eval(&s)? - o.freq;
        total += r * r / o.variance;
    }
    Ok(-total)
}

/// Levenberg-Marquardt maximization of the likelihood over the Pauli ansatz.
pub fn fit_observations(obs: &[Observation], options: FitOptions) -> Result<SingleQubitFit> {
    check_observations(obs)?;
    let problem = Problem::new(obs);
    let p = problem.n_params();
    let mut theta = problem.initial();
    let (mut data_chi2, mut chi2) = problem.chi2(&theta).expect("initial point is feasible");
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let (jtj, jtr, _) = problem.normal_equations(&theta);
        // Jacobi-scaled damped normal equations; the floor keeps parameters
        // the data barely touch (rates pinned near zero) from blowing up.
        let floor = 1e-12 * (0..p).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
        let scale: Vec<f64> = (0..p).map(|k| jtj[(k, k)].max(floor).max(1e-300).sqrt()).collect();
        let rhs: Vec<f64> = (0..p).map(|k| -jtr[k] / scale[k]).collect();
        let mut accepted = None;
        for _ in 0..40 {
            let a = Matrix::from_fn(p, p, |r, c| {
                jtj[(r, c)] / (scale[r] * scale[c]) + if r == c { mu } else { 0.0 }
            });
            let Ok(scaled) = a.solve(&rhs) else {
                mu *= 10.0;
                continue;
            };
            let step: Vec<f64> = scaled.iter().zip(&scale).map(|(x, s)| x / s).collect();
            let trial: Vec<f64> = theta
                .iter()
                .zip(&step)
                .enumerate()
                .map(|(k, (t, s))| if k < N_LOGITS { (t + s).clamp(LOGIT_RANGE.0, LOGIT_RANGE.1) } else { t + s })
                .collect();
            match problem.chi2(&trial) {
                Some((d, c)) if c <= chi2 => {
                    let largest = step.iter().map(|x| x.abs()).fold(0.0, f64::max);
                    accepted = Some((trial, d, c, largest));
                    mu = (mu / 3.0).max(1e-12);
                    break;
                }
                _ => mu *= 4.0,
            }
        }
        let Some((trial, d, c, largest)) = accepted else {
            // No downhill step at any damping: a local optimum to working precision.
            converged = true;
            break;
        };
        let gain = chi2 - c;
        theta = trial;
        data_chi2 = d;
        chi2 = c;
        stalls = if gain <= 1e-12 * chi2 || largest < 1e-10 { stalls + 1 } else { 0 };
        if stalls >= 3 || chi2 < 1e-28 {
            converged = true;
            break;
        }
    }
    Ok(SingleQubitFit {
        model: problem.to_model(&theta)?,
        log_likelihood: -data_chi2,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Axis;

    fn exact_obs(model: &QubitModel) -> Vec<Observation> {
        let e0 = crate::pauli::ObservableVector::zero_projector(1);
        let mut out = Vec::new();
        for i in 0..4 {
            for g in Gate1::ALL {
                for k in 0..3 {
                    let mut s = model.state();
                    for gate in [PREP_FIDUCIALS[i], g, MEASUREMENT_FIDUCIALS[k]] {
                        s = model.gate_ptm(gate).unwrap().apply(&s).unwrap();
                    }
                    out.push(Observation {
                        init: i,
                        gate: g,
                        meas: k,
                        freq: e0.eval(&s).unwrap(),
                        variance: 1.0 / 40000.0,
                    });
                }
            }
        }
        out
    }

    /// Distinct rates per rotation axis; pulses about one axis share a channel.
    fn truth() -> QubitModel {
        let mut m = QubitModel::noiseless();
        for g in Gate1::ALL {
            let rates = match g.axis() {
                Axis::I => vec![0.9997, 1e-4, 2e-4, 0.0],
                Axis::X => vec![0.9988, 6e-4, 2e-4, 4e-4],
                Axis::Y => vec![0.9990, 4e-4, 3e-4, 3e-4],
                Axis::Z => vec![0.9993, 1e-4, 1e-4, 5e-4],
            };
            m.gates.insert(g, PauliChannel::new(1, rates).unwrap());
        }
        let (a, b) = (0.03f64, -0.02f64);
        m.prep = [a, b, (1.0 - a * a - b * b).sqrt()];
        m
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let obs = exact_obs(&truth());
        {
            let problem = Problem::new(&obs);
            let theta: Vec<f64> = problem
                .initial()
                .iter()
                .enumerate()
                .map(|(k, t)| t + 0.01 * ((k * 7 % 5) as f64 - 2.0))
                .collect();
            let d = problem.decode(&theta).unwrap();
            let mats = problem.matrices(&d);
            let mut grad = vec![0.0; problem.n_params()];
            for o in obs.iter().step_by(7) {
                problem.predict(&d, &mats, o, Some(&mut grad));
                for k in 0..problem.n_params() {
                    let h = 1e-6;
                    let mut tp = theta.clone();
                    tp[k] += h;
                    let mut tm = theta.clone();
                    tm[k] -= h;
                    let dp = problem.decode(&tp).unwrap();
                    let dm = problem.decode(&tm).unwrap();
                    let fd = (problem.predict(&dp, &problem.matrices(&dp), o, None)
                        - problem.predict(&dm, &problem.matrices(&dm), o, None))
                        / (2.0 * h);
                    assert!((fd - grad[k]).abs() < 1e-8, "param {k}: {fd} vs {}", grad[k]);
                }
            }
        }
    }

    #[test]
    fn gauge_tie_gradient_matches_finite_differences() {
        let obs = exact_obs(&truth());
        let problem = Problem::new(&obs);
        let theta: Vec<f64> = problem.initial().iter().enumerate().map(|(k, t)| t + 0.1 * (k % 4) as f64).collect();
        let ties = problem.decode(&theta).unwrap().ties();
        for (t, (_, grad)) in ties.iter().enumerate() {
            for k in 0..N_LOGITS {
                let h = 1e-6;
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                let fd = (problem.decode(&tp).unwrap().ties()[t].0 - problem.decode(&tm).unwrap().ties()[t].0) / (2.0 * h);
                let an: f64 = grad.iter().filter(|(i, _)| *i == k).map(|(_, g)| g).sum();
                assert!((fd - an).abs() < 1e-7, "tie {t} param {k}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn exact_data_is_recovered() {
        let t = truth();
        let fit = fit_observations(&exact_obs(&t), FitOptions::default()).unwrap();
        assert!(fit.converged);
        for g in Gate1::ALL {
            let a = fit.model.channel(g).unwrap().rates();
            let b = t.channel(g).unwrap().rates();
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8, "{g}: {a:?} vs {b:?} {} {} {}", fit.iterations, fit.converged, fit.log_likelihood);
            }
        }
        for (x, y) in fit.model.prep.iter().zip(t.prep) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn likelihood_is_zero_at_truth_and_drops_quadratically() {
        let t = truth();
        let obs = exact_obs(&t);
        assert!(likelihood(&t, &obs).unwrap().abs() < 1e-20);
        let bump = |d: f64| {
            let mut m = t.clone();
            let mut r = m.channel(Gate1::XPi).unwrap().rates().to_vec();
            r[1] += d;
            r[0] -= d;
            m.gates.insert(Gate1::XPi, PauliChannel::new(1, r).unwrap());
            likelihood(&m, &obs).unwrap()
        };
        let (l1, l2) = (bump(1e-4), bump(2e-4));
        assert!(l1 < 0.0);
        assert!((l2 / l1 - 4.0).abs() < 1e-3, "{}", l2 / l1);
    }

    #[test]
    fn missing_settings_are_rejected() {
        let mut obs = exact_obs(&truth());
        obs.pop();
        assert!(matches!(
            fit_observations(&obs, FitOptions::default()),
            Err(PecError::IncompleteData(_))
        ));
    }
}
