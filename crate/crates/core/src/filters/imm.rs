//! Interacting multiple model filter on the jump Markov state-space reading
//! of a model (`F2` and `H2` are ignored).
//!
//! Standard cycle: mix the mode-conditioned posteriors through the transition
//! matrix, run one Kalman step per mode, reweight modes by their predictive
//! likelihoods, and output the moment-matched mixture.

use nalgebra::{DMatrix, DVector};

use super::jump::MixtureEstimate;
use super::kalman::{kalman_step_with_likelihood, kalman_update_init};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg;
use crate::model::ConditionalPmcModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ImmState {
    pub modes: Vec<Gaussian>,
    /// `log p(r_k | y_{0:k})`, normalized.
    pub log_probs: Vec<f64>,
    pub step: usize,
}

impl ImmState {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|w| w.exp()).collect()
    }

    pub fn estimate(&self) -> MixtureEstimate {
        let w = self.probs();
        let seconds: Vec<DMatrix<f64>> = self.modes.iter().map(Gaussian::second_moment).collect();
        MixtureEstimate::from_components(
            w.iter()
                .zip(&self.modes)
                .zip(&seconds)
                .map(|((&w, g), s)| (w, g.mean(), s)),
            w.clone(),
        )
    }
}

fn normalize(log_w: &mut [f64]) -> bool {
    let total = linalg::logsumexp(log_w);
    if !total.is_finite() {
        return false;
    }
    for w in log_w.iter_mut() {
        *w -= total;
    }
    true
}

pub fn imm_init(model: &ConditionalPmcModel, y0: &DVector<f64>) -> Result<ImmState> {
    let mut modes = Vec::with_capacity(model.k());
    let mut log_probs = Vec::with_capacity(model.k());
    for (r, reg) in model.regimes().iter().enumerate() {
        let (post, ll) = kalman_update_init(reg, y0)?;
        modes.push(post);
        log_probs.push(model.chain().initial()[r].ln() + ll);
    }
    if !normalize(&mut log_probs) {
        return Err(Error::DegenerateInitialization);
    }
    Ok(ImmState {
        modes,
        log_probs,
        step: 0,
    })
}

pub fn imm_step(state: &ImmState, y: &DVector<f64>, model: &ConditionalPmcModel) -> Result<ImmState> {
    let k = model.k();
    let trans = model.chain().trans();
    let mut modes = Vec::with_capacity(k);
    let mut log_probs = Vec::with_capacity(k);
    for j in 0..k {
        // log p(r_{k-1} = i, r_k = j | y_{0:k-1})
        let joint: Vec<f64> = (0..k)
            .map(|i| {
                let t = trans[(i, j)];
                if t == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    t.ln() + state.log_probs[i]
                }
            })
            .collect();
        let predicted = linalg::logsumexp(&joint);
        let mixed = if predicted.is_finite() {
            let mix: Vec<f64> = joint.iter().map(|a| (a - predicted).exp()).collect();
            let n = state.modes[0].dim();
            let mut mean = DVector::zeros(n);
            for (w, g) in mix.iter().zip(&state.modes) {
                mean.axpy(*w, g.mean(), 1.0);
            }
            let mut cov = DMatrix::zeros(n, n);
            for (w, g) in mix.iter().zip(&state.modes) {
                if *w == 0.0 {
                    continue;
                }
                let d = g.mean() - &mean;
                cov += (g.cov() + &d * d.transpose()) * *w;
            }
            Gaussian::from_parts(mean, cov)
        } else {
            state.modes[j].clone()
        };
        let (post, ll) = kalman_step_with_likelihood(&mixed, y, model.regime(j))?;
        modes.push(post);
        log_probs.push(predicted + ll);
    }
    if !normalize(&mut log_probs) {
        return Err(Error::DegenerateLikelihood { step: state.step + 1 });
    }
    Ok(ImmState {
        modes,
        log_probs,
        step: state.step + 1,
    })
}

/// Runs over `y_{0:T}`.
pub fn run_imm(model: &ConditionalPmcModel, ys: &[DVector<f64>]) -> Result<Vec<MixtureEstimate>> {
    let Some((y0, rest)) = ys.split_first() else {
        return Ok(Vec::new());
    };
    let mut state = imm_init(model, y0)?;
    let mut out = Vec::with_capacity(ys.len());
    out.push(state.estimate());
    for y in rest {
        state = imm_step(&state, y, model)?;
        out.push(state.estimate());
    }
    Ok(out)
}
