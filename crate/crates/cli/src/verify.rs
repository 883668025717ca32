//! Self-check against the brute-force oracles.

use nalgebra::DVector;
use pmcjump::experiment::true_regime_filter;
use pmcjump::model::scenarios;
use pmcjump::oracle::{batch_posterior_for_sequence, enumerate_exact_posterior};
use pmcjump::simulate::simulate;
use pmcjump::JumpFilter;

use crate::{Failure, Outcome};

const TOL: f64 = 1e-9;

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn line(name: &str, dev: f64) -> bool {
    let ok = dev <= TOL;
    println!("{:<5} {name}: max relative deviation {dev:.2e} (tolerance {TOL:.0e})", if ok { "ok" } else { "FAIL" });
    ok
}

pub fn run(budget: u128, horizon: usize, seed: u64) -> Outcome {
    let data = scenarios::scalar_jump_jmss()?;
    let model = scenarios::scalar_jump_filter_model()?;
    let traj = simulate(&data, horizon, seed)?;
    let ys = &traj.observations;

    // Every prefix y_{0:t} against full enumeration.
    let filter = JumpFilter::new(&model)?;
    let estimates = filter.run(ys, |_| {})?;
    let mut dev: f64 = 0.0;
    for t in 0..ys.len() {
        let exact = enumerate_exact_posterior(&model, &ys[..=t], budget)?;
        let est = &estimates[t];
        dev = dev.max(rel(&est.mean, &exact.mean()));
        let probs = DVector::from_vec(est.mode_probs.clone());
        dev = dev.max(rel(&probs, &DVector::from_vec(exact.weights())));
    }
    let mut ok = line("jump filter vs enumeration", dev);

    let single = scenarios::scalar_optimal(4.0)?;
    let single_traj = simulate(&single, horizon, seed)?;
    let jump = JumpFilter::new(&single)?.run(&single_traj.observations, |_| {})?;
    let kf = true_regime_filter(&single, &vec![0; single_traj.observations.len()], &single_traj.observations)?;
    let dev = jump.iter().zip(&kf).map(|(e, m)| rel(&e.mean, m)).fold(0.0, f64::max);
    ok &= line("single regime vs pairwise Kalman filter", dev);

    let (batch, _) = batch_posterior_for_sequence(&model, &traj.regimes, ys)?;
    let recursive = true_regime_filter(&model, &traj.regimes, ys)?;
    ok &= line("batch vs recursive posterior", rel(recursive.last().unwrap(), batch.mean()));

    if ok {
        Ok(())
    } else {
        Err(Failure::Check("verification failed".into()))
    }
}
