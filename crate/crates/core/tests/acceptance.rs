//! Acceptance suite. Runs every criterion in order and prints one PASS/FAIL
//! line each, then a summary line. With `PMCJUMP_STRICT_ACCEPTANCE=1` any
//! failure also makes the process exit non-zero. Criteria run sequentially
//! so the wall-clock checks are not disturbed by other work.

#[path = "common/mod.rs"]
mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{gauss_matrix, random_exact_model, random_regime, rel_dev, spd};
use nalgebra::{DMatrix, DVector};
use pmcjump::experiment::{Diagnostics, ExperimentResult};
use pmcjump::filters::{kalman_step, kalman_update_init, pmc_kalman_step, run_rbpf, Resampling};
use pmcjump::gaussian::kld_gaussian;
use pmcjump::model::{constrained_pmc, hmc_as_pmc, optimal_f2, scenarios, solve_h2};
use pmcjump::oracle::{batch_posterior_for_sequence, enumerate_exact_posterior, DEFAULT_BUDGET};
use pmcjump::simulate::{rng_from_seed, sample_jump_chain, simulate};
use pmcjump::{
    run_experiment, ConditionalPmcModel, EstimatorKind, Gaussian, JumpFilter, RegimeParams, ScenarioConfig,
    ScenarioName,
};
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {e}"))
    }
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

fn run(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut outcome = f();
    let took = start.elapsed();
    if took > limit {
        outcome.pass = false;
        outcome.detail.push_str(&format!("; over the {}s limit", limit.as_secs()));
    }
    say(&format!(
        "criterion {id} {name}: {} ({}; {:.1}s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        took.as_secs_f64()
    ));
    outcome.pass
}

fn experiment(name: ScenarioName) -> pmcjump::Result<ExperimentResult> {
    run_experiment(&ScenarioConfig {
        seed: SEED,
        ..ScenarioConfig::named(name)
    })
}

// 1 ----------------------------------------------------------------------

fn enumeration_deviation(model: &ConditionalPmcModel, seed: u64) -> pmcjump::Result<f64> {
    let ys = simulate(model, 8, seed)?.observations;
    let exact = enumerate_exact_posterior(model, &ys, DEFAULT_BUDGET)?;
    let filter = JumpFilter::new(model)?;
    let mut state = filter.init(&ys[0])?;
    for y in &ys[1..] {
        state = filter.step(&state, y)?;
    }
    let flat = |v: &[DVector<f64>]| v.iter().flat_map(|x| x.iter().copied()).collect::<Vec<_>>();
    let flat_m = |v: &[DMatrix<f64>]| v.iter().flat_map(|x| x.iter().copied()).collect::<Vec<_>>();
    Ok(rel_dev(&state.weights(), &exact.weights(), 1e-300)
        .max(rel_dev(&flat(&state.means), &flat(&exact.means), 1e-12))
        .max(rel_dev(&flat_m(&state.second_moments), &flat_m(&exact.second_moments), 1e-12)))
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut models = vec![scenarios::scalar_jump_filter_model().expect("built-in model")];
    models.extend((0..20).map(|s| random_exact_model(1000 + s, 3, 2)));
    for (i, model) in models.iter().enumerate() {
        match enumeration_deviation(model, SEED + i as u64) {
            Ok(d) => worst = worst.max(d),
            Err(e) => return Outcome::error(format!("model {i}: {e}")),
        }
    }
    Outcome::new(
        worst <= 1e-8,
        format!("21 models, T = 8, max relative deviation {worst:.2e} <= 1e-8"),
    )
}

// 2 ----------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let res = match experiment(ScenarioName::ScalarHmcSweep) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    let mut pass = true;
    let mut kld_dev: f64 = 0.0;
    for p in &res.kld_curve {
        // a = b = R = 1
        let ratio = 1.0 / p.q;
        let expected = -0.5 * (1.0 - ratio / (ratio + 1.0)).ln();
        kld_dev = kld_dev.max((p.kld - expected).abs());
    }
    pass &= kld_dev <= 1e-12;
    let decreasing = res.kld_curve.windows(2).all(|w| w[1].kld < w[0].kld);
    pass &= decreasing;
    let high_q_ok = res.kld_curve.iter().filter(|p| p.q >= 4.0).all(|p| p.rmse <= 0.10 + 0.05);
    pass &= high_q_ok;
    let at_ten = res.kld_curve.iter().find(|p| p.q == 10.0).map(|p| p.rmse).unwrap_or(f64::NAN);
    pass &= (at_ten - 0.03).abs() <= 0.03;
    let rmse: Vec<String> = res.kld_curve.iter().map(|p| format!("{:.4}", p.rmse)).collect();
    Outcome::new(
        pass,
        format!(
            "KLD max |dev| {kld_dev:.1e}, decreasing {decreasing}; relative RMSE for Q = 1..10: [{}]; \
             Q >= 4 within 0.10 + 0.05: {high_q_ok}; Q = 10: {at_ten:.4} vs 0.03 +- 0.03",
            rmse.join(", ")
        ),
    )
}

// 3, 4, 6 -------------------------------------------------------------------

fn normalized(res: &ExperimentResult, e: EstimatorKind) -> f64 {
    res.settings[0].row(e).map_or(f64::NAN, |r| r.normalized_mse)
}

fn vs_benchmark(res: &ExperimentResult, e: EstimatorKind) -> f64 {
    res.settings[0].row(e).map_or(f64::NAN, |r| r.mse_vs_benchmark)
}

fn criterion_3(diag: &mut Vec<(String, Diagnostics)>) -> Outcome {
    let res = match experiment(ScenarioName::ScalarJump) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    diag.push(("scalar-jump".into(), res.diagnostics));
    let (jump, pf, imm) = (
        normalized(&res, EstimatorKind::Jump),
        normalized(&res, EstimatorKind::Rbpf),
        normalized(&res, EstimatorKind::Imm),
    );
    let pass = jump < imm && (jump - pf).abs() <= 0.15 * pf;
    Outcome::new(
        pass,
        format!("normalized MSE: jump {jump:.4}, particle filter {pf:.4}, IMM {imm:.4}; need jump < IMM and |jump - PF| <= 15% of PF"),
    )
}

fn criterion_4(diag: &mut Vec<(String, Diagnostics)>) -> Outcome {
    let res = match experiment(ScenarioName::TrackingJmss) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    diag.push(("tracking-jmss".into(), res.diagnostics));
    let (jump, pf, imm) = (
        vs_benchmark(&res, EstimatorKind::Jump),
        vs_benchmark(&res, EstimatorKind::Rbpf),
        vs_benchmark(&res, EstimatorKind::Imm),
    );
    let ordering = jump <= pf && pf < imm;
    let within = |x: f64, target: f64| (x - target).abs() <= 0.3 * target;
    let values = within(jump, 0.0058) && within(pf, 0.0059) && within(imm, 0.0074);
    Outcome::new(
        ordering && values,
        format!(
            "MSE vs true-regime Kalman: jump {jump:.5}, particle filter {pf:.5}, IMM {imm:.5}; \
             ordering {ordering}; within 30% of 0.0058 / 0.0059 / 0.0074: {values}"
        ),
    )
}

fn criterion_6(diag: &mut Vec<(String, Diagnostics)>) -> Outcome {
    let res = match experiment(ScenarioName::TrackingPmc) {
        Ok(r) => r,
        Err(e) => return Outcome::error(e),
    };
    diag.push(("tracking-pmc".into(), res.diagnostics));
    let (jump, pf, imm) = (
        normalized(&res, EstimatorKind::Jump),
        normalized(&res, EstimatorKind::Rbpf),
        normalized(&res, EstimatorKind::Imm),
    );
    Outcome::new(
        jump < pf && jump < imm,
        format!("normalized MSE: jump {jump:.4}, particle filter {pf:.4}, IMM {imm:.4}"),
    )
}

// 5 ----------------------------------------------------------------------

fn best_of<T>(reps: usize, mut f: impl FnMut() -> T) -> f64 {
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_5() -> Outcome {
    let data_model = scenarios::tracking_jmss().expect("built-in model");
    let filter_model = scenarios::tracking_filter_model().expect("built-in model");
    let filter = JumpFilter::new(&filter_model).expect("filterable");
    let data: Vec<Vec<DVector<f64>>> = (0..20)
        .map(|p| simulate(&data_model, 100, SEED + p).expect("simulation").observations)
        .collect();
    let t_jump = best_of(5, || {
        for ys in &data {
            filter.run(ys, |_| {}).expect("jump filter");
        }
    });
    let t_pf = best_of(3, || {
        for (p, ys) in data.iter().enumerate() {
            let mut rng = rng_from_seed(p as u64);
            run_rbpf(&filter_model, ys, 100, Resampling::Multinomial, &mut rng).expect("particle filter");
        }
    });
    let ratio = t_pf / t_jump;

    // Short and long runs alternate so a stall on a busy machine hits both.
    let long = simulate(&data_model, 1000, SEED).expect("simulation").observations;
    let (mut t100, mut t1000) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..25 {
        t100 = t100.min(best_of(4, || filter.run(&long[..101], |_| {}).expect("jump filter")));
        t1000 = t1000.min(best_of(1, || filter.run(&long, |_| {}).expect("jump filter")));
    }
    let scale = t1000 / t100;
    let linear = (scale - 10.0).abs() <= 3.0;
    Outcome::new(
        ratio >= 5.0 && linear,
        format!("particle filter / jump filter time ratio {ratio:.1} (>= 5); T = 1000 over T = 100 time ratio {scale:.2} (10 +- 3)"),
    )
}

// 7 ----------------------------------------------------------------------

fn check(failures: &mut Vec<String>, ok: bool, what: &str) {
    if !ok {
        failures.push(what.to_string());
    }
}

/// Law of `(x_k, y_k)` given `x_{k-1}` after integrating out
/// `y_{k-1} ~ N(H_prev x_{k-1}, R_prev)`, compared with the physical one.
fn marginal_residual(prev: &RegimeParams, cur: &RegimeParams, model: &ConditionalPmcModel, i: usize, j: usize) -> f64 {
    let b = model.block(i, j);
    let (m, p) = (cur.state_dim(), cur.obs_dim());
    let mut coeff = DMatrix::zeros(m + p, m);
    coeff.view_mut((0, 0), (m, m)).copy_from(&(&b.f1 + &b.f2 * &prev.h));
    coeff.view_mut((m, 0), (p, m)).copy_from(&(&b.h1 + &b.h2 * &prev.h));
    let mut gy = DMatrix::zeros(m + p, p);
    gy.view_mut((0, 0), (m, p)).copy_from(&b.f2);
    gy.view_mut((m, 0), (p, p)).copy_from(&b.h2);
    let mut sigma = DMatrix::zeros(m + p, m + p);
    sigma.view_mut((0, 0), (m, m)).copy_from(&b.s11);
    sigma.view_mut((m, 0), (p, m)).copy_from(&b.s21);
    sigma.view_mut((0, m), (m, p)).copy_from(&b.s21.transpose());
    sigma.view_mut((m, m), (p, p)).copy_from(&b.s22);
    let cov = sigma + &gy * &prev.r * gy.transpose();

    let mut want_coeff = DMatrix::zeros(m + p, m);
    want_coeff.view_mut((0, 0), (m, m)).copy_from(&cur.f);
    want_coeff.view_mut((m, 0), (p, m)).copy_from(&(&cur.h * &cur.f));
    let hq = &cur.h * &cur.q;
    let mut want_cov = DMatrix::zeros(m + p, m + p);
    want_cov.view_mut((0, 0), (m, m)).copy_from(&cur.q);
    want_cov.view_mut((m, 0), (p, m)).copy_from(&hq);
    want_cov.view_mut((0, m), (m, p)).copy_from(&hq.transpose());
    want_cov.view_mut((m, m), (p, p)).copy_from(&(&hq * cur.h.transpose() + &cur.r));
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(1.0);
    rel(&coeff, &want_coeff).max(rel(&cov, &want_cov))
}

fn structural(diag: &[(String, Diagnostics)]) -> Vec<String> {
    let mut failures = Vec::new();
    let mut rng = common::rng(SEED);

    // Zero F2/H2 gives the state-space model, and the pairwise Kalman step on
    // it is the ordinary Kalman step.
    for _ in 0..20 {
        let prev = random_regime(&mut rng, 4);
        let cur = random_regime(&mut rng, 4);
        let zero = DMatrix::zeros(4, 4);
        let ok = constrained_pmc(&prev, &cur, &zero, &zero).map(|b| b == hmc_as_pmc(&cur)).unwrap_or(false);
        check(&mut failures, ok, "zero-parameter reduction");
        let prior = Gaussian::new(gauss_matrix(&mut rng, 4, 1, 1.0).column(0).into_owned(), spd(&mut rng, 4, 0.5)).unwrap();
        let y = gauss_matrix(&mut rng, 4, 1, 2.0).column(0).into_owned();
        let y_prev = gauss_matrix(&mut rng, 4, 1, 2.0).column(0).into_owned();
        let a = kalman_step(&prior, &y, &cur).unwrap();
        let b = pmc_kalman_step(&prior, &y_prev, &y, &hmc_as_pmc(&cur)).unwrap();
        let ok = (a.mean() - b.mean()).amax() <= 1e-10 * a.mean().amax().max(1.0)
            && (a.cov() - b.cov()).amax() <= 1e-10 * a.cov().amax().max(1.0);
        check(&mut failures, ok, "pairwise Kalman on state-space blocks");
    }
    let single = scenarios::scalar_optimal(3.0).unwrap();
    let ys = simulate(&single, 30, SEED).unwrap().observations;
    let est = JumpFilter::new(&single).unwrap().run(&ys, |_| {}).unwrap();
    let (mut post, _) = kalman_update_init(single.regime(0), &ys[0]).unwrap();
    for k in 0..ys.len() {
        if k > 0 {
            post = pmc_kalman_step(&post, &ys[k - 1], &ys[k], single.block(0, 0)).unwrap();
        }
        let ok = (est[k].mean[0] - post.mean()[0]).abs() <= 1e-10 * post.mean()[0].abs().max(1.0);
        check(&mut failures, ok, "single-regime jump filter equals pairwise Kalman");
    }

    // Integrating out y_{k-1} recovers the physical transition and likelihood.
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        // K = 3 in three dimensions is left out: admissible draws are too rare.
        let (k, m) = [(2, 1), (3, 1), (2, 2), (3, 2), (2, 3)][seed as usize % 5];
        let model = random_exact_model(5000 + seed, k, m);
        for i in 0..k {
            for j in 0..k {
                worst = worst.max(marginal_residual(model.regime(i), model.regime(j), &model, i, j));
            }
        }
    }
    check(&mut failures, worst <= 1e-10, &format!("marginalization residual {worst:.1e}"));

    // Positive definiteness over the scalar grid.
    for ia in 0..=20 {
        let a = -1.0 + 0.1 * ia as f64;
        for &b in &[0.1, 1.0, 10.0] {
            for &q in &[0.1, 1.0, 10.0] {
                for &r in &[0.1, 1.0, 10.0] {
                    let reg = RegimeParams::scalar(a, b, q, r, 0.0, 1.0).unwrap();
                    let ok = solve_h2(&reg, &reg, 1e-10)
                        .and_then(|h2| optimal_f2(&reg, &reg, &h2).map(|f2| (f2, h2)))
                        .and_then(|(f2, h2)| constrained_pmc(&reg, &reg, &f2, &h2))
                        .is_ok();
                    check(&mut failures, ok, &format!("PD grid a={a:.1} b={b} Q={q} R={r}"));
                }
            }
        }
    }

    // Divergence-optimal F2 is the minimizer over alpha * F2_opt.
    let mut checked = 0;
    while checked < 20 {
        let prev = random_regime(&mut rng, 2);
        let cur = random_regime(&mut rng, 2);
        let Ok(h2) = solve_h2(&prev, &cur, 1e-10) else { continue };
        let f2 = optimal_f2(&prev, &cur, &h2).unwrap();
        let z = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let reference = hmc_as_pmc(&cur);
        let q = Gaussian::new(reference.transition() * &z, reference.noise_cov()).unwrap();
        let kld = |alpha: f64| {
            let b = constrained_pmc(&prev, &cur, &(&f2 * alpha), &h2).ok()?;
            let p = Gaussian::new(b.transition() * &z, b.noise_cov()).ok()?;
            kld_gaussian(&p, &q).ok()
        };
        let Some(at_one) = kld(1.0) else { continue };
        let ok = (0..=20).filter_map(|i| kld(i as f64 * 0.1)).all(|v| v >= at_one - 1e-12);
        check(&mut failures, ok, "optimal F2 grid minimum");
        checked += 1;
    }

    // Dense conditioning of the whole trajectory against the recursion.
    for seed in 0..20u64 {
        let model = random_exact_model(7000 + seed, 2, 2);
        let horizon = 1 + seed as usize;
        let regimes = sample_jump_chain(model.chain(), horizon, &mut rng_from_seed(seed)).unwrap();
        let ys = simulate(&model, horizon, seed).unwrap().observations;
        let (batch, _) = batch_posterior_for_sequence(&model, &regimes, &ys).unwrap();
        let (mut post, _) = kalman_update_init(model.regime(regimes[0]), &ys[0]).unwrap();
        for k in 1..ys.len() {
            post = pmc_kalman_step(&post, &ys[k - 1], &ys[k], model.block(regimes[k - 1], regimes[k])).unwrap();
        }
        let ok = (batch.mean() - post.mean()).amax() <= 1e-9 * post.mean().amax().max(1.0)
            && (batch.cov() - post.cov()).amax() <= 1e-9 * post.cov().amax().max(1.0);
        check(&mut failures, ok, &format!("batch vs recursive, T = {horizon}"));
    }

    // Relabeling regimes permutes the weights and leaves the estimate alone.
    for (name, model) in [
        ("scalar-jump", scenarios::scalar_jump_filter_model().unwrap()),
        ("tracking", scenarios::tracking_filter_model().unwrap()),
    ] {
        let perm = [2, 0, 1];
        let relabeled = model.relabel(&perm).unwrap();
        let ys = simulate(&model, 50, SEED).unwrap().observations;
        let a = JumpFilter::new(&model).unwrap().run(&ys, |_| {}).unwrap();
        let b = JumpFilter::new(&relabeled).unwrap().run(&ys, |_| {}).unwrap();
        let ok = a.iter().zip(&b).all(|(a, b)| {
            let scale = a.mean.amax().max(1.0);
            (&a.mean - &b.mean).amax() <= 1e-12 * scale
                && perm.iter().enumerate().all(|(new, &old)| (a.mode_probs[old] - b.mode_probs[new]).abs() <= 1e-12)
        });
        check(&mut failures, ok, &format!("permutation equivariance on {name}"));
    }

    // Filter health over every step of the Monte Carlo runs above.
    if diag.len() < 3 {
        failures.push("experiment diagnostics missing (an experiment criterion errored)".into());
    }
    for (name, d) in diag {
        check(
            &mut failures,
            d.max_normalization_error <= 1e-10 && d.steps_checked > 0,
            &format!("weight normalization on {name}: {:.1e}", d.max_normalization_error),
        );
        check(
            &mut failures,
            d.min_relative_cov_eigenvalue >= -1e-8,
            &format!("conditional covariance on {name}: {:.1e}", d.min_relative_cov_eigenvalue),
        );
    }
    failures
}

fn criterion_7(diag: &[(String, Diagnostics)]) -> Outcome {
    let failures = structural(diag);
    let steps: usize = diag.iter().map(|(_, d)| d.steps_checked).sum();
    let norm = diag.iter().map(|(_, d)| d.max_normalization_error).fold(0.0, f64::max);
    if failures.is_empty() {
        Outcome::new(true, format!("all structural checks hold; {steps} filter steps, max |log sum w| {norm:.1e}"))
    } else {
        Outcome::new(false, format!("failed: {}", failures.join("; ")))
    }
}

fn main() {
    let mut diag = Vec::new();
    let secs = Duration::from_secs;
    let results = [
        run(1, "enumeration exactness", secs(60), criterion_1),
        run(2, "scalar sweep", secs(120), criterion_2),
        run(3, "scalar jump", secs(180), || criterion_3(&mut diag)),
        run(4, "tracking, jump Markov data", secs(300), || criterion_4(&mut diag)),
        run(5, "speed and linearity", secs(300), criterion_5),
        run(6, "tracking, pairwise data", secs(300), || criterion_6(&mut diag)),
        run(7, "structural properties", secs(120), || criterion_7(&diag)),
    ];
    let failed: Vec<String> = results
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    if failed.is_empty() {
        say(&format!("acceptance: {n}/{n} criteria passed", n = results.len()));
        return;
    }
    say(&format!(
        "acceptance: {}/{} criteria passed; FAILED: {}",
        results.len() - failed.len(),
        results.len(),
        failed.join(", ")
    ));
    // Failures are reported above; set PMCJUMP_STRICT_ACCEPTANCE=1 to also
    // turn them into a non-zero exit status.
    if std::env::var("PMCJUMP_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
