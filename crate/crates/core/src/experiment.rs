//! Monte Carlo experiment driver: simulate `P` trajectories, run a set of
//! estimators on each, and reduce into error curves and summaries.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    kalman_update_init, pmc_kalman_step, run_imm, run_rbpf, JumpFilter, MixtureEstimate, Resampling,
};
use crate::metrics;
use crate::model::{scenarios, ConditionalPmcModel, ModelDocument};
use crate::oracle::mean_kld_scalar;
use crate::simulate::{format_float, run_seed, simulate, SimRng};

pub const DEFAULT_RUNS: usize = 200;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_PARTICLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Exact jump filter on the filter model.
    Jump,
    /// Rao-Blackwellized SIR particle filter.
    Rbpf,
    Imm,
    /// Pairwise Kalman filter on the data model with the true regimes.
    Kalman,
    /// Pairwise Kalman filter on the filter model with the true regimes.
    PmcKalman,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [Self::Jump, Self::Rbpf, Self::Imm, Self::Kalman, Self::PmcKalman];

    pub fn name(self) -> &'static str {
        match self {
            Self::Jump => "jump",
            Self::Rbpf => "rbpf",
            Self::Imm => "imm",
            Self::Kalman => "kalman",
            Self::PmcKalman => "pmc-kalman",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}` (known: jump, rbpf, imm, kalman, pmc-kalman)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    ScalarHmcSweep,
    ScalarJump,
    TrackingJmss,
    TrackingPmc,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [Self::ScalarHmcSweep, Self::ScalarJump, Self::TrackingJmss, Self::TrackingPmc];

    pub fn name(self) -> &'static str {
        match self {
            Self::ScalarHmcSweep => "scalar-hmc-sweep",
            Self::ScalarJump => "scalar-jump",
            Self::TrackingJmss => "tracking-jmss",
            Self::TrackingPmc => "tracking-pmc",
        }
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario `{s}`")))
    }
}

/// A built-in scenario, or models given inline. Without `filterModel` the
/// data model is also used for filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    Named(ScenarioName),
    #[serde(rename_all = "camelCase")]
    Inline {
        model: Box<ModelDocument>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        filter_model: Option<Box<ModelDocument>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSpec,
    #[serde(rename = "P", default = "default_runs")]
    pub runs: usize,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults depend on the scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorKind>>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default, rename = "outputDir", skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Process noise values of the sweep scenario.
    #[serde(default, rename = "qValues", skip_serializing_if = "Option::is_none")]
    pub q_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_default_scheme", with = "scheme_serde")]
    pub resampling: Resampling,
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}
fn default_horizon() -> usize {
    DEFAULT_HORIZON
}
fn default_particles() -> usize {
    DEFAULT_PARTICLES
}
fn is_default_scheme(s: &Resampling) -> bool {
    *s == Resampling::default()
}

mod scheme_serde {
    use super::Resampling;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &Resampling, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(match s {
            Resampling::Multinomial => "multinomial",
            Resampling::Systematic => "systematic",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Resampling, D::Error> {
        match String::deserialize(de)?.as_str() {
            "multinomial" => Ok(Resampling::Multinomial),
            "systematic" => Ok(Resampling::Systematic),
            other => Err(serde::de::Error::custom(format!("unknown resampling scheme `{other}`"))),
        }
    }
}

impl ScenarioConfig {
    pub fn named(name: ScenarioName) -> Self {
        Self {
            scenario: ScenarioSpec::Named(name),
            runs: DEFAULT_RUNS,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            estimators: None,
            particles: DEFAULT_PARTICLES,
            output_dir: None,
            q_values: None,
            resampling: Resampling::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn estimator_set(&self) -> Vec<EstimatorKind> {
        self.estimators.clone().unwrap_or_else(|| match self.scenario {
            ScenarioSpec::Named(ScenarioName::ScalarHmcSweep) => vec![EstimatorKind::Kalman, EstimatorKind::PmcKalman],
            _ => vec![EstimatorKind::Jump, EstimatorKind::Rbpf, EstimatorKind::Imm, EstimatorKind::Kalman],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("P must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("T must be at least 1".into()));
        }
        let est = self.estimator_set();
        if est.is_empty() {
            return Err(Error::InvalidConfig("estimators must not be empty".into()));
        }
        if est.contains(&EstimatorKind::Rbpf) && self.particles == 0 {
            return Err(Error::InvalidConfig("particles must be at least 1".into()));
        }
        if let Some(q) = &self.q_values {
            if q.is_empty() || q.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidConfig("qValues must be non-empty and positive".into()));
            }
        }
        Ok(())
    }
}

/// Data-generating and filtering models of one experiment cell.
#[derive(Debug, Clone)]
pub struct Setting {
    pub label: String,
    pub q: Option<f64>,
    pub data_model: ConditionalPmcModel,
    pub filter_model: ConditionalPmcModel,
}

pub fn settings(config: &ScenarioConfig) -> Result<Vec<Setting>> {
    let one = |label: &str, data: ConditionalPmcModel, filter: ConditionalPmcModel| {
        Ok(vec![Setting {
            label: label.to_string(),
            q: None,
            data_model: data,
            filter_model: filter,
        }])
    };
    match &config.scenario {
        ScenarioSpec::Named(ScenarioName::ScalarHmcSweep) => {
            let qs = config
                .q_values
                .clone()
                .unwrap_or_else(|| (1..=10).map(f64::from).collect());
            qs.into_iter()
                .map(|q| {
                    Ok(Setting {
                        label: format!("Q={q}"),
                        q: Some(q),
                        data_model: scenarios::scalar_hmc(q)?,
                        filter_model: scenarios::scalar_optimal(q)?,
                    })
                })
                .collect()
        }
        ScenarioSpec::Named(ScenarioName::ScalarJump) => {
            one("scalar-jump", scenarios::scalar_jump_jmss()?, scenarios::scalar_jump_filter_model()?)
        }
        ScenarioSpec::Named(ScenarioName::TrackingJmss) => {
            one("tracking-jmss", scenarios::tracking_jmss()?, scenarios::tracking_filter_model()?)
        }
        ScenarioSpec::Named(ScenarioName::TrackingPmc) => one(
            "tracking-pmc",
            scenarios::tracking_pmc_generator()?,
            scenarios::tracking_pmc_filter_model()?,
        ),
        ScenarioSpec::Inline { model, filter_model } => {
            let data = model.as_ref().clone().into_model()?;
            let filter = match filter_model {
                Some(f) => f.as_ref().clone().into_model()?,
                None => data.clone(),
            };
            if data.k() != filter.k() || data.state_dim() != filter.state_dim() || data.obs_dim() != filter.obs_dim() {
                return Err(Error::InvalidConfig("filterModel must match model in K, m and p".into()));
            }
            one("inline", data, filter)
        }
    }
}

/// Numerical health of the jump filter over every step of every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Largest `|log sum_r p(r_k | y_{0:k})|`.
    pub max_normalization_error: f64,
    /// Smallest relative eigenvalue of a regime-conditional covariance.
    pub min_relative_cov_eigenvalue: f64,
    pub steps_checked: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            max_normalization_error: 0.0,
            min_relative_cov_eigenvalue: f64::INFINITY,
            steps_checked: 0,
        }
    }
}

impl Diagnostics {
    fn merge(self, o: Self) -> Self {
        Self {
            max_normalization_error: self.max_normalization_error.max(o.max_normalization_error),
            min_relative_cov_eigenvalue: self.min_relative_cov_eigenvalue.min(o.min_relative_cov_eigenvalue),
            steps_checked: self.steps_checked + o.steps_checked,
        }
    }
}

/// Estimates, truths and timings of one setting; arrays are `[run][k]`.
#[derive(Debug, Clone)]
pub struct RunMatrix {
    pub estimators: Vec<EstimatorKind>,
    /// `estimates[i]` belongs to `estimators[i]`.
    pub estimates: Vec<Vec<Vec<DVector<f64>>>>,
    pub truths: Vec<Vec<DVector<f64>>>,
    /// True-regime Kalman estimates on the data model.
    pub benchmarks: Vec<Vec<DVector<f64>>>,
    /// Wall-clock seconds per estimator, summed over runs.
    pub timings: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl RunMatrix {
    pub fn runs(&self) -> usize {
        self.truths.len()
    }

    pub fn horizon(&self) -> usize {
        self.truths.first().map_or(0, |t| t.len().saturating_sub(1))
    }

    pub fn estimates_of(&self, e: EstimatorKind) -> Option<&[Vec<DVector<f64>>]> {
        self.estimators.iter().position(|&x| x == e).map(|i| self.estimates[i].as_slice())
    }

    pub fn timing_of(&self, e: EstimatorKind) -> Option<f64> {
        self.estimators.iter().position(|&x| x == e).map(|i| self.timings[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: EstimatorKind,
    /// Time-averaged MSE against the true state.
    pub j: f64,
    /// `(J - J_kalman) / J_kalman`.
    pub rel_rmse: f64,
    /// Time-averaged MSE against the benchmark.
    pub mse_vs_benchmark: f64,
    /// Time average of the MSE curve divided by the reference estimator's.
    pub normalized_mse: f64,
    /// Mean wall-clock seconds per run.
    pub avg_time_s: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub estimator: EstimatorKind,
    pub mse: f64,
    pub normalized_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KldPoint {
    pub q: f64,
    pub rmse: f64,
    pub kld: f64,
}

#[derive(Debug, Clone)]
pub struct SettingResult {
    pub label: String,
    pub q: Option<f64>,
    pub matrix: RunMatrix,
    pub summary: Vec<SummaryRow>,
    pub curve: Vec<CurvePoint>,
    /// Estimator the MSE curves are normalized by.
    pub reference: EstimatorKind,
}

impl SettingResult {
    pub fn row(&self, e: EstimatorKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.estimator == e)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    pub settings: Vec<SettingResult>,
    /// Only filled by the sweep scenario.
    pub kld_curve: Vec<KldPoint>,
    pub diagnostics: Diagnostics,
}

struct RunOutput {
    truth: Vec<DVector<f64>>,
    benchmark: Vec<DVector<f64>>,
    estimates: Vec<Vec<DVector<f64>>>,
    timings: Vec<f64>,
    diagnostics: Diagnostics,
}

fn means(est: Vec<MixtureEstimate>) -> Vec<DVector<f64>> {
    est.into_iter().map(|e| e.mean).collect()
}

/// Pairwise Kalman filter along known regimes.
pub fn true_regime_filter(
    model: &ConditionalPmcModel,
    regimes: &[usize],
    ys: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let (mut post, _) = kalman_update_init(model.regime(regimes[0]), &ys[0])?;
    let mut out = Vec::with_capacity(ys.len());
    out.push(post.mean().clone());
    for k in 1..ys.len() {
        post = pmc_kalman_step(&post, &ys[k - 1], &ys[k], model.block(regimes[k - 1], regimes[k]))?;
        out.push(post.mean().clone());
    }
    Ok(out)
}

fn jump_diagnostics(filter: &JumpFilter, ys: &[DVector<f64>]) -> Result<Diagnostics> {
    let mut d = Diagnostics::default();
    filter.run(ys, |s| {
        d.max_normalization_error = d.max_normalization_error.max(s.normalization_error());
        d.min_relative_cov_eigenvalue = d.min_relative_cov_eigenvalue.min(s.min_relative_cov_eigenvalue());
        d.steps_checked += 1;
    })?;
    Ok(d)
}

fn one_run(
    setting: &Setting,
    jump: Option<&JumpFilter>,
    config: &ScenarioConfig,
    estimators: &[EstimatorKind],
    seed: u64,
) -> Result<RunOutput> {
    let traj = simulate(&setting.data_model, config.horizon, seed)?;
    let ys = &traj.observations;
    let benchmark = true_regime_filter(&setting.data_model, &traj.regimes, ys)?;
    let mut estimates = Vec::with_capacity(estimators.len());
    let mut timings = Vec::with_capacity(estimators.len());
    let mut diagnostics = Diagnostics::default();
    for &e in estimators {
        let start = Instant::now();
        let est = match e {
            EstimatorKind::Jump => means(jump.expect("jump filter prepared").run(ys, |_| {})?),
            EstimatorKind::Rbpf => {
                let mut rng = SimRng::seed_from_u64(seed);
                rng.set_stream(1);
                means(run_rbpf(&setting.filter_model, ys, config.particles, config.resampling, &mut rng)?)
            }
            EstimatorKind::Imm => means(run_imm(&setting.filter_model, ys)?),
            EstimatorKind::Kalman => true_regime_filter(&setting.data_model, &traj.regimes, ys)?,
            EstimatorKind::PmcKalman => true_regime_filter(&setting.filter_model, &traj.regimes, ys)?,
        };
        timings.push(start.elapsed().as_secs_f64());
        estimates.push(est);
        if e == EstimatorKind::Jump {
            diagnostics = jump_diagnostics(jump.expect("jump filter prepared"), ys)?;
        }
    }
    Ok(RunOutput {
        truth: traj.states,
        benchmark,
        estimates,
        timings,
        diagnostics,
    })
}

fn run_setting(setting: &Setting, config: &ScenarioConfig) -> Result<(RunMatrix, Diagnostics)> {
    let estimators = config.estimator_set();
    let jump = if estimators.contains(&EstimatorKind::Jump) {
        Some(JumpFilter::new(&setting.filter_model)?)
    } else {
        None
    };
    let seeds: Vec<u64> = (0..config.runs).map(|p| run_seed(config.seed, p)).collect();
    let outputs = seeds
        .par_iter()
        .enumerate()
        .map(|(p, &seed)| one_run(setting, jump.as_ref(), config, &estimators, seed).map_err(|e| e.at_run(p)))
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = RunMatrix {
        estimates: vec![Vec::with_capacity(config.runs); estimators.len()],
        timings: vec![0.0; estimators.len()],
        estimators,
        truths: Vec::with_capacity(config.runs),
        benchmarks: Vec::with_capacity(config.runs),
        seeds,
    };
    let mut diagnostics = Diagnostics::default();
    for out in outputs {
        matrix.truths.push(out.truth);
        matrix.benchmarks.push(out.benchmark);
        for (i, (est, t)) in out.estimates.into_iter().zip(out.timings).enumerate() {
            matrix.estimates[i].push(est);
            matrix.timings[i] += t;
        }
        diagnostics = diagnostics.merge(out.diagnostics);
    }
    Ok((matrix, diagnostics))
}

fn reference_estimator(estimators: &[EstimatorKind]) -> EstimatorKind {
    [EstimatorKind::Jump, EstimatorKind::PmcKalman]
        .into_iter()
        .find(|e| estimators.contains(e))
        .unwrap_or(estimators[0])
}

fn summarize(label: String, q: Option<f64>, matrix: RunMatrix) -> Result<SettingResult> {
    let reference = reference_estimator(&matrix.estimators);
    let j_bench = metrics::averaged_mse(&matrix.benchmarks, &matrix.truths)?;
    let curves = matrix
        .estimates
        .iter()
        .map(|est| metrics::mse_vs_benchmark(est, &matrix.benchmarks))
        .collect::<Result<Vec<_>>>()?;
    let ref_idx = matrix.estimators.iter().position(|&e| e == reference).expect("reference is an estimator");
    let steps_per_run = (matrix.horizon() + 1) as f64;
    let mut summary = Vec::new();
    let mut curve = Vec::new();
    for (i, &e) in matrix.estimators.iter().enumerate() {
        let normalized = metrics::normalize_curve(&curves[i], &curves[ref_idx]);
        let j = metrics::averaged_mse(&matrix.estimates[i], &matrix.truths)?;
        let avg_time = matrix.timings[i] / matrix.runs() as f64;
        let eff = metrics::efficiency(&curves[i], avg_time / steps_per_run);
        summary.push(SummaryRow {
            estimator: e,
            j,
            rel_rmse: metrics::relative_rmse(j, j_bench),
            mse_vs_benchmark: metrics::time_average(&curves[i]),
            normalized_mse: metrics::time_average(&normalized),
            avg_time_s: avg_time,
            efficiency: metrics::time_average(&eff),
        });
        curve.extend(curves[i].iter().zip(&normalized).enumerate().map(|(k, (&mse, &nm))| CurvePoint {
            k,
            estimator: e,
            mse,
            normalized_mse: nm,
        }));
    }
    Ok(SettingResult {
        label,
        q,
        matrix,
        summary,
        curve,
        reference,
    })
}

/// Runs every setting of the scenario. Runs are spread over the current
/// rayon pool; results are placed by run index so they do not depend on
/// scheduling. Timings cover the estimator loops only.
pub fn run_experiment(config: &ScenarioConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut results = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut kld_curve = Vec::new();
    for setting in settings(config)? {
        let (matrix, diag) = run_setting(&setting, config)?;
        diagnostics = diagnostics.merge(diag);
        let result = summarize(setting.label.clone(), setting.q, matrix)?;
        if let Some(q) = setting.q {
            let reg = setting.data_model.regime(0);
            let kld = mean_kld_scalar(reg.f[(0, 0)], reg.h[(0, 0)], q, reg.r[(0, 0)])?;
            let rmse = match (result.row(EstimatorKind::PmcKalman), result.row(EstimatorKind::Kalman)) {
                (Some(p), Some(k)) => metrics::relative_rmse(p.j, k.j),
                _ => f64::NAN,
            };
            kld_curve.push(KldPoint { q, rmse, kld });
        }
        results.push(result);
    }
    Ok(ExperimentResult {
        config: config.clone(),
        settings: results,
        kld_curve,
        diagnostics,
    })
}

fn q_cell(q: Option<f64>) -> String {
    q.map(format_float).unwrap_or_default()
}

impl ExperimentResult {
    /// `mse_curve.csv` with columns `Q, k, estimator, mse, normalized_mse`
    /// (`Q` is empty outside the sweep).
    pub fn write_mse_curve(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "Q,k,estimator,mse,normalized_mse")?;
        for s in &self.settings {
            for p in &s.curve {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    q_cell(s.q),
                    p.k,
                    p.estimator,
                    format_float(p.mse),
                    format_float(p.normalized_mse)
                )?;
            }
        }
        Ok(())
    }

    /// `summary.csv`; the last two columns depend on timing.
    pub fn write_summary(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "Q,estimator,J,relRMSE,mse_vs_benchmark,normalized_mse,avg_time_s,efficiency")?;
        for s in &self.settings {
            for r in &s.summary {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    q_cell(s.q),
                    r.estimator,
                    format_float(r.j),
                    format_float(r.rel_rmse),
                    format_float(r.mse_vs_benchmark),
                    format_float(r.normalized_mse),
                    format_float(r.avg_time_s),
                    format_float(r.efficiency)
                )?;
            }
        }
        Ok(())
    }

    pub fn write_kld_curve(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "Q,rmse,kld")?;
        for p in &self.kld_curve {
            writeln!(out, "{},{},{}", format_float(p.q), format_float(p.rmse), format_float(p.kld))?;
        }
        Ok(())
    }

    /// Config, seeds and the modelling choices not fixed by the scenario.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "seedRule": "run seed = base seed XOR run index; particle filter uses stream 1 of that seed",
            "initialRegimeLaw": "uniform over regimes for the built-in jump scenarios",
            "trackingPrior": "m0 = 0, P0 = diag(100^2, 10^2, 100^2, 10^2)",
            "scalarPrior": "m0 = 0, P0 = 1",
            "trackingPmcGenerator": "F2 = 0.7 F, H2 = 0.9 times the constraint solution (0.9 F)",
            "diagnostics": self.diagnostics,
            "normalizedBy": self.settings.first().map(|s| s.reference.name()),
        })
    }

    /// Writes the CSV files (and `metadata.json`) into `dir`; returns the
    /// paths written. `kld_curve.csv` is only written for the sweep.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
            let mut buf = Vec::new();
            f(&mut buf)?;
            let path = dir.join(name);
            fs::write(&path, buf)?;
            written.push(path);
            Ok(())
        };
        emit("mse_curve.csv", &|b| self.write_mse_curve(b))?;
        emit("summary.csv", &|b| self.write_summary(b))?;
        if !self.kld_curve.is_empty() {
            emit("kld_curve.csv", &|b| self.write_kld_curve(b))?;
        }
        emit("metadata.json", &|b| {
            serde_json::to_writer_pretty(&mut *b, &self.metadata())?;
            Ok(())
        })?;
        Ok(written)
    }
}
