//! Shared fixtures for the benchmarks.

use pmcjump::model::scenarios;
use pmcjump::{simulate, ConditionalPmcModel, Trajectory};

pub struct Fixture {
    pub name: &'static str,
    pub model: ConditionalPmcModel,
    pub data: Trajectory,
}

/// Data from the generating model, paired with the model the filters use.
pub fn fixture(name: &'static str, horizon: usize, seed: u64) -> Fixture {
    let (data_model, model) = match name {
        "scalar-jump" => (scenarios::scalar_jump_jmss(), scenarios::scalar_jump_filter_model()),
        "tracking-jmss" => (scenarios::tracking_jmss(), scenarios::tracking_filter_model()),
        "tracking-pmc" => (scenarios::tracking_pmc_generator(), scenarios::tracking_pmc_filter_model()),
        other => panic!("no fixture named {other}"),
    };
    let data_model = data_model.expect("built-in model");
    let data = simulate(&data_model, horizon, seed).expect("simulation");
    Fixture {
        name,
        model: model.expect("built-in model"),
        data,
    }
}

pub fn all(horizon: usize, seed: u64) -> Vec<Fixture> {
    ["scalar-jump", "tracking-jmss", "tracking-pmc"]
        .into_iter()
        .map(|n| fixture(n, horizon, seed))
        .collect()
}
