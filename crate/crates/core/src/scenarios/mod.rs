//! Canned reproductions driven by TOML configs in `crates/core/scenarios/`.
//!
//! Each config has a `summary`, an overridable `[params]` table whose values
//! also fix each parameter's type, and a fixed `[reference]` table of values
//! the verdicts compare against.

mod params;
mod products;
mod qubits;
mod report;
mod sums;

use serde::Deserialize;

pub use params::{ParamKind, Params};
pub use report::{
    complex_cells, complex_columns, is_registered, loglog_slope, Cell, ScenarioReport, Table, Verdict, CHECKS,
};

use crate::error::{Error, Result};

/// Seed used when the caller does not pick one.
pub const DEFAULT_SEED: u64 = 20_240_917;

type Runner = fn(&mut Ctx) -> Result<()>;

struct Entry {
    id: &'static str,
    config: &'static str,
    run: Runner,
}

const CATALOG: [Entry; 10] = [
    Entry { id: "fig1_spin100", config: include_str!("../../scenarios/fig1_spin100.toml"), run: qubits::fig1_spin100 },
    Entry { id: "sec5_abl", config: include_str!("../../scenarios/sec5_abl.toml"), run: qubits::sec5_abl },
    Entry {
        id: "sec6_sum_compare",
        config: include_str!("../../scenarios/sec6_sum_compare.toml"),
        run: sums::sec6_sum_compare,
    },
    Entry { id: "sec6_comb", config: include_str!("../../scenarios/sec6_comb.toml"), run: sums::sec6_comb },
    Entry { id: "sec7_product", config: include_str!("../../scenarios/sec7_product.toml"), run: products::sec7_product },
    Entry { id: "causality", config: include_str!("../../scenarios/causality.toml"), run: qubits::causality },
    Entry { id: "modular_sum", config: include_str!("../../scenarios/modular_sum.toml"), run: qubits::modular_sum },
    Entry {
        id: "random_sum_ensemble",
        config: include_str!("../../scenarios/random_sum_ensemble.toml"),
        run: sums::random_sum_ensemble,
    },
    Entry {
        id: "random_product_ensemble",
        config: include_str!("../../scenarios/random_product_ensemble.toml"),
        run: products::random_product_ensemble,
    },
    Entry { id: "modprod_trick", config: include_str!("../../scenarios/modprod_trick.toml"), run: products::modprod_trick },
];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    summary: String,
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    reference: toml::Table,
}

fn load(entry: &Entry) -> Result<(Config, Params, Params)> {
    let cfg: Config = toml::from_str(entry.config)
        .map_err(|e| Error::Override(format!("config for {} does not parse: {e}", entry.id)))?;
    let params = Params::from_defaults(&cfg.params)?;
    let reference = Params::from_defaults(&cfg.reference)?;
    Ok((cfg, params, reference))
}

/// Catalog entry as listed to users.
#[derive(Clone, Debug)]
pub struct ScenarioInfo {
    pub id: &'static str,
    pub summary: String,
    pub defaults: Params,
}

/// All scenarios in a fixed order.
pub fn list_scenarios() -> Vec<ScenarioInfo> {
    CATALOG
        .iter()
        .map(|e| {
            let (cfg, params, _) = load(e).expect("bundled configs are valid");
            ScenarioInfo { id: e.id, summary: cfg.summary, defaults: params }
        })
        .collect()
}

/// State shared with a scenario body while it runs.
pub(crate) struct Ctx {
    pub params: Params,
    pub reference: Params,
    pub seed: u64,
    /// Names of parameters changed from their defaults.
    pub overridden: Vec<String>,
    pub report: ScenarioReport,
}

pub fn run_scenario(id: &str, overrides: &[(String, String)], seed: u64) -> Result<ScenarioReport> {
    let entry = CATALOG.iter().find(|e| e.id == id).ok_or_else(|| Error::UnknownScenario(id.to_string()))?;
    let (_, defaults, reference) = load(entry)?;
    let params = defaults.with_overrides(id, overrides)?;
    let mut json = params.to_json();
    json.insert("seed".into(), serde_json::Value::from(seed));
    let overridden = overrides.iter().map(|(k, _)| k.clone()).collect();
    let mut ctx = Ctx { params, reference, seed, overridden, report: ScenarioReport::new(id, json) };
    (entry.run)(&mut ctx)?;
    if !overrides.is_empty() {
        ctx.report.note("Reference values assume the default parameters; overridden runs may legitimately differ.");
    }
    debug_assert!(ctx.report.tables.values().all(|t| !t.is_empty()));
    Ok(ctx.report)
}

/// `n` points spaced evenly in `[a, b]`.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` points spaced evenly in `ln x` over `[a, b]`.
pub(crate) fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}
