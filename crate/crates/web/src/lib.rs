//! Browser bindings. Every export takes the text forms understood by
//! `tsvflab::lang` and returns a JSON string.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use tsvflab::coupling::{weak_couple_and_postselect, CouplingSpec};
use tsvflab::estimators::{scheme_curve, DeltaGrid, EnsembleScheme, SchemeInput};
use tsvflab::hilbert::HermitianOperator;
use tsvflab::lang::{parse_observable, parse_state};
use tsvflab::tsvf::{weak_value as wv, weak_variance, TwoStateVector};

fn err(what: &str, e: tsvflab::Error) -> String {
    match e {
        tsvflab::Error::Parse { pos, msg } => format!("{what}: {msg} (at character {})", pos + 1),
        e => format!("{what}: {e}"),
    }
}

fn selection(pre: &str, post: &str) -> Result<TwoStateVector, String> {
    let pre = parse_state(pre).map_err(|e| err("pre-selection", e))?.state;
    let post = parse_state(post).map_err(|e| err("post-selection", e))?.state;
    TwoStateVector::new(pre, post).map_err(|e| err("selection", e))
}

fn observable(src: &str, tsv: &TwoStateVector) -> Result<HermitianOperator, String> {
    parse_observable(src, tsv.dims()).map_err(|e| err("observable", e))
}

pub fn weak_value_json(pre: &str, post: &str, obs: &str) -> Result<Value, String> {
    let tsv = selection(pre, post)?;
    let a = observable(obs, &tsv)?;
    let w = wv(&tsv, &a).map_err(|e| err("weak value", e))?;
    let v = weak_variance(&tsv, &a).map_err(|e| err("weak variance", e))?;
    Ok(json!({"re": w.re, "im": w.im, "variance_re": v.re, "variance_im": v.im}))
}

/// Pointer density after a single weak coupling of width `width`.
pub fn pointer_curve_json(pre: &str, post: &str, obs: &str, width: f64, points: usize) -> Result<Value, String> {
    let tsv = selection(pre, post)?;
    let a = observable(obs, &tsv)?;
    let spec = CouplingSpec::local_single(a.clone(), width).map_err(|e| err("width", e))?;
    let mix = weak_couple_and_postselect(&tsv, &spec).map_err(|e| err("coupling", e))?;
    let (lo, hi) = mix.center_range(0);
    let (lo, hi) = (lo - 5.0 * width, hi + 5.0 * width);
    let n = points.max(2);
    let q: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let density: Vec<f64> = q.iter().map(|&x| mix.density_at(&[x])).collect();
    let w = wv(&tsv, &a).map_err(|e| err("weak value", e))?;
    Ok(json!({"q": q, "density": density, "mean": mix.mean(0), "weak_value": w.re}))
}

/// Sum readouts of the entangled and local-pair schemes across widths.
pub fn sum_comparison_json(
    pre: &str,
    post: &str,
    obs_a: &str,
    obs_b: &str,
    lo: f64,
    hi: f64,
    per_decade: u32,
) -> Result<Value, String> {
    let tsv = selection(pre, post)?;
    let a = observable(obs_a, &tsv)?;
    let b = observable(obs_b, &tsv)?;
    let grid = DeltaGrid::new(lo, hi, per_decade).map_err(|e| err("widths", e))?;
    let input = SchemeInput { tsv: &tsv, a: &a, b: Some(&b) };
    let ent = scheme_curve(EnsembleScheme::EntangledSum, &input, &grid).map_err(|e| err("entangled", e))?;
    let loc = scheme_curve(EnsembleScheme::LocalPair, &input, &grid).map_err(|e| err("local", e))?;
    let target = input.reference(EnsembleScheme::EntangledSum).map_err(|e| err("weak value", e))?;
    Ok(json!({
        "delta": ent.iter().map(|p| p.delta).collect::<Vec<_>>(),
        "entangled": ent.iter().map(|p| p.readout).collect::<Vec<_>>(),
        "local": loc.iter().map(|p| p.readout).collect::<Vec<_>>(),
        "weak_value": target.re,
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weak_value(pre: &str, post: &str, obs: &str) -> Result<String, JsError> {
    to_js(weak_value_json(pre, post, obs))
}

#[wasm_bindgen]
pub fn pointer_curve(pre: &str, post: &str, obs: &str, width: f64, points: usize) -> Result<String, JsError> {
    to_js(pointer_curve_json(pre, post, obs, width, points))
}

#[wasm_bindgen]
pub fn sum_comparison(
    pre: &str,
    post: &str,
    obs_a: &str,
    obs_b: &str,
    lo: f64,
    hi: f64,
    per_decade: u32,
) -> Result<String, JsError> {
    to_js(sum_comparison_json(pre, post, obs_a, obs_b, lo, hi, per_decade))
}
