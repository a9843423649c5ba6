mod output;
mod svg;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tsvflab::coupling::{weak_couple_and_postselect, weak_readout, CouplingSpec};
use tsvflab::estimators::{required_ensemble_size, DeltaGrid, EnsembleScheme, PrecisionTarget, SchemeInput};
use tsvflab::hilbert::{HermitianOperator, C64};
use tsvflab::lang::{parse_observable, parse_state};
use tsvflab::pointer::{sample_readout, GaussianMixture, WidthConvention};
use tsvflab::scenarios::{list_scenarios, run_scenario, Table, DEFAULT_SEED};
use tsvflab::tsvf::{abl_probabilities, pp_expectation, weak_value, weak_variance, weakness_metric, TwoStateVector};
use tsvflab::Error;

use output::{format_num, Format, OutputBundle};

const EXIT_VERDICT: u8 = 1;
const EXIT_ORTHOGONAL: u8 = 2;
const EXIT_BIAS: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_IO: u8 = 74;

/// Pre- and post-selected quantum systems: weak values, ABL tables, pointer
/// distributions and canned reproductions.
#[derive(Parser)]
#[command(name = "tsvflab", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "TSVFLAB_OUT", default_value = "tsvflab-out")]
    out: PathBuf,

    /// Comma-separated output formats.
    #[arg(long, global = true, value_delimiter = ',', default_value = "csv,json,svg")]
    format: Vec<Format>,

    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Fail instead of replacing existing output files.
    #[arg(long, global = true)]
    no_overwrite: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct System {
    /// Pre-selected state, e.g. "(1+e)ud+(-1+e)du+d*uu; e=-0.05, d=0.11".
    #[arg(long)]
    pre: String,

    /// Post-selected state.
    #[arg(long)]
    post: String,

    /// Observable, e.g. "zA+zB" or "zA*zB".
    #[arg(long)]
    obs: String,

    /// Second observable for two-pointer schemes.
    #[arg(long)]
    obs_b: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointerScheme {
    LocalSingle,
    EntangledSum,
    LocalPair,
}

#[derive(Subcommand)]
enum Cmd {
    /// Weak value and weak variance of an observable.
    Weakval {
        #[command(flatten)]
        sys: System,
        /// Pointer width for the weakness metric.
        #[arg(long)]
        width: Option<f64>,
    },
    /// ABL probabilities of a strong intermediate measurement.
    Abl {
        #[command(flatten)]
        sys: System,
    },
    /// Pointer density after coupling and post-selection.
    Density {
        #[command(flatten)]
        sys: System,
        #[arg(long)]
        width: f64,
        #[arg(long, value_enum, default_value = "local-single")]
        scheme: PointerScheme,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
    /// Run a canned scenario and write its report.
    Scenario {
        id: String,
        /// Parameter overrides as key=value.
        #[arg(long, num_args = 1.., value_parser = parse_kv)]
        overrides: Vec<(String, String)>,
    },
    /// List scenarios with their parameters.
    List,
    /// Ensemble size a scheme needs for the precision target.
    Ensemble {
        #[command(flatten)]
        sys: System,
        #[arg(long)]
        scheme: EnsembleScheme,
        /// Pointer widths searched, as lo:hi:per_decade.
        #[arg(long, default_value = "0.1:1e8:32")]
        delta_grid: DeltaGrid,
        /// Allowed bias relative to the weak value.
        #[arg(long, default_value_t = 0.01)]
        bias: f64,
        /// Target standard error relative to the weak value.
        #[arg(long, default_value_t = 0.1)]
        uncertainty: f64,
    },
    /// Draw pointer readings.
    Sample {
        #[command(flatten)]
        sys: System,
        #[arg(long)]
        width: f64,
        #[arg(long, value_enum, default_value = "local-single")]
        scheme: PointerScheme,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn caret(src: &str, pos: usize) -> String {
    format!("  {src}\n  {}^", " ".repeat(pos))
}

fn with_source<T>(what: &str, src: &str, r: tsvflab::Result<T>) -> Result<T> {
    r.map_err(|e| {
        let msg = match &e {
            Error::Parse { pos, .. } => format!("cannot parse {what}\n{}", caret(src, *pos)),
            _ => format!("invalid {what} `{src}`"),
        };
        anyhow::Error::new(e).context(msg)
    })
}

struct Loaded {
    tsv: TwoStateVector,
    a: HermitianOperator,
    b: Option<HermitianOperator>,
}

fn load(sys: &System) -> Result<Loaded> {
    let pre = with_source("--pre", &sys.pre, parse_state(&sys.pre))?.state;
    let post = with_source("--post", &sys.post, parse_state(&sys.post))?.state;
    let dims = pre.dims().to_vec();
    let a = with_source("--obs", &sys.obs, parse_observable(&sys.obs, &dims))?;
    let b = match &sys.obs_b {
        Some(src) => Some(with_source("--obs-b", src, parse_observable(src, &dims))?),
        None => None,
    };
    let tsv = TwoStateVector::new(pre, post).context("pre and post must describe the same particles")?;
    Ok(Loaded { tsv, a, b })
}

/// Up to 12 significant digits, trailing zeros removed.
fn pretty(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let decimals = (11 - v.abs().log10().floor() as i32).clamp(0, 15) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn pretty_c(c: C64) -> String {
    let im = pretty(c.im.abs());
    let sign = if c.im < 0.0 && im != "0" { '-' } else { '+' };
    format!("{} {sign} {im}i", pretty(c.re))
}

fn cjson(c: C64) -> serde_json::Value {
    json!({"re": c.re, "im": c.im})
}

fn pointer(l: &Loaded, scheme: PointerScheme, width: f64) -> Result<GaussianMixture> {
    let need_b = || l.b.clone().ok_or_else(|| anyhow!(Error::InvalidArgument("this scheme needs --obs-b".into())));
    let spec = match scheme {
        PointerScheme::LocalSingle => CouplingSpec::local_single(l.a.clone(), width)?,
        PointerScheme::EntangledSum => CouplingSpec::entangled_sum(l.a.clone(), need_b()?, width)?,
        PointerScheme::LocalPair => CouplingSpec::local_pair(l.a.clone(), need_b()?, width, WidthConvention::Split)?,
    };
    Ok(weak_couple_and_postselect(&l.tsv, &spec)?)
}

fn statistic(s: EnsembleScheme) -> &'static str {
    match s {
        EnsembleScheme::LocalSingle => "Q (single pointer on A)",
        EnsembleScheme::EntangledSum => "Q+ (entangled pointer on A+B)",
        EnsembleScheme::LocalPair => "Q_A + Q_B (local pointers of width delta/sqrt2)",
        EnsembleScheme::JointResch => "2 Q_A Q_B (Resch-Steinberg)",
        EnsembleScheme::JointLundeen => "Q_A Q_B (Lundeen-Resch)",
        EnsembleScheme::DirectProduct => "Q (hypothetical pointer on A*B)",
    }
}

fn bundle(cli: &Cli) -> Result<OutputBundle> {
    let formats: BTreeSet<Format> = cli.format.iter().copied().collect();
    OutputBundle::new(cli.out.clone(), formats, !cli.no_overwrite)
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::Weakval { sys, width } => {
            let l = load(sys)?;
            let w = weak_value(&l.tsv, &l.a)?;
            let var = weak_variance(&l.tsv, &l.a)?;
            println!("weak value     {}", pretty_c(w));
            println!("weak variance  {}", pretty_c(var));
            let mut j = json!({"weak_value": cjson(w), "weak_variance": cjson(var)});
            if let Some(d) = width {
                let m = weakness_metric(&l.tsv, &l.a, *d)?;
                println!("weakness       {} (width {d})", pretty_c(m));
                j["weakness"] = cjson(m);
                j["width"] = json!(d);
            }
            if cli.format.contains(&Format::Json) {
                println!("{j}");
            }
            Ok(0)
        }
        Cmd::Abl { sys } => {
            let l = load(sys)?;
            let outcomes = abl_probabilities(&l.tsv, &l.a)?;
            println!("eigenvalue,probability");
            for o in &outcomes {
                println!("{},{}", format_num(o.eigenvalue), format_num(o.probability));
            }
            println!("# expectation {}", pretty(pp_expectation(&l.tsv, &l.a)?));
            Ok(0)
        }
        Cmd::Density { sys, width, scheme, points } => {
            let l = load(sys)?;
            let mix = pointer(&l, *scheme, *width)?;
            let mut table = if mix.dim() == 1 { Table::new(&["q", "density"]) } else { Table::new(&["q", "density_a", "density_b"]) };
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for c in 0..mix.dim() {
                let (a, b) = mix.center_range(c);
                lo = lo.min(a - 6.0 * mix.width(c));
                hi = hi.max(b + 6.0 * mix.width(c));
            }
            for i in 0..*points {
                let q = if *points > 1 { lo + (hi - lo) * i as f64 / (*points - 1) as f64 } else { lo };
                let row = if mix.dim() == 1 {
                    vec![q.into(), mix.density_at(&[q]).into()]
                } else {
                    vec![q.into(), mix.marginal_density_at(0, q).into(), mix.marginal_density_at(1, q).into()]
                };
                table.push(row);
            }
            for c in 0..mix.dim() {
                println!("pointer {c} mean {}", pretty(mix.mean(c)));
            }
            if mix.dim() == 1 {
                println!("readout = {}", pretty_c(weak_readout(&mix, *width)?));
            }
            let mut b = bundle(cli)?;
            b.stage_table(Path::new(""), "density", &table)?;
            report_written(&b.commit()?);
            Ok(0)
        }
        Cmd::Scenario { id, overrides } => {
            let report = match run_scenario(id, overrides, cli.seed) {
                Err(Error::UnknownScenario(_)) => {
                    let ids: Vec<&str> = list_scenarios().iter().map(|s| s.id).collect();
                    eprintln!("error: unknown scenario `{id}`\nusage: tsvflab scenario <ID> [--overrides key=value ...]\navailable: {}", ids.join(", "));
                    return Ok(EXIT_USAGE);
                }
                r => r?,
            };
            let mut b = bundle(cli)?;
            b.stage_report(&report)?;
            report_written(&b.commit()?);
            for v in &report.verdicts {
                println!(
                    "{} {}  measured {}  expected {}{}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.check,
                    v.measured,
                    v.expected,
                    v.tol.map(|t| format!("  tol {t}")).unwrap_or_default()
                );
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            let failed = report.verdicts.iter().filter(|v| !v.pass).count();
            println!("{}: {} verdicts, {failed} failed", report.scenario, report.verdicts.len());
            Ok(if failed == 0 { 0 } else { EXIT_VERDICT })
        }
        Cmd::List => {
            for s in list_scenarios() {
                println!("{}\n    {}", s.id, s.summary);
                let json = s.defaults.to_json();
                for (k, kind) in s.defaults.kinds() {
                    println!("    {k} = {} ({})", json[&k], kind.name());
                }
            }
            Ok(0)
        }
        Cmd::Ensemble { sys, scheme, delta_grid, bias, uncertainty } => {
            let l = load(sys)?;
            let input = SchemeInput { tsv: &l.tsv, a: &l.a, b: l.b.as_ref() };
            let target = PrecisionTarget::new(*bias, *uncertainty)?;
            let req = required_ensemble_size(*scheme, &input, target, delta_grid)?;
            println!("scheme     {scheme}");
            println!("statistic  {}", statistic(*scheme));
            println!("reference  {}", pretty_c(req.reference));
            println!("delta*     {}", pretty(req.delta_star));
            println!("bias       {}", pretty(req.bias));
            println!("sigma      {}", pretty(req.sigma));
            println!("n          {}", req.n);
            if cli.format.contains(&Format::Json) {
                println!(
                    "{}",
                    json!({"scheme": scheme.name(), "statistic": statistic(*scheme), "reference": cjson(req.reference),
                           "delta_star": req.delta_star, "bias": req.bias, "sigma": req.sigma, "n": req.n as f64})
                );
            }
            Ok(0)
        }
        Cmd::Sample { sys, width, scheme, n } => {
            let l = load(sys)?;
            let mix = pointer(&l, *scheme, *width)?;
            let samples = sample_readout(&mix, *n, cli.seed);
            let cols: &[&str] = if mix.dim() == 1 { &["q"] } else { &["q_a", "q_b"] };
            let mut table = Table::new(cols);
            for i in 0..samples.len() {
                table.push(samples.row(i).iter().map(|&v| v.into()).collect());
            }
            for c in 0..mix.dim() {
                let se = (mix.variance(c) / *n as f64).sqrt();
                println!("coord {c}: sample mean {}  exact {}  standard error {}", pretty(samples.mean(c)), pretty(mix.mean(c)), pretty(se));
            }
            let mut b = bundle(cli)?;
            if b.wants(Format::Csv) {
                b.stage("samples.csv", output::table_csv(&table)?);
            }
            report_written(&b.commit()?);
            Ok(0)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::OverlapVanishes { .. } | Error::PostSelectionImpossible => EXIT_ORTHOGONAL,
            Error::BiasUnreachable { .. } => EXIT_BIAS,
            Error::UnknownScenario(_) => EXIT_USAGE,
            Error::Parse { .. }
            | Error::Override(_)
            | Error::InvalidArgument(_)
            | Error::UnknownKind(_)
            | Error::DimensionMismatch { .. }
            | Error::DimensionOverflow { .. }
            | Error::InvalidLabel { .. }
            | Error::NotHermitian { .. }
            | Error::NotUnitary { .. }
            | Error::NonCommuting { .. } => EXIT_DATA,
            Error::NormVanishes | Error::IntegrationFailure { .. } => EXIT_SOFTWARE,
        };
    }
    if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        return EXIT_IO;
    }
    EXIT_SOFTWARE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("{cause}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
