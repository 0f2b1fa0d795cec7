//! `pns-toolkit`: ingest survey files, find adjustment sets, estimate
//! interventional effects and bound PNS from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pns_core::dataset::{apply_recode, merge_by_key, read_table, recode::nhanes_default_config, RecodeConfig};
use pns_core::discovery::{discover, DEFAULT_ALPHA, DEFAULT_MAX_COND};
use pns_core::estimate::{do_adjust, tabulate, DoEstimate};
use pns_core::numeric::fmt_prob;
use pns_core::pns::{pns_report, AdjustmentPolicy, BoundMethod, PnsInterval, PnsReport};
use pns_core::scm_oracle::{enumerate_counterfactuals, random_scm, sample, CovariateRole};
use pns_core::subgroup::{render_table, scan_subgroups, ScanConfig, SubgroupConfig};
use pns_core::validation::{run_validation, ValidationConfig};
use pns_core::{CausalGraph, DiscreteDataset, Event, NodeSet, ScmSpec, SCHEMA_VERSION};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug, Serialize)]
#[command(name = "pns-toolkit", version, about = "Causal effect estimation and PNS bounds")]
struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, env = "PNS_TOOLKIT_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Human,
    Json,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Merge raw files on a key and recode them into a dataset file.
    Ingest(IngestArgs),
    /// Learn a CPDAG from a dataset.
    Discover(DiscoverArgs),
    /// List the minimal backdoor adjustment sets in a graph.
    Identify(IdentifyArgs),
    /// Estimate P(y | do(x)) and P(y | do(x')) by adjustment.
    Do(DoArgs),
    /// Bound the probability of necessity and sufficiency.
    Pns(PnsArgs),
    /// Bound PNS in every subgroup over a set of variables.
    Subgroups(SubgroupArgs),
    /// Enumerate a structural causal model exactly.
    Oracle(OracleArgs),
    /// Run the oracle containment suite over random models.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// Input files (.xpt transport or CSV), merged on --key.
    #[arg(long, num_args = 1.., required = true)]
    xpt: Vec<PathBuf>,
    #[arg(long, default_value = "SEQN")]
    key: String,
    /// Recode rules; the bundled NHANES rules when omitted.
    #[arg(long)]
    recode: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DiscoverArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_COND)]
    max_cond: usize,
    /// Variables to include (default: all).
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,
    /// Write the graph file here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a Graphviz rendering here.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IdentifyArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_parser = parse_variable)]
    x: String,
    #[arg(long, value_parser = parse_variable)]
    y: String,
    /// Largest set size searched (default: every size).
    #[arg(long)]
    max_size: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct DoArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_event)]
    x: Event,
    #[arg(long, value_parser = parse_event)]
    y: Event,
    #[arg(long, value_delimiter = ',')]
    adjust: Vec<String>,
    /// Graph used to check the adjustment set.
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Tp,
    Thm1,
    Thm2,
    All,
}

#[derive(Args, Debug, Serialize)]
struct PnsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_parser = parse_event)]
    x: Event,
    #[arg(long, value_parser = parse_event)]
    y: Event,
    /// Adjustment set; the first minimal backdoor set when omitted.
    #[arg(long, value_delimiter = ',')]
    adjust: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Method::All)]
    method: Method,
    /// Also bound with every other minimal backdoor set.
    #[arg(long)]
    all_sets: bool,
    #[arg(long, default_value_t = 3)]
    max_size: usize,
}

#[derive(Args, Debug, Serialize)]
struct SubgroupArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_parser = parse_event)]
    x: Event,
    #[arg(long, value_parser = parse_event)]
    y: Event,
    /// Adjustment set; the first minimal backdoor set when omitted.
    #[arg(long, value_delimiter = ',')]
    adjust: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', required = true)]
    vars: Vec<String>,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    min_n: usize,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Write `<out>.txt` (table) and `<out>.json` (full report).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Role {
    Confounder,
    Outcome,
    Mixed,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    /// Model file (TOML).
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    scm: Option<PathBuf>,
    /// Generate a random binary model instead of reading one.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 2)]
    covariates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Role::Confounder)]
    role: Role,
    #[arg(long, default_value = "X")]
    x: String,
    #[arg(long, default_value = "Y")]
    y: String,
    /// Write the model to this file.
    #[arg(long)]
    emit_scm: Option<PathBuf>,
    /// Draw this many rows and write them to --sample-out.
    #[arg(long, requires = "sample_out")]
    sample: Option<usize>,
    #[arg(long, requires = "sample")]
    sample_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1000)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Largest covariate count; models cycle through 0..=N.
    #[arg(long, default_value_t = 4)]
    covariates: usize,
}

fn parse_event(s: &str) -> Result<Event, String> {
    let s = s.trim();
    let text = if s.contains('=') { s.to_string() } else { format!("{s}=1") };
    let e: Event = text.parse().map_err(|e| format!("{e}"))?;
    if e.sole().is_none() {
        return Err(format!("`{s}` must name exactly one variable"));
    }
    Ok(e)
}

fn parse_variable(s: &str) -> Result<String, String> {
    let name = s.split('=').next().unwrap_or("").trim();
    if name.is_empty() {
        return Err("empty variable name".into());
    }
    Ok(name.to_string())
}

/// A failure after argument parsing. Usage errors exit 1, data errors 2.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<Output, Failure>;

/// What a subcommand prints: a human rendering and a structured document.
struct Output {
    human: String,
    doc: Value,
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read `{}`: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("cannot write `{}`: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<CausalGraph, Failure> {
    CausalGraph::parse_any(&read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<DiscreteDataset, Failure> {
    DiscreteDataset::from_json(&read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn sole(e: &Event) -> (&str, i64) {
    e.sole().expect("events are validated at parse time")
}

fn run_ingest(a: &IngestArgs) -> Outcome {
    let config = match &a.recode {
        Some(p) => RecodeConfig::from_toml(&read_text(p)?).map_err(Failure::data)?,
        None => nhanes_default_config(),
    };
    let tables = a
        .xpt
        .iter()
        .map(|p| read_table(p).map_err(Failure::data))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = if tables.len() == 1 {
        tables.into_iter().next().expect("one table")
    } else {
        merge_by_key(&tables, &a.key).map_err(Failure::data)?
    };
    let (data, report) = apply_recode(&merged, &config).map_err(Failure::data)?;
    write_text(&a.out, &data.to_json())?;
    let vars: Vec<&str> = data.variable_names().collect();
    let mut human = format!(
        "rows in: {}\nrows dropped: {}\nrows out: {}\nvariables: {}\n",
        report.input_rows,
        report.dropped_rows,
        data.n(),
        vars.join(", ")
    );
    for (target, missing) in &report.missing_by_target {
        let _ = writeln!(human, "missing {target}: {missing}");
    }
    let _ = writeln!(human, "wrote {}", a.out.display());
    Ok(Output {
        human,
        doc: json!({
            "input_rows": report.input_rows,
            "dropped_rows": report.dropped_rows,
            "rows": data.n(),
            "variables": vars,
            "missing_by_target": report.missing_by_target,
            "out": a.out,
        }),
    })
}

fn run_discover(a: &DiscoverArgs) -> Outcome {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let data = load_dataset(&a.dataset)?;
    let vars: Vec<String> = if a.vars.is_empty() {
        data.variable_names().map(String::from).collect()
    } else {
        a.vars.clone()
    };
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let (complete, dropped) = data.complete_cases(&refs).map_err(Failure::data)?;
    let table = tabulate(&complete, &refs).map_err(Failure::data)?;
    let cpdag = discover(&table, a.alpha, a.max_cond).map_err(Failure::data)?;
    let text = cpdag.to_text();
    if let Some(p) = &a.out {
        write_text(p, &text)?;
    }
    if let Some(p) = &a.dot {
        write_text(p, &cpdag.to_dot())?;
    }
    let mut human = format!("# rows used: {} (dropped {dropped})\n", complete.n());
    human.push_str(&text);
    for (u, v) in &cpdag.conflicts {
        let _ = writeln!(human, "# conflicting orientation on {u} -- {v}");
    }
    let doc: Value = serde_json::from_str(&cpdag.to_json()).expect("cpdag json");
    Ok(Output {
        human,
        doc: json!({ "rows_used": complete.n(), "rows_dropped": dropped, "cpdag": doc }),
    })
}

fn run_identify(a: &IdentifyArgs) -> Outcome {
    let g = load_graph(&a.graph)?;
    let max = a.max_size.unwrap_or(g.len());
    let sets = g.find_backdoor_sets(&a.x, &a.y, max).map_err(Failure::data)?;
    if sets.is_empty() {
        return Err(Failure::Data(format!(
            "no backdoor set of size <= {max} for {} -> {}",
            a.x, a.y
        )));
    }
    let human: String = sets.iter().map(|s| format!("{s}\n")).collect();
    Ok(Output {
        human,
        doc: json!({ "x": a.x, "y": a.y, "backdoor_sets": sets }),
    })
}

fn strata_lines(out: &mut String, label: &str, e: &DoEstimate) {
    let _ = writeln!(out, "{label} = {}", fmt_prob(e.value));
    for s in &e.strata {
        let _ = writeln!(
            out,
            "  stratum {}: n_z={} n_xz={} n_xyz={} P(z)={} P(y|x,z)={}",
            s.stratum,
            s.n_z,
            s.n_xz,
            s.n_xyz,
            fmt_prob(s.weight),
            fmt_prob(s.conditional)
        );
    }
}

fn run_do(a: &DoArgs) -> Outcome {
    let data = load_dataset(&a.dataset)?;
    let (xv, xl) = sole(&a.x);
    let (yv, _) = sole(&a.y);
    let mut vars = vec![xv, yv];
    vars.extend(a.adjust.iter().map(String::as_str));
    let (complete, dropped) = data.complete_cases(&vars).map_err(Failure::data)?;
    let table = tabulate(&complete, &vars).map_err(Failure::data)?;
    let control = table.complement(xv, xl).map_err(Failure::data)?;
    let z: Vec<&str> = a.adjust.iter().map(String::as_str).collect();
    let treated = do_adjust(&table, &a.x, &a.y, &z).map_err(Failure::data)?;
    let x0 = Event::single(xv, control);
    let untreated = do_adjust(&table, &x0, &a.y, &z).map_err(Failure::data)?;
    let admissible = match &a.graph {
        Some(p) => {
            let g = load_graph(p)?;
            let set: NodeSet = z.iter().copied().collect();
            Some(g.satisfies_backdoor(xv, yv, &set).map_err(Failure::data)?)
        }
        None => None,
    };
    let mut human = format!("rows used: {} (dropped {dropped})\n", complete.n());
    if let Some(ok) = admissible {
        let _ = writeln!(human, "backdoor admissible: {ok}");
    }
    strata_lines(&mut human, &format!("P({} | do({}))", a.y, a.x), &treated);
    strata_lines(&mut human, &format!("P({} | do({}))", a.y, x0), &untreated);
    Ok(Output {
        human,
        doc: json!({
            "rows_used": complete.n(),
            "rows_dropped": dropped,
            "adjustment": a.adjust,
            "admissible": admissible,
            "treated": { "event": a.x.to_string(), "estimate": treated },
            "control": { "event": x0.to_string(), "estimate": untreated },
        }),
    })
}

fn policy(adjust: &Option<Vec<String>>, all: bool, max_size: usize) -> AdjustmentPolicy {
    match adjust {
        Some(v) => AdjustmentPolicy::Explicit(v.iter().filter(|s| !s.is_empty()).cloned().collect()),
        None if all => AdjustmentPolicy::AllMinimal { max_size },
        None => AdjustmentPolicy::FirstMinimal { max_size },
    }
}

fn interval_line(out: &mut String, iv: &PnsInterval) {
    let _ = writeln!(out, "{:<5} [{}, {}]", iv.method.tag(), fmt_prob(iv.lower), fmt_prob(iv.upper));
    for b in &iv.binding {
        let _ = writeln!(
            out,
            "      {} w={} lower {} = {} upper {} = {}",
            b.stratum,
            fmt_prob(b.weight),
            b.lower_term,
            fmt_prob(b.lower_value),
            b.upper_term,
            fmt_prob(b.upper_value)
        );
    }
}

fn selected(report: &PnsReport, m: Method) -> Vec<&PnsInterval> {
    let all = [BoundMethod::Population, BoundMethod::Covariate, BoundMethod::BackdoorCovariate];
    let pick = match m {
        Method::Tp => &all[0..1],
        Method::Thm1 => &all[1..2],
        Method::Thm2 => &all[2..3],
        Method::All => &all[..],
    };
    pick.iter().map(|&b| report.interval(b)).collect()
}

fn run_pns(a: &PnsArgs) -> Outcome {
    let data = load_dataset(&a.dataset)?;
    let g = load_graph(&a.graph)?;
    let report = pns_report(&data, &g, &a.x, &a.y, &policy(&a.adjust, a.all_sets, a.max_size))
        .map_err(Failure::data)?;
    let mut human = format!(
        "treatment {}  outcome {}\nadjustment {} (backdoor admissible: {})\nrows used: {} (dropped {})\n",
        report.treatment, report.outcome, report.adjustment, report.admissible, report.n_used, report.n_dropped
    );
    let _ = writeln!(human, "P(y|do(x))  = {}", fmt_prob(report.do_treated.value));
    let _ = writeln!(human, "P(y|do(x')) = {}", fmt_prob(report.do_control.value));
    for iv in selected(&report, a.method) {
        interval_line(&mut human, iv);
    }
    for alt in &report.alternatives {
        let _ = writeln!(
            human,
            "thm2 with {}: [{}, {}] (n={})",
            alt.adjustment,
            fmt_prob(alt.thm2.lower),
            fmt_prob(alt.thm2.upper),
            alt.n_used
        );
    }
    let intervals: Vec<&PnsInterval> = selected(&report, a.method);
    Ok(Output {
        human,
        doc: json!({ "method": a.method, "intervals": intervals, "report": report }),
    })
}

fn run_subgroups(a: &SubgroupArgs) -> Outcome {
    let data = load_dataset(&a.dataset)?;
    let g = load_graph(&a.graph)?;
    let (xv, _) = sole(&a.x);
    let (yv, _) = sole(&a.y);
    let adjust: NodeSet = match &a.adjust {
        Some(v) => v.iter().filter(|s| !s.is_empty()).map(String::as_str).collect(),
        None => g
            .find_backdoor_sets(xv, yv, 3)
            .map_err(Failure::data)?
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Data(format!("no backdoor set of size <= 3 for {xv} -> {yv}")))?,
    };
    let vars: Vec<&str> = a.vars.iter().map(String::as_str).collect();
    let config = ScanConfig {
        depth: a.depth,
        min_n: a.min_n,
        sizing: SubgroupConfig {
            margin: a.margin,
            confidence: a.confidence,
        },
    };
    let result = scan_subgroups(&data, &vars, &g, &a.x, &a.y, &adjust, &config).map_err(|e| match e {
        pns_core::subgroup::SubgroupError::InvalidMargin(_)
        | pns_core::subgroup::SubgroupError::InvalidConfidence(_) => Failure::Usage(e.to_string()),
        other => Failure::data(other),
    })?;
    let table = render_table(&result.reports);
    let doc = json!({
        "adjustment": adjust,
        "reports": result.reports,
        "skipped": result.skipped,
    });
    if let Some(out) = &a.out {
        write_text(&out.with_extension("txt"), &table)?;
        let full = json!({ "schema": SCHEMA_VERSION, "command": "subgroups", "config": a, "result": doc });
        write_text(&out.with_extension("json"), &format!("{}\n", pretty(&full)))?;
    }
    let mut human = format!("adjustment {adjust}\n");
    human.push_str(&table);
    for s in &result.skipped {
        let _ = writeln!(human, "skipped {} (n={}): {}", s.spec.name, s.n, s.reason);
    }
    Ok(Output { human, doc })
}

fn run_oracle(a: &OracleArgs) -> Outcome {
    let model: ScmSpec = match &a.scm {
        Some(p) => ScmSpec::from_toml(&read_text(p)?).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        None => {
            let role = match a.role {
                Role::Confounder => CovariateRole::Confounder,
                Role::Outcome => CovariateRole::OutcomeOnly,
                Role::Mixed => CovariateRole::Mixed,
            };
            random_scm(a.covariates, a.seed, role).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    if let Some(p) = &a.emit_scm {
        write_text(p, &model.to_toml())?;
    }
    if let (Some(n), Some(p)) = (a.sample, &a.sample_out) {
        write_text(p, &sample(&model, n, a.sample_seed).to_json())?;
    }
    let profile = enumerate_counterfactuals(&model, &a.x, &a.y).map_err(Failure::data)?;
    let tp = pns_core::pns::pns_bounds_tp(&profile.quantities()).map_err(Failure::data)?;
    let mut human = format!("variables: {}\n", profile.variables.join(", "));
    let _ = writeln!(human, "P({}_{{{}=1}} = 1) = {}", a.y, a.x, fmt_prob(profile.p_yx));
    let _ = writeln!(human, "P({}_{{{}=0}} = 1) = {}", a.y, a.x, fmt_prob(profile.p_yxp));
    let _ = writeln!(human, "PNS = {}", fmt_prob(profile.exact_pns));
    let _ = writeln!(human, "tp bounds [{}, {}]", fmt_prob(tp.lower), fmt_prob(tp.upper));
    let _ = writeln!(human, "counterfactual cells: {}", profile.cells.len());
    let observational: Vec<Value> = profile
        .observational
        .iter()
        .map(|(cell, p)| json!({ "values": cell, "prob": p }))
        .collect();
    Ok(Output {
        human,
        doc: json!({
            "x": profile.x,
            "y": profile.y,
            "variables": profile.variables,
            "p_yx": profile.p_yx,
            "p_yxp": profile.p_yxp,
            "exact_pns": profile.exact_pns,
            "tp": tp,
            "observational": observational,
            "cells": profile.cells,
        }),
    })
}

fn run_validate(a: &ValidateArgs) -> Outcome {
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    let cfg = ValidationConfig {
        seeds: a.seeds,
        first_seed: a.first_seed,
        max_covariates: a.covariates,
    };
    let report = run_validation(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut human = format!("models={}\n", report.models);
    for c in &report.checks {
        let _ = writeln!(human, "{:<26} checked={:<7} violations={}", c.name, c.checked, c.violations);
    }
    for v in report.violations.iter().take(20) {
        let _ = writeln!(human, "violation seed={} k={} {}: {} ({})", v.seed, v.covariates, v.role, v.check, v.detail);
    }
    let _ = writeln!(human, "violations={}", report.violations.len());
    let out = Output {
        human,
        doc: serde_json::to_value(&report).expect("report serializes"),
    };
    if report.passed() {
        Ok(out)
    } else {
        // Print the report, then fail.
        Err(Failure::Data(format!(
            "{}{} violation(s)",
            out.human,
            report.violations.len()
        )))
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn dispatch(c: &Command) -> Outcome {
    match c {
        Command::Ingest(a) => run_ingest(a),
        Command::Discover(a) => run_discover(a),
        Command::Identify(a) => run_identify(a),
        Command::Do(a) => run_do(a),
        Command::Pns(a) => run_pns(a),
        Command::Subgroups(a) => run_subgroups(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Validate(a) => run_validate(a),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Discover(_) => "discover",
        Command::Identify(_) => "identify",
        Command::Do(_) => "do",
        Command::Pns(_) => "pns",
        Command::Subgroups(_) => "subgroups",
        Command::Oracle(_) => "oracle",
        Command::Validate(_) => "validate",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let config = serde_json::to_value(&cli).expect("arguments serialize");
    if cli.format == Format::Human {
        eprintln!("config: {config}");
    }
    match dispatch(&cli.command) {
        Ok(out) => {
            match cli.format {
                Format::Human => print!("{}", out.human),
                Format::Json => {
                    let doc = json!({
                        "schema": SCHEMA_VERSION,
                        "command": command_name(&cli.command),
                        "config": config,
                        "result": out.doc,
                    });
                    println!("{}", pretty(&doc));
                }
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
