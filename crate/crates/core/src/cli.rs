//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 invalid input (including usage errors).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::anchors::{fit_anchors_traced, AnchorSet, TrajectoryCorpus};
use crate::closed_loop::{driving_score, load_suite, run_episode, success_rate, EpisodeResult, PipelinePlanner};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{evaluate, Evaluation};
use crate::render::render_svg;
use crate::scenario_gen::{corpus_from, generate, GenSpec, Range, Template};
use crate::world::{load_scenario_file, save_scenario, Scenario};

/// Version stamped into the first line of every results file.
pub const RESULTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "trajsafe", version, about = "Trajectory candidate scoring, selection and driving benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a trajectory corpus into an anchor file.
    FitAnchors(FitArgs),
    /// Write seeded synthetic scenarios, a suite manifest and an expert corpus.
    GenScenarios(GenArgs),
    /// Score and select candidates for one scenario or a directory of them.
    EvalOpenLoop(OpenLoopArgs),
    /// Drive every route of a suite with the pipeline as planner.
    EvalClosedLoop(ClosedLoopArgs),
    /// Draw a scenario (and the pipeline's choice, given anchors) as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Corpus text file, or a directory of scenario files whose experts form the corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub template: Template,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Ego speed range `lo,hi` in m/s.
    #[arg(long, value_parser = parse_range)]
    pub speed: Option<Range>,
    /// Hazard distance range `lo,hi` in m.
    #[arg(long, value_parser = parse_range)]
    pub gap: Option<Range>,
    /// Manoeuvre start time range `lo,hi` in s.
    #[arg(long, value_parser = parse_range)]
    pub trigger: Option<Range>,
}

/// Flags shared by the evaluation commands; each overrides the config file.
#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub anchors: Option<PathBuf>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OpenLoopArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scenario file, or a directory of `*.toml` scenario files.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write one SVG per scenario.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Args)]
pub struct ClosedLoopArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub exec_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> std::result::Result<Range, String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok(Range::new(num(lo)?, num(hi)?))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::FitAnchors(a) => cmd_fit_anchors(a),
        Command::GenScenarios(a) => cmd_gen_scenarios(a),
        Command::EvalOpenLoop(a) => cmd_eval_open_loop(a),
        Command::EvalClosedLoop(a) => cmd_eval_closed_loop(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// A scenario file, or every `*.toml` in a directory sorted by file name.
fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    if !path.is_dir() {
        return Ok(vec![load_scenario_file(path)?]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(path.display().to_string(), "directory holds no .toml scenario files"));
    }
    let scenarios: Vec<Scenario> = files.iter().map(load_scenario_file).collect::<Result<_>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(path.display().to_string(), format!("duplicate scenario name {:?}", w[0])));
    }
    Ok(scenarios)
}

fn load_anchors(path: &Path) -> Result<AnchorSet> {
    AnchorSet::from_text(&read_file(path)?).map_err(|e| with_context(path, e))
}

fn with_context(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{}: {context}", path.display()),
            message,
        },
        Error::Validation { path: field, message } => Error::Validation {
            path: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Config file merged with command-line overrides.
fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = &common.anchors {
        cfg.anchors = Some(a.clone());
    }
    if let Some(k) = common.top_k {
        cfg.pipeline.selection.top_k = k;
    }
    if let Some(e) = common.epsilon {
        cfg.pipeline.selection.epsilon = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_anchors(cfg: &RunConfig) -> Result<AnchorSet> {
    let path = cfg
        .anchors
        .as_ref()
        .ok_or_else(|| Error::invalid("anchors", "no anchor file given (use --anchors or `anchors` in the config file)"))?;
    load_anchors(path)
}

fn require_out_dir(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::invalid("out_dir", "no output directory given (use --out-dir or `out_dir` in the config file)"))
}

fn header(kind: &str) -> String {
    json!({
        "format_version": RESULTS_FORMAT_VERSION,
        "kind": kind,
        "tool_version": env!("CARGO_PKG_VERSION"),
    })
    .to_string()
}

fn record(kind: &str, scenario: Option<&str>, body: &impl Serialize) -> String {
    let mut map = Map::new();
    map.insert("record".into(), Value::from(kind));
    if let Some(s) = scenario {
        map.insert("scenario".into(), Value::from(s));
    }
    match serde_json::to_value(body).expect("records serialize") {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("value".into(), other);
        }
    }
    Value::Object(map).to_string()
}

pub fn cmd_fit_anchors(a: &FitArgs) -> Result<()> {
    let corpus = if a.corpus.is_dir() {
        corpus_from(&load_scenarios(&a.corpus)?)?
    } else {
        TrajectoryCorpus::from_text(&read_file(&a.corpus)?).map_err(|e| with_context(&a.corpus, e))?
    };
    let (anchors, trace) = fit_anchors_traced(&corpus, a.k, a.seed)?;
    write_file(&a.out, &anchors.to_text())?;
    println!(
        "{} anchors from {} trajectories, {} iterations, final SSE {:.6}{}",
        anchors.k(),
        corpus.len(),
        trace.sse.len(),
        trace.sse.last().copied().unwrap_or(0.0),
        if trace.converged { "" } else { " (iteration cap reached)" }
    );
    Ok(())
}

pub fn cmd_gen_scenarios(a: &GenArgs) -> Result<()> {
    let mut spec = GenSpec::new(a.template, a.seed, a.count);
    if let Some(h) = a.horizon {
        spec.horizon_steps = h;
    }
    if let Some(dt) = a.dt {
        spec.dt = dt;
    }
    if let Some(r) = a.speed {
        spec.speed = r;
    }
    if let Some(r) = a.gap {
        spec.gap = r;
    }
    if let Some(r) = a.trigger {
        spec.trigger = r;
    }
    let scenarios = generate(&spec)?;
    let dir = &a.out_dir;
    let texts: Vec<(String, String)> = scenarios
        .par_iter()
        .map(|s| (format!("{}.toml", file_stem(&s.name)), save_scenario(s)))
        .collect();
    let mut suite = String::from("format_version = 1\n\n");
    for (file, text) in &texts {
        write_file(&dir.join("scenarios").join(file), text)?;
        let _ = write!(suite, "[[routes]]\nscenario = \"scenarios/{file}\"\n\n");
    }
    write_file(&dir.join("suite.toml"), &suite)?;
    write_file(&dir.join("corpus.txt"), &corpus_from(&scenarios)?.to_text())?;
    println!("wrote {} {} scenarios to {}", scenarios.len(), a.template, dir.display());
    Ok(())
}

fn open_loop_summary(evals: &[(Scenario, Evaluation)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<32} {:>6} {:>6} {:>6} {:>6} {:>8} {:>7} {:>7} {:>7} {:>7}",
        "scenario", "NC", "DAC", "TTC", "EP", "Comfort", "PDMS", "EPDMS", "expert", "stage1"
    );
    let mut sums = [0.0; 9];
    for (_, ev) in evals {
        let sel = ev.selected_record();
        let expert = ev.expert.as_ref().map_or(f64::NAN, |e| e.pdms);
        let row = [
            sel.sub.nc,
            sel.sub.dac,
            sel.sub.ttc,
            sel.sub.ep,
            sel.sub.c,
            sel.pdms,
            sel.epdms,
            expert,
            ev.proposal_pick_record().pdms,
        ];
        let _ = writeln!(
            out,
            "{:<32} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>8.3} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
            ev.scenario, row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[7], row[8]
        );
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = evals.len() as f64;
    let m: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let _ = writeln!(
        out,
        "{:<32} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>8.3} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
        format!("mean ({} scenarios)", evals.len()),
        m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]
    );
    out
}

pub fn cmd_eval_open_loop(a: &OpenLoopArgs) -> Result<()> {
    let cfg = resolve(&a.common)?;
    let anchors = require_anchors(&cfg)?;
    let out_dir = require_out_dir(&a.out_dir, &cfg)?;
    let render = a.render || cfg.render;
    let scenarios = load_scenarios(&a.scenario)?;
    let evals: Vec<(Scenario, Evaluation)> = scenarios
        .into_par_iter()
        .map(|s| {
            let ev = evaluate(&s, &anchors, &cfg.pipeline).map_err(|e| match e {
                Error::HorizonMismatch { .. } => Error::invalid(format!("scenario {:?}: horizon_steps", s.name), e.to_string()),
                other => other,
            })?;
            Ok((s, ev))
        })
        .collect::<Result<_>>()?;

    let mut lines = vec![header("open_loop")];
    for (_, ev) in &evals {
        let name = Some(ev.scenario.as_str());
        for p in &ev.proposals {
            lines.push(record("proposal", name, p));
        }
        for f in &ev.finalists {
            lines.push(record("finalist", name, f));
        }
        let sel = ev.selected_record();
        lines.push(record(
            "selection",
            name,
            &json!({
                "selected": ev.selected,
                "proposal_pick": ev.proposal_pick,
                "shortlist": ev.shortlist,
                "sub": sel.sub,
                "pdms": sel.pdms,
                "epdms": sel.epdms,
                "expert": ev.expert,
            }),
        ));
    }
    let mut jsonl = lines.join("\n");
    jsonl.push('\n');
    write_file(&out_dir.join("results.jsonl"), &jsonl)?;
    write_file(&out_dir.join("summary.txt"), &open_loop_summary(&evals))?;
    if render {
        for (s, ev) in &evals {
            write_file(&out_dir.join(format!("{}.svg", file_stem(&s.name))), &render_svg(s, Some(ev)))?;
        }
    }
    println!("evaluated {} scenario(s) into {}", evals.len(), out_dir.display());
    Ok(())
}

fn closed_loop_summary(results: &[EpisodeResult], ds: f64, sr: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<32} {:>7} {:>7} {:<16} infractions", "route", "RC", "DS", "terminal");
    for r in results {
        let inf: Vec<String> = r
            .infractions
            .iter()
            .map(|i| format!("{}@{}", serde_json::to_value(i.kind).expect("kind serializes").as_str().unwrap_or(""), i.step))
            .collect();
        let terminal = serde_json::to_value(r.terminal).expect("terminal serializes");
        let _ = writeln!(
            out,
            "{:<32} {:>7.2} {:>7.2} {:<16} {}",
            r.route,
            r.rc,
            r.ds,
            terminal.as_str().unwrap_or(""),
            if inf.is_empty() { "-".to_string() } else { inf.join(" ") }
        );
    }
    let _ = writeln!(out, "DS {ds:.2}  SR(%) {:.1}  routes {}", sr * 100.0, results.len());
    out
}

pub fn cmd_eval_closed_loop(a: &ClosedLoopArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    if let Some(n) = a.exec_steps {
        cfg.closed_loop.exec_steps = n;
        cfg.validate()?;
    }
    let anchors = require_anchors(&cfg)?;
    let out_dir = require_out_dir(&a.out_dir, &cfg)?;
    let routes = load_suite(&a.suite)?;
    for r in &routes {
        if r.scenario.horizon_steps != anchors.horizon() {
            return Err(Error::invalid(
                format!("route {:?}: horizon_steps", r.name),
                format!("scenario has {} steps but the anchors have {}", r.scenario.horizon_steps, anchors.horizon()),
            ));
        }
    }
    let results: Vec<EpisodeResult> = routes
        .par_iter()
        .map(|r| {
            let mut planner = PipelinePlanner {
                anchors: &anchors,
                config: cfg.pipeline,
            };
            run_episode(r, &mut planner, &cfg.closed_loop)
        })
        .collect::<Result<_>>()?;
    let ds = driving_score(&results)?;
    let sr = success_rate(&results)?;

    let mut lines = vec![header("closed_loop")];
    lines.extend(results.iter().map(|r| record("episode", None, r)));
    lines.push(record("aggregate", None, &json!({"routes": results.len(), "ds": ds, "sr": sr})));
    let mut jsonl = lines.join("\n");
    jsonl.push('\n');
    write_file(&out_dir.join("results.jsonl"), &jsonl)?;
    write_file(&out_dir.join("summary.txt"), &closed_loop_summary(&results, ds, sr))?;
    println!("DS {ds:.2}  SR(%) {:.1} over {} route(s)", sr * 100.0, results.len());
    Ok(())
}

pub fn cmd_render(a: &RenderArgs) -> Result<()> {
    let cfg = resolve(&a.common)?;
    let scenario = load_scenario_file(&a.scenario)?;
    let ev = match &cfg.anchors {
        Some(p) => Some(evaluate(&scenario, &load_anchors(p)?, &cfg.pipeline)?),
        None => None,
    };
    write_file(&a.out, &render_svg(&scenario, ev.as_ref()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_flag_parses() {
        assert_eq!(parse_range("1.5, 3").unwrap(), Range::new(1.5, 3.0));
        assert!(parse_range("3").is_err());
        assert!(parse_range("a,b").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_from(["trajsafe", "no-such-command"]), 2);
        assert_eq!(run_from(["trajsafe", "fit-anchors", "--k", "x"]), 2);
        assert_eq!(run_from(["trajsafe", "--help"]), 0);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("a/b c.d"), "a_b_c.d");
    }
}
