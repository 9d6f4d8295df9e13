//! Command-line front end. [`run`] parses arguments, does the work and
//! returns the process exit code: 0 on success, 1 when the input is invalid
//! or a computation fails, 2 on usage errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphcorr::format::fmt_num;
use graphcorr::inference::{
    complete_truths, fit_model, recovery_report, simulate_dataset, LongitudinalDataset, McmcOptions, ModelSpec,
    Scenario, Truths,
};
use graphcorr::pcprior::{pair_label, sample_prior_draws};
use graphcorr::{
    calibrate_lambda, children_correlation, correlation_oracle, parse_graph, CorrelationMatrix, DensityMode,
    GraphError, NodeId, PCPriorSpec, Parametrization, SequenceModel, SequentialPrior, TreeGraph, VarianceAssignment,
};
use serde_json::{json, Value};

const FORMATS: &str = "\
Graph files: one declaration per line, `latent NAME [: PARENT]` or
`child NAME : PARENT`; exactly one latent has no parent (the root); `#`
starts a comment. Variances: `--var p1=8,p2=1` or a JSON object file
`{\"p1\": 8, \"p2\": 1}`. CSV output uses `.` as decimal separator and 12
significant digits. See FORMATS.md for every file layout.

Exit status: 0 success, 1 invalid input or failed computation, 2 usage error.";

#[derive(Parser, Debug)]
#[command(
    name = "graphcorr",
    version,
    about = "Correlation matrices from latent trees, sequential PC priors and graph-structured mixed models",
    after_help = FORMATS
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a graph file and list every violated invariant
    Validate(ValidateArgs),
    /// Correlation matrix of the children at given variances
    Corr(CorrArgs),
    /// Contraction sequence with the correlation matrix of each model
    Sequence(SequenceArgs),
    /// Joint log prior of a variance assignment, step by step
    PriorEval(PriorEvalArgs),
    /// Draws from the sequential prior as JSON lines
    PriorSample(PriorSampleArgs),
    /// Deciles of the prior-induced correlations for a grid of rates
    Calibrate(CalibrateArgs),
    /// Simulate a longitudinal dataset
    Simulate(SimulateArgs),
    /// MAP fit plus adaptive Metropolis sampling of a dataset
    Fit(FitArgs),
}

#[derive(Args, Debug)]
struct GraphArg {
    /// Graph file in the declaration language
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
}

#[derive(Args, Debug)]
struct VarArgs {
    /// Latent variances, e.g. `p1=8,p2=1`
    #[arg(long, value_name = "NAME=VALUE,...")]
    var: Option<String>,
    /// JSON object of latent variances
    #[arg(long, value_name = "FILE")]
    var_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Write to this file instead of standard output
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OrderArg {
    /// Removal order of the latents, root last (default: reverse declaration order)
    #[arg(long, value_name = "NAME,...")]
    order: Option<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ValidateFormat {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Approximate,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Param {
    Variance,
    LogVariance,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Markdown,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ScenarioName {
    Linear,
    Cubic,
}

impl ScenarioName {
    fn load(self) -> Scenario {
        match self {
            ScenarioName::Linear => Scenario::linear(),
            ScenarioName::Cubic => Scenario::cubic(),
        }
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Output format
    #[arg(long, value_enum, default_value = "text")]
    format: ValidateFormat,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct CorrArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[command(flatten)]
    vars: VarArgs,
    /// Use the path rule instead of inverting the precision matrix
    #[arg(long)]
    oracle: bool,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct SequenceArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[command(flatten)]
    vars: VarArgs,
    #[command(flatten)]
    order: OrderArg,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct PriorEvalArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[command(flatten)]
    vars: VarArgs,
    /// Rate of the exponential prior on each distance
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    #[command(flatten)]
    order: OrderArg,
    /// Exact distance or its first-order approximation
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// Density of the variance or of its logarithm
    #[arg(long, value_enum, default_value = "variance")]
    param: Param,
    /// Output format
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct PriorSampleArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Rate of the exponential prior on each distance
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    /// Number of draws
    #[arg(short = 'n', long = "samples", value_name = "N")]
    n: usize,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    order: OrderArg,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Rates to tabulate
    #[arg(long, value_name = "L,...", default_value = "1,2,5,10")]
    lambdas: String,
    /// Draws per rate
    #[arg(short = 'n', long = "samples", value_name = "N", default_value_t = 10_000)]
    n: usize,
    /// Fix every latent except the first removed at variance sd² and sample only the first step, once per sd
    #[arg(long, value_name = "SD,...")]
    conditioning_sd: Option<String>,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    order: OrderArg,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Built-in design with its true values
    #[arg(long, value_enum, conflicts_with_all = ["spec", "truths"], required_unless_present = "spec")]
    scenario: Option<ScenarioName>,
    /// Model specification (JSON)
    #[arg(long, value_name = "FILE", requires = "truths")]
    spec: Option<PathBuf>,
    /// True values (JSON object keyed by parameter name)
    #[arg(long, value_name = "FILE")]
    truths: Option<PathBuf>,
    /// Number of individuals (default: the scenario's, else 200)
    #[arg(short = 'n', long = "individuals", value_name = "N")]
    n: Option<usize>,
    /// Measurement times (default: 0,1,...,10)
    #[arg(long, value_name = "T,...")]
    times: Option<String>,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the drawn random effects as CSV
    #[arg(long, value_name = "FILE")]
    effects: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Dataset CSV
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Built-in design; its true values feed the recovery report
    #[arg(long, value_enum, conflicts_with = "spec", required_unless_present = "spec")]
    scenario: Option<ScenarioName>,
    /// Model specification (JSON)
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// True values for the recovery report (JSON object)
    #[arg(long, value_name = "FILE")]
    truths: Option<PathBuf>,
    /// Rate of the PC prior
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    #[command(flatten)]
    order: OrderArg,
    /// MCMC iterations, 40% of which are burn-in
    #[arg(long, default_value_t = 5000)]
    iter: usize,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recovery report file (needs true values)
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Recovery report format
    #[arg(long, value_enum, default_value = "markdown")]
    report_format: ReportFormat,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Invalid(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) => m,
        }
    }
}

impl From<graphcorr::Error> for Failure {
    fn from(e: graphcorr::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

/// Files to write once everything has succeeded, and text for stdout.
#[derive(Default)]
struct Output {
    stdout: String,
    files: Vec<(PathBuf, String)>,
    code: i32,
}

impl Output {
    fn emit(&mut self, out: &OutArg, text: String) {
        match &out.out {
            Some(p) => self.files.push((p.clone(), text)),
            None => self.stdout.push_str(&text),
        }
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code. Nothing is written to disk unless the whole command succeeds.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                2
            } else {
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Corr(a) => corr(a),
        Command::Sequence(a) => sequence(a),
        Command::PriorEval(a) => prior_eval(a),
        Command::PriorSample(a) => prior_sample(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
    };
    match result.and_then(|o| commit(&o).map(|_| o)) {
        Ok(o) => {
            let _ = stdout.write_all(o.stdout.as_bytes());
            o.code
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

/// Writes every output file through a temporary sibling and a rename.
fn commit(o: &Output) -> Outcome<()> {
    let mut staged = Vec::new();
    for (path, text) in &o.files {
        let tmp = temp_sibling(path);
        if let Err(e) = fs::write(&tmp, text) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(Failure::Invalid(format!("cannot write {}: {e}", path.display())));
        }
        staged.push(tmp);
    }
    for ((path, _), tmp) in o.files.iter().zip(&staged) {
        fs::rename(tmp, path).map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn load_graph(arg: &GraphArg) -> Outcome<TreeGraph> {
    let text = read(&arg.graph)?;
    parse_graph(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", arg.graph.display())))
}

fn load_json(path: &Path) -> Outcome<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_variances(args: &VarArgs) -> Outcome<VarianceAssignment> {
    let inline = match &args.var {
        Some(s) => Some(VarianceAssignment::parse_inline(s).map_err(|e| Failure::Usage(format!("--var: {e}")))?),
        None => None,
    };
    let file: Option<VarianceAssignment> = match &args.var_file {
        Some(p) => Some(
            serde_json::from_value(load_json(p)?)
                .map_err(|e| Failure::Invalid(format!("{}: expected an object of numbers: {e}", p.display())))?,
        ),
        None => None,
    };
    match (inline, file) {
        (None, None) => Err(Failure::Usage("give variances with --var or --var-file".into())),
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (Some(a), Some(b)) => {
            let mut merged = b;
            for (k, v) in a.iter() {
                if let Some(old) = merged.get(k.as_str()) {
                    if old != v {
                        return Err(Failure::Usage(format!(
                            "`{k}` is {} in --var but {} in --var-file",
                            fmt_num(v),
                            fmt_num(old)
                        )));
                    }
                }
                merged.insert(k.clone(), v);
            }
            Ok(merged)
        }
    }
}

fn parse_order(arg: &OrderArg) -> Outcome<Option<Vec<NodeId>>> {
    arg.order
        .as_ref()
        .map(|s| {
            s.split(',')
                .map(|n| NodeId::new(n.trim()).map_err(|e| Failure::Usage(format!("--order: {e}"))))
                .collect()
        })
        .transpose()
}

fn parse_list(flag: &str, s: &str) -> Outcome<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Failure::Usage(format!("{flag}: `{x}` is not a number"))))
        .collect()
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn validate(a: ValidateArgs) -> Outcome<Output> {
    let text = read(&a.graph.graph)?;
    let (violations, summary): (Vec<(String, String)>, Option<(usize, usize)>) = match parse_graph(&text) {
        Ok(g) => (Vec::new(), Some((g.latent_count(), g.child_count()))),
        Err(GraphError::Invalid(vs)) => (vs.iter().map(|v| (v.kind().to_string(), v.to_string())).collect(), None),
        Err(e) => (vec![("syntax".into(), e.to_string())], None),
    };
    let mut o = Output::default();
    let body = match a.format {
        ValidateFormat::Text => match summary {
            Some((p, k)) => format!("valid: {p} latents, {k} children\n"),
            None => violations.iter().map(|(_, m)| format!("{m}\n")).collect(),
        },
        ValidateFormat::Json => json_text(&json!({
            "valid": violations.is_empty(),
            "violations": violations.iter().map(|(k, m)| json!({"kind": k, "message": m})).collect::<Vec<_>>(),
        })),
    };
    o.emit(&a.out, body);
    o.code = if violations.is_empty() { 0 } else { 1 };
    Ok(o)
}

fn matrix_text(c: &CorrelationMatrix, format: Format) -> String {
    match format {
        Format::Csv => c.to_csv(),
        Format::Json => json_text(&c.to_json()),
    }
}

fn corr(a: CorrArgs) -> Outcome<Output> {
    let g = load_graph(&a.graph)?;
    let v = load_variances(&a.vars)?;
    let c = if a.oracle {
        correlation_oracle(&g, &v)?
    } else {
        children_correlation(&g, &v)?
    };
    let mut o = Output::default();
    o.emit(&a.out, matrix_text(&c, a.format));
    Ok(o)
}

fn sequence(a: SequenceArgs) -> Outcome<Output> {
    let g = load_graph(&a.graph)?;
    let v = load_variances(&a.vars)?;
    v.for_graph(&g)?;
    let order = parse_order(&a.order)?;
    let seq = g.contract(order.as_deref())?;
    let mut rows = Vec::new();
    for (k, m) in seq.models().iter().enumerate() {
        let c = match m {
            SequenceModel::Graph(h) => children_correlation(h, &v)?,
            SequenceModel::Identity { children } => CorrelationMatrix::identity(children.clone()),
        };
        let latents: Vec<String> = m.graph().map_or(Vec::new(), |h| h.latents().iter().map(|l| l.to_string()).collect());
        rows.push((k, latents, seq.removal_order().get(k).map(|n| n.to_string()), m.graph().map(|h| h.to_dsl()), c));
    }
    let text = match a.format {
        Format::Csv => {
            let mut s = String::from("model,latents,removed,a,b,rho\n");
            for (k, latents, removed, _, c) in &rows {
                for i in 0..c.dim() {
                    for j in i + 1..c.dim() {
                        s.push_str(&format!(
                            "{k},{},{},{},{},{}\n",
                            latents.join(" "),
                            removed.clone().unwrap_or_default(),
                            c.order()[i],
                            c.order()[j],
                            fmt_num(c.matrix()[(i, j)])
                        ));
                    }
                }
            }
            s
        }
        Format::Json => json_text(&Value::Array(
            rows.iter()
                .map(|(k, latents, removed, dsl, c)| {
                    let mut m = c.to_json();
                    m["model"] = json!(k);
                    m["latents"] = json!(latents);
                    m["removed"] = json!(removed);
                    m["graph"] = json!(dsl);
                    m
                })
                .collect(),
        )),
    };
    let mut o = Output::default();
    o.emit(&a.out, text);
    Ok(o)
}

fn prior_spec(lambda: f64, order: &OrderArg, mode: DensityMode) -> Outcome<PCPriorSpec> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Failure::Usage(format!("--lambda must be > 0, got {lambda}")));
    }
    Ok(PCPriorSpec {
        lambda,
        removal_order: parse_order(order)?,
        mode,
    })
}

fn prior_eval(a: PriorEvalArgs) -> Outcome<Output> {
    let g = load_graph(&a.graph)?;
    let v = load_variances(&a.vars)?;
    let mode = match a.mode {
        Mode::Exact => DensityMode::Exact,
        Mode::Approximate => DensityMode::Approximate,
    };
    let param = match a.param {
        Param::Variance => Parametrization::Variance,
        Param::LogVariance => Parametrization::LogVariance,
    };
    let spec = prior_spec(a.lambda, &a.order, mode)?;
    let prior = SequentialPrior::new(&g, &spec)?;
    let q2 = v.for_graph(&g)?;
    prior.probe_monotone(&q2)?;
    let total = prior.log_density(&q2, param)?;
    let mut steps = prior.breakdown(&q2)?;
    if param == Parametrization::LogVariance {
        for s in &mut steps {
            s.log_density += s.variance.ln();
        }
    }
    let text = match a.format {
        Format::Json => json_text(&json!({
            "lambda": a.lambda,
            "mode": mode,
            "parametrization": param,
            "log_prior": total,
            "steps": steps,
        })),
        Format::Csv => {
            let mut s = String::from("removed,conditioning,variance,distance,log_density\n");
            for t in &steps {
                let cond: Vec<&str> = t.conditioning.iter().map(NodeId::as_str).collect();
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    t.removed,
                    cond.join(" "),
                    fmt_num(t.variance),
                    fmt_num(t.distance),
                    fmt_num(t.log_density)
                ));
            }
            s.push_str(&format!("total,,,,{}\n", fmt_num(total)));
            s
        }
    };
    let mut o = Output::default();
    o.emit(&a.out, text);
    Ok(o)
}

fn prior_sample(a: PriorSampleArgs) -> Outcome<Output> {
    let g = load_graph(&a.graph)?;
    let spec = prior_spec(a.lambda, &a.order, DensityMode::Exact)?;
    SequentialPrior::new(&g, &spec)?.probe_monotone(&vec![1.0; g.latent_count()])?;
    let draws = sample_prior_draws(&g, &spec, a.n, a.seed)?;
    let groups = g.pair_groups();
    let mut text = String::new();
    for d in &draws {
        let c = correlation_oracle(&g, &d.variances)?;
        let rho: BTreeMap<String, f64> = groups
            .iter()
            .map(|gr| {
                let (i, j) = gr.pairs[0];
                (pair_label(&g.children()[i], &g.children()[j]), c.matrix()[(i, j)])
            })
            .collect();
        let line = json!({"variances": d.variances, "distances": d.distances, "correlations": rho});
        text.push_str(&serde_json::to_string(&line).expect("values serialize"));
        text.push('\n');
    }
    let mut o = Output::default();
    o.emit(&a.out, text);
    Ok(o)
}

fn calibrate(a: CalibrateArgs) -> Outcome<Output> {
    let g = load_graph(&a.graph)?;
    let lambdas = parse_list("--lambdas", &a.lambdas)?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Failure::Usage("--lambdas needs positive rates".into()));
    }
    let sds = match &a.conditioning_sd {
        Some(s) => parse_list("--conditioning-sd", s)?,
        None => Vec::new(),
    };
    let order = parse_order(&a.order)?;
    for &lambda in &lambdas {
        let prior = SequentialPrior::new(&g, &PCPriorSpec { lambda, removal_order: order.clone(), mode: DensityMode::Exact })?;
        if sds.is_empty() {
            prior.probe_monotone(&vec![1.0; g.latent_count()])?;
        }
        for sd in &sds {
            prior.probe_monotone(&vec![sd * sd; g.latent_count()])?;
        }
    }
    let table = calibrate_lambda(&g, &lambdas, a.n, &sds, order.as_deref(), a.seed)?;
    let text = match a.format {
        Format::Csv => table.to_csv(),
        Format::Json => json_text(&table.to_json()),
    };
    let mut o = Output::default();
    o.emit(&a.out, text);
    Ok(o)
}

fn load_spec(path: &Path) -> Outcome<ModelSpec> {
    let spec: ModelSpec = serde_json::from_value(load_json(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    spec.check()?;
    Ok(spec)
}

fn load_truths(path: &Path) -> Outcome<Truths> {
    serde_json::from_value(load_json(path)?)
        .map_err(|e| Failure::Invalid(format!("{}: expected an object of numbers: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> Outcome<Output> {
    let (spec, truths, n_default, times_default) = match (a.scenario, &a.spec, &a.truths) {
        (Some(s), _, _) => {
            let sc = s.load();
            (sc.spec, sc.truths, sc.n_individuals, sc.times)
        }
        (None, Some(spec), Some(truths)) => {
            (load_spec(spec)?, load_truths(truths)?, 200, (0..=10).map(f64::from).collect())
        }
        _ => return Err(Failure::Usage("give --scenario, or --spec with --truths".into())),
    };
    let times = match &a.times {
        Some(t) => parse_list("--times", t)?,
        None => times_default,
    };
    let n = a.n.unwrap_or(n_default);
    let sim = simulate_dataset(&spec, &truths, n, &times, a.seed)?;
    let mut o = Output::default();
    o.emit(&a.out, sim.dataset.to_csv_string());
    if let Some(path) = &a.effects {
        let mut s = String::from("id");
        for c in spec.graph.children() {
            s.push(',');
            s.push_str(c.as_str());
        }
        s.push('\n');
        for (ind, b) in sim.dataset.individuals.iter().zip(&sim.random_effects) {
            s.push_str(&ind.id);
            for v in b.iter() {
                s.push(',');
                s.push_str(&fmt_num(*v));
            }
            s.push('\n');
        }
        o.files.push((path.clone(), s));
    }
    Ok(o)
}

fn fit(a: FitArgs) -> Outcome<Output> {
    let (spec, scenario_truths) = match (a.scenario, &a.spec) {
        (Some(s), _) => {
            let sc = s.load();
            (sc.spec, Some(sc.truths))
        }
        (None, Some(p)) => (load_spec(p)?, None),
        (None, None) => return Err(Failure::Usage("give --scenario or --spec".into())),
    };
    let truths = match &a.truths {
        Some(p) => Some(load_truths(p)?),
        None => scenario_truths,
    };
    if a.report.is_some() && truths.is_none() {
        return Err(Failure::Usage("--report needs --truths or --scenario".into()));
    }
    if a.iter == 0 {
        return Err(Failure::Usage("--iter must be at least 1".into()));
    }
    let file = fs::File::open(&a.data).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", a.data.display())))?;
    let data = LongitudinalDataset::read_csv(file).map_err(|e| Failure::Invalid(format!("{}: {e}", a.data.display())))?;
    let prior = prior_spec(a.lambda, &a.order, DensityMode::Exact)?;
    let opts = McmcOptions {
        n_iter: a.iter,
        seed: a.seed,
        ..McmcOptions::default()
    };
    let (map, result) = fit_model(&data, &spec, &prior, &opts)?;
    let mut body = serde_json::to_value(&result).expect("fit result serializes");
    body["map_iterations"] = json!(map.iterations);
    body["map_grad_norm"] = json!(map.grad_norm);
    let mut o = Output::default();
    if let (Some(path), Some(t)) = (&a.report, &truths) {
        let full = complete_truths(&spec, t)?;
        let report = recovery_report(&full, &result)?;
        let text = match a.report_format {
            ReportFormat::Markdown => report.to_markdown(),
            ReportFormat::Csv => report.to_csv(),
        };
        o.files.push((path.clone(), text));
    }
    o.emit(&a.out, json_text(&body));
    Ok(o)
}
