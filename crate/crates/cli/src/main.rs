//! `graphnls`: spectra, curvature certificates, inequality checks,
//! Trudinger–Moser estimates and mountain-pass solves on weighted graphs.
//!
//! Every subcommand writes one JSON report. Exit status is 0 on success,
//! 1 on invalid input and 2 when a numerical method did not converge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use graphnls::corpus::{self, CorpusConfig, Family};
use graphnls::curvature::{self, CdForms, CdParams};
use graphnls::inequality::{self, InequalityError};
use graphnls::nls::{
    self, Mode, MountainPassOptions, NlsError, PowerNonlinearity, SolveStatus, StartChoice,
};
use graphnls::spectral::{self, SpectralError};
use graphnls::{
    AscentOptions, EnergyConvention, VertexFunction, VertexSubsetProblem, WeightedGraph,
};

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "graphnls",
    version,
    about = "Calculus, curvature and semilinear solvers on weighted graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Report path (default: stdout).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance override for the chosen subcommand.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Eigenpairs of -Lap.
    Spectrum(GraphArg),
    /// Verify CD(m, xi) or search for the best xi.
    Curvature(CurvatureArgs),
    /// Eigenvalue and integral inequalities.
    Check(CheckArgs),
    /// Trudinger–Moser supremum estimate.
    Tm(TmArgs),
    /// Mountain-pass solve of -Lap u - alpha u = f(x, u).
    Solve(SolveArgs),
    /// Invariant sweep over the built-in graph families.
    Corpus(CorpusArgs),
}

#[derive(Args, Debug, Serialize)]
struct GraphArg {
    /// Graph file (.json or .txt/.edges edge list).
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CurvatureArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    #[arg(long, conflicts_with_all = ["best_xi", "lin_yau"])]
    xi: Option<f64>,
    #[arg(long)]
    best_xi: bool,
    /// Check the universal certificate CD(2, 2/d - 1).
    #[arg(long, conflicts_with = "best_xi")]
    lin_yau: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Ineq {
    LambdaBound,
    Theorem2,
    NormEquiv,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, value_enum)]
    ineq: Ineq,
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    /// Curvature bound (default: best certified xi).
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
}

#[derive(Args, Debug, Serialize)]
struct TmArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyArg {
    Power,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Whole,
    Dirichlet,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ConventionArg {
    DirichletEnergy,
    GradSq,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StartArg {
    Eigenfunction,
    Ones,
    Random,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "power")]
    family: FamilyArg,
    #[arg(long)]
    q: f64,
    /// Coefficient a(x): a constant or a path to a vertex-function JSON file.
    #[arg(long, default_value = "1")]
    coef: String,
    #[arg(long, value_enum, default_value = "whole")]
    mode: ModeArg,
    /// Interior vertex labels for Dirichlet mode, comma separated.
    #[arg(long, value_delimiter = ',')]
    interior: Vec<String>,
    #[arg(long, value_enum, default_value = "dirichlet-energy")]
    convention: ConventionArg,
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
    #[arg(long, default_value_t = 40)]
    path_points: usize,
    #[arg(long, default_value_t = 5000)]
    max_steps: usize,
    #[arg(long, value_enum, default_value = "eigenfunction")]
    start: StartArg,
    /// Sobolev exponent for the hypothesis report.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct CorpusArgs {
    /// Comma-separated families (path, cycle, complete, star, random).
    #[arg(long)]
    families: Option<String>,
    #[arg(long, default_value_t = 50)]
    random_count: usize,
    #[arg(long, default_value_t = 20)]
    random_max_n: usize,
    /// Include the Trudinger–Moser bound check (slow).
    #[arg(long)]
    tm: bool,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NoConvergence { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<InequalityError> for Failure {
    fn from(e: InequalityError) -> Self {
        match e {
            InequalityError::Spectral(s) => s.into(),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<NlsError> for Failure {
    fn from(e: NlsError) -> Self {
        match e {
            NlsError::NoDescentEndpoint { .. }
            | NlsError::DegenerateCriticalPoint { .. }
            | NlsError::NotConverged { .. } => Failure::Numerical(e.to_string()),
            NlsError::Spectral(s) => s.into(),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

/// Result payload plus whether the numerics converged.
struct Outcome {
    result: Value,
    converged: bool,
    graph: Option<WeightedGraph>,
}

fn load_graph(arg: &GraphArg) -> Result<WeightedGraph, Failure> {
    WeightedGraph::load(&arg.graph)
        .map_err(|e| Failure::Invalid(format!("graph '{}': {e}", arg.graph.display())))
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Invalid(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn graph_hash(g: &WeightedGraph) -> String {
    hex::encode(Sha256::digest(g.to_json_string().as_bytes()))
}

fn labeled(g: &WeightedGraph, u: &VertexFunction) -> Value {
    Value::Object(u.to_labeled(g))
}

fn spectrum(arg: &GraphArg) -> Result<Outcome, Failure> {
    let g = load_graph(arg)?;
    let pairs = spectral::spectrum(&g)?;
    let list: Vec<Value> = pairs
        .iter()
        .map(|p| {
            json!({
                "lambda": p.lambda,
                "rayleigh_grad_sq": 2.0 * p.lambda,
                "residual": p.residual,
                "cluster": p.cluster,
                "function": labeled(&g, &p.u),
            })
        })
        .collect();
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    Ok(Outcome {
        result: json!({"eigenvalues": eigenvalues, "pairs": list}),
        converged: true,
        graph: Some(g),
    })
}

fn curvature_cmd(args: &CurvatureArgs) -> Result<Outcome, Failure> {
    let g = load_graph(&args.graph)?;
    if !(args.m > 1.0) {
        return Err(Failure::Invalid(format!(
            "--m must exceed 1, got {}",
            args.m
        )));
    }
    let forms = CdForms::new(&g);
    let result = if args.best_xi {
        let xi = forms.best_xi(args.m);
        json!({"best_xi": xi, "certificate": forms.certificate(&g, args.m, xi)})
    } else if args.lin_yau {
        let p = curvature::lin_yau_certificate(&g);
        json!({"d": g.sup_degree_ratio(), "certificate": forms.certificate(&g, p.m, p.xi)})
    } else {
        let xi = args.xi.ok_or_else(|| {
            Failure::Invalid("one of --xi, --best-xi or --lin-yau is required".into())
        })?;
        if !xi.is_finite() {
            return Err(Failure::Invalid(format!("--xi must be finite, got {xi}")));
        }
        json!({"certificate": forms.certificate(&g, args.m, xi)})
    };
    Ok(Outcome {
        result,
        converged: true,
        graph: Some(g),
    })
}

fn check(args: &CheckArgs) -> Result<Outcome, Failure> {
    let g = load_graph(&args.graph)?;
    if !(args.m > 1.0) {
        return Err(Failure::Invalid(format!(
            "--m must exceed 1, got {}",
            args.m
        )));
    }
    let forms = CdForms::new(&g);
    let xi = args.xi.unwrap_or_else(|| forms.best_xi(args.m));
    let certified = forms.holds(args.m, xi);
    let pairs = spectral::spectrum(&g)?;
    let result = match args.ineq {
        Ineq::LambdaBound => {
            let reports = spectral::nonzero_pairs(&pairs)
                .map(|p| inequality::check_lambda_bound(p.lambda, args.m, xi))
                .collect::<Result<Vec<_>, _>>()?;
            let comparison = inequality::compare_alpha_star(pairs[1].lambda, args.m, xi).ok();
            json!({"xi": xi, "cd_certified": certified, "reports": reports, "alpha_star": comparison})
        }
        Ineq::Theorem2 => {
            let reports = spectral::nonzero_pairs(&pairs)
                .map(|p| inequality::check_theorem2_certified(&g, p, args.m, xi, certified))
                .collect::<Result<Vec<_>, _>>()?;
            json!({"xi": xi, "cd_certified": certified, "reports": reports})
        }
        Ineq::NormEquiv => {
            let eq =
                inequality::norm_equivalence(&g, args.alpha, Some(CdParams { m: args.m, xi }))?;
            json!({"xi": xi, "cd_certified": certified, "norm_equivalence": eq})
        }
    };
    Ok(Outcome {
        result,
        converged: true,
        graph: Some(g),
    })
}

fn tm(args: &TmArgs, seed: u64, tol: Option<f64>) -> Result<Outcome, Failure> {
    let g = load_graph(&args.graph)?;
    if args.starts == 0 {
        return Err(Failure::Invalid("--starts must be at least 1".into()));
    }
    let mut opts = AscentOptions {
        starts: args.starts,
        seed,
        ..Default::default()
    };
    if let Some(t) = tol {
        opts.tol = t;
    }
    let est = inequality::tm_sup_estimate(&g, args.beta, args.p, &opts)?;
    let converged = est.converged;
    let maximizer = labeled(&g, &est.maximizer);
    let mut result = serde_json::to_value(&est).expect("estimate serializes");
    result["maximizer"] = maximizer;
    Ok(Outcome {
        result,
        converged,
        graph: Some(g),
    })
}

fn coefficient(g: &WeightedGraph, spec: &str) -> Result<Vec<f64>, Failure> {
    if let Ok(c) = spec.parse::<f64>() {
        return Ok(vec![c; g.len()]);
    }
    VertexFunction::load(g, spec)
        .map(VertexFunction::into_vec)
        .map_err(|e| Failure::Invalid(format!("--coef '{spec}': {e}")))
}

fn solve(args: &SolveArgs, seed: u64, tol: Option<f64>) -> Result<Outcome, Failure> {
    let g = load_graph(&args.graph)?;
    let FamilyArg::Power = args.family;
    let f = PowerNonlinearity::new(args.q, coefficient(&g, &args.coef)?)?;
    let mode = match args.mode {
        ModeArg::Whole => {
            if !args.interior.is_empty() {
                return Err(Failure::Invalid(
                    "--interior only applies to --mode dirichlet".into(),
                ));
            }
            Mode::Whole
        }
        ModeArg::Dirichlet => Mode::Dirichlet(
            VertexSubsetProblem::from_labels(&g, &args.interior)
                .map_err(|e| Failure::Invalid(format!("--interior {:?}: {e}", args.interior)))?,
        ),
    };
    let convention = match args.convention {
        ConventionArg::DirichletEnergy => EnergyConvention::DirichletEnergy,
        ConventionArg::GradSq => EnergyConvention::GradSq,
    };
    let opts = MountainPassOptions {
        path_points: args.path_points,
        max_steps: args.max_steps,
        tol: tol.unwrap_or(1e-10),
        grad_tol: positive("--grad-tol", args.grad_tol)?,
        seed,
        start: match args.start {
            StartArg::Eigenfunction => StartChoice::Eigenfunction,
            StartArg::Ones => StartChoice::Ones,
            StartArg::Random => StartChoice::Random,
        },
        ..Default::default()
    };
    let sol = nls::mountain_pass_solve(&g, args.alpha, &f, &mode, convention, &opts)?;
    let verification = nls::verify_solution(&g, &sol.u, args.alpha, &f, &mode, convention);
    let hypotheses = args.p.map(|p| nls::check_hypotheses(&f, p)).transpose()?;
    let converged = sol.status != SolveStatus::NotConverged;
    let u = labeled(&g, &sol.u);
    let mut solution = serde_json::to_value(&sol).expect("solution serializes");
    solution["u"] = u;
    Ok(Outcome {
        result: json!({"solution": solution, "verification": verification, "hypotheses": hypotheses}),
        converged,
        graph: Some(g),
    })
}

fn corpus_cmd(args: &CorpusArgs, seed: u64) -> Result<Outcome, Failure> {
    let families = match &args.families {
        None => Family::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                Family::parse(s)
                    .ok_or_else(|| Failure::Invalid(format!("--families: unknown family '{s}'")))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    if args.random_max_n < 2 {
        return Err(Failure::Invalid(format!(
            "--random-max-n must be at least 2, got {}",
            args.random_max_n
        )));
    }
    let cfg = CorpusConfig {
        families,
        random_count: args.random_count,
        random_max_n: args.random_max_n,
        seed,
        trudinger_moser: args.tm,
        ..Default::default()
    };
    let report = corpus::run_corpus(&cfg);
    let ok = report.all_passed();
    Ok(Outcome {
        result: serde_json::to_value(&report).expect("report serializes"),
        converged: ok,
        graph: None,
    })
}

fn run(cli: &Cli) -> Result<(Value, bool), Failure> {
    if let Some(t) = cli.tol {
        positive("--tol", t)?;
    }
    let out = match &cli.command {
        Command::Spectrum(a) => spectrum(a)?,
        Command::Curvature(a) => curvature_cmd(a)?,
        Command::Check(a) => check(a)?,
        Command::Tm(a) => tm(a, cli.seed, cli.tol)?,
        Command::Solve(a) => solve(a, cli.seed, cli.tol)?,
        Command::Corpus(a) => corpus_cmd(a, cli.seed)?,
    };
    let report = json!({
        "tool": "graphnls",
        "version": env!("CARGO_PKG_VERSION"),
        "graph_hash": out.graph.as_ref().map(graph_hash),
        "config": cli,
        "result": out.result,
    });
    Ok((report, out.converged))
}

fn emit(cli: &Cli, report: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    match &cli.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Invalid(format!("--output '{}': {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = run(&cli).and_then(|(report, converged)| {
        emit(&cli, &report)?;
        if converged {
            Ok(())
        } else {
            Err(Failure::Numerical(
                "numerical method did not converge; see report".into(),
            ))
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
