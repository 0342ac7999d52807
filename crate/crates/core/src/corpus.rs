//! Built-in graph families and the invariant sweep over them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ascent::{self, AscentOptions};
use crate::calculus::{self, Gamma2Form};
use crate::curvature::{self, CdForms};
use crate::graph::WeightedGraph;
use crate::inequality;
use crate::par;
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Path,
    Cycle,
    Complete,
    Star,
    Random,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Path,
        Family::Cycle,
        Family::Complete,
        Family::Star,
        Family::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Path => "path",
            Family::Cycle => "cycle",
            Family::Complete => "complete",
            Family::Star => "star",
            Family::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub families: Vec<Family>,
    pub random_count: usize,
    pub random_max_n: usize,
    pub weight_range: (f64, f64),
    pub seed: u64,
    /// Also compare the Trudinger–Moser estimate with its bound (slow).
    pub trudinger_moser: bool,
    pub functions_per_graph: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            random_count: 50,
            random_max_n: 20,
            weight_range: (0.1, 10.0),
            seed: 0,
            trudinger_moser: false,
            functions_per_graph: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub index: usize,
    pub family: Family,
    pub name: String,
    /// Generator seed for random graphs.
    pub seed: Option<u64>,
    pub graph: WeightedGraph,
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

fn unit(edges: Vec<(usize, usize)>) -> Vec<(String, String, f64)> {
    edges
        .into_iter()
        .map(|(a, b)| (format!("v{a}"), format!("v{b}"), 1.0))
        .collect()
}

pub fn path(n: usize) -> WeightedGraph {
    WeightedGraph::new(&labels(n), &unit((1..n).map(|i| (i - 1, i)).collect())).expect("valid path")
}

pub fn cycle(n: usize) -> WeightedGraph {
    WeightedGraph::new(
        &labels(n),
        &unit((0..n).map(|i| (i, (i + 1) % n)).collect()),
    )
    .expect("valid cycle")
}

pub fn complete(n: usize) -> WeightedGraph {
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    WeightedGraph::new(&labels(n), &unit(edges)).expect("valid complete graph")
}

/// Star on `n` vertices: `v0` joined to `n - 1` leaves.
pub fn star(n: usize) -> WeightedGraph {
    WeightedGraph::new(&labels(n), &unit((1..n).map(|i| (0, i)).collect())).expect("valid star")
}

/// Random spanning tree on `n` vertices plus each remaining pair with
/// probability `0.2`; weights uniform in `[lo, hi]`.
pub fn random_connected(n: usize, lo: f64, hi: f64, seed: u64) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i], order[j]);
        adj[a][b] = true;
        adj[b][a] = true;
        edges.push((a, b));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !adj[a][b] && rng.gen_bool(0.2) {
                edges.push((a, b));
            }
        }
    }
    let edges: Vec<(String, String, f64)> = edges
        .into_iter()
        .map(|(a, b)| (format!("v{a}"), format!("v{b}"), rng.gen_range(lo..=hi)))
        .collect();
    WeightedGraph::new(&labels(n), &edges).expect("spanning tree keeps the graph connected")
}

/// The corpus in index order.
pub fn build_corpus(cfg: &CorpusConfig) -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    let mut push = |family: Family, name: String, seed: Option<u64>, graph: WeightedGraph| {
        out.push(CorpusEntry {
            index: 0,
            family,
            name,
            seed,
            graph,
        })
    };
    for family in Family::ALL {
        if !cfg.families.contains(&family) {
            continue;
        }
        match family {
            Family::Path => (2..=10).for_each(|n| push(family, format!("path-{n}"), None, path(n))),
            Family::Cycle => {
                (3..=10).for_each(|n| push(family, format!("cycle-{n}"), None, cycle(n)))
            }
            Family::Complete => {
                (2..=8).for_each(|n| push(family, format!("complete-{n}"), None, complete(n)))
            }
            Family::Star => (3..=10).for_each(|n| push(family, format!("star-{n}"), None, star(n))),
            Family::Random => {
                let max_n = cfg.random_max_n.max(2);
                for i in 0..cfg.random_count {
                    let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                    let n = rng.gen_range(2..=max_n);
                    let (lo, hi) = cfg.weight_range;
                    push(
                        family,
                        format!("random-{i}"),
                        Some(seed),
                        random_connected(n, lo, hi, seed),
                    );
                }
            }
        }
    }
    for (i, e) in out.iter_mut().enumerate() {
        e.index = i;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryReport {
    pub index: usize,
    pub name: String,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub vertices: usize,
    pub edges: usize,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub passed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub entries: Vec<EntryReport>,
    pub summary: BTreeMap<&'static str, CheckSummary>,
    /// One line per failed check: graph, seed and violated invariant.
    pub failures: Vec<String>,
}

impl CorpusReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

/// Lin–Yau certificate `CD(2, 2/d - 1)`.
fn lin_yau(forms: &CdForms, g: &WeightedGraph) -> CheckResult {
    let p = curvature::lin_yau_certificate(g);
    let min = forms
        .min_eigs(p.m, p.xi)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    check(
        "lin-yau",
        min >= -curvature::PSD_TOL,
        format!("CD(2, {:.6}) min eigenvalue {min:.3e}", p.xi),
    )
}

fn identities(g: &WeightedGraph, functions: &[Vec<f64>]) -> Vec<CheckResult> {
    let mut gamma2_err = 0.0f64;
    let mut div_ratio = 0.0f64;
    let mut green_err = 0.0f64;
    for (k, u) in functions.iter().enumerate() {
        let a = calculus::gamma2(g, u, Gamma2Form::Iterated);
        let b = calculus::gamma2(g, u, Gamma2Form::Expanded);
        for (x, y) in a.iter().zip(b.iter()) {
            gamma2_err = gamma2_err.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
        }

        let lap = calculus::laplacian(g, u);
        let scale: f64 = g
            .edges()
            .iter()
            .map(|&(x, y, w)| 2.0 * w * (u[x] - u[y]).abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        div_ratio = div_ratio.max(calculus::integrate(g, &lap).abs() / scale);

        let v = &functions[(k + 1) % functions.len()];
        let lhs: f64 = (0..g.len()).map(|x| g.mu(x) * v[x] * lap[x]).sum();
        let rhs = -calculus::integrate(g, &calculus::gamma(g, u, v));
        let gscale: f64 = g
            .edges()
            .iter()
            .map(|&(x, y, w)| w * ((u[x] - u[y]) * (v[x] - v[y])).abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        green_err = green_err.max((lhs - rhs).abs() / gscale);
    }
    vec![
        check(
            "gamma2-forms",
            gamma2_err < 1e-10,
            format!("max rel. err {gamma2_err:.3e}"),
        ),
        check(
            "divergence",
            div_ratio < 1e-12,
            format!("max |int Lap u| / scale {div_ratio:.3e}"),
        ),
        check(
            "green",
            green_err < 1e-12,
            format!("max rel. err {green_err:.3e}"),
        ),
    ]
}

/// Eigenvalue bound and integral inequality for every nonzero eigenpair at
/// `m = 2`, `xi = best_xi`.
fn eigen_sweep(forms: &CdForms, g: &WeightedGraph) -> CheckResult {
    let m = 2.0;
    let xi = forms.best_xi(m);
    let certified = forms.holds(m, xi);
    let pairs = match spectral::spectrum(g) {
        Ok(p) => p,
        Err(e) => return check("eigen-sweep", false, format!("spectrum failed: {e}")),
    };
    let mut min_slack = f64::INFINITY;
    for pair in spectral::nonzero_pairs(&pairs) {
        let reports = inequality::check_lambda_bound(pair.lambda, m, xi).and_then(|a| {
            inequality::check_theorem2_certified(g, pair, m, xi, certified).map(|b| [a, b])
        });
        match reports {
            Ok(rs) => rs.iter().for_each(|r| min_slack = min_slack.min(r.slack)),
            Err(e) => {
                return check(
                    "eigen-sweep",
                    false,
                    format!("lambda = {}, xi = {xi}: {e}", pair.lambda),
                )
            }
        }
    }
    check(
        "eigen-sweep",
        certified && min_slack >= -1e-9,
        format!("xi = {xi:.12}, certified = {certified}, min slack {min_slack:.3e}"),
    )
}

fn trudinger_moser(g: &WeightedGraph, seed: u64) -> CheckResult {
    let opts = AscentOptions {
        seed,
        ..Default::default()
    };
    match inequality::tm_sup_estimate(g, 2.0, 3.0, &opts) {
        Ok(est) => check(
            "trudinger-moser",
            !est.converged || est.bound_holds,
            format!(
                "sup {:.12e}, log bound {:.6e}, converged {}",
                est.empirical_sup, est.log_theoretical_bound, est.converged
            ),
        ),
        Err(e) => check("trudinger-moser", false, e.to_string()),
    }
}

pub fn check_entry(entry: &CorpusEntry, cfg: &CorpusConfig) -> EntryReport {
    let g = &entry.graph;
    let forms = CdForms::new(g);
    let functions = ascent::random_starts(
        g.len(),
        cfg.functions_per_graph.max(1),
        cfg.seed.wrapping_add(entry.index as u64 * 7919),
    );
    let mut checks = vec![lin_yau(&forms, g)];
    checks.extend(identities(g, &functions));
    checks.push(eigen_sweep(&forms, g));
    if cfg.trudinger_moser {
        checks.push(trudinger_moser(g, cfg.seed));
    }
    EntryReport {
        index: entry.index,
        name: entry.name.clone(),
        family: entry.family,
        seed: entry.seed,
        vertices: g.len(),
        edges: g.edges().len(),
        checks,
    }
}

/// Runs every check on every corpus graph; entries run concurrently and the
/// report is assembled in corpus order.
pub fn run_corpus(cfg: &CorpusConfig) -> CorpusReport {
    let entries = build_corpus(cfg);
    let reports = par::map(&entries, |e| check_entry(e, cfg));
    let mut summary: BTreeMap<&'static str, CheckSummary> = BTreeMap::new();
    let mut failures = Vec::new();
    for r in &reports {
        for c in &r.checks {
            let s = summary.entry(c.name).or_insert(CheckSummary {
                passed: 0,
                total: 0,
            });
            s.total += 1;
            if c.passed {
                s.passed += 1;
            } else {
                let seed = r.seed.map(|s| format!(" (seed {s})")).unwrap_or_default();
                failures.push(format!(
                    "{}{seed}: {} violated: {}",
                    r.name, c.name, c.detail
                ));
            }
        }
    }
    CorpusReport {
        entries: reports,
        summary,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_sizes() {
        let c = build_corpus(&CorpusConfig::default());
        assert_eq!(c.len(), 9 + 8 + 7 + 8 + 50);
        assert!(c.iter().enumerate().all(|(i, e)| e.index == i));
        assert!(c.iter().all(|e| e.graph.len() <= 20));
        let empty = build_corpus(&CorpusConfig {
            families: vec![],
            ..Default::default()
        });
        assert!(empty.is_empty());
    }

    #[test]
    fn random_graphs_are_reproducible() {
        let a = random_connected(12, 0.1, 10.0, 3);
        let b = random_connected(12, 0.1, 10.0, 3);
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert!(a.edges().iter().all(|&(_, _, w)| (0.1..=10.0).contains(&w)));
    }

    #[test]
    fn families_have_expected_shape() {
        assert_eq!(path(4).edges().len(), 3);
        assert_eq!(cycle(5).edges().len(), 5);
        assert_eq!(complete(5).edges().len(), 10);
        assert_eq!(star(5).edges().len(), 4);
        assert_eq!(Family::parse("star"), Some(Family::Star));
        assert_eq!(Family::parse("tree"), None);
    }

    #[test]
    fn small_corpus_passes() {
        let cfg = CorpusConfig {
            families: vec![Family::Path, Family::Star],
            ..Default::default()
        };
        let r = run_corpus(&cfg);
        assert!(r.all_passed(), "{:?}", r.failures);
    }
}
