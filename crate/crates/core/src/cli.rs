//! Problem ingestion, command dispatch, report emission and re-verification.
//!
//! Every command reads a JSON problem file (or `-` for stdin) and writes a
//! report. Reports carry certificates that `verify` checks again against
//! the original input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::gallery::{gen_instance, run_gallery, Fact, Instance, Params, Sweep};
use crate::model::{
    check_feasible_potentials, check_marginals, evaluate_j, plan_cost, CostMatrix, DiscreteMeasure, Domain, PotentialPair,
    TransportPlan, Violation,
};
use crate::monotonicity::{check_cyclical_monotonicity, CycleCertificate, CycleVerdict, SupportSet};
use crate::multimarginal::{build_e, candidate_couplings, mm_bound_check};
use crate::potentials::{
    decompose_exact, potentials_from_support, sandwich_potentials, verify_strong_monotonicity, Decomposition,
    RectangleCertificate, SandwichInput,
};
use crate::solver::{solve_min_cost, truncation_sweep, SolveStatus};
use crate::subsidy::{compute_subsidy, verify_lower_bound, verify_subsidy_constraint, ConstraintTag};
use crate::{CYCLE_TOL, FEAS_TOL, MARGINAL_TOL};

/// Relative slack accepted when normalizing input weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-6;

/// JSON problem document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub cost: Vec<Vec<ExtReal>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    /// Optional transport plan (dense rows) for plan-based commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<Vec<f64>>>,
    /// Optional lower bound for the sandwich construction; `cost` is the upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Vec<ExtReal>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub mu: Vec<String>,
    pub nu: Vec<String>,
}

/// A validated problem. Indices refer to the points left after dropping
/// zero-weight points; the dropped original indices are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub instance: Instance,
    pub plan: Option<TransportPlan>,
    pub lower: Option<CostMatrix>,
    pub dropped_x: Vec<usize>,
    pub dropped_y: Vec<usize>,
    /// SHA-256 of the raw input bytes, hex encoded.
    pub input_hash: String,
}

fn hash_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn read_input(path: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path == "-" {
        std::io::stdin().read_to_end(&mut buf).map_err(|e| Error::Parse(format!("stdin: {e}")))?;
    } else {
        buf = std::fs::read(Path::new(path)).map_err(|e| Error::Parse(format!("{path}: {e}")))?;
    }
    Ok(buf)
}

/// Reads and validates a problem file; `-` reads stdin.
pub fn parse_instance(path: &str) -> Result<Problem> {
    let bytes = read_input(path)?;
    parse_problem_bytes(&bytes, path)
}

/// Like [`parse_instance`] on in-memory bytes; `origin` names the source in
/// diagnostics.
pub fn parse_problem_bytes(bytes: &[u8], origin: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_slice(bytes)
        .map_err(|e| Error::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    let mut p = problem_from_file(file)?;
    p.input_hash = hash_hex(bytes);
    Ok(p)
}

fn normalize(field: &str, w: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!("{field}[{i}]"), format!("weight {v} must be finite and nonnegative")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(field, format!("weights sum to {s}, expected 1 within {WEIGHT_SUM_TOL}")));
    }
    Ok(w.iter().map(|v| v / s).collect())
}

fn ext_grid(field: &str, rows: &[Vec<ExtReal>], n: usize, m: usize) -> Result<CostMatrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch(format!("{field} must be {n} x {m}")));
    }
    CostMatrix::from_rows(rows.iter().map(|r| r.iter().map(|v| v.value()).collect()).collect())
}

fn problem_from_file(file: ProblemFile) -> Result<Problem> {
    let (n, m) = (file.mu.len(), file.nu.len());
    if n == 0 || m == 0 {
        return Err(Error::invalid("mu", "measures must have at least one point"));
    }
    let mu_w = normalize("mu", &file.mu)?;
    let nu_w = normalize("nu", &file.nu)?;
    let cost = ext_grid("cost", &file.cost, n, m)?;
    let lower = file.lower.as_ref().map(|l| ext_grid("lower", l, n, m)).transpose()?;
    let plan = match &file.plan {
        None => None,
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                return Err(Error::DimensionMismatch(format!("plan must be {n} x {m}")));
            }
            Some(TransportPlan::from_rows(rows.clone())?)
        }
    };
    let keep_x: Vec<usize> = (0..n).filter(|&i| mu_w[i] > 0.0).collect();
    let keep_y: Vec<usize> = (0..m).filter(|&j| nu_w[j] > 0.0).collect();
    let dropped_x: Vec<usize> = (0..n).filter(|&i| mu_w[i] == 0.0).collect();
    let dropped_y: Vec<usize> = (0..m).filter(|&j| nu_w[j] == 0.0).collect();
    if let Some(pi) = &plan {
        for (i, j, v) in pi.triplets() {
            if (dropped_x.contains(&i) || dropped_y.contains(&j)) && v > MARGINAL_TOL {
                return Err(Error::invalid("plan", format!("mass {v} on zero-weight point ({i}, {j})")));
            }
        }
    }
    let (x_labels, y_labels) = match &file.labels {
        Some(l) => {
            if l.mu.len() != n || l.nu.len() != m {
                return Err(Error::DimensionMismatch("labels must match the measures".into()));
            }
            (l.mu.clone(), l.nu.clone())
        }
        None => ((0..n).map(|i| i.to_string()).collect(), (0..m).map(|j| j.to_string()).collect()),
    };
    let pick = |w: &[f64], keep: &[usize]| keep.iter().map(|&i| w[i]).collect::<Vec<_>>();
    let pick_labels = |l: &[String], keep: &[usize]| keep.iter().map(|&i| l[i].clone()).collect::<Vec<_>>();
    let restrict = |g: &CostMatrix| CostMatrix::from_fn(keep_x.len(), keep_y.len(), |i, j| g.get(keep_x[i], keep_y[j]));
    let mu = DiscreteMeasure::with_labels(pick_labels(&x_labels, &keep_x), renormalize(pick(&mu_w, &keep_x)))?;
    let nu = DiscreteMeasure::with_labels(pick_labels(&y_labels, &keep_y), renormalize(pick(&nu_w, &keep_y)))?;
    let c = restrict(&cost)?;
    let lower = lower.as_ref().map(&restrict).transpose()?;
    let plan = plan
        .map(|pi| {
            let rows = keep_x.iter().map(|&i| keep_y.iter().map(|&j| pi.get(i, j)).collect()).collect();
            TransportPlan::from_rows(rows)
        })
        .transpose()?;
    Ok(Problem {
        instance: Instance {
            name: file.name.unwrap_or_else(|| "input".into()),
            params: Params::new(),
            mu,
            nu,
            c,
        },
        plan,
        lower,
        dropped_x,
        dropped_y,
        input_hash: String::new(),
    })
}

fn renormalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Serializes an instance as a problem file.
pub fn instance_to_file(inst: &Instance) -> ProblemFile {
    ProblemFile {
        name: Some(inst.name.clone()),
        mu: inst.mu.weights().to_vec(),
        nu: inst.nu.weights().to_vec(),
        cost: inst.c.to_rows().into_iter().map(|r| r.into_iter().map(ExtReal::from_f64).collect()).collect(),
        labels: Some(Labels {
            mu: inst.mu.labels().to_vec(),
            nu: inst.nu.labels().to_vec(),
        }),
        plan: None,
        lower: None,
    }
}

/// Random instance: weights uniform on `[0.1, 1]` then normalized, costs
/// uniform on `[0, 1)`, each cost independently `+inf` with probability
/// `inf_density`.
pub fn gen_random(n: usize, m: usize, seed: u64, inf_density: f64) -> Result<Instance> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("n", "sizes must be at least 1"));
    }
    if !(0.0..1.0).contains(&inf_density) {
        return Err(Error::invalid("infDensity", "must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = DiscreteMeasure::normalized((0..n).map(|_| rng.gen_range(0.1..1.0)).collect())?;
    let nu = DiscreteMeasure::normalized((0..m).map(|_| rng.gen_range(0.1..1.0)).collect())?;
    let c = CostMatrix::from_fn(n, m, |_, _| {
        let v: f64 = rng.gen();
        if rng.gen::<f64>() < inf_density {
            f64::INFINITY
        } else {
            v
        }
    })?;
    let mut params = Params::new();
    params.insert("n".into(), n.to_string());
    params.insert("m".into(), m.to_string());
    params.insert("seed".into(), seed.to_string());
    params.insert("infDensity".into(), inf_density.to_string());
    Ok(Instance {
        name: "random".into(),
        params,
        mu,
        nu,
        c,
    })
}

/// A re-verifiable witness attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Certificate {
    /// Negative chain sum. `check` names the grids it is measured against:
    /// `cost` (plain monotonicity), `sandwich` (cost over lower), or a
    /// subsidy constraint tag.
    Cycle {
        check: String,
        #[serde(flatten)]
        cycle: CycleCertificate,
    },
    Rectangle {
        #[serde(flatten)]
        rectangle: RectangleCertificate,
    },
    Violation {
        check: String,
        x: Option<usize>,
        y: Option<usize>,
        slack: ExtReal,
    },
    Bound {
        coupling: usize,
        kind: String,
        integral: f64,
        bound: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry(pub usize, pub usize, pub f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialsOut {
    pub phi: Vec<ExtReal>,
    pub psi: Vec<ExtReal>,
}

impl PotentialsOut {
    fn new(pp: &PotentialPair) -> Self {
        PotentialsOut {
            phi: pp.phi.iter().map(|&v| ExtReal::from_f64(v)).collect(),
            psi: pp.psi.iter().map(|&v| ExtReal::from_f64(v)).collect(),
        }
    }

    fn to_pair(&self) -> Result<PotentialPair> {
        PotentialPair::new(self.phi.iter().map(|v| v.value()).collect(), self.psi.iter().map(|v| v.value()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubsidyOut {
    pub entries: Vec<Vec<ExtReal>>,
    pub total_under_plan: f64,
    pub alpha: f64,
    pub optimum: f64,
    pub constraints: BTreeMap<String, bool>,
    pub lower_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MmOut {
    pub n: usize,
    pub seed: u64,
    pub count: usize,
    pub alpha: f64,
    pub bound: f64,
    pub kinds: Vec<String>,
    pub integrals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOut {
    pub cutoffs: Vec<f64>,
    pub values: Vec<ExtReal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub description: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub command: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ExtReal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<PlanEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potentials: Option<PotentialsOut>,
    #[serde(default)]
    pub certificates: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<Fact>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsidy: Option<SubsidyOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multimarginal: Option<MmOut>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_x: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_y: Vec<usize>,
    /// Wall-clock milliseconds; only present with `--timing`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<f64>,
    pub tool_version: String,
    pub input_hash: String,
}

impl Report {
    fn new(command: &str, status: &str, input_hash: &str) -> Self {
        Report {
            command: command.into(),
            status: status.into(),
            value: None,
            plan: None,
            potentials: None,
            certificates: Vec::new(),
            facts: Vec::new(),
            sweeps: Vec::new(),
            sweep: None,
            subsidy: None,
            multimarginal: None,
            checks: Vec::new(),
            dropped_x: Vec::new(),
            dropped_y: Vec::new(),
            timing: None,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            input_hash: input_hash.into(),
        }
    }

    fn for_problem(command: &str, status: &str, p: &Problem) -> Self {
        let mut r = Report::new(command, status, &p.input_hash);
        r.dropped_x = p.dropped_x.clone();
        r.dropped_y = p.dropped_y.clone();
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Deterministic serialization. CSV emits the sweep table, the fact table,
/// the plan triplets, or a key/value summary, whichever applies first.
pub fn emit_report(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("reports always serialize");
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut s = String::new();
            if let Some(sw) = &report.sweep {
                s.push_str("cutoff,value\n");
                for (c, v) in sw.cutoffs.iter().zip(&sw.values) {
                    let _ = writeln!(s, "{c:?},{v}");
                }
            } else if !report.facts.is_empty() {
                s.push_str("description,relation,expected,observed,tolerance,pass,basis\n");
                for f in &report.facts {
                    let rel = serde_json::to_value(f.relation).expect("enum serializes");
                    let basis = serde_json::to_value(f.basis).expect("enum serializes");
                    let _ = writeln!(
                        s,
                        "{},{},{:?},{:?},{:?},{},{}",
                        csv_field(&f.description),
                        rel.as_str().unwrap_or_default(),
                        f.expected,
                        f.observed,
                        f.tolerance,
                        f.pass,
                        basis.as_str().unwrap_or_default()
                    );
                }
                for sw in &report.sweeps {
                    let _ = writeln!(s, "\n{},{}", csv_field(&sw.parameter), csv_field(&sw.label));
                    for (p, v) in sw.points.iter().zip(&sw.values) {
                        let _ = writeln!(s, "{p},{v:?}");
                    }
                }
            } else if let Some(plan) = &report.plan {
                s.push_str("x,y,mass\n");
                for PlanEntry(i, j, m) in plan {
                    let _ = writeln!(s, "{i},{j},{m:?}");
                }
            } else {
                s.push_str("key,value\n");
                let _ = writeln!(s, "status,{}", report.status);
                if let Some(v) = report.value {
                    let _ = writeln!(s, "value,{v}");
                }
            }
            s.into_bytes()
        }
    }
}

fn plan_entries(pi: &TransportPlan) -> Vec<PlanEntry> {
    pi.triplets().into_iter().map(|(i, j, m)| PlanEntry(i, j, m)).collect()
}

fn plan_from_entries(entries: &[PlanEntry], n: usize, m: usize) -> Result<TransportPlan> {
    let mut pi = TransportPlan::zeros(n, m);
    for PlanEntry(i, j, v) in entries {
        if *i >= n || *j >= m {
            return Err(Error::DimensionMismatch(format!("plan entry ({i}, {j}) outside {n} x {m}")));
        }
        pi.set(*i, *j, pi.get(*i, *j) + v);
    }
    Ok(pi)
}

fn require_plan(p: &Problem) -> Result<&TransportPlan> {
    let pi = p.plan.as_ref().ok_or_else(|| Error::invalid("plan", "this command needs a \"plan\" in the problem file"))?;
    let verdict = check_marginals(pi, &p.instance.mu, &p.instance.nu);
    if !verdict.feasible {
        return Err(Error::invalid("plan", format!("marginals off by {:e}", verdict.max_violation())));
    }
    Ok(pi)
}

fn violation_certs(check: &str, vs: &[Violation]) -> Vec<Certificate> {
    vs.iter()
        .map(|v| Certificate::Violation {
            check: check.into(),
            x: v.x,
            y: v.y,
            slack: v.slack,
        })
        .collect()
}

/// Outcome of a command: the report and the process exit code.
pub struct Outcome {
    pub report: Report,
    pub code: i32,
}

impl Outcome {
    fn ok(report: Report) -> Self {
        Outcome { report, code: 0 }
    }

    fn flagged(report: Report, violated: bool) -> Self {
        Outcome {
            report,
            code: i32::from(violated),
        }
    }
}

pub fn cmd_solve(p: &Problem) -> Result<Outcome> {
    let inst = &p.instance;
    let r = solve_min_cost(&inst.mu, &inst.nu, &inst.c)?;
    let status = match r.status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Stalled => "stalled",
    };
    let mut rep = Report::for_problem("solve", status, p);
    let Some(plan) = &r.plan else {
        return Ok(Outcome::flagged(rep, true));
    };
    rep.value = Some(r.value);
    rep.plan = Some(plan_entries(plan));
    let pp = potentials_from_support(&SupportSet::from_plan(plan), &inst.c)?;
    rep.potentials = Some(PotentialsOut::new(&pp));
    Ok(Outcome::ok(rep))
}

pub fn cmd_sweep(p: &Problem, cutoffs: &[f64]) -> Result<Outcome> {
    let inst = &p.instance;
    let s = truncation_sweep(&inst.mu, &inst.nu, &inst.c, cutoffs)?;
    let mut rep = Report::for_problem("sweep", "ok", p);
    rep.sweep = Some(SweepOut {
        cutoffs: s.cutoffs,
        values: s.values,
    });
    Ok(Outcome::ok(rep))
}

pub fn cmd_verify_cmon(p: &Problem) -> Result<Outcome> {
    let pi = require_plan(p)?;
    let v = check_cyclical_monotonicity(&SupportSet::from_plan(pi), &p.instance.c)?;
    Ok(cycle_outcome("verify-cmon", "monotone", "cost", v, p))
}

fn cycle_outcome(command: &str, ok_status: &str, check: &str, v: CycleVerdict, p: &Problem) -> Outcome {
    match v {
        CycleVerdict::Holds => Outcome::ok(Report::for_problem(command, ok_status, p)),
        CycleVerdict::Violated(cycle) => {
            let mut rep = Report::for_problem(command, "violated", p);
            rep.value = Some(cycle.total_weight);
            rep.certificates.push(Certificate::Cycle {
                check: check.into(),
                cycle,
            });
            Outcome::flagged(rep, true)
        }
    }
}

pub fn cmd_potentials(p: &Problem) -> Result<Outcome> {
    let c = &p.instance.c;
    let (pp, plan) = match &p.lower {
        Some(lower) => {
            let s = SandwichInput::new(c.clone(), lower.clone())?;
            match sandwich_potentials(&s) {
                Ok(pp) => (pp, None),
                Err(Error::CycleViolation(cycle)) => {
                    return Ok(cycle_outcome("potentials", "", "sandwich", CycleVerdict::Violated(cycle), p));
                }
                Err(e) => return Err(e),
            }
        }
        None => {
            let plan = match &p.plan {
                Some(_) => require_plan(p)?.clone(),
                None => {
                    let r = solve_min_cost(&p.instance.mu, &p.instance.nu, c)?;
                    match r.plan {
                        Some(plan) => plan,
                        None => return Ok(Outcome::flagged(Report::for_problem("potentials", "infeasible", p), true)),
                    }
                }
            };
            let support = SupportSet::from_plan(&plan);
            match check_cyclical_monotonicity(&support, c)? {
                CycleVerdict::Holds => (potentials_from_support(&support, c)?, Some(plan)),
                v => return Ok(cycle_outcome("potentials", "", "cost", v, p)),
            }
        }
    };
    let mut rep = Report::for_problem("potentials", "feasible", p);
    rep.potentials = Some(PotentialsOut::new(&pp));
    if let Some(plan) = plan {
        let strong = verify_strong_monotonicity(&plan, c, &pp)?;
        rep.value = Some(evaluate_j(&pp, &plan)?);
        rep.plan = Some(plan_entries(&plan));
        rep.checks.push(Check {
            description: "phi + psi <= c everywhere with equality on the plan support".into(),
            pass: strong.feasible,
        });
        rep.certificates.extend(violation_certs("strong", &strong.violations));
        if !strong.feasible {
            rep.status = "violated".into();
            return Ok(Outcome::flagged(rep, true));
        }
    }
    Ok(Outcome::ok(rep))
}

pub fn cmd_decompose(p: &Problem) -> Result<Outcome> {
    match decompose_exact(&p.instance.c)? {
        Decomposition::Exact(pp) => {
            let mut rep = Report::for_problem("decompose", "decomposable", p);
            rep.potentials = Some(PotentialsOut::new(&pp));
            Ok(Outcome::ok(rep))
        }
        Decomposition::Rectangle(rectangle) => {
            let mut rep = Report::for_problem("decompose", "violated", p);
            rep.certificates.push(Certificate::Rectangle { rectangle });
            Ok(Outcome::flagged(rep, true))
        }
    }
}

fn grid_rows(c: &CostMatrix) -> Vec<Vec<ExtReal>> {
    c.to_rows().into_iter().map(|r| r.into_iter().map(ExtReal::from_f64).collect()).collect()
}

pub fn cmd_subsidy(p: &Problem) -> Result<Outcome> {
    let pi = require_plan(p)?;
    let c = &p.instance.c;
    let s = compute_subsidy(pi, c)?;
    let mut rep = Report::for_problem("subsidy", "ok", p);
    let mut constraints = BTreeMap::new();
    for tag in ConstraintTag::ALL {
        let v = verify_subsidy_constraint(&s.entries, pi, c, tag)?;
        constraints.insert(tag.to_string(), v.holds());
        if let CycleVerdict::Violated(cycle) = v {
            rep.certificates.push(Certificate::Cycle {
                check: tag.to_string(),
                cycle,
            });
        }
    }
    let lb = verify_lower_bound(&s.entries, pi, c, s.optimum)?;
    rep.certificates.extend(violation_certs("lowerBound", &lb.violations));
    let violated = !lb.feasible || constraints.values().any(|ok| !ok);
    rep.value = Some(ExtReal::from_f64(s.total_under_plan));
    rep.potentials = Some(PotentialsOut::new(&s.potentials));
    rep.subsidy = Some(SubsidyOut {
        entries: grid_rows(&s.entries),
        total_under_plan: s.total_under_plan,
        alpha: s.alpha,
        optimum: s.optimum,
        constraints,
        lower_bound: lb.feasible,
    });
    if violated {
        rep.status = "violated".into();
    }
    Ok(Outcome::flagged(rep, violated))
}

/// `alpha = I_c[pi] - I_c` for a plan with finite cost.
fn optimality_gap(pi: &TransportPlan, inst: &Instance) -> Result<f64> {
    let cost = plan_cost(pi, &inst.c)?
        .finite()
        .ok_or_else(|| Error::invalid("plan", "plan cost is not finite"))?;
    let r = solve_min_cost(&inst.mu, &inst.nu, &inst.c)?;
    Ok(cost - r.value.value())
}

pub fn cmd_mm_check(p: &Problem, n: usize, seed: u64, count: usize) -> Result<Outcome> {
    let pi = require_plan(p)?;
    let alpha = optimality_gap(pi, &p.instance)?;
    let e = build_e(&p.instance.c, &SupportSet::from_plan(pi), n)?;
    let ks = candidate_couplings(pi, n, seed, count)?;
    let v = mm_bound_check(pi, &e, alpha, &ks)?;
    let mut rep = Report::for_problem("mm-check", if v.feasible { "feasible" } else { "violated" }, p);
    rep.certificates = v
        .violations
        .iter()
        .map(|b| Certificate::Bound {
            coupling: b.coupling,
            kind: b.kind.clone(),
            integral: b.integral,
            bound: b.bound,
        })
        .collect();
    rep.multimarginal = Some(MmOut {
        n,
        seed,
        count,
        alpha,
        bound: n as f64 * alpha,
        kinds: ks.iter().map(|k| k.kind.clone()).collect(),
        integrals: v.integrals,
    });
    Ok(Outcome::flagged(rep, !v.feasible))
}

pub fn cmd_example(name: &str, params: &Params) -> Result<Outcome> {
    let fr = run_gallery(name, params)?;
    let inst = gen_instance(name, params)?;
    let bytes = serde_json::to_vec(&instance_to_file(&inst)).expect("problem files serialize");
    let mut rep = Report::new("example", if fr.all_pass() { "pass" } else { "fail" }, &hash_hex(&bytes));
    let failed = !fr.all_pass();
    rep.facts = fr.facts;
    rep.sweeps = fr.sweeps;
    Ok(Outcome::flagged(rep, failed))
}

/// Re-checks every claim of `report` against the problem alone.
pub fn verify_report(p: &Problem, report: &Report, tol: f64) -> Result<Vec<Check>> {
    let inst = &p.instance;
    let c = &inst.c;
    let (n, m) = (c.rows(), c.cols());
    let mut checks = Vec::new();
    let mut push = |description: String, pass: bool| checks.push(Check { description, pass });

    if !report.input_hash.is_empty() && report.command != "example" {
        push("input hash matches".into(), report.input_hash == p.input_hash);
    }

    let plan = report.plan.as_ref().map(|e| plan_from_entries(e, n, m)).transpose()?;
    if let Some(pi) = &plan {
        push("plan has the prescribed marginals".into(), check_marginals(pi, &inst.mu, &inst.nu).feasible);
        if let Some(v) = report.value {
            let cost = plan_cost(pi, c)?;
            push(
                "value equals the plan cost".into(),
                cost == v || (cost.value() - v.value()).abs() <= tol * (1.0 + v.value().abs()),
            );
        }
    }
    if let (Some(pot), Some(pi)) = (&report.potentials, &plan) {
        let pp = pot.to_pair()?;
        push(
            "potentials are feasible everywhere".into(),
            check_feasible_potentials(&pp, c, Domain::Everywhere)?.feasible,
        );
        let j = evaluate_j(&pp, pi)?;
        let cost = plan_cost(pi, c)?;
        push("dual value equals the primal value".into(), (j.value() - cost.value()).abs() <= tol * (1.0 + cost.value().abs()));
    }
    if report.command == "decompose" {
        if let Some(pot) = &report.potentials {
            let pp = pot.to_pair()?;
            let ok = (0..n).all(|i| (0..m).all(|j| (pp.sum_at(i, j) - c.get(i, j)).abs() <= tol));
            push("phi + psi reproduces the cost".into(), ok);
        }
    }
    if let (Some(pot), Some(lower), "potentials") = (&report.potentials, &p.lower, report.command.as_str()) {
        let pp = pot.to_pair()?;
        let ok = (0..n).all(|i| {
            (0..m).all(|j| {
                let s = pp.sum_at(i, j);
                s <= c.get(i, j) + tol && s >= lower.get(i, j) - tol
            })
        });
        push("potentials lie between the bounds".into(), ok);
    }
    if let (Some(pot), Some(lower), "potentials") = (&report.potentials, &p.lower, report.command.as_str()) {
        let pp = pot.to_pair()?;
        let ok = (0..n).all(|i| {
            (0..m).all(|j| {
                let s = pp.sum_at(i, j);
                s <= c.get(i, j) + tol && s >= lower.get(i, j) - tol
            })
        });
        push("potentials lie between the bounds".into(), ok);
    }
    if let Some(sw) = &report.sweep {
        let s = truncation_sweep(&inst.mu, &inst.nu, c, &sw.cutoffs)?;
        let ok = s.values.iter().zip(&sw.values).all(|(a, b)| a == b || (a.value() - b.value()).abs() <= tol);
        push("sweep values reproduce".into(), ok);
    }

    let subsidy = report
        .subsidy
        .as_ref()
        .map(|s| {
            if s.entries.len() != n || s.entries.iter().any(|r| r.len() != m) {
                return Err(Error::DimensionMismatch("subsidy grid shape".into()));
            }
            CostMatrix::from_rows(s.entries.iter().map(|r| r.iter().map(|v| v.value()).collect()).collect())
        })
        .transpose()?;

    for (k, cert) in report.certificates.iter().enumerate() {
        match cert {
            Certificate::Cycle { check, cycle } => {
                if cycle.pairs.iter().any(|&(x, y)| x >= n || y >= m) {
                    push(format!("certificate {k}: pairs inside the grid"), false);
                    continue;
                }
                let (upper, lower) = match check.as_str() {
                    "cost" => (c.clone(), c.clone()),
                    "sandwich" => {
                        let lower = p.lower.clone().ok_or_else(|| Error::invalid("lower", "sandwich certificate needs \"lower\""))?;
                        (c.clone(), lower)
                    }
                    tag => {
                        let tag: ConstraintTag = tag.parse()?;
                        let f = subsidy.as_ref().ok_or_else(|| Error::invalid("subsidy", "constraint certificate needs the subsidy grid"))?;
                        let reduced = c.ext_minus(f)?;
                        match tag {
                            ConstraintTag::W1 | ConstraintTag::W2 => (c.clone(), reduced),
                            ConstraintTag::S1 | ConstraintTag::S2 => (reduced.clone(), reduced),
                        }
                    }
                };
                let w = cycle.recompute_with(&upper, &lower);
                let claimed = cycle.total_weight;
                let same = w == claimed || (w.value() - claimed.value()).abs() <= tol * (1.0 + claimed.value().abs());
                push(format!("certificate {k} ({check}): chain sum {w} matches and is negative"), same && w.value() < -CYCLE_TOL);
                if check == "cost" || matches!(check.as_str(), "W1" | "S1") {
                    if let Some(pi) = &p.plan {
                        let support = SupportSet::from_plan(pi);
                        push(
                            format!("certificate {k}: pairs lie on the plan support"),
                            cycle.pairs.iter().all(|&q| support.contains(q)),
                        );
                    }
                }
            }
            Certificate::Rectangle { rectangle } => {
                let r = rectangle.recompute(c);
                push(
                    format!("certificate {k}: rectangle residual {r} matches and is nonzero"),
                    (r - rectangle.residual).abs() <= tol && r.abs() > FEAS_TOL,
                );
            }
            Certificate::Violation { check, x, y, slack } => {
                let pass = match (check.as_str(), x, y) {
                    ("strong", Some(i), Some(j)) => {
                        let pp = report
                            .potentials
                            .as_ref()
                            .ok_or_else(|| Error::invalid("potentials", "violation certificate needs potentials"))?
                            .to_pair()?;
                        let gap = crate::ext::ext_sub(c.get(*i, *j), pp.sum_at(*i, *j));
                        gap < -FEAS_TOL || gap.abs() > tol
                    }
                    _ => slack.value() < 0.0,
                };
                push(format!("certificate {k} ({check}): violation reproduces"), pass);
            }
            Certificate::Bound { coupling, integral, bound, .. } => {
                let mm = report
                    .multimarginal
                    .as_ref()
                    .ok_or_else(|| Error::invalid("multimarginal", "bound certificate needs the coupling parameters"))?;
                let pi = require_plan(p)?;
                let e = build_e(c, &SupportSet::from_plan(pi), mm.n)?;
                let ks = candidate_couplings(pi, mm.n, mm.seed, mm.count)?;
                let v = ks.get(*coupling).map(|k| k.integrate(&e));
                push(
                    format!("certificate {k}: coupling {coupling} integral reproduces above the bound"),
                    v.is_some_and(|v| (v - integral).abs() <= tol && v > bound + crate::SUBSIDY_TOL),
                );
            }
        }
    }

    if let Some(mm) = &report.multimarginal {
        let pi = require_plan(p)?;
        let alpha = optimality_gap(pi, inst)?;
        push("optimality gap reproduces".into(), (alpha - mm.alpha).abs() <= tol);
        let e = build_e(c, &SupportSet::from_plan(pi), mm.n)?;
        let ks = candidate_couplings(pi, mm.n, mm.seed, mm.count)?;
        let ok = ks.len() == mm.integrals.len() && ks.iter().zip(&mm.integrals).all(|(k, v)| (k.integrate(&e) - v).abs() <= tol);
        push("coupling integrals reproduce".into(), ok);
    }
    if let Some(s) = &report.subsidy {
        let pi = require_plan(p)?;
        let f = subsidy.as_ref().expect("parsed above");
        if let Some(pot) = &report.potentials {
            let pp = pot.to_pair()?;
            let ok = (0..n).all(|i| {
                (0..m).all(|j| {
                    let expect = crate::ext::ext_sub(c.get(i, j), pp.sum_at(i, j)).max(0.0);
                    let got = f.get(i, j);
                    got == expect || (got - expect).abs() <= tol
                })
            });
            push("subsidy equals cost minus the potentials".into(), ok);
        }
        let paid = plan_cost(pi, f)?.value();
        push("subsidy total reproduces".into(), (paid - s.total_under_plan).abs() <= tol);
        let lb = verify_lower_bound(f, pi, c, s.optimum)?;
        push("lower-bound verdict reproduces".into(), lb.feasible == s.lower_bound);
        for tag in ConstraintTag::ALL {
            let claimed = s.constraints.get(&tag.to_string()).copied();
            let holds = verify_subsidy_constraint(f, pi, c, tag)?.holds();
            push(format!("constraint {tag} verdict reproduces"), claimed == Some(holds));
        }
    }
    if matches!(report.command.as_str(), "verify-cmon" | "potentials") && report.status == "monotone" {
        let pi = require_plan(p)?;
        push(
            "support is cyclically monotone".into(),
            check_cyclical_monotonicity(&SupportSet::from_plan(pi), c)?.holds(),
        );
    }
    Ok(checks)
}

pub fn cmd_verify(p: &Problem, report_path: &str, tol: f64) -> Result<Outcome> {
    let bytes = read_input(report_path)?;
    let report: Report = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Parse(format!("{report_path}:{}:{}: {e}", e.line(), e.column())))?;
    let checks = verify_report(p, &report, tol)?;
    let ok = checks.iter().all(|c| c.pass);
    let mut rep = Report::for_problem("verify", if ok { "verified" } else { "failed" }, p);
    rep.checks = checks;
    Ok(Outcome::flagged(rep, !ok))
}

#[derive(Debug, Parser)]
#[command(name = "duality-lab", version, about = "Exact finite optimal transport with dual certificates")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Tolerance for matching recomputed numbers in `verify`.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Seed for randomized candidate families.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Add wall-clock time to the report.
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal plan, value and dual potentials.
    Solve { problem: String },
    /// Optimal values of the truncated costs min(c, n).
    Sweep {
        problem: String,
        /// Comma-separated increasing cutoffs.
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<f64>,
    },
    /// Cyclical monotonicity of the plan's support.
    VerifyCmon { problem: String },
    /// Sandwich potentials (with "lower") or potentials from a monotone support.
    Potentials { problem: String },
    /// Subsidy function for a suboptimal plan and its incentive constraints.
    Subsidy { problem: String },
    /// Exact decomposition cost = phi + psi, or a violated rectangle.
    Decompose { problem: String },
    /// Multi-marginal bound against candidate couplings.
    MmCheck {
        problem: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Run a gallery example and check its facts.
    Example {
        name: String,
        /// Parameters as key=value.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
    },
    /// Emit a random problem file.
    Random {
        n: usize,
        m: usize,
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        inf_density: f64,
    },
    /// Re-verify a report against its problem file.
    Verify { problem: String, report: String },
}

fn parse_param(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("`{s}` is not key=value"))
}

/// Exit code for an error: 1 for a certified violation, 3 for internal
/// failures, 2 for everything caused by the input.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CycleViolation(_) => 1,
        Error::Internal(_) => 3,
        _ => 2,
    }
}

fn dispatch(cli: &Cli) -> Result<(Vec<u8>, i32)> {
    let g = &cli.global;
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Random { n, m, seed, inf_density } => {
            let inst = gen_random(*n, *m, *seed, *inf_density)?;
            let mut out = serde_json::to_vec_pretty(&instance_to_file(&inst)).expect("problem files serialize");
            out.push(b'\n');
            return Ok((out, 0));
        }
        Command::Example { name, params } => cmd_example(name, &params.iter().cloned().collect())?,
        Command::Solve { problem } => cmd_solve(&parse_instance(problem)?)?,
        Command::Sweep { problem, cutoffs } => cmd_sweep(&parse_instance(problem)?, cutoffs)?,
        Command::VerifyCmon { problem } => cmd_verify_cmon(&parse_instance(problem)?)?,
        Command::Potentials { problem } => cmd_potentials(&parse_instance(problem)?)?,
        Command::Subsidy { problem } => cmd_subsidy(&parse_instance(problem)?)?,
        Command::Decompose { problem } => cmd_decompose(&parse_instance(problem)?)?,
        Command::MmCheck { problem, n, count } => cmd_mm_check(&parse_instance(problem)?, *n, g.seed, *count)?,
        Command::Verify { problem, report } => cmd_verify(&parse_instance(problem)?, report, g.tolerance)?,
    };
    let mut report = outcome.report;
    if g.timing {
        report.timing = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok((emit_report(&report, g.format), outcome.code))
}

/// Runs the command line; returns the bytes for stdout, a diagnostic for
/// stderr and the exit code.
pub fn run(cli: &Cli) -> (Vec<u8>, String, i32) {
    let go = || match dispatch(cli) {
        Ok((out, code)) => (out, String::new(), code),
        Err(e) => (Vec::new(), format!("error: {e}\n"), exit_code(&e)),
    };
    match cli.global.parallel {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(go),
            Err(e) => (Vec::new(), format!("error: thread pool: {e}\n"), 3),
        },
        None => go(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIX_A: &str = r#"{"mu": [0.5, 0.5], "nu": [0.5, 0.5], "cost": [[0, 1], [1, 0]]}"#;
    const FIX_C: &str = r#"{"mu": [0.3333333333, 0.3333333333, 0.3333333334], "nu": [1, 1, 1],
        "cost": [[1, "inf", "inf"], [0, 1, "inf"], [0, 0, 1]]}"#;

    fn parse(s: &str) -> Result<Problem> {
        parse_problem_bytes(s.as_bytes(), "test")
    }

    #[test]
    fn parses_fix_a() {
        let p = parse(FIX_A).unwrap();
        assert_eq!(p.instance.c.rows(), 2);
        assert_eq!(p.instance.c.get(0, 1), 1.0);
        assert_eq!(p.input_hash.len(), 64);
    }

    #[test]
    fn inf_strings_become_infinite() {
        let err = parse(FIX_C).unwrap_err();
        // nu sums to 3
        assert!(matches!(err, Error::InvalidValue { ref field, .. } if field == "nu"), "{err}");
        let fixed = FIX_C.replace("[1, 1, 1]", "[0.3333333333, 0.3333333333, 0.3333333334]");
        let p = parse(&fixed).unwrap();
        assert_eq!(p.instance.c.get(0, 1), f64::INFINITY);
        assert_eq!(p.instance.c.get(2, 0), 0.0);
    }

    #[test]
    fn bad_weights_rejected() {
        let s = r#"{"mu": [0.45, 0.45], "nu": [0.5, 0.5], "cost": [[0, 1], [1, 0]]}"#;
        match parse(s).unwrap_err() {
            Error::InvalidValue { field, reason } => {
                assert_eq!(field, "mu");
                assert!(reason.contains("0.9"));
            }
            e => panic!("{e}"),
        }
        let e = parse(r#"{"mu": [0.5, 0.5], "nu": [0.5, 0.5], "cost": [[0, 1]]}"#).unwrap_err();
        assert!(matches!(e, Error::DimensionMismatch(_)));
        let e = parse("{\"mu\": [1],\n \"nu\": }").unwrap_err();
        assert!(e.to_string().contains("test:2:"), "{e}");
    }

    #[test]
    fn zero_weight_points_are_dropped() {
        let s = r#"{"mu": [0.5, 0, 0.5], "nu": [0.5, 0.5], "cost": [[0, 1], [5, 5], [1, 0]]}"#;
        let p = parse(s).unwrap();
        assert_eq!(p.instance.c.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(p.dropped_x, vec![1]);
    }

    #[test]
    fn random_instances_are_reproducible() {
        let a = gen_random(3, 3, 42, 0.0).unwrap();
        let b = gen_random(3, 3, 42, 0.0).unwrap();
        assert_eq!(a, b);
        assert!(a.c.data().iter().all(|v| v.is_finite()));
        assert!((a.mu.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(gen_random(0, 3, 1, 0.0).is_err());
        assert!(gen_random(3, 3, 1, 1.0).is_err());
        let d = gen_random(20, 20, 5, 0.5).unwrap();
        assert!(d.c.data().iter().any(|v| v.is_infinite()));
    }

    #[test]
    fn sweep_csv() {
        let p = parse(&FIX_C.replace("[1, 1, 1]", "[0.3333333333, 0.3333333333, 0.3333333334]")).unwrap();
        let out = cmd_sweep(&p, &[0.5, 1.0, 2.0]).unwrap();
        let csv = String::from_utf8(emit_report(&out.report, Format::Csv)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("cutoff,value"));
        let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn infeasible_solve_has_no_plan() {
        let s = r#"{"mu": [0.5, 0.5], "nu": [0.5, 0.5], "cost": [["inf", "inf"], [0, 0]]}"#;
        let out = cmd_solve(&parse(s).unwrap()).unwrap();
        assert_eq!(out.code, 1);
        let json: serde_json::Value = serde_json::from_slice(&emit_report(&out.report, Format::Json)).unwrap();
        assert_eq!(json["status"], "infeasible");
        assert!(json.get("plan").is_none());
    }

    #[test]
    fn cycle_certificate_round_trips_and_verifies() {
        let s = r#"{"mu": [0.5, 0.5], "nu": [0.5, 0.5], "cost": [[0, 1], [1, 0]], "plan": [[0, 0.5], [0.5, 0]]}"#;
        let p = parse(s).unwrap();
        let out = cmd_verify_cmon(&p).unwrap();
        assert_eq!(out.code, 1);
        let bytes = emit_report(&out.report, Format::Json);
        let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(json["certificates"][0]["type"], "cycle");
        assert_eq!(json["certificates"][0]["totalWeight"], -2.0);
        let back: Report = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, out.report);
        let checks = verify_report(&p, &back, 1e-9).unwrap();
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");

        let mut forged = back.clone();
        if let Certificate::Cycle { cycle, .. } = &mut forged.certificates[0] {
            cycle.total_weight = ExtReal::from_f64(-3.0);
        }
        assert!(verify_report(&p, &forged, 1e-9).unwrap().iter().any(|c| !c.pass));
    }

    #[test]
    fn reports_are_deterministic() {
        let p = parse(FIX_A).unwrap();
        let a = emit_report(&cmd_solve(&p).unwrap().report, Format::Json);
        let b = emit_report(&cmd_solve(&p).unwrap().report, Format::Json);
        assert_eq!(a, b);
        assert!(!String::from_utf8(a).unwrap().contains("timing"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Internal("x".into())), 3);
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
    }
}
