//! Command implementations. Every command returns its artifacts as strings so runs can be
//! compared byte for byte; ids in all outputs are 1-based.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use netguard_core::consensus::{simulate, simulate_matrix, ConsensusMatrix, Trajectory};
use netguard_core::detect::{
    block_decompose, build_local_bank, calibrate_threshold, calibrate_with_range, complete_identification,
    local_identification, Admissible, Assumption, BlockDecomposition, DetectionFilter, IdentificationOptions,
    IdentificationStatus, LocalBank, LocalGenerator, ZERO_FLOOR,
};
use netguard_core::fdi::{run_residual, ResidualGenerator};
use netguard_core::graph::{resilience_bounds, DiGraph};
use netguard_core::numerics::{inf_norm, Matrix, Vector};
use netguard_core::serde_util::matrix::{from_rows, to_rows};
use netguard_core::sysan::{analyze_batch, AnalysisOptions, ZeroSet};
use netguard_core::Error as CoreError;
use serde::Serialize;

use crate::scenario::{zero_based, CalibrationMode, Resolved, Scenario};
use crate::{CliError, Mode, EXIT_AMBIGUOUS, EXIT_CALIBRATION, EXIT_INVALID_MATRIX, EXIT_OK, EXIT_PENDING};

/// Artifacts of one command; `None` entries are not written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub exit: i32,
    pub summary: String,
    pub trace: Option<String>,
    pub verdict: Option<String>,
    pub report: Option<String>,
}

impl CommandOutput {
    fn new(exit: i32, summary: String) -> Self {
        Self { exit, summary, trace: None, verdict: None, report: None }
    }
}

fn one_based(ids: &[usize]) -> Vec<usize> {
    ids.iter().map(|i| i + 1).collect()
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn set_label(ids: &[usize]) -> String {
    let parts: Vec<String> = ids.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

fn csv_string(header: &[String], rows: Vec<Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

const PROPERTIES: [&str; 7] = ["square", "finite", "nonnegative", "row sums", "irreducible", "primitive", "stationary vector"];

fn failed_property(e: &CoreError) -> (usize, String) {
    match e {
        CoreError::NotSquare { rows, cols } => (0, format!("{rows}x{cols}")),
        CoreError::NonFinite { row, col } => (1, format!("entry ({}, {}) is not finite", row + 1, col + 1)),
        CoreError::NegativeEntry { row, col, value } => (2, format!("entry ({}, {}) = {value}", row + 1, col + 1)),
        CoreError::RowSum { row, sum } => (3, format!("row {} sums to {sum} (expected 1)", row + 1)),
        CoreError::Reducible => (4, "graph is not strongly connected".into()),
        CoreError::Imprimitive => (5, "no positive power up to the Wielandt exponent".into()),
        other => (6, other.to_string()),
    }
}

/// Property-by-property consensus check of a matrix file or a scenario's matrix.
pub fn validate(matrix: Option<&Path>, scenario: Option<&Path>) -> Result<CommandOutput, CliError> {
    let a = match (matrix, scenario) {
        (Some(m), _) => crate::scenario::load_matrix_file(m)?,
        (None, Some(s)) => {
            let (sc, base) = Scenario::load(s)?;
            sc.load_matrix(&base)?
        }
        (None, None) => return Err(CliError::Scenario("validate needs --matrix or --scenario".into())),
    };
    let (summary, exit) = validation_summary(&a);
    Ok(CommandOutput::new(exit, summary))
}

pub fn validation_summary(a: &Matrix) -> (String, i32) {
    let mut out = String::new();
    match ConsensusMatrix::validate(a.clone()) {
        Ok(c) => {
            for p in PROPERTIES {
                let _ = writeln!(out, "{p}: ok");
            }
            let _ = writeln!(out, "pi = {}", fmt_vec(c.pi()));
            let _ = writeln!(out, "valid consensus matrix");
            (out, EXIT_OK)
        }
        Err(e) => {
            let (stage, msg) = failed_property(&e);
            for (i, p) in PROPERTIES.iter().enumerate() {
                let status = match i.cmp(&stage) {
                    std::cmp::Ordering::Less => "ok".to_string(),
                    std::cmp::Ordering::Equal => format!("FAIL ({msg})"),
                    std::cmp::Ordering::Greater => "not checked".to_string(),
                };
                let _ = writeln!(out, "{p}: {status}");
            }
            let _ = writeln!(out, "invalid consensus matrix: {msg}");
            (out, EXIT_INVALID_MATRIX)
        }
    }
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Dispatches a scenario command.
pub fn run_command(mode: Mode, scenario: Scenario, base: &Path, seed: Option<u64>) -> Result<CommandOutput, CliError> {
    let r = scenario.resolve(base, mode, seed)?;
    match mode {
        Mode::Validate => {
            let (summary, exit) = validation_summary(&r.matrix);
            Ok(CommandOutput::new(exit, summary))
        }
        Mode::Analyze => analyze(&r),
        Mode::Simulate => simulate_cmd(&r),
        Mode::Detect => detect(&r),
        Mode::Identify => identify(&r),
        Mode::LocalIdentify => local_identify(&r),
    }
}

#[derive(Serialize)]
struct ZeroRepr {
    re: f64,
    im: f64,
    residual: f64,
}

#[derive(Serialize)]
struct PairReport {
    inputs: Vec<usize>,
    observer: usize,
    observed: Vec<usize>,
    normal_rank: usize,
    left_invertible: bool,
    /// `null` when every complex number is a zero.
    zeros: Option<Vec<ZeroRepr>>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    n: usize,
    valid_consensus: bool,
    validation_error: Option<String>,
    connectivity: usize,
    max_faulty: usize,
    max_malicious: usize,
    seed: u64,
    pairs: Vec<PairReport>,
}

fn analyze(r: &Resolved) -> Result<CommandOutput, CliError> {
    let n = r.n();
    let graph = DiGraph::from_matrix(&r.matrix, 0.0);
    let bounds = resilience_bounds(&graph);
    let validation_error = ConsensusMatrix::validate(r.matrix.clone()).err().map(|e| e.to_string());
    let mut pairs: Vec<(Vec<usize>, usize)> = Vec::new();
    if let Some(spec) = &r.scenario.analysis {
        for p in &spec.pairs {
            let k = zero_based(&p.inputs, n, "analysis inputs")?;
            let j = zero_based(&[p.observer], n, "analysis observer")?[0];
            pairs.push((k, j));
        }
        if let Some(size) = spec.all_pairs {
            if size == 0 || size >= n {
                return Err(CliError::Scenario(format!("all_pairs size {size} must be in 1..{n}")));
            }
            for k in combinations(n, size) {
                for j in (0..n).filter(|j| !k.contains(j)) {
                    pairs.push((k.clone(), j));
                }
            }
        }
    }
    let opts = AnalysisOptions { tol: r.tol, seed: r.seed };
    let results = analyze_batch(&r.matrix, &pairs, &opts)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "agents: {n}");
    match &validation_error {
        None => {
            let _ = writeln!(summary, "valid consensus matrix");
        }
        Some(e) => {
            let _ = writeln!(summary, "not a consensus matrix: {e}");
        }
    }
    let _ = writeln!(summary, "connectivity: {}", bounds.connectivity);
    let _ = writeln!(summary, "max faulty: {}", bounds.max_generic_faulty);
    let _ = writeln!(summary, "max malicious: {}", bounds.max_generic_malicious);
    let mut reports = Vec::with_capacity(results.len());
    for pa in &results {
        let mut observed: BTreeSet<usize> = graph.in_neighbors(pa.observer).into_iter().collect();
        observed.insert(pa.observer);
        let zeros = match &pa.analysis.zeros {
            ZeroSet::Finite(z) => {
                Some(z.iter().map(|z| ZeroRepr { re: z.value.re, im: z.value.im, residual: z.residual }).collect::<Vec<_>>())
            }
            ZeroSet::Infinite => None,
        };
        let desc = match &zeros {
            None => "not left-invertible".to_string(),
            Some(z) if z.is_empty() => "left-invertible, no zeros".to_string(),
            Some(z) => {
                let parts: Vec<String> = z.iter().map(|z| fmt_complex(z.re, z.im)).collect();
                format!("left-invertible, zeros [{}]", parts.join(", "))
            }
        };
        let _ = writeln!(summary, "K={} j={}: {desc}", set_label(&pa.agents), pa.observer + 1);
        reports.push(PairReport {
            inputs: one_based(&pa.agents),
            observer: pa.observer + 1,
            observed: observed.iter().map(|i| i + 1).collect(),
            normal_rank: pa.analysis.normal_rank.rank,
            left_invertible: pa.analysis.left_invertible,
            zeros,
        });
    }
    let report = AnalyzeReport {
        n,
        valid_consensus: validation_error.is_none(),
        validation_error,
        connectivity: bounds.connectivity,
        max_faulty: bounds.max_generic_faulty,
        max_malicious: bounds.max_generic_malicious,
        seed: r.seed,
        pairs: reports,
    };
    let mut out = CommandOutput::new(EXIT_OK, summary);
    out.report = Some(json(&report));
    Ok(out)
}

fn fmt_complex(re: f64, im: f64) -> String {
    let clean = |v: f64| if v.abs() < 5e-13 { 0.0 } else { v };
    let (re, im) = (clean(re), clean(im));
    if im == 0.0 {
        format!("{re:.6}")
    } else {
        format!("{re:.6}{im:+.6}i")
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn consensus(r: &Resolved) -> Result<ConsensusMatrix, CliError> {
    Ok(ConsensusMatrix::validate(r.matrix.clone())?)
}

fn trajectory(r: &Resolved) -> Result<Trajectory, CliError> {
    Ok(simulate_matrix(&r.matrix, &r.initial_state, &r.attacks, r.scenario.horizon)?)
}

#[derive(Serialize)]
struct SimulateReport {
    n: usize,
    horizon: usize,
    attacked: Vec<usize>,
    initial_state: Vec<f64>,
    final_state: Vec<f64>,
    /// `pi . x(0)`, the unattacked agreement value, when the matrix is a consensus matrix.
    unattacked_consensus: Option<f64>,
    final_spread: f64,
    seed: u64,
}

fn simulate_cmd(r: &Resolved) -> Result<CommandOutput, CliError> {
    let n = r.n();
    let tr = trajectory(r)?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(tr.agents.iter().map(|a| format!("u_{}", a + 1)));
    let rows = (0..tr.steps())
        .map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(tr.states[t].iter().map(|v| num(*v)));
            row.extend(tr.inputs[t].iter().map(|v| num(*v)));
            row
        })
        .collect();
    let fin = tr.final_state();
    let pi = ConsensusMatrix::validate(r.matrix.clone()).ok().map(|c| c.pi().dot(&r.initial_state));
    let spread = fin.max() - fin.min();
    let report = SimulateReport {
        n,
        horizon: r.scenario.horizon,
        attacked: one_based(&tr.agents),
        initial_state: r.initial_state.iter().copied().collect(),
        final_state: fin.iter().copied().collect(),
        unattacked_consensus: pi,
        final_spread: spread,
        seed: r.seed,
    };
    let summary = format!(
        "simulated {} steps, attacked {}, final spread {spread:.3e}\n",
        tr.steps(),
        set_label(&tr.agents)
    );
    let mut out = CommandOutput::new(EXIT_OK, summary);
    out.trace = Some(csv_string(&header, rows)?);
    out.report = Some(json(&report));
    Ok(out)
}

#[derive(Serialize)]
struct DetectVerdict {
    observer: usize,
    status: &'static str,
    floor: f64,
    alarm_steps: usize,
    first_alarm: Option<usize>,
    last_alarm: Option<usize>,
    final_residual: f64,
    final_estimation_error: f64,
    horizon: usize,
    seed: u64,
}

fn detect(r: &Resolved) -> Result<CommandOutput, CliError> {
    let c = consensus(r)?;
    let j = r.require_observer()?;
    let floor = r.scenario.detection_floor.unwrap_or(1e-6);
    let tr = simulate(&c, &r.initial_state, &r.attacks, r.scenario.horizon)?;
    let mut filter = DetectionFilter::new(&c, j)?;
    let ys = tr.outputs(filter.observed());
    let (estimates, residuals) = filter.run(&ys);
    let header: Vec<String> = ["t", "residual", "estimation_error"].iter().map(|s| s.to_string()).collect();
    let errors: Vec<f64> = estimates.iter().zip(&tr.states).map(|(e, x)| (e - x).amax()).collect();
    let norms: Vec<f64> = residuals.iter().map(|v| v.amax()).collect();
    let rows = (0..norms.len()).map(|t| vec![t.to_string(), num(norms[t]), num(errors[t])]).collect();
    let alarms: Vec<usize> = (0..norms.len()).filter(|&t| norms[t] > floor).collect();
    let final_residual = norms.last().copied().unwrap_or(0.0);
    let status = if final_residual > floor { "alarm" } else { "clean" };
    let verdict = DetectVerdict {
        observer: j + 1,
        status,
        floor,
        alarm_steps: alarms.len(),
        first_alarm: alarms.first().copied(),
        last_alarm: alarms.last().copied(),
        final_residual,
        final_estimation_error: errors.last().copied().unwrap_or(0.0),
        horizon: r.scenario.horizon,
        seed: r.seed,
    };
    let summary = format!("observer {}: {status} (final residual {final_residual:.3e})\n", j + 1);
    let mut out = CommandOutput::new(EXIT_OK, summary);
    out.trace = Some(csv_string(&header, rows)?);
    out.verdict = Some(json(&verdict));
    Ok(out)
}

#[derive(Serialize)]
struct IdentifyVerdict {
    observer: usize,
    identified: Vec<usize>,
    status: IdentificationStatus,
    horizon: usize,
    candidates: Vec<Vec<usize>>,
    cleared: Vec<usize>,
    k: usize,
    assumption: Assumption,
    unsolvable: Vec<(usize, Vec<usize>)>,
    seed: u64,
    steps: usize,
}

fn identify(r: &Resolved) -> Result<CommandOutput, CliError> {
    let c = consensus(r)?;
    let j = r.require_observer()?;
    let assumption = r.scenario.assumption.unwrap_or(Assumption::Faulty);
    let bounds = resilience_bounds(c.graph());
    let k = r.scenario.k.unwrap_or(match assumption {
        Assumption::Faulty => bounds.max_generic_faulty,
        Assumption::Malicious => bounds.max_generic_malicious,
    });
    let horizon = r.scenario.horizon;
    let tr = simulate(&c, &r.initial_state, &r.attacks, horizon)?;
    let ys = tr.outputs(&c.observed_agents(j));
    let opts = IdentificationOptions { assumption, floor: ZERO_FLOOR, tol: r.tol };
    let (v, id) = complete_identification(&c, j, k, &ys[..horizon], opts)?;
    let mut header: Vec<String> = vec!["t".into(), "candidate".into()];
    header.extend((1..=k + 1).map(|i| format!("residual_{i}")));
    let mut rows = Vec::new();
    for bank in id.banks() {
        let label = bank.set.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("-");
        for (t, norms) in bank.history.iter().enumerate() {
            let mut row = vec![t.to_string(), label.clone()];
            row.extend(norms.iter().map(|v| num(*v)));
            rows.push(row);
        }
    }
    let verdict = IdentifyVerdict {
        observer: j + 1,
        identified: one_based(&v.identified),
        status: v.status,
        horizon: v.horizon,
        candidates: v.candidates.iter().map(|s| one_based(s)).collect(),
        cleared: one_based(&v.cleared),
        k,
        assumption,
        unsolvable: v.unsolvable.iter().map(|(i, s)| (i + 1, one_based(s))).collect(),
        seed: r.seed,
        steps: v.steps,
    };
    let (exit, line) = match v.status {
        IdentificationStatus::Identified => (EXIT_OK, format!("identified {}", set_label(&v.identified))),
        IdentificationStatus::Ambiguous => {
            let c: Vec<String> = v.candidates.iter().map(|s| set_label(s)).collect();
            (EXIT_AMBIGUOUS, format!("ambiguous between {}", c.join(" and ")))
        }
        IdentificationStatus::Pending => {
            (EXIT_PENDING, format!("pending: {} samples, horizon {}", v.steps, v.horizon))
        }
    };
    let summary = format!("observer {}: {line}\n", j + 1);
    let mut out = CommandOutput::new(exit, summary);
    out.trace = Some(csv_string(&header, rows)?);
    out.verdict = Some(json(&verdict));
    Ok(out)
}

#[derive(Serialize)]
struct Statistic {
    agent: usize,
    value: f64,
}

#[derive(Serialize)]
struct LocalVerdictOut {
    observer: usize,
    block: usize,
    identified: Vec<usize>,
    status: &'static str,
    threshold: Option<f64>,
    horizon: usize,
    epsilon: f64,
    alpha: Option<f64>,
    u_min: f64,
    u_max: f64,
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
    crossing_epsilon: Option<f64>,
    statistics: Vec<Statistic>,
    seed: u64,
}

#[derive(Serialize)]
struct LocalReport {
    partition: Vec<Vec<usize>>,
    epsilon: f64,
    a_d: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    observed: Vec<usize>,
    generators: Vec<GeneratorReport>,
}

#[derive(Serialize)]
struct GeneratorReport {
    target: usize,
    candidate: Vec<usize>,
    horizon: usize,
    f: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

fn decomposition(r: &Resolved, partition: &[Vec<usize>]) -> Result<BlockDecomposition, CliError> {
    let spec = r.scenario.local.as_ref().expect("checked by caller");
    match &spec.decomposition {
        Some(d) => {
            let bad = |e: String| CliError::Scenario(e);
            let dec = BlockDecomposition::from_parts(from_rows(&d.a_d).map_err(bad)?, from_rows(&d.delta).map_err(bad)?, d.epsilon, partition)?;
            let gap = inf_norm(&(dec.matrix() - &r.matrix));
            if gap > 1e-9 {
                return Err(CliError::Scenario(format!("matrix differs from A_d + eps * Delta by {gap:e}")));
            }
            Ok(dec)
        }
        None => Ok(block_decompose(&r.matrix, partition)?),
    }
}

fn local_bank(r: &Resolved, d: &BlockDecomposition, h: usize, j: usize) -> Result<LocalBank, CliError> {
    let spec = r.scenario.local.as_ref().expect("checked by caller");
    let n = r.n();
    let members = d.members(h)?;
    match &spec.filters {
        Some(fb) => {
            let observed = zero_based(&fb.observed, n, "filter observed")?;
            let bad = |e: String| CliError::Scenario(e);
            let mut gens = Vec::with_capacity(fb.generators.len());
            for g in &fb.generators {
                let target = zero_based(&[g.target], n, "filter target")?[0];
                let candidate = zero_based(&g.candidate, n, "filter candidate")?;
                let mut gen = ResidualGenerator::from_matrices(
                    from_rows(&g.f).map_err(bad)?,
                    from_rows(&g.e).map_err(bad)?,
                    from_rows(&g.m).map_err(bad)?,
                    from_rows(&g.h).map_err(bad)?,
                )?;
                gen.target = vec![target];
                gen.decoupled = candidate.iter().copied().filter(|&c| c != target).collect();
                gens.push(LocalGenerator { candidate, target, generator: gen });
            }
            Ok(LocalBank::from_generators(h, j, members, observed, gens)?)
        }
        None => Ok(build_local_bank(d, h, j, spec.k, r.scenario.assumption.unwrap_or(Assumption::Faulty), r.tol)?),
    }
}

fn local_identify(r: &Resolved) -> Result<CommandOutput, CliError> {
    let spec = r.scenario.local.as_ref().ok_or_else(|| CliError::Scenario("local-identify needs a local block".into()))?;
    let n = r.n();
    let j = r.require_observer()?;
    let partition = r.partition()?;
    if spec.block == 0 || spec.block > partition.len() {
        return Err(CliError::Scenario(format!("block {} outside 1..={}", spec.block, partition.len())));
    }
    let h = spec.block - 1;
    let d = decomposition(r, &partition)?;
    let bank = local_bank(r, &d, h, j)?;
    let hypothesis = match &spec.hypothesis {
        Some(hs) => zero_based(hs, n, "hypothesis")?,
        None => r.attacked_agents(),
    };
    let adm = Admissible {
        misbehaving: hypothesis,
        x0_bound: spec.x0_bound,
        u_min: spec.u_min,
        u_max: spec.u_max,
        sign: spec.sign,
    };
    let cal = match spec.calibration {
        CalibrationMode::Range => calibrate_with_range(&d, &bank, &adm),
        CalibrationMode::Alpha => calibrate_threshold(&d, &bank, &adm),
    };
    let horizon = r.scenario.horizon;
    let tr = simulate_matrix(&d.matrix(), &r.initial_state, &r.attacks, horizon)?;
    let ys = tr.outputs(&bank.observed);
    let mut header: Vec<String> = ["t", "candidate", "target"].iter().map(|s| s.to_string()).collect();
    let dim = bank.generators.iter().map(|g| g.generator.residual_dim()).max().unwrap_or(0);
    header.push("residual".into());
    header.extend((1..=dim).map(|i| format!("r_{i}")));
    let mut rows = Vec::new();
    for g in &bank.generators {
        let label = g.candidate.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("-");
        for (t, res) in run_residual(&g.generator, &ys[..horizon]).iter().enumerate() {
            let mut row = vec![t.to_string(), label.clone(), (g.target + 1).to_string(), num(res.amax())];
            row.extend((0..dim).map(|i| res.get(i).map_or(String::new(), |v| num(*v))));
            rows.push(row);
        }
    }
    let report = LocalReport {
        partition: partition.iter().map(|b| one_based(b)).collect(),
        epsilon: d.epsilon,
        a_d: to_rows(&d.a_d),
        delta: to_rows(&d.delta),
        observed: one_based(&bank.observed),
        generators: bank
            .generators
            .iter()
            .map(|g| GeneratorReport {
                target: g.target + 1,
                candidate: one_based(&g.candidate),
                horizon: g.generator.horizon,
                f: to_rows(&g.generator.f),
                e: to_rows(&g.generator.e),
                m: to_rows(&g.generator.m),
                h: to_rows(&g.generator.h),
            })
            .collect(),
    };
    let mut verdict = LocalVerdictOut {
        observer: j + 1,
        block: spec.block,
        identified: Vec::new(),
        status: "identified",
        threshold: None,
        horizon: bank.horizon,
        epsilon: d.epsilon,
        alpha: None,
        u_min: adm.u_min,
        u_max: adm.u_max,
        lower_bound: None,
        upper_bound: None,
        crossing_epsilon: None,
        statistics: Vec::new(),
        seed: r.seed,
    };
    let (exit, summary) = match cal {
        Ok(cal) => {
            let v = local_identification(&bank, &cal, &ys)?;
            verdict.identified = one_based(&v.flagged);
            verdict.threshold = Some(cal.threshold);
            verdict.alpha = Some(cal.alpha);
            verdict.u_min = cal.u_min;
            verdict.lower_bound = Some(cal.bounds.lower);
            verdict.upper_bound = Some(cal.bounds.upper);
            verdict.statistics = v.statistics.iter().map(|&(a, value)| Statistic { agent: a + 1, value }).collect();
            let line = format!(
                "observer {}: identified {} in block {} (threshold {:.4}, time {})\n",
                j + 1,
                set_label(&v.flagged),
                spec.block,
                cal.threshold,
                v.time
            );
            (EXIT_OK, line)
        }
        Err(CoreError::CalibrationFailure { epsilon, crossing }) => {
            verdict.status = "calibration_failure";
            verdict.crossing_epsilon = crossing;
            let line = format!(
                "observer {}: calibration failed at eps = {epsilon}; bounds cross at eps* = {}\n",
                j + 1,
                crossing.map_or("none".to_string(), |c| format!("{c:.4}"))
            );
            (EXIT_CALIBRATION, line)
        }
        Err(e) => return Err(e.into()),
    };
    let mut out = CommandOutput::new(exit, summary);
    out.trace = Some(csv_string(&header, rows)?);
    out.verdict = Some(json(&verdict));
    out.report = Some(json(&report));
    Ok(out)
}
