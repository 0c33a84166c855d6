use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use faithsim::measurement::{coarse_grain, conditional_branch, measurements_equivalent, Povm};
use faithsim::operator::{canonical_purification, ComplexOperator};
use faithsim::protocol::{run_trials, FaithfulnessReport, ProtocolParams, ProtocolSetup, SetupSummary, TrialOutcome};
use faithsim::rates::{evaluate_rate_region, BobOption, RatePoint, RateQuantities, RateRegionReport};
use faithsim::sizing::SizeSpec;
use faithsim::stats::{jonckheere_terpstra, TrendTest};
use faithsim::Scenario;
use serde::Serialize;

use crate::config::{dim_cap, Axis, Format, ScenarioConfig, SweepSpec};
use crate::error::CliError;

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub trials: Option<usize>,
    pub sweep: Option<SweepSpec>,
}

impl RunOptions {
    fn apply(&self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = cfg.clone();
        if let Some(s) = self.seed {
            cfg.protocol.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            cfg.output.format = Some(f);
        }
        if let Some(s) = &self.sweep {
            cfg.sweep = Some(s.clone());
        }
        cfg
    }
}

/// Where the main document and the human summary go.
struct Sink {
    path: Option<PathBuf>,
    format: Format,
}

impl Sink {
    fn new(cfg: &ScenarioConfig, default: Format) -> Self {
        let path = cfg.output.path.clone();
        let inferred = path.as_deref().and_then(|p| match p.extension()?.to_str()? {
            "json" => Some(Format::Json),
            "csv" => Some(Format::Csv),
            _ => None,
        });
        Sink {
            format: cfg.output.format.or(inferred).unwrap_or(default),
            path,
        }
    }

    fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.path {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    /// The human summary shares stdout only when the document goes to a file.
    fn summary(&self) -> Box<dyn Write> {
        match self.path {
            Some(_) => Box::new(io::stdout().lock()),
            None => Box::new(io::stderr().lock()),
        }
    }

    /// Companion JSON next to a CSV output.
    fn side_path(&self) -> Option<PathBuf> {
        let p = self.path.as_ref()?;
        Some(if p.extension().is_some_and(|e| e == "json") {
            p.with_extension("aggregate.json")
        } else {
            p.with_extension("json")
        })
    }
}

fn write_json<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_json(&mut w, value)
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Validation(format!("threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn scenario_name(cfg: &ScenarioConfig) -> String {
    cfg.name.clone().unwrap_or_else(|| "custom".into())
}

// ---------------------------------------------------------------------------
// rates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Corners {
    pub with_alice_randomness: RatePoint,
    pub without: RatePoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesDocument {
    pub scenario: String,
    pub report: RateRegionReport,
    pub corners: Corners,
}

pub fn rates(cfg: &ScenarioConfig) -> Result<RatesDocument, CliError> {
    let sc = cfg.scenario()?;
    let report = evaluate_rate_region(&sc.rho, &sc.povm, &sc.g_a, &sc.g_b).map_err(|e| CliError::from_core("rates", e))?;
    Ok(RatesDocument {
        scenario: scenario_name(cfg),
        corners: Corners {
            with_alice_randomness: report.corner(BobOption::WithAliceRandomness),
            without: report.corner(BobOption::WithoutAliceRandomness),
        },
        report,
    })
}

pub fn corner_table(doc: &RatesDocument) -> String {
    let mut s = format!(
        "{}: I(X_A;R) = {:.6}, H(X_A) = {:.6}\n{:<24}{:>10}{:>10}{:>10}{:>10}\n",
        doc.scenario, doc.report.i_xa_r, doc.report.h_xa, "corner", "R_A", "S_A", "R_B", "S_B"
    );
    for (label, p) in [
        ("with_alice_randomness", &doc.corners.with_alice_randomness),
        ("without", &doc.corners.without),
    ] {
        s += &format!("{:<24}{:>10.6}{:>10.6}{:>10.6}{:>10.6}\n", label, p.r_a, p.s_a, p.r_b, p.s_b);
    }
    s
}

pub fn cmd_rates(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(), CliError> {
    let cfg = opts.apply(cfg);
    let doc = rates(&cfg)?;
    let sink = Sink::new(&cfg, Format::Json);
    let mut w = sink.writer()?;
    match sink.format {
        Format::Json => write_json(&mut *w, &doc)?,
        Format::Csv => {
            writeln!(w, "scenario,{}", RateRegionReport::CSV_HEADER)?;
            writeln!(w, "{},{}", doc.scenario, doc.report.csv_row())?;
            w.flush()?;
        }
    }
    write!(sink.summary(), "{}", corner_table(&doc))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// equivalence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceDocument {
    pub scenario: String,
    pub equivalent: bool,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub per_outcome: Vec<f64>,
    pub corrupted: bool,
}

/// Sequential composition with the first two conditional elements of the first
/// non-empty branch swapped.
fn corrupted_sequential(sc: &Scenario) -> Result<Povm<f64>, CliError> {
    let dim = sc.dim();
    let nb = sc.g_b.image_size();
    if nb < 2 {
        return Err(CliError::Validation("corrupt_conditional: gB needs at least two outcomes".into()));
    }
    let mut out = vec![ComplexOperator::zeros(dim); nb];
    let mut corrupted = false;
    for x_a in 0..sc.g_a.image_size() {
        let branch = match conditional_branch(&sc.povm, &sc.g_a, &sc.g_b, x_a) {
            Ok(b) => b,
            Err(faithsim::Error::EmptyBranch { .. }) => continue,
            Err(e) => return Err(CliError::from_core("equivalence", e)),
        };
        let mut elements = branch.povm.proper_elements().to_vec();
        if !corrupted {
            elements.swap(0, 1);
            corrupted = true;
        }
        for (x_b, e) in elements.iter().enumerate() {
            out[x_b] += &e.conjugate_by(&branch.sqrt_coarse);
        }
    }
    Povm::new(out.into_iter().map(|e| e.hermitian_part()).collect()).map_err(|e| CliError::from_core("equivalence", e))
}

pub fn equivalence(cfg: &ScenarioConfig) -> Result<EquivalenceDocument, CliError> {
    let sc = cfg.scenario()?;
    let core = |e| CliError::from_core("equivalence", e);
    let direct = coarse_grain(&sc.povm, &sc.g_b).map_err(core)?;
    let sequential = if cfg.corrupt_conditional {
        corrupted_sequential(&sc)?
    } else {
        faithsim::measurement::sequential_composition(&sc.povm, &sc.g_a, &sc.g_b).map_err(core)?
    };
    let phi = canonical_purification(&sc.rho);
    let eq = measurements_equivalent(&phi, &direct, &sequential, cfg.equivalence_tol).map_err(core)?;
    Ok(EquivalenceDocument {
        scenario: scenario_name(cfg),
        equivalent: eq.equivalent,
        tolerance: cfg.equivalence_tol,
        max_deviation: eq.max_deviation,
        per_outcome: eq.per_outcome,
        corrupted: cfg.corrupt_conditional,
    })
}

pub fn cmd_equivalence(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(), CliError> {
    let cfg = opts.apply(cfg);
    let doc = equivalence(&cfg)?;
    let sink = Sink::new(&cfg, Format::Json);
    let mut w = sink.writer()?;
    match sink.format {
        Format::Json => write_json(&mut *w, &doc)?,
        Format::Csv => {
            writeln!(w, "scenario,equivalent,tolerance,max_deviation")?;
            writeln!(w, "{},{},{},{}", doc.scenario, doc.equivalent, doc.tolerance, doc.max_deviation)?;
            w.flush()?;
        }
    }
    writeln!(
        sink.summary(),
        "{}: equivalent = {} (max deviation {:e}, tolerance {:e})",
        doc.scenario, doc.equivalent, doc.max_deviation, doc.tolerance
    )?;
    if doc.equivalent {
        Ok(())
    } else {
        Err(CliError::NotEquivalent(doc.max_deviation))
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub n: usize,
    #[serde(rename = "sB")]
    pub s_b: u64,
    #[serde(rename = "MB")]
    pub m_b: u64,
    pub case: u8,
    pub mode: &'static str,
    pub trial: u64,
    pub d: f64,
    pub d2: f64,
    pub d3: f64,
    pub fallback: bool,
    pub ec: bool,
    pub e0_ok: bool,
    pub bits_to_alice: f64,
    pub bits_to_bob: f64,
    pub d_alice: f64,
    pub atypical: f64,
    pub garbage_mass: f64,
}

impl TrialRow {
    fn new(p: &ProtocolParams, o: &TrialOutcome) -> Self {
        TrialRow {
            n: p.n,
            s_b: p.s_b,
            m_b: p.m_b,
            case: p.case.number(),
            mode: p.mode.as_str(),
            trial: o.trial,
            d: o.distances.d,
            d2: o.distances.d2,
            d3: o.distances.d3,
            fallback: o.fallback,
            ec: o.ec(),
            e0_ok: o.e0.holds,
            bits_to_alice: o.transcript.bits_to_alice,
            bits_to_bob: o.transcript.bits_to_bob,
            d_alice: o.distances.d_alice,
            atypical: o.distances.atypical,
            garbage_mass: o.distances.garbage_mass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationAggregate {
    pub scenario: String,
    pub params: ProtocolParams,
    pub quantities: RateQuantities,
    /// Bob's single-letter communication target for the selected mode.
    pub bob_target: f64,
    pub setup: SetupSummary,
    pub report: FaithfulnessReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationDocument {
    #[serde(flatten)]
    pub aggregate: SimulationAggregate,
    pub trials: Vec<TrialRow>,
}

/// Runs every trial of one configuration; the config's seed is the only source of randomness.
pub fn simulate(cfg: &ScenarioConfig) -> Result<SimulationDocument, CliError> {
    let sc = cfg.scenario()?;
    let cap = dim_cap()?;
    let q = sc.rate_quantities().map_err(|e| CliError::from_core("rates", e))?;
    let params = cfg.params(&q, cap)?;
    let (setup, outcomes, report) = with_threads(cfg.threads, || -> Result<_, CliError> {
        let setup = ProtocolSetup::new(&sc, &params).map_err(|e| CliError::from_core("setup", e))?;
        let (outcomes, report) = run_trials(&setup, cfg.trials).map_err(|e| CliError::from_core("trial", e))?;
        Ok((setup.summary(), outcomes, report))
    })??;
    Ok(SimulationDocument {
        trials: outcomes.iter().map(|o| TrialRow::new(&params, o)).collect(),
        aggregate: SimulationAggregate {
            scenario: scenario_name(cfg),
            bob_target: params.bob_target(&q),
            quantities: q,
            params,
            setup,
            report,
        },
    })
}

fn report_line(r: &FaithfulnessReport) -> String {
    format!(
        "trials {}  median d {:.6}  d_alice {:.6}  fallback {:.3}  E_c {:.3}  E_0 {:.3}",
        r.trials, r.d_bob, r.d_alice, r.fallback_rate, r.ec_rate, r.e0_violation
    )
}

pub fn cmd_simulate(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(), CliError> {
    let cfg = opts.apply(cfg);
    let doc = simulate(&cfg)?;
    let sink = Sink::new(&cfg, Format::Csv);
    let mut w = sink.writer()?;
    match sink.format {
        Format::Json => write_json(&mut *w, &doc)?,
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for row in &doc.trials {
                csv.serialize(row)?;
            }
            csv.flush()?;
            drop(csv);
            if let Some(side) = sink.side_path() {
                write_json_file(&side, &doc.aggregate)?;
            }
        }
    }
    writeln!(sink.summary(), "{}: {}", doc.aggregate.scenario, report_line(&doc.aggregate.report))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "sB")]
    pub s_b: u64,
    #[serde(rename = "MB")]
    pub m_b: u64,
    pub case: u8,
    pub mode: &'static str,
    pub trials: usize,
    pub d_median: f64,
    pub d_mean: f64,
    pub d_median_no_fallback: Option<f64>,
    pub d_alice: f64,
    pub atypical: f64,
    pub d2: f64,
    pub d3: f64,
    pub garbage_mass: f64,
    pub fallback_rate: f64,
    pub ec_rate: f64,
    pub e0_violation: f64,
    pub subpovm_failure_rate: f64,
    pub alice_typical: usize,
    pub bob_marginal_typical: usize,
    pub bits_to_alice: f64,
    pub bits_to_bob: f64,
}

impl SweepRow {
    fn new(axis: Axis, value: f64, agg: &SimulationAggregate) -> Self {
        let (p, r) = (&agg.params, &agg.report);
        SweepRow {
            axis: axis.as_str(),
            value,
            n: p.n,
            delta: p.delta,
            s_b: p.s_b,
            m_b: p.m_b,
            case: p.case.number(),
            mode: p.mode.as_str(),
            trials: r.trials,
            d_median: r.d_bob,
            d_mean: r.d_bob_mean,
            d_median_no_fallback: r.d_bob_without_fallback,
            d_alice: r.d_alice,
            atypical: r.term_breakdown.atypical,
            d2: r.term_breakdown.d2,
            d3: r.term_breakdown.d3,
            garbage_mass: r.garbage_mass,
            fallback_rate: r.fallback_rate,
            ec_rate: r.ec_rate,
            e0_violation: r.e0_violation,
            subpovm_failure_rate: r.subpovm_failure_rate,
            alice_typical: agg.setup.alice_typical,
            bob_marginal_typical: agg.setup.bob_marginal_typical,
            bits_to_alice: p.bits_to_alice(),
            bits_to_bob: p.bits_to_bob(),
        }
    }
}

/// Rank trend of per-trial `d` across the sweep points, in sweep order.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepTrend {
    pub increasing: TrendTest,
    /// One-sided p-value against a decreasing trend.
    pub p_decreasing: f64,
    /// No significant increase at level 0.05.
    pub non_increasing: bool,
}

impl SweepTrend {
    pub fn from_groups(groups: &[Vec<f64>]) -> Self {
        let increasing = jonckheere_terpstra(groups);
        let rev: Vec<Vec<f64>> = groups.iter().rev().cloned().collect();
        SweepTrend {
            increasing,
            p_decreasing: jonckheere_terpstra(&rev).p_increasing,
            non_increasing: increasing.p_increasing >= 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepDocument {
    pub scenario: String,
    pub axis: &'static str,
    pub values: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub trend: Option<SweepTrend>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn integral(axis: Axis, i: usize, v: f64) -> Result<u64, CliError> {
    if v.fract() != 0.0 || v < 1.0 || v > u64::MAX as f64 {
        return Err(CliError::Validation(format!(
            "values[{i}]: {} needs a positive integer, got {v}",
            axis.as_str()
        )));
    }
    Ok(v as u64)
}

/// The config for one sweep point.
pub fn sweep_point(cfg: &ScenarioConfig, axis: Axis, i: usize, v: f64) -> Result<ScenarioConfig, CliError> {
    let mut c = cfg.clone();
    c.sweep = None;
    match axis {
        Axis::SB => c.protocol.s_b = SizeSpec::Fixed(integral(axis, i, v)?),
        Axis::MB => c.protocol.m_b = SizeSpec::Fixed(integral(axis, i, v)?),
        Axis::N => c.protocol.n = integral(axis, i, v)? as usize,
        Axis::Delta => {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::Validation(format!("values[{i}]: delta must be finite and ≥ 0, got {v}")));
            }
            c.protocol.delta = v
        }
    }
    Ok(c)
}

/// Runs the points in order, calling `emit` after each; stops at the first failing point.
pub fn sweep_with(
    cfg: &ScenarioConfig,
    mut emit: impl FnMut(&SweepRow) -> Result<(), CliError>,
) -> (SweepDocument, Option<CliError>) {
    let spec = cfg.sweep.clone().unwrap_or(SweepSpec {
        axis: Axis::SB,
        values: vec![],
    });
    let mut doc = SweepDocument {
        scenario: scenario_name(cfg),
        axis: spec.axis.as_str(),
        values: spec.values.clone(),
        rows: vec![],
        trend: None,
        error: None,
    };
    if cfg.sweep.is_none() || spec.values.is_empty() {
        let e = CliError::Validation("sweep: an axis and at least one value are required".into());
        doc.error = Some(e.to_string());
        return (doc, Some(e));
    }
    let mut groups = Vec::new();
    for (i, &v) in spec.values.iter().enumerate() {
        let point = sweep_point(cfg, spec.axis, i, v).and_then(|c| simulate(&c));
        let sim = match point {
            Ok(s) => s,
            Err(e) => {
                doc.error = Some(format!("values[{i}]: {e}"));
                return (doc, Some(e));
            }
        };
        let row = SweepRow::new(spec.axis, v, &sim.aggregate);
        if let Err(e) = emit(&row) {
            doc.error = Some(e.to_string());
            return (doc, Some(e));
        }
        doc.rows.push(row);
        groups.push(sim.trials.iter().map(|t| t.d).collect::<Vec<_>>());
    }
    doc.trend = Some(SweepTrend::from_groups(&groups));
    (doc, None)
}

pub fn sweep(cfg: &ScenarioConfig) -> Result<SweepDocument, CliError> {
    match sweep_with(cfg, |_| Ok(())) {
        (doc, None) => Ok(doc),
        (_, Some(e)) => Err(e),
    }
}

pub fn cmd_sweep(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(), CliError> {
    let cfg = opts.apply(cfg);
    let sink = Sink::new(&cfg, Format::Csv);
    let mut w = sink.writer()?;
    let (doc, err) = match sink.format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            let out = sweep_with(&cfg, |row| {
                csv.serialize(row)?;
                csv.flush()?;
                Ok(())
            });
            drop(csv);
            if let Some(side) = sink.side_path() {
                write_json_file(&side, &out.0)?;
            }
            out
        }
        Format::Json => {
            let out = sweep_with(&cfg, |_| Ok(()));
            write_json(&mut *w, &out.0)?;
            out
        }
    };
    let mut s = sink.summary();
    for row in &doc.rows {
        writeln!(
            s,
            "{} = {}: median d {:.6}  fallback {:.3}  E_c {:.3}",
            row.axis, row.value, row.d_median, row.fallback_rate, row.ec_rate
        )?;
    }
    if let Some(t) = &doc.trend {
        writeln!(
            s,
            "trend: J = {}  z = {:.4}  p(increasing) = {:.4}  p(decreasing) = {:.4}  non-increasing = {}",
            t.increasing.statistic, t.increasing.z, t.increasing.p_increasing, t.p_decreasing, t.non_increasing
        )?;
    }
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
