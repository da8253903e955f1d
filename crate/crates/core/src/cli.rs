//! Command-line front end.
//!
//! Each subcommand reads JSON files, runs one stage of the pipeline and
//! writes a versioned JSON document to `--output` or stdout. Diagnostics go
//! to stderr. Failures exit with [`Error::exit_code`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ancilla_circuit::{angles_from_pq, circuit_for, kraus_from_circuit, CircuitVariant, TwoQubitCircuit};
use crate::channels::{noisy_process_set, NoiseOrder, NoiseSpec};
use crate::continuous_readout::{
    pq_from_thresholds, simulate_batch, summarize, thresholds_from_pq, write_jsonl, BatchSummary, ReadoutConfig,
    Thresholds,
};
use crate::decomposition::{execute_runs, reduce, validate_kraus_set, Backend, KrausSet, MeasurementProtocol};
use crate::error::{Error, Result};
use crate::fidelity::{fidelity_report, povm_fidelity_of_sets, FidelityReport, PovmVariant, ProcessSet};
use crate::format::{from_json, to_json};
use crate::linalg::{ComplexMatrix, C64};
use crate::partial_projection::{PartialProjParams, QubitState};

#[derive(Debug, Parser)]
#[command(name = "genmeas", version, about = "Generalized qubit measurements: synthesis, simulation and fidelities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce a Kraus set to a chain of partial projections.
    Synth(SynthArgs),
    /// Execute a protocol many times and collect statistics.
    Simulate(SimulateArgs),
    /// Run thresholded continuous-readout trajectories.
    Trajectory(TrajectoryArgs),
    /// Emit the ancilla circuits realizing a partial projection.
    Circuit(CircuitArgs),
    /// Compare an actual measurement with an ideal one.
    Fidelity(FidelityArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write the result here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Leave out the creation time so output is byte-for-byte reproducible.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Kraus set JSON.
    pub kraus: PathBuf,
    /// Outcome order as comma-separated indices, e.g. `2,0,1`.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// Fold the outcome-1 rotation of each step into the next step.
    #[arg(long)]
    pub cancel_u1: bool,
    /// Largest accepted deviation between a branch and its target.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Exact,
    Ancilla,
    Continuous,
}

#[derive(Debug, Args)]
pub struct ReadoutArgs {
    /// Measurement time at the optimal quadrature.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Quadrature angle in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha: f64,
    /// Quantum efficiency.
    #[arg(long, default_value_t = 1.0)]
    pub efficiency: f64,
    /// Time step; defaults to a hundredth of the effective measurement time.
    #[arg(long)]
    pub dt: Option<f64>,
}

impl ReadoutArgs {
    fn config(&self, seed: u64) -> Result<ReadoutConfig> {
        let mut c = ReadoutConfig::new(self.tau, self.alpha)?
            .with_efficiency(self.efficiency)
            .with_seed(seed)
            .with_record_path(false);
        if let Some(dt) = self.dt {
            c = c.with_dt(dt);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Protocol JSON written by `synth`.
    pub protocol: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendKind::Exact)]
    pub backend: BackendKind,
    /// Circuit variant for the ancilla backend.
    #[arg(long, default_value = "direct")]
    pub variant: CircuitVariant,
    /// `zero`, `one`, `plus`, `minus`, `mixed`, or a JSON file holding a 2×2 density matrix.
    #[arg(long, default_value = "mixed")]
    pub state: String,
    #[arg(long, default_value_t = 10_000)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub readout: ReadoutArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long, requires = "q", conflicts_with_all = ["r0", "r1"])]
    pub p: Option<f64>,
    #[arg(long, requires = "p")]
    pub q: Option<f64>,
    /// Upper threshold (outcome 0).
    #[arg(long, requires = "r1", allow_hyphen_values = true)]
    pub r0: Option<f64>,
    /// Lower threshold (outcome 1).
    #[arg(long, requires = "r0", allow_hyphen_values = true)]
    pub r1: Option<f64>,
    #[arg(long, default_value = "mixed")]
    pub state: String,
    #[arg(long, default_value_t = 1000)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub readout: ReadoutArgs,
    /// Also write every trajectory, one JSON object per line.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CircuitArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    /// Only this variant; all three by default.
    #[arg(long)]
    pub variant: Option<CircuitVariant>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FidelityMode {
    Process,
    Povm,
}

#[derive(Debug, Args)]
pub struct FidelityArgs {
    /// Actual measurement: process set, Kraus set, or Kraus set plus noise.
    pub actual: PathBuf,
    /// Ideal measurement: process set or Kraus set.
    pub ideal: PathBuf,
    #[arg(long, value_enum, default_value_t = FidelityMode::Process)]
    pub mode: FidelityMode,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Inputs accepted by `fidelity`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MeasurementInput {
    Noisy {
        kraus: KrausSet,
        noise: NoiseSpec,
        #[serde(default)]
        order: NoiseOrder,
    },
    Kraus(KrausSet),
    Process(ProcessSet),
}

impl MeasurementInput {
    pub fn into_process_set(self) -> Result<ProcessSet> {
        match self {
            MeasurementInput::Noisy { kraus, noise, order } => {
                validate_kraus_set(&kraus)?;
                noisy_process_set(&kraus, &noise, order)
            }
            MeasurementInput::Kraus(k) => {
                validate_kraus_set(&k)?;
                ProcessSet::from_kraus_set(&k)
            }
            MeasurementInput::Process(p) => Ok(p),
        }
    }
}

#[derive(Debug, Serialize)]
struct LeafDeviation {
    label: String,
    deviation: f64,
}

#[derive(Debug, Serialize)]
struct HistogramEntry {
    label: String,
    count: usize,
    frequency: f64,
}

#[derive(Debug, Serialize)]
struct LeafState {
    label: String,
    mean_state: ComplexMatrix,
}

#[derive(Debug, Serialize)]
struct DurationStats {
    mean: f64,
    std: f64,
    max: f64,
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    backend: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    shots: usize,
    seed: u64,
    initial_state: ComplexMatrix,
    histogram: Vec<HistogramEntry>,
    mean_final_states: Vec<LeafState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration: Option<DurationStats>,
}

#[derive(Debug, Serialize)]
struct TrajectoryReport {
    p: f64,
    q: f64,
    r0: f64,
    r1: f64,
    seed: u64,
    tau: f64,
    summary: BatchSummary,
}

#[derive(Debug, Serialize)]
struct CircuitEntry {
    circuit: TwoQubitCircuit,
    kraus_0: ComplexMatrix,
    kraus_1: ComplexMatrix,
}

#[derive(Debug, Serialize)]
struct CircuitReport {
    p: f64,
    q: f64,
    phi: f64,
    epsilon: f64,
    circuits: Vec<CircuitEntry>,
}

#[derive(Debug, Serialize)]
struct ProbabilityRow {
    label: String,
    p: f64,
    p_ideal: f64,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum FidelityOutput {
    Process(FidelityReport),
    Povm {
        outcomes: Vec<ProbabilityRow>,
        povm_fp: f64,
        povm_fp_tilde: f64,
    },
}

/// Parses the process arguments and runs; returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Trajectory(a) => cmd_trajectory(&a),
        Command::Circuit(a) => cmd_circuit(&a),
        // input problems in this command are fidelity-input errors
        Command::Fidelity(a) => cmd_fidelity(&a).map_err(|e| match e.exit_code() {
            2 => Error::FidelityInput(e.to_string()),
            _ => e,
        }),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(body: &T, out: &OutputArgs) -> Result<()> {
    let text = to_json(body, !out.no_timestamp)?;
    match &out.output {
        Some(path) => fs::write(path, text + "\n").map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Format(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

/// Named state or a density-matrix file.
pub fn parse_state(spec: &str) -> Result<QubitState> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Ok(match spec {
        "zero" | "0" => QubitState::zero(),
        "one" | "1" => QubitState::one(),
        "plus" | "+" => QubitState::plus(),
        "minus" | "-" => QubitState::pure([C64::new(h, 0.0), C64::new(-h, 0.0)]),
        "mixed" => QubitState::maximally_mixed(),
        path => {
            let rho: ComplexMatrix = from_json(&read(Path::new(path))?)?;
            QubitState::from_matrix(rho)?
        }
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let set: KrausSet = from_json(&read(&a.kraus)?)?;
    validate_kraus_set(&set)?;
    let protocol = reduce(&set, a.order.as_deref(), a.cancel_u1)?;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (i, label) in protocol.leaf_labels.iter().enumerate() {
        let k = set.index_of(label).expect("reduce keeps labels");
        let deviation = protocol.branch(i).phase_distance(&set.ops[k]);
        worst = worst.max(deviation);
        rows.push(LeafDeviation {
            label: label.clone(),
            deviation,
        });
    }
    for r in &rows {
        eprintln!("leaf {:>8}  deviation {:.3e}", r.label, r.deviation);
    }
    eprintln!("steps {}  max deviation {:.3e}", protocol.steps.len(), worst);
    if !(worst <= a.tol) {
        return Err(Error::Format(format!("composition deviation {worst:.3e} exceeds {:.3e}", a.tol)));
    }
    emit(&protocol, &a.out)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let protocol: MeasurementProtocol = from_json(&read(&a.protocol)?)?;
    protocol.validate()?;
    let state = parse_state(&a.state)?;
    let backend = match a.backend {
        BackendKind::Exact => Backend::Exact,
        BackendKind::Ancilla => Backend::Ancilla(a.variant),
        BackendKind::Continuous => Backend::Continuous(a.readout.config(a.seed)?),
    };
    let runs = execute_runs(&protocol, &state, a.seed, a.shots, &backend)?;

    let mut histogram = Vec::new();
    let mut mean_final_states = Vec::new();
    if !runs.is_empty() {
        for label in &protocol.leaf_labels {
            let mine: Vec<_> = runs.iter().filter(|r| &r.leaf == label).collect();
            histogram.push(HistogramEntry {
                label: label.clone(),
                count: mine.len(),
                frequency: mine.len() as f64 / runs.len() as f64,
            });
            if !mine.is_empty() {
                let sum = mine
                    .iter()
                    .fold(ComplexMatrix::zeros(2), |acc, r| &acc + r.state.matrix());
                mean_final_states.push(LeafState {
                    label: label.clone(),
                    mean_state: sum.scale_re(1.0 / mine.len() as f64),
                });
            }
        }
    }
    let duration = (a.backend == BackendKind::Continuous && !runs.is_empty()).then(|| {
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.duration).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r.duration - mean).powi(2)).sum::<f64>() / n;
        DurationStats {
            mean,
            std: var.sqrt(),
            max: runs.iter().map(|r| r.duration).fold(0.0, f64::max),
        }
    });
    let report = SimulationReport {
        backend: format!("{:?}", a.backend).to_lowercase(),
        variant: (a.backend == BackendKind::Ancilla).then(|| a.variant.to_string()),
        shots: a.shots,
        seed: a.seed,
        initial_state: state.matrix().clone(),
        histogram,
        mean_final_states,
        duration,
    };
    emit(&report, &a.out)
}

fn cmd_trajectory(a: &TrajectoryArgs) -> Result<()> {
    let (params, th) = match (a.p, a.q, a.r0, a.r1) {
        (Some(p), Some(q), _, _) => {
            let params = PartialProjParams::new(p, q)?;
            (params, thresholds_from_pq(params)?)
        }
        (_, _, Some(r0), Some(r1)) => {
            let th = Thresholds::new(r0, r1);
            (pq_from_thresholds(th)?, th)
        }
        _ => {
            return Err(Error::InvalidConfig {
                reason: "give either --p and --q or --r0 and --r1".into(),
            })
        }
    };
    if !th.is_finite() {
        return Err(Error::InfiniteThreshold {
            p: params.p(),
            q: params.q(),
        });
    }
    let state = parse_state(&a.state)?;
    let mut config = a.readout.config(a.seed)?;
    config.record_path = a.records.is_some();
    let records = simulate_batch(&config, th, &state, a.shots)?;
    if let Some(path) = &a.records {
        let file = fs::File::create(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        write_jsonl(&records, std::io::BufWriter::new(file)).map_err(|e| Error::Format(e.to_string()))?;
    }
    let report = TrajectoryReport {
        p: params.p(),
        q: params.q(),
        r0: th.r0,
        r1: th.r1,
        seed: a.seed,
        tau: config.tau(),
        summary: summarize(&records),
    };
    emit(&report, &a.out)
}

fn cmd_circuit(a: &CircuitArgs) -> Result<()> {
    let params = PartialProjParams::new(a.p, a.q)?;
    let (phi, epsilon) = angles_from_pq(params);
    let variants = match a.variant {
        Some(v) => vec![v],
        None => CircuitVariant::ALL.to_vec(),
    };
    let circuits = variants
        .into_iter()
        .map(|v| {
            let circuit = circuit_for(v, params);
            let (kraus_0, kraus_1) = kraus_from_circuit(&circuit);
            CircuitEntry {
                circuit,
                kraus_0,
                kraus_1,
            }
        })
        .collect();
    let report = CircuitReport {
        p: params.p(),
        q: params.q(),
        phi,
        epsilon,
        circuits,
    };
    emit(&report, &a.out)
}

fn load_measurement(path: &Path) -> Result<ProcessSet> {
    from_json::<MeasurementInput>(&read(path)?)?.into_process_set()
}

fn cmd_fidelity(a: &FidelityArgs) -> Result<()> {
    let actual = load_measurement(&a.actual)?;
    let ideal = load_measurement(&a.ideal)?;
    let out = match a.mode {
        FidelityMode::Process => FidelityOutput::Process(fidelity_report(&actual, &ideal)?),
        FidelityMode::Povm => {
            let povm_fp = povm_fidelity_of_sets(&actual, &ideal, PovmVariant::Fp)?;
            let povm_fp_tilde = povm_fidelity_of_sets(&actual, &ideal, PovmVariant::FpTilde)?;
            let outcomes = ideal
                .outcomes()
                .iter()
                .map(|(label, ci)| ProbabilityRow {
                    label: label.clone(),
                    p: actual.get(label).map(|c| c.trace()).unwrap_or(0.0),
                    p_ideal: ci.trace(),
                })
                .collect();
            FidelityOutput::Povm {
                outcomes,
                povm_fp,
                povm_fp_tilde,
            }
        }
    };
    emit(&out, &a.out)
}
