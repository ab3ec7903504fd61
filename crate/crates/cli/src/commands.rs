use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pnp_buqo::inpaint::{CnnWeights, InpainterKind};
use pnp_buqo::map_solver::MapOptions;
use pnp_buqo::pnp::{DEFAULT_ALPHA, DEFAULT_TAU};
use pnp_buqo::report::{TestMode, TestReport};
use pnp_buqo::sim::inject_artifact;
use pnp_buqo::{Error, Image};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, EXIT_NO_CONVERGENCE, EXIT_OK};
use crate::formats::*;
use crate::pipeline::{self, CellResult, CellSpec, SimSpec, TestSettings};
use crate::provenance::{config_hash, Provenance};

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "BUQO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pnp-buqo", version, about = "Uncertainty quantification by optimization for radial Fourier imaging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom, its structure masks and noisy measurements.
    Simulate(SimulateArgs),
    /// Compute the MAP estimate from simulated data.
    Map(MapArgs),
    /// Run a structure hypothesis test on the MAP estimate.
    Test(TestArgs),
    /// Run the full pipeline over a grid of angles, iSNR values and seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Acquisition angles, calibrated at the 128 x 128 reference grid.
    #[arg(long, default_value_t = 150)]
    pub angles: usize,
    #[arg(long, default_value_t = 30.0)]
    pub isnr: f64,
    /// Peak height of the inserted structure; 0 keeps the mask but not the bump.
    #[arg(long, default_value_t = 0.3)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 11)]
    pub phantom_seed: u64,
    /// Noise seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Directory holding the simulate outputs; results are written there too.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Directory holding the simulate and map outputs; results are written there too.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "pnp", value_parser = parse_mode)]
    pub mode: TestMode,
    #[arg(long, default_value = "harmonic", value_parser = parse_op)]
    pub op: InpainterKind,
    /// GDNW weight file, required with `--op cnn`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Structure mask (P5 PGM, 255 = structure). Defaults to `mask_0.pgm` in `--out`.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Defaults to the value recorded by `map`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Checkerboard amplitude added to the MAP inside the mask before testing.
    #[arg(long, default_value_t = 0.0)]
    pub artifact: f64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [150usize, 250, 350])]
    pub angles: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [20.0f64, 35.0])]
    pub isnr: Vec<f64>,
    /// Noise seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seed: Vec<u64>,
    #[arg(long, default_value_t = 0.3)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 11)]
    pub phantom_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub artifact: f64,
    #[arg(long, default_value = "pnp", value_parser = parse_mode)]
    pub mode: TestMode,
    #[arg(long, default_value = "harmonic", value_parser = parse_op)]
    pub op: InpainterKind,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Iteration cap of the test solver; the MAP solver keeps its defaults.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stopping tolerance of the test solver.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<TestMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_op(s: &str) -> Result<InpainterKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn run(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Map(a) => cmd_map(a),
        Command::Test(a) => cmd_test(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn require_dir(dir: &Path) -> CliResult<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("output directory {} does not exist", dir.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("records serialize to JSON");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_weights(path: Option<&Path>, op: InpainterKind) -> CliResult<Option<CnnWeights>> {
    match (op, path) {
        (InpainterKind::Cnn, Some(p)) => Ok(Some(CnnWeights::from_bytes(&read_file(p)?)?)),
        (InpainterKind::Cnn, None) => Err(CliError::Config("--op cnn requires --weights".into())),
        (_, _) => Ok(None),
    }
}

/// `simulate.json`, read back by `map` and `test`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub spec: SimSpec,
    pub delta: f64,
    pub epsilon: f64,
    pub measurements: usize,
    pub sampling_ratio: f64,
    pub radial_lines: usize,
    pub masks: Vec<String>,
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    provenance: Provenance,
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<i32> {
    require_dir(&a.out)?;
    let spec = SimSpec {
        n: a.n,
        angles: a.angles,
        isnr: a.isnr,
        amplitude: a.amplitude,
        phantom_seed: a.phantom_seed,
        seed: a.seed,
    };
    let sim = pipeline::simulate(&spec)?;
    write_atomic(&a.out.join("phantom.imgf"), &encode_imgf(&sim.phantom.image))?;
    let mut masks = Vec::new();
    for (k, (mask, _)) in sim.phantom.structures.iter().enumerate() {
        let name = format!("mask_{k}.pgm");
        write_atomic(&a.out.join(&name), &encode_mask_pgm(mask))?;
        masks.push(name);
    }
    write_atomic(&a.out.join("y.cplx"), &encode_cplx(&sim.data.y))?;
    let pattern = &sim.data.pattern;
    write_atomic(&a.out.join("sampling.pgm"), &encode_pgm(&fft_shift(&pattern.mask, a.n), a.n))?;
    let record = SimulateRecord {
        spec,
        delta: sim.data.delta,
        epsilon: sim.data.epsilon,
        measurements: pattern.m_count,
        sampling_ratio: pattern.ratio(),
        radial_lines: pattern.angles,
        masks,
    };
    let provenance = Provenance::new("simulate", &spec, spec.seed);
    write_json(&a.out.join("simulate.json"), &Sidecar { body: &record, provenance })?;
    Ok(EXIT_OK)
}

/// Moves the zero frequency to the image centre for viewing.
fn fft_shift(mask: &[bool], n: usize) -> Vec<bool> {
    let h = n / 2;
    (0..n * n).map(|k| mask[((k / n + h) % n) * n + (k % n + h) % n]).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapRecord {
    pub lambda: f64,
    pub epsilon: f64,
    pub residual: f64,
    pub feasible: bool,
    pub converged: bool,
    pub iterations: usize,
    pub options: MapOptions,
}

struct Inputs {
    record: SimulateRecord,
    y: Vec<num_complex::Complex64>,
    phi: pnp_buqo::operators::FourierOperator,
    psi: pnp_buqo::operators::GradientOperator,
}

fn load_inputs(dir: &Path) -> CliResult<Inputs> {
    require_dir(dir)?;
    let record: SimulateRecord = read_json(&dir.join("simulate.json"))?;
    let y = decode_cplx(&read_file(&dir.join("y.cplx"))?)?;
    let (phi, psi) = pipeline::operators(record.spec.n, record.spec.angles)?;
    if y.len() != record.measurements {
        return Err(CliError::Core(Error::Format {
            offset: 4,
            msg: format!("y.cplx holds {} samples, simulate.json records {}", y.len(), record.measurements),
        }));
    }
    Ok(Inputs { record, y, phi, psi })
}

fn cmd_map(a: &MapArgs) -> CliResult<i32> {
    let inp = load_inputs(&a.out)?;
    let options = MapOptions { max_iter: a.max_iter, tol: a.tol, seed: a.seed, ..Default::default() };
    let eps = inp.record.epsilon;
    let out = pipeline::map_estimate(&inp.y, &inp.phi, &inp.psi, a.lambda, eps, &options)?;
    write_atomic(&a.out.join("map.imgf"), &encode_imgf(&out.result.x))?;
    let mut trace = Vec::new();
    out.result.trace.write_csv(&mut trace)?;
    write_atomic(&a.out.join("map_trace.csv"), &trace)?;
    let record = MapRecord {
        lambda: a.lambda,
        epsilon: eps,
        residual: out.residual,
        feasible: out.feasible,
        converged: out.result.converged,
        iterations: out.result.iterations,
        options,
    };
    let config = serde_json::json!({ "simulation": inp.record.spec, "options": options, "lambda": a.lambda });
    let provenance = Provenance::new("map", &config, a.seed);
    write_json(&a.out.join("map.json"), &Sidecar { body: &record, provenance })?;
    if out.feasible {
        Ok(EXIT_OK)
    } else {
        Err(CliError::NoConvergence { what: "MAP solver", iterations: out.result.iterations })
    }
}

/// Layout of `report.json`.
#[derive(Serialize)]
pub struct ReportFile<'a> {
    #[serde(flatten)]
    pub report: &'a TestReport,
    pub artifact: f64,
    pub provenance: Provenance,
}

fn cmd_test(a: &TestArgs) -> CliResult<i32> {
    let inp = load_inputs(&a.out)?;
    let map_record: MapRecord = read_json(&a.out.join("map.json"))?;
    let mut x_map = decode_imgf(&read_file(&a.out.join("map.imgf"))?)?;
    let mask_path = a.mask.clone().unwrap_or_else(|| a.out.join("mask_0.pgm"));
    let mask = decode_mask_pgm(&read_file(&mask_path)?)?;
    if mask.n() != x_map.n() {
        return Err(CliError::Config(format!(
            "mask {} is {}x{}, the MAP is {}x{}",
            mask_path.display(),
            mask.n(),
            mask.n(),
            x_map.n(),
            x_map.n()
        )));
    }
    if mask.is_empty() {
        return Err(Error::DegenerateStructure(format!("mask {} is empty", mask_path.display())).into());
    }
    if a.artifact != 0.0 {
        x_map = inject_artifact(&x_map, &mask, a.artifact)?;
    }
    let weights = load_weights(a.weights.as_deref(), a.op)?;
    let settings = TestSettings {
        mode: a.mode,
        op: a.op,
        lambda: a.lambda.unwrap_or(map_record.lambda),
        alpha: a.alpha,
        tau: a.tau,
        zeta: a.zeta,
        gamma: a.gamma,
        max_iter: a.max_iter,
        tol: a.tol,
        seed: a.seed,
    };
    let out = pipeline::run_test(&x_map, &inp.y, inp.record.epsilon, &mask, weights, &inp.phi, &inp.psi, &settings)?;

    write_atomic(&a.out.join("x_test.imgf"), &encode_imgf(&out.x_test))?;
    write_atomic(&a.out.join("g_x_test.imgf"), &encode_imgf(&out.g_x_test))?;
    write_atomic(&a.out.join("diff_map.png"), &encode_log_png(&difference(&x_map, &out.g_x_map))?)?;
    write_atomic(&a.out.join("diff_test.png"), &encode_log_png(&difference(&out.x_test, &out.g_x_test))?)?;
    write_atomic(&a.out.join("test_trace.csv"), &out.trace_csv)?;
    let config = serde_json::json!({
        "simulation": inp.record.spec,
        "test": settings,
        "artifact": a.artifact,
        "mask": mask_path.display().to_string(),
    });
    let file = ReportFile { report: &out.report, artifact: a.artifact, provenance: Provenance::new("test", &config, a.seed) };
    write_json(&a.out.join("report.json"), &file)?;
    println!(
        "{} rho_alpha={} tau={} iterations={}",
        out.report.decision.as_str(),
        out.report.rho_alpha,
        out.report.tau,
        out.report.iterations
    );
    Ok(if out.report.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

fn difference(a: &Image, b: &Image) -> Image {
    let d = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
    Image::new(a.n(), d).expect("same-size images")
}

/// Per-cell record in `<out>/cells`, keyed by the hash of its [`CellSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub config_hash: String,
    pub spec: CellSpec,
    pub result: CellResult,
}

pub const SWEEP_HEADER: [&str; 6] = ["angles", "isnr", "seed", "rho_alpha", "decision", "iterations"];

pub fn sweep_cells(a: &SweepArgs) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    let mut angles = a.angles.clone();
    angles.sort_unstable();
    angles.dedup();
    let mut isnr = a.isnr.clone();
    isnr.sort_by(f64::total_cmp);
    isnr.dedup();
    let mut seeds = a.seed.clone();
    seeds.sort_unstable();
    seeds.dedup();
    for &ang in &angles {
        for &s in &isnr {
            for &seed in &seeds {
                cells.push(CellSpec {
                    sim: SimSpec {
                        n: a.n,
                        angles: ang,
                        isnr: s,
                        amplitude: a.amplitude,
                        phantom_seed: a.phantom_seed,
                        seed,
                    },
                    artifact: a.artifact,
                    map: MapOptions::default(),
                    test: TestSettings {
                        mode: a.mode,
                        op: a.op,
                        lambda: a.lambda,
                        alpha: a.alpha,
                        tau: a.tau,
                        zeta: a.zeta,
                        gamma: a.gamma,
                        max_iter: a.max_iter,
                        tol: a.tol,
                        seed: 0,
                    },
                });
            }
        }
    }
    cells
}

fn cell_file(dir: &Path, c: &CellSpec) -> PathBuf {
    dir.join(format!("a{}_i{}_s{}.json", c.sim.angles, c.sim.isnr, c.sim.seed))
}

fn cached_cell(path: &Path, hash: &str) -> Option<CellResult> {
    let bytes = std::fs::read(path).ok()?;
    let rec: CellRecord = serde_json::from_slice(&bytes).ok()?;
    (rec.config_hash == hash).then_some(rec.result)
}

fn worker_count() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
            Ok(k) => Ok(Some(k)),
        },
    }
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<i32> {
    require_dir(&a.out)?;
    if a.angles.is_empty() || a.isnr.is_empty() || a.seed.is_empty() {
        return Err(CliError::Config("sweep needs at least one angle count, iSNR and seed".into()));
    }
    let weights = load_weights(a.weights.as_deref(), a.op)?;
    let cells_dir = a.out.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(|e| CliError::io(&cells_dir, e))?;
    let cells = sweep_cells(a);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = worker_count()? {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| -> CliResult<CellResult> {
                let hash = config_hash(c);
                let path = cell_file(&cells_dir, c);
                if let Some(r) = cached_cell(&path, &hash) {
                    return Ok(r);
                }
                let result = pipeline::run_cell(c, weights.as_ref())?;
                write_json(&path, &CellRecord { config_hash: hash, spec: c.clone(), result })?;
                Ok(result)
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let csv_bytes = sweep_csv(&results)?;
    write_atomic(&a.out.join("sweep.csv"), &csv_bytes)?;

    let summary = median_table(&results);
    for row in &summary {
        println!("angles={} isnr={} median_rho_alpha={}", row.angles, row.isnr, row.median_rho_alpha);
    }
    let provenance = Provenance::new("sweep", &cells, 0);
    write_json(&a.out.join("sweep.json"), &serde_json::json!({ "medians": summary, "provenance": provenance }))?;
    Ok(EXIT_OK)
}

/// CSV rows in grid order (angles, isnr, seed).
pub fn sweep_csv(results: &[CellResult]) -> CliResult<Vec<u8>> {
    let mut rows = results.to_vec();
    rows.sort_by(|a, b| {
        a.angles.cmp(&b.angles).then(a.isnr.total_cmp(&b.isnr)).then(a.seed.cmp(&b.seed))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.angles.to_string(),
            r.isnr.to_string(),
            r.seed.to_string(),
            r.rho_alpha.to_string(),
            r.decision.as_str().to_string(),
            r.iterations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MedianRow {
    pub angles: usize,
    pub isnr: f64,
    pub median_rho_alpha: f64,
    pub cells: usize,
}

/// Median of `rho_alpha` over seeds for each (angles, isnr) pair.
pub fn median_table(results: &[CellResult]) -> Vec<MedianRow> {
    let mut groups: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    for r in results {
        // Bit pattern of a non-negative float sorts like the float itself.
        groups.entry((r.angles, r.isnr.to_bits())).or_default().push(r.rho_alpha);
    }
    groups
        .into_iter()
        .map(|((angles, isnr), mut v)| {
            v.sort_by(f64::total_cmp);
            let k = v.len();
            let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
            MedianRow { angles, isnr: f64::from_bits(isnr), median_rho_alpha: median, cells: k }
        })
        .collect()
}
