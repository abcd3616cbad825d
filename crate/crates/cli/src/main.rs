use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linoptics::calibration::calibrate;
use linoptics::experiment::{phi_grid, synthesize_measured_trace, theoretical_curves, xf, SynthParams, DEFAULT_GRID};
use linoptics::fitting::{fit, residual_report, FitModel, FitOptions, ResidualReport, FitResult};
use linoptics::synthesis::{qft_matrix, reck_decompose};
use linoptics::{CurveMode, DetectorTrace, Error, ExperimentConfig, TransferMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "linoptics", version, about = "Simulate, calibrate and fit qutrit Fourier interferometers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Theoretical detector curves as CSV.
    Curves {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "fixed")]
        mode: CurveMode,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Run the four-step plate adjustment and write a JSON report.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulated noisy detector trace as CSV.
    Synth(SynthArgs),
    /// Fit the response model to a trace.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        /// Also fit the platform phase offset mu.
        #[arg(long)]
        fit_mu: bool,
        /// Start only from the Fourier setting instead of the 81-point grid.
        #[arg(long)]
        single_start: bool,
    },
    /// Decompose a unitary into a splitter netlist.
    Decompose {
        #[arg(long)]
        unitary: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
    },
    /// Write the base-d Fourier matrix in the unitary JSON format.
    Qft {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration JSON; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    scale: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    bias: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    /// Plate offsets from the Fourier setting; overrides `x` in the config.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    offsets: Option<Vec<f64>>,
}

/// Written next to every output as `<out>.manifest.json`.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Option<String>,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: &'static str,
}

#[derive(Serialize, Deserialize)]
struct UnitaryFile {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    report: ResidualReport,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Degenerate(String),
    NonUnitary(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::NonUnitary(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Degenerate(m) | Failure::NonUnitary(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Degenerate { .. } | Error::Calibration { .. } => Failure::Degenerate(e.to_string()),
            Error::NonUnitary { .. } => Failure::NonUnitary(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Parse JSON, naming the offending key on failure.
fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Failure::Input(format!("{}: key `{key}`: {}", path.display(), e.inner()))
    })
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let cfg = match path {
        Some(p) => parse_json(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate().map_err(|e| {
        let origin = path.map_or("default config".into(), |p| p.display().to_string());
        Failure::Input(format!("{origin}: {e}"))
    })?;
    Ok(cfg)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn write_manifest(command: &str, common_config: Option<&Path>, seed: Option<u64>, inputs: &[&Path], out: &Path) -> Outcome {
    let manifest = RunManifest {
        command,
        config: common_config.map(display),
        seed,
        inputs: inputs.iter().map(|p| display(p)).collect(),
        outputs: vec![display(out)],
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(Path::new(&path), text + "\n")
}

fn write_trace(trace: &DetectorTrace, out: &Path) -> Outcome {
    write(out, trace.to_csv_string()?)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Curves { common, mode, grid } => {
            let cfg = load_config(common.config.as_deref())?;
            if grid == 0 {
                return Err(Failure::Input("--grid must be positive".into()));
            }
            let trace = theoretical_curves(&cfg, mode, &phi_grid(grid))?;
            write_trace(&trace, &common.out)?;
            write_manifest("curves", common.config.as_deref(), None, &[], &common.out)?;
            println!("wrote {} rows to {}", trace.len(), common.out.display());
        }
        Command::Calibrate { common } => {
            let cfg = load_config(common.config.as_deref())?;
            let report = calibrate(&cfg)?;
            write(&common.out, report.to_json()? + "\n")?;
            write_manifest("calibrate", common.config.as_deref(), None, &[], &common.out)?;
            for s in &report.steps {
                println!(
                    "step {}: target {:.6}, {} roots, x = {:.9}",
                    s.step,
                    s.target.value,
                    s.roots.len(),
                    s.selected
                );
            }
            println!("max |x - xF| = {:.3e}", report.max_residual());
        }
        Command::Synth(args) => {
            let common = &args.common;
            for (flag, values, n) in [("--scale", &args.scale, 3), ("--bias", &args.bias, 3), ("--offsets", &args.offsets, 4)] {
                if let Some(v) = values {
                    if v.len() != n {
                        return Err(Failure::Input(format!("{flag} takes {n} comma-separated values, got {}", v.len())));
                    }
                }
            }
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(offsets) = &args.offsets {
                let centre = xf(&cfg);
                cfg.x = std::array::from_fn(|i| centre[i] + offsets[i]);
            }
            if args.grid == 0 {
                return Err(Failure::Input("--grid must be positive".into()));
            }
            let triple = |v: &Option<Vec<f64>>, default: f64| -> [f64; 3] {
                v.as_ref().map_or([default; 3], |v| [v[0], v[1], v[2]])
            };
            let params = SynthParams {
                scale: triple(&args.scale, 1.0),
                bias: triple(&args.bias, 0.0),
                lambda: args.lambda,
                mu: args.mu,
                noise_sigma: args.noise,
                seed: args.seed,
            };
            let trace = synthesize_measured_trace(&cfg, &params, &phi_grid(args.grid))?;
            write_trace(&trace, &common.out)?;
            write_manifest("synth", common.config.as_deref(), Some(args.seed), &[], &common.out)?;
            println!("wrote {} rows to {}", trace.len(), common.out.display());
        }
        Command::Fit {
            common,
            trace,
            fit_mu,
            single_start,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let file = fs::File::open(&trace).map_err(|e| Failure::Input(format!("{}: {e}", trace.display())))?;
            let data = DetectorTrace::read_csv(file).map_err(|e| Failure::Input(format!("{}: {e}", trace.display())))?;
            let options = FitOptions {
                fit_mu,
                start_offsets: if single_start { Vec::new() } else { FitOptions::default().start_offsets },
                ..FitOptions::default()
            };
            let result = fit(&data, &cfg, &FitModel::at_fourier_point(&cfg), &options)?;
            let report = residual_report(&result, &data, &cfg)?;
            let text = serde_json::to_string_pretty(&FitOutput {
                result: &result,
                report,
            })
            .expect("fit output serializes");
            write(&common.out, text + "\n")?;
            write_manifest("fit", common.config.as_deref(), None, &[&trace], &common.out)?;
            println!(
                "residual {:.4e}, lambda {:.6}, delta_x [{}]{}",
                result.residual,
                result.model.lambda,
                result.delta_x.map(|d| format!("{d:.4}")).join(", "),
                if result.converged { "" } else { " (not converged)" }
            );
        }
        Command::Decompose { unitary, out, tol } => {
            let file: UnitaryFile = parse_json(&unitary)?;
            let rows: Vec<Vec<Complex64>> = file
                .entries
                .iter()
                .map(|r| r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
                .collect();
            let u = TransferMatrix::from_rows(&rows)?;
            if u.dim() != file.dim {
                return Err(Failure::Input(format!(
                    "{}: key `dim` is {} but entries are {}x{}",
                    unitary.display(),
                    file.dim,
                    u.dim(),
                    u.dim()
                )));
            }
            let circuit = reck_decompose(&u, tol)?;
            let err = circuit.compose()?.max_abs_diff(&u);
            write(&out, circuit.to_json()? + "\n")?;
            write_manifest("decompose", None, None, &[&unitary], &out)?;
            println!(
                "{} elements, {} splitters, round-trip error {err:.3e}",
                circuit.elements.len(),
                circuit.splitter_count()
            );
        }
        Command::Qft { dim, out } => {
            let f = qft_matrix(dim)?;
            let file = UnitaryFile {
                dim,
                entries: f.rows().iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect(),
            };
            write(&out, serde_json::to_string_pretty(&file).expect("matrix serializes") + "\n")?;
            write_manifest("qft", None, None, &[], &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
