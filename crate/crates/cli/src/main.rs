use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use labelnorm::gen::{self, SkylineParams};
use labelnorm_cli::commands::{self, format_label_vectors, load_labels, load_mesh, mesh_distance};
use labelnorm_cli::config::Settings;
use labelnorm_cli::io;

/// Joint denoising and segmentation of triangle meshes with preferred normals.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Denoise a mesh and assign a label to every face.
    Denoise(Box<DenoiseArgs>),
    /// Write a generated mesh (`icosphere:S[:R]`, `cube:N[:SIZE]`,
    /// `skyline:SEED`) or label set (`fibonacci:L`, `platonic:KIND`, `axes`).
    Gen {
        spec: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Add Gaussian vertex noise with variance `factor · e²`.
    Noise {
        #[arg(short, long)]
        input: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        noise_factor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print `Σ_v |X_v − Y_v|²` between two meshes with equal connectivity.
    Metrics { a: String, b: String },
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file or generator spec.
    #[arg(short, long)]
    input: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// `fibonacci:L`, `platonic:KIND`, `axes` or a file of unit vectors.
    #[arg(long)]
    labels: Option<String>,
    /// Label CSV path (default: `<output stem>.labels.csv`).
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Metrics NDJSON path (default: `<output stem>.metrics.ndjson`).
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Parameter table: sphere, platonic or skyline.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    rho1: Option<f64>,
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    rho3: Option<f64>,
    #[arg(long)]
    c_inner: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    cg_rtol_phi: Option<f64>,
    #[arg(long)]
    newton_rtol: Option<f64>,
    /// Update λ by `n − g` instead of `n − g − u`.
    #[arg(long)]
    paper_literal_dual: bool,
    /// `standard` or `scaled`.
    #[arg(long)]
    lagrangian_form: Option<String>,
    #[arg(long)]
    sequential: bool,
    /// Perturb the input before denoising; the clean input becomes the
    /// ground truth.
    #[arg(long)]
    noise_factor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl DenoiseArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::read(path)?,
            None => Settings::default(),
        };
        let path = |p: &PathBuf| p.display().to_string();
        let strings = [
            ("input", self.input.clone()),
            ("output", self.output.as_ref().map(path)),
            ("labels", self.labels.clone()),
            ("labels-out", self.labels_out.as_ref().map(path)),
            ("metrics-out", self.metrics_out.as_ref().map(path)),
            ("ground-truth", self.ground_truth.as_ref().map(path)),
            ("preset", self.preset.clone()),
            ("lagrangian-form", self.lagrangian_form.clone()),
        ];
        for (k, v) in strings {
            if let Some(v) = v {
                s.set(k, v);
            }
        }
        let floats = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("mu", self.mu),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("c-inner", self.c_inner),
            ("tol", self.tol),
            ("cg-rtol-phi", self.cg_rtol_phi),
            ("newton-rtol", self.newton_rtol),
            ("noise-factor", self.noise_factor),
        ];
        for (k, v) in floats {
            if let Some(v) = v {
                s.set(k, v);
            }
        }
        if let Some(v) = self.max_iters {
            s.set("max-iters", v);
        }
        if let Some(v) = self.seed {
            s.set("seed", v);
        }
        if self.paper_literal_dual {
            s.set("dual-update", "paper-literal");
        }
        if self.sequential {
            s.set("exec", "sequential");
        }
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Denoise(args) => {
            let cfg = args.settings()?.resolve()?;
            let summary = commands::denoise(&cfg)?;
            println!(
                "iterations {} converged {} labels_used {} line_search_failures {}",
                summary.iterations,
                summary.converged,
                summary.labels_used,
                summary.line_search_failures
            );
            if let Some((data, result)) = summary.distances {
                println!("F1 input {data} result {result}");
            }
            println!("wrote {}", cfg.output.display());
        }
        Command::Gen { spec, output } => {
            if is_label_spec(&spec) {
                io::write_text(&output, &format_label_vectors(&load_labels(&spec)?))?;
            } else {
                let mesh = load_mesh(&spec)?;
                io::write_mesh(&output, &mesh)?;
                if let Some(seed) = spec.strip_prefix("skyline:") {
                    let seed: u64 = seed.parse().context("invalid skyline seed")?;
                    let (_, meta) = gen::gen_skyline(&SkylineParams::default(), seed);
                    let json = serde_json::to_string_pretty(&meta)?;
                    io::write_text(&output.with_extension("skyline.json"), &(json + "\n"))?;
                }
            }
        }
        Command::Noise {
            input,
            output,
            noise_factor,
            seed,
        } => commands::noise(&input, &output, noise_factor, seed)?,
        Command::Metrics { a, b } => {
            let f1 = mesh_distance(&load_mesh(&a)?, &load_mesh(&b)?)?;
            println!("{f1}");
        }
    }
    Ok(())
}

fn is_label_spec(spec: &str) -> bool {
    spec == "axes" || spec.starts_with("fibonacci:") || spec.starts_with("platonic:")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
