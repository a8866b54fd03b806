//! Subcommand implementations. Each returns an error instead of exiting so
//! that the binary decides the exit status.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use labelnorm::admm::{self, labels_used, AdmmError, IterationMetrics};
use labelnorm::energy::{fidelity_f1, AdmmState, LabelSet};
use labelnorm::gen::{self, NoiseSpec, Platonic, SkylineParams};
use labelnorm::mesh::{SurfaceMesh, Vec3};

use crate::config::RunConfig;
use crate::io::{self, write_mesh_as};

/// Mesh file or generator spec: `icosphere:S[:R]`, `cube:N[:SIZE]`,
/// `skyline:SEED`.
pub fn load_mesh(spec: &str) -> Result<SurfaceMesh> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |i: usize, default: &str| -> Result<f64> {
        let s = parts.get(i).copied().unwrap_or(default);
        s.parse()
            .with_context(|| format!("invalid number {s:?} in {spec:?}"))
    };
    let int = |i: usize| -> Result<u64> {
        let s = parts.get(i).copied().unwrap_or("");
        s.parse()
            .with_context(|| format!("invalid integer {s:?} in {spec:?}"))
    };
    match parts[0] {
        "icosphere" if parts.len() <= 3 => {
            let s = int(1)?;
            ensure!(s <= 7, "icosphere subdivision level {s} is above 7");
            Ok(gen::gen_icosphere(s as u32, num(2, "1")?))
        }
        "cube" if parts.len() <= 3 => {
            let n = int(1)?;
            ensure!(n >= 1, "cube resolution must be at least 1");
            Ok(gen::gen_cube(n as usize, num(2, "1")?))
        }
        "skyline" if parts.len() == 2 => Ok(gen::gen_skyline(&SkylineParams::default(), int(1)?).0),
        _ => io::read_mesh(Path::new(spec)).with_context(|| format!("reading mesh {spec}")),
    }
}

/// `fibonacci:L`, `platonic:KIND`, `axes`, `file:PATH` or a plain path.
pub fn load_labels(spec: &str) -> Result<LabelSet> {
    if spec == "axes" {
        return Ok(gen::axis_labels());
    }
    if let Some(l) = spec.strip_prefix("fibonacci:") {
        let l: usize = l
            .parse()
            .with_context(|| format!("invalid label count in {spec:?}"))?;
        ensure!(l >= 1, "need at least one label");
        return Ok(gen::gen_fibonacci_labels(l));
    }
    if let Some(kind) = spec.strip_prefix("platonic:") {
        let kind: Platonic = kind.parse().map_err(anyhow::Error::msg)?;
        return Ok(gen::gen_platonic_labels(kind));
    }
    let path = spec.strip_prefix("file:").unwrap_or(spec);
    io::read_label_vectors(Path::new(path)).with_context(|| format!("reading labels {path}"))
}

pub fn format_label_vectors(labels: &LabelSet) -> String {
    labels
        .iter()
        .map(|g| format!("{} {} {}\n", g.x, g.y, g.z))
        .collect()
}

fn same_connectivity(a: &SurfaceMesh, b: &SurfaceMesh) -> bool {
    a.num_vertices() == b.num_vertices() && a.faces() == b.faces()
}

/// `F₁ = Σ_v |X_v − Y_v|²` between two meshes with the same connectivity.
pub fn mesh_distance(a: &SurfaceMesh, b: &SurfaceMesh) -> Result<f64> {
    ensure!(
        same_connectivity(a, b),
        "meshes differ in connectivity ({} vs {} vertices, {} vs {} faces)",
        a.num_vertices(),
        b.num_vertices(),
        a.num_faces(),
        b.num_faces()
    );
    Ok(fidelity_f1(a.positions(), b.positions()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiseSummary {
    pub iterations: usize,
    pub converged: bool,
    pub labels_used: usize,
    pub line_search_failures: usize,
    /// `F₁(data, ground truth)` and `F₁(result, ground truth)`.
    pub distances: Option<(f64, f64)>,
}

/// Runs the full pipeline for `cfg`: load (and optionally perturb) the
/// input, run ADMM, and write mesh, label CSV, metrics and config echo.
///
/// Metrics stream to `<metrics>.partial` and are renamed on success. On an
/// abort with a usable state, that state is written to `<output>.partial`
/// and `<labels>.partial`.
pub fn denoise(cfg: &RunConfig) -> Result<DenoiseSummary> {
    let clean = load_mesh(&cfg.input)?;
    let labels = load_labels(&cfg.labels)?;
    let mut ground_truth = match &cfg.ground_truth {
        Some(p) => Some(io::read_mesh(p).with_context(|| format!("reading mesh {}", p.display()))?),
        None => None,
    };
    let data = if cfg.noise_factor > 0.0 {
        let noisy = gen::add_noise(
            &clean,
            &NoiseSpec {
                variance_factor: cfg.noise_factor,
                seed: cfg.seed,
            },
        );
        write_mesh_as(
            &cfg.output.with_extension(noisy_ext(&cfg.output)),
            &cfg.output,
            &noisy,
            noisy.positions(),
        )?;
        ground_truth.get_or_insert(clean);
        noisy
    } else {
        clean
    };
    if let Some(gt) = &ground_truth {
        ensure!(
            same_connectivity(gt, &data),
            "ground truth and input differ in connectivity"
        );
    }

    io::write_text(&cfg.output.with_extension("config"), &cfg.echo())?;

    let partial_metrics = with_suffix(&cfg.metrics_out, ".partial");
    let mut metrics_file = BufWriter::new(
        File::create(&partial_metrics)
            .with_context(|| format!("creating {}", partial_metrics.display()))?,
    );
    let mut write_error = None;
    let x_data: Vec<Vec3> = data.positions().to_vec();
    let initial = AdmmState::initial(&data, x_data.clone(), &labels);
    let result = admm::run(
        &data,
        &x_data,
        &labels,
        &cfg.params,
        initial,
        |m: &IterationMetrics| {
            if write_error.is_none() {
                let line = serde_json::to_string(m).expect("metrics serialize");
                if let Err(e) = writeln!(metrics_file, "{line}").and_then(|_| metrics_file.flush())
                {
                    write_error = Some(e);
                }
            }
        },
    );
    metrics_file.flush()?;
    drop(metrics_file);
    if let Some(e) = write_error {
        bail!("writing {}: {e}", partial_metrics.display());
    }

    let outcome = match result {
        Ok(o) => o,
        Err(AdmmError::NonFiniteState {
            iteration,
            last_good,
        }) => {
            write_mesh_as(
                &with_suffix(&cfg.output, ".partial"),
                &cfg.output,
                &data,
                &last_good.positions,
            )?;
            io::write_labels(&with_suffix(&cfg.labels_out, ".partial"), &last_good.w)?;
            bail!("non-finite state in iteration {iteration}; last good state written with .partial suffix");
        }
        Err(e) => return Err(e.into()),
    };

    write_mesh_as(&cfg.output, &cfg.output, &data, &outcome.state.positions)?;
    io::write_labels(&cfg.labels_out, &outcome.state.w)?;
    std::fs::rename(&partial_metrics, &cfg.metrics_out)
        .with_context(|| format!("renaming metrics to {}", cfg.metrics_out.display()))?;

    let distances = ground_truth.map(|gt| {
        (
            fidelity_f1(&x_data, gt.positions()),
            fidelity_f1(&outcome.state.positions, gt.positions()),
        )
    });
    Ok(DenoiseSummary {
        iterations: outcome.metrics.len(),
        converged: outcome.converged,
        labels_used: labels_used(&outcome.state.w),
        line_search_failures: outcome.line_search_failures,
        distances,
    })
}

fn noisy_ext(output: &Path) -> String {
    format!(
        "noisy.{}",
        output.extension().and_then(|e| e.to_str()).unwrap_or("obj")
    )
}

pub fn noise(input: &str, output: &Path, factor: f64, seed: u64) -> Result<()> {
    ensure!(
        factor.is_finite() && factor >= 0.0,
        "noise factor must be nonnegative"
    );
    let mesh = load_mesh(input)?;
    let noisy = gen::add_noise(
        &mesh,
        &NoiseSpec {
            variance_factor: factor,
            seed,
        },
    );
    io::write_mesh(output, &noisy)?;
    Ok(())
}
