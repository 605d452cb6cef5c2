use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use linersolve::admissibility::{is_admissible, rasterize_zone, Ratio};
use linersolve::assembly::{Discretization, LinerDensity};
use linersolve::config::{MeshSection, ModeName, RunConfig};
use linersolve::energy::{energy, total_energy};
use linersolve::mesh::{generate, MeshSpec};
use linersolve::optimize::{self, FeasibleSet, OptimizeOptions};
use linersolve::verify::{self, Level};
use linersolve::Error;

#[derive(Parser, Debug)]
#[command(name = "linersolve", version, about = "Convected Helmholtz solver and acoustic liner optimizer")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores). LINERSOLVE_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the cylinder mesh and write it as legacy VTK.
    Mesh(MeshArgs),
    /// Rasterize the admissible beta_v zone for an admittance ratio.
    Zone(ZoneArgs),
    /// Estimate the upper-regularity constant of the boundary measure.
    MeasureCheck(MeasureArgs),
    /// Solve at one wavenumber.
    Solve(SolveArgs),
    /// Energy over a wavenumber band.
    Sweep(SweepArgs),
    /// Optimize the liner density.
    Optimize(OptimizeArgs),
    /// Run the built-in self checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Serialize)]
struct MeshArgs {
    #[arg(long = "L")]
    length: Option<f64>,
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long)]
    n_axial: Option<usize>,
    #[arg(long)]
    n_ring: Option<usize>,
    #[arg(long)]
    refine: Option<u32>,
    #[arg(long, default_value = "mesh.vtk")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ZoneArgs {
    /// Im Y / Re Y, or inf / -inf for the limit sets.
    #[arg(long, allow_hyphen_values = true)]
    ratio: String,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long, default_value = "zone.csv")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct MeasureArgs {
    #[arg(long)]
    d: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// JSON report; printed only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    /// Wavenumber; defaults to omega / c0.
    #[arg(long)]
    k0: Option<f64>,
    /// Liner density CSV (facet, value); defaults to the uniform [run] chi.
    #[arg(long)]
    chi: Option<PathBuf>,
    #[arg(long, default_value = "solution.vtk")]
    out: PathBuf,
    /// Raw nodal values as CSV (node, re, im).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    kmin: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    chi: Option<PathBuf>,
    #[arg(long, default_value = "band.csv")]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum ModeArg {
    Single,
    Band,
}

#[derive(Args, Debug, Serialize)]
struct OptimizeArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    kmin: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Starting density CSV; defaults to the uniform gamma.
    #[arg(long)]
    chi: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[arg(long, default_value = "chi.csv")]
    chi_out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
    level: LevelArg,
}

/// Failures split by exit code: bad input (1) or failed numerics (2).
enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    let threads = thread_count(cli.threads, config.as_ref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Input(format!("cannot start the thread pool: {e}")))?;
    let need = |what: &str| -> CliResult<RunConfig> {
        config.clone().ok_or_else(|| Failure::Input(format!("`{what}` needs --config FILE")))
    };
    match cli.command {
        Command::Mesh(a) => mesh_cmd(a, config.as_ref()),
        Command::Zone(a) => zone_cmd(a),
        Command::MeasureCheck(a) => measure_cmd(a, need("measure-check")?),
        Command::Solve(a) => solve_cmd(a, need("solve")?),
        Command::Sweep(a) => sweep_cmd(a, need("sweep")?),
        Command::Optimize(a) => optimize_cmd(a, need("optimize")?),
        Command::Verify(a) => verify_cmd(a),
    }
}

fn thread_count(flag: Option<usize>, config: Option<&RunConfig>) -> CliResult<usize> {
    if let Ok(v) = std::env::var("LINERSOLVE_THREADS") {
        return v
            .trim()
            .parse()
            .map_err(|_| Failure::Input(format!("LINERSOLVE_THREADS = '{v}' is not a thread count")));
    }
    Ok(flag.or(config.map(|c| c.run.threads)).unwrap_or(0))
}

/// Hash of everything that determines the outputs.
fn inputs_hash(command: &str, config: Option<&RunConfig>, args: &impl Serialize) -> String {
    let text = serde_json::to_string(&json!({ "command": command, "config": config, "args": args }))
        .expect("inputs serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn summary_path(artifact: &Path) -> PathBuf {
    let stem = artifact.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    artifact.with_file_name(format!("{stem}.summary.json"))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

fn write_summary(artifact: &Path, mut summary: Value) -> CliResult<()> {
    summary["artifact"] = json!(artifact.display().to_string());
    summary["version"] = json!(env!("CARGO_PKG_VERSION"));
    write_json(&summary_path(artifact), &summary)
}

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn out_path(config: &RunConfig, name: &Path) -> CliResult<PathBuf> {
    let p = config.output_path(name);
    create_parent(&p)?;
    Ok(p)
}

fn mesh_cmd(a: MeshArgs, config: Option<&RunConfig>) -> CliResult<()> {
    let start = Instant::now();
    let base = config.map(|c| c.mesh.clone()).unwrap_or_else(MeshSection::default);
    let spec = MeshSpec {
        length: a.length.unwrap_or(base.length),
        radius: a.radius.unwrap_or(base.radius),
        n_axial: a.n_axial.unwrap_or(base.n_axial),
        n_ring: a.n_ring.unwrap_or(base.n_ring),
        refinement_level: a.refine.unwrap_or(base.refine),
    };
    let mesh = generate(&spec)?;
    let out = match config {
        Some(c) => out_path(c, &a.out)?,
        None => {
            create_parent(&a.out)?;
            a.out.clone()
        }
    };
    mesh.save_vtk(&out, &[])?;
    println!(
        "{} nodes, {} tetrahedra, {} boundary facets, volume {:.6} -> {}",
        mesh.nodes.len(),
        mesh.tets.len(),
        mesh.facets.len(),
        mesh.volume(),
        out.display()
    );
    write_summary(
        &out,
        json!({
            "command": "mesh",
            "inputs_hash": inputs_hash("mesh", config, &a),
            "nodes": mesh.nodes.len(),
            "tets": mesh.tets.len(),
            "facets": mesh.facets.len(),
            "max_facet_diameter": mesh.max_facet_diameter(),
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn zone_cmd(a: ZoneArgs) -> CliResult<()> {
    let start = Instant::now();
    let ratio: Ratio = a.ratio.parse()?;
    let raster = rasterize_zone(ratio, a.n)?;
    create_parent(&a.out)?;
    raster.save_csv(&a.out)?;
    println!("{} of {} cells admissible -> {}", raster.count(), a.n * a.n, a.out.display());
    write_summary(
        &a.out,
        json!({
            "command": "zone",
            "inputs_hash": inputs_hash("zone", None, &a),
            "members": raster.count(),
            "cells": a.n * a.n,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn measure_cmd(a: MeasureArgs, config: RunConfig) -> CliResult<()> {
    let start = Instant::now();
    let disc = config.discretization()?;
    let reg = disc.measure.estimate_upper_regularity_seeded(a.d, a.samples, config.run.seed)?;
    let report = json!({
        "command": "measure-check",
        "inputs_hash": inputs_hash("measure-check", Some(&config), &a),
        "d": a.d,
        "samples": a.samples,
        "a_hat": reg.a_hat,
        "worst_point": reg.worst_point,
        "worst_radius": reg.worst_radius,
        "radii": reg.radii,
        "lateral_mass": disc.measure.total_lateral_mass,
        "total_mass": disc.measure.total_mass(),
        "seconds": start.elapsed().as_secs_f64(),
    });
    println!(
        "A_hat = {:.6e} at d = {} (worst point {:?}, radius {:.3e}, {} radii)",
        reg.a_hat, a.d, reg.worst_point, reg.worst_radius, reg.radii
    );
    if let Some(out) = &a.out {
        let out = out_path(&config, out)?;
        write_json(&out, &report)?;
    }
    Ok(())
}

/// Reads a density CSV with columns `facet,value`, keyed by mesh facet id.
fn read_density(path: &Path, disc: &Discretization) -> CliResult<LinerDensity> {
    let index: HashMap<usize, usize> = disc.lateral.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut values = vec![None; disc.lateral.len()];
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    for (line, row) in reader.deserialize::<(usize, f64)>().enumerate() {
        let (facet, value) = row.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let i = *index.get(&facet).ok_or_else(|| {
            Failure::Input(format!("{} row {}: facet {facet} is not a lateral facet", path.display(), line + 2))
        })?;
        values[i] = Some(value);
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                Failure::Input(format!("{}: no value for lateral facet {}", path.display(), disc.lateral[i]))
            })
        })
        .collect::<CliResult<Vec<f64>>>()?;
    Ok(LinerDensity::new(values, disc)?)
}

fn write_density(path: &Path, disc: &Discretization, values: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Input(e.to_string()))?;
    let csv_err = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["facet", "value"]).map_err(csv_err)?;
    for (f, v) in disc.lateral.iter().zip(values) {
        w.write_record([f.to_string(), format!("{v:.17e}")]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn density_for(path: &Option<PathBuf>, config: &RunConfig, disc: &Discretization) -> CliResult<LinerDensity> {
    match path {
        Some(p) => read_density(p, disc),
        None => Ok(config.uniform_density(disc)?),
    }
}

fn warn_if_inadmissible(config: &RunConfig) {
    let p = config.physical_params();
    if let Ok(d) = p.derive() {
        if let Ok(false) = is_admissible(p.beta_v, d.ratio) {
            warn!(
                "beta_v = {} lies outside the admissible zone for Im Y / Re Y = {:.4}; well-posedness is not guaranteed",
                p.beta_v, d.ratio
            );
        }
    }
}

fn solve_cmd(a: SolveArgs, config: RunConfig) -> CliResult<()> {
    let start = Instant::now();
    warn_if_inadmissible(&config);
    let problem = config.problem()?;
    let chi = density_for(&a.chi, &config, &problem.disc)?;
    let k0 = a.k0.unwrap_or(config.base_k0());
    let u = problem.solve_at(k0, &chi)?;
    let j = energy(&problem.energy, &problem.disc, &u);
    let out = out_path(&config, &a.out)?;
    let re: Vec<f64> = u.values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = u.values.iter().map(|v| v.im).collect();
    let abs: Vec<f64> = u.values.iter().map(|v| v.norm()).collect();
    problem.disc.mesh.save_vtk(&out, &[("re", &re), ("im", &im), ("abs", &abs)])?;
    let mut artifacts = vec![out.clone()];
    if let Some(csv_path) = &a.csv {
        let p = out_path(&config, csv_path)?;
        let mut w = csv::Writer::from_path(&p).map_err(|e| Failure::Input(e.to_string()))?;
        let csv_err = |e: csv::Error| Failure::Input(e.to_string());
        w.write_record(["node", "re", "im"]).map_err(csv_err)?;
        for (i, v) in u.values.iter().enumerate() {
            w.write_record([i.to_string(), format!("{:.17e}", v.re), format!("{:.17e}", v.im)]).map_err(csv_err)?;
        }
        w.flush()?;
        artifacts.push(p);
    }
    println!("k0 = {k0}: residual {:.3e}, energy {j:.10e} -> {}", u.residual, out.display());
    let summary = json!({
        "command": "solve",
        "inputs_hash": inputs_hash("solve", Some(&config), &a),
        "k0": k0,
        "nodes": problem.disc.node_count(),
        "residual": u.residual,
        "energy": j,
        "chi_hash": u.chi_hash,
        "seconds": start.elapsed().as_secs_f64(),
    });
    for p in artifacts {
        write_summary(&p, summary.clone())?;
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs, mut config: RunConfig) -> CliResult<()> {
    let start = Instant::now();
    if a.kmin.is_some() {
        config.energy.k_min = a.kmin;
    }
    if a.kmax.is_some() {
        config.energy.k_max = a.kmax;
    }
    if let Some(n) = a.n {
        config.energy.n_quad = n;
    }
    config.validate()?;
    warn_if_inadmissible(&config);
    let problem = config.problem()?;
    let chi = density_for(&a.chi, &config, &problem.disc)?;
    let band = total_energy(&problem, &chi)?;
    let out = out_path(&config, &a.out)?;
    let mut w = csv::Writer::from_path(&out).map_err(|e| Failure::Input(e.to_string()))?;
    let csv_err = |e: csv::Error| Failure::Input(e.to_string());
    w.write_record(["k0", "J"]).map_err(csv_err)?;
    for (k, j) in &band.samples {
        w.write_record([format!("{k:.17e}"), format!("{j:.17e}")]).map_err(csv_err)?;
    }
    w.flush()?;
    println!("{} wavenumbers, band energy {:.10e} -> {}", band.samples.len(), band.total, out.display());
    write_summary(
        &out,
        json!({
            "command": "sweep",
            "inputs_hash": inputs_hash("sweep", Some(&config), &a),
            "total_energy": band.total,
            "energies": band.samples,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn optimize_cmd(a: OptimizeArgs, mut config: RunConfig) -> CliResult<()> {
    let o = &mut config.optimize;
    if let Some(g) = a.gamma {
        o.gamma = g;
    }
    if let Some(m) = a.mode {
        o.mode = match m {
            ModeArg::Single => ModeName::Single,
            ModeArg::Band => ModeName::Band,
        };
    }
    if a.k0.is_some() {
        o.k0 = a.k0;
    }
    if let Some(i) = a.iters {
        o.max_iters = i;
    }
    if let Some(t) = a.tol {
        o.tol = t;
    }
    if a.kmin.is_some() {
        config.energy.k_min = a.kmin;
    }
    if a.kmax.is_some() {
        config.energy.k_max = a.kmax;
    }
    if let Some(n) = a.n {
        config.energy.n_quad = n;
    }
    config.validate()?;
    warn_if_inadmissible(&config);
    let problem = config.problem()?;
    let set = FeasibleSet::new(config.optimize.gamma, problem.disc.lateral_mass.clone())?;
    let start_chi = match &a.chi {
        Some(p) => read_density(p, &problem.disc)?,
        None => LinerDensity::uniform(config.optimize.gamma, &problem.disc)?,
    };
    let opts = OptimizeOptions { max_iters: config.optimize.max_iters, tol: config.optimize.tol };
    let report = optimize::minimize(&problem, &set, config.mode(), &start_chi, opts)?;
    info!("optimization finished in {:.2} s", report.wall_seconds);
    let chi_out = out_path(&config, &a.chi_out)?;
    write_density(&chi_out, &problem.disc, &report.chi)?;
    let out = out_path(&config, &a.out)?;
    let hash = inputs_hash("optimize", Some(&config), &a);
    let mut value = serde_json::to_value(&report).map_err(|e| Failure::Input(e.to_string()))?;
    value["inputs_hash"] = json!(hash);
    value["facets"] = json!(problem.disc.lateral);
    write_json(&out, &value)?;
    println!(
        "{} iterations, energy {:.10e} (thresholded {:.10e}, gap {:.3e}){} -> {}, {}",
        report.iterates.len() - 1,
        report.energy,
        report.thresholded_energy,
        report.gap,
        if report.line_search_exhausted { ", line search exhausted" } else { "" },
        out.display(),
        chi_out.display()
    );
    write_summary(
        &chi_out,
        json!({
            "command": "optimize",
            "inputs_hash": hash,
            "energy": report.energy,
            "thresholded_energy": report.thresholded_energy,
            "converged": report.converged,
            "seconds": report.wall_seconds,
        }),
    )
}

fn verify_cmd(a: VerifyArgs) -> CliResult<()> {
    let level = match a.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let checks = verify::run(level);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!(
            "{:<width$}  {}  {:>8.2} s  {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
