//! `ubn`: solve, benchmark and mesh utilities for the ubn-core solvers.
//!
//! Settings come from built-in defaults, then an optional `key = value`
//! config file (`--config`), then `--set key=value` pairs and dedicated flags.
//! Exit status: 0 converged, 2 solver failure, 1 bad input.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ubn_core::assembly::IndefinitePolicy;
use ubn_core::bench::{self, AnnulusBenchConfig, BarBenchConfig, BenchTable, SolverSettings};
use ubn_core::continuation::{self, make_annulus_polar_path, ContinuationConfig, LoadPath};
use ubn_core::material::lame_from_young_poisson;
use ubn_core::mesh::{
    annulus_dirichlet, annulus_radii, generate_annulus, generate_bar, load_triangle_files, pull_dirichlet,
    write_ele, write_node, write_svg, write_vtk, BarSpec, SliverSpec, BAR_FIXED,
};
use ubn_core::newton::{self, ubn_solve_with, UbnOptions};
use ubn_core::untangle;
use ubn_core::{DirichletSpec, DisplacementField, LoadSpec, ReferenceMesh, SolveReport, Status};

use config::Settings;

#[derive(Parser)]
#[command(name = "ubn", version, about = "Mooney-Rivlin solves with untangling Newton or continuation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write the report, traces and deformed mesh.
    Solve(SolveArgs),
    /// Annulus rotation sweep: UBN against continuation.
    BenchAnnulus(BenchAnnulusArgs),
    /// 3D pull tests: UBN against continuation on a linear path.
    #[command(name = "bench-3d")]
    Bench3d(Bench3dArgs),
    /// Write a generated annulus as Triangle .node/.ele files.
    GenAnnulus(GenAnnulusArgs),
    /// Write a generated tetrahedral bar as Triangle-style .node/.ele files.
    GenBar(GenBarArgs),
    /// Load a mesh and print its statistics.
    CheckMesh(CheckMeshArgs),
}

#[derive(Args, Default)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Args, Default)]
struct SolverFlags {
    #[arg(long)]
    tol_final: Option<String>,
    #[arg(long)]
    tol_intermediate: Option<String>,
    #[arg(long)]
    max_is_iters: Option<String>,
    #[arg(long)]
    min_increment: Option<String>,
    /// `solve` (fall back to an LU step) or `fail` on indefinite tangents.
    #[arg(long)]
    indefinite: Option<String>,
}

#[derive(Args, Default)]
struct MeshFlags {
    /// Path stem of `.node`/`.ele` files.
    #[arg(long)]
    mesh: Option<String>,
    /// `annulus` or `bar` when no mesh file is given.
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    sliver_flatness: Option<String>,
    /// Unit pull direction `x,y,z` (3D meshes).
    #[arg(long)]
    direction: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mesh: MeshFlags,
    #[command(flatten)]
    solver: SolverFlags,
    /// `ubn` or `continuation`.
    #[arg(long)]
    method: Option<String>,
    /// Annulus rotation amount (2D meshes).
    #[arg(long)]
    f: Option<String>,
    /// Pull magnitude (3D meshes).
    #[arg(long)]
    pull: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// Also write per-iteration trace CSVs.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct BenchAnnulusArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: SolverFlags,
    /// Comma-separated rotation amounts.
    #[arg(long)]
    f: Option<String>,
    /// Comma-separated continuation parameters, fractions allowed.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
}

#[derive(Args)]
struct Bench3dArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    mesh: MeshFlags,
    #[command(flatten)]
    solver: SolverFlags,
    /// Comma-separated pull magnitudes.
    #[arg(long)]
    pulls: Option<String>,
    #[arg(long)]
    eta: Option<String>,
}

#[derive(Args)]
struct GenAnnulusArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    nodes: Option<String>,
    /// Output path stem.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenBarArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    sliver_flatness: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckMeshArgs {
    #[arg(long)]
    mesh: String,
}

fn defaults() -> Settings {
    let mut s = Settings::default();
    for (k, v) in [
        ("generator", "annulus"),
        ("f", "0.3"),
        ("pull", "2.4"),
        ("direction", "1,0,0"),
        ("eta", "1/3"),
        ("method", "ubn"),
        ("tol_final", "1e-10"),
        ("tol_intermediate", "1e-3"),
        ("max_is_iters", "400"),
        ("max_newton", "100"),
        ("max_newton_per_step", "50"),
        ("min_increment", "0.0005"),
        ("line_search", "true"),
        ("indefinite", "solve"),
        ("young", "1"),
        ("poisson", "0.3"),
        ("r_inner", "0.3"),
        ("r_outer", "1"),
        ("nodes", "182"),
        ("lengths", "2,2,6"),
        ("cells", "4,4,12"),
        ("jitter", "0"),
        ("seed", "0"),
        ("f_values", "0.1,0.3,0.6,0.7"),
        ("eta_values", "1/3,1.2"),
        ("out_dir", "."),
        ("trace", "false"),
    ] {
        s.set(k, v).expect("default keys are known");
    }
    s
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn layered(common: &Common, extra_defaults: &[(&str, &str)], flags: &[(&str, &Option<String>)]) -> Result<Settings> {
    let mut s = defaults();
    for (k, v) in extra_defaults {
        s.set(k, *v)?;
    }
    if let Some(path) = &common.config {
        s.merge_file(path)?;
    }
    for pair in &common.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {pair:?}"))?;
        s.set(k, v)?;
    }
    s.set_opt("out_dir", &common.out_dir)?;
    for (k, v) in flags {
        s.set_opt(k, v)?;
    }
    Ok(s)
}

fn solver_flags(f: &SolverFlags) -> [(&'static str, &Option<String>); 5] {
    [
        ("tol_final", &f.tol_final),
        ("tol_intermediate", &f.tol_intermediate),
        ("max_is_iters", &f.max_is_iters),
        ("min_increment", &f.min_increment),
        ("indefinite", &f.indefinite),
    ]
}

fn mesh_flags(f: &MeshFlags) -> [(&'static str, &Option<String>); 5] {
    [
        ("mesh", &f.mesh),
        ("generator", &f.generator),
        ("nodes", &f.nodes),
        ("sliver_flatness", &f.sliver_flatness),
        ("direction", &f.direction),
    ]
}

fn solver_settings(s: &Settings) -> Result<SolverSettings> {
    let material = lame_from_young_poisson(s.real("young")?, s.real("poisson")?)
        .map_err(|e| anyhow!("invalid value for key 'young'/'poisson': {e}"))?;
    let indefinite = match s.require("indefinite")? {
        "solve" => IndefinitePolicy::Solve,
        "fail" => IndefinitePolicy::Fail,
        other => bail!("invalid value for key 'indefinite': {other:?} (expected solve or fail)"),
    };
    let ubn = UbnOptions {
        max_is_iters: s.get("max_is_iters")?,
        tol: positive(s, "tol_final")?,
        max_newton: s.get("max_newton")?,
        line_search: s.flag("line_search")?,
        indefinite,
    };
    let continuation = ContinuationConfig {
        eta: positive(s, "eta")?,
        min_increment: positive(s, "min_increment")?,
        intermediate_tol: positive(s, "tol_intermediate")?,
        final_tol: ubn.tol,
        max_newton_per_step: s.get("max_newton_per_step")?,
        indefinite,
        ..ContinuationConfig::default()
    };
    Ok(SolverSettings {
        material,
        ubn,
        continuation,
    })
}

fn positive(s: &Settings, key: &str) -> Result<f64> {
    let v = s.real(key)?;
    if v <= 0.0 {
        bail!("invalid value for key '{key}': must be positive, got {v}");
    }
    Ok(v)
}

fn unit_direction(s: &Settings, key: &str) -> Result<[f64; 3]> {
    let d = s.triple(key)?;
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if n == 0.0 {
        bail!("invalid value for key '{key}': zero vector");
    }
    Ok([d[0] / n, d[1] / n, d[2] / n])
}

fn bar_spec(s: &Settings) -> Result<BarSpec> {
    let sliver = match s.real_opt("sliver_flatness")? {
        Some(flatness) => {
            let key = if s.raw("sliver_direction").is_some() {
                "sliver_direction"
            } else {
                "direction"
            };
            Some(SliverSpec {
                direction: unit_direction(s, key)?,
                flatness,
            })
        }
        None => None,
    };
    Ok(BarSpec {
        lengths: s.triple("lengths")?,
        cells: s.usize_triple("cells")?,
        jitter: s.real("jitter")?,
        seed: s.get("seed")?,
        sliver,
    })
}

fn load_or_generate(s: &Settings) -> Result<ReferenceMesh> {
    if let Some(stem) = s.raw("mesh").filter(|m| !m.is_empty()) {
        return load_triangle_files(stem).with_context(|| format!("loading mesh '{stem}'"));
    }
    match s.require("generator")? {
        "annulus" => Ok(generate_annulus(s.real("r_inner")?, s.real("r_outer")?, s.get("nodes")?)?),
        "bar" => Ok(generate_bar(&bar_spec(s)?)?),
        other => bail!("invalid value for key 'generator': {other:?} (expected annulus or bar)"),
    }
}

/// Boundary motion at `lambda = 1` and the continuation path to it: polar
/// rotation for 2D annuli, a straight pull of the marker-2 surface in 3D.
fn boundary(mesh: &ReferenceMesh, s: &Settings) -> Result<(DirichletSpec, LoadPath)> {
    if mesh.dim() == 2 {
        let f = s.real("f")?;
        let d = annulus_dirichlet(mesh, f).context("annulus boundary conditions")?;
        Ok((d, make_annulus_polar_path(mesh, f)?))
    } else {
        let pull = s.real("pull")?;
        let dir = unit_direction(s, "direction")?;
        let d = pull_dirichlet(mesh, BAR_FIXED, [dir[0] * pull, dir[1] * pull, dir[2] * pull]);
        Ok((d.clone(), LoadPath::linear(d)))
    }
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = PathBuf::from(s.require("out_dir")?);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_deformed(dir: &Path, stem: &str, mesh: &ReferenceMesh, u: &DisplacementField) -> Result<()> {
    if mesh.dim() == 2 {
        write(&dir.join(format!("{stem}.svg")), &write_svg(mesh, u))
    } else {
        write(&dir.join(format!("{stem}.vtk")), &write_vtk(mesh, u))
    }
}

fn cmd_solve(a: &SolveArgs) -> Result<ExitCode> {
    let mut flags = vec![
        ("method", &a.method),
        ("f", &a.f),
        ("pull", &a.pull),
        ("eta", &a.eta),
    ];
    flags.extend(mesh_flags(&a.mesh));
    flags.extend(solver_flags(&a.solver));
    let mut s = layered(&a.common, &[], &flags)?;
    if a.trace {
        s.set("trace", "true")?;
    }
    let settings = solver_settings(&s)?;
    let method = s.require("method")?.to_string();
    let trace = s.flag("trace")?;
    let mesh = load_or_generate(&s)?;
    let (dirichlet, path) = boundary(&mesh, &s)?;
    let dir = out_dir(&s)?;

    let (report, major_trace) = match method.as_str() {
        "ubn" => (
            ubn_solve_with(&mesh, &dirichlet, &settings.material, &LoadSpec::none(), settings.ubn),
            None,
        ),
        "continuation" => {
            let c = continuation::continuation_solve(&mesh, &path, &settings.material, &settings.continuation);
            (c.report, Some(c.trace))
        }
        other => bail!("invalid value for key 'method': {other:?} (expected ubn or continuation)"),
    };

    print_summary(&method, &mesh, &report);
    let eta = if method == "continuation" {
        settings.continuation.eta.to_string()
    } else {
        String::new()
    };
    write(
        &dir.join("results.csv"),
        &format!("method,eta,{}\n{method},{eta},{}\n", SolveReport::CSV_HEADER, report.csv_row()),
    )?;
    write_deformed(&dir, "deformed", &mesh, &report.final_u)?;
    if trace {
        write(&dir.join("newton_trace.csv"), &newton::trace_csv(&report.newton_trace))?;
        if method == "ubn" {
            write(&dir.join("untangle_trace.csv"), &untangle::trace_csv(&report.untangle_trace))?;
        }
        if let Some(t) = major_trace {
            write(&dir.join("continuation_trace.csv"), &continuation::trace_csv(&t))?;
        }
    }
    Ok(exit_for(report.status))
}

fn exit_for(status: Status) -> ExitCode {
    if status == Status::Converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn print_summary(method: &str, mesh: &ReferenceMesh, r: &SolveReport) {
    println!(
        "mesh: {}D, {} nodes, {} elements, {} free dofs",
        mesh.dim(),
        mesh.num_nodes(),
        mesh.num_elements(),
        mesh.num_free_dofs()
    );
    println!("method: {method}");
    println!("status: {}", r.status);
    println!(
        "IS {}  NM {}  MajIt {}  ALS {}",
        r.is_iterations, r.newton_iterations, r.major_iterations, r.als_steps
    );
    println!(
        "lambda {}  |F0| {:e}  |F| {:e}  line-search activity {:.2}",
        r.final_lambda,
        r.initial_residual,
        r.final_residual(),
        r.line_search_activity()
    );
    if let Some(m) = &r.message {
        println!("note: {m}");
    }
}

fn emit_table(dir: &Path, table: &BenchTable, load_name: &str) -> Result<()> {
    println!(
        "mesh: {}D, {} nodes, {} elements",
        table.mesh.dim(),
        table.mesh.num_nodes(),
        table.mesh.num_elements()
    );
    print!("{}", table.render(load_name));
    write(&dir.join("results.csv"), &table.to_csv(load_name))
}

fn cmd_bench_annulus(a: &BenchAnnulusArgs) -> Result<ExitCode> {
    let mut flags = vec![("f_values", &a.f), ("eta_values", &a.eta), ("nodes", &a.nodes)];
    flags.extend(solver_flags(&a.solver));
    let s = layered(&a.common, &[], &flags)?;
    let cfg = AnnulusBenchConfig {
        r_inner: s.real("r_inner")?,
        r_outer: s.real("r_outer")?,
        target_nodes: s.get("nodes")?,
        f_values: s.reals("f_values")?,
        eta_values: s.reals("eta_values")?,
        solver: solver_settings(&s)?,
    };
    let dir = out_dir(&s)?;
    let table = bench::run_annulus_bench(&cfg)?;
    emit_table(&dir, &table, "f")?;
    for row in &table.rows {
        write_deformed(&dir, &format!("annulus_f{}", row.load), &table.mesh, &row.ubn_u)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench_3d(a: &Bench3dArgs) -> Result<ExitCode> {
    let mut flags = vec![("pulls", &a.pulls), ("eta_values", &a.eta)];
    flags.extend(mesh_flags(&a.mesh));
    flags.extend(solver_flags(&a.solver));
    let base = BarBenchConfig::default();
    let s = layered(
        &a.common,
        &[
            ("generator", "bar"),
            ("lengths", "2,2,8"),
            ("cells", "6,6,24"),
            ("pulls", "0.8,1.6,3.2"),
        ],
        &flags,
    )?;
    let mesh = load_or_generate(&s)?;
    if mesh.dim() != 3 {
        bail!("bench-3d needs a 3D mesh, got a {}D one", mesh.dim());
    }
    let cfg = BarBenchConfig {
        direction: unit_direction(&s, "direction")?,
        magnitudes: s.reals("pulls")?,
        eta_values: s.reals("eta_values")?,
        solver: solver_settings(&s)?,
        ..base
    };
    let dir = out_dir(&s)?;
    let table = bench::run_pull_bench(mesh, &cfg)?;
    emit_table(&dir, &table, "pull")?;
    for row in &table.rows {
        write_deformed(&dir, &format!("pull_{}", row.load), &table.mesh, &row.ubn_u)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_mesh(stem: &Path, mesh: &ReferenceMesh) -> Result<()> {
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write(&stem.with_extension("node"), &write_node(mesh))?;
    write(&stem.with_extension("ele"), &write_ele(mesh))?;
    println!(
        "wrote {} ({} nodes, {} elements)",
        stem.display(),
        mesh.num_nodes(),
        mesh.num_elements()
    );
    Ok(())
}

fn cmd_gen_annulus(a: &GenAnnulusArgs) -> Result<ExitCode> {
    let s = layered(&a.common, &[], &[("nodes", &a.nodes)])?;
    let mesh = generate_annulus(s.real("r_inner")?, s.real("r_outer")?, s.get("nodes")?)?;
    write_mesh(&a.out, &mesh)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_bar(a: &GenBarArgs) -> Result<ExitCode> {
    let s = layered(&a.common, &[], &[("sliver_flatness", &a.sliver_flatness)])?;
    let mesh = generate_bar(&bar_spec(&s)?)?;
    write_mesh(&a.out, &mesh)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_mesh(a: &CheckMeshArgs) -> Result<ExitCode> {
    let mesh = load_triangle_files(&a.mesh).with_context(|| format!("loading mesh '{}'", a.mesh))?;
    let volumes: Vec<f64> = (0..mesh.num_elements()).map(|e| mesh.reference_volume(e)).collect();
    let vmin = volumes.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = volumes.iter().copied().fold(0.0, f64::max);
    println!("dimension: {}", mesh.dim());
    println!("nodes: {}", mesh.num_nodes());
    println!("elements: {}", mesh.num_elements());
    println!("dirichlet nodes: {}", mesh.dirichlet_nodes().count());
    println!("free dofs: {}", mesh.num_free_dofs());
    println!("boundary facets: {}", mesh.boundary_facets().len());
    println!("facet groups: {:?}", mesh.facet_groups());
    println!("element measure: min {vmin:e}, max {vmax:e}, total {:e}", volumes.iter().sum::<f64>());
    if mesh.dim() == 2 {
        match annulus_radii(&mesh) {
            Ok((ri, ro)) => println!("annulus radii: {ri} / {ro}"),
            Err(e) => println!("not an annulus: {e}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::BenchAnnulus(a) => cmd_bench_annulus(a),
        Command::Bench3d(a) => cmd_bench_3d(a),
        Command::GenAnnulus(a) => cmd_gen_annulus(a),
        Command::GenBar(a) => cmd_gen_bar(a),
        Command::CheckMesh(a) => cmd_check_mesh(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
