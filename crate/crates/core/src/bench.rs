//! Experiment matrices comparing UBN with Newton continuation: the annulus
//! sweep over rotation amounts and the 3D bar pull tests.

use std::fmt::Write as _;

use crate::continuation::{continuation_solve, make_annulus_polar_path, ContinuationConfig, LoadPath};
use crate::error::Result;
use crate::field::DisplacementField;
use crate::material::MaterialParams;
use crate::mesh::{annulus_dirichlet, generate_annulus, generate_bar, pull_dirichlet, BarSpec, LoadSpec, ReferenceMesh};
use crate::newton::{ubn_solve_with, SolveReport, Status, UbnOptions};

/// Counts and outcome of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub status: Status,
    pub is_iterations: usize,
    pub newton_iterations: usize,
    pub major_iterations: usize,
    pub als_steps: usize,
    pub final_lambda: f64,
    pub line_search_activity: f64,
    /// Smallest `J_new / J_old` over all Newton updates.
    pub min_jacobian_ratio: f64,
}

impl From<&SolveReport> for RunSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            status: r.status,
            is_iterations: r.is_iterations,
            newton_iterations: r.newton_iterations,
            major_iterations: r.major_iterations,
            als_steps: r.als_steps,
            final_lambda: r.final_lambda,
            line_search_activity: r.line_search_activity(),
            min_jacobian_ratio: r
                .newton_trace
                .iter()
                .map(|t| t.min_jacobian_ratio)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Shared solver settings for a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub material: MaterialParams,
    pub ubn: UbnOptions,
    pub continuation: ContinuationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusBenchConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    pub target_nodes: usize,
    pub f_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub solver: SolverSettings,
}

impl Default for AnnulusBenchConfig {
    fn default() -> Self {
        Self {
            r_inner: 0.3,
            r_outer: 1.0,
            target_nodes: 182,
            f_values: vec![0.1, 0.3, 0.6, 0.7],
            eta_values: vec![1.0 / 3.0, 1.2],
            solver: SolverSettings {
                material: crate::material::lame_from_young_poisson(1.0, 0.3).expect("valid constants"),
                ubn: UbnOptions::default(),
                continuation: ContinuationConfig::default(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    /// Rotation amount (annulus) or pull magnitude (bar).
    pub load: f64,
    pub ubn: RunSummary,
    /// One entry per `eta`, in configuration order.
    pub continuation: Vec<(f64, RunSummary)>,
    /// UBN end state, for figures.
    pub ubn_u: DisplacementField,
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    pub mesh: ReferenceMesh,
    pub rows: Vec<BenchRow>,
}

fn run_row(
    mesh: &ReferenceMesh,
    load: f64,
    dirichlet: &crate::mesh::DirichletSpec,
    path: &LoadPath,
    eta_values: &[f64],
    s: &SolverSettings,
) -> BenchRow {
    let ubn = ubn_solve_with(mesh, dirichlet, &s.material, &LoadSpec::none(), s.ubn);
    let continuation = eta_values
        .iter()
        .map(|&eta| {
            let cfg = ContinuationConfig {
                eta,
                ..s.continuation
            };
            let c = continuation_solve(mesh, path, &s.material, &cfg);
            (eta, RunSummary::from(&c.report))
        })
        .collect();
    BenchRow {
        load,
        ubn: RunSummary::from(&ubn),
        continuation,
        ubn_u: ubn.final_u,
    }
}

/// Runs UBN and continuation (polar path) for every `f` on a generated
/// annulus.
pub fn run_annulus_bench(cfg: &AnnulusBenchConfig) -> Result<BenchTable> {
    let mesh = generate_annulus(cfg.r_inner, cfg.r_outer, cfg.target_nodes)?;
    let mut rows = Vec::new();
    for &f in &cfg.f_values {
        let d = annulus_dirichlet(&mesh, f)?;
        let path = make_annulus_polar_path(&mesh, f)?;
        rows.push(run_row(&mesh, f, &d, &path, &cfg.eta_values, &cfg.solver));
    }
    Ok(BenchTable { mesh, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarBenchConfig {
    pub bar: BarSpec,
    /// Unit pull direction of the free end.
    pub direction: [f64; 3],
    pub magnitudes: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub solver: SolverSettings,
}

impl Default for BarBenchConfig {
    fn default() -> Self {
        Self {
            bar: BarSpec {
                lengths: [2.0, 2.0, 8.0],
                cells: [6, 6, 24],
                ..BarSpec::default()
            },
            direction: [1.0, 0.0, 0.0],
            magnitudes: vec![0.8, 1.6, 3.2],
            eta_values: vec![1.0 / 3.0, 1.2],
            solver: AnnulusBenchConfig::default().solver,
        }
    }
}

/// Pull tests on a generated bar: the `z = 0` end is clamped and the other
/// end translated by `magnitude * direction`; continuation uses the linear
/// path.
pub fn run_bar_bench(cfg: &BarBenchConfig) -> Result<BenchTable> {
    let mesh = generate_bar(&cfg.bar)?;
    run_pull_bench(mesh, cfg)
}

/// Same as [`run_bar_bench`] on a given mesh whose Dirichlet nodes carry
/// marker 1 (clamped) or another marker (pulled).
pub fn run_pull_bench(mesh: ReferenceMesh, cfg: &BarBenchConfig) -> Result<BenchTable> {
    let mut rows = Vec::new();
    for &mag in &cfg.magnitudes {
        let disp = [cfg.direction[0] * mag, cfg.direction[1] * mag, cfg.direction[2] * mag];
        let d = pull_dirichlet(&mesh, crate::mesh::BAR_FIXED, disp);
        let path = LoadPath::linear(d.clone());
        rows.push(run_row(&mesh, mag, &d, &path, &cfg.eta_values, &cfg.solver));
    }
    Ok(BenchTable { mesh, rows })
}

fn eta_label(eta: f64) -> String {
    if (eta - 1.0 / 3.0).abs() < 1e-12 {
        "1/3".into()
    } else {
        format!("{eta}")
    }
}

/// Cell text for a continuation count: `---` for a stalled increment,
/// `***` for inverted elements, the status name for other failures.
fn count_cell(s: &RunSummary, value: usize) -> String {
    match s.status {
        Status::Converged => value.to_string(),
        Status::ContinuationStalled => "---".into(),
        Status::InvertedAfterMajorIteration => "***".into(),
        other => other.to_string(),
    }
}

impl BenchTable {
    /// Machine-readable results with raw counts and statuses.
    pub fn to_csv(&self, load_name: &str) -> String {
        let mut s = format!("{load_name},ubn_is,ubn_nm,ubn_als,ubn_status,ubn_line_search_activity");
        if let Some(row) = self.rows.first() {
            for (eta, _) in &row.continuation {
                let e = eta_label(*eta);
                write!(s, ",cont_{e}_majit,cont_{e}_als,cont_{e}_status,cont_{e}_lambda").unwrap();
            }
        }
        s.push('\n');
        for row in &self.rows {
            let u = &row.ubn;
            write!(
                s,
                "{},{},{},{},{},{:.3}",
                row.load, u.is_iterations, u.newton_iterations, u.als_steps, u.status, u.line_search_activity
            )
            .unwrap();
            for (_, c) in &row.continuation {
                write!(
                    s,
                    ",{},{},{},{:.4}",
                    c.major_iterations, c.als_steps, c.status, c.final_lambda
                )
                .unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width table laid out like the published comparison tables.
    pub fn render(&self, load_name: &str) -> String {
        let mut s = String::new();
        write!(s, "{load_name:>8} {:>6} {:>6} {:>6}", "IS", "NM", "ALS").unwrap();
        if let Some(row) = self.rows.first() {
            for (eta, _) in &row.continuation {
                let e = eta_label(*eta);
                write!(s, " {:>12} {:>12}", format!("MajIt({e})"), format!("ALS({e})")).unwrap();
            }
        }
        s.push('\n');
        for row in &self.rows {
            let u = &row.ubn;
            let ubn_cell = |v: usize| {
                if u.status == Status::Converged {
                    v.to_string()
                } else {
                    u.status.to_string()
                }
            };
            write!(
                s,
                "{:>8} {:>6} {:>6} {:>6}",
                row.load,
                u.is_iterations,
                ubn_cell(u.newton_iterations),
                ubn_cell(u.als_steps)
            )
            .unwrap();
            for (_, c) in &row.continuation {
                write!(
                    s,
                    " {:>12} {:>12}",
                    count_cell(c, c.major_iterations),
                    count_cell(c, c.als_steps)
                )
                .unwrap();
            }
            s.push('\n');
        }
        s
    }
}
