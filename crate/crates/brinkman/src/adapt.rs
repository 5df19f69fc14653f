//! Marking strategies and the estimate-mark-refine loop.

use crate::assembly::{AssemblyError, NitscheConfig, SaddleSystem};
use crate::estimate::{estimate, ErrorReport, EstimatorPressure};
use crate::mesh::{refine, Mesh};
use crate::postprocess::{postprocess_pressure, pressure_to_poly, PostprocessError};
use crate::problem::BrinkmanProblem;
use crate::solve::{solve_saddle, SaddleSolution, SolveError};
use crate::spaces::{ElementPoly, FamilyOrder, Space, SpaceError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdaptError {
    #[error("level {level}: {source}")]
    Assembly {
        level: usize,
        #[source]
        source: AssemblyError,
    },
    #[error("level {level}: {source}")]
    Solve {
        level: usize,
        #[source]
        source: SolveError,
    },
    #[error("level {level}: {source}")]
    Postprocess {
        level: usize,
        #[source]
        source: PostprocessError,
    },
    #[error("level {level}: {source}")]
    Space {
        level: usize,
        #[source]
        source: SpaceError,
    },
}

/// Marking strategies: threshold-against-average with a marked-fraction
/// floor, a fixed top fraction, and the staged percentage schedule.
#[derive(Clone, Debug)]
pub enum MarkingStrategy {
    ThresholdAverage { initial_factor: f64, min_fraction: f64 },
    TopFraction { fraction: f64 },
    Staged { schedule: Vec<f64> },
}

impl MarkingStrategy {
    pub fn threshold_average() -> Self {
        MarkingStrategy::ThresholdAverage { initial_factor: 0.5, min_fraction: 0.05 }
    }

    pub fn top_percent(percent: f64) -> Self {
        assert!(percent > 0.0 && percent <= 100.0);
        MarkingStrategy::TopFraction { fraction: percent / 100.0 }
    }

    /// 15/15/15, 10/10/10, 5/5/5, then 2 percent on all later levels.
    pub fn staged_default() -> Self {
        MarkingStrategy::Staged {
            schedule: vec![15.0, 15.0, 15.0, 10.0, 10.0, 10.0, 5.0, 5.0, 5.0, 2.0],
        }
    }
}

/// Elementwise indicators: edge contributions are split evenly between the
/// two neighbours; boundary-edge indicators go wholly to their element.
pub fn elementize_indicators(report: &ErrorReport, mesh: &Mesh) -> Vec<f64> {
    let mut sq: Vec<f64> = report.eta_k.iter().map(|v| v * v).collect();
    for (e, edge) in mesh.edges.iter().enumerate() {
        let contribution = report.eta_e[e] * report.eta_e[e];
        match edge.right {
            Some(r) => {
                sq[edge.left] += 0.5 * contribution;
                sq[r] += 0.5 * contribution;
            }
            None => sq[edge.left] += contribution,
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Marked triangle ids for the given per-element values. All strategies are
/// invariant under positive scaling of the values; top-fraction ties break
/// by ascending element id.
pub fn mark(values: &[f64], strategy: &MarkingStrategy, level: usize) -> Vec<usize> {
    assert!(!values.is_empty(), "cannot mark an empty mesh");
    let n = values.len();
    match strategy {
        MarkingStrategy::ThresholdAverage { initial_factor, min_fraction } => {
            let mean = values.iter().sum::<f64>() / n as f64;
            let floor = ((min_fraction * n as f64).ceil() as usize).clamp(1, n);
            let mut theta = *initial_factor;
            loop {
                let marked: Vec<usize> = (0..n).filter(|&k| values[k] > theta * mean).collect();
                if marked.len() >= floor || theta < 1e-12 {
                    return marked;
                }
                theta *= 0.5;
            }
        }
        MarkingStrategy::TopFraction { fraction } => top_fraction(values, *fraction),
        MarkingStrategy::Staged { schedule } => {
            assert!(!schedule.is_empty());
            let pct = schedule[level.min(schedule.len() - 1)];
            top_fraction(values, pct / 100.0)
        }
    }
}

fn top_fraction(values: &[f64], fraction: f64) -> Vec<usize> {
    let n = values.len();
    let count = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut out: Vec<usize> = idx.into_iter().take(count).collect();
    out.sort_unstable();
    out
}

#[derive(Clone, Copy, Debug)]
pub enum StopRule {
    /// Run levels 0..=n (a level-0 stop performs a single solve).
    Levels(usize),
    /// Refine until the dof count reaches the budget.
    DofBudget(usize),
}

/// One solved level of the adaptive loop.
pub struct AdaptLevel {
    pub level: usize,
    pub mesh: Mesh,
    pub problem: BrinkmanProblem,
    pub space: Space,
    pub solution: SaddleSolution,
    /// Postprocessed pressure, or the raw piecewise-constant pressure when
    /// postprocessing is disabled (ablation runs).
    pub pressure: ElementPoly,
    pub report: ErrorReport,
}

pub struct AdaptOptions {
    pub family: FamilyOrder,
    pub config: NitscheConfig,
    pub strategy: MarkingStrategy,
    pub stop: StopRule,
    pub use_postprocessing: bool,
    pub solver_tol: f64,
}

impl AdaptOptions {
    pub fn new(family: FamilyOrder, strategy: MarkingStrategy, stop: StopRule) -> Self {
        AdaptOptions {
            family,
            config: NitscheConfig::default(),
            strategy,
            stop,
            use_postprocessing: true,
            solver_tol: 1e-10,
        }
    }
}

/// Solve one level: assemble, solve, postprocess and estimate.
pub fn solve_level(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    opts: &AdaptOptions,
    level: usize,
) -> Result<AdaptLevel, AdaptError> {
    let space = Space::new(mesh, opts.family)
        .map_err(|source| AdaptError::Space { level, source })?;
    let system = SaddleSystem::build(problem, mesh, &space, &opts.config)
        .map_err(|source| AdaptError::Assembly { level, source })?;
    let solution = solve_saddle(&system, opts.solver_tol)
        .map_err(|source| AdaptError::Solve { level, source })?;
    let (pressure, report) = if opts.use_postprocessing {
        let pstar = postprocess_pressure(&solution.u, &solution.p, problem, mesh, &space)
            .map_err(|source| AdaptError::Postprocess { level, source })?;
        let report = estimate(
            &solution.u,
            EstimatorPressure::Postprocessed(&pstar),
            problem,
            mesh,
            &space,
            None,
        );
        (pstar, report)
    } else {
        let raw = pressure_to_poly(mesh, &solution.p);
        let report = estimate(
            &solution.u,
            EstimatorPressure::RawAblation(&raw),
            problem,
            mesh,
            &space,
            None,
        );
        (raw, report)
    };
    Ok(AdaptLevel {
        level,
        mesh: mesh.clone(),
        problem: problem.clone(),
        space,
        solution,
        pressure,
        report,
    })
}

/// The estimate-mark-refine loop. The visitor sees every solved level;
/// sigma^2 fields are carried through refinement (per-element values are
/// inherited, raster fields re-sample at the new barycentres).
pub fn adapt_loop(
    problem0: &BrinkmanProblem,
    mesh0: &Mesh,
    opts: &AdaptOptions,
    mut visitor: impl FnMut(&AdaptLevel),
) -> Result<Vec<ErrorReport>, AdaptError> {
    let mut problem = problem0.clone();
    let mut mesh = mesh0.clone();
    let mut reports = Vec::new();
    let mut level = 0usize;
    loop {
        let state = solve_level(&problem, &mesh, opts, level)?;
        reports.push(state.report.clone());
        let done = match opts.stop {
            StopRule::Levels(n) => level >= n,
            StopRule::DofBudget(b) => state.report.n_dofs >= b,
        };
        let values = elementize_indicators(&state.report, &mesh);
        visitor(&state);
        if done {
            return Ok(reports);
        }
        let marked = mark(&values, &opts.strategy, level);
        if marked.is_empty() {
            return Ok(reports);
        }
        let refined = refine(&mesh, &marked);
        problem.sigma = problem.sigma.refined(&refined);
        mesh = refined;
        level += 1;
    }
}
