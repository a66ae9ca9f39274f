use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::gap::evaluate_gap;
use super::residual::measure_one_step_residual;
use crate::error::{Error, Result};
use crate::fqi::run_fqi;
use crate::mdp::{build_env, concentration_coeffs, EpisodicMdp, SamplingPlan};
use crate::rng::derive_seed;
use crate::stats::{linear_fit, median, quantile};

const EVAL_STREAM: u64 = 0xE0;

/// One `(n, seed)` cell as persisted in the rows file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub seed: u64,
    pub gap: f64,
    /// Largest per-step Bellman residual of the fitted model.
    pub slope_step_residual_max: f64,
    pub lambda: f64,
    pub runtime_s: f64,
}

/// Per-cell quantities that do not fit the flat row format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDetail {
    pub n: usize,
    pub seed: u64,
    pub cell_seed: u64,
    pub residuals: Vec<f64>,
    /// Fitted `Lambda` per step.
    pub regularizers: Vec<f64>,
    pub policy_return: f64,
    pub gap_std_err: f64,
    /// `2 kappa H^2 max_h residual`, when the concentration coefficient is known.
    pub propagation_bound: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub median_gap: f64,
    pub q25_gap: f64,
    pub q75_gap: f64,
    /// Cells with a finite gap.
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope; absent with only two points.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// Sorted by `(n, seed)`.
    pub rows: Vec<RateRow>,
    pub details: Vec<CellDetail>,
    pub aggregate: Vec<AggregateRow>,
    /// Fit of log median gap against log n; absent with fewer than two usable sizes.
    pub slope: Option<SlopeFit>,
    pub kappa: Option<f64>,
}

/// OLS fit of `log value` against `log n`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("a slope needs at least two points"));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for (i, &(n, v)) in points.iter().enumerate() {
        if !(v > 0.0) || !(n > 0.0) {
            return Err(Error::NonPositive { index: i, value: v.min(n) });
        }
        xs.push(n.ln());
        ys.push(v.ln());
    }
    linear_fit(&xs, &ys)
}

fn slope_with_interval(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let (slope, intercept) = fit_loglog_slope(points)?;
    let k = points.len();
    let half_width = if k > 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let mx = xs.iter().sum::<f64>() / k as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let ssr: f64 = points
            .iter()
            .map(|&(n, v)| (v.ln() - slope * n.ln() - intercept).powi(2))
            .sum();
        Some(2.0 * (ssr / (k - 2) as f64 / sxx).sqrt())
    } else {
        None
    };
    Ok(SlopeFit {
        slope,
        intercept,
        half_width,
    })
}

/// Median and quartiles of the finite gaps at each `n` of `grid`.
pub fn aggregate_rows(rows: &[RateRow], grid: &[usize]) -> Vec<AggregateRow> {
    grid.iter()
        .map(|&n| {
            let gaps: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.gap.is_finite())
                .map(|r| r.gap)
                .collect();
            if gaps.is_empty() {
                return AggregateRow {
                    n,
                    median_gap: f64::NAN,
                    q25_gap: f64::NAN,
                    q75_gap: f64::NAN,
                    cells: 0,
                };
            }
            AggregateRow {
                n,
                median_gap: median(&gaps),
                q25_gap: quantile(&gaps, 0.25),
                q75_gap: quantile(&gaps, 0.75),
                cells: gaps.len(),
            }
        })
        .collect()
}

impl RateResult {
    /// Sorts the rows, aggregates them over `grid` and fits the rate.
    pub fn from_rows(mut rows: Vec<RateRow>, mut details: Vec<CellDetail>, grid: &[usize], kappa: Option<f64>) -> Self {
        rows.sort_by_key(|r| (r.n, r.seed));
        details.sort_by_key(|d| (d.n, d.seed));
        let aggregate = aggregate_rows(&rows, grid);
        let points: Vec<(f64, f64)> = aggregate
            .iter()
            .filter(|a| a.median_gap.is_finite())
            .map(|a| (a.n as f64, a.median_gap))
            .collect();
        let slope = if points.len() >= 2 {
            match slope_with_interval(&points) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("no rate fit: {e}");
                    None
                }
            }
        } else {
            None
        };
        RateResult {
            rows,
            details,
            aggregate,
            slope,
            kappa,
        }
    }
}

/// Seed of cell `index` (position in the `n`-major enumeration of the grid).
pub fn cell_seed(master_seed: u64, index: usize, seed: u64) -> u64 {
    derive_seed(master_seed ^ index as u64, &[seed])
}

struct Cell {
    index: usize,
    n: usize,
    seed: u64,
}

fn run_cell(
    mdp: &dyn EpisodicMdp,
    plan: &SamplingPlan,
    cfg: &ExperimentConfig,
    kappa: Option<f64>,
    cell: &Cell,
) -> (RateRow, CellDetail) {
    let started = Instant::now();
    let cseed = cell_seed(cfg.master_seed, cell.index, cell.seed);
    let lambda = cfg.lambda.resolve(mdp, &cfg.backend, cell.n);
    let mut detail = CellDetail {
        n: cell.n,
        seed: cell.seed,
        cell_seed: cseed,
        residuals: Vec::new(),
        regularizers: Vec::new(),
        policy_return: f64::NAN,
        gap_std_err: f64::NAN,
        propagation_bound: None,
        error: None,
    };
    let mut gap = f64::NAN;
    let mut worst = f64::NAN;
    let outcome = (|| -> Result<()> {
        let run = run_fqi(mdp, plan, &cfg.backend, lambda, cell.n, cseed)?;
        detail.regularizers = run.fitted.steps.iter().map(|s| s.regularizer).collect();
        let init = plan.step(0)?.state_marginal();
        let g = evaluate_gap(mdp, &run.policy, &init, cfg.eval_episodes, derive_seed(cseed, &[EVAL_STREAM]))?;
        gap = g.gap;
        detail.policy_return = g.policy_return;
        detail.gap_std_err = g.std_err;
        if mdp.as_finite().is_some() {
            detail.residuals = measure_one_step_residual(mdp, run.fitted.as_ref(), plan)?;
            worst = detail.residuals.iter().copied().fold(0.0, f64::max);
            let h = mdp.horizon() as f64;
            detail.propagation_bound = kappa.map(|k| 2.0 * k * h * h * worst);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("cell n={} seed={} failed: {e}", cell.n, cell.seed);
        detail.error = Some(e.to_string());
        gap = f64::NAN;
    }
    let row = RateRow {
        n: cell.n,
        seed: cell.seed,
        gap,
        slope_step_residual_max: worst,
        lambda,
        runtime_s: started.elapsed().as_secs_f64(),
    };
    (row, detail)
}

/// Runs every cell of the sweep in parallel; failed cells are kept with a NaN gap.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<RateResult> {
    cfg.validate()?;
    let mdp = build_env(&cfg.env_spec()?)?;
    run_rate_experiment_on(mdp.as_ref(), &mdp.default_plan(), cfg)
}

/// [`run_rate_experiment`] on an already built environment and plan.
pub fn run_rate_experiment_on(mdp: &dyn EpisodicMdp, plan: &SamplingPlan, cfg: &ExperimentConfig) -> Result<RateResult> {
    cfg.validate()?;
    plan.validate(mdp.support(), mdp.action_count(), mdp.horizon())?;
    let kappa = match mdp.as_finite() {
        Some(m) => match concentration_coeffs(m, plan) {
            Ok(c) => Some(c.kappa),
            Err(e) => {
                log::warn!("concentration coefficient unavailable: {e}");
                None
            }
        },
        None => None,
    };
    let cells: Vec<Cell> = cfg
        .grid
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&seed| (n, seed)))
        .enumerate()
        .map(|(index, (n, seed))| Cell { index, n, seed })
        .collect();
    let (rows, details): (Vec<_>, Vec<_>) = cells
        .par_iter()
        .map(|c| run_cell(mdp, plan, cfg, kappa, c))
        .unzip();
    Ok(RateResult::from_rows(rows, details, &cfg.grid, kappa))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, seed: u64, gap: f64) -> RateRow {
        RateRow {
            n,
            seed,
            gap,
            slope_step_residual_max: 0.0,
            lambda: 0.0,
            runtime_s: 0.0,
        }
    }

    #[test]
    fn loglog_slopes() {
        let pts: Vec<(f64, f64)> = [1.0, 10.0, 100.0].iter().map(|&n| (n, 3.0 / n)).collect();
        assert!((fit_loglog_slope(&pts).unwrap().0 + 1.0).abs() < 1e-14);
        let (s, _) = fit_loglog_slope(&[(1.0, 1.0), (4.0, 0.5)]).unwrap();
        assert!((s - 0.5f64.ln() / 4f64.ln()).abs() < 1e-15);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(n, v)| (n, 10.0 * v)).collect();
        let (a, b) = (fit_loglog_slope(&pts).unwrap(), fit_loglog_slope(&scaled).unwrap());
        assert!((a.0 - b.0).abs() < 1e-14);
        assert!((b.1 - a.1 - 10f64.ln()).abs() < 1e-12);
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn injected_power_law() {
        let grid = [64, 256, 1024, 4096];
        let rows: Vec<RateRow> = grid
            .iter()
            .flat_map(|&n| (0..5).map(move |s| row(n, s, (n as f64).powf(-0.5))))
            .collect();
        let r = RateResult::from_rows(rows, Vec::new(), &grid, None);
        let fit = r.slope.unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.half_width.unwrap() < 1e-6);
    }

    #[test]
    fn single_size_has_no_slope() {
        let rows = vec![row(8, 1, 0.3), row(8, 0, 0.1)];
        let r = RateResult::from_rows(rows, Vec::new(), &[8], None);
        assert!(r.slope.is_none());
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].seed, 0);
        assert_eq!(r.aggregate[0].median_gap, 0.2);
    }

    #[test]
    fn failed_cells_do_not_enter_the_median() {
        let rows = vec![row(8, 0, 0.1), row(8, 1, f64::NAN), row(8, 2, 0.3)];
        let agg = aggregate_rows(&rows, &[8, 16]);
        assert_eq!(agg[0].cells, 2);
        assert!((agg[0].median_gap - 0.2).abs() < 1e-15);
        assert!(agg[1].median_gap.is_nan());
    }
}
