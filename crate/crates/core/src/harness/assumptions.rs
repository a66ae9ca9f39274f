use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::AssumptionsConfig;
use super::rademacher::{estimate_rademacher, RademacherBall, RademacherEstimate};
use crate::error::{Error, Result};
use crate::mdp::{build_env, concentration_coeffs, EpisodicMdp, SamplingPlan};
use crate::rng::{derive_seed, stream_rng};

const SAMPLE_STREAM: u64 = 0xA5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherRow {
    pub step: usize,
    pub ball: String,
    pub n: usize,
    pub radius: f64,
    pub estimate: f64,
    pub std_err: f64,
    /// NaN for kernel balls.
    pub envelope: f64,
    pub bound: f64,
    /// `estimate <= bound + 3 std_err` (and the same for the envelope when present).
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionsReport {
    pub rademacher: Vec<RademacherRow>,
    /// `kappa_h` per step, when exact enumeration is possible.
    pub concentration: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    pub concentration_error: Option<String>,
}

fn row(step: usize, ball: &str, n: usize, radius: f64, e: &RademacherEstimate) -> RademacherRow {
    let mut within = e.estimate <= e.bound + 3.0 * e.std_err;
    if let (Some(env), Some(se)) = (e.envelope, e.envelope_std_err) {
        within &= env <= e.bound + 3.0 * se;
    }
    RademacherRow {
        step,
        ball: ball.to_string(),
        n,
        radius,
        estimate: e.estimate,
        std_err: e.std_err,
        envelope: e.envelope.unwrap_or(f64::NAN),
        bound: e.bound,
        within_bound: within,
    }
}

/// Rademacher estimates on samples from every `nu_h`, and the concentration coefficients.
pub fn run_assumptions_on(mdp: &dyn EpisodicMdp, plan: &SamplingPlan, cfg: &AssumptionsConfig) -> Result<AssumptionsReport> {
    plan.validate(mdp.support(), mdp.action_count(), mdp.horizon())?;
    let kernel = cfg.kernel.or(mdp.metadata().kernel);
    let mut rademacher = Vec::new();
    for h in 0..mdp.horizon() {
        let mut rng = stream_rng(cfg.seed, &[SAMPLE_STREAM, h as u64]);
        let step = plan.step(h)?;
        let (points, actions): (Vec<_>, Vec<_>) = (0..cfg.n)
            .map(|_| step.sample(&mut rng, mdp.support()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let seed = derive_seed(cfg.seed, &[h as u64]);
        if let Some(k) = kernel {
            let ball = RademacherBall::Kernel { kernel: k, radius: cfg.radius };
            let e = estimate_rademacher(ball, &points, &actions, mdp.action_count(), cfg.trials, seed)?;
            rademacher.push(row(h, &format!("kernel-{k}"), cfg.n, cfg.radius, &e));
        }
        let ball = RademacherBall::PathNorm { radius: cfg.radius };
        let e = estimate_rademacher(ball, &points, &actions, mdp.action_count(), cfg.trials, seed)?;
        rademacher.push(row(h, "path-norm", cfg.n, cfg.radius, &e));
    }
    let (concentration, kappa, concentration_error) = if mdp.as_finite().is_some() {
        match concentration_coeffs(mdp, plan) {
            Ok(c) => (Some(c.per_step), Some(c.kappa), None),
            Err(e) => (None, None, Some(e.to_string())),
        }
    } else {
        (None, None, Some(Error::NotFinite.to_string()))
    };
    Ok(AssumptionsReport {
        rademacher,
        concentration,
        kappa,
        concentration_error,
    })
}

pub fn run_assumptions(cfg: &AssumptionsConfig) -> Result<AssumptionsReport> {
    let mdp = build_env(&cfg.env.parse()?)?;
    run_assumptions_on(mdp.as_ref(), &mdp.default_plan(), cfg)
}

/// Writes `rademacher.csv`, `concentration.csv` and `assumptions.json` into `dir`.
pub fn write_assumptions(report: &AssumptionsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rad = dir.join("rademacher.csv");
    let mut w = csv::Writer::from_path(&rad)?;
    for r in &report.rademacher {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&rad, e))?;
    let conc = dir.join("concentration.csv");
    let mut w = csv::Writer::from_path(&conc)?;
    w.write_record(["step", "kappa_h"])?;
    for (h, k) in report.concentration.iter().flatten().enumerate() {
        w.write_record([h.to_string(), k.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&conc, e))?;
    let summary = dir.join("assumptions.json");
    fs::write(&summary, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&summary, e))?;
    Ok(vec![rad, conc, summary])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_env_report() {
        let cfg = AssumptionsConfig::from_toml("env = \"finite:s12a3h3:seed2\"\nn = 128\ntrials = 50").unwrap();
        let report = run_assumptions(&cfg).unwrap();
        assert_eq!(report.rademacher.len(), 6);
        assert!(report.rademacher.iter().all(|r| r.within_bound), "{:?}", report.rademacher);
        let k = report.concentration.unwrap();
        assert_eq!(k.len(), 3);
        assert_eq!(k[0], 1.0);
        let dir = tempfile::tempdir().unwrap();
        let paths = write_assumptions(&run_assumptions(&cfg).unwrap(), dir.path()).unwrap();
        assert!(paths.iter().all(|p| p.exists()));
    }

    #[test]
    fn sphere_env_has_no_concentration() {
        let cfg = AssumptionsConfig::from_toml("env = \"rkhs:d4a2h2j3:seed1\"\nn = 64\ntrials = 20").unwrap();
        let report = run_assumptions(&cfg).unwrap();
        assert!(report.concentration.is_none());
        assert!(report.concentration_error.is_some());
        assert!(report.rademacher.iter().all(|r| r.within_bound));
    }
}
