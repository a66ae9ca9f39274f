use crate::error::{Error, Result};
use crate::mdp::{ActionValue, EpisodicMdp, FiniteMdp, QTable, SamplingPlan};

fn tabulate(m: &FiniteMdp, q: &dyn ActionValue) -> Result<QTable> {
    if q.action_count() != m.action_count() {
        return Err(Error::DimensionMismatch {
            expected: m.action_count(),
            got: q.action_count(),
        });
    }
    let q = (0..m.horizon())
        .map(|h| m.points().iter().map(|x| q.values(h, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(QTable { q })
}

/// `|| T_h Q_{h+1} - Q_h ||_{2, nu_h}` for every step of a tabulated action-value function
/// (with `Q_H = 0`).
pub fn table_residuals(mdp: &dyn EpisodicMdp, q: &QTable, plan: &SamplingPlan) -> Result<Vec<f64>> {
    let m = mdp.as_finite().ok_or(Error::NotFinite)?;
    let horizon = m.horizon();
    plan.validate(m.support(), m.action_count(), horizon)?;
    if q.horizon() != horizon {
        return Err(Error::DimensionMismatch {
            expected: horizon,
            got: q.horizon(),
        });
    }
    (0..horizon)
        .map(|h| {
            let next = if h + 1 < horizon {
                q.state_values(h + 1)
            } else {
                vec![0.0; m.state_count()]
            };
            let target = m.backup(h, &next);
            let nu = plan.steps[h].joint_table().ok_or(Error::NotFinite)?;
            let mut sq = 0.0;
            for s in 0..m.state_count() {
                for a in 0..m.action_count() {
                    let e = target[s][a] - q.q[h][s][a];
                    sq += nu[s][a] * e * e;
                }
            }
            Ok(sq.sqrt())
        })
        .collect()
}

/// Exact per-step Bellman residuals of a fitted model in `L2(nu_h)`.
pub fn measure_one_step_residual(
    mdp: &dyn EpisodicMdp,
    fitted: &dyn ActionValue,
    plan: &SamplingPlan,
) -> Result<Vec<f64>> {
    let m = mdp.as_finite().ok_or(Error::NotFinite)?;
    table_residuals(m, &tabulate(m, fitted)?, plan)
}
