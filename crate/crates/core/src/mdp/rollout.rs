use rayon::prelude::*;

use super::{EpisodicMdp, Policy, QueryKey, StateDistribution};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::stats::mean_and_std_err;

const ROLLOUT_STREAM: u64 = 0x70;

/// Monte Carlo estimate of `J_mu(pi)`: mean episode return and its standard error.
pub fn rollout_return(
    mdp: &dyn EpisodicMdp,
    policy: &Policy,
    init: &StateDistribution,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::invalid("episodes must be at least 1"));
    }
    init.validate(mdp.support())?;
    let sim_seed = derive_seed(seed, &[ROLLOUT_STREAM]);
    let returns: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream_rng(seed, &[ROLLOUT_STREAM, e]);
            let mut x = init.sample(&mut rng, mdp.support())?;
            let mut total = 0.0;
            for h in 0..mdp.horizon() {
                let a = policy.sample_action(h, &x, &mut rng)?;
                let key = QueryKey {
                    seed: sim_seed,
                    index: e,
                };
                let t = mdp.query(&x, a, h, key)?;
                total += t.reward;
                x = t.next_state;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    Ok(mean_and_std_err(&returns))
}
