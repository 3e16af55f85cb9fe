//! Worst-case interference, information rates (in nats) and price of anarchy.

use crate::error::{Error, Result};
use crate::model::{ChannelSet, GameConfig, PowerProfile};

fn check_profile(ch: &ChannelSet, profile: &PowerProfile, q: usize) -> Result<()> {
    if profile.users() != ch.users() || profile.freqs() != ch.freqs() {
        return Err(Error::Dimension(format!(
            "profile is {}x{}, channels are {}x{}",
            profile.users(),
            profile.freqs(),
            ch.users(),
            ch.freqs()
        )));
    }
    if q >= ch.users() {
        return Err(Error::Dimension(format!(
            "user index {q} out of range for Q={}",
            ch.users()
        )));
    }
    Ok(())
}

/// Noise plus interference seen by user `q` on each bin, inflated by
/// `eps[k]` times the Euclidean norm of the other users' powers on that bin.
pub(crate) fn interference_with_eps(
    ch: &ChannelSet,
    profile: &PowerProfile,
    q: usize,
    eps: &[f64],
    out: &mut [f64],
) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mut nominal = ch.sigma2(q, k);
        let mut sq = 0.0;
        for r in 0..ch.users() {
            if r == q {
                continue;
            }
            let p = profile.get(r, k);
            nominal += ch.f(r, q, k) * p;
            sq += p * p;
        }
        *slot = if eps[k] > 0.0 {
            nominal + eps[k] * sq.sqrt()
        } else {
            nominal
        };
    }
}

/// Worst-case noise plus interference `Phi_q(k)` over the ellipsoidal
/// uncertainty set of user `q`.
pub fn worst_case_interference(
    ch: &ChannelSet,
    cfg: &GameConfig,
    profile: &PowerProfile,
    q: usize,
) -> Result<Vec<f64>> {
    cfg.check_channels(ch)?;
    check_profile(ch, profile, q)?;
    let mut phi = vec![0.0; ch.freqs()];
    interference_with_eps(ch, profile, q, cfg.eps_row(q), &mut phi);
    Ok(phi)
}

/// Rate of user `q`. Without `eps_override` the nominal rate; with it, the
/// worst-case rate under that uncertainty bound.
pub fn user_rate(
    ch: &ChannelSet,
    profile: &PowerProfile,
    q: usize,
    eps_override: Option<f64>,
) -> Result<f64> {
    check_profile(ch, profile, q)?;
    let eps = eps_override.unwrap_or(0.0);
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::Domain(format!("uncertainty bound {eps} must be nonnegative")));
    }
    let mut denom = vec![0.0; ch.freqs()];
    interference_with_eps(ch, profile, q, &vec![eps; ch.freqs()], &mut denom);
    Ok(profile
        .user(q)
        .iter()
        .zip(&denom)
        .map(|(&p, &d)| (p / d).ln_1p())
        .sum())
}

/// Nominal sum of all users' rates.
pub fn sum_rate(ch: &ChannelSet, profile: &PowerProfile) -> Result<f64> {
    (0..ch.users())
        .map(|q| user_rate(ch, profile, q, None))
        .sum()
}

/// Ratio of the socially optimal sum-rate to the equilibrium sum-rate.
pub fn price_of_anarchy(s_optimal: f64, s_equilibrium: f64) -> Result<f64> {
    if !(s_optimal > 0.0 && s_optimal.is_finite()) || !(s_equilibrium > 0.0 && s_equilibrium.is_finite()) {
        return Err(Error::Domain(format!(
            "sum-rates must be positive, got optimum {s_optimal} and equilibrium {s_equilibrium}"
        )));
    }
    Ok(s_optimal / s_equilibrium)
}
