//! Robust single-user best response.
//!
//! Against a fixed opponent profile, user `q` waterfills over the worst-case
//! noise plus interference `Phi_q(k)`:
//!
//! ```text
//! p_q(k) = clamp(mu_q - Phi_q(k), 0, pmax_q(k)),   sum_k p_q(k) = P_q
//! ```
//!
//! which is also the Euclidean projection of `-Phi_q` onto the admissible set
//! `{0 <= p <= pmax, sum p = P_q}`. The water level is found exactly by
//! sweeping the `2N` breakpoints of the piecewise-linear allocated-power curve.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ChannelSet, GameConfig, PowerProfile};
use crate::rates::interference_with_eps;

/// Absolute tolerance used to classify bins as active or clipped.
pub const CLASSIFY_TOL: f64 = 1e-12;

/// Best response of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub powers: Vec<f64>,
    pub mu: f64,
    /// Bins with `0 < p(k) < pmax(k)`.
    pub active_set: Vec<usize>,
    /// Bins at the mask.
    pub clipped_set: Vec<usize>,
}

/// Water level `mu` with `sum_k clamp(mu - phi[k], 0, pmax[k]) = budget`.
///
/// The smallest such level is returned when the allocated-power curve is flat
/// at `budget`.
pub fn find_water_level(phi: &[f64], budget: f64, pmax: &[f64]) -> Result<f64> {
    if phi.len() != pmax.len() || phi.is_empty() {
        return Err(Error::Dimension(format!(
            "{} interference levels for {} mask entries",
            phi.len(),
            pmax.len()
        )));
    }
    if let Some(v) = phi.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite interference level {v}")));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Domain(format!("budget {budget} must be positive")));
    }
    let cap: f64 = pmax.iter().sum();
    if cap < budget {
        return Err(Error::Infeasible {
            user: usize::MAX,
            reason: format!("mask total {cap} below budget {budget}"),
        });
    }

    // (position, slope change)
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * phi.len());
    for (&f, &m) in phi.iter().zip(pmax) {
        if m > 0.0 {
            events.push((f, 1));
            events.push((f + m, -1));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut filled = 0.0;
    let mut slope = 0i32;
    let mut level = events[0].0;
    let mut i = 0;
    while i < events.len() {
        let x = events[i].0;
        if slope > 0 {
            let next = filled + f64::from(slope) * (x - level);
            if next >= budget {
                return Ok(level + (budget - filled) / f64::from(slope));
            }
            filled = next;
        }
        level = x;
        while i < events.len() && events[i].0 == x {
            slope += events[i].1;
            i += 1;
        }
    }
    // only reachable when the masks sum to the budget up to rounding
    Ok(level)
}

/// Allocation `clamp(mu - phi, 0, pmax)` at the water level meeting `budget`.
pub fn waterfill(phi: &[f64], budget: f64, pmax: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mu = find_water_level(phi, budget, pmax)?;
    let powers = phi
        .iter()
        .zip(pmax)
        .map(|(&f, &m)| (mu - f).clamp(0.0, m))
        .collect();
    Ok((powers, mu))
}

pub(crate) fn waterfill_into(phi: &[f64], budget: f64, pmax: &[f64], out: &mut [f64]) -> Result<f64> {
    let mu = find_water_level(phi, budget, pmax)?;
    for ((o, &f), &m) in out.iter_mut().zip(phi).zip(pmax) {
        *o = (mu - f).clamp(0.0, m);
    }
    Ok(mu)
}

/// Robust best response of user `q` to the other users' powers in `profile`.
pub fn robust_best_response(
    ch: &ChannelSet,
    cfg: &GameConfig,
    profile: &PowerProfile,
    q: usize,
) -> Result<BestResponse> {
    let phi = crate::rates::worst_case_interference(ch, cfg, profile, q)?;
    let pmax = cfg.pmax(q);
    let (powers, mu) = waterfill(&phi, cfg.power(q), pmax).map_err(|e| match e {
        Error::Infeasible { reason, .. } => Error::Infeasible { user: q, reason },
        other => other,
    })?;
    let mut active_set = Vec::new();
    let mut clipped_set = Vec::new();
    for (k, (&p, &m)) in powers.iter().zip(pmax).enumerate() {
        if m > 0.0 && p >= m - CLASSIFY_TOL {
            clipped_set.push(k);
        } else if p > CLASSIFY_TOL {
            active_set.push(k);
        }
    }
    Ok(BestResponse {
        powers,
        mu,
        active_set,
        clipped_set,
    })
}

/// Scratch-buffer variant used by the solver: writes the response of `q`
/// against `view` into `out` and returns the water level.
pub(crate) fn best_response_into(
    ch: &ChannelSet,
    cfg: &GameConfig,
    view: &PowerProfile,
    q: usize,
    phi: &mut [f64],
    out: &mut [f64],
) -> Result<f64> {
    interference_with_eps(ch, view, q, cfg.eps_row(q), phi);
    waterfill_into(phi, cfg.power(q), cfg.pmax(q), out)
}

/// Variational-inequality residual of `candidate` as the projection of
/// `-Phi_q` onto the admissible set of user `q`:
/// `max_z (-Phi_q - candidate) . (z - candidate)` over the supplied feasible
/// test points. Nonpositive (within rounding) iff no test point certifies that
/// `candidate` is not the projection.
pub fn projection_residual(
    ch: &ChannelSet,
    cfg: &GameConfig,
    profile: &PowerProfile,
    q: usize,
    candidate: &[f64],
    test_points: &[Vec<f64>],
) -> Result<f64> {
    let phi = crate::rates::worst_case_interference(ch, cfg, profile, q)?;
    if candidate.len() != phi.len() {
        return Err(Error::Dimension(format!(
            "candidate has {} bins, expected {}",
            candidate.len(),
            phi.len()
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    for z in test_points {
        if z.len() != phi.len() {
            return Err(Error::Dimension("test point length mismatch".into()));
        }
        let ip: f64 = phi
            .iter()
            .zip(candidate)
            .zip(z)
            .map(|((&f, &c), &zk)| (-f - c) * (zk - c))
            .sum();
        worst = worst.max(ip);
    }
    Ok(if test_points.is_empty() { 0.0 } else { worst })
}

/// A random point of `{0 <= p <= pmax, sum p = budget}`: the projection of a
/// random vector onto that set.
pub fn random_feasible_point<R: Rng + ?Sized>(rng: &mut R, budget: f64, pmax: &[f64]) -> Result<Vec<f64>> {
    let spread = rng.gen_range(0.05..4.0) * budget;
    let target: Vec<f64> = pmax.iter().map(|_| -rng.gen::<f64>() * spread).collect();
    Ok(waterfill(&target, budget, pmax)?.0)
}

/// A random feasible profile for every user of `cfg`.
pub fn random_feasible_profile<R: Rng + ?Sized>(rng: &mut R, cfg: &GameConfig) -> Result<PowerProfile> {
    let mut p = Vec::with_capacity(cfg.users() * cfg.freqs());
    for q in 0..cfg.users() {
        p.extend(random_feasible_point(rng, cfg.power(q), cfg.pmax(q))?);
    }
    PowerProfile::from_flat(cfg.users(), cfg.freqs(), p)
}
