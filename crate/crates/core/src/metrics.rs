//! Equilibrium quality: partitioning measure, channel occupancy, social-optimum
//! oracles and the two-user FDMA optimality condition.

use crate::error::{Error, Result};
use crate::model::{ChannelSet, GameConfig, PowerProfile};
use crate::waterfill::waterfill;

/// Relative power above which a bin counts as occupied.
pub const OCCUPANCY_THRESHOLD: f64 = 1e-6;

/// Largest number of grid points the brute-force search will visit.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Default number of power quanta per user for the brute-force grid.
pub const DEFAULT_GRID_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionProfile {
    /// `J(k) = -p1(k) p2(k)` on powers normalized by the total, in `[-1, 0]`.
    pub j: Vec<f64>,
    /// Number of occupied bins per user.
    pub occupied_counts: Vec<usize>,
}

fn require_two(users: usize) -> Result<()> {
    if users != 2 {
        return Err(Error::UnsupportedArity { expected: 2, got: users });
    }
    Ok(())
}

/// Partitioning measure of a two-user profile. Powers at or below
/// `1e-6 * p_total` count as unoccupied and contribute nothing to `J`, so
/// `J(k) = 0` exactly on bins occupied by at most one user.
pub fn partition_measure(profile: &PowerProfile, p_total: f64) -> Result<PartitionProfile> {
    require_two(profile.users())?;
    if !(p_total > 0.0 && p_total.is_finite()) {
        return Err(Error::Domain(format!("total power {p_total} must be positive")));
    }
    let cut = OCCUPANCY_THRESHOLD * p_total;
    let norm = |v: f64| if v > cut { v / p_total } else { 0.0 };
    let j = (0..profile.freqs())
        .map(|k| -(norm(profile.get(0, k)) * norm(profile.get(1, k))))
        .map(|v| if v == 0.0 { 0.0 } else { v })
        .collect();
    let occupied_counts = (0..2)
        .map(|q| profile.user(q).iter().filter(|&&v| v > cut).count())
        .collect();
    Ok(PartitionProfile { j, occupied_counts })
}

/// Occupied bins per user, with user `q` thresholded at `1e-6 * P_q`.
pub fn occupancy(profile: &PowerProfile, cfg: &GameConfig) -> Vec<usize> {
    (0..profile.users())
        .map(|q| {
            let cut = OCCUPANCY_THRESHOLD * cfg.power(q);
            profile.user(q).iter().filter(|&&v| v > cut).count()
        })
        .collect()
}

/// Mean occupied bins per user.
pub fn mean_occupancy(profile: &PowerProfile, cfg: &GameConfig) -> f64 {
    let counts = occupancy(profile, cfg);
    counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FdmaCheck {
    pub per_freq: Vec<bool>,
    pub all: bool,
}

/// Two-user condition under which FDMA is socially optimal:
/// `(F21(k) - eps)(F12(k) - eps) > 1/4` on every bin. Each factor is floored at
/// zero, since a coefficient driven negative by the uncertainty means no
/// guaranteed interference.
pub fn fdma_condition_check(ch: &ChannelSet, eps: f64) -> Result<FdmaCheck> {
    require_two(ch.users())?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("uncertainty bound {eps} must be nonnegative")));
    }
    let per_freq: Vec<bool> = (0..ch.freqs())
        .map(|k| {
            let a = (ch.f(1, 0, k) - eps).max(0.0);
            let b = (ch.f(0, 1, k) - eps).max(0.0);
            a * b > 0.25
        })
        .collect();
    let all = per_freq.iter().all(|&b| b);
    Ok(FdmaCheck { per_freq, all })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialOptimum {
    pub sum_rate: f64,
    pub profile: PowerProfile,
    /// False when the search was heuristic and the value is only a lower bound.
    pub exact: bool,
}

/// All ways of splitting `steps` quanta over bins with per-bin caps, in
/// lexicographic order.
fn compositions(steps: usize, caps: &[usize]) -> Vec<Vec<usize>> {
    fn rec(rest: usize, caps: &[usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let k = cur.len();
        if k + 1 == caps.len() {
            if rest <= caps[k] {
                cur.push(rest);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let remaining_cap: usize = caps[k + 1..].iter().sum();
        let lo = rest.saturating_sub(remaining_cap);
        for c in lo..=rest.min(caps[k]) {
            cur.push(c);
            rec(rest - c, caps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, caps, &mut Vec::with_capacity(caps.len()), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn nominal_sum_rate(ch: &ChannelSet, p: &[f64]) -> f64 {
    let (users, n) = (ch.users(), ch.freqs());
    let mut s = 0.0;
    for q in 0..users {
        for k in 0..n {
            let own = p[q * n + k];
            if own <= 0.0 {
                continue;
            }
            let mut denom = ch.sigma2(q, k);
            for r in (0..users).filter(|&r| r != q) {
                denom += ch.f(r, q, k) * p[r * n + k];
            }
            s += (own / denom).ln_1p();
        }
    }
    s
}

/// Largest nominal sum-rate over the grid where user `q` spends its budget in
/// quanta of `P_q / steps` (respecting masks). Ties go to the
/// lexicographically smallest profile.
pub fn social_optimum_bruteforce(ch: &ChannelSet, cfg: &GameConfig, steps: usize) -> Result<SocialOptimum> {
    cfg.check_channels(ch)?;
    if steps == 0 {
        return Err(Error::InvalidValue("grid needs at least one step per user".into()));
    }
    let (users, n) = (ch.users(), ch.freqs());
    let estimate = binomial(steps + n - 1, n - 1).powi(users as i32);
    if estimate > BRUTE_FORCE_LIMIT {
        return Err(Error::GridTooLarge {
            points: estimate,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut grids = Vec::with_capacity(users);
    for q in 0..users {
        let quantum = cfg.power(q) / steps as f64;
        let caps: Vec<usize> = cfg
            .pmax(q)
            .iter()
            .map(|m| ((m / quantum) * (1.0 + 1e-12)).floor().min(steps as f64) as usize)
            .collect();
        let user_grid: Vec<Vec<f64>> = compositions(steps, &caps)
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as f64 * quantum).collect())
            .collect();
        if user_grid.is_empty() {
            return Err(Error::Infeasible {
                user: q,
                reason: format!("no grid point with {steps} steps fits the mask"),
            });
        }
        grids.push(user_grid);
    }

    let mut idx = vec![0usize; users];
    let mut p = vec![0.0; users * n];
    let mut best = f64::NEG_INFINITY;
    let mut best_p = p.clone();
    loop {
        for q in 0..users {
            p[q * n..(q + 1) * n].copy_from_slice(&grids[q][idx[q]]);
        }
        let s = nominal_sum_rate(ch, &p);
        if s > best {
            best = s;
            best_p.copy_from_slice(&p);
        }
        // odometer with the last user fastest, so visits are in lexicographic order
        let mut q = users;
        loop {
            if q == 0 {
                return Ok(SocialOptimum {
                    sum_rate: best,
                    profile: PowerProfile::from_flat(users, n, best_p)?,
                    exact: true,
                });
            }
            q -= 1;
            idx[q] += 1;
            if idx[q] < grids[q].len() {
                break;
            }
            idx[q] = 0;
        }
    }
}

/// Interference-free waterfilling of one user over the bins it owns.
fn fdma_user(ch: &ChannelSet, cfg: &GameConfig, q: usize, owned: &[bool]) -> Result<(Vec<f64>, f64)> {
    let n = ch.freqs();
    let mask: Vec<f64> = (0..n)
        .map(|k| if owned[k] { cfg.pmax(q)[k] } else { 0.0 })
        .collect();
    let budget = cfg.power(q).min(mask.iter().sum());
    if budget <= 0.0 {
        return Ok((vec![0.0; n], 0.0));
    }
    let (p, _) = waterfill(ch.sigma2_row(q), budget, &mask)?;
    let rate = p
        .iter()
        .zip(ch.sigma2_row(q))
        .map(|(v, s)| (v / s).ln_1p())
        .sum();
    Ok((p, rate))
}

fn fdma_value(ch: &ChannelSet, cfg: &GameConfig, to_first: &[bool]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let to_second: Vec<bool> = to_first.iter().map(|b| !b).collect();
    let (p1, r1) = fdma_user(ch, cfg, 0, to_first)?;
    let (p2, r2) = fdma_user(ch, cfg, 1, &to_second)?;
    Ok((r1 + r2, p1, p2))
}

const FDMA_EXACT_MAX_N: usize = 20;

/// Best two-user FDMA allocation: bins are split between the users and each
/// waterfills over its own bins with budget `min(P_q, mask total)`. Exhaustive
/// for `N <= 20`; above that a single-bin-flip local search returns a lower
/// bound with `exact == false`.
pub fn social_optimum_fdma(ch: &ChannelSet, cfg: &GameConfig) -> Result<SocialOptimum> {
    cfg.check_channels(ch)?;
    require_two(ch.users())?;
    let n = ch.freqs();
    let finish = |assign: &[bool], exact: bool| -> Result<SocialOptimum> {
        let (s, p1, p2) = fdma_value(ch, cfg, assign)?;
        Ok(SocialOptimum {
            sum_rate: s,
            profile: PowerProfile::new(vec![p1, p2])?,
            exact,
        })
    };

    if n <= FDMA_EXACT_MAX_N {
        let mut best = f64::NEG_INFINITY;
        let mut best_mask = 0u32;
        for mask in 0..(1u32 << n) {
            // bit k set: bin k belongs to the first user
            let assign: Vec<bool> = (0..n).map(|k| mask >> k & 1 == 1).collect();
            let (s, _, _) = fdma_value(ch, cfg, &assign)?;
            if s > best {
                best = s;
                best_mask = mask;
            }
        }
        let assign: Vec<bool> = (0..n).map(|k| best_mask >> k & 1 == 1).collect();
        return finish(&assign, true);
    }

    let mut assign: Vec<bool> = (0..n).map(|k| ch.sigma2(0, k) <= ch.sigma2(1, k)).collect();
    let mut best = fdma_value(ch, cfg, &assign)?.0;
    loop {
        let mut improved = false;
        for k in 0..n {
            assign[k] = !assign[k];
            let s = fdma_value(ch, cfg, &assign)?.0;
            if s > best {
                best = s;
                improved = true;
            } else {
                assign[k] = !assign[k];
            }
        }
        if !improved {
            break;
        }
    }
    finish(&assign, false)
}
