//! Existence/uniqueness conditions of the robust equilibrium.
//!
//! Both condition matrices use the orientation "entry `(q, r)` is the
//! influence of user `r` on user `q`":
//!
//! * `E[q][r] = eps_q` for `r != q` (the largest bound over bins when bounds
//!   vary with frequency),
//! * `Smax[q][r] = max_{k in D_q ∩ D_r} F_rq(k)`.
//!
//! Uniqueness holds when `rho(Smax) < 1 - rho(E)`; under that condition the
//! best-response map is a block contraction with modulus
//! `||Smax + E||_inf^w = max_q (1/w_q) sum_r M_qr w_r`.

use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ChannelSet, GameConfig, PowerProfile};
use crate::waterfill::{best_response_into, random_feasible_profile, waterfill};

const POWER_ITER_CAP: usize = 100_000;
const BRACKET_TOL: f64 = 1e-14;

/// Q×Q matrix with rows indexed by the affected user.
pub type Matrix = Vec<Vec<f64>>;

pub fn build_e(cfg: &GameConfig) -> Matrix {
    let q = cfg.users();
    (0..q)
        .map(|i| (0..q).map(|j| if i == j { 0.0 } else { cfg.eps(i) }).collect())
        .collect()
}

/// `domains[q]` lists the bins (zero-based, any order) that user `q` may use.
/// An empty intersection yields a zero entry.
pub fn build_smax(ch: &ChannelSet, domains: &[Vec<usize>]) -> Result<Matrix> {
    let users = ch.users();
    if domains.len() != users {
        return Err(Error::Dimension(format!(
            "{} frequency sets for {users} users",
            domains.len()
        )));
    }
    let mut member = vec![vec![false; ch.freqs()]; users];
    for (q, d) in domains.iter().enumerate() {
        for &k in d {
            if k >= ch.freqs() {
                return Err(Error::Dimension(format!(
                    "bin {k} out of range for N={}",
                    ch.freqs()
                )));
            }
            member[q][k] = true;
        }
    }
    let mut s = vec![vec![0.0; users]; users];
    for q in 0..users {
        for r in 0..users {
            if r == q {
                continue;
            }
            s[q][r] = (0..ch.freqs())
                .filter(|&k| member[q][k] && member[r][k])
                .map(|k| ch.f(r, q, k))
                .fold(0.0, f64::max);
        }
    }
    Ok(s)
}

/// Every bin for every user: the loosest choice of frequency sets.
pub fn full_domains(users: usize, freqs: usize) -> Vec<Vec<usize>> {
    vec![(0..freqs).collect(); users]
}

/// Bins that user `q` leaves empty in every best response.
///
/// A bin is reported only if it stays empty in the most favourable situation
/// for it: its own interference at the noise floor while every other bin
/// carries the largest interference any opponent strategy can produce. Best
/// responses are monotone in the interference profile, so the returned set is
/// always a subset of the true never-used set.
pub fn estimate_never_used_set(ch: &ChannelSet, cfg: &GameConfig, q: usize) -> Result<Vec<usize>> {
    cfg.check_channels(ch)?;
    if q >= ch.users() {
        return Err(Error::Dimension(format!("user index {q} out of range")));
    }
    let n = ch.freqs();
    let worst: Vec<f64> = (0..n)
        .map(|k| {
            let mut lin = ch.sigma2(q, k);
            let mut sq = 0.0;
            for r in (0..ch.users()).filter(|&r| r != q) {
                let p = cfg.pmax(r)[k].min(cfg.power(r));
                lin += ch.f(r, q, k) * p;
                sq += p * p;
            }
            lin + cfg.eps_at(q, k) * sq.sqrt()
        })
        .collect();
    let mut phi = worst.clone();
    let mut never = Vec::new();
    for k in 0..n {
        phi[k] = ch.sigma2(q, k);
        let (p, _) = waterfill(&phi, cfg.power(q), cfg.pmax(q))?;
        if p[k] <= 0.0 {
            never.push(k);
        }
        phi[k] = worst[k];
    }
    Ok(never)
}

/// Complement of [`estimate_never_used_set`] for every user.
pub fn estimated_domains(ch: &ChannelSet, cfg: &GameConfig) -> Result<Vec<Vec<usize>>> {
    (0..ch.users())
        .map(|q| {
            let never = estimate_never_used_set(ch, cfg, q)?;
            Ok((0..ch.freqs()).filter(|k| !never.contains(k)).collect())
        })
        .collect()
}

fn check_square_nonnegative(m: &Matrix) -> Result<usize> {
    let q = m.len();
    for row in m {
        if row.len() != q {
            return Err(Error::Dimension("matrix is not square".into()));
        }
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("matrix entry {v} is not a nonnegative real")));
        }
    }
    Ok(q)
}

struct Perron {
    rho: f64,
    vector: Vec<f64>,
}

/// Power iteration on `M/s + I` (s = max row sum), which has the same Perron
/// vector as `M` and a strictly dominant eigenvalue. Stops once the
/// Collatz–Wielandt bracket closes; `None` if it does not close tightly
/// enough to give `rho` to 1e-11 relative.
fn power_iteration(m: &Matrix) -> Option<Perron> {
    let q = m.len();
    let scale = m.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let mut x = vec![1.0; q];
    let mut y = vec![0.0; q];
    for _ in 0..POWER_ITER_CAP {
        for i in 0..q {
            y[i] = x[i] + m[i].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / scale;
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..q {
            let ratio = y[i] / x[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let top = y.iter().cloned().fold(0.0, f64::max);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / top;
        }
        if hi - lo <= BRACKET_TOL * hi {
            let rho = (0.5 * (lo + hi) - 1.0).max(0.0) * scale;
            if (hi - lo) * scale > 1e-11 * rho {
                return None;
            }
            return Some(Perron { rho, vector: x });
        }
        if x.iter().any(|v| *v < f64::MIN_POSITIVE) {
            return None;
        }
    }
    None
}

fn eigen_fallback(m: &Matrix) -> f64 {
    let q = m.len();
    let dm = DMatrix::from_fn(q, q, |i, j| m[i][j]);
    dm.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Spectral radius of a nonnegative square matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    let q = check_square_nonnegative(m)?;
    if q == 0 || m.iter().flatten().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(match power_iteration(m) {
        Some(p) => p.rho,
        None => eigen_fallback(m),
    })
}

/// Positive right Perron vector of `m`, scaled to unit maximum. Fails for
/// reducible matrices whose Perron vector has zero components.
pub fn perron_weights(m: &Matrix) -> Result<Vec<f64>> {
    let q = check_square_nonnegative(m)?;
    if q == 0 {
        return Ok(Vec::new());
    }
    if m.iter().flatten().all(|v| *v == 0.0) {
        return Ok(vec![1.0; q]);
    }
    match power_iteration(m) {
        Some(p) if p.vector.iter().all(|v| *v > 1e-12) => Ok(p.vector),
        _ => Err(Error::Degenerate("matrix has no positive Perron vector".into())),
    }
}

/// Weighted maximum-row-sum norm of `Smax + E`.
pub fn contraction_modulus(smax: &Matrix, e: &Matrix, w: &[f64]) -> Result<f64> {
    let q = check_square_nonnegative(smax)?;
    if check_square_nonnegative(e)? != q || w.len() != q {
        return Err(Error::Dimension("matrices and weights differ in size".into()));
    }
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("weight {v} must be positive")));
    }
    Ok((0..q)
        .map(|i| (0..q).map(|j| (smax[i][j] + e[i][j]) * w[j]).sum::<f64>() / w[i])
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DomainChoice {
    /// Complement of the estimated never-used sets.
    #[default]
    Estimated,
    /// All bins for every user.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightChoice {
    #[default]
    Ones,
    /// Perron vector of `Smax + E`, falling back to ones when it is not positive.
    Perron,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub e: Matrix,
    pub smax: Matrix,
    pub rho_e: f64,
    pub rho_smax: f64,
    /// `rho(Smax) < 1 - rho(E)`, strict, no slack.
    pub theorem1_holds: bool,
    /// `1 - eps (Q - 1) - rho(Smax)`, only when all users share one `eps`.
    pub corollary1_margin: Option<f64>,
    pub weights: Vec<f64>,
    pub contraction_modulus: f64,
}

impl ConditionReport {
    pub fn margin(&self) -> f64 {
        1.0 - self.rho_e - self.rho_smax
    }
}

pub fn check_conditions(
    ch: &ChannelSet,
    cfg: &GameConfig,
    domains: DomainChoice,
    weights: WeightChoice,
) -> Result<ConditionReport> {
    cfg.check_channels(ch)?;
    let d = match domains {
        DomainChoice::Estimated => estimated_domains(ch, cfg)?,
        DomainChoice::Full => full_domains(ch.users(), ch.freqs()),
    };
    let e = build_e(cfg);
    let smax = build_smax(ch, &d)?;
    let rho_e = spectral_radius(&e)?;
    let rho_smax = spectral_radius(&smax)?;
    let q = ch.users();
    let w = match weights {
        WeightChoice::Ones => vec![1.0; q],
        WeightChoice::Perron => {
            let sum: Matrix = smax
                .iter()
                .zip(&e)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect();
            perron_weights(&sum).unwrap_or_else(|_| vec![1.0; q])
        }
    };
    let contraction = contraction_modulus(&smax, &e, &w)?;
    let corollary1_margin = cfg
        .common_eps()
        .map(|eps| 1.0 - eps * (q as f64 - 1.0) - rho_smax);
    Ok(ConditionReport {
        theorem1_holds: rho_smax < 1.0 - rho_e,
        e,
        smax,
        rho_e,
        rho_smax,
        corollary1_margin,
        weights: w,
        contraction_modulus: contraction,
    })
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(out, "{name}[{}][{}]={v:e}", i + 1, j + 1);
        }
    }
}

impl fmt::Display for ConditionReport {
    /// Flat `key=value` lines; matrix indices are one-based.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "users={}", self.e.len());
        let _ = writeln!(out, "rho_E={:e}", self.rho_e);
        let _ = writeln!(out, "rho_Smax={:e}", self.rho_smax);
        let _ = writeln!(out, "theorem1_holds={}", self.theorem1_holds);
        let _ = writeln!(out, "margin={:e}", self.margin());
        match self.corollary1_margin {
            Some(m) => {
                let _ = writeln!(out, "corollary1_margin={m:e}");
            }
            None => out.push_str("corollary1_margin=na\n"),
        }
        let _ = writeln!(out, "contraction_modulus={:e}", self.contraction_modulus);
        for (i, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "w[{}]={w:e}", i + 1);
        }
        write_matrix(&mut out, "E", &self.e);
        write_matrix(&mut out, "Smax", &self.smax);
        f.write_str(&out)
    }
}

fn block_norm(a: &PowerProfile, b: &PowerProfile, w: &[f64]) -> f64 {
    (0..a.users())
        .map(|q| {
            let d: f64 = a
                .user(q)
                .iter()
                .zip(b.user(q))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d.sqrt() / w[q]
        })
        .fold(0.0, f64::max)
}

fn best_response_map(ch: &ChannelSet, cfg: &GameConfig, p: &PowerProfile) -> Result<PowerProfile> {
    let n = ch.freqs();
    let mut phi = vec![0.0; n];
    let mut out = PowerProfile::zeros(ch.users(), n);
    for q in 0..ch.users() {
        let mut resp = vec![0.0; n];
        best_response_into(ch, cfg, p, q, &mut phi, &mut resp)?;
        out.user_mut(q).copy_from_slice(&resp);
    }
    Ok(out)
}

/// Largest observed `||WF(p1) - WF(p2)|| / ||p1 - p2||` in the weighted block
/// norm `max_q ||x_q||_2 / w_q`, over `trials` random feasible pairs.
///
/// The pairs range over the whole feasible set, so the matching bound is the
/// modulus built from [`full_domains`].
pub fn empirical_contraction_check(
    ch: &ChannelSet,
    cfg: &GameConfig,
    trials: usize,
    seed: u64,
    w: &[f64],
) -> Result<f64> {
    cfg.check_channels(ch)?;
    if w.len() != ch.users() || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("weights must be positive, one per user".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let p1 = random_feasible_profile(&mut rng, cfg)?;
        let p2 = random_feasible_profile(&mut rng, cfg)?;
        let den = block_norm(&p1, &p2, w);
        if den <= 0.0 {
            continue;
        }
        let num = block_norm(&best_response_map(ch, cfg, &p1)?, &best_response_map(ch, cfg, &p2)?, w);
        worst = worst.max(num / den);
    }
    Ok(worst)
}
