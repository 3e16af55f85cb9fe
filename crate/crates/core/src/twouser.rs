//! Two-user analytics.
//!
//! * The anti-symmetric two-bin system: user 1 sees coupling `alpha` on bin 1
//!   and `m alpha` on bin 2, user 2 the mirror image. In the interior regime
//!   user 1 puts `p` on bin 1 and `1 - p` on bin 2, user 2 the reverse.
//! * The local linear system of a general two-user equilibrium, split into
//!   exclusively used bins and overlap bins, and the analytic derivative of the
//!   partitioning measure with respect to a common uncertainty bound.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::metrics::{partition_measure, OCCUPANCY_THRESHOLD};
use crate::model::{ChannelSet, GameConfig, PowerProfile};
use crate::rates::interference_with_eps;
use crate::solver::{default_initial_profile, solve, Schedule, SolverOptions};

/// Required positivity margin of every allocation in the interior regime.
const INTERIOR_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntiSymSystem {
    pub alpha: f64,
    pub m: f64,
    pub sigma2: f64,
    pub eps: f64,
}

impl AntiSymSystem {
    pub fn new(alpha: f64, m: f64, sigma2: f64, eps: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidValue(format!("alpha {alpha} must lie in (0, 1)")));
        }
        if !(m >= 1.0 && m.is_finite()) {
            return Err(Error::InvalidValue(format!("m {m} must be at least 1")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidValue(format!("noise {sigma2} must be positive")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidValue(format!("eps {eps} must be nonnegative")));
        }
        Ok(Self { alpha, m, sigma2, eps })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.alpha, self.m, self.sigma2, eps)
    }

    /// Nominal channels: `F_21 = (alpha, m alpha)`, `F_12 = (m alpha, alpha)`.
    pub fn channels(&self) -> ChannelSet {
        let (a, ma) = (self.alpha, self.m * self.alpha);
        ChannelSet::new(
            vec![vec![vec![0.0, 0.0], vec![ma, a]], vec![vec![a, ma], vec![0.0, 0.0]]],
            vec![vec![self.sigma2; 2]; 2],
        )
        .expect("validated parameters give a valid channel set")
    }

    /// Unit power budget, unit masks and the system's uncertainty bound.
    pub fn config(&self) -> GameConfig {
        GameConfig::uniform(2, 2, 1.0, 1.0, self.eps).expect("validated parameters give a valid game")
    }

    fn denominator(&self) -> f64 {
        1.0 - (self.m + 1.0) * self.alpha / 2.0 - self.eps
    }

    fn check_interior(&self) -> Result<f64> {
        let d = self.denominator();
        if d <= 0.0 {
            return Err(Error::Regime(format!("denominator {d} is not positive")));
        }
        let p = (1.0 - self.alpha - self.eps) / (2.0 * d);
        if !(p > INTERIOR_MARGIN && 1.0 - p > INTERIOR_MARGIN) {
            return Err(Error::Regime(format!("allocation {p} outside the interior")));
        }
        Ok(p)
    }
}

/// Interior equilibrium power of user 1 on bin 1.
pub fn interior_p(sys: &AntiSymSystem) -> Result<f64> {
    sys.check_interior()
}

/// Derivative of [`interior_p`] with respect to `eps`.
pub fn interior_dp_deps(sys: &AntiSymSystem) -> Result<f64> {
    sys.check_interior()?;
    let d = sys.denominator();
    Ok((sys.m - 1.0) * sys.alpha / (4.0 * d * d))
}

/// Interior equilibrium profile `[[p, 1 - p], [1 - p, p]]`.
pub fn interior_profile(sys: &AntiSymSystem) -> Result<PowerProfile> {
    let p = interior_p(sys)?;
    PowerProfile::new(vec![vec![p, 1.0 - p], vec![1.0 - p, p]])
}

/// Nominal sum-rate of the anti-symmetric system with user 1 putting `p` on bin 1.
pub fn antisym_sum_rate_at(alpha: f64, m: f64, sigma2: f64, p: f64) -> f64 {
    2.0 * (p / (sigma2 + alpha * (1.0 - p))).ln_1p() + 2.0 * ((1.0 - p) / (sigma2 + m * alpha * p)).ln_1p()
}

/// `d/dp` of [`antisym_sum_rate_at`].
pub fn antisym_dsdp(alpha: f64, m: f64, sigma2: f64, p: f64) -> f64 {
    let d1 = sigma2 + alpha * (1.0 - p);
    let d2 = sigma2 + m * alpha * p;
    let g1 = (sigma2 + alpha) / (d1 * d1) / (1.0 + p / d1);
    let g2 = -(sigma2 + m * alpha) / (d2 * d2) / (1.0 + (1.0 - p) / d2);
    2.0 * (g1 + g2)
}

/// Sum-rate at the interior equilibrium.
pub fn antisym_sum_rate(sys: &AntiSymSystem) -> Result<f64> {
    let p = interior_p(sys)?;
    Ok(antisym_sum_rate_at(sys.alpha, sys.m, sys.sigma2, p))
}

fn discriminant_root(m: f64, sigma2: f64) -> f64 {
    ((m + 1.0) * (m + 1.0) + 4.0 * m / sigma2).sqrt()
}

/// Coupling at which the interior sum-rate does not depend on the allocation.
pub fn alpha_crit(m: f64, sigma2: f64) -> f64 {
    sigma2 / (2.0 * m) * (discriminant_root(m, sigma2) - m - 1.0)
}

/// Critical couplings of the interior sum-rate at allocation `p`: zero, the
/// allocation-independent pair (the positive one is [`alpha_crit`]) and
/// `sigma2 (2p - 1) / ((m - 1) p^2 + 2p - 1)`.
///
/// `dS/dp` vanishes at the pair for every `p`. The allocation-dependent zero of
/// `dS/dp` is the negation of the last entry, which is negative for
/// `p > 1/2`, so only the pair can describe a physical system.
pub fn alpha_roots(m: f64, sigma2: f64, p: f64) -> Vec<f64> {
    let s = discriminant_root(m, sigma2);
    let c = sigma2 / (2.0 * m);
    vec![
        0.0,
        -c * (m + 1.0 + s),
        -c * (m + 1.0 - s),
        sigma2 * (2.0 * p - 1.0) / ((m - 1.0) * p * p + 2.0 * p - 1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterferenceRegime {
    /// `sigma2 <= alpha (1 - p) / 100`.
    High,
    /// `sigma2 >= 100 m alpha p`.
    Low,
    Intermediate,
}

impl fmt::Display for InterferenceRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterferenceRegime::High => "high",
            InterferenceRegime::Low => "low",
            InterferenceRegime::Intermediate => "intermediate",
        })
    }
}

/// Noise-to-interference regime at the interior allocation `p`.
pub fn interference_regime(sys: &AntiSymSystem, p: f64) -> InterferenceRegime {
    if sys.sigma2 <= sys.alpha * (1.0 - p) / 100.0 {
        InterferenceRegime::High
    } else if sys.sigma2 >= 100.0 * sys.m * sys.alpha * p {
        InterferenceRegime::Low
    } else {
        InterferenceRegime::Intermediate
    }
}

/// Local linear structure of a two-user equilibrium.
///
/// Bins are classified by occupancy: `d1`/`d2` are used by one user only,
/// `d_ol` by both. Allocations at the mask are constants of the local system
/// and are accounted for in `fixed`. On an overlap bin
/// `A_k p(k) = mu - s_k` with `A_k = [[1, F21(k) + eps1(k)], [F12(k) + eps2(k), 1]]` and
/// `s_k` the noise levels; on exclusive bins `p_q(k) = mu_q - sigma_q(k)`.
/// The water levels solve `(D + sum_k A_k^-1) mu = p_t`, i.e. `mu = Z p_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSystem {
    pub freqs: usize,
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub d_ol: Vec<usize>,
    /// Bins where user 1 / user 2 sits at its mask.
    pub clipped: [Vec<usize>; 2],
    pub n1: usize,
    pub n2: usize,
    /// `A_k`, one per entry of `d_ol`.
    pub a: Vec<Matrix2<f64>>,
    /// Noise levels `s_k`, one per entry of `d_ol`.
    pub s: Vec<Vector2<f64>>,
    /// Noise levels on the exclusive bins of each user.
    pub exclusive_noise: [Vec<f64>; 2],
    /// Power spent at masks by each user.
    pub fixed: [f64; 2],
    pub budgets: [f64; 2],
    pub z: Matrix2<f64>,
    pub p_t: Vector2<f64>,
    pub mu: Vector2<f64>,
    /// Bins where some allocation or slack is within `BOUNDARY_TOL` of
    /// changing the classification.
    pub near_boundary: Vec<bool>,
}

/// Distance (in power units) below which a bin is considered to sit on a
/// classification boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;

const DELTA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Off,
    Interior,
    Clipped,
}

const G: Matrix2<f64> = Matrix2::new(0.0, 1.0, 1.0, 0.0);

/// Classifies the bins of a two-user equilibrium and assembles its local
/// linear system.
pub fn classify_frequency_sets(ch: &ChannelSet, cfg: &GameConfig, equilibrium: &PowerProfile) -> Result<OverlapSystem> {
    cfg.check_channels(ch)?;
    if ch.users() != 2 {
        return Err(Error::UnsupportedArity { expected: 2, got: ch.users() });
    }
    if equilibrium.users() != 2 || equilibrium.freqs() != ch.freqs() {
        return Err(Error::Dimension("equilibrium does not match channels".into()));
    }
    let n = ch.freqs();
    let state = |q: usize, k: usize| {
        let v = equilibrium.get(q, k);
        let pm = cfg.pmax(q)[k];
        if v <= OCCUPANCY_THRESHOLD * cfg.power(q) {
            State::Off
        } else if v >= pm - 1e-9 * cfg.power(q) {
            State::Clipped
        } else {
            State::Interior
        }
    };

    let mut sys = OverlapSystem {
        freqs: n,
        d1: Vec::new(),
        d2: Vec::new(),
        d_ol: Vec::new(),
        clipped: [Vec::new(), Vec::new()],
        n1: 0,
        n2: 0,
        a: Vec::new(),
        s: Vec::new(),
        exclusive_noise: [Vec::new(), Vec::new()],
        fixed: [0.0; 2],
        budgets: [cfg.power(0), cfg.power(1)],
        z: Matrix2::zeros(),
        p_t: Vector2::zeros(),
        mu: Vector2::zeros(),
        near_boundary: vec![false; n],
    };

    let mut inv_sum = Matrix2::zeros();
    let mut noise_sum = Vector2::zeros();
    for k in 0..n {
        let (s1, s2) = (state(0, k), state(1, k));
        for (q, st) in [(0, s1), (1, s2)] {
            if st == State::Clipped {
                sys.clipped[q].push(k);
                sys.fixed[q] += cfg.pmax(q)[k];
            }
        }
        match (s1, s2) {
            (State::Interior, State::Interior) => {
                let a1 = ch.f(1, 0, k) + cfg.eps_at(0, k);
                let a2 = ch.f(0, 1, k) + cfg.eps_at(1, k);
                let a = Matrix2::new(1.0, a1, a2, 1.0);
                let delta = 1.0 - a1 * a2;
                if delta.abs() < DELTA_TOL {
                    return Err(Error::Degenerate(format!("singular coupling block on bin {k}")));
                }
                let inv = a.try_inverse().ok_or_else(|| Error::Degenerate(format!("bin {k}")))?;
                let s = Vector2::new(ch.sigma2(0, k), ch.sigma2(1, k));
                inv_sum += inv;
                noise_sum += inv * s;
                sys.d_ol.push(k);
                sys.a.push(a);
                sys.s.push(s);
            }
            (State::Interior, State::Off) => {
                sys.d1.push(k);
                sys.exclusive_noise[0].push(ch.sigma2(0, k));
            }
            (State::Off, State::Interior) => {
                sys.d2.push(k);
                sys.exclusive_noise[1].push(ch.sigma2(1, k));
            }
            (State::Interior, State::Clipped) | (State::Clipped, State::Interior) => {
                return Err(Error::Degenerate(format!(
                    "bin {k} is shared with one user at its mask"
                )));
            }
            _ => {}
        }
    }
    sys.n1 = sys.d1.len();
    sys.n2 = sys.d2.len();
    let d = Matrix2::new(sys.n1 as f64, 0.0, 0.0, sys.n2 as f64);
    sys.z = (d + inv_sum)
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("water-level system is singular".into()))?;
    sys.p_t = Vector2::new(
        sys.budgets[0] - sys.fixed[0] + sys.exclusive_noise[0].iter().sum::<f64>(),
        sys.budgets[1] - sys.fixed[1] + sys.exclusive_noise[1].iter().sum::<f64>(),
    ) + noise_sum;
    sys.mu = sys.z * sys.p_t;

    // boundary proximity: allocations about to vanish or hit the mask, and
    // unused bins about to become attractive
    let mut phi = vec![0.0; n];
    for q in 0..2 {
        interference_with_eps(ch, equilibrium, q, cfg.eps_row(q), &mut phi);
        for k in 0..n {
            let v = equilibrium.get(q, k);
            let pm = cfg.pmax(q)[k];
            let near = match state(q, k) {
                State::Off => sys.mu[q] - phi[k] > -BOUNDARY_TOL && pm > 0.0,
                State::Interior => v < BOUNDARY_TOL || v > pm - BOUNDARY_TOL,
                State::Clipped => sys.mu[q] - phi[k] - pm < BOUNDARY_TOL,
            };
            sys.near_boundary[k] |= near;
        }
    }
    Ok(sys)
}

impl OverlapSystem {
    /// Allocations implied by the linear system, as a full profile.
    pub fn reconstruct(&self, cfg: &GameConfig) -> Result<PowerProfile> {
        let mut rows = vec![vec![0.0; self.freqs]; 2];
        for (i, &k) in self.d_ol.iter().enumerate() {
            let p = self.overlap_power(i);
            rows[0][k] = p[0];
            rows[1][k] = p[1];
        }
        for (q, set) in [&self.d1, &self.d2].into_iter().enumerate() {
            for (&k, s) in set.iter().zip(&self.exclusive_noise[q]) {
                rows[q][k] = self.mu[q] - s;
            }
        }
        for q in 0..2 {
            for &k in &self.clipped[q] {
                rows[q][k] = cfg.pmax(q)[k];
            }
        }
        PowerProfile::new(rows)
    }

    fn overlap_power(&self, i: usize) -> Vector2<f64> {
        self.a[i].try_inverse().expect("checked at assembly") * (self.mu - self.s[i])
    }

    fn block_derivatives(&self) -> (Vec<Vector2<f64>>, Vector2<f64>) {
        let inv: Vec<Matrix2<f64>> = self.a.iter().map(|a| a.try_inverse().expect("checked at assembly")).collect();
        let p: Vec<Vector2<f64>> = (0..self.a.len()).map(|i| self.overlap_power(i)).collect();
        let rhs: Vector2<f64> = inv.iter().zip(&p).map(|(ai, pi)| ai * G * pi).sum();
        let dmu = self.z * rhs;
        let dp = inv.iter().zip(&p).map(|(ai, pi)| -ai * G * pi + ai * dmu).collect();
        (dp, dmu)
    }

    /// Dense solve of the full local system. Unknowns are ordered as the
    /// overlap pairs, the exclusive bins of user 1, those of user 2, then the
    /// two water levels. Returns the solution and its derivative in `eps`.
    pub fn dense_solve(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let nol = self.d_ol.len();
        let size = 2 * nol + self.n1 + self.n2 + 2;
        let (mu1, mu2) = (size - 2, size - 1);
        let mut m = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for (i, a) in self.a.iter().enumerate() {
            let (r1, r2) = (2 * i, 2 * i + 1);
            m[(r1, r1)] = 1.0;
            m[(r1, r2)] = a[(0, 1)];
            m[(r1, mu1)] = -1.0;
            m[(r2, r1)] = a[(1, 0)];
            m[(r2, r2)] = 1.0;
            m[(r2, mu2)] = -1.0;
            rhs[r1] = -self.s[i][0];
            rhs[r2] = -self.s[i][1];
            m[(mu1, r1)] = 1.0;
            m[(mu2, r2)] = 1.0;
        }
        let mut row = 2 * nol;
        for (q, mu_col) in [(0, mu1), (1, mu2)] {
            for s in &self.exclusive_noise[q] {
                m[(row, row)] = 1.0;
                m[(row, mu_col)] = -1.0;
                rhs[row] = -s;
                m[(mu_col, row)] = 1.0;
                row += 1;
            }
        }
        rhs[mu1] = self.budgets[0] - self.fixed[0];
        rhs[mu2] = self.budgets[1] - self.fixed[1];
        let lu = m.lu();
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("local system is singular".into()))?;
        // differentiate: each coupling coefficient grows by one per unit eps
        let mut drhs = DVector::<f64>::zeros(size);
        for i in 0..nol {
            drhs[2 * i] = -x[2 * i + 1];
            drhs[2 * i + 1] = -x[2 * i];
        }
        let dx = lu
            .solve(&drhs)
            .ok_or_else(|| Error::Degenerate("local system is singular".into()))?;
        Ok((x, dx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionDerivative {
    /// `dJ(k)/d eps` per bin; zero outside the overlap set.
    pub dj: Vec<f64>,
    pub near_boundary: Vec<bool>,
    pub dmu: [f64; 2],
}

/// Derivative of the partitioning measure (powers normalized by `p_total`)
/// under a common increase of both users' uncertainty bounds, valid while the
/// bin classification stays fixed.
pub fn partition_derivative(sys: &OverlapSystem, p_total: f64) -> Result<PartitionDerivative> {
    if !(p_total > 0.0 && p_total.is_finite()) {
        return Err(Error::Domain(format!("total power {p_total} must be positive")));
    }
    let (dp, dmu) = sys.block_derivatives();
    let mut dj = vec![0.0; sys.freqs];
    for (i, &k) in sys.d_ol.iter().enumerate() {
        let p = sys.overlap_power(i);
        dj[k] = -p.dot(&(G * dp[i])) / (p_total * p_total);
    }
    Ok(PartitionDerivative {
        dj,
        near_boundary: sys.near_boundary.clone(),
        dmu: [dmu[0], dmu[1]],
    })
}

/// Largest deviation between the block formulas and the dense solve, over
/// powers, water levels and their derivatives.
pub fn dense_oracle_gap(sys: &OverlapSystem) -> Result<f64> {
    let (x, dx) = sys.dense_solve()?;
    let (dp, dmu) = sys.block_derivatives();
    let size = x.len();
    let mut gap = (x[size - 2] - sys.mu[0]).abs().max((x[size - 1] - sys.mu[1]).abs());
    gap = gap.max((dx[size - 2] - dmu[0]).abs()).max((dx[size - 1] - dmu[1]).abs());
    for i in 0..sys.d_ol.len() {
        let p = sys.overlap_power(i);
        for c in 0..2 {
            gap = gap.max((x[2 * i + c] - p[c]).abs());
            gap = gap.max((dx[2 * i + c] - dp[i][c]).abs());
        }
    }
    Ok(gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifference {
    pub dj: Vec<f64>,
    /// Whether the bin classification is identical at `eps - h` and `eps + h`.
    pub same_partition: bool,
}

fn tight_equilibrium(ch: &ChannelSet, cfg: &GameConfig) -> Result<PowerProfile> {
    let opts = SolverOptions {
        tol: 1e-14,
        max_iters: 200_000,
        record_trajectory: false,
    };
    let init = default_initial_profile(cfg)?;
    let res = solve(ch, cfg, &init, &Schedule::gauss_seidel(), &opts)?;
    if res.residual > 1e-12 {
        return Err(Error::Degenerate(format!(
            "equilibrium not resolved (residual {:e})",
            res.residual
        )));
    }
    Ok(res.profile)
}

fn classification(sys: &OverlapSystem) -> (Vec<usize>, Vec<usize>, Vec<usize>, [Vec<usize>; 2]) {
    (sys.d1.clone(), sys.d2.clone(), sys.d_ol.clone(), sys.clipped.clone())
}

/// Central finite difference of `J` in a common `eps`, from independent solver
/// runs at `eps - h` and `eps + h`.
pub fn partition_finite_difference(ch: &ChannelSet, cfg: &GameConfig, h: f64, p_total: f64) -> Result<FiniteDifference> {
    let eps = cfg
        .common_eps()
        .ok_or_else(|| Error::InvalidValue("finite differences need a common eps".into()))?;
    if !(h > 0.0 && h <= eps) {
        return Err(Error::InvalidValue(format!("step {h} must lie in (0, eps]")));
    }
    let lo_cfg = cfg.with_common_eps(eps - h)?;
    let hi_cfg = cfg.with_common_eps(eps + h)?;
    let lo = tight_equilibrium(ch, &lo_cfg)?;
    let hi = tight_equilibrium(ch, &hi_cfg)?;
    let same_partition = match (
        classify_frequency_sets(ch, &lo_cfg, &lo),
        classify_frequency_sets(ch, &hi_cfg, &hi),
    ) {
        (Ok(a), Ok(b)) => classification(&a) == classification(&b),
        _ => false,
    };
    let j_lo = partition_measure(&lo, p_total)?.j;
    let j_hi = partition_measure(&hi, p_total)?.j;
    Ok(FiniteDifference {
        dj: j_lo.iter().zip(&j_hi).map(|(a, b)| (b - a) / (2.0 * h)).collect(),
        same_partition,
    })
}
