//! Robust iterative waterfilling to the robust-optimization equilibrium.
//!
//! Every user repeatedly replaces its allocation by its robust best response
//! to the (possibly outdated) allocations of the others. Three update
//! schedules are provided:
//!
//! * `Jacobi`: all users respond simultaneously to the profile at the start of
//!   the round.
//! * `GaussSeidel`: users respond one after another in index order, each seeing
//!   the updates made earlier in the same round.
//! * `RandomAsync`: each user updates with probability `u` per round, and sees
//!   each opponent's allocation as it was `a` rounds ago, with `a` drawn
//!   uniformly from `0..=d` (bounded by the available history).
//!
//! A round counts as converged when the largest per-bin change over the round
//! is below `tol` and the fixed-point residual of the resulting profile is at
//! most `tol`. No damping is applied; oscillating instances end with
//! `converged == false` after `max_iters` rounds.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csv::{fmt_f64, write_row};
use crate::error::{Error, Result};
use crate::model::{ChannelSet, GameConfig, PowerProfile};
use crate::waterfill::{best_response_into, waterfill};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Jacobi,
    GaussSeidel,
    RandomAsync,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Jacobi => "jacobi",
            ScheduleKind::GaussSeidel => "gauss_seidel",
            ScheduleKind::RandomAsync => "random_async",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobi" | "simultaneous" => Ok(ScheduleKind::Jacobi),
            "gauss_seidel" | "gauss-seidel" | "sequential" => Ok(ScheduleKind::GaussSeidel),
            "random_async" | "random-async" | "async" => Ok(ScheduleKind::RandomAsync),
            other => Err(Error::InvalidValue(format!("unknown schedule '{other}'"))),
        }
    }
}

/// Update schedule of the iterative algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub seed: u64,
    /// Per-round update probability of each user (random_async only).
    pub update_probability: f64,
    /// Largest age, in rounds, of an opponent allocation seen by a user
    /// (random_async only).
    pub max_staleness: usize,
}

impl Schedule {
    pub fn jacobi() -> Self {
        Self {
            kind: ScheduleKind::Jacobi,
            seed: 0,
            update_probability: 1.0,
            max_staleness: 0,
        }
    }

    pub fn gauss_seidel() -> Self {
        Self {
            kind: ScheduleKind::GaussSeidel,
            ..Self::jacobi()
        }
    }

    pub fn random_async(update_probability: f64, max_staleness: usize, seed: u64) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::RandomAsync,
            seed,
            update_probability,
            max_staleness,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.update_probability;
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "update probability {u} must lie in (0, 1]"
            )));
        }
        Ok(())
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::jacobi()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScheduleKind::RandomAsync => write!(
                f,
                "random_async(u={},d={},seed={})",
                self.update_probability, self.max_staleness, self.seed
            ),
            kind => kind.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Threshold on the largest per-bin change over one round.
    pub tol: f64,
    /// Largest number of rounds.
    pub max_iters: usize,
    pub record_trajectory: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 10_000,
            record_trajectory: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidValue(format!("tolerance {} must be positive", self.tol)));
        }
        Ok(())
    }
}

/// Profile after one round together with the largest per-bin change.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub round: usize,
    pub profile: PowerProfile,
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub profile: PowerProfile,
    /// Water levels of every user's best response to the returned profile.
    pub mu: Vec<f64>,
    /// Number of full rounds executed.
    pub iterations: usize,
    /// `max_q ||p_q - WF_q(p_-q)||_2` at the returned profile.
    pub residual: f64,
    pub converged: bool,
    pub schedule: Schedule,
    pub trajectory: Option<Vec<TrajectoryStep>>,
}

/// Projection of the uniform allocation `P_q / N` onto each user's admissible set.
pub fn default_initial_profile(cfg: &GameConfig) -> Result<PowerProfile> {
    let n = cfg.freqs();
    let mut p = Vec::with_capacity(cfg.users() * n);
    for q in 0..cfg.users() {
        let target = vec![-cfg.power(q) / n as f64; n];
        p.extend(waterfill(&target, cfg.power(q), cfg.pmax(q))?.0);
    }
    PowerProfile::from_flat(cfg.users(), n, p)
}

/// Per-user Euclidean distance to the best response, and the water levels.
fn residual_and_levels(ch: &ChannelSet, cfg: &GameConfig, profile: &PowerProfile) -> Result<(f64, Vec<f64>)> {
    let n = ch.freqs();
    let mut phi = vec![0.0; n];
    let mut resp = vec![0.0; n];
    let mut worst: f64 = 0.0;
    let mut levels = Vec::with_capacity(ch.users());
    for q in 0..ch.users() {
        let mu = best_response_into(ch, cfg, profile, q, &mut phi, &mut resp)?;
        let d: f64 = profile
            .user(q)
            .iter()
            .zip(&resp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(d);
        levels.push(mu);
    }
    Ok((worst, levels))
}

/// `max_q ||p_q - WF_q(p_-q)||_2`: zero exactly at an equilibrium.
pub fn fixed_point_residual(ch: &ChannelSet, cfg: &GameConfig, profile: &PowerProfile) -> Result<f64> {
    cfg.check_channels(ch)?;
    if profile.users() != ch.users() || profile.freqs() != ch.freqs() {
        return Err(Error::Dimension("profile does not match channels".into()));
    }
    Ok(residual_and_levels(ch, cfg, profile)?.0)
}

struct Workspace {
    phi: Vec<f64>,
    resp: Vec<f64>,
    view: PowerProfile,
    // opponents' rows each user last responded to (own row ignored)
    seen: Vec<Option<PowerProfile>>,
}

impl Workspace {
    fn respond(
        &mut self,
        ch: &ChannelSet,
        cfg: &GameConfig,
        view: &PowerProfile,
        q: usize,
        round: usize,
    ) -> Result<()> {
        best_response_into(ch, cfg, view, q, &mut self.phi, &mut self.resp).map_err(|e| {
            Error::NumericalFailure {
                user: q,
                round,
                detail: e.to_string(),
            }
        })?;
        if let Some(v) = self.resp.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                user: q,
                round,
                detail: format!("best response produced {v}"),
            });
        }
        match &mut self.seen[q] {
            Some(s) => s.clone_from(view),
            slot => *slot = Some(view.clone()),
        }
        Ok(())
    }

    /// True when every user's row is its exact response to the current
    /// opponents, so the fixed-point residual is zero without evaluation.
    fn all_settled(&self, current: &PowerProfile) -> bool {
        let users = current.users();
        (0..users).all(|q| {
            self.seen[q].as_ref().is_some_and(|view| {
                (0..users)
                    .filter(|&r| r != q)
                    .all(|r| view.user(r) == current.user(r))
            })
        })
    }
}

/// Runs the iterative algorithm from `initial` under `schedule`.
///
/// Reaching `max_iters` is not an error: the result carries `converged == false`.
pub fn solve(
    ch: &ChannelSet,
    cfg: &GameConfig,
    initial: &PowerProfile,
    schedule: &Schedule,
    opts: &SolverOptions,
) -> Result<EquilibriumResult> {
    cfg.check_channels(ch)?;
    schedule.validate()?;
    opts.validate()?;
    initial.check_feasible(cfg)?;

    let users = ch.users();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut current = initial.clone();
    let mut history: VecDeque<PowerProfile> = VecDeque::new();
    let mut ws = Workspace {
        phi: vec![0.0; ch.freqs()],
        resp: vec![0.0; ch.freqs()],
        view: initial.clone(),
        seen: vec![None; users],
    };
    let mut trajectory = opts.record_trajectory.then(Vec::new);
    let mut converged = false;
    let mut rounds = 0;

    while rounds < opts.max_iters {
        rounds += 1;
        let start = current.clone();
        match schedule.kind {
            ScheduleKind::Jacobi => {
                for q in 0..users {
                    ws.respond(ch, cfg, &start, q, rounds)?;
                    current.user_mut(q).copy_from_slice(&ws.resp);
                }
            }
            ScheduleKind::GaussSeidel => {
                for q in 0..users {
                    let view = current.clone();
                    ws.respond(ch, cfg, &view, q, rounds)?;
                    current.user_mut(q).copy_from_slice(&ws.resp);
                }
            }
            ScheduleKind::RandomAsync => {
                history.push_front(start.clone());
                history.truncate(schedule.max_staleness + 1);
                for q in 0..users {
                    if !rng.gen_bool(schedule.update_probability) {
                        continue;
                    }
                    let mut view = std::mem::replace(&mut ws.view, PowerProfile::zeros(0, 0));
                    for r in 0..users {
                        let age = if r == q {
                            0
                        } else {
                            rng.gen_range(0..history.len())
                        };
                        view.user_mut(r).copy_from_slice(history[age].user(r));
                    }
                    ws.respond(ch, cfg, &view, q, rounds)?;
                    ws.view = view;
                    current.user_mut(q).copy_from_slice(&ws.resp);
                }
            }
        }
        let change = current.max_abs_diff(&start);
        if let Some(t) = trajectory.as_mut() {
            t.push(TrajectoryStep {
                round: rounds,
                profile: current.clone(),
                change,
            });
        }
        if ws.all_settled(&current) {
            converged = true;
            break;
        }
        if change < opts.tol && residual_and_levels(ch, cfg, &current)?.0 <= opts.tol {
            converged = true;
            break;
        }
    }

    let (residual, mu) = residual_and_levels(ch, cfg, &current)?;
    Ok(EquilibriumResult {
        profile: current,
        mu,
        iterations: rounds,
        residual,
        converged,
        schedule: *schedule,
        trajectory,
    })
}

/// Writes a trajectory as CSV with columns `round,user,frequency,power,residual`
/// (one-based user and frequency). `residual` is the largest per-bin change of
/// the round.
pub fn write_trajectory_csv<W: Write + ?Sized>(steps: &[TrajectoryStep], w: &mut W) -> io::Result<()> {
    write_row(w, &["round", "user", "frequency", "power", "residual"])?;
    for step in steps {
        for q in 0..step.profile.users() {
            for k in 0..step.profile.freqs() {
                write_row(
                    w,
                    &[
                        step.round.to_string(),
                        (q + 1).to_string(),
                        (k + 1).to_string(),
                        fmt_f64(step.profile.get(q, k)),
                        fmt_f64(step.change),
                    ],
                )?;
            }
        }
    }
    Ok(())
}
