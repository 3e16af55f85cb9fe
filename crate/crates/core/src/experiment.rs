//! Monte-Carlo harness: random channels, relative channel errors, and the
//! robust / nominal / perfect-CSI comparison evaluated on the true channels.
//!
//! Per-trial randomness is derived from the base seeds by
//! `splitmix64(seed ^ splitmix64(trial))`, so results do not depend on the
//! order or parallelism in which trials run. The channel and error streams
//! of a trial are shared across uncertainty widths: the relative error is
//! `e = delta * u` with `u ~ U(-1/2, 1/2)` drawn once per trial.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::conditions::{check_conditions, DomainChoice, WeightChoice};
use crate::csv::{fmt_f64, write_row};
use crate::error::{Error, Result};
use crate::metrics::occupancy;
use crate::model::{ChannelSet, GameConfig};
use crate::rates::sum_rate;
use crate::solver::{default_initial_profile, solve, Schedule, SolverOptions};

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    splitmix64(seed ^ splitmix64(trial as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGenSpec {
    pub users: usize,
    pub freqs: usize,
    /// Mean of `|H_rq(k)|^2` for `r != q`.
    pub cross_variance: f64,
    /// Mean of `|H_qq(k)|^2`.
    pub direct_variance: f64,
    pub noise: f64,
    pub seed: u64,
}

impl ChannelGenSpec {
    pub fn new(users: usize, freqs: usize, seed: u64) -> Self {
        Self {
            users,
            freqs,
            cross_variance: 1.0,
            direct_variance: 2.25,
            noise: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.freqs == 0 {
            return Err(Error::InvalidValue("need at least one user and one frequency".into()));
        }
        for (name, v) in [
            ("cross variance", self.cross_variance),
            ("direct variance", self.direct_variance),
            ("noise", self.noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidValue(format!("{name} {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintySpec {
    /// Relative error width: `e ~ U(-delta/2, delta/2)`.
    pub delta: f64,
    pub seed: u64,
}

impl UncertaintySpec {
    pub fn new(delta: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidValue(format!("delta {delta} must lie in [0, 1)")));
        }
        Ok(Self { delta, seed })
    }
}

/// True channels: `|H|^2` drawn as exponentials, `F_rq = |H_rq|^2 / |H_qq|^2`,
/// `sigma_q^2 = noise / |H_qq|^2`.
pub fn generate_channels(spec: &ChannelGenSpec) -> Result<ChannelSet> {
    spec.validate()?;
    let (q, n) = (spec.users, spec.freqs);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cross = Exp::new(1.0 / spec.cross_variance).map_err(|e| Error::InvalidValue(e.to_string()))?;
    let direct = Exp::new(1.0 / spec.direct_variance).map_err(|e| Error::InvalidValue(e.to_string()))?;
    // gains[r][q][k] = |H_rq(k)|^2, drawn in a fixed order
    let mut gains = vec![0.0; q * q * n];
    for r in 0..q {
        for s in 0..q {
            for k in 0..n {
                gains[(r * q + s) * n + k] = if r == s {
                    direct.sample(&mut rng)
                } else {
                    cross.sample(&mut rng)
                };
            }
        }
    }
    let direct_gain = |s: usize, k: usize| gains[(s * q + s) * n + k];
    let mut f = vec![0.0; q * q * n];
    for r in 0..q {
        for s in (0..q).filter(|&s| s != r) {
            for k in 0..n {
                f[(r * q + s) * n + k] = gains[(r * q + s) * n + k] / direct_gain(s, k);
            }
        }
    }
    let sigma2 = (0..q)
        .flat_map(|s| (0..n).map(move |k| (s, k)))
        .map(|(s, k)| spec.noise / direct_gain(s, k))
        .collect();
    ChannelSet::from_flat(q, n, f, sigma2)
}

/// Nominal channels `F_nom = F_true (1 + e)` and uncertainty bounds.
///
/// With `|e| <= delta/2` the error `F_true - F_nom = -F_nom e / (1 + e)` is at
/// most `c F_nom` elementwise, `c = (delta/2) / (1 - delta/2)`, so
/// `eps_q = c * max_k ||(F_nom,rq(k))_{r != q}||_2` keeps every true channel
/// inside user `q`'s uncertainty ball.
pub fn perturb_channels(true_ch: &ChannelSet, u: &UncertaintySpec) -> Result<(ChannelSet, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(u.seed);
    let (q, n) = (true_ch.users(), true_ch.freqs());
    let draws: Vec<f64> = (0..q * q * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    perturb_with_draws(true_ch, u.delta, &draws)
}

fn perturb_with_draws(true_ch: &ChannelSet, delta: f64, draws: &[f64]) -> Result<(ChannelSet, Vec<f64>)> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidValue(format!("delta {delta} must lie in [0, 1)")));
    }
    let (q, n) = (true_ch.users(), true_ch.freqs());
    let nominal = true_ch.map_cross(|r, s, k, v| v * (1.0 + delta * draws[(r * q + s) * n + k]))?;
    let eps = per_bin_bounds(&nominal, delta)
        .into_iter()
        .map(|row| row.into_iter().fold(0.0, f64::max))
        .collect();
    Ok((nominal, eps))
}

/// How relative channel errors become uncertainty bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundMapping {
    /// `eps_q(k) = c ||(F_nom,rq(k))_{r != q}||_2`: a ball per bin sized to
    /// that bin's coefficients.
    #[default]
    PerBin,
    /// One bound per user, the largest per-bin bound over all bins.
    PerUser,
}

impl fmt::Display for BoundMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundMapping::PerBin => "per-bin",
            BoundMapping::PerUser => "per-user",
        })
    }
}

impl FromStr for BoundMapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-bin" | "per_bin" => Ok(BoundMapping::PerBin),
            "per-user" | "per_user" => Ok(BoundMapping::PerUser),
            other => Err(Error::InvalidValue(format!("unknown bound mapping '{other}'"))),
        }
    }
}

/// Per-bin bounds `c ||(F_nom,rq(k))_{r != q}||_2` with
/// `c = (delta/2) / (1 - delta/2)`; each contains the true coefficients of its
/// bin.
pub fn per_bin_bounds(nominal: &ChannelSet, delta: f64) -> Vec<Vec<f64>> {
    let (q, n) = (nominal.users(), nominal.freqs());
    let c = (delta / 2.0) / (1.0 - delta / 2.0);
    (0..q)
        .map(|s| {
            (0..n)
                .map(|k| {
                    c * (0..q)
                        .filter(|&r| r != s)
                        .map(|r| nominal.f(r, s, k).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolutionKind {
    Robust,
    Nominal,
    Perfect,
}

impl SolutionKind {
    pub const ALL: [SolutionKind; 3] = [SolutionKind::Robust, SolutionKind::Nominal, SolutionKind::Perfect];
}

impl fmt::Display for SolutionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolutionKind::Robust => "robust",
            SolutionKind::Nominal => "nominal",
            SolutionKind::Perfect => "perfect",
        })
    }
}

impl FromStr for SolutionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robust" => Ok(SolutionKind::Robust),
            "nominal" => Ok(SolutionKind::Nominal),
            "perfect" => Ok(SolutionKind::Perfect),
            other => Err(Error::InvalidValue(format!("unknown solution kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub kind: SolutionKind,
    pub delta: f64,
    pub users: usize,
    pub freqs: usize,
    /// Sum-rate of the solution evaluated on the true channels.
    pub sum_rate_true: f64,
    pub occupancy: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Uniqueness condition of the game that was solved.
    pub theorem1_ok: bool,
    /// Largest uncertainty bound used by the game that was solved.
    pub eps_max: f64,
    /// Set when the solver failed outright; such records carry no rate.
    pub failure: Option<String>,
}

impl TrialRecord {
    /// Whether the record enters trend averages.
    pub fn included(&self) -> bool {
        self.converged && self.failure.is_none()
    }

    pub fn mean_occupancy(&self) -> f64 {
        self.occupancy.iter().sum::<usize>() as f64 / self.occupancy.len().max(1) as f64
    }
}

/// Configuration shared by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSetup {
    pub gen: ChannelGenSpec,
    pub uncertainty_seed: u64,
    pub power: f64,
    pub pmax: f64,
    pub mapping: BoundMapping,
    pub schedule: Schedule,
    pub opts: SolverOptions,
}

impl TrialSetup {
    pub fn new(gen: ChannelGenSpec, uncertainty_seed: u64) -> Self {
        Self {
            gen,
            uncertainty_seed,
            power: 1.0,
            pmax: 1.0,
            mapping: BoundMapping::PerBin,
            schedule: Schedule::gauss_seidel(),
            opts: SolverOptions::default(),
        }
    }
}

fn solve_kind(
    setup: &TrialSetup,
    trial: usize,
    kind: SolutionKind,
    delta: f64,
    true_ch: &ChannelSet,
    game_ch: &ChannelSet,
    eps: Vec<Vec<f64>>,
) -> Result<TrialRecord> {
    let (q, n) = (true_ch.users(), true_ch.freqs());
    let eps_max = eps.iter().flatten().cloned().fold(0.0, f64::max);
    let cfg = GameConfig::with_bin_bounds(vec![setup.power; q], vec![vec![setup.pmax; n]; q], eps)?;
    let theorem1_ok = check_conditions(game_ch, &cfg, DomainChoice::Estimated, WeightChoice::Ones)?.theorem1_holds;
    let mut record = TrialRecord {
        trial,
        kind,
        delta,
        users: q,
        freqs: n,
        sum_rate_true: f64::NAN,
        occupancy: vec![0; q],
        iterations: 0,
        converged: false,
        theorem1_ok,
        eps_max,
        failure: None,
    };
    let init = default_initial_profile(&cfg)?;
    match solve(game_ch, &cfg, &init, &setup.schedule, &setup.opts) {
        Ok(res) => {
            record.sum_rate_true = sum_rate(true_ch, &res.profile)?;
            record.occupancy = occupancy(&res.profile, &cfg);
            record.iterations = res.iterations;
            record.converged = res.converged;
        }
        Err(e @ Error::NumericalFailure { .. }) => record.failure = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Runs one trial at every uncertainty width in `deltas`; records are ordered
/// by delta, then kind.
pub fn run_trial(setup: &TrialSetup, trial: usize, deltas: &[f64]) -> Result<Vec<TrialRecord>> {
    let gen = setup.gen.with_seed(trial_seed(setup.gen.seed, trial));
    let true_ch = generate_channels(&gen)?;
    let (q, n) = (gen.users, gen.freqs);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(setup.uncertainty_seed, trial));
    let draws: Vec<f64> = (0..q * q * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut out = Vec::with_capacity(3 * deltas.len());
    for &delta in deltas {
        let (nominal, per_user) = perturb_with_draws(&true_ch, delta, &draws)?;
        let robust_eps = match setup.mapping {
            BoundMapping::PerBin => per_bin_bounds(&nominal, delta),
            BoundMapping::PerUser => per_user.iter().map(|&e| vec![e; n]).collect(),
        };
        for kind in SolutionKind::ALL {
            let (ch, e) = match kind {
                SolutionKind::Robust => (&nominal, robust_eps.clone()),
                SolutionKind::Nominal => (&nominal, vec![vec![0.0; n]; q]),
                SolutionKind::Perfect => (&true_ch, vec![vec![0.0; n]; q]),
            };
            out.push(solve_kind(setup, trial, kind, delta, &true_ch, ch, e)?);
        }
    }
    Ok(out)
}

/// Runs `trials` trials in parallel; the output order (trial, delta, kind) is
/// independent of scheduling.
pub fn run_trials(setup: &TrialSetup, deltas: &[f64], trials: usize) -> Result<Vec<TrialRecord>> {
    setup.gen.validate()?;
    for &d in deltas {
        UncertaintySpec::new(d, 0)?;
    }
    let per_trial: Vec<Vec<TrialRecord>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(setup, t, deltas))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`); the
/// values are summed in the given order.
pub fn mean_stderr(values: &[f64]) -> Option<MeanStderr> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Some(MeanStderr { mean, stderr })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub delta: f64,
    pub users: usize,
    pub freqs: usize,
    pub kind: SolutionKind,
    pub included: usize,
    pub excluded: usize,
    pub sum_rate: MeanStderr,
    pub occupancy: MeanStderr,
    pub iterations: MeanStderr,
}

/// Per (users, freqs, delta, kind) means over the included records. Records
/// are sorted by trial before summation, so the result does not depend on
/// record order.
pub fn aggregate(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.users, a.freqs)
            .cmp(&(b.users, b.freqs))
            .then(a.delta.total_cmp(&b.delta))
            .then(a.kind.cmp(&b.kind))
            .then(a.trial.cmp(&b.trial))
    });
    let mut rows = Vec::new();
    let mut excluded_total = 0;
    for group in sorted.chunk_by(|a, b| {
        (a.users, a.freqs, a.kind) == (b.users, b.freqs, b.kind) && a.delta.total_cmp(&b.delta).is_eq()
    }) {
        let inc: Vec<&TrialRecord> = group.iter().copied().filter(|r| r.included()).collect();
        let excluded = group.len() - inc.len();
        excluded_total += excluded;
        let stat = |f: &dyn Fn(&TrialRecord) -> f64| mean_stderr(&inc.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (Some(sum_rate), Some(occupancy), Some(iterations)) = (
            stat(&|r| r.sum_rate_true),
            stat(&|r| r.mean_occupancy()),
            stat(&|r| r.iterations as f64),
        ) else {
            continue;
        };
        let head = group[0];
        rows.push(SummaryRow {
            delta: head.delta,
            users: head.users,
            freqs: head.freqs,
            kind: head.kind,
            included: inc.len(),
            excluded,
            sum_rate,
            occupancy,
            iterations,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptySummary { excluded: excluded_total });
    }
    Ok(rows)
}

/// Paired t-statistic of `a - b` in true sum-rate at width `delta`, over
/// trials where both records are included. `None` with fewer than two pairs or
/// zero spread.
pub fn paired_t_statistic(records: &[TrialRecord], delta: f64, a: SolutionKind, b: SolutionKind) -> Option<f64> {
    let pick = |kind: SolutionKind| {
        let mut v: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.kind == kind && r.delta == delta && r.included())
            .collect();
        v.sort_by_key(|r| r.trial);
        v
    };
    let (ra, rb) = (pick(a), pick(b));
    let mut diffs = Vec::new();
    let mut j = 0;
    for x in &ra {
        while j < rb.len() && rb[j].trial < x.trial {
            j += 1;
        }
        if j < rb.len() && rb[j].trial == x.trial {
            diffs.push(x.sum_rate_true - rb[j].sum_rate_true);
        }
    }
    let s = mean_stderr(&diffs)?;
    (diffs.len() >= 2 && s.stderr > 0.0).then(|| s.mean / s.stderr)
}

pub fn write_trials_csv<W: Write + ?Sized>(records: &[TrialRecord], w: &mut W) -> io::Result<()> {
    let users = records.iter().map(|r| r.users).max().unwrap_or(0);
    let mut header: Vec<String> = ["trial", "kind", "delta", "Q", "N", "sum_rate_true"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=users).map(|q| format!("occupancy_u{q}")));
    header.extend(
        ["occupancy_mean", "iterations", "converged", "theorem1_ok", "eps_max"]
            .iter()
            .map(|s| s.to_string()),
    );
    write_row(w, &header)?;
    for r in records {
        let mut row = vec![
            r.trial.to_string(),
            r.kind.to_string(),
            fmt_f64(r.delta),
            r.users.to_string(),
            r.freqs.to_string(),
            fmt_f64(r.sum_rate_true),
        ];
        row.extend((0..users).map(|q| r.occupancy.get(q).map_or(String::new(), |c| c.to_string())));
        row.push(fmt_f64(r.mean_occupancy()));
        row.push(r.iterations.to_string());
        row.push(r.converged.to_string());
        row.push(r.theorem1_ok.to_string());
        row.push(fmt_f64(r.eps_max));
        write_row(w, &row)?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write + ?Sized>(rows: &[SummaryRow], w: &mut W) -> io::Result<()> {
    write_row(
        w,
        &[
            "delta",
            "Q",
            "N",
            "kind",
            "included",
            "excluded",
            "sum_rate_mean",
            "sum_rate_stderr",
            "occupancy_mean",
            "occupancy_stderr",
            "iterations_mean",
            "iterations_stderr",
        ],
    )?;
    for r in rows {
        write_row(
            w,
            &[
                fmt_f64(r.delta),
                r.users.to_string(),
                r.freqs.to_string(),
                r.kind.to_string(),
                r.included.to_string(),
                r.excluded.to_string(),
                fmt_f64(r.sum_rate.mean),
                fmt_f64(r.sum_rate.stderr),
                fmt_f64(r.occupancy.mean),
                fmt_f64(r.occupancy.stderr),
                fmt_f64(r.iterations.mean),
                fmt_f64(r.iterations.stderr),
            ],
        )?;
    }
    Ok(())
}

/// Random weakly coupled instance that passes the uniqueness check.
///
/// Cross coefficients are `scale * U(0, 1)` and noise levels `U(0.05, 1)`, with
/// every user holding budget `power`, unit masks and bound `eps`. The coupling
/// scale starts at `0.9 (1 - eps (Q-1)) / (Q-1)` and is halved until the check
/// passes.
pub fn random_condition_instance<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    freqs: usize,
    eps: f64,
) -> Result<(ChannelSet, GameConfig)> {
    let others = users.saturating_sub(1).max(1) as f64;
    let slack = 1.0 - eps * (users as f64 - 1.0);
    if slack <= 0.0 {
        return Err(Error::InvalidValue(format!(
            "eps {eps} leaves no room for the uniqueness condition with {users} users"
        )));
    }
    let cfg = GameConfig::uniform(users, freqs, 1.0, 1.0, eps)?;
    let mut scale = 0.9 * slack / others;
    loop {
        let f: Vec<f64> = (0..users * users * freqs)
            .map(|i| {
                let (r, q) = (i / (users * freqs), (i / freqs) % users);
                let v = rng.gen_range(0.0..1.0);
                if r == q {
                    0.0
                } else {
                    scale * v
                }
            })
            .collect();
        let sigma2: Vec<f64> = (0..users * freqs).map(|_| rng.gen_range(0.05..1.0)).collect();
        let ch = ChannelSet::from_flat(users, freqs, f, sigma2)?;
        if check_conditions(&ch, &cfg, DomainChoice::Estimated, WeightChoice::Ones)?.theorem1_holds {
            return Ok((ch, cfg));
        }
        scale *= 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_direct_gain_mean() {
        let spec = ChannelGenSpec::new(2, 50_000, 4);
        let ch = generate_channels(&spec).unwrap();
        // sigma2 = 1/|H_qq|^2, so the mean of 1/sigma2 is the direct variance
        let mean = (0..2)
            .flat_map(|q| ch.sigma2_row(q).iter().map(|s| 1.0 / s).collect::<Vec<_>>())
            .sum::<f64>()
            / 100_000.0;
        assert!((mean - 2.25).abs() < 0.05, "{mean}");
    }

    #[test]
    fn generator_ratio_median() {
        let spec = ChannelGenSpec::new(2, 50_000, 5);
        let ch = generate_channels(&spec).unwrap();
        let mut v: Vec<f64> = ch.f_row(1, 0).iter().chain(ch.f_row(0, 1)).cloned().collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        assert!((median - 1.0 / 2.25).abs() < 0.1 / 2.25, "{median}");
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = ChannelGenSpec::new(3, 8, 99);
        let a = generate_channels(&spec).unwrap();
        assert_eq!(a, generate_channels(&spec).unwrap());
        for q in 0..3 {
            assert!(a.f_row(q, q).iter().all(|v| *v == 0.0));
        }
        assert_ne!(a, generate_channels(&spec.with_seed(100)).unwrap());
    }

    #[test]
    fn zero_delta_is_identity() {
        let ch = generate_channels(&ChannelGenSpec::new(3, 4, 1)).unwrap();
        let (nom, eps) = perturb_channels(&ch, &UncertaintySpec::new(0.0, 3).unwrap()).unwrap();
        assert_eq!(nom, ch);
        assert!(eps.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn true_channel_inside_uncertainty_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10_000 {
            let spec = ChannelGenSpec::new(3, 2, rng.gen());
            let ch = generate_channels(&spec).unwrap();
            let u = UncertaintySpec::new(rng.gen_range(0.0..0.99), rng.gen()).unwrap();
            let (nom, eps) = perturb_channels(&ch, &u).unwrap();
            for q in 0..3 {
                for k in 0..2 {
                    let d2: f64 = (0..3)
                        .filter(|&r| r != q)
                        .map(|r| (ch.f(r, q, k) - nom.f(r, q, k)).powi(2))
                        .sum();
                    assert!(d2.sqrt() <= eps[q] * (1.0 + 1e-12));
                    assert!(d2.sqrt() <= per_bin_bounds(&nom, u.delta)[q][k] * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn single_coefficient_bound() {
        let ch = ChannelSet::new(
            vec![vec![vec![0.0], vec![0.0]], vec![vec![2.0], vec![0.0]]],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap();
        // draw u = 0 leaves the nominal value at 2
        let (nom, eps) = perturb_with_draws(&ch, 0.5, &[0.0; 4]).unwrap();
        assert_eq!(nom.f(1, 0, 0), 2.0);
        assert!((eps[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(eps[1], 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let rec = |trial, rate: f64| TrialRecord {
            trial,
            kind: SolutionKind::Robust,
            delta: 0.2,
            users: 2,
            freqs: 2,
            sum_rate_true: rate,
            occupancy: vec![1, 2],
            iterations: 4,
            converged: true,
            theorem1_ok: true,
            eps_max: 0.1,
            failure: None,
        };
        let one = aggregate(&[rec(0, 1.5)]).unwrap();
        assert_eq!(one[0].sum_rate, MeanStderr { mean: 1.5, stderr: 0.0 });
        assert_eq!(one[0].occupancy.mean, 1.5);
        let two = aggregate(&[rec(0, 1.0), rec(1, 3.0)]).unwrap();
        assert_eq!(two[0].sum_rate, MeanStderr { mean: 2.0, stderr: 1.0 });

        let mut many: Vec<TrialRecord> = (0..20).map(|t| rec(t, 0.1 * t as f64 + 1.0 / 3.0)).collect();
        let a = aggregate(&many).unwrap();
        many.reverse();
        many.swap(3, 11);
        assert_eq!(a, aggregate(&many).unwrap());

        let mut bad = rec(0, 1.0);
        bad.converged = false;
        assert!(matches!(aggregate(&[bad]), Err(Error::EmptySummary { excluded: 1 })));
    }

    #[test]
    fn zero_delta_solutions_coincide() {
        let setup = TrialSetup::new(ChannelGenSpec::new(2, 4, 7), 8);
        let recs = run_trial(&setup, 0, &[0.0]).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.sum_rate_true == recs[0].sum_rate_true));
    }

    #[test]
    fn run_trials_is_deterministic() {
        let setup = TrialSetup::new(ChannelGenSpec::new(3, 4, 7), 8);
        let a = run_trials(&setup, &[0.0, 0.3], 6).unwrap();
        let b = run_trials(&setup, &[0.0, 0.3], 6).unwrap();
        assert_eq!(a.len(), 36);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_trials_csv(&a, &mut x).unwrap();
        write_trials_csv(&b, &mut y).unwrap();
        assert_eq!(x, y);
        let serial: Vec<TrialRecord> = (0..6).flat_map(|t| run_trial(&setup, t, &[0.0, 0.3]).unwrap()).collect();
        assert_eq!(a, serial);
    }

    #[test]
    fn condition_instances_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (q, eps) in [(2, 0.1), (3, 0.2), (4, 0.05)] {
            let (ch, cfg) = random_condition_instance(&mut rng, q, 8, eps).unwrap();
            assert!(check_conditions(&ch, &cfg, DomainChoice::Estimated, WeightChoice::Ones).unwrap().theorem1_holds);
        }
        assert!(random_condition_instance(&mut rng, 3, 4, 0.6).is_err());
    }
}
