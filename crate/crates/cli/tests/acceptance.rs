//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustwf::conditions::{
    build_e, check_conditions, empirical_contraction_check, spectral_radius, DomainChoice, WeightChoice,
};
use robustwf::experiment::random_condition_instance;
use robustwf::solver::{default_initial_profile, fixed_point_residual, solve, Schedule, SolverOptions};
use robustwf::twouser::{
    antisym_sum_rate_at, alpha_crit, classify_frequency_sets, dense_oracle_gap, interior_dp_deps, interior_p,
    partition_derivative, partition_finite_difference, AntiSymSystem,
};
use robustwf::waterfill::random_feasible_profile;
use robustwf::{ChannelSet, GameConfig, PowerProfile};
use robustwf_cli::{run, Cli, Status};

const BIN: &str = env!("CARGO_BIN_EXE_robustwf");

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn opts(tol: f64) -> SolverOptions {
    SolverOptions {
        tol,
        max_iters: 200_000,
        record_trajectory: false,
    }
}

fn solve_from(ch: &ChannelSet, cfg: &GameConfig, init: &PowerProfile, s: &Schedule, tol: f64) -> Result<PowerProfile, String> {
    let res = solve(ch, cfg, init, s, &opts(tol)).map_err(|e| e.to_string())?;
    ensure(res.converged, || format!("{s} did not converge in {} rounds", res.iterations))?;
    Ok(res.profile)
}

fn solve_default(ch: &ChannelSet, cfg: &GameConfig, tol: f64) -> Result<PowerProfile, String> {
    let init = default_initial_profile(cfg).map_err(|e| e.to_string())?;
    solve_from(ch, cfg, &init, &Schedule::gauss_seidel(), tol)
}

/// Random instance satisfying the uniqueness condition, with `Q`, `N` and a
/// uniform bound drawn from the given ranges.
fn random_instance(rng: &mut ChaCha8Rng, i: usize, with_eps: bool) -> (ChannelSet, GameConfig) {
    let users = [2, 3, 4][i % 3];
    let freqs = [4, 8, 16][(i / 3) % 3];
    let eps = if with_eps {
        rng.gen_range(0.0..0.4 / (users - 1) as f64)
    } else {
        0.0
    };
    random_condition_instance(rng, users, freqs, eps).expect("instance")
}

/// Runs the command line in-process and returns (status, stdout).
fn cli(args: &[&str]) -> (Status, String) {
    let parsed = Cli::try_parse_from(std::iter::once("robustwf").chain(args.iter().copied())).expect("valid arguments");
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let status = run(parsed, &mut out, &mut err);
    (status, String::from_utf8(out).unwrap() + &String::from_utf8(err).unwrap())
}

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str) -> Self {
        let mut lines = text.lines().filter(|l| l.contains(','));
        let header = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> Vec<&str> {
        let i = self.header.iter().position(|h| h == name).expect("column");
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    fn num(&self, name: &str) -> Vec<f64> {
        self.col(name).iter().map(|v| v.parse().expect("number")).collect()
    }
}

/// Classical iterative waterfilling with a bisected water level.
fn classical_iwf(ch: &ChannelSet, cfg: &GameConfig) -> Vec<Vec<f64>> {
    let (users, n) = (ch.users(), ch.freqs());
    let mut p: Vec<Vec<f64>> = (0..users).map(|q| vec![cfg.power(q) / n as f64; n]).collect();
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for q in 0..users {
            let level: Vec<f64> = (0..n)
                .map(|k| ch.sigma2(q, k) + (0..users).filter(|&r| r != q).map(|r| ch.f(r, q, k) * p[r][k]).sum::<f64>())
                .collect();
            let alloc = |mu: f64| -> Vec<f64> {
                level.iter().zip(cfg.pmax(q)).map(|(l, m)| (mu - l).clamp(0.0, *m)).collect()
            };
            let (mut lo, mut hi) = (0.0, level.iter().cloned().fold(0.0, f64::max) + cfg.power(q));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if alloc(mid).iter().sum::<f64>() < cfg.power(q) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let new = alloc(0.5 * (lo + hi));
            change = new.iter().zip(&p[q]).map(|(a, b)| (a - b).abs()).fold(change, f64::max);
            p[q] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    p
}

fn fixed_point_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (ch, cfg) = random_instance(&mut rng, i, true);
        let p = solve_default(&ch, &cfg, 1e-10)?;
        worst = worst.max(fixed_point_residual(&ch, &cfg, &p).map_err(|e| e.to_string())?);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-8, || format!("residual {worst:e} > 1e-8"))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("100 instances, max residual {worst:.2e}, {secs:.2}s"))
}

fn uniqueness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (ch, cfg) = random_instance(&mut rng, i, true);
        let reference = solve_default(&ch, &cfg, 1e-12)?;
        let schedules = [
            Schedule::jacobi(),
            Schedule::gauss_seidel(),
            Schedule::random_async(0.5, 2, i as u64).map_err(|e| e.to_string())?,
        ];
        for _ in 0..10 {
            let init = random_feasible_profile(&mut rng, &cfg).map_err(|e| e.to_string())?;
            for s in &schedules {
                let p = solve_from(&ch, &cfg, &init, s, 1e-12)?;
                worst = worst.max(p.max_abs_diff(&reference));
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("20 instances x 10 starts x 3 schedules, max deviation {worst:.2e}"))
}

fn classical_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (ch, cfg) = random_instance(&mut rng, i, false);
        let p = solve_default(&ch, &cfg, 1e-14)?;
        let oracle = classical_iwf(&ch, &cfg);
        for (q, row) in oracle.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                worst = worst.max((p.get(q, k) - v).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("50 instances, max deviation {worst:.2e}"))
}

fn closed_form() -> Outcome {
    let solver_p = |sys: &AntiSymSystem| -> Result<f64, String> {
        Ok(solve_default(&sys.channels(), &sys.config(), 1e-14)?.get(0, 0))
    };
    let (sigma2, h) = (0.1, 1e-4);
    let (mut checked, mut skipped) = (0, 0);
    let (mut worst_p, mut worst_d): (f64, f64) = (0.0, 0.0);
    for alpha in [0.1, 0.2, 0.3] {
        for m in [1.5, 2.0, 3.0] {
            for eps in [0.0, 0.05, 0.1] {
                let sys = AntiSymSystem::new(alpha, m, sigma2, eps).map_err(|e| e.to_string())?;
                let Ok(p) = interior_p(&sys) else {
                    skipped += 1;
                    continue;
                };
                let at = |e: f64| solver_p(&sys.with_eps(e).map_err(|e| e.to_string())?);
                worst_p = worst_p.max((solver_p(&sys)? - p).abs());
                let fd = if eps >= h {
                    (at(eps + h)? - at(eps - h)?) / (2.0 * h)
                } else {
                    (-3.0 * at(eps)? + 4.0 * at(eps + h)? - at(eps + 2.0 * h)?) / (2.0 * h)
                };
                let exact = interior_dp_deps(&sys).map_err(|e| e.to_string())?;
                worst_d = worst_d.max((fd - exact).abs() / exact.abs());
                checked += 1;
            }
        }
    }
    ensure(worst_p <= 1e-8, || format!("power deviation {worst_p:e}"))?;
    ensure(worst_d <= 1e-6, || format!("derivative relative deviation {worst_d:e}"))?;
    ensure(checked >= 20, || format!("only {checked} interior instances"))?;
    Ok(format!(
        "{checked} interior instances ({skipped} outside the interior), power dev {worst_p:.1e}, dp/deps rel dev {worst_d:.1e}"
    ))
}

fn critical_coupling() -> Outcome {
    let mut details = Vec::new();
    for m in [1.5, 2.0, 3.0] {
        for sigma2 in [0.1, 1.0] {
            let (s, m_s) = (sigma2.to_string(), m.to_string());
            let mut steps = 50;
            let (table, poa_dev) = loop {
                let steps_s = steps.to_string();
                let (status, out) = cli(&[
                    "two-user", "--sigma2", &s, "--alpha", "crit", "--m", &m_s, "--eps-grid", "0:0.1:0.02",
                    "--bruteforce-steps", &steps_s,
                ]);
                ensure(status == Status::Success, || format!("two-user exited with {status:?}: {out}"))?;
                let table = Table::parse(&out);
                let dev = table.num("poa_vs_bruteforce").iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max);
                if dev <= 1e-6 || steps >= 1600 {
                    break (table, dev);
                }
                steps *= 2;
            };
            ensure(table.col("regime").iter().all(|r| *r != "outside_interior"), || {
                format!("m={m}, sigma2={sigma2}: grid leaves the interior")
            })?;
            let rates = table.num("sum_rate");
            let spread = rates.iter().cloned().fold(f64::MIN, f64::max) - rates.iter().cloned().fold(f64::MAX, f64::min);
            ensure(spread < 1e-8, || format!("m={m}, sigma2={sigma2}: sum-rate spread {spread:e} over eps"))?;
            let a = alpha_crit(m, sigma2);
            let forced = (0..9)
                .map(|i| antisym_sum_rate_at(a, m, sigma2, 0.55 + 0.05 * i as f64))
                .map(|v| (v - rates[0]).abs())
                .fold(0.0, f64::max);
            ensure(forced < 1e-8, || format!("m={m}, sigma2={sigma2}: forced-allocation spread {forced:e}"))?;
            ensure(poa_dev <= 1e-6, || format!("m={m}, sigma2={sigma2}: |PoA - 1| = {poa_dev:e} at {steps} steps"))?;
            details.push(format!("{spread:.0e}/{poa_dev:.0e}@{steps}"));
        }
    }
    Ok(format!("6 systems, eps spread / |PoA-1| @ grid steps: {}", details.join(" ")))
}

fn monotone_in_eps(sigma2: &str, alpha: &str, grid: &str, increasing: bool) -> Result<usize, String> {
    let (status, out) = cli(&["two-user", "--sigma2", sigma2, "--alpha", alpha, "--m", "2", "--eps-grid", grid]);
    ensure(status == Status::Success, || format!("two-user exited with {status:?}"))?;
    let table = Table::parse(&out);
    let rates: Vec<f64> = table
        .num("sum_rate")
        .into_iter()
        .zip(table.col("regime"))
        .filter(|(_, r)| *r != "outside_interior")
        .map(|(s, _)| s)
        .collect();
    ensure(rates.len() >= 5, || format!("only {} interior rows", rates.len()))?;
    for w in rates.windows(2) {
        let ok = if increasing { w[1] > w[0] } else { w[1] < w[0] };
        ensure(ok, || format!("sigma2={sigma2}: sum-rate {} then {}", w[0], w[1]))?;
    }
    Ok(rates.len())
}

fn interference_trends() -> Outcome {
    let high = monotone_in_eps("1e-3", "0.4", "0:0.19:0.01", true)?;
    let low = monotone_in_eps("10", "0.01", "0:0.5:0.05", false)?;
    Ok(format!("high interference increasing over {high} points, low interference decreasing over {low} points"))
}

fn two_user_instance(rng: &mut ChaCha8Rng, n: usize) -> (ChannelSet, GameConfig) {
    let f = vec![
        vec![vec![0.0; n], (0..n).map(|_| rng.gen_range(0.0..0.6)).collect()],
        vec![(0..n).map(|_| rng.gen_range(0.0..0.6)).collect(), vec![0.0; n]],
    ];
    let sigma2 = (0..2).map(|_| (0..n).map(|_| rng.gen_range(0.02..0.4)).collect()).collect();
    let ch = ChannelSet::new(f, sigma2).expect("channels");
    (ch, GameConfig::uniform(2, n, 1.0, 1.0, 0.05).expect("game"))
}

fn partition_derivative_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (mut worst_rel, mut worst_gap): (f64, f64) = (0.0, 0.0);
    let mut skipped = 0;
    for n in [8, 32] {
        let mut accepted = 0;
        while accepted < 10 {
            ensure(skipped < 200, || "too many instances near a partition boundary".into())?;
            let (ch, cfg) = two_user_instance(&mut rng, n);
            let eq = solve_default(&ch, &cfg, 1e-14)?;
            let Ok(sys) = classify_frequency_sets(&ch, &cfg, &eq) else {
                skipped += 1;
                continue;
            };
            let fd = partition_finite_difference(&ch, &cfg, 1e-5, 1.0).map_err(|e| e.to_string())?;
            if sys.near_boundary.iter().any(|b| *b) || !fd.same_partition || sys.d_ol.is_empty() {
                skipped += 1;
                continue;
            }
            let an = partition_derivative(&sys, 1.0).map_err(|e| e.to_string())?;
            for k in 0..n {
                let rel = (an.dj[k] - fd.dj[k]).abs() / an.dj[k].abs().max(1e-12);
                worst_rel = worst_rel.max(rel);
            }
            worst_gap = worst_gap.max(dense_oracle_gap(&sys).map_err(|e| e.to_string())?);
            accepted += 1;
        }
    }
    ensure(worst_rel <= 1e-4, || format!("finite-difference relative deviation {worst_rel:e}"))?;
    ensure(worst_gap <= 1e-10, || format!("dense-solve gap {worst_gap:e}"))?;
    Ok(format!(
        "20 instances ({skipped} skipped near boundaries), rel dev {worst_rel:.1e}, dense gap {worst_gap:.1e}"
    ))
}

fn large_n_partition_sign() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let (mut overlap_bins, mut flagged_violations) = (0, 0);
    let mut min_dj = f64::INFINITY;
    for _ in 0..50 {
        let eps = rng.gen_range(0.01..0.3);
        let (ch, cfg) = random_condition_instance(&mut rng, 2, 128, eps).map_err(|e| e.to_string())?;
        let eq = solve_default(&ch, &cfg, 1e-14)?;
        let sys = classify_frequency_sets(&ch, &cfg, &eq).map_err(|e| format!("classification failed: {e}"))?;
        let d = partition_derivative(&sys, cfg.power(0)).map_err(|e| e.to_string())?;
        overlap_bins += sys.d_ol.len();
        for k in 0..128 {
            if d.dj[k] < -1e-6 {
                ensure(d.near_boundary[k], || format!("bin {k}: dJ/deps = {:e} on an unflagged bin", d.dj[k]))?;
                flagged_violations += 1;
            } else if sys.d_ol.contains(&k) {
                min_dj = min_dj.min(d.dj[k]);
            }
        }
    }
    ensure(overlap_bins > 0, || "no shared bins to test".into())?;
    Ok(format!(
        "50 instances, {overlap_bins} shared bins, min shared-bin dJ/deps {min_dj:.1e}, {flagged_violations} flagged exceptions"
    ))
}

fn contraction_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut worst_slack = f64::INFINITY;
    for i in 0..10 {
        let (ch, cfg) = random_instance(&mut rng, i, true);
        let report = check_conditions(&ch, &cfg, DomainChoice::Full, WeightChoice::Ones).map_err(|e| e.to_string())?;
        let w = vec![1.0; ch.users()];
        let ratio = empirical_contraction_check(&ch, &cfg, 1000, i as u64, &w).map_err(|e| e.to_string())?;
        ensure(ratio <= report.contraction_modulus + 1e-9, || {
            format!("instance {i}: ratio {ratio} > modulus {}", report.contraction_modulus)
        })?;
        worst_slack = worst_slack.min(report.contraction_modulus - ratio);
    }
    Ok(format!("10 instances x 1000 pairs, min slack {worst_slack:.2e}"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).expect("write config");
    path.to_str().unwrap().to_string()
}

fn uniform_bound_radius() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in 2..=8 {
        for eps in [0.0, 0.01, 0.05, 0.1, 0.125, 0.2, 0.3, 0.5, 1.0] {
            let cfg = GameConfig::uniform(q, 3, 1.0, 1.0, eps).map_err(|e| e.to_string())?;
            let rho = spectral_radius(&build_e(&cfg)).map_err(|e| e.to_string())?;
            worst = worst.max((rho - eps * (q as f64 - 1.0)).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("radius deviation {worst:e}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    for q in 2..=8usize {
        let edge = 1.0 / (q - 1) as f64;
        let above = [(edge * 1e12).ceil() / 1e12, 0.6, 1.0, 2.5];
        let below = ((edge * 1e12).ceil() - 1.0) / 1e12;
        let failing = above.into_iter().filter(|e| e * (q - 1) as f64 >= 1.0);
        for (eps, expected) in failing.map(|e| (e, 3)).chain([(below, 0)]) {
            let zero = format!("[channels]\nusers {q}\nfreqs 2\n[game]\neps all {eps}\n");
            let (code, _) = binary(&["check", &write_config(dir.path(), "zero.conf", &zero)]);
            ensure(code == expected, || format!("Q={q}, eps={eps}: check exited {code}, expected {expected}"))?;
            runs += 1;
            if expected == 3 {
                let gen = format!("[generate]\nusers {q}\nfreqs 4\nseed {q}\n[game]\neps all {eps}\n");
                let (code, _) = binary(&["check", &write_config(dir.path(), "gen.conf", &gen)]);
                ensure(code == 3, || format!("Q={q}, eps={eps}, random channels: check exited {code}"))?;
                runs += 1;
            }
        }
    }
    Ok(format!("radius deviation {worst:.1e} over Q=2..8; {runs} check runs with the expected exit code"))
}

fn monte_carlo_trends() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let start = Instant::now();
    let (code, stdout) = binary(&[
        "experiment", "--users", "3", "--freqs", "16", "--delta-grid", "0:0.6:0.2", "--trials", "500", "--seed", "0",
        "--out", out,
    ]);
    let secs = start.elapsed().as_secs_f64();
    ensure(code == 0, || format!("experiment exited {code}"))?;
    ensure(secs < 600.0, || format!("took {secs:.0}s"))?;
    let summary = Table::parse(&fs::read_to_string(dir.path().join("summary.csv")).map_err(|e| e.to_string())?);
    let kinds = summary.col("kind");
    let pick = |kind: &str, col: &str| -> Vec<f64> {
        summary.num(col).into_iter().zip(&kinds).filter(|(_, k)| **k == kind).map(|(v, _)| v).collect()
    };
    let (robust_rate, nominal_rate) = (pick("robust", "sum_rate_mean"), pick("nominal", "sum_rate_mean"));
    let occupancy = pick("robust", "occupancy_mean");
    let iterations = pick("robust", "iterations_mean");
    ensure(robust_rate.len() == 4, || "expected four delta rows per kind".into())?;
    let mut ts = Vec::new();
    for (i, delta) in ["0.2", "0.4", "0.6"].iter().enumerate() {
        let key = format!("t_robust_vs_nominal[delta={delta}]=");
        let t: f64 = stdout
            .lines()
            .find_map(|l| l.strip_prefix(&key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("missing {key}"))?;
        ensure(robust_rate[i + 1] >= nominal_rate[i + 1] && t > 2.0, || {
            format!("delta={delta}: robust {} vs nominal {}, t={t}", robust_rate[i + 1], nominal_rate[i + 1])
        })?;
        ts.push(format!("{t:.1}"));
    }
    for w in occupancy.windows(2) {
        ensure(w[1] < w[0], || format!("robust occupancy {occupancy:?} not decreasing"))?;
    }
    for w in iterations.windows(2) {
        ensure(w[1] >= w[0], || format!("robust iterations {iterations:?} decreasing"))?;
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    Ok(format!(
        "t = {}, occupancy {}, iterations {}, {secs:.1}s",
        ts.join("/"),
        fmt(&occupancy),
        fmt(&iterations)
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let config = write_config(
        d,
        "game.conf",
        "[generate]\nusers 3\nfreqs 8\nseed 4\n[game]\neps all 0.1\n[solver]\nschedule random_async\nseed 9\n",
    );
    let mut compared = 0;
    let read = |p: &Path| fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    for threads in ["1", "2"] {
        for run in ["a", "b"] {
            let sub = d.join(format!("{threads}{run}"));
            fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
            let s = |name: &str| sub.join(name).to_str().unwrap().to_string();
            let runs: [Vec<String>; 3] = [
                ["solve", &config, "--out", &s("profile.csv"), "--trajectory", &s("trajectory.csv")]
                    .map(String::from)
                    .to_vec(),
                ["two-user", "--sigma2", "0.1", "--alpha", "0.2", "--eps-grid", "0:0.1:0.02", "--out", &s("two_user.csv")]
                    .map(String::from)
                    .to_vec(),
                ["experiment", "--trials", "20", "--freqs", "8", "--seed", "5", "--threads", threads, "--out", &s("exp")]
                    .map(String::from)
                    .to_vec(),
            ];
            for args in &runs {
                let args: Vec<&str> = args.iter().map(String::as_str).collect();
                let (code, _) = binary(&args);
                ensure(code == 0, || format!("{} exited {code}", args[0]))?;
            }
        }
    }
    let files = ["profile.csv", "trajectory.csv", "two_user.csv", "exp/trials.csv", "exp/summary.csv"];
    for dir_name in ["1b", "2a", "2b"] {
        for f in files {
            let (a, b) = (read(&d.join("1a").join(f))?, read(&d.join(dir_name).join(f))?);
            ensure(a == b, || format!("{f} differs between run 1a and {dir_name}"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} CSV comparisons byte-identical (reruns and thread counts)"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("fixed-point correctness", fixed_point_correctness),
        ("uniqueness across schedules and starts", uniqueness),
        ("classical waterfilling reduction", classical_reduction),
        ("two-user closed form and derivative", closed_form),
        ("critical coupling: flat sum-rate, efficient equilibrium", critical_coupling),
        ("interference-regime trends in eps", interference_trends),
        ("partition derivative vs finite differences", partition_derivative_check),
        ("partition derivative sign for large N", large_n_partition_sign),
        ("contraction bound", contraction_bound),
        ("uniform-bound radius and check exit code", uniform_bound_radius),
        ("Monte-Carlo trends", monte_carlo_trends),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
