use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use robustwf::conditions::{check_conditions, DomainChoice, WeightChoice};
use robustwf::csv::{fmt_f64, write_row};
use robustwf::experiment::{
    aggregate, paired_t_statistic, run_trials, splitmix64, write_summary_csv, write_trials_csv, ChannelGenSpec,
    SolutionKind, TrialSetup,
};
use robustwf::metrics::social_optimum_bruteforce;
use robustwf::rates::{price_of_anarchy, sum_rate};
use robustwf::solver::{default_initial_profile, solve, write_trajectory_csv, EquilibriumResult, Schedule, SolverOptions};
use robustwf::twouser::{alpha_crit, interference_regime, interior_p, AntiSymSystem};
use robustwf::Error;

use crate::args::{Alpha, CheckArgs, Cli, Command, Domains, ExperimentArgs, ExperimentSchedule, SolveArgs, TwoUserArgs, Weights};
use crate::config::{build_schedule, RunConfig};
use crate::grid::parse_grid;
use crate::{CliError, Status};

type Result<T> = std::result::Result<T, CliError>;

/// Stream used to derive the uncertainty seed of `experiment` from `--seed`.
const UNCERTAINTY_STREAM: u64 = 0x756e_6365_7274_6169;

/// Largest number of rounds the two-user table allows the solver.
const TWO_USER_MAX_ITERS: usize = 100_000;

/// Runs a parsed command; errors are reported on `err` and mapped to a status.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Status {
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out, err),
        Command::Check(a) => cmd_check(&a, out),
        Command::TwoUser(a) => cmd_two_user(&a, out),
        Command::Experiment(a) => cmd_experiment(&a, out),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e}");
        e.status()
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

/// Writes a file through `body`, attributing I/O errors to `path`.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_profile_csv(res: &EquilibriumResult, w: &mut dyn Write) -> std::io::Result<()> {
    write_row(w, &["user", "frequency", "power", "mu"])?;
    for q in 0..res.profile.users() {
        for k in 0..res.profile.freqs() {
            write_row(
                w,
                &[
                    (q + 1).to_string(),
                    (k + 1).to_string(),
                    fmt_f64(res.profile.get(q, k)),
                    fmt_f64(res.mu[q]),
                ],
            )?;
        }
    }
    Ok(())
}

fn cmd_solve<'a>(args: &SolveArgs, out: &'a mut dyn Write, err: &'a mut dyn Write) -> Result<Status> {
    let rc = RunConfig::from_path(&args.config)?;
    let ch = rc.channel_set()?;
    let base = rc.schedule;
    let kind = args.schedule.unwrap_or(base.kind);
    let same = kind == base.kind;
    let schedule = build_schedule(
        kind,
        args.seed.unwrap_or(base.seed),
        args.update_probability.or(same.then_some(base.update_probability)),
        args.max_staleness.or(same.then_some(base.max_staleness)),
    )?;
    let opts = SolverOptions {
        tol: args.tol.unwrap_or(rc.opts.tol),
        max_iters: args.max_iters.unwrap_or(rc.opts.max_iters),
        record_trajectory: args.trajectory.is_some(),
    };
    let init = default_initial_profile(&rc.game)?;
    let res = solve(&ch, &rc.game, &init, &schedule, &opts)?;

    let summary = match &args.out {
        Some(path) => {
            write_file(path, |w| write_profile_csv(&res, w))?;
            out
        }
        None => {
            write_profile_csv(&res, out).map_err(stdout_err)?;
            err
        }
    };
    if let (Some(path), Some(steps)) = (&args.trajectory, &res.trajectory) {
        write_file(path, |w| write_trajectory_csv(steps, w))?;
    }
    writeln!(
        summary,
        "converged={}\niterations={}\nresidual={:e}\nschedule={}",
        res.converged, res.iterations, res.residual, res.schedule
    )
    .map_err(stdout_err)?;
    Ok(if res.converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<Status> {
    let rc = RunConfig::from_path(&args.config)?;
    let ch = rc.channel_set()?;
    let domains = match args.domains {
        Domains::Estimated => DomainChoice::Estimated,
        Domains::Full => DomainChoice::Full,
    };
    let weights = match args.weights {
        Weights::Ones => WeightChoice::Ones,
        Weights::Perron => WeightChoice::Perron,
    };
    let report = check_conditions(&ch, &rc.game, domains, weights)?;
    write!(out, "{report}").map_err(stdout_err)?;
    Ok(if report.theorem1_holds {
        Status::Success
    } else {
        Status::ConditionFailed
    })
}

/// One row of the two-user table.
struct TwoUserRow {
    eps: f64,
    p_closed_form: f64,
    p_solver: f64,
    sum_rate: f64,
    poa: f64,
    regime: String,
    converged: bool,
}

fn two_user_rows(args: &TwoUserArgs) -> Result<Vec<TwoUserRow>> {
    let grid = parse_grid(&args.eps_grid).map_err(|e| CliError::Usage(format!("--eps-grid: {e}")))?;
    let alpha = match args.alpha {
        Alpha::Crit => alpha_crit(args.m, args.sigma2),
        Alpha::Value(a) => a,
    };
    let base = AntiSymSystem::new(alpha, args.m, args.sigma2, 0.0)?;
    let (ch, opts) = (
        base.channels(),
        SolverOptions {
            tol: args.tol,
            max_iters: TWO_USER_MAX_ITERS,
            record_trajectory: false,
        },
    );
    let optimum = social_optimum_bruteforce(&ch, &base.config(), args.bruteforce_steps)?;
    grid.into_iter()
        .map(|eps| {
            let sys = base.with_eps(eps)?;
            let cfg = sys.config();
            let res = solve(&ch, &cfg, &default_initial_profile(&cfg)?, &Schedule::gauss_seidel(), &opts)?;
            let s = sum_rate(&ch, &res.profile)?;
            let closed = interior_p(&sys);
            Ok(TwoUserRow {
                eps,
                p_closed_form: closed.as_ref().copied().unwrap_or(f64::NAN),
                p_solver: res.profile.get(0, 0),
                sum_rate: s,
                poa: price_of_anarchy(optimum.sum_rate, s).unwrap_or(f64::NAN),
                regime: match closed {
                    Ok(p) => interference_regime(&sys, p).to_string(),
                    Err(Error::Regime(_)) => "outside_interior".into(),
                    Err(e) => return Err(e.into()),
                },
                converged: res.converged,
            })
        })
        .collect()
}

fn write_two_user_csv(rows: &[TwoUserRow], w: &mut dyn Write) -> std::io::Result<()> {
    write_row(
        w,
        &["eps", "p_closed_form", "p_solver", "sum_rate", "poa_vs_bruteforce", "regime", "converged"],
    )?;
    for r in rows {
        write_row(
            w,
            &[
                fmt_f64(r.eps),
                fmt_f64(r.p_closed_form),
                fmt_f64(r.p_solver),
                fmt_f64(r.sum_rate),
                fmt_f64(r.poa),
                r.regime.clone(),
                r.converged.to_string(),
            ],
        )?;
    }
    Ok(())
}

fn cmd_two_user(args: &TwoUserArgs, out: &mut dyn Write) -> Result<Status> {
    let rows = two_user_rows(args)?;
    match &args.out {
        Some(path) => write_file(path, |w| write_two_user_csv(&rows, w))?,
        None => write_two_user_csv(&rows, out).map_err(stdout_err)?,
    }
    Ok(Status::Success)
}

fn cmd_experiment(args: &ExperimentArgs, out: &mut dyn Write) -> Result<Status> {
    let deltas = parse_grid(&args.delta_grid).map_err(|e| CliError::Usage(format!("--delta-grid: {e}")))?;
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let gen = ChannelGenSpec::new(args.users, args.freqs, args.seed);
    let mut setup = TrialSetup::new(gen, splitmix64(args.seed ^ UNCERTAINTY_STREAM));
    setup.power = args.power;
    setup.pmax = args.pmax;
    setup.mapping = args.bounds;
    setup.schedule = match args.schedule {
        ExperimentSchedule::Jacobi => Schedule::jacobi(),
        ExperimentSchedule::GaussSeidel => Schedule::gauss_seidel(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    let records = pool.install(|| run_trials(&setup, &deltas, args.trials))?;

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_file(&args.out.join("trials.csv"), |w| write_trials_csv(&records, w))?;
    let summary = match aggregate(&records) {
        Ok(rows) => rows,
        Err(e @ Error::EmptySummary { .. }) => {
            writeln!(out, "error: {e}").map_err(stdout_err)?;
            return Ok(Status::NotConverged);
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&args.out.join("summary.csv"), |w| write_summary_csv(&summary, w))?;

    let excluded = records.iter().filter(|r| !r.included()).count();
    writeln!(out, "records={}\nexcluded={excluded}", records.len()).map_err(stdout_err)?;
    for &delta in &deltas {
        let t = paired_t_statistic(&records, delta, SolutionKind::Robust, SolutionKind::Nominal);
        let t = t.map_or_else(|| "na".to_string(), |t| format!("{t:e}"));
        writeln!(out, "t_robust_vs_nominal[delta={delta}]={t}").map_err(stdout_err)?;
    }
    Ok(Status::Success)
}
