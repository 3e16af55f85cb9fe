//! Line-oriented run configuration.
//!
//! ```text
//! # two users, two bins
//! [channels]
//! users 2
//! freqs 2
//! F 1 2 1 0.4        # source r, destination q, bin k (one-based), value
//! F 1 2 2 0.8
//! sigma2 all 0.5     # sigma2 <q|all> [<k|all>] value
//!
//! [game]
//! power all 1        # power <q|all> value
//! pmax all 1         # pmax <q|all> [<k|all>] value
//! eps all 0.1        # eps <q|all> [<k|all>] value
//!
//! [solver]
//! schedule gauss_seidel
//! tol 1e-10
//! ```
//!
//! Exactly one of `[channels]` and `[generate]` must be present. Entries are
//! applied in file order, so later lines override earlier ones. Unset cross
//! gains are zero, unset noise levels one; the game defaults to unit budgets,
//! unit masks and no uncertainty.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use robustwf::experiment::{generate_channels, ChannelGenSpec};
use robustwf::solver::{Schedule, ScheduleKind, SolverOptions};
use robustwf::{ChannelSet, GameConfig};

/// Parse error, anchored to a one-based line when one applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Explicit(ChannelSet),
    Generate(ChannelGenSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channels: ChannelSource,
    pub game: GameConfig,
    pub schedule: Schedule,
    pub opts: SolverOptions,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> std::result::Result<Self, crate::CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| crate::CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse().map_err(|source| crate::CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Explicit channels, or the channels drawn from the generation spec.
    pub fn channel_set(&self) -> robustwf::Result<ChannelSet> {
        match &self.channels {
            ChannelSource::Explicit(ch) => Ok(ch.clone()),
            ChannelSource::Generate(spec) => generate_channels(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Channels,
    Generate,
    Game,
    Solver,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "channels" => Some(Section::Channels),
            "generate" => Some(Section::Generate),
            "game" => Some(Section::Game),
            "solver" => Some(Section::Solver),
            _ => None,
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Section::Channels => &["users", "freqs", "F", "sigma2"],
            Section::Generate => &["users", "freqs", "seed", "cross_variance", "direct_variance", "noise"],
            Section::Game => &["power", "pmax", "eps"],
            Section::Solver => &["schedule", "seed", "update_probability", "max_staleness", "tol", "max_iters"],
        }
    }
}

#[derive(Debug)]
struct Entry<'a> {
    line: usize,
    key: &'a str,
    args: Vec<&'a str>,
}

#[derive(Debug, Default)]
struct Sections<'a> {
    headers: Vec<(Section, usize)>,
    entries: Vec<(Section, Entry<'a>)>,
}

impl<'a> Sections<'a> {
    fn header(&self, s: Section) -> Option<usize> {
        self.headers.iter().find(|(h, _)| *h == s).map(|(_, l)| *l)
    }

    fn entries(&self, s: Section) -> impl Iterator<Item = &Entry<'a>> {
        self.entries.iter().filter(move |(h, _)| *h == s).map(|(_, e)| e)
    }

    /// Last value of a single-argument key.
    fn scalar<T: FromStr>(&self, s: Section, key: &str) -> Result<Option<(usize, T)>> {
        let mut found = None;
        for e in self.entries(s).filter(|e| e.key == key) {
            if e.args.len() != 1 {
                return Err(ConfigError::at(e.line, format!("'{key}' takes exactly one value")));
            }
            let v = e.args[0]
                .parse()
                .map_err(|_| ConfigError::at(e.line, format!("invalid value '{}' for '{key}'", e.args[0])))?;
            found = Some((e.line, v));
        }
        Ok(found)
    }
}

fn split(text: &str) -> Result<Sections<'_>> {
    let mut out = Sections::default();
    let mut current = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, format!("malformed section header '{content}'")))?
                .trim();
            let s = Section::parse(name).ok_or_else(|| ConfigError::at(line, format!("unknown section '[{name}]'")))?;
            if let Some(prev) = out.header(s) {
                return Err(ConfigError::at(line, format!("section '[{name}]' already opened on line {prev}")));
            }
            out.headers.push((s, line));
            current = Some(s);
            continue;
        }
        let s = current.ok_or_else(|| ConfigError::at(line, "entry outside of any section"))?;
        let mut tokens = content.split_whitespace();
        let key = tokens.next().unwrap_or_default();
        if !s.keys().contains(&key) {
            return Err(ConfigError::at(
                line,
                format!("unknown key '{key}'; expected one of {}", s.keys().join(", ")),
            ));
        }
        let args: Vec<&str> = tokens.collect();
        if args.is_empty() {
            return Err(ConfigError::at(line, format!("'{key}' needs a value")));
        }
        out.entries.push((s, Entry { line, key, args }));
    }
    Ok(out)
}

/// A one-based index or `all`, as a zero-based range.
fn index(token: &str, limit: usize, what: &str, line: usize) -> Result<std::ops::Range<usize>> {
    if token == "all" {
        return Ok(0..limit);
    }
    match token.parse::<usize>() {
        Ok(i) if (1..=limit).contains(&i) => Ok(i - 1..i),
        _ => Err(ConfigError::at(
            line,
            format!("{what} index '{token}' must be 'all' or lie in 1..={limit}"),
        )),
    }
}

fn value(token: &str, line: usize, ok: impl Fn(f64) -> bool, requirement: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| ConfigError::at(line, format!("invalid number '{token}'")))?;
    if !v.is_finite() || !ok(v) {
        return Err(ConfigError::at(line, format!("value {token} must be {requirement}")));
    }
    Ok(v)
}

/// Applies `key <q> [<k>] value` to a users-by-bins table.
fn fill_table(
    table: &mut [Vec<f64>],
    e: &Entry<'_>,
    ok: impl Fn(f64) -> bool,
    requirement: &str,
) -> Result<()> {
    let (users, freqs) = (table.len(), table[0].len());
    let (qs, ks) = match e.args.as_slice() {
        [q, _] => (index(q, users, "user", e.line)?, 0..freqs),
        [q, k, _] => (index(q, users, "user", e.line)?, index(k, freqs, "frequency", e.line)?),
        _ => {
            return Err(ConfigError::at(
                e.line,
                format!("'{}' expects <user|all> [<frequency|all>] <value>", e.key),
            ))
        }
    };
    let v = value(e.args[e.args.len() - 1], e.line, ok, requirement)?;
    for q in qs {
        for k in ks.clone() {
            table[q][k] = v;
        }
    }
    Ok(())
}

fn dimension(sections: &Sections<'_>, s: Section, key: &str, header: usize) -> Result<usize> {
    match sections.scalar::<usize>(s, key)? {
        Some((_, v)) if v > 0 => Ok(v),
        Some((line, _)) => Err(ConfigError::at(line, format!("'{key}' must be positive"))),
        None => Err(ConfigError::at(header, format!("section is missing '{key}'"))),
    }
}

fn parse_channels(sections: &Sections<'_>, header: usize) -> Result<ChannelSet> {
    let s = Section::Channels;
    let users = dimension(sections, s, "users", header)?;
    let freqs = dimension(sections, s, "freqs", header)?;
    let mut f = vec![vec![vec![0.0; freqs]; users]; users];
    let mut sigma2 = vec![vec![1.0; freqs]; users];
    for e in sections.entries(s) {
        match e.key {
            "F" => {
                let [r, q, k, v] = e.args.as_slice() else {
                    return Err(ConfigError::at(e.line, "'F' expects <source> <destination> <frequency> <value>"));
                };
                let rs = index(r, users, "source", e.line)?;
                let qs = index(q, users, "destination", e.line)?;
                let ks = index(k, freqs, "frequency", e.line)?;
                let v = value(v, e.line, |v| v >= 0.0, "nonnegative")?;
                if rs.len() == 1 && rs == qs {
                    return Err(ConfigError::at(e.line, "a user does not interfere with itself"));
                }
                for r in rs {
                    for q in qs.clone().filter(|&q| q != r) {
                        for k in ks.clone() {
                            f[r][q][k] = v;
                        }
                    }
                }
            }
            "sigma2" => fill_table(&mut sigma2, e, |v| v > 0.0, "positive")?,
            _ => {}
        }
    }
    ChannelSet::new(f, sigma2).map_err(|err| ConfigError::at(header, err.to_string()))
}

fn parse_generate(sections: &Sections<'_>, header: usize) -> Result<ChannelGenSpec> {
    let s = Section::Generate;
    let users = dimension(sections, s, "users", header)?;
    let freqs = dimension(sections, s, "freqs", header)?;
    let seed = sections.scalar::<u64>(s, "seed")?.map_or(0, |(_, v)| v);
    let mut spec = ChannelGenSpec::new(users, freqs, seed);
    for (key, slot) in [
        ("cross_variance", &mut spec.cross_variance),
        ("direct_variance", &mut spec.direct_variance),
        ("noise", &mut spec.noise),
    ] {
        if let Some((line, v)) = sections.scalar::<f64>(s, key)? {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::at(line, format!("'{key}' must be positive")));
            }
            *slot = v;
        }
    }
    Ok(spec)
}

fn parse_game(sections: &Sections<'_>, users: usize, freqs: usize) -> Result<GameConfig> {
    let s = Section::Game;
    let mut power = vec![vec![1.0]; users];
    let mut pmax = vec![vec![1.0; freqs]; users];
    let mut eps = vec![vec![0.0; freqs]; users];
    for e in sections.entries(s) {
        match e.key {
            "power" => {
                if e.args.len() != 2 {
                    return Err(ConfigError::at(e.line, "'power' expects <user|all> <value>"));
                }
                fill_table(&mut power, e, |v| v > 0.0, "positive")?;
            }
            "pmax" => fill_table(&mut pmax, e, |v| v >= 0.0, "nonnegative")?,
            "eps" => fill_table(&mut eps, e, |v| v >= 0.0, "nonnegative")?,
            _ => {}
        }
    }
    let power = power.into_iter().map(|row| row[0]).collect();
    GameConfig::with_bin_bounds(power, pmax, eps).map_err(|err| match sections.header(s) {
        Some(line) => ConfigError::at(line, err.to_string()),
        None => ConfigError::global(err.to_string()),
    })
}

/// Default per-round update probability of the random asynchronous schedule.
pub const DEFAULT_UPDATE_PROBABILITY: f64 = 0.5;
/// Default largest staleness of the random asynchronous schedule.
pub const DEFAULT_MAX_STALENESS: usize = 1;

/// Schedule of the given kind; the asynchronous parameters only apply to
/// `random_async` and default to `u = 0.5`, `d = 1`.
pub fn build_schedule(
    kind: ScheduleKind,
    seed: u64,
    update_probability: Option<f64>,
    max_staleness: Option<usize>,
) -> robustwf::Result<Schedule> {
    match kind {
        ScheduleKind::RandomAsync => Schedule::random_async(
            update_probability.unwrap_or(DEFAULT_UPDATE_PROBABILITY),
            max_staleness.unwrap_or(DEFAULT_MAX_STALENESS),
            seed,
        ),
        ScheduleKind::Jacobi => Ok(Schedule { seed, ..Schedule::jacobi() }),
        ScheduleKind::GaussSeidel => Ok(Schedule { seed, ..Schedule::gauss_seidel() }),
    }
}

fn parse_solver(sections: &Sections<'_>) -> Result<(Schedule, SolverOptions)> {
    let s = Section::Solver;
    let kind = sections.scalar::<ScheduleKind>(s, "schedule")?;
    let seed = sections.scalar::<u64>(s, "seed")?.map_or(0, |(_, v)| v);
    let u = sections.scalar::<f64>(s, "update_probability")?;
    if let Some((line, u)) = u {
        if !(u > 0.0 && u <= 1.0) {
            return Err(ConfigError::at(line, "'update_probability' must lie in (0, 1]"));
        }
    }
    let d = sections.scalar::<usize>(s, "max_staleness")?;
    let kind = kind.map_or(ScheduleKind::GaussSeidel, |(_, k)| k);
    let schedule = build_schedule(kind, seed, u.map(|(_, v)| v), d.map(|(_, v)| v))
        .map_err(|err| ConfigError::global(err.to_string()))?;
    let mut opts = SolverOptions::default();
    if let Some((line, tol)) = sections.scalar::<f64>(s, "tol")? {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(ConfigError::at(line, "'tol' must be positive"));
        }
        opts.tol = tol;
    }
    if let Some((_, n)) = sections.scalar::<usize>(s, "max_iters")? {
        opts.max_iters = n;
    }
    Ok((schedule, opts))
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self> {
        let sections = split(text)?;
        let channels = match (sections.header(Section::Channels), sections.header(Section::Generate)) {
            (Some(line), None) => ChannelSource::Explicit(parse_channels(&sections, line)?),
            (None, Some(line)) => ChannelSource::Generate(parse_generate(&sections, line)?),
            (Some(_), Some(line)) => {
                return Err(ConfigError::at(line, "[channels] and [generate] are mutually exclusive"))
            }
            (None, None) => return Err(ConfigError::global("missing [channels] or [generate] section")),
        };
        let (users, freqs) = match &channels {
            ChannelSource::Explicit(ch) => (ch.users(), ch.freqs()),
            ChannelSource::Generate(spec) => (spec.users, spec.freqs),
        };
        let game = parse_game(&sections, users, freqs)?;
        let (schedule, opts) = parse_solver(&sections)?;
        Ok(Self {
            channels,
            game,
            schedule,
            opts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_USER: &str = "\
[channels]
users 2
freqs 2
F 1 2 1 0.4
F 1 2 2 0.8
F 2 1 all 0.3
sigma2 all 0.5
sigma2 2 2 0.25

[game]
eps all 0.1
pmax 1 2 0.75
";

    fn parse(text: &str) -> Result<RunConfig> {
        text.parse()
    }

    fn line_of(text: &str) -> Option<usize> {
        parse(text).unwrap_err().line
    }

    #[test]
    fn explicit_tables_fill_in_file_order() {
        let cfg = parse(TWO_USER).unwrap();
        let ChannelSource::Explicit(ch) = &cfg.channels else {
            panic!("expected explicit channels")
        };
        assert_eq!(ch.f_row(0, 1), &[0.4, 0.8]);
        assert_eq!(ch.f_row(1, 0), &[0.3, 0.3]);
        assert_eq!(ch.sigma2_row(1), &[0.5, 0.25]);
        assert_eq!(cfg.game.pmax(0), &[1.0, 0.75]);
        assert_eq!(cfg.game.common_eps(), Some(0.1));
        assert_eq!(cfg.game.powers(), &[1.0, 1.0]);
        assert_eq!(cfg.schedule, Schedule::gauss_seidel());
    }

    #[test]
    fn all_expansion_skips_the_diagonal() {
        let cfg = parse("[channels]\nusers 3\nfreqs 1\nF all all all 0.2\n[game]\npmax all 2\n").unwrap();
        let ch = cfg.channel_set().unwrap();
        for r in 0..3 {
            for q in 0..3 {
                assert_eq!(ch.f(r, q, 0), if r == q { 0.0 } else { 0.2 });
            }
        }
    }

    #[test]
    fn generate_section_and_solver_options() {
        let text = "[generate]\nusers 3\nfreqs 4\nseed 9\n[solver]\nschedule random_async\nseed 5\n\
                    update_probability 0.5\nmax_staleness 2\ntol 1e-9\nmax_iters 7\n";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.channels, ChannelSource::Generate(ChannelGenSpec::new(3, 4, 9)));
        assert_eq!(cfg.schedule.kind, ScheduleKind::RandomAsync);
        assert_eq!((cfg.schedule.seed, cfg.schedule.max_staleness), (5, 2));
        assert_eq!(cfg.schedule.update_probability, 0.5);
        assert_eq!((cfg.opts.tol, cfg.opts.max_iters), (1e-9, 7));
        assert_eq!(cfg.channel_set().unwrap().users(), 3);
    }

    #[test]
    fn errors_point_at_the_offending_line() {
        assert_eq!(line_of("[channels]\nusers 2\nfreqs 2\nF 1 1 1 0.5\n"), Some(4));
        assert_eq!(line_of("[channels]\nusers 2\nfreqs 2\nF 1 3 1 0.5\n"), Some(4));
        assert_eq!(line_of("[channels]\nusers 2\nfreqs 2\nsigma2 all -1\n"), Some(4));
        assert_eq!(line_of("[channels]\nusers 2\nfreqs 2\nbogus 1\n"), Some(4));
        assert_eq!(line_of("users 2\n"), Some(1));
        assert_eq!(line_of("[channels]\nusers 2\n"), Some(1));
        assert_eq!(line_of("[channel]\n"), Some(1));
        assert_eq!(line_of("[channels]\nusers 1\nfreqs 1\n[channels]\n"), Some(4));
        assert_eq!(line_of("[channels]\nusers 1\nfreqs 2\n[solver]\ntol abc\n"), Some(5));
        assert_eq!(line_of("[channels]\nusers 1\nfreqs 2\n[solver]\nschedule fast\n"), Some(5));
        assert_eq!(line_of("[channels]\nusers 1\nfreqs 1\n[generate]\nusers 1\n"), Some(4));
        assert_eq!(line_of(""), None);
    }

    #[test]
    fn infeasible_game_is_reported_at_the_game_header() {
        let text = "[channels]\nusers 1\nfreqs 2\n\n[game]\npower all 5\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.to_string().starts_with("line 5: "));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\n\n[channels]   # trailing\nusers 1\nfreqs 3  # bins\n";
        assert_eq!(parse(text).unwrap().game.freqs(), 3);
    }
}
