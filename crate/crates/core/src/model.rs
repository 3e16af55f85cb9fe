//! Game model: normalized channels, per-user budgets and power profiles.
//!
//! All quantities live in the normalized domain where the direct gain of every
//! link has been absorbed into the noise term: `F[r][q][k]` is the power ratio
//! of the cross gain from transmitter `r` to receiver `q` on bin `k` over the
//! direct gain of link `q`, and `sigma2[q][k]` is the noise power divided by the
//! direct gain. Indices are zero-based throughout the library.
//!
//! Values are validated at construction and immutable afterwards.

use crate::error::{Error, Result};

/// Relative tolerance on the power-sum equality of a feasible profile.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Normalized interference coefficients and noise for `Q` links on `N` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    users: usize,
    freqs: usize,
    // row-major [r][q][k]
    f: Vec<f64>,
    // row-major [q][k]
    sigma2: Vec<f64>,
}

impl ChannelSet {
    /// Builds a channel set from nested tables `f[r][q][k]` and `sigma2[q][k]`.
    ///
    /// The diagonal `f[q][q][*]` must be zero.
    pub fn new(f: Vec<Vec<Vec<f64>>>, sigma2: Vec<Vec<f64>>) -> Result<Self> {
        let users = sigma2.len();
        if users == 0 {
            return Err(Error::Dimension("at least one user is required".into()));
        }
        let freqs = sigma2[0].len();
        if freqs == 0 {
            return Err(Error::Dimension("at least one frequency is required".into()));
        }
        if f.len() != users {
            return Err(Error::Dimension(format!(
                "F has {} source rows for {} users",
                f.len(),
                users
            )));
        }
        let mut flat_f = Vec::with_capacity(users * users * freqs);
        for (r, rows) in f.iter().enumerate() {
            if rows.len() != users {
                return Err(Error::Dimension(format!(
                    "F[{r}] has {} destinations, expected {users}",
                    rows.len()
                )));
            }
            for (q, row) in rows.iter().enumerate() {
                if row.len() != freqs {
                    return Err(Error::Dimension(format!(
                        "F[{r}][{q}] has {} bins, expected {freqs}",
                        row.len()
                    )));
                }
                flat_f.extend_from_slice(row);
            }
        }
        let mut flat_s = Vec::with_capacity(users * freqs);
        for (q, row) in sigma2.iter().enumerate() {
            if row.len() != freqs {
                return Err(Error::Dimension(format!(
                    "sigma2[{q}] has {} bins, expected {freqs}",
                    row.len()
                )));
            }
            flat_s.extend_from_slice(row);
        }
        Self::from_flat(users, freqs, flat_f, flat_s)
    }

    /// Builds a channel set from flat row-major buffers.
    pub fn from_flat(users: usize, freqs: usize, f: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if users == 0 || freqs == 0 {
            return Err(Error::Dimension("empty channel set".into()));
        }
        if f.len() != users * users * freqs || sigma2.len() != users * freqs {
            return Err(Error::Dimension(format!(
                "flat buffers of length {}/{} do not match Q={users}, N={freqs}",
                f.len(),
                sigma2.len()
            )));
        }
        for r in 0..users {
            for q in 0..users {
                for k in 0..freqs {
                    let v = f[(r * users + q) * freqs + k];
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::InvalidValue(format!(
                            "F[{r}][{q}][{k}] = {v} must be finite and nonnegative"
                        )));
                    }
                    if r == q && v != 0.0 {
                        return Err(Error::InvalidValue(format!(
                            "diagonal F[{q}][{q}][{k}] = {v} must be zero"
                        )));
                    }
                }
            }
        }
        if let Some((i, v)) = sigma2
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v <= 0.0)
        {
            return Err(Error::InvalidValue(format!(
                "sigma2[{}][{}] = {v} must be finite and positive",
                i / freqs,
                i % freqs
            )));
        }
        Ok(Self {
            users,
            freqs,
            f,
            sigma2,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    /// Cross coefficient from transmitter `r` into receiver `q` on bin `k`.
    #[inline]
    pub fn f(&self, r: usize, q: usize, k: usize) -> f64 {
        self.f[(r * self.users + q) * self.freqs + k]
    }

    /// The `N` coefficients from `r` into `q`.
    pub fn f_row(&self, r: usize, q: usize) -> &[f64] {
        let start = (r * self.users + q) * self.freqs;
        &self.f[start..start + self.freqs]
    }

    #[inline]
    pub fn sigma2(&self, q: usize, k: usize) -> f64 {
        self.sigma2[q * self.freqs + k]
    }

    pub fn sigma2_row(&self, q: usize) -> &[f64] {
        &self.sigma2[q * self.freqs..(q + 1) * self.freqs]
    }

    /// Returns a copy with every cross coefficient replaced by `map(r, q, k, value)`.
    ///
    /// The diagonal is left at zero.
    pub fn map_cross(&self, mut map: impl FnMut(usize, usize, usize, f64) -> f64) -> Result<Self> {
        let mut f = self.f.clone();
        for r in 0..self.users {
            for q in 0..self.users {
                if r == q {
                    continue;
                }
                for k in 0..self.freqs {
                    let idx = (r * self.users + q) * self.freqs + k;
                    f[idx] = map(r, q, k, f[idx]);
                }
            }
        }
        Self::from_flat(self.users, self.freqs, f, self.sigma2.clone())
    }

    /// Applies the frequency permutation `perm` (new bin `k` is old bin `perm[k]`).
    pub fn permute_freqs(&self, perm: &[usize]) -> Result<Self> {
        check_perm(perm, self.freqs)?;
        let mut f = vec![0.0; self.f.len()];
        let mut s = vec![0.0; self.sigma2.len()];
        for r in 0..self.users {
            for q in 0..self.users {
                for (k, &old) in perm.iter().enumerate() {
                    f[(r * self.users + q) * self.freqs + k] = self.f(r, q, old);
                }
            }
            for (k, &old) in perm.iter().enumerate() {
                s[r * self.freqs + k] = self.sigma2(r, old);
            }
        }
        Self::from_flat(self.users, self.freqs, f, s)
    }
}

/// Per-user power budgets, spectral masks and uncertainty bounds.
///
/// Bounds are stored per user and bin; the usual model with one bound per user
/// is the case of rows constant over frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    power: Vec<f64>,
    pmax: Vec<Vec<f64>>,
    eps: Vec<Vec<f64>>,
}

impl GameConfig {
    /// Validates budgets `power[q] > 0`, masks `pmax[q][k] >= 0` with
    /// `sum_k pmax[q][k] > power[q]`, and bounds `eps[q] >= 0`.
    ///
    /// A zero mask entry marks a bin as permanently unavailable to that user.
    pub fn new(power: Vec<f64>, pmax: Vec<Vec<f64>>, eps: Vec<f64>) -> Result<Self> {
        let freqs = pmax.first().map_or(0, Vec::len);
        let eps = eps.into_iter().map(|e| vec![e; freqs]).collect();
        Self::with_bin_bounds(power, pmax, eps)
    }

    /// Like [`GameConfig::new`] with a separate bound `eps[q][k]` for every
    /// user and bin.
    pub fn with_bin_bounds(power: Vec<f64>, pmax: Vec<Vec<f64>>, eps: Vec<Vec<f64>>) -> Result<Self> {
        let users = power.len();
        if users == 0 {
            return Err(Error::Dimension("at least one user is required".into()));
        }
        if pmax.len() != users || eps.len() != users {
            return Err(Error::Dimension(format!(
                "power/pmax/eps lengths {}/{}/{} disagree",
                users,
                pmax.len(),
                eps.len()
            )));
        }
        let freqs = pmax[0].len();
        for q in 0..users {
            let p = power[q];
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::InvalidValue(format!(
                    "power[{q}] = {p} must be finite and positive"
                )));
            }
            if pmax[q].len() != freqs || freqs == 0 {
                return Err(Error::Dimension(format!(
                    "pmax[{q}] has {} bins, expected {freqs}",
                    pmax[q].len()
                )));
            }
            if let Some(v) = pmax[q].iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidValue(format!(
                    "pmax[{q}] entry {v} must be finite and nonnegative"
                )));
            }
            let total: f64 = pmax[q].iter().sum();
            if total <= p {
                return Err(Error::Infeasible {
                    user: q,
                    reason: format!("mask total {total} does not exceed budget {p}"),
                });
            }
            if eps[q].len() != freqs {
                return Err(Error::Dimension(format!(
                    "eps[{q}] has {} bins, expected {freqs}",
                    eps[q].len()
                )));
            }
            if let Some(e) = eps[q].iter().find(|e| !e.is_finite() || **e < 0.0) {
                return Err(Error::InvalidValue(format!(
                    "eps[{q}] entry {e} must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { power, pmax, eps })
    }

    /// Same budget, flat mask and uncertainty bound for every user.
    pub fn uniform(users: usize, freqs: usize, power: f64, pmax: f64, eps: f64) -> Result<Self> {
        Self::new(
            vec![power; users],
            vec![vec![pmax; freqs]; users],
            vec![eps; users],
        )
    }

    pub fn users(&self) -> usize {
        self.power.len()
    }

    pub fn freqs(&self) -> usize {
        self.pmax[0].len()
    }

    pub fn power(&self, q: usize) -> f64 {
        self.power[q]
    }

    pub fn powers(&self) -> &[f64] {
        &self.power
    }

    pub fn pmax(&self, q: usize) -> &[f64] {
        &self.pmax[q]
    }

    /// Largest bound of user `q` over all bins (its only bound when the bound
    /// does not vary with frequency).
    pub fn eps(&self, q: usize) -> f64 {
        self.eps[q].iter().cloned().fold(0.0, f64::max)
    }

    pub fn eps_at(&self, q: usize, k: usize) -> f64 {
        self.eps[q][k]
    }

    pub fn eps_row(&self, q: usize) -> &[f64] {
        &self.eps[q]
    }

    /// Per-user largest bounds.
    pub fn eps_all(&self) -> Vec<f64> {
        (0..self.users()).map(|q| self.eps(q)).collect()
    }

    /// `Some(eps)` when every user carries the same bound on every bin.
    pub fn common_eps(&self) -> Option<f64> {
        let e0 = self.eps[0][0];
        self.eps.iter().flatten().all(|&e| e == e0).then_some(e0)
    }

    /// Copy with the uncertainty bounds replaced.
    pub fn with_eps(&self, eps: Vec<f64>) -> Result<Self> {
        Self::new(self.power.clone(), self.pmax.clone(), eps)
    }

    /// Copy with every user's bound set to `eps`.
    pub fn with_common_eps(&self, eps: f64) -> Result<Self> {
        self.with_eps(vec![eps; self.users()])
    }

    pub fn permute_freqs(&self, perm: &[usize]) -> Result<Self> {
        check_perm(perm, self.freqs())?;
        let pmax = self
            .pmax
            .iter()
            .map(|row| perm.iter().map(|&old| row[old]).collect())
            .collect();
        let eps = self
            .eps
            .iter()
            .map(|row| perm.iter().map(|&old| row[old]).collect())
            .collect();
        Self::with_bin_bounds(self.power.clone(), pmax, eps)
    }

    /// Fails unless the channel set has the same `Q` and `N`.
    pub fn check_channels(&self, ch: &ChannelSet) -> Result<()> {
        if ch.users() != self.users() || ch.freqs() != self.freqs() {
            return Err(Error::Dimension(format!(
                "channels are {}x{}, game config is {}x{}",
                ch.users(),
                ch.freqs(),
                self.users(),
                self.freqs()
            )));
        }
        Ok(())
    }
}

/// A `Q x N` nonnegative power allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    users: usize,
    freqs: usize,
    p: Vec<f64>,
}

impl PowerProfile {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let users = rows.len();
        if users == 0 || rows[0].is_empty() {
            return Err(Error::Dimension("empty power profile".into()));
        }
        let freqs = rows[0].len();
        if rows.iter().any(|r| r.len() != freqs) {
            return Err(Error::Dimension("ragged power profile".into()));
        }
        Self::from_flat(users, freqs, rows.concat())
    }

    pub fn from_flat(users: usize, freqs: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != users * freqs {
            return Err(Error::Dimension(format!(
                "{} powers for Q={users}, N={freqs}",
                p.len()
            )));
        }
        if let Some((i, v)) = p
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidValue(format!(
                "power p[{}][{}] = {v} must be finite and nonnegative",
                i / freqs,
                i % freqs
            )));
        }
        Ok(Self { users, freqs, p })
    }

    pub fn zeros(users: usize, freqs: usize) -> Self {
        Self {
            users,
            freqs,
            p: vec![0.0; users * freqs],
        }
    }

    /// `P_q / N` on every bin, ignoring masks.
    pub fn uniform(cfg: &GameConfig) -> Self {
        let (users, freqs) = (cfg.users(), cfg.freqs());
        let mut p = Vec::with_capacity(users * freqs);
        for q in 0..users {
            p.extend(std::iter::repeat_n(cfg.power(q) / freqs as f64, freqs));
        }
        Self { users, freqs, p }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    #[inline]
    pub fn get(&self, q: usize, k: usize) -> f64 {
        self.p[q * self.freqs + k]
    }

    pub fn user(&self, q: usize) -> &[f64] {
        &self.p[q * self.freqs..(q + 1) * self.freqs]
    }

    pub(crate) fn user_mut(&mut self, q: usize) -> &mut [f64] {
        &mut self.p[q * self.freqs..(q + 1) * self.freqs]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.p
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.freqs).map(<[f64]>::to_vec).collect()
    }

    /// Replaces user `q`'s row. The row must be nonnegative and finite.
    pub fn set_user(&mut self, q: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.freqs {
            return Err(Error::Dimension(format!(
                "row of {} bins for N={}",
                row.len(),
                self.freqs
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidValue(format!("power {v} for user {q}")));
        }
        self.user_mut(q).copy_from_slice(row);
        Ok(())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &PowerProfile) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Checks masks and the power-sum equality of every user.
    pub fn check_feasible(&self, cfg: &GameConfig) -> Result<()> {
        for q in 0..self.users {
            self.check_user_feasible(cfg, q)?;
        }
        Ok(())
    }

    pub fn check_user_feasible(&self, cfg: &GameConfig, q: usize) -> Result<()> {
        if self.users != cfg.users() || self.freqs != cfg.freqs() {
            return Err(Error::Dimension(format!(
                "profile is {}x{}, game config is {}x{}",
                self.users,
                self.freqs,
                cfg.users(),
                cfg.freqs()
            )));
        }
        let budget = cfg.power(q);
        for (k, (&p, &cap)) in self.user(q).iter().zip(cfg.pmax(q)).enumerate() {
            if p > cap * (1.0 + FEASIBILITY_TOL) + f64::MIN_POSITIVE {
                return Err(Error::Infeasible {
                    user: q,
                    reason: format!("bin {k} carries {p} above mask {cap}"),
                });
            }
        }
        let total: f64 = self.user(q).iter().sum();
        if (total - budget).abs() > FEASIBILITY_TOL * budget {
            return Err(Error::Infeasible {
                user: q,
                reason: format!("allocates {total}, budget is {budget}"),
            });
        }
        Ok(())
    }

    pub fn permute_freqs(&self, perm: &[usize]) -> Result<Self> {
        check_perm(perm, self.freqs)?;
        let mut p = Vec::with_capacity(self.p.len());
        for q in 0..self.users {
            let row = self.user(q);
            p.extend(perm.iter().map(|&old| row[old]));
        }
        Self::from_flat(self.users, self.freqs, p)
    }
}

fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Dimension(format!(
            "permutation of length {} for {n} bins",
            perm.len()
        )));
    }
    for &i in perm {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidValue(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}
