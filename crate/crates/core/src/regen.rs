//! Regeneration structure: record times, influence fields, good record
//! times and the regeneration time, evaluated on finite windows with
//! quantified residual certificates.
//!
//! The two infinite events behind a regeneration — "no trajectory crosses
//! both cones at `y`" and "the walk stays in the cone of `y` forever" — are
//! decided from the sampled window plus analytic residuals:
//!
//! * trajectory continuations beyond the window are bounded by the Azuma
//!   series `sum_u exp(-(gap + slope u)^2 / 2u)` against the receding cone
//!   line, summed per particle and over the unsampled sites left and right
//!   of the window;
//! * cone confinement beyond the walk horizon is bounded through the
//!   pathwise domination of the walk by a homogeneous walk with jump
//!   probability `p_circ /\ p_bullet`, which yields the same series with
//!   slope `(v_circ /\ v_bullet) - v_bar` whenever that is positive. An
//!   externally fitted tail can be supplied for parameter ranges where the
//!   domination slope vanishes.
//!
//! A report is `certified` when no definite counterexample was observed and
//! the accumulated residual stays below the configured budget.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::cones::{classify_exit, ConeParams, Parallelogram, ParallelogramExit};
use crate::env::{sample_environment, EnvConfig, Environment};
use crate::walker::{run_walk, Path, UniformField, WalkParams};
use crate::{Error, Result};

/// Horizon configuration for good records and regeneration certificates.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegenConfig {
    /// Good-record horizon `T`.
    pub t_big: u64,
    /// `1 / (4 log(1 / (p_circ /\ p_bullet)))`.
    pub delta: f64,
    /// Rate constant of the influence-field tail; defaults to `v_bar / 2`.
    pub c2_hat: f64,
    /// `(c2_hat delta /\ 1) / 4`.
    pub epsilon: f64,
    /// `floor(T^epsilon)`.
    pub t_prime: i64,
    /// `floor(delta log T)`.
    pub t_dprime: i64,
    /// Total residual probability budget for one certificate.
    pub cert_tol: f64,
    /// Fitted confinement tail `P(exit from margin m) <= inv_c exp(-c log^gamma m)`,
    /// used only when the drift domination slope is not positive.
    pub empirical_tail: Option<EmpiricalTail>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EmpiricalTail {
    pub inv_c: f64,
    pub c: f64,
    pub gamma: f64,
}

impl RegenConfig {
    pub fn new(cone: &ConeParams, params: &WalkParams, t_big: u64, cert_tol: f64) -> Result<Self> {
        Self::with_c2(cone, params, t_big, cert_tol, None)
    }

    pub fn with_c2(
        cone: &ConeParams,
        params: &WalkParams,
        t_big: u64,
        cert_tol: f64,
        c2_hat: Option<f64>,
    ) -> Result<Self> {
        let p_min = params.p_min();
        if !(p_min > 0.0 && p_min < 1.0) {
            return Err(Error::Parameter(
                "good-record horizons need 0 < p_circ /\\ p_bullet < 1".into(),
            ));
        }
        if !(cert_tol > 0.0 && cert_tol < 1.0) {
            return Err(Error::Parameter(format!("cert_tol={cert_tol} outside (0, 1)")));
        }
        let delta = 1.0 / (4.0 * (1.0 / p_min).ln());
        let t = t_big as f64;
        if delta * t.ln() < 1.0 {
            return Err(Error::Parameter(format!(
                "T={t_big} too small: T'' >= 1 needs T >= e^(1/delta) = {:.1}",
                (1.0 / delta).exp()
            )));
        }
        let c2_hat = c2_hat.unwrap_or(cone.v_bar() / 2.0);
        let epsilon = (c2_hat * delta).min(1.0) / 4.0;
        let t_prime = t.powf(epsilon).floor() as i64;
        let t_dprime = (delta * t.ln()).floor() as i64;
        Ok(RegenConfig {
            t_big,
            delta,
            c2_hat,
            epsilon,
            t_prime,
            t_dprime,
            cert_tol,
            empirical_tail: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Azuma residual tables
// ---------------------------------------------------------------------------

/// Table of `R(g) = sum_{u >= 1} exp(-(g + slope u)^2 / 2u)`, the
/// Azuma-Hoeffding bound on a unit-step process ever climbing `g` plus a
/// line of the given slope. Entries are capped at 1 and extended
/// geometrically beyond the table (`R(g+1) <= e^{-slope} R(g)`).
#[derive(Debug)]
pub(crate) struct AzumaTable {
    slope: f64,
    values: Vec<f64>,
    suffix: Vec<f64>,
}

const AZUMA_G_MAX: usize = 3000;

impl AzumaTable {
    fn compute(slope: f64) -> Self {
        assert!(slope > 0.0);
        let mut values = Vec::with_capacity(AZUMA_G_MAX + 1);
        let tail_ratio = (-slope * slope / 2.0).exp();
        let tail_factor = tail_ratio / (1.0 - tail_ratio);
        for g in 0..=AZUMA_G_MAX {
            let gf = g as f64;
            let v = if slope * gf > 720.0 {
                1e-290
            } else {
                let mode = gf / slope;
                let mut sum = 0.0f64;
                let mut u = 1u64;
                loop {
                    let uf = u as f64;
                    let a = gf + slope * uf;
                    let term = (-a * a / (2.0 * uf)).exp();
                    sum += term;
                    if uf > mode && term < sum * 1e-18 + 1e-300 {
                        sum += term * tail_factor;
                        break;
                    }
                    u += 1;
                }
                sum
            };
            values.push(v.min(1.0));
        }
        let mut suffix = vec![0.0f64; values.len() + 1];
        suffix[values.len()] = values[values.len() - 1] * tail_ratio / (1.0 - tail_ratio);
        for g in (0..values.len()).rev() {
            suffix[g] = suffix[g + 1] + values[g];
        }
        AzumaTable { slope, values, suffix }
    }

    /// `R(floor(gap))`; gaps below zero give the trivial bound 1.
    fn bound(&self, gap: f64) -> f64 {
        if gap < 0.0 || !gap.is_finite() {
            return 1.0;
        }
        let g = gap.floor() as usize;
        if g < self.values.len() {
            self.values[g]
        } else {
            (self.values[self.values.len() - 1]
                * (-self.slope * (g - self.values.len() + 1) as f64).exp())
            .max(1e-290)
        }
    }

    /// `sum_{g' >= floor(gap)} R(g')`, for unit-spaced site tails.
    fn tail_sum(&self, gap: f64) -> f64 {
        if gap < 0.0 || !gap.is_finite() {
            return self.suffix[0] + gap.abs().ceil();
        }
        let g = gap.floor() as usize;
        if g < self.suffix.len() - 1 {
            self.suffix[g]
        } else {
            let last = self.values[self.values.len() - 1];
            let r = (-self.slope).exp();
            last * (-self.slope * (g - self.values.len() + 1) as f64).exp() / (1.0 - r)
        }
    }
}

fn azuma_table(slope: f64) -> Arc<AzumaTable> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<AzumaTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(slope.to_bits())
        .or_insert_with(|| Arc::new(AzumaTable::compute(slope)))
        .clone()
}

// ---------------------------------------------------------------------------
// Cone index over an environment
// ---------------------------------------------------------------------------

const BLOCK: usize = 32;

/// Per-particle block summaries of the scaled cone height
/// `d(t) = pos(t) * den - num * t`, enabling O(window/32) cone-touch tests.
pub struct ConeIndex {
    cone: ConeParams,
    t_min: i64,
    t_max: i64,
    n_blocks: usize,
    min_d: Vec<i64>,
    max_d: Vec<i64>,
}

impl ConeIndex {
    pub fn build(env: &Environment, cone: &ConeParams) -> ConeIndex {
        let cfg = env.cfg();
        let height = cfg.height() as usize;
        let n_blocks = height.div_ceil(BLOCK);
        let particles = env.particle_count();
        let mut min_d = vec![i64::MAX; particles * n_blocks];
        let mut max_d = vec![i64::MIN; particles * n_blocks];
        for ti in 0..height {
            let t = cfg.t_min + ti as i64;
            let blk = ti / BLOCK;
            let row = env.slice(t);
            for (p, &x) in row.iter().enumerate() {
                let d = x as i64 * cone.den - cone.num * t;
                let idx = p * n_blocks + blk;
                if d < min_d[idx] {
                    min_d[idx] = d;
                }
                if d > max_d[idx] {
                    max_d[idx] = d;
                }
            }
        }
        ConeIndex { cone: *cone, t_min: cfg.t_min, t_max: cfg.t_max, n_blocks, min_d, max_d }
    }

    /// Does particle `p` satisfy `d(t) >= theta` somewhere in `[ta, tb]`?
    fn touches_ge(&self, env: &Environment, p: usize, ta: i64, tb: i64, theta: i64) -> bool {
        let a = ta.max(self.t_min);
        let b = tb.min(self.t_max);
        if a > b {
            return false;
        }
        let (ba, bb) = (((a - self.t_min) as usize) / BLOCK, ((b - self.t_min) as usize) / BLOCK);
        for blk in ba..=bb {
            let t0 = self.t_min + (blk * BLOCK) as i64;
            let t1 = (t0 + BLOCK as i64 - 1).min(self.t_max);
            if self.max_d[p * self.n_blocks + blk] < theta {
                continue;
            }
            if t0 >= a && t1 <= b {
                return true;
            }
            for t in t0.max(a)..=t1.min(b) {
                if env.position(p, t) as i64 * self.cone.den - self.cone.num * t >= theta {
                    return true;
                }
            }
        }
        false
    }

    /// Does particle `p` satisfy `d(t) < theta` somewhere in `[ta, tb]`?
    fn touches_lt(&self, env: &Environment, p: usize, ta: i64, tb: i64, theta: i64) -> bool {
        let a = ta.max(self.t_min);
        let b = tb.min(self.t_max);
        if a > b {
            return false;
        }
        let (ba, bb) = (((a - self.t_min) as usize) / BLOCK, ((b - self.t_min) as usize) / BLOCK);
        for blk in ba..=bb {
            let t0 = self.t_min + (blk * BLOCK) as i64;
            let t1 = (t0 + BLOCK as i64 - 1).min(self.t_max);
            if self.min_d[p * self.n_blocks + blk] >= theta {
                continue;
            }
            if t0 >= a && t1 <= b {
                return true;
            }
            for t in t0.max(a)..=t1.min(b) {
                if env.position(p, t) as i64 * self.cone.den - self.cone.num * t < theta {
                    return true;
                }
            }
        }
        false
    }

    /// Observed touch of the up cone at `apex`.
    pub fn touches_up_cone(&self, env: &Environment, p: usize, apex: (i64, i64)) -> bool {
        let theta = self.cone.d(apex.0, apex.1);
        self.touches_ge(env, p, apex.1, self.t_max, theta)
    }

    /// Observed touch of the down cone at `apex`.
    pub fn touches_down_cone(&self, env: &Environment, p: usize, apex: (i64, i64)) -> bool {
        let theta = self.cone.d(apex.0, apex.1);
        self.touches_lt(env, p, self.t_min, apex.1, theta)
    }
}

// ---------------------------------------------------------------------------
// Certified scans
// ---------------------------------------------------------------------------

/// Outcome of checking that no trajectory crosses a cone pair.
#[derive(Clone, Copy, Debug)]
pub struct ScanOutcome {
    /// Some trajectory crosses the pair inside the window: the event
    /// definitely fails, no residual involved.
    pub definite_hit: bool,
    /// Probability bound on an unseen crossing when no definite hit.
    pub residual: f64,
}

struct Scanner<'a> {
    env: &'a Environment,
    index: &'a ConeIndex,
    cone: ConeParams,
    table: Arc<AzumaTable>,
}

impl<'a> Scanner<'a> {
    fn new(env: &'a Environment, index: &'a ConeIndex) -> Scanner<'a> {
        let cone = index.cone;
        Scanner { env, index, cone, table: azuma_table(cone.v_bar()) }
    }

    /// Real gap from the end-of-window position of particle `p` up to the
    /// up-cone line of threshold `up_theta` extrapolated at `t_max`.
    fn forward_gap(&self, p: usize, up_theta: i64) -> f64 {
        let t = self.index.t_max;
        let d_end = self.env.position(p, t) as i64 * self.cone.den - self.cone.num * t;
        (up_theta - d_end) as f64 / self.cone.den as f64
    }

    /// Gap from the start-of-window position down to the down-cone line of
    /// threshold `down_theta` extrapolated at `t_min`.
    fn backward_gap(&self, p: usize, down_theta: i64) -> f64 {
        let t = self.index.t_min;
        let d_start = self.env.position(p, t) as i64 * self.cone.den - self.cone.num * t;
        (d_start - down_theta) as f64 / self.cone.den as f64
    }

    /// Residual from initial sites never sampled, on both sides of the
    /// window. Left-tail particles surely meet the down cone and must climb
    /// to the up cone; right-tail particles must descend to the down cone.
    fn unsampled_tails(&self, down_theta: i64, up_theta: i64) -> f64 {
        let cfg = self.env.cfg();
        let rho = cfg.rho;
        let den = self.cone.den as f64;
        // z < x_min: gap to the up-cone line at time 0 is up_theta/den - z.
        let left_gap = up_theta as f64 / den - (cfg.x_min - 1) as f64;
        // z > x_max: gap down to the down-cone line is z - down_theta/den;
        // within-window crossings are impossible by the speed limit because
        // the window margin exceeds its height.
        let right_gap = (cfg.x_max + 1) as f64 - down_theta as f64 / den;
        rho * (self.table.tail_sum(left_gap) + self.table.tail_sum(right_gap))
    }

    /// Check `omega(both cones at y AND both cones at y + (l, l)) = 0`.
    ///
    /// Crossing both cones of `y` and both of `y + (l, l)` is equivalent to
    /// touching the innermost pair: the down cone at `y` and the up cone at
    /// `y + (l, l)`.
    fn tensor_pair(&self, y: (i64, i64), l: i64) -> ScanOutcome {
        self.pair_impl(y, l, None)
    }

    /// Same, additionally requiring the trajectory NOT to touch the down
    /// cone at `excl` (observed classification).
    fn pair_excluding(&self, y: (i64, i64), l: i64, excl: (i64, i64)) -> ScanOutcome {
        self.pair_impl(y, l, Some(excl))
    }

    fn pair_impl(&self, y: (i64, i64), l: i64, excl: Option<(i64, i64)>) -> ScanOutcome {
        let up_apex = (y.0 + l, y.1 + l);
        let down_theta = self.cone.d(y.0, y.1);
        let up_theta = self.cone.d(up_apex.0, up_apex.1);
        let mut residual = 0.0f64;
        for p in 0..self.env.particle_count() {
            if let Some(e) = excl {
                let excl_theta = self.cone.d(e.0, e.1);
                if self.index.touches_lt(self.env, p, self.index.t_min, e.1, excl_theta) {
                    continue;
                }
            }
            let down = self.index.touches_lt(self.env, p, self.index.t_min, y.1, down_theta);
            let up = self.index.touches_ge(self.env, p, up_apex.1, self.index.t_max, up_theta);
            match (down, up) {
                (true, true) => return ScanOutcome { definite_hit: true, residual: 0.0 },
                (true, false) => residual += self.table.bound(self.forward_gap(p, up_theta)),
                (false, true) => residual += self.table.bound(self.backward_gap(p, down_theta)),
                (false, false) => {
                    residual += self.table.bound(self.forward_gap(p, up_theta))
                        * self.table.bound(self.backward_gap(p, down_theta));
                }
            }
        }
        residual += self.unsampled_tails(down_theta, up_theta);
        ScanOutcome { definite_hit: false, residual }
    }
}

// ---------------------------------------------------------------------------
// Influence fields
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct InfluenceField {
    pub h: i64,
    pub certified: bool,
    pub residual: f64,
}

/// The influence field `h(y)`: smallest `l` such that no trajectory crosses
/// both cones at `y` and both cones at `y + (l, l)`.
pub fn influence_field(
    env: &Environment,
    index: &ConeIndex,
    y: (i64, i64),
    l_cap: i64,
    cert_tol: f64,
) -> Result<InfluenceField> {
    let cfg = env.cfg();
    if y.1 < cfg.t_min || y.1 > cfg.t_max {
        return Err(Error::Range(format!("influence query at time {} outside window", y.1)));
    }
    let scanner = Scanner::new(env, index);
    for l in 0..=l_cap {
        let out = scanner.tensor_pair(y, l);
        if !out.definite_hit {
            return Ok(InfluenceField {
                h: l,
                certified: out.residual <= cert_tol,
                residual: out.residual,
            });
        }
    }
    Err(Error::Simulation(format!("influence field at {y:?} exceeds cap {l_cap}")))
}

/// The local influence field `h^T(y)`: as `h(y)` but restricted to
/// trajectories avoiding the down cone at `y - (floor((1 - v_bar) T'), 0)`.
/// Always bounded by `h(y)`; classified from the observed window.
pub fn local_influence_field(
    env: &Environment,
    index: &ConeIndex,
    cfg: &RegenConfig,
    y: (i64, i64),
    l_cap: i64,
) -> Result<i64> {
    let window = env.cfg();
    if y.1 < window.t_min || y.1 > window.t_max {
        return Err(Error::Range(format!("influence query at time {} outside window", y.1)));
    }
    let cone = index.cone;
    let back = ((cone.den - cone.num) * cfg.t_prime).div_euclid(cone.den);
    let excl = (y.0 - back, y.1);
    let scanner = Scanner::new(env, index);
    for l in 0..=l_cap {
        let out = scanner.pair_excluding(y, l, excl);
        if !out.definite_hit {
            return Ok(l);
        }
    }
    Err(Error::Simulation(format!("local influence field at {y:?} exceeds cap {l_cap}")))
}

// ---------------------------------------------------------------------------
// Confinement certificates
// ---------------------------------------------------------------------------

/// Residual bound on the walk leaving the cone of its apex after the
/// observed horizon, given the real margin at the horizon.
fn confinement_residual(
    params: &WalkParams,
    cone: &ConeParams,
    cfg: &RegenConfig,
    margin_real: f64,
) -> f64 {
    let mu = params.v_circ().min(params.v_bullet());
    let slope = mu - cone.v_bar();
    if slope > 0.0 {
        azuma_table(slope).bound(margin_real)
    } else if let Some(tail) = cfg.empirical_tail {
        if margin_real >= 2.0 {
            (tail.inv_c * (-tail.c * margin_real.ln().powf(tail.gamma)).exp()).min(1.0)
        } else {
            1.0
        }
    } else {
        1.0
    }
}

/// Observed confinement of the path (from index `from`) in the cone based
/// at `path.point(from)`: the first violation index, or the real margin at
/// the horizon.
fn check_confinement(
    cone: &ConeParams,
    path: &Path,
    from: usize,
) -> std::result::Result<f64, usize> {
    let apex = path.point(from);
    let theta = cone.d(apex.0, apex.1);
    for i in from..=path.steps() {
        let (x, n) = path.point(i);
        if cone.d(x, n) < theta {
            return Err(i);
        }
    }
    let (x, n) = path.point(path.steps());
    Ok((cone.d(x, n) - theta) as f64 / cone.den as f64)
}

// ---------------------------------------------------------------------------
// Good record times
// ---------------------------------------------------------------------------

/// Status of one good-record condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Cond {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodRecord {
    pub k: i64,
    pub time: usize,
    pub x: i64,
    /// `h^T(Y_{R_k}) <= T''`.
    pub small_influence: Cond,
    /// Uniforms along the diagonal below `p_circ /\ p_bullet`.
    pub forced_diagonal: Cond,
    /// No trajectory links the cone at `Y_{R_k}` to both cones at
    /// `Y_{R_k} + (T'', T'')`.
    pub unlinked: Cond,
    /// Records `k + T''` .. `k + T'` confined to the cone at `Y_{R_{k+T''}}`.
    pub confined_stretch: Cond,
    pub good: Cond,
}

/// Evaluate the four good-record conditions at every record of the path.
pub fn good_record_flags(
    env: &Environment,
    index: &ConeIndex,
    field: &UniformField,
    params: &WalkParams,
    cfg: &RegenConfig,
    path: &Path,
) -> Result<Vec<GoodRecord>> {
    let cone = index.cone;
    let records = cone.record_times(path);
    let scanner = Scanner::new(env, index);
    let p_min = params.p_min();
    let mut out = Vec::with_capacity(records.len());
    for (j, &(k, r)) in records.iter().enumerate() {
        let y = path.point(r);
        let h_t = local_influence_field(env, index, cfg, y, 4 * cfg.t_dprime + 64)?;
        let small_influence = if h_t <= cfg.t_dprime { Cond::Holds } else { Cond::Fails };
        let forced_diagonal =
            if (0..cfg.t_dprime).all(|l| field.u(y.0 + l, y.1 + l) <= p_min) {
                Cond::Holds
            } else {
                Cond::Fails
            };
        let unlinked = {
            let scan = scanner.pair_excluding(y, cfg.t_dprime, y);
            if scan.definite_hit {
                Cond::Fails
            } else {
                Cond::Holds
            }
        };
        let confined_stretch = {
            let hi = j + cfg.t_prime.max(0) as usize;
            let mid = j + cfg.t_dprime.max(0) as usize;
            if hi < records.len() && mid < records.len() {
                let base = path.point(records[mid].1);
                let theta = cone.d(base.0, base.1);
                let lo_i = records[mid].1 + 1;
                let hi_i = records[hi].1;
                if (lo_i..=hi_i).all(|i| {
                    let (x, n) = path.point(i);
                    cone.d(x, n) >= theta
                }) {
                    Cond::Holds
                } else {
                    Cond::Fails
                }
            } else {
                Cond::Undetermined
            }
        };
        let all = [small_influence, forced_diagonal, unlinked, confined_stretch];
        let good = if all.contains(&Cond::Fails) {
            Cond::Fails
        } else if all.contains(&Cond::Undetermined) {
            Cond::Undetermined
        } else {
            Cond::Holds
        };
        out.push(GoodRecord {
            k,
            time: r,
            x: y.0,
            small_influence,
            forced_diagonal,
            unlinked,
            confined_stretch,
            good,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Regeneration search
// ---------------------------------------------------------------------------

/// Scenario shared by all regeneration entry points.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Scenario {
    pub rho: f64,
    pub q: f64,
    pub env_seed: u64,
    pub field_seed: u64,
    pub params: WalkParams,
    pub cone: ConeParams,
    /// Memory guard for the materialised windows.
    pub max_cells: u64,
}

impl Scenario {
    pub fn new(
        rho: f64,
        q: f64,
        env_seed: u64,
        field_seed: u64,
        params: WalkParams,
        cone: ConeParams,
    ) -> Self {
        Scenario {
            rho,
            q,
            env_seed,
            field_seed,
            params,
            cone,
            max_cells: crate::env::DEFAULT_MAX_CELLS,
        }
    }

    /// Window with walk horizon `h` and an equally deep past, wide enough
    /// that unsampled particles cannot reach any query or cone apex within
    /// the window.
    fn window(&self, h: i64) -> EnvConfig {
        let height = 2 * h + 1;
        let mut cfg = EnvConfig::new(
            self.rho,
            self.q,
            -h - height - 1,
            h + height + 1,
            -h,
            h,
            self.env_seed,
        );
        cfg.max_cells = self.max_cells;
        cfg
    }

    /// Largest horizon whose window respects the memory guard.
    fn feasible_horizon(&self) -> i64 {
        let mut h = 256i64;
        while self.rho.max(0.05) * ((6 * h + 4) * (2 * h + 1)) as f64 <= self.max_cells as f64 {
            h *= 2;
        }
        h / 2
    }

    /// First window rung at which a record with a small apex time can be
    /// expected to certify at budget `tol`: the residual gap grows like
    /// `v_bar * (horizon - apex time)`, so invert the Azuma table.
    fn start_horizon(&self, tol: f64) -> i64 {
        let table = azuma_table(self.cone.v_bar());
        let mut g = 0f64;
        while self.rho.max(0.1) * 4.0 * table.tail_sum(g) > tol / 2.0 && g < 4000.0 {
            g += 8.0;
        }
        let need = (g + 96.0) / self.cone.v_bar();
        let mut h = 512i64;
        while (h as f64) < need {
            h *= 2;
        }
        h
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecordOutcome {
    pub k: i64,
    pub time: usize,
    pub x: i64,
    /// A trajectory observed in both cones: the record definitely fails.
    pub linked: bool,
    /// The walk observed leaving the cone at this index.
    pub exited_at: Option<usize>,
    pub tensor_residual: f64,
    pub confinement_residual: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegenReport {
    pub horizon: i64,
    pub records_examined: usize,
    pub regen_k: Option<i64>,
    /// Regeneration time `tau = R_I` (path index / time).
    pub tau: Option<i64>,
    pub x_tau: Option<i64>,
    pub certified: bool,
    /// Residual of the accepted record (certificates only accumulate there;
    /// rejections are exact observations).
    pub residual: f64,
    pub records: Vec<RecordOutcome>,
}

enum RecordDecision {
    Reject(RecordOutcome),
    Accept(RecordOutcome),
    /// Residual too large at this window; a larger window must decide.
    Escalate,
}

fn decide_record(
    scanner: &Scanner<'_>,
    params: &WalkParams,
    cfg: &RegenConfig,
    path: &Path,
    k: i64,
    r: usize,
) -> RecordDecision {
    let cone = scanner.cone;
    let y = path.point(r);
    let (exited_at, conf_residual) = match check_confinement(&cone, path, r) {
        Err(i) => (Some(i), 0.0),
        Ok(margin) => (None, confinement_residual(params, &cone, cfg, margin)),
    };
    if let Some(i) = exited_at {
        return RecordDecision::Reject(RecordOutcome {
            k,
            time: r,
            x: y.0,
            linked: false,
            exited_at: Some(i),
            tensor_residual: 0.0,
            confinement_residual: 0.0,
            accepted: false,
        });
    }
    let scan = scanner.tensor_pair(y, 0);
    if scan.definite_hit {
        return RecordDecision::Reject(RecordOutcome {
            k,
            time: r,
            x: y.0,
            linked: true,
            exited_at: None,
            tensor_residual: 0.0,
            confinement_residual: 0.0,
            accepted: false,
        });
    }
    let total = scan.residual + conf_residual;
    if total <= cfg.cert_tol {
        RecordDecision::Accept(RecordOutcome {
            k,
            time: r,
            x: y.0,
            linked: false,
            exited_at: None,
            tensor_residual: scan.residual,
            confinement_residual: conf_residual,
            accepted: true,
        })
    } else {
        RecordDecision::Escalate
    }
}

/// Find the regeneration time from the origin with adaptive windows: the
/// first record whose two conditions hold with total residual below the
/// budget. Rejections are exact (a linking trajectory or a cone exit was
/// observed), so the returned index is the infimum up to the reported
/// residual.
pub fn regeneration_time(
    scen: &Scenario,
    cfg: &RegenConfig,
    horizon_cap: i64,
) -> Result<RegenReport> {
    let h_mem = scen.feasible_horizon();
    // The window may exceed the horizon cap: certifying a record near the
    // cap needs observation margin beyond it.
    let mut h = if horizon_cap <= 0 {
        4
    } else {
        scen.start_horizon(cfg.cert_tol).min(h_mem).max(4)
    };
    let mut report = RegenReport {
        horizon: 0,
        records_examined: 0,
        regen_k: None,
        tau: None,
        x_tau: None,
        certified: false,
        residual: 1.0,
        records: Vec::new(),
    };
    loop {
        let env = sample_environment(&scen.window(h))?;
        let field = UniformField::new(scen.field_seed);
        let path = run_walk(&env, &field, &scen.params, (0, 0), h as usize)?;
        let index = ConeIndex::build(&env, &scen.cone);
        let scanner = Scanner::new(&env, &index);
        let records = scen.cone.record_times(&path);
        report.horizon = h;
        report.records = Vec::new();
        let mut escalate = false;
        for &(k, r) in &records {
            if r as i64 > horizon_cap {
                break;
            }
            match decide_record(&scanner, &scen.params, cfg, &path, k, r) {
                RecordDecision::Reject(o) => report.records.push(o),
                RecordDecision::Accept(o) => {
                    report.regen_k = Some(k);
                    report.tau = Some(r as i64);
                    report.x_tau = Some(o.x);
                    report.certified = true;
                    report.residual = o.tensor_residual + o.confinement_residual;
                    report.records.push(o);
                    report.records_examined = report.records.len();
                    return Ok(report);
                }
                RecordDecision::Escalate => {
                    escalate = true;
                    break;
                }
            }
        }
        report.records_examined = report.records.len();
        if !escalate && h >= horizon_cap {
            // Every record up to the cap was genuinely rejected.
            return Ok(report);
        }
        if h >= h_mem {
            return Ok(report);
        }
        h = (2 * h).min(h_mem);
    }
}

/// One regeneration piece: duration and displacement.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Piece {
    pub tau: i64,
    pub dx: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SequenceReport {
    pub pieces: Vec<Piece>,
    pub complete: bool,
    pub horizon: i64,
}

/// Iterate the regeneration construction: re-root at each regeneration
/// point and search again, reusing the same environment and field. The
/// first piece has the unconditioned law; pieces from the second onwards
/// are the i.i.d. cone-conditioned pieces.
pub fn regen_sequence(
    scen: &Scenario,
    cfg: &RegenConfig,
    horizon_cap: i64,
    count: usize,
) -> Result<SequenceReport> {
    let h_mem = scen.feasible_horizon();
    let mut h = if horizon_cap <= 0 {
        4
    } else {
        (2 * scen.start_horizon(cfg.cert_tol)).min(h_mem).max(4)
    };
    loop {
        let env = sample_environment(&scen.window(h))?;
        let field = UniformField::new(scen.field_seed);
        let path = run_walk(&env, &field, &scen.params, (0, 0), h as usize)?;
        let index = ConeIndex::build(&env, &scen.cone);
        let scanner = Scanner::new(&env, &index);
        let mut pieces = Vec::new();
        let mut root = 0usize;
        let mut escalate = false;
        'pieces: while pieces.len() < count && (root as i64) < horizon_cap {
            let suffix =
                Path { x0: path.xs[root], n0: root as i64, xs: path.xs[root..].to_vec() };
            let records = scen.cone.record_times(&suffix);
            let mut advanced = false;
            for &(k, r) in &records {
                match decide_record(&scanner, &scen.params, cfg, &suffix, k, r) {
                    RecordDecision::Reject(_) => {}
                    RecordDecision::Accept(_) => {
                        pieces.push(Piece { tau: r as i64, dx: suffix.xs[r] - suffix.x0 });
                        root += r;
                        advanced = true;
                        break;
                    }
                    RecordDecision::Escalate => {
                        escalate = true;
                        break 'pieces;
                    }
                }
            }
            if !advanced {
                escalate = true;
                break;
            }
        }
        if pieces.len() >= count {
            return Ok(SequenceReport { pieces, complete: true, horizon: h });
        }
        if !escalate || h >= h_mem {
            return Ok(SequenceReport { pieces, complete: false, horizon: h });
        }
        h = (2 * h).min(h_mem);
    }
}

/// Rejection sampler for the cone-conditioned law: resample `(env, field)`
/// seeds until the origin conditions certify, then return the first
/// regeneration piece. `None` when the try budget is exhausted.
pub fn sample_conditioned_piece(
    scen_base: &Scenario,
    cfg: &RegenConfig,
    horizon_cap: i64,
    tries: u64,
) -> Result<Option<(u64, Piece)>> {
    for t in 0..tries {
        let mut scen = *scen_base;
        scen.env_seed = crate::rng::key(scen_base.env_seed, 0x5EED, t, 0);
        scen.field_seed = crate::rng::key(scen_base.field_seed, 0xF1E1D, t, 0);
        // Cheap pre-check on a small window, escalating only as needed.
        let mut h = 512i64.min(scen.feasible_horizon());
        let accepted = loop {
            let env = sample_environment(&scen.window(h))?;
            let field = UniformField::new(scen.field_seed);
            let path = run_walk(&env, &field, &scen.params, (0, 0), h as usize)?;
            let index = ConeIndex::build(&env, &scen.cone);
            let scanner = Scanner::new(&env, &index);
            match decide_record(&scanner, &scen.params, cfg, &path, 0, 0) {
                RecordDecision::Reject(_) => break false,
                RecordDecision::Accept(_) => break true,
                RecordDecision::Escalate => {
                    if h >= scen.feasible_horizon() {
                        break false;
                    }
                    h *= 2;
                }
            }
        };
        if !accepted {
            continue;
        }
        let report = regeneration_time(&scen, cfg, horizon_cap)?;
        if let (Some(tau), Some(x)) = (report.tau, report.x_tau) {
            return Ok(Some((t, Piece { tau, dx: x })));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Parallelogram exit probe
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExitProbe {
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub replicas: u64,
}

/// Monte Carlo estimate of the probability that the walk exits the
/// parallelogram of height `t` through its right boundary.
pub fn parallelogram_exit_probe(
    rho: f64,
    q: f64,
    params: &WalkParams,
    cone: &ConeParams,
    t: i64,
    replicas: u64,
    seed: u64,
) -> Result<ExitProbe> {
    if t < 4 {
        return Err(Error::Parameter(format!("exit probe needs t >= 4, got {t}")));
    }
    let steps = (t * cone.den).div_euclid(cone.num) + 2;
    let mut right = 0u64;
    for rep in 0..replicas {
        let env_seed = crate::rng::key(seed, 0xE9, rep, 0);
        let field_seed = crate::rng::key(seed, 0xF9, rep, 0);
        let cfg = EnvConfig::for_walk(rho, q, 0, steps, env_seed);
        let env = sample_environment(&cfg)?;
        let field = UniformField::new(field_seed);
        let path = run_walk(&env, &field, params, (0, 0), steps as usize)?;
        let para = Parallelogram::new(cone, (0, 0), t);
        match classify_exit(&para, &path) {
            ParallelogramExit::Right(_) => right += 1,
            ParallelogramExit::Other(_) => {}
            ParallelogramExit::Confined => {
                return Err(Error::Simulation(
                    "path never left the parallelogram; horizon too short".into(),
                ))
            }
        }
    }
    let p_hat = right as f64 / replicas as f64;
    let half = crate::testing::proportion_half_width(p_hat, replicas as usize, 3.0);
    Ok(ExitProbe {
        p_hat,
        ci_lo: (p_hat - half).max(0.0),
        ci_hi: (p_hat + half).min(1.0),
        replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;

    fn cone3() -> ConeParams {
        ConeParams::from_v_star(0.3).unwrap()
    }

    fn non_nestling() -> WalkParams {
        WalkParams::new(0.7, 0.9).unwrap()
    }

    fn cfg_for(params: &WalkParams) -> RegenConfig {
        RegenConfig::new(&cone3(), params, 200, 1e-4).unwrap()
    }

    #[test]
    fn config_derived_quantities() {
        let params = non_nestling();
        let cfg = cfg_for(&params);
        // delta = 1 / (4 ln(1/0.7)), T'' = floor(delta ln 200) = 3.
        assert!((cfg.delta - 0.700935).abs() < 1e-4, "delta={}", cfg.delta);
        assert_eq!(cfg.t_dprime, 3);
        assert!(cfg.t_prime >= 1);
        // T below e^(1/delta) is rejected.
        assert!(RegenConfig::new(&cone3(), &params, 4, 1e-4).is_err());
    }

    #[test]
    fn azuma_table_shape() {
        let t = AzumaTable::compute(0.1);
        assert!(t.bound(-1.0) == 1.0);
        assert!(t.bound(0.0) <= 1.0);
        // Decreasing in the gap, roughly like exp(-2 slope g).
        assert!(t.bound(50.0) < t.bound(10.0));
        assert!(t.bound(100.0) < 1e-5, "{}", t.bound(100.0));
        assert!(t.bound(100.0) > (-2.0f64 * 0.1 * 100.0).exp(), "{}", t.bound(100.0));
        // Tail sums dominate single entries and decrease.
        assert!(t.tail_sum(50.0) >= t.bound(50.0));
        assert!(t.tail_sum(120.0) < t.tail_sum(60.0));
    }

    #[test]
    fn azuma_bound_dominates_empirical_hits() {
        // Empirical check of the line-hit bound for the lazy walk.
        let table = AzumaTable::compute(0.2);
        for gap in [3.0f64, 6.0] {
            let mut hits = 0u64;
            let n = 20_000u64;
            for s in 0..n {
                let mut stream = crate::rng::Stream::keyed(999, s, 0, 0);
                let th = crate::env::StepThresholds::new(0.5);
                let mut pos = 0f64;
                for u in 1..=600u64 {
                    pos += th.step(stream.next_u64()) as f64;
                    if pos >= gap + 0.2 * u as f64 {
                        hits += 1;
                        break;
                    }
                }
            }
            let p_hat = hits as f64 / n as f64;
            assert!(p_hat <= table.bound(gap), "gap={gap}: {p_hat} vs {}", table.bound(gap));
        }
    }

    #[test]
    fn cone_index_agrees_with_direct_scan() {
        let cfg = EnvConfig::new(0.8, 0.5, -60, 60, -16, 48, 13);
        let env = sample_environment(&cfg).unwrap();
        let cone = cone3();
        let index = ConeIndex::build(&env, &cone);
        for p in (0..env.particle_count()).step_by(3) {
            for &apex in &[(0i64, 0i64), (5, 9), (-7, 2), (20, 30)] {
                let up_direct = (apex.1.max(cfg.t_min)..=cfg.t_max)
                    .any(|t| cone.in_up_cone(apex, (env.position(p, t) as i64, t)));
                assert_eq!(index.touches_up_cone(&env, p, apex), up_direct, "up p={p} {apex:?}");
                let down_direct = (cfg.t_min..=apex.1.min(cfg.t_max))
                    .any(|t| cone.in_down_cone(apex, (env.position(p, t) as i64, t)));
                assert_eq!(
                    index.touches_down_cone(&env, p, apex),
                    down_direct,
                    "down p={p} {apex:?}"
                );
            }
        }
    }

    #[test]
    fn influence_field_empty_env() {
        let cfg = EnvConfig::new(0.0, 0.5, -200, 200, -64, 64, 3);
        let env = sample_environment(&cfg).unwrap();
        let index = ConeIndex::build(&env, &cone3());
        let r = influence_field(&env, &index, (0, 0), 64, 1e-6).unwrap();
        assert_eq!(r.h, 0);
        assert!(r.certified, "residual {}", r.residual);
    }

    #[test]
    fn influence_field_single_left_trajectory() {
        // One particle pinned far left: it meets the down cone but can be
        // certified never to reach the up cone, so h = 0.
        let cfg = EnvConfig::new(0.0, 0.5, -400, 400, -128, 128, 3);
        let env = sample_environment(&cfg).unwrap();
        let env = env.augmented(&[vec![-300i32; cfg.height() as usize]]).unwrap();
        let index = ConeIndex::build(&env, &cone3());
        let r = influence_field(&env, &index, (0, 0), 64, 1e-6).unwrap();
        assert_eq!(r.h, 0);
        assert!(r.certified, "residual {}", r.residual);
    }

    #[test]
    fn influence_field_detects_crossing_trajectory() {
        // A trajectory climbing from deep in the down cone to the up cone
        // forces h > 0.
        let cfg = EnvConfig::new(0.0, 0.5, -400, 400, -128, 128, 3);
        let env = sample_environment(&cfg).unwrap();
        let height = cfg.height() as usize;
        let tr: Vec<i32> = (0..height).map(|i| -80 + i as i32).collect();
        let env = env.augmented(&[tr]).unwrap();
        let index = ConeIndex::build(&env, &cone3());
        let r = influence_field(&env, &index, (0, 0), 256, 1e-6).unwrap();
        assert!(r.h > 0, "h={}", r.h);
    }

    #[test]
    fn local_influence_below_influence() {
        let params = non_nestling();
        let cfg = cfg_for(&params);
        for seed in 0..40u64 {
            let ecfg = EnvConfig::new(1.0, 0.5, -300, 300, -96, 96, seed);
            let env = sample_environment(&ecfg).unwrap();
            let index = ConeIndex::build(&env, &cone3());
            for &y in &[(0i64, 0i64), (4, 10), (-3, 5)] {
                let h = influence_field(&env, &index, y, 512, 1.0).unwrap().h;
                let h_t = local_influence_field(&env, &index, &cfg, y, 512).unwrap();
                assert!(h_t <= h, "seed={seed} y={y:?}: h^T={h_t} > h={h}");
            }
        }
    }

    #[test]
    fn influence_tail_is_log_linear() {
        // P(h(0) > l) should decay exponentially in l (observed h over
        // moderate windows is the exact h up to a tiny residual).
        let mut counts: Vec<u64> = vec![0; 30];
        let n = 1500u64;
        for seed in 0..n {
            let ecfg = EnvConfig::new(1.0, 0.5, -260, 260, -80, 80, 0xAAA + seed);
            let env = sample_environment(&ecfg).unwrap();
            let index = ConeIndex::build(&env, &cone3());
            let h = influence_field(&env, &index, (0, 0), 256, 1.0).unwrap().h;
            for l in 0..counts.len() {
                if h > l as i64 {
                    counts[l] += 1;
                }
            }
        }
        let pts: Vec<(f64, f64)> = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c >= 20)
            .map(|(l, &c)| (l as f64, (c as f64 / n as f64).ln()))
            .collect();
        assert!(pts.len() >= 5, "too few usable tail points");
        let slope = testing::slope(&pts);
        assert!(slope < -0.05, "tail slope {slope} not negative");
    }

    #[test]
    fn deterministic_walk_regenerates_immediately() {
        // rho = 0 and p = 1: X_n = n, records at every step, tau = R_1 = 1.
        let params = WalkParams::new(1.0, 1.0).unwrap();
        // p_min = 1 makes delta degenerate; the config constructor rejects it.
        assert!(RegenConfig::new(&cone3(), &params, 200, 1e-4).is_err());
        let params_eps = WalkParams::new(0.999999, 0.999999).unwrap();
        let cfg = RegenConfig::new(&cone3(), &params_eps, 4_000_000, 1e-4).unwrap();
        let scen = Scenario::new(0.0, 0.5, 5, 6, params, cone3());
        let report = regeneration_time(&scen, &cfg, 4096).unwrap();
        assert!(report.certified);
        assert_eq!(report.regen_k, Some(1));
        assert_eq!(report.tau, Some(1));
        assert_eq!(report.x_tau, Some(1));
    }

    #[test]
    fn zero_horizon_finds_nothing() {
        let params = non_nestling();
        let cfg = cfg_for(&params);
        let scen = Scenario::new(1.0, 0.5, 5, 6, params, cone3());
        let report = regeneration_time(&scen, &cfg, 0).unwrap();
        assert!(!report.certified);
        assert_eq!(report.tau, None);
    }

    #[test]
    fn homogeneous_drift_regenerates_within_horizon() {
        // rho = 0, p = 0.9, v_star = 0.3: tau is found quickly for almost
        // every seed.
        let params = WalkParams::new(0.9, 0.9).unwrap();
        let cfg = RegenConfig::new(&cone3(), &params, 200, 1e-4).unwrap();
        let mut found = 0u32;
        let n = 300u32;
        for seed in 0..n {
            let scen = Scenario::new(0.0, 0.5, seed as u64, !seed as u64, params, cone3());
            let report = regeneration_time(&scen, &cfg, 10_000).unwrap();
            if report.certified {
                found += 1;
            }
        }
        assert!(found as f64 >= 0.99 * n as f64, "found {found}/{n}");
    }

    #[test]
    fn regeneration_in_poisson_environment() {
        let params = non_nestling();
        let cfg = cfg_for(&params);
        let mut found = 0u32;
        let n = 30u32;
        for seed in 0..n {
            let scen =
                Scenario::new(1.0, 0.5, 0xE0 + seed as u64, 0xF0 + seed as u64, params, cone3());
            let report = regeneration_time(&scen, &cfg, 20_000).unwrap();
            if report.certified {
                assert!(report.residual <= cfg.cert_tol);
                found += 1;
            }
        }
        assert!(found >= n - 1, "certified {found}/{n}");
    }

    #[test]
    fn sequence_pieces_are_consistent() {
        let params = non_nestling();
        let cfg = cfg_for(&params);
        let scen = Scenario::new(1.0, 0.5, 0xBEE, 0xFEE, params, cone3());
        let seq = regen_sequence(&scen, &cfg, 20_000, 4).unwrap();
        assert!(seq.complete, "only {} pieces", seq.pieces.len());
        for p in &seq.pieces {
            assert!(p.tau >= 1);
            assert!(p.dx <= p.tau);
        }
        // The first piece must match the single-regeneration search.
        let single = regeneration_time(&scen, &cfg, 20_000).unwrap();
        assert_eq!(single.tau, Some(seq.pieces[0].tau));
    }

    #[test]
    fn good_record_conditions_statistics() {
        // Condition 2 is a field-only event of probability p_min^(T'').
        let params = non_nestling();
        let cfg = cfg_for(&params);
        let p_expect = params.p_min().powi(cfg.t_dprime as i32);
        let mut hits = 0u64;
        let n = 10_000u64;
        for seed in 0..n {
            let field = UniformField::new(0xD00D + seed);
            if (0..cfg.t_dprime).all(|l| field.u(l, l) <= params.p_min()) {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let se = (p_expect * (1.0 - p_expect) / n as f64).sqrt();
        assert!((p_hat - p_expect).abs() <= 3.0 * se, "{p_hat} vs {p_expect}");
    }

    #[test]
    fn forced_diagonal_implies_forced_records() {
        // When condition 2 holds, Y_{R_k} + (T'', T'') = Y_{R_{k+T''}}.
        let params = non_nestling();
        let cfg = cfg_for(&params);
        let cone = cone3();
        let mut seen = 0;
        for seed in 0..400u64 {
            let ecfg = EnvConfig::new(1.0, 0.5, -700, 700, -128, 256, 0x60D + seed);
            let env = sample_environment(&ecfg).unwrap();
            let field = UniformField::new(0x70D + seed);
            let path = run_walk(&env, &field, &params, (0, 0), 256).unwrap();
            let index = ConeIndex::build(&env, &cone);
            let flags = good_record_flags(&env, &index, &field, &params, &cfg, &path).unwrap();
            let records = cone.record_times(&path);
            for (j, f) in flags.iter().enumerate() {
                if f.forced_diagonal == Cond::Holds {
                    let jt = j + cfg.t_dprime as usize;
                    if jt < records.len() {
                        seen += 1;
                        let y = path.point(records[j].1);
                        let yt = path.point(records[jt].1);
                        assert_eq!(
                            (y.0 + cfg.t_dprime, y.1 + cfg.t_dprime),
                            yt,
                            "seed={seed} k={}",
                            f.k
                        );
                    }
                }
            }
        }
        assert!(seen > 50, "only {seen} forced diagonals observed");
    }

    #[test]
    fn exit_probe_degenerate_and_generic() {
        let cone = cone3();
        let sure = WalkParams::new(1.0, 1.0).unwrap();
        let probe = parallelogram_exit_probe(0.0, 0.5, &sure, &cone, 10, 50, 1).unwrap();
        assert_eq!(probe.p_hat, 1.0);

        let params = WalkParams::new(0.9, 0.9).unwrap();
        let probe = parallelogram_exit_probe(0.0, 0.5, &params, &cone, 10, 400, 2).unwrap();
        assert!(probe.ci_lo > 0.0, "lower CI {}", probe.ci_lo);
        assert!(probe.p_hat < 1.0);
        assert!(parallelogram_exit_probe(0.0, 0.5, &params, &cone, 3, 10, 3).is_err());
    }

    #[test]
    fn conditioned_sampler_agrees_with_sequence_pieces() {
        // Cross-validation: the rejection sampler's tau law matches the
        // re-rooted pieces (two-sample KS). A loose certificate budget keeps
        // the windows small; it only perturbs either law by ~1%.
        let params = non_nestling();
        let cfg = RegenConfig::new(&cone3(), &params, 200, 1e-2).unwrap();
        let base = Scenario::new(1.0, 0.5, 0xAB, 0xCD, params, cone3());
        let mut rejection_taus = Vec::new();
        for s in 0..30u64 {
            let mut b = base;
            b.env_seed = crate::rng::key(0x111, s, 0, 0);
            b.field_seed = crate::rng::key(0x222, s, 0, 0);
            if let Some((_, piece)) = sample_conditioned_piece(&b, &cfg, 20_000, 200).unwrap() {
                rejection_taus.push(piece.tau as f64);
            }
        }
        let mut piece_taus = Vec::new();
        for s in 0..40u64 {
            let scen = Scenario::new(
                1.0,
                0.5,
                crate::rng::key(0x333, s, 0, 0),
                crate::rng::key(0x444, s, 0, 0),
                params,
                cone3(),
            );
            let seq = regen_sequence(&scen, &cfg, 20_000, 3).unwrap();
            for p in seq.pieces.iter().skip(1) {
                piece_taus.push(p.tau as f64);
            }
        }
        assert!(rejection_taus.len() >= 20, "{} accepted", rejection_taus.len());
        assert!(piece_taus.len() >= 40);
        let (_, p) = testing::ks_two_sample(&rejection_taus, &piece_taus);
        assert!(p > 0.01, "KS p={p}");
    }
}
