//! Finite-window realisation of the dynamic random environment.
//!
//! The environment is a Poisson(`rho`) number of particles per site, each
//! following an independent two-sided lazy simple random walk. Every particle
//! owns counter-derived substreams keyed by `(seed, z, i)`, one for the
//! forward half and one for the backward half of its trajectory, so that
//! enlarging the window in space or time never perturbs existing particles.
//!
//! Particles may leave the spatial window; they keep being tracked, so there
//! are no reflecting or absorbing artifacts. Occupancy queries are exact (in
//! distribution equal to the infinite-volume law) inside the [`ExactRegion`],
//! because particles move at speed at most one.

use std::collections::HashMap;

use serde::Serialize;

use crate::kernel;
use crate::rng::{key, word, Stream};
use crate::{Error, Result};

const TAG_COUNT: u64 = 0xC0;
const TAG_FWD: u64 = 0xF0;
const TAG_BWD: u64 = 0xB0;

/// Closed space-time rectangle `[x_lo, x_hi] x [t_lo, t_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpaceTimeBox {
    pub x_lo: i64,
    pub x_hi: i64,
    pub t_lo: i64,
    pub t_hi: i64,
}

impl SpaceTimeBox {
    pub fn new(x_lo: i64, x_hi: i64, t_lo: i64, t_hi: i64) -> Self {
        SpaceTimeBox { x_lo, x_hi, t_lo, t_hi }
    }

    pub fn contains(&self, x: i64, t: i64) -> bool {
        x >= self.x_lo && x <= self.x_hi && t >= self.t_lo && t <= self.t_hi
    }

    pub fn perimeter(&self) -> i64 {
        2 * (self.x_hi - self.x_lo) + 2 * (self.t_hi - self.t_lo)
    }
}

/// Sampling configuration for one environment realisation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnvConfig {
    pub rho: f64,
    pub q: f64,
    pub x_min: i64,
    pub x_max: i64,
    pub t_min: i64,
    pub t_max: i64,
    pub seed: u64,
    /// Guard on `particles x window height`; sampling refuses beyond it.
    pub max_cells: u64,
}

pub const DEFAULT_MAX_CELLS: u64 = 80_000_000;

impl EnvConfig {
    pub fn new(rho: f64, q: f64, x_min: i64, x_max: i64, t_min: i64, t_max: i64, seed: u64) -> Self {
        EnvConfig { rho, q, x_min, x_max, t_min, t_max, seed, max_cells: DEFAULT_MAX_CELLS }
    }

    /// Window sized so a walk of `steps` from `(x0, 0)` only ever queries
    /// exact sites: spatial half-width `2 * steps` around the start.
    pub fn for_walk(rho: f64, q: f64, x0: i64, steps: i64, seed: u64) -> Self {
        EnvConfig::new(rho, q, x0 - 2 * steps - 1, x0 + 2 * steps + 1, 0, steps, seed)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Parameter(format!("rho={} must be >= 0", self.rho)));
        }
        kernel::step_distribution(self.q)?;
        if self.x_min > self.x_max {
            return Err(Error::Parameter("x_min > x_max".into()));
        }
        if !(self.t_min <= 0 && 0 <= self.t_max) {
            return Err(Error::Parameter("time window must satisfy t_min <= 0 <= t_max".into()));
        }
        Ok(())
    }

    pub fn sites(&self) -> i64 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> i64 {
        self.t_max - self.t_min + 1
    }

    /// Region where occupancy equals the infinite-volume law.
    pub fn exact_region(&self) -> ExactRegion {
        ExactRegion {
            x_min: self.x_min,
            x_max: self.x_max,
            t_min: self.t_min,
            t_max: self.t_max,
        }
    }
}

/// `{(x, n) : x_min + |n| <= x <= x_max - |n|, t_min <= n <= t_max}`.
///
/// Inside this set no particle from outside the sampled sites can have
/// reached `x` by time `n`, so truncation introduces no bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactRegion {
    pub x_min: i64,
    pub x_max: i64,
    pub t_min: i64,
    pub t_max: i64,
}

impl ExactRegion {
    pub fn contains(&self, x: i64, n: i64) -> bool {
        n >= self.t_min
            && n <= self.t_max
            && x >= self.x_min + n.abs()
            && x <= self.x_max - n.abs()
    }
}

/// Lazy-walk step decision thresholds on the top 53 bits of a word.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepThresholds {
    hold: u64,
    up: u64,
}

impl StepThresholds {
    pub(crate) fn new(q: f64) -> Self {
        let scale = (1u64 << 53) as f64;
        let hold = (q * scale).round() as u64;
        let up = (((1.0 + q) / 2.0) * scale).round() as u64;
        StepThresholds { hold, up }
    }

    #[inline]
    pub(crate) fn step(&self, w: u64) -> i64 {
        let bits = w >> 11;
        if bits < self.hold {
            0
        } else if bits < self.up {
            1
        } else {
            -1
        }
    }
}

/// Poisson count of particles at site `z` at time 0.
pub(crate) fn site_count(seed: u64, rho: f64, z: i64) -> u64 {
    Stream::new(key(seed, TAG_COUNT, word(z), 0)).poisson(rho)
}

pub(crate) fn fwd_stream(seed: u64, z: i64, i: u64) -> Stream {
    Stream::new(key(seed, TAG_FWD, word(z), i))
}

pub(crate) fn bwd_stream(seed: u64, z: i64, i: u64) -> Stream {
    Stream::new(key(seed, TAG_BWD, word(z), i))
}

/// One realised environment on a finite window, with full trajectories.
#[derive(Clone, Debug)]
pub struct Environment {
    cfg: EnvConfig,
    counts0: Vec<u32>,
    /// `(z, i)` identity per particle, `i` starting at 1 within its site.
    particles: Vec<(i64, u32)>,
    /// Positions, time-major: `pos[t - t_min][particle]`.
    pos: Vec<Vec<i32>>,
}

/// Draw an environment. Deterministic given `cfg` (including the seed).
pub fn sample_environment(cfg: &EnvConfig) -> Result<Environment> {
    cfg.validate()?;
    let expected = cfg.rho * cfg.sites() as f64 * cfg.height() as f64;
    if expected > cfg.max_cells as f64 {
        return Err(Error::Resource(format!(
            "expected {expected:.0} particle-cells exceed cap {}",
            cfg.max_cells
        )));
    }

    let mut counts0 = Vec::with_capacity(cfg.sites() as usize);
    let mut particles = Vec::new();
    for z in cfg.x_min..=cfg.x_max {
        let n = site_count(cfg.seed, cfg.rho, z) as u32;
        counts0.push(n);
        for i in 1..=n {
            particles.push((z, i));
        }
    }
    let cells = particles.len() as u64 * cfg.height() as u64;
    if cells > cfg.max_cells.saturating_mul(2) {
        return Err(Error::Resource(format!(
            "realised {cells} particle-cells exceed cap {}",
            cfg.max_cells
        )));
    }

    let th = StepThresholds::new(cfg.q);
    let height = cfg.height() as usize;
    let zero_idx = (-cfg.t_min) as usize;
    let mut pos = vec![vec![0i32; particles.len()]; height];
    for (p, &(z, _)) in particles.iter().enumerate() {
        pos[zero_idx][p] = z as i32;
    }
    // Forward half.
    let mut streams: Vec<Stream> =
        particles.iter().map(|&(z, i)| fwd_stream(cfg.seed, z, i as u64)).collect();
    for t in zero_idx..height - 1 {
        let (head, tail) = pos.split_at_mut(t + 1);
        let cur = &head[t];
        let next = &mut tail[0];
        for p in 0..cur.len() {
            next[p] = cur[p] + th.step(streams[p].next_u64()) as i32;
        }
    }
    let mut env = Environment { cfg: *cfg, counts0, particles, pos };
    env.fill_backward(th);
    Ok(env)
}

impl Environment {
    fn fill_backward(&mut self, th: StepThresholds) {
        let zero_idx = (-self.cfg.t_min) as usize;
        if zero_idx == 0 {
            return;
        }
        let mut streams: Vec<Stream> = self
            .particles
            .iter()
            .map(|&(z, i)| bwd_stream(self.cfg.seed, z, i as u64))
            .collect();
        for t in (0..zero_idx).rev() {
            for p in 0..self.particles.len() {
                let above = self.pos[t + 1][p];
                self.pos[t][p] = above + th.step(streams[p].next_u64()) as i32;
            }
        }
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn exact_region(&self) -> ExactRegion {
        self.cfg.exact_region()
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn particle_identity(&self, p: usize) -> (i64, u32) {
        self.particles[p]
    }

    /// Initial count `N(z, 0)` for a window site.
    pub fn count_at_origin_time(&self, z: i64) -> Option<u32> {
        if z < self.cfg.x_min || z > self.cfg.x_max {
            None
        } else {
            Some(self.counts0[(z - self.cfg.x_min) as usize])
        }
    }

    /// Position of particle `p` at time `t`.
    pub fn position(&self, p: usize, t: i64) -> i32 {
        self.pos[(t - self.cfg.t_min) as usize][p]
    }

    /// All particle positions at time `t` (window times only).
    pub fn slice(&self, t: i64) -> &[i32] {
        &self.pos[(t - self.cfg.t_min) as usize]
    }

    fn check_query(&self, x: i64, n: i64) -> Result<()> {
        if !self.exact_region().contains(x, n) {
            return Err(Error::Range(format!(
                "query ({x}, {n}) outside the exact region of the sampled window"
            )));
        }
        Ok(())
    }

    /// `N(x, n)`: number of particles at `(x, n)`. Errors outside the exact
    /// region rather than answering with a biased value.
    pub fn count(&self, x: i64, n: i64) -> Result<u32> {
        self.check_query(x, n)?;
        let xi = x as i32;
        Ok(self.slice(n).iter().filter(|&&p| p == xi).count() as u32)
    }

    /// Whether `(x, n)` lies on the trace of some particle.
    pub fn occupied(&self, x: i64, n: i64) -> Result<bool> {
        self.check_query(x, n)?;
        let xi = x as i32;
        Ok(self.slice(n).iter().any(|&p| p == xi))
    }

    /// Map `position -> count` for a whole time slice, built in one pass.
    pub fn slice_counts(&self, t: i64) -> HashMap<i64, u32> {
        let mut m = HashMap::new();
        for &p in self.slice(t) {
            *m.entry(p as i64).or_insert(0) += 1;
        }
        m
    }

    /// A copy of this environment with extra trajectories appended; the
    /// extras must span the full time window and take nearest-or-hold steps.
    /// This realises an enlargement `omega <= omega'` for coupling tests.
    pub fn augmented(&self, extras: &[Vec<i32>]) -> Result<Environment> {
        let height = self.cfg.height() as usize;
        for (j, tr) in extras.iter().enumerate() {
            if tr.len() != height {
                return Err(Error::Parameter(format!(
                    "extra trajectory {j} has length {} != window height {height}",
                    tr.len()
                )));
            }
            if tr.windows(2).any(|w| (w[1] - w[0]).abs() > 1) {
                return Err(Error::Parameter(format!("extra trajectory {j} breaks the speed limit")));
            }
        }
        let mut env = self.clone();
        let zero_idx = (-self.cfg.t_min) as usize;
        for tr in extras {
            let z = tr[zero_idx] as i64;
            let i = if z >= self.cfg.x_min && z <= self.cfg.x_max {
                let c = &mut env.counts0[(z - self.cfg.x_min) as usize];
                *c += 1;
                *c
            } else {
                u32::MAX
            };
            env.particles.push((z, i));
            for (t, row) in env.pos.iter_mut().enumerate() {
                row.push(tr[t]);
            }
        }
        Ok(env)
    }

    /// Rows `(z, i, n, position)` for dumping.
    pub fn dump_rows(&self) -> impl Iterator<Item = (i64, u32, i64, i64)> + '_ {
        let t_min = self.cfg.t_min;
        self.particles.iter().enumerate().flat_map(move |(p, &(z, i))| {
            self.pos
                .iter()
                .enumerate()
                .map(move |(ti, row)| (z, i, t_min + ti as i64, row[p] as i64))
        })
    }
}

/// Sorted per-slice occupancy index for query-heavy workloads (many walks
/// sharing one environment). Queries are O(log particles).
pub struct OccupancyIndex {
    region: ExactRegion,
    t_min: i64,
    slices: Vec<Vec<i32>>,
}

impl OccupancyIndex {
    pub fn build(env: &Environment) -> OccupancyIndex {
        let cfg = env.cfg();
        let slices = (cfg.t_min..=cfg.t_max)
            .map(|t| {
                let mut v = env.slice(t).to_vec();
                v.sort_unstable();
                v
            })
            .collect();
        OccupancyIndex { region: env.exact_region(), t_min: cfg.t_min, slices }
    }

    pub fn occupied(&self, x: i64, n: i64) -> Result<bool> {
        if !self.region.contains(x, n) {
            return Err(Error::Range(format!(
                "query ({x}, {n}) outside the exact region of the sampled window"
            )));
        }
        let slice = &self.slices[(n - self.t_min) as usize];
        Ok(slice.binary_search(&(x as i32)).is_ok())
    }
}

/// Closed-form annealed covariance of the occupancy indicators at `(0, 0)`
/// and `(0, n)`: `exp(-2 rho) (exp(rho p_n(0,0)) - 1)`.
///
/// The derivation decomposes on `w(n) != w(0)` and is valid for `n >= 1`;
/// `n = 0` is rejected.
pub fn covariance_theory(rho: f64, q: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter(
            "covariance formula holds for n >= 1; the n = 0 case is a plain variance".into(),
        ));
    }
    if rho < 0.0 {
        return Err(Error::Parameter("rho must be >= 0".into()));
    }
    let k = kernel::heat_kernel(q, n)?;
    Ok((-2.0 * rho).exp() * ((rho * k.prob(0)).exp() - 1.0))
}

/// Sample a second environment agreeing with `base` exactly on the counts
/// and forward trajectories of the cone base `H` of `b`, and re-randomised
/// (seed `fresh_seed`) everywhere else: off-`H` sites and all backward
/// halves.
pub fn resample_outside_cone_base(
    base: &Environment,
    fresh_seed: u64,
    b: &SpaceTimeBox,
) -> Result<Environment> {
    let (h_lo, h_hi) = cone_base(b);
    let cfg = base.cfg;
    if h_lo < cfg.x_min || h_hi > cfg.x_max || b.t_hi > cfg.t_max || b.t_lo < 0 {
        return Err(Error::Precondition(
            "box cone base must lie inside the sampled window".into(),
        ));
    }
    let mut cfg2 = cfg;
    cfg2.seed = fresh_seed;
    let th = StepThresholds::new(cfg.q);
    let mut counts0 = Vec::with_capacity(cfg.sites() as usize);
    let mut particles = Vec::new();
    for z in cfg.x_min..=cfg.x_max {
        let seed = if (h_lo..=h_hi).contains(&z) { cfg.seed } else { fresh_seed };
        let n = site_count(seed, cfg.rho, z) as u32;
        counts0.push(n);
        for i in 1..=n {
            particles.push((z, i));
        }
    }
    let height = cfg.height() as usize;
    let zero_idx = (-cfg.t_min) as usize;
    let mut pos = vec![vec![0i32; particles.len()]; height];
    for (p, &(z, _)) in particles.iter().enumerate() {
        pos[zero_idx][p] = z as i32;
    }
    let mut streams: Vec<Stream> = particles
        .iter()
        .map(|&(z, i)| {
            let seed = if (h_lo..=h_hi).contains(&z) { cfg.seed } else { fresh_seed };
            fwd_stream(seed, z, i as u64)
        })
        .collect();
    for t in zero_idx..height - 1 {
        for p in 0..particles.len() {
            let cur = pos[t][p];
            pos[t + 1][p] = cur + th.step(streams[p].next_u64()) as i32;
        }
    }
    let mut env = Environment { cfg: cfg2, counts0, particles, pos };
    // Backward halves always take the fresh seed: they lie below H.
    let mut bstreams: Vec<Stream> = env
        .particles
        .iter()
        .map(|&(z, i)| bwd_stream(fresh_seed, z, i as u64))
        .collect();
    for t in (0..zero_idx).rev() {
        for p in 0..env.particles.len() {
            let above = env.pos[t + 1][p];
            env.pos[t][p] = above + th.step(bstreams[p].next_u64()) as i32;
        }
    }
    Ok(env)
}

/// Base at time 0 of the speed-one cone over `b`: `[x_lo - t_hi, x_hi + t_hi]`.
pub fn cone_base(b: &SpaceTimeBox) -> (i64, i64) {
    (b.x_lo - b.t_hi, b.x_hi + b.t_hi)
}

/// Check that two environments sharing counts and forward trajectories on
/// the cone base of `b` produce identical occupancy on all of `b`.
///
/// The shared-data precondition is verified first; violating it is an error
/// rather than a `false`.
pub fn boundary_determinism_check(
    env1: &Environment,
    env2: &Environment,
    b: &SpaceTimeBox,
) -> Result<bool> {
    if env1.cfg.x_min != env2.cfg.x_min
        || env1.cfg.x_max != env2.cfg.x_max
        || env1.cfg.t_min != env2.cfg.t_min
        || env1.cfg.t_max != env2.cfg.t_max
    {
        return Err(Error::Precondition("environments must share the window".into()));
    }
    if b.t_lo < 0 || b.t_hi > env1.cfg.t_max {
        return Err(Error::Precondition("box must lie in forward time inside the window".into()));
    }
    let (h_lo, h_hi) = cone_base(b);
    if h_lo < env1.cfg.x_min || h_hi > env1.cfg.x_max {
        return Err(Error::Precondition("cone base leaves the sampled window".into()));
    }
    for z in h_lo..=h_hi {
        if env1.count_at_origin_time(z) != env2.count_at_origin_time(z) {
            return Err(Error::Precondition(format!("counts differ on H at z={z}")));
        }
    }
    // Forward traces of particles started on H must agree.
    let collect = |env: &Environment| -> Vec<(i64, u32)> {
        env.particles
            .iter()
            .enumerate()
            .filter(|(_, &(z, _))| (h_lo..=h_hi).contains(&z))
            .map(|(p, &(z, i))| {
                let _ = p;
                (z, i)
            })
            .collect()
    };
    let ids1 = collect(env1);
    let ids2 = collect(env2);
    if ids1 != ids2 {
        return Err(Error::Precondition("particle sets differ on H".into()));
    }
    let index_of = |env: &Environment, id: (i64, u32)| {
        env.particles.iter().position(|&pi| pi == id).unwrap()
    };
    for &id in &ids1 {
        let p1 = index_of(env1, id);
        let p2 = index_of(env2, id);
        for t in 0..=b.t_hi {
            if env1.position(p1, t) != env2.position(p2, t) {
                return Err(Error::Precondition(format!(
                    "forward trace of particle {id:?} differs at t={t}"
                )));
            }
        }
    }
    // The claim under test: occupancy over b is a function of the shared data.
    for t in b.t_lo..=b.t_hi {
        let s1 = env1.slice_counts(t);
        let s2 = env2.slice_counts(t);
        for x in b.x_lo..=b.x_hi {
            if s1.get(&x).copied().unwrap_or(0) != s2.get(&x).copied().unwrap_or(0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
