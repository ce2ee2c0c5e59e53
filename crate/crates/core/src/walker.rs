//! The random walk driven by the environment and a static uniform field.
//!
//! The space-time walk `Y` moves up one time unit per step and jumps right
//! when the uniform variable at its current cell is below `p_bullet` (on the
//! trace) or `p_circ` (off the trace), and left otherwise. Sharing one field
//! across walkers realises the two monotone couplings: in the initial
//! position (same parity) and in the environment (when `v_circ <= v_bullet`).

use std::collections::HashMap;

use serde::Serialize;

use crate::env::{self, Environment, OccupancyIndex, StepThresholds};
use crate::rng::{key, unit_f64, word, Stream};
use crate::{Error, Result};

const TAG_FIELD: u64 = 0x0F1E;

/// Jump probabilities on vacant (`p_circ`) and occupied (`p_bullet`) sites.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WalkParams {
    pub p_circ: f64,
    pub p_bullet: f64,
}

impl WalkParams {
    pub fn new(p_circ: f64, p_bullet: f64) -> Result<Self> {
        for (name, p) in [("p_circ", p_circ), ("p_bullet", p_bullet)] {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::Parameter(format!("{name}={p} outside [0, 1]")));
            }
        }
        Ok(WalkParams { p_circ, p_bullet })
    }

    pub fn v_circ(&self) -> f64 {
        2.0 * self.p_circ - 1.0
    }

    pub fn v_bullet(&self) -> f64 {
        2.0 * self.p_bullet - 1.0
    }

    pub fn p_min(&self) -> f64 {
        self.p_circ.min(self.p_bullet)
    }
}

/// The i.i.d. uniform field `U_y`, realised lazily by a keyed generator so
/// coupled walkers and restarted walks see the same values.
#[derive(Clone, Copy, Debug)]
pub struct UniformField {
    seed: u64,
}

impl UniformField {
    pub fn new(seed: u64) -> Self {
        UniformField { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `U_(x,n)`, reproducible from `(seed, x, n)`.
    #[inline]
    pub fn u(&self, x: i64, n: i64) -> f64 {
        unit_f64(key(self.seed, TAG_FIELD, word(x), word(n)))
    }
}

/// A realised space-time walk: positions `xs[i]` at times `n0 + i`.
#[derive(Clone, Debug)]
pub struct Path {
    pub x0: i64,
    pub n0: i64,
    pub xs: Vec<i64>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn position(&self, i: usize) -> i64 {
        self.xs[i]
    }

    /// Space-time point `Y_i`.
    pub fn point(&self, i: usize) -> (i64, i64) {
        (self.xs[i], self.n0 + i as i64)
    }

    pub fn terminal(&self) -> i64 {
        *self.xs.last().unwrap()
    }
}

#[inline]
fn goes_right(occupied: bool, u: f64, params: &WalkParams) -> bool {
    if occupied {
        u <= params.p_bullet
    } else {
        u <= params.p_circ
    }
}

/// One step of the walk from `y = (x, n)`.
pub fn step(
    env: &Environment,
    field: &UniformField,
    params: &WalkParams,
    y: (i64, i64),
) -> Result<(i64, i64)> {
    let occ = env.occupied(y.0, y.1).map_err(|_| {
        Error::Range(format!(
            "walk left the certified region at ({}, {}); enlarge the window",
            y.0, y.1
        ))
    })?;
    let u = field.u(y.0, y.1);
    if goes_right(occ, u, params) {
        Ok((y.0 + 1, y.1 + 1))
    } else {
        Ok((y.0 - 1, y.1 + 1))
    }
}

/// Run the walk for `steps` steps from `y0`. Deterministic given
/// `(env, field, params, y0)`.
pub fn run_walk(
    env: &Environment,
    field: &UniformField,
    params: &WalkParams,
    y0: (i64, i64),
    steps: usize,
) -> Result<Path> {
    let mut xs = Vec::with_capacity(steps + 1);
    xs.push(y0.0);
    let mut y = y0;
    for _ in 0..steps {
        y = step(env, field, params, y)?;
        xs.push(y.0);
    }
    Ok(Path { x0: y0.0, n0: y0.1, xs })
}

/// Coupled pair started from `(x, n)` and `(x', n)` with `x <= x'` of the
/// same parity, sharing environment and field. The pathwise ordering
/// `X^{(x,n)}_i <= X^{(x',n)}_i` is asserted at every step.
pub fn coupled_pair_initial(
    env: &Environment,
    field: &UniformField,
    params: &WalkParams,
    left: (i64, i64),
    right: (i64, i64),
    steps: usize,
) -> Result<(Path, Path)> {
    if left.1 != right.1 {
        return Err(Error::Precondition("starts must share the same time".into()));
    }
    if left.0 > right.0 {
        return Err(Error::Precondition("left start must not exceed right start".into()));
    }
    if (right.0 - left.0) % 2 != 0 {
        return Err(Error::Precondition(format!(
            "starts {} and {} have different parity",
            left.0, right.0
        )));
    }
    let a = run_walk(env, field, params, left, steps)?;
    let b = run_walk(env, field, params, right, steps)?;
    for i in 0..=steps {
        assert!(
            a.xs[i] <= b.xs[i],
            "initial-position coupling violated at step {i}: {} > {}",
            a.xs[i],
            b.xs[i]
        );
    }
    Ok((a, b))
}

/// Coupled pair on `env` and on `env` enlarged by `extras`, sharing the
/// field. Requires `v_circ <= v_bullet`; the pathwise ordering
/// `X_i(env) <= X_i(env')` is asserted at every step.
pub fn coupled_pair_environment(
    env: &Environment,
    extras: &[Vec<i32>],
    field: &UniformField,
    params: &WalkParams,
    y0: (i64, i64),
    steps: usize,
) -> Result<(Path, Path)> {
    if params.v_circ() > params.v_bullet() {
        return Err(Error::Precondition(
            "environment coupling needs v_circ <= v_bullet".into(),
        ));
    }
    let enlarged = env.augmented(extras)?;
    let a = run_walk(env, field, params, y0, steps)?;
    let b = run_walk(&enlarged, field, params, y0, steps)?;
    for i in 0..=steps {
        assert!(
            a.xs[i] <= b.xs[i],
            "environment coupling violated at step {i}: {} > {}",
            a.xs[i],
            b.xs[i]
        );
    }
    Ok((a, b))
}

/// Walks from every start on a horizontal line, sharing environment and
/// field. Walkers that meet merge (they see identical uniforms afterwards),
/// so the per-step work shrinks with coalescence. Returns the terminal
/// position of each start.
pub fn line_ensemble_terminals(
    occ: &OccupancyIndex,
    field: &UniformField,
    params: &WalkParams,
    x_starts: &[i64],
    n0: i64,
    steps: usize,
) -> Result<Vec<i64>> {
    let mut positions: Vec<i64> = x_starts.to_vec();
    let mut moves: HashMap<i64, i64> = HashMap::new();
    for s in 0..steps {
        let n = n0 + s as i64;
        moves.clear();
        for &p in &positions {
            if let std::collections::hash_map::Entry::Vacant(e) = moves.entry(p) {
                let on_trace = occ.occupied(p, n)?;
                let dir = if goes_right(on_trace, field.u(p, n), params) { 1 } else { -1 };
                e.insert(dir);
            }
        }
        for p in positions.iter_mut() {
            *p += moves[p];
        }
    }
    Ok(positions)
}

/// Long walk against a streamed environment: particles advance in lockstep
/// with the walker and are dropped once they can no longer meet it. Exactly
/// equal in law (and in realisation, by shared substreams) to running
/// against the materialised environment, at O(particles) memory.
pub fn stream_walk(
    rho: f64,
    q: f64,
    env_seed: u64,
    field: &UniformField,
    params: &WalkParams,
    x0: i64,
    steps: usize,
) -> Vec<i64> {
    let th = StepThresholds::new(q);
    let reach = 2 * steps as i64 + 1;
    let mut parts: Vec<(i64, Stream)> = Vec::new();
    for z in (x0 - reach)..=(x0 + reach) {
        let n = env::site_count(env_seed, rho, z);
        for i in 1..=n {
            parts.push((z, env::fwd_stream(env_seed, z, i)));
        }
    }
    let mut xs = Vec::with_capacity(steps + 1);
    let mut x = x0;
    xs.push(x);
    for t in 0..steps {
        let occ = parts.iter().any(|&(p, _)| p == x);
        let u = field.u(x, t as i64);
        x += if goes_right(occ, u, params) { 1 } else { -1 };
        xs.push(x);
        for part in parts.iter_mut() {
            part.0 += th.step(part.1.next_u64());
        }
        if t % 64 == 63 {
            let remaining = 2 * (steps - t - 1) as i64;
            parts.retain(|&(p, _)| (p - x).abs() <= remaining);
        }
    }
    xs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, EnvConfig};

    fn env_for(steps: i64, rho: f64, seed: u64) -> Environment {
        sample_environment(&EnvConfig::for_walk(rho, 0.5, 0, steps, seed)).unwrap()
    }

    #[test]
    fn degenerate_drifts() {
        let env = env_for(16, 1.0, 1);
        let field = UniformField::new(2);
        let all_right = WalkParams::new(1.0, 1.0).unwrap();
        let p = run_walk(&env, &field, &all_right, (0, 0), 16).unwrap();
        assert_eq!(p.terminal(), 16);
        let all_left = WalkParams::new(0.0, 0.0).unwrap();
        let p = run_walk(&env, &field, &all_left, (0, 0), 16).unwrap();
        assert_eq!(p.terminal(), -16);
    }

    #[test]
    fn zero_steps_is_singleton() {
        let env = env_for(4, 0.5, 3);
        let field = UniformField::new(4);
        let params = WalkParams::new(0.3, 0.8).unwrap();
        let p = run_walk(&env, &field, &params, (2, 0), 0).unwrap();
        assert_eq!(p.xs, vec![2]);
    }

    #[test]
    fn nearest_neighbour_always() {
        let env = env_for(200, 1.0, 5);
        let field = UniformField::new(6);
        let params = WalkParams::new(0.3, 0.8).unwrap();
        let p = run_walk(&env, &field, &params, (0, 0), 200).unwrap();
        for w in p.xs.windows(2) {
            assert_eq!((w[1] - w[0]).abs(), 1);
        }
    }

    #[test]
    fn threshold_semantics_on_occupied_site() {
        // Find a cell whose uniform lies in (0.2, 0.5), pin a particle there,
        // and check both sides of the threshold.
        let field = UniformField::new(11);
        let x = (0..1000)
            .find(|&x| {
                let u = field.u(x, 0);
                u > 0.2 && u < 0.5
            })
            .unwrap();
        let cfg = EnvConfig::new(0.0, 0.5, x - 8, x + 8, 0, 4, 9);
        let base = sample_environment(&cfg).unwrap();
        let env = base.augmented(&[vec![x as i32; cfg.height() as usize]]).unwrap();
        assert!(env.occupied(x, 0).unwrap());
        let hi = WalkParams::new(0.0, 0.5).unwrap();
        assert_eq!(step(&env, &field, &hi, (x, 0)).unwrap(), (x + 1, 1));
        let lo = WalkParams::new(0.0, 0.2).unwrap();
        assert_eq!(step(&env, &field, &lo, (x, 0)).unwrap(), (x - 1, 1));
    }

    #[test]
    fn leaving_window_is_a_range_error() {
        let cfg = EnvConfig::new(0.5, 0.5, -4, 4, 0, 16, 3);
        let env = sample_environment(&cfg).unwrap();
        let field = UniformField::new(1);
        let params = WalkParams::new(1.0, 1.0).unwrap();
        let err = run_walk(&env, &field, &params, (0, 0), 16).unwrap_err();
        assert!(matches!(err, Error::Range(_)));
    }

    #[test]
    fn homogeneous_walk_obeys_hoeffding_band() {
        // rho = 0, p_circ = 0.7: drift 0.4; a single path of length 5000
        // stays within 0.1 of the drift with overwhelming probability.
        let env = env_for(5000, 0.0, 21);
        let field = UniformField::new(22);
        let params = WalkParams::new(0.7, 0.7).unwrap();
        let p = run_walk(&env, &field, &params, (0, 0), 5000).unwrap();
        let v_hat = p.terminal() as f64 / 5000.0;
        assert!((v_hat - 0.4).abs() <= 0.1, "v_hat={v_hat}");
    }

    #[test]
    fn fully_occupied_env_walks_like_homogeneous_bullet_walk() {
        // With rho large the path sees only occupied sites, so X_n matches a
        // p_bullet walk driven by the same field exactly.
        let steps = 64usize;
        let params = WalkParams::new(0.2, 0.8).unwrap();
        for seed in 0..20u64 {
            let cfg = EnvConfig::for_walk(30.0, 0.5, 0, steps as i64, 100 + seed);
            let env = sample_environment(&cfg).unwrap();
            let field = UniformField::new(200 + seed);
            let p = run_walk(&env, &field, &params, (0, 0), steps).unwrap();
            for i in 0..steps {
                assert!(env.occupied(p.xs[i], i as i64).unwrap(), "vacancy met at rho=30");
            }
            let mut x = 0i64;
            for n in 0..steps as i64 {
                x += if field.u(x, n) <= 0.8 { 1 } else { -1 };
            }
            assert_eq!(x, p.terminal());
        }
    }

    #[test]
    fn initial_coupling_examples() {
        let env = env_for(64, 1.0, 31);
        let field = UniformField::new(32);
        let params = WalkParams::new(0.3, 0.8).unwrap();
        let (a, b) = coupled_pair_initial(&env, &field, &params, (0, 0), (0, 0), 64).unwrap();
        assert_eq!(a.xs, b.xs);
        let err =
            coupled_pair_initial(&env, &field, &params, (0, 0), (1, 0), 8).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn initial_coupling_holds_over_seeded_trials() {
        let params = WalkParams::new(0.35, 0.75).unwrap();
        for seed in 0..1000u64 {
            let cfg = EnvConfig::for_walk(0.8, 0.5, 0, 40, 5_000 + seed);
            let env = sample_environment(&cfg).unwrap();
            let field = UniformField::new(9_000 + seed);
            // Ordering asserted inside.
            coupled_pair_initial(&env, &field, &params, (0, 0), (2, 0), 38).unwrap();
        }
    }

    #[test]
    fn environment_coupling_holds_over_seeded_trials() {
        let params = WalkParams::new(0.3, 0.8).unwrap();
        for seed in 0..1000u64 {
            let cfg = EnvConfig::for_walk(0.5, 0.5, 0, 40, 70_000 + seed);
            let env = sample_environment(&cfg).unwrap();
            let field = UniformField::new(80_000 + seed);
            let height = cfg.height() as usize;
            // A particle pinned on the walker's start column.
            let extra = vec![0i32; height];
            let (a, b) =
                coupled_pair_environment(&env, &[extra], &field, &params, (0, 0), 38).unwrap();
            assert!(a.terminal() <= b.terminal());
        }
    }

    #[test]
    fn environment_coupling_rejects_decreasing_drifts() {
        let env = env_for(8, 0.5, 41);
        let field = UniformField::new(42);
        let params = WalkParams::new(0.8, 0.3).unwrap();
        let err =
            coupled_pair_environment(&env, &[], &field, &params, (0, 0), 8).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn environment_coupling_empty_extras_identical() {
        let env = env_for(32, 1.0, 43);
        let field = UniformField::new(44);
        let params = WalkParams::new(0.3, 0.8).unwrap();
        let (a, b) = coupled_pair_environment(&env, &[], &field, &params, (0, 0), 32).unwrap();
        assert_eq!(a.xs, b.xs);
    }

    #[test]
    fn quenched_annealed_consistency() {
        // Averaged over environments, the one-step right probability at a
        // vacant (resp. occupied) site reproduces p_circ (resp. p_bullet).
        let params = WalkParams::new(0.3, 0.8).unwrap();
        let trials = 10_000u64;
        let mut vac = (0u64, 0u64);
        let mut occ = (0u64, 0u64);
        for seed in 0..trials {
            let cfg = EnvConfig::new(0.7, 0.5, -3, 3, 0, 2, seed);
            let env = sample_environment(&cfg).unwrap();
            let field = UniformField::new(!seed);
            let right = step(&env, &field, &params, (0, 0)).unwrap().0 == 1;
            if env.occupied(0, 0).unwrap() {
                occ.0 += 1;
                occ.1 += u64::from(right);
            } else {
                vac.0 += 1;
                vac.1 += u64::from(right);
            }
        }
        let p_vac = vac.1 as f64 / vac.0 as f64;
        let p_occ = occ.1 as f64 / occ.0 as f64;
        let se = |p: f64, n: f64| 3.0 * (p * (1.0 - p) / n).sqrt();
        assert!((p_vac - 0.3).abs() <= se(0.3, vac.0 as f64), "p_vac={p_vac}");
        assert!((p_occ - 0.8).abs() <= se(0.8, occ.0 as f64), "p_occ={p_occ}");
    }

    #[test]
    fn streaming_matches_materialised() {
        let steps = 300usize;
        for seed in [1u64, 2, 3] {
            let cfg = EnvConfig::for_walk(1.0, 0.5, 0, steps as i64, seed);
            let env = sample_environment(&cfg).unwrap();
            let field = UniformField::new(seed ^ 0xAB);
            let params = WalkParams::new(0.3, 0.8).unwrap();
            let a = run_walk(&env, &field, &params, (0, 0), steps).unwrap();
            let b = stream_walk(1.0, 0.5, seed, &field, &params, 0, steps);
            assert_eq!(a.xs, b);
        }
    }

    #[test]
    fn line_ensemble_matches_individual_walks() {
        let cfg = EnvConfig::new(1.0, 0.5, -80, 80, 0, 24, 61);
        let env = sample_environment(&cfg).unwrap();
        let field = UniformField::new(62);
        let params = WalkParams::new(0.3, 0.8).unwrap();
        let starts: Vec<i64> = (0..=16).collect();
        let occ = OccupancyIndex::build(&env);
        let finals = line_ensemble_terminals(&occ, &field, &params, &starts, 0, 24).unwrap();
        for (j, &x0) in starts.iter().enumerate() {
            let p = run_walk(&env, &field, &params, (x0, 0), 24).unwrap();
            assert_eq!(finals[j], p.terminal(), "start {x0}");
        }
    }

    #[test]
    fn field_is_uniform() {
        let field = UniformField::new(77);
        let us: Vec<f64> = (0..4000).map(|i| field.u(i % 200, i / 200)).collect();
        let (_, p) = crate::testing::ks_one_sample(&us, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p={p}");
    }
}
