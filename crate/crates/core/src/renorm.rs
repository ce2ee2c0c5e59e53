//! Multiscale machinery: the deterministic scale/velocity/density ladders,
//! box geometry, Monte Carlo estimation of the bad-box probabilities, the
//! three-slow-boxes implication, and the tail-sum inequality.

use num::bigint::BigUint;
use num::ToPrimitive;
use serde::Serialize;

use crate::env::{sample_environment, EnvConfig, OccupancyIndex, SpaceTimeBox};
use crate::rng::key;
use crate::walker::{line_ensemble_terminals, UniformField, WalkParams};
use crate::{Error, Result};

/// Deterministic sequences of the renormalisation scheme.
///
/// Scales are exact integers (`L_{k+1} = floor(sqrt(L_k)) L_k` grows beyond
/// `u64` within a dozen steps, hence big integers); velocities and densities
/// are floating point.
#[derive(Clone, Debug, Serialize)]
pub struct ScaleLadder {
    pub l0: u64,
    pub v: f64,
    pub v_bullet: f64,
    pub delta: f64,
    pub rho0: f64,
    pub gamma: f64,
    /// `L_0 .. L_kmax`, exact; extension stops at [`SCALE_BIT_GUARD`] bits
    /// (the float sequences continue past that point, where
    /// `L_k^{-1/16}` underflows to zero anyway).
    pub scales: Vec<BigUint>,
    pub scales_truncated: bool,
    /// `v_1 .. v_kmax`.
    pub velocities: Vec<f64>,
    /// `rho_0 .. rho_kmax`.
    pub densities: Vec<f64>,
    /// Partial products `rho_0 prod_{l<k} (1 + L_l^{-1/16})`.
    pub rho_star_partials: Vec<f64>,
}

/// Exact scales stop growing past this many bits; `L_{k+1} = floor(sqrt(L_k)) L_k`
/// squares the digit count every other level, so unguarded growth is
/// astronomically expensive long before anything downstream could use it.
pub const SCALE_BIT_GUARD: u64 = 8192;

/// Build the ladder. `v` is the target speed, `delta = (v_bullet - v) / 2`.
pub fn build_ladder(l0: u64, v: f64, v_bullet: f64, rho0: f64, k_max: usize) -> Result<ScaleLadder> {
    if l0 < 4 {
        return Err(Error::Parameter(format!("L0={l0} must be >= 4")));
    }
    if !(v < v_bullet) {
        return Err(Error::Parameter(format!("need v={v} < v_bullet={v_bullet}")));
    }
    if !(rho0 > 0.0) {
        return Err(Error::Parameter(format!("rho0={rho0} must be > 0")));
    }
    let delta = 0.5 * (v_bullet - v);
    let mut scales = vec![BigUint::from(l0)];
    let mut truncated = false;
    for _ in 0..k_max {
        let last = scales.last().unwrap();
        if last.bits() > SCALE_BIT_GUARD {
            truncated = true;
            break;
        }
        scales.push(last.sqrt() * last);
    }
    let six_over_pi2 = 6.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let mut velocities = vec![v_bullet - delta];
    for k in 1..k_max.max(1) {
        let prev = *velocities.last().unwrap();
        velocities.push(prev - delta * six_over_pi2 / (k as f64 * k as f64));
    }
    let mut densities = vec![rho0];
    let mut partials = vec![rho0];
    for k in 0..k_max {
        let lk = scales.get(k).map_or(f64::MAX, |l| l.to_f64().unwrap_or(f64::MAX));
        let next = densities[k] * (1.0 + lk.powf(-1.0 / 16.0));
        densities.push(next);
        partials.push(next);
    }
    Ok(ScaleLadder {
        l0,
        v,
        v_bullet,
        delta,
        rho0,
        gamma: 1.5,
        scales,
        scales_truncated: truncated,
        velocities,
        densities,
        rho_star_partials: partials,
    })
}

impl ScaleLadder {
    /// `L_k` as `i64`, erroring when the scale no longer fits.
    pub fn scale_i64(&self, k: usize) -> Result<i64> {
        self.scales
            .get(k)
            .and_then(|l| l.to_i64())
            .ok_or_else(|| Error::Parameter(format!("scale L_{k} outside native integer range")))
    }

    /// `v_k`; the bottom scale reuses `v_1`.
    pub fn velocity(&self, k: usize) -> f64 {
        if k <= 1 {
            self.velocities[0]
        } else {
            self.velocities[(k - 1).min(self.velocities.len() - 1)]
        }
    }

    pub fn density(&self, k: usize) -> f64 {
        self.densities[k.min(self.densities.len() - 1)]
    }

    /// Left side minus right side of the scale-change inequality
    /// `delta (6/pi^2)/k^2 >= 4 / floor(sqrt(L_k))` at level `k >= 1`.
    pub fn admissibility_margin(&self, k: usize) -> Result<f64> {
        if k < 1 || k >= self.scales.len() {
            return Err(Error::Parameter(format!("k={k} outside the computed ladder")));
        }
        let six_over_pi2 = 6.0 / (std::f64::consts::PI * std::f64::consts::PI);
        let lhs = self.delta * six_over_pi2 / (k as f64 * k as f64);
        let root = self.scales[k].sqrt().to_f64().unwrap_or(f64::MAX);
        Ok(lhs - 4.0 / root)
    }

    /// Whether the displacement-algebra hypothesis holds at level `k`.
    pub fn claim_admissible(&self, k: usize) -> Result<bool> {
        Ok(self.admissibility_margin(k)? >= 0.0)
    }
}

/// Result of scanning the ladder for the scale-change threshold.
#[derive(Clone, Debug, Serialize)]
pub struct K0Report {
    /// Smallest `k0` such that the inequality holds for every computed
    /// `k >= k0`; `None` when it fails at the last computed level, in which
    /// case nothing past the range can be asserted.
    pub k0: Option<usize>,
    pub holds: Vec<bool>,
}

/// Smallest `k0` with the inequality holding on all computed `k >= k0`.
pub fn k0_threshold(ladder: &ScaleLadder) -> Result<K0Report> {
    let mut holds = Vec::new();
    for k in 1..ladder.scales.len() {
        holds.push(ladder.claim_admissible(k)?);
    }
    // Last false entry bounds k0 from below.
    let k0 = match holds.iter().rposition(|&h| !h) {
        None => Some(1),
        Some(last_false) if last_false + 2 <= holds.len() => Some(last_false + 2),
        Some(_) => None,
    };
    Ok(K0Report { k0, holds })
}

// ---------------------------------------------------------------------------
// Box geometry
// ---------------------------------------------------------------------------

/// `B_L = ([-L, 2L] x [0, L])`.
pub fn scale_box(l: i64) -> SpaceTimeBox {
    SpaceTimeBox::new(-l, 2 * l, 0, l)
}

/// `B_L(m) = (r, s) L + B_L`.
pub fn translated_box(l: i64, m: (i64, i64)) -> SpaceTimeBox {
    SpaceTimeBox::new(m.0 * l - l, m.0 * l + 2 * l, m.1 * l, m.1 * l + l)
}

/// Start sites of `I_L(m) = (r, s) L + [0, L] x {0}` with its time level.
pub fn i_line(l: i64, m: (i64, i64)) -> (std::ops::RangeInclusive<i64>, i64) {
    (m.0 * l..=m.0 * l + l, m.1 * l)
}

/// `M_k`: all `m` whose translated `L_k`-box meets `B_{L_{k+1}}`.
pub fn m_index_set(lk: i64, lk1: i64) -> Vec<(i64, i64)> {
    let big = scale_box(lk1);
    let mut out = Vec::new();
    let r_lo = (big.x_lo - 2 * lk).div_euclid(lk);
    let r_hi = (big.x_hi + lk).div_euclid(lk);
    let s_lo = (big.t_lo - lk).div_euclid(lk);
    let s_hi = big.t_hi.div_euclid(lk);
    for r in r_lo..=r_hi {
        for s in s_lo..=s_hi {
            let b = translated_box(lk, (r, s));
            if b.x_lo <= big.x_hi && b.x_hi >= big.x_lo && b.t_lo <= big.t_hi && b.t_hi >= big.t_lo
            {
                out.push((r, s));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Bad-box events
// ---------------------------------------------------------------------------

/// Default guard on `site x step` work for box simulations.
pub const COST_GUARD: u64 = 1_000_000_000;

/// One realisation of the slow-box event on `B_L(m)`: walks from every
/// start of `I_L(m)`, sharing environment and field.
fn bad_event_on(
    occ: &OccupancyIndex,
    field: &UniformField,
    params: &WalkParams,
    l: i64,
    v_speed: f64,
    m: (i64, i64),
) -> Result<bool> {
    let (starts, t0) = i_line(l, m);
    let xs: Vec<i64> = starts.collect();
    let finals = line_ensemble_terminals(occ, field, params, &xs, t0, l as usize)?;
    Ok(xs.iter().zip(&finals).any(|(&x, &f)| ((f - x) as f64) < v_speed * l as f64))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PkEstimate {
    pub l: i64,
    pub v_speed: f64,
    pub rho: f64,
    pub replicas: u64,
    pub occurrences: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Monte Carlo estimate of `P(A(0))` for an explicit box scale and speed.
pub fn bad_event_probability(
    l: i64,
    v_speed: f64,
    rho: f64,
    q: f64,
    params: &WalkParams,
    replicas: u64,
    seed: u64,
) -> Result<PkEstimate> {
    let work = replicas as u128 * (l as u128 + 1) * (l as u128) + cost_env(l, rho, replicas);
    if work > COST_GUARD as u128 {
        return Err(Error::Resource(format!(
            "box simulation needs ~{work} site-steps, beyond the {COST_GUARD} guard"
        )));
    }
    let mut occurrences = 0u64;
    for rep in 0..replicas {
        let cfg = EnvConfig::new(
            rho,
            q,
            -2 * l - 1,
            3 * l + 1,
            0,
            l,
            key(seed, 0xB0B, rep, 0),
        );
        let env = sample_environment(&cfg)?;
        let occ = OccupancyIndex::build(&env);
        let field = UniformField::new(key(seed, 0xF1D, rep, 0));
        if bad_event_on(&occ, &field, params, l, v_speed, (0, 0))? {
            occurrences += 1;
        }
    }
    let p_hat = occurrences as f64 / replicas as f64;
    let half = crate::testing::proportion_half_width(p_hat, replicas as usize, 3.0);
    Ok(PkEstimate {
        l,
        v_speed,
        rho,
        replicas,
        occurrences,
        p_hat,
        ci_lo: (p_hat - half).max(0.0),
        ci_hi: (p_hat + half).min(1.0),
    })
}

fn cost_env(l: i64, rho: f64, replicas: u64) -> u128 {
    (replicas as f64 * rho.max(0.05) * (5 * l + 3) as f64 * (l + 1) as f64) as u128
}

/// `p_k` estimate at ladder level `k`, using `L_k`, `v_k` and `rho_k`.
pub fn bad_event_monte_carlo(
    ladder: &ScaleLadder,
    k: usize,
    q: f64,
    params: &WalkParams,
    replicas: u64,
    seed: u64,
) -> Result<PkEstimate> {
    let l = ladder.scale_i64(k)?;
    bad_event_probability(l, ladder.velocity(k), ladder.density(k), q, params, replicas, seed)
}

// ---------------------------------------------------------------------------
// Three-slow-boxes implication
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ClaimReport {
    pub k: usize,
    pub replicas: u64,
    /// Replicas where the level-(k+1) event occurred.
    pub occurrences: u64,
    /// Occurrences with fewer than three slow sub-boxes of distinct
    /// vertical index. Must be zero.
    pub violations: u64,
    /// Minimum number of distinct slow rows seen over the occurrences.
    pub min_slow_rows: Option<u64>,
}

/// Verify on seeded realisations: whenever `A_{k+1}(0)` occurs, at least
/// three boxes `B_{L_k}(m)`, with pairwise distinct vertical indices, are
/// slow on the same realisation.
///
/// Precondition: the displacement-algebra inequality must hold at level `k`
/// (the claim is not asserted below that).
pub fn three_slow_boxes_check(
    ladder: &ScaleLadder,
    k: usize,
    rho: f64,
    q: f64,
    params: &WalkParams,
    replicas: u64,
    seed: u64,
) -> Result<ClaimReport> {
    if !ladder.claim_admissible(k)? {
        return Err(Error::Precondition(format!(
            "scale-change inequality fails at k={k} (margin {:.4}); claim not asserted there",
            ladder.admissibility_margin(k)?
        )));
    }
    let lk = ladder.scale_i64(k)?;
    let lk1 = ladder.scale_i64(k + 1)?;
    let ms = m_index_set(lk, lk1);
    let work = replicas as u128
        * ((lk1 as u128 + 1) * lk1 as u128
            + ms.len() as u128 * (lk as u128 + 1) * lk as u128)
        + cost_env(lk1, rho, replicas) * 6;
    if work > COST_GUARD as u128 {
        return Err(Error::Resource(format!(
            "claim suite needs ~{work} site-steps, beyond the {COST_GUARD} guard"
        )));
    }
    // Window covering every sub-box walk exactly: queries happen at
    // absolute times up to t_hi, so the spatial margin must be t_hi wide.
    let t_hi = ms.iter().map(|m| (m.1 + 1) * lk).max().unwrap().max(lk1);
    let x_lo = ms.iter().map(|m| m.0 * lk).min().unwrap().min(0) - lk - t_hi - 1;
    let x_hi = ms.iter().map(|m| m.0 * lk + lk).max().unwrap().max(lk1) + lk + t_hi + 1;
    let v_big = ladder.velocity(k + 1);
    let v_small = ladder.velocity(k);
    let mut occurrences = 0u64;
    let mut violations = 0u64;
    let mut min_rows: Option<u64> = None;
    for rep in 0..replicas {
        let cfg = EnvConfig::new(rho, q, x_lo, x_hi, 0, t_hi, key(seed, 0xC1A, rep, 0));
        let env = sample_environment(&cfg)?;
        let occ = OccupancyIndex::build(&env);
        let field = UniformField::new(key(seed, 0xF1A, rep, 0));
        if !bad_event_on(&occ, &field, params, lk1, v_big, (0, 0))? {
            continue;
        }
        occurrences += 1;
        let mut slow_rows = std::collections::HashSet::new();
        for &m in &ms {
            if m.1 >= 0 && bad_event_on(&occ, &field, params, lk, v_small, m)? {
                slow_rows.insert(m.1);
            }
        }
        let rows = slow_rows.len() as u64;
        min_rows = Some(min_rows.map_or(rows, |r| r.min(rows)));
        if rows < 3 {
            violations += 1;
        }
    }
    Ok(ClaimReport { k, replicas, occurrences, violations, min_slow_rows: min_rows })
}

// ---------------------------------------------------------------------------
// Tail-sum inequality
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailSumCheck {
    pub beta: f64,
    pub a: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub d_const: f64,
    /// Certified relative bound on the truncation remainder of `lhs`.
    pub remainder_rel: f64,
    pub holds: bool,
}

fn log_tail_integrand(beta: f64, u: f64) -> f64 {
    ((beta + 1.0) * u - u.powf(1.5)).exp()
}

/// `int_a^inf x^beta exp(-log^{3/2} x) dx` by Simpson quadrature in
/// `u = log x` (the integrand becomes `exp((beta+1)u - u^{3/2})`).
fn tail_integral(beta: f64, a: f64) -> f64 {
    let u0 = a.ln();
    let h = 1.0 / 1024.0;
    let mut total = 0.0;
    let mut u = u0;
    let mut idle = 0;
    while idle < 64 {
        let f0 = log_tail_integrand(beta, u);
        let fm = log_tail_integrand(beta, u + h / 2.0);
        let f1 = log_tail_integrand(beta, u + h);
        let piece = h / 6.0 * (f0 + 4.0 * fm + f1);
        total += piece;
        idle = if piece < total * 1e-18 + 1e-300 { idle + 1 } else { 0 };
        u += h;
    }
    total
}

/// Check `sum_{l > a} l^beta e^{-log^{3/2} l} <= D a^{beta+1} e^{-log^{3/2} a}`
/// with `D = max(2 int_{alpha0}^inf x^beta e^{-log^{3/2} x} dx, 4/(beta+1))`.
pub fn tail_sum_check(beta: f64, a: u64) -> Result<TailSumCheck> {
    if beta <= 0.0 && beta != 0.0 {
        return Err(Error::Parameter("beta must be >= 0".into()));
    }
    let alpha0 = ((beta + 1.0) * (beta + 1.0)).exp();
    if (a as f64) < alpha0 {
        return Err(Error::Precondition(format!(
            "a={a} below alpha0=e^(beta+1)^2={alpha0:.3}"
        )));
    }
    let term = |l: f64| l.powf(beta) * (-(l.ln().powf(1.5))).exp();
    let mut lhs = 0.0f64;
    let mut l = a + 1;
    loop {
        let t = term(l as f64);
        lhs += t;
        // The summand decreases beyond alpha0, so the remainder past l is
        // bounded by the integral from l; probe it sparingly.
        if t < lhs * 1e-16 && l.is_power_of_two() && tail_integral(beta, l as f64) < lhs * 1e-12
        {
            break;
        }
        l += 1;
    }
    let remainder_rel = tail_integral(beta, l as f64) / lhs;
    let d_const = (2.0 * tail_integral(beta, alpha0)).max(4.0 / (beta + 1.0));
    let af = a as f64;
    let rhs = d_const * af.powf(beta + 1.0) * (-(af.ln().powf(1.5))).exp();
    Ok(TailSumCheck { beta, a, lhs, rhs, d_const, remainder_rel, holds: lhs <= rhs })
}
