//! Discrete heat kernel of the lazy simple random walk.
//!
//! The walk holds with probability `q` and steps `-1`/`+1` with probability
//! `(1-q)/2` each. Kernels are stored on their exact support `[-n, n]` and
//! computed by repeated convolution in double precision; a rational mode
//! provides exact values for moderate step counts and is used by the tests
//! to pin down the floating-point error.

use num::rational::Ratio;
use num::BigInt;
use serde::Serialize;

use crate::{Error, Result};

/// One-step distribution of the lazy walk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDistribution {
    q: f64,
}

impl StepDistribution {
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Probability mass of a step in `{-1, 0, 1}`.
    pub fn mass(&self, step: i64) -> f64 {
        match step {
            0 => self.q,
            -1 | 1 => 0.5 * (1.0 - self.q),
            _ => 0.0,
        }
    }

    /// One-step variance `1 - q`.
    pub fn variance(&self) -> f64 {
        1.0 - self.q
    }
}

/// Build the one-step distribution, checking `0 <= q <= 1`.
///
/// The model itself requires `q` in the open interval; the closed endpoints
/// are allowed here because degenerate kernels are useful in tests.
pub fn step_distribution(q: f64) -> Result<StepDistribution> {
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(Error::Parameter(format!("laziness q={q} outside [0, 1]")));
    }
    Ok(StepDistribution { q })
}

/// `n`-step kernel `x -> p_n(0, x)` on support `[-n, n]`.
#[derive(Clone, Debug)]
pub struct HeatKernel {
    q: f64,
    n: u32,
    values: Vec<f64>,
}

impl HeatKernel {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn steps(&self) -> u32 {
        self.n
    }

    /// `p_n(0, x)`; zero outside the support.
    pub fn prob(&self, x: i64) -> f64 {
        let n = self.n as i64;
        if x < -n || x > n {
            0.0
        } else {
            self.values[(x + n) as usize]
        }
    }

    /// Iterate `(x, p_n(0, x))` over the support in increasing `x`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let n = self.n as i64;
        self.values.iter().enumerate().map(move |(i, &p)| (i as i64 - n, p))
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// `P_0(Z_n in H)` for a set of sites.
    pub fn prob_in(&self, sites: &[i64]) -> f64 {
        sites.iter().map(|&x| self.prob(x)).sum()
    }

    /// Exact two-sided tail `P_0(|Z_n| > r)`.
    pub fn tail_beyond(&self, r: f64) -> f64 {
        self.iter().filter(|&(x, _)| (x as f64).abs() > r).map(|(_, p)| p).sum()
    }
}

/// Exact `n`-fold convolution of the one-step distribution.
pub fn heat_kernel(q: f64, n: u32) -> Result<HeatKernel> {
    let step = step_distribution(q)?;
    let mut values = vec![1.0f64];
    for _ in 0..n {
        values = convolve_step(&values, &step);
    }
    Ok(HeatKernel { q, n, values })
}

/// One more convolution step. The upper half is mirrored from the lower
/// half so the symmetry `p_n(0, x) = p_n(0, -x)` holds bit-exactly.
fn convolve_step(prev: &[f64], step: &StepDistribution) -> Vec<f64> {
    let q = step.q();
    let side = 0.5 * (1.0 - q);
    let m = prev.len() + 2;
    let mut next = vec![0.0f64; m];
    let get = |j: i64| if j < 0 || j >= prev.len() as i64 { 0.0 } else { prev[j as usize] };
    for j in 0..=(m - 1) / 2 {
        let i = j as i64;
        let v = get(i - 2) * side + get(i - 1) * q + get(i) * side;
        next[j] = v;
        next[m - 1 - j] = v;
    }
    next
}

/// Convolve two kernels with equal `q`: the semigroup product `p_{m+n}`.
pub fn convolve(a: &HeatKernel, b: &HeatKernel) -> HeatKernel {
    let mut values = vec![0.0f64; a.values.len() + b.values.len() - 1];
    for (i, &pa) in a.values.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (j, &pb) in b.values.iter().enumerate() {
            values[i + j] += pa * pb;
        }
    }
    HeatKernel { q: a.q, n: a.n + b.n, values }
}

/// Exact-rational kernels, used by tests as the independent oracle for the
/// floating-point path.
pub mod exact {
    use super::*;

    pub type Rat = Ratio<BigInt>;

    /// Exact `n`-step kernel for `q = q_num/q_den`, support `[-n, n]`.
    pub fn heat_kernel_exact(q_num: i64, q_den: i64, n: u32) -> Result<Vec<Rat>> {
        if q_den <= 0 || q_num < 0 || q_num > q_den {
            return Err(Error::Parameter(format!(
                "rational laziness {q_num}/{q_den} outside [0, 1]"
            )));
        }
        let hold = Rat::new(BigInt::from(q_num), BigInt::from(q_den));
        let one = Rat::from_integer(BigInt::from(1));
        let side = (one.clone() - hold.clone()) / Rat::from_integer(BigInt::from(2));
        let mut values = vec![one];
        for _ in 0..n {
            let mut next = vec![Rat::from_integer(BigInt::from(0)); values.len() + 2];
            for (i, p) in values.iter().enumerate() {
                next[i] += p * side.clone();
                next[i + 1] += p * hold.clone();
                next[i + 2] += p * side.clone();
            }
            values = next;
        }
        Ok(values)
    }
}

/// Scaled kernel statistics for one step count.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundRow {
    pub n: u32,
    /// `sup_x p_n(0,x) * sqrt(n)`.
    pub sup_scaled: f64,
    /// `max |p_n(0,x) - p_n(0,x+2)| * n / 2` over the support.
    pub smooth_scaled: f64,
    /// `P_0(|Z_n| > sqrt(n) log n) * exp(c log^2 n)`.
    pub tail_scaled: f64,
}

/// Empirically fitted constants for the kernel bounds.
///
/// The constants are reported, never assumed: `sup_constant` is the largest
/// observed `sup_x p_n(0,x) sqrt(n)` and so on. `*_bounded` flags whether the
/// scaled quantity stays bounded over the computed range (log-log trend of
/// the upper half below 5%), which fails by design for pure holding `q = 1`.
#[derive(Clone, Debug, Serialize)]
pub struct KernelBoundReport {
    pub q: f64,
    pub n_max: u32,
    pub tail_rate_c: f64,
    pub sup_constant: f64,
    pub smooth_constant: f64,
    pub tail_constant: f64,
    pub sup_bounded: bool,
    pub smooth_bounded: bool,
    pub tail_bounded: bool,
    /// `q = 1` concentrates all mass at 0 and sits outside the hypotheses
    /// of the local-limit bounds.
    pub outside_hypotheses: bool,
    pub rows: Vec<BoundRow>,
}

/// Fit the constants of the heat-kernel bounds over `2 <= n <= n_max`.
///
/// `tail_rate_c` is the caller-supplied rate inside `exp(-c log^2 n)`; the
/// paper leaves it unquantified.
pub fn kernel_bound_report(q: f64, n_max: u32, tail_rate_c: f64) -> Result<KernelBoundReport> {
    if n_max < 2 {
        return Err(Error::Parameter(format!("n_max={n_max} must be >= 2")));
    }
    step_distribution(q)?;
    let mut rows = Vec::with_capacity(n_max as usize - 1);
    let mut kernel = heat_kernel(q, 2)?;
    let step = step_distribution(q)?;
    for n in 2..=n_max {
        if n > 2 {
            kernel = HeatKernel { q, n, values: convolve_step(&kernel.values, &step) };
        }
        let nf = n as f64;
        let sup_scaled = kernel.sup() * nf.sqrt();
        let mut smooth = 0.0f64;
        for x in -(n as i64)..=(n as i64 - 2) {
            let d = (kernel.prob(x) - kernel.prob(x + 2)).abs();
            smooth = smooth.max(d * nf / 2.0);
        }
        let tail = kernel.tail_beyond(nf.sqrt() * nf.ln());
        let tail_scaled = tail * (tail_rate_c * nf.ln().powi(2)).exp();
        rows.push(BoundRow { n, sup_scaled, smooth_scaled: smooth, tail_scaled });
    }

    let fitted = |f: fn(&BoundRow) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    let report = KernelBoundReport {
        q,
        n_max,
        tail_rate_c,
        sup_constant: fitted(|r| r.sup_scaled),
        smooth_constant: fitted(|r| r.smooth_scaled),
        tail_constant: fitted(|r| r.tail_scaled),
        sup_bounded: bounded_trend(&rows, |r| r.sup_scaled),
        smooth_bounded: bounded_trend(&rows, |r| r.smooth_scaled),
        tail_bounded: bounded_trend(&rows, |r| r.tail_scaled),
        outside_hypotheses: q >= 1.0,
        rows,
    };
    Ok(report)
}

/// Log-log slope of the upper half of the sequence stays below 0.05.
fn bounded_trend(rows: &[BoundRow], f: impl Fn(&BoundRow) -> f64) -> bool {
    let half = rows.len() / 2;
    let pts: Vec<(f64, f64)> = rows[half..]
        .iter()
        .filter(|r| f(r) > 0.0)
        .map(|r| ((r.n as f64).ln(), f(r).ln()))
        .collect();
    if pts.len() < 2 {
        // All-zero upper half (e.g. tails that vanish exactly) is bounded.
        return true;
    }
    crate::testing::slope(&pts) < 0.05
}

/// An `L`-paving of a finite target set `H`: segments
/// `C_i = [0, L) + L i + offset` indexed by `I`, whose union covers `H`.
#[derive(Clone, Debug)]
pub struct Paving {
    length: i64,
    offset: i64,
    indices: Vec<i64>,
    target: Vec<i64>,
}

impl Paving {
    /// Paving of `H` with segment length `L`; the offset defaults to the
    /// leftmost site of `H` so the construction is deterministic.
    pub fn covering(target: &[i64], length: i64) -> Result<Paving> {
        if length < 1 {
            return Err(Error::Parameter(format!("paving length L={length} must be >= 1")));
        }
        let mut target: Vec<i64> = target.to_vec();
        target.sort_unstable();
        target.dedup();
        let offset = target.first().copied().unwrap_or(0);
        let mut indices: Vec<i64> =
            target.iter().map(|&x| (x - offset).div_euclid(length)).collect();
        indices.dedup();
        Ok(Paving { length, offset, indices, target })
    }

    pub fn length(&self) -> i64 {
        self.length
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn target(&self) -> &[i64] {
        &self.target
    }

    /// Index of the segment containing `x`, if it belongs to the paving.
    pub fn segment_of(&self, x: i64) -> Option<i64> {
        let i = (x - self.offset).div_euclid(self.length);
        self.indices.binary_search(&i).ok().map(|_| i)
    }
}

/// Result of the paving integration check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PavingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Check `sum_j p_n(0, x_j) >= rho (P_0(Z_n in H) - c L log n / sqrt(n))`
/// for a `rho`-dense point collection.
pub fn paving_integral_check(
    kernel: &HeatKernel,
    paving: &Paving,
    points: &[i64],
    rho: f64,
    c: f64,
) -> Result<PavingCheck> {
    if kernel.steps() < 1 {
        return Err(Error::Parameter("paving check needs n >= 1".into()));
    }
    // rho-density: every declared segment holds at least rho * L points.
    let need = rho * paving.length() as f64;
    for &i in paving.indices() {
        let lo = paving.offset() + i * paving.length();
        let hi = lo + paving.length();
        let got = points.iter().filter(|&&x| x >= lo && x < hi).count() as f64;
        if got < need {
            return Err(Error::Precondition(format!(
                "segment C_{i} = [{lo}, {hi}) holds {got} points, needs >= {need}"
            )));
        }
    }
    let lhs: f64 = points.iter().map(|&x| kernel.prob(x)).sum();
    let n = kernel.steps() as f64;
    let rhs = rho * (kernel.prob_in(paving.target()) - c * paving.length() as f64 * n.ln() / n.sqrt());
    Ok(PavingCheck { lhs, rhs, holds: lhs >= rhs })
}
