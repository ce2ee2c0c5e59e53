//! Exact cone geometry for the regeneration construction.
//!
//! The cone slope `v_bar = v_star / 3` is carried as a rational number and
//! every membership test is integer arithmetic, so record times and cone
//! indicators have no floating-point tie ambiguity. For a point `(x, t)` the
//! scaled height `d = x * den - num * t` decides everything: the up cone at
//! apex `y` is `t >= n_y` and `d >= d(y)`, the down cone is `t <= n_y` and
//! `d < d(y)`.

use serde::Serialize;

use crate::walker::Path;
use crate::{Error, Result};

/// Best rational approximation of `v` with denominator at most `max_den`.
fn rationalize(v: f64, max_den: i64) -> (i64, i64) {
    let mut best = (0i64, 1i64);
    let mut best_err = f64::INFINITY;
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = v;
    for _ in 0..64 {
        let a = x.floor() as i64;
        let p2 = a.saturating_mul(p1).saturating_add(p0);
        let q2 = a.saturating_mul(q1).saturating_add(q0);
        if q2 > max_den || q2 <= 0 {
            break;
        }
        let err = (v - p2 as f64 / q2 as f64).abs();
        if err < best_err {
            best = (p2, q2);
            best_err = err;
        }
        if err == 0.0 {
            break;
        }
        let frac = x - a as f64;
        if frac.abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    best
}

/// Ballisticity speed `v_star` and cone slope `v_bar = v_star / 3`, exact.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConeParams {
    /// `v_bar` numerator.
    pub num: i64,
    /// `v_bar` denominator.
    pub den: i64,
    pub v_star: f64,
}

impl ConeParams {
    /// Build from `v_star`, rationalising to denominator at most 10^6.
    pub fn from_v_star(v_star: f64) -> Result<Self> {
        if !(v_star > 0.0 && v_star <= 1.0) {
            return Err(Error::Parameter(format!("v_star={v_star} outside (0, 1]")));
        }
        let (p, q) = rationalize(v_star, 1_000_000);
        if p <= 0 {
            return Err(Error::Parameter(format!("v_star={v_star} too small to rationalise")));
        }
        let (mut num, mut den) = (p, 3 * q);
        let g = gcd(num, den);
        num /= g;
        den /= g;
        Ok(ConeParams { num, den, v_star })
    }

    pub fn v_bar(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Scaled cone height `x * den - num * t`.
    #[inline]
    pub fn d(&self, x: i64, t: i64) -> i64 {
        x * self.den - self.num * t
    }

    /// Membership in the first-quadrant cone based at `base`.
    pub fn in_up_cone(&self, base: (i64, i64), y: (i64, i64)) -> bool {
        y.1 >= base.1 && self.d(y.0, y.1) >= self.d(base.0, base.1)
    }

    /// Membership in the third-quadrant cone based at `base`.
    pub fn in_down_cone(&self, base: (i64, i64), y: (i64, i64)) -> bool {
        y.1 <= base.1 && self.d(y.0, y.1) < self.d(base.0, base.1)
    }

    /// Scaled threshold of the shifted cone `angle_k` relative to a path
    /// start: `d >= (den - num) k`.
    #[inline]
    pub fn record_threshold(&self, k: i64) -> i64 {
        (self.den - self.num) * k
    }

    /// Record times of a path, in path-relative coordinates: all `(k, R_k)`
    /// with `R_k` within the path, increasing in `k` with gaps >= 1.
    pub fn record_times(&self, path: &Path) -> Vec<(i64, usize)> {
        let mut records = Vec::new();
        let mut k = 0i64;
        for (i, &x) in path.xs.iter().enumerate() {
            let d = self.d(x - path.x0, i as i64);
            while d >= self.record_threshold(k + 1) {
                k += 1;
                records.push((k, i));
            }
        }
        for w in records.windows(2) {
            debug_assert!(w[1].1 >= w[0].1 + 1, "records must be strictly spaced");
        }
        records
    }

    /// Index of the last origin cone containing `y` (relative coordinates);
    /// 0 when `y` precedes every cone. Closed form validated against a scan.
    pub fn kappa(&self, y: (i64, i64)) -> i64 {
        if y.1 < 0 {
            return 0;
        }
        let d = self.d(y.0, y.1);
        if d < 0 {
            return 0;
        }
        d.div_euclid(self.den - self.num)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// The space-time parallelogram between the cone at `y` and the
/// `kappa(y) + t`-th origin cone, capped at height `t / v_bar`.
#[derive(Clone, Copy, Debug)]
pub struct Parallelogram {
    cone: ConeParams,
    /// Apex, absolute coordinates relative to the walk origin.
    pub apex: (i64, i64),
    /// Scaled height of the apex.
    theta: i64,
    /// Scaled upper threshold `(den - num)(kappa + t)`.
    upper: i64,
    /// Height cap `t * den / num` on `n - n_y` (scaled comparison).
    pub t: i64,
}

impl Parallelogram {
    pub fn new(cone: &ConeParams, apex: (i64, i64), t: i64) -> Self {
        let theta = cone.d(apex.0, apex.1);
        let kappa = cone.kappa(apex);
        Parallelogram {
            cone: *cone,
            apex,
            theta,
            upper: cone.record_threshold(kappa + t),
            t,
        }
    }

    pub fn contains(&self, y: (i64, i64)) -> bool {
        let dn = y.1 - self.apex.1;
        if dn < 0 || dn * self.cone.num > self.t * self.cone.den {
            return false;
        }
        let d = self.cone.d(y.0, y.1);
        d >= self.theta && d < self.upper
    }

    /// Right boundary: cells outside whose left neighbour is inside.
    pub fn right_boundary(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        let max_dn = (self.t * self.cone.den).div_euclid(self.cone.num);
        for dn in 0..=max_dn {
            let n = self.apex.1 + dn;
            // Smallest x with d >= theta, largest with d < upper.
            let lo = div_ceil(self.theta + self.cone.num * n, self.cone.den);
            let hi = div_floor(self.upper - 1 + self.cone.num * n, self.cone.den);
            if hi >= lo {
                out.push((hi + 1, n));
            }
        }
        out
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    a.div_euclid(b) + i64::from(a.rem_euclid(b) != 0)
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// How a path leaves a parallelogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParallelogramExit {
    /// First exit point lies on the right boundary, at the given path index.
    Right(usize),
    /// First exit elsewhere (top or left), at the given path index.
    Other(usize),
    /// The path never left within its horizon.
    Confined,
}

/// Classify the first exit of the path (started at the apex) from `para`.
pub fn classify_exit(para: &Parallelogram, path: &Path) -> ParallelogramExit {
    debug_assert_eq!((path.x0, path.n0), para.apex);
    for i in 0..=path.steps() {
        let y = path.point(i);
        if !para.contains(y) {
            let left = (y.0 - 1, y.1);
            return if para.contains(left) {
                ParallelogramExit::Right(i)
            } else {
                ParallelogramExit::Other(i)
            };
        }
    }
    ParallelogramExit::Confined
}
