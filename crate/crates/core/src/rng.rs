//! Counter-based deterministic random number generation.
//!
//! All randomness in the crate flows through keyed SplitMix64 streams. A
//! stream is identified by a `(seed, key...)` tuple, so independent objects
//! (one environment particle, one walker replica, one uniform-field cell)
//! own independent substreams. Enlarging a window or changing thread counts
//! never perturbs the draws of already-existing objects.

/// One round of the SplitMix64 output function.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Hash a 64-bit word into the running key.
#[inline]
fn absorb(acc: u64, word: u64) -> u64 {
    splitmix64(acc ^ word.wrapping_mul(0xA24BAED4963EE407))
}

/// Derive a stream key from a seed and up to three identifying words.
#[inline]
pub fn key(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    absorb(absorb(absorb(splitmix64(seed), a), b), c)
}

/// Map a `u64` to a double in `[0, 1)` using the top 53 bits.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / ((1u64 << 53) as f64))
}

/// A sequential SplitMix64 stream.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(key: u64) -> Self {
        Stream { state: key }
    }

    /// Stream keyed by `(seed, a, b, c)`.
    pub fn keyed(seed: u64, a: u64, b: u64, c: u64) -> Self {
        Stream::new(key(seed, a, b, c))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Poisson sample by Knuth's product-of-uniforms method.
    ///
    /// Work is O(mean); the method is exact for mean below ~700 where
    /// `exp(-mean)` is still a normal double. Large means are handled by
    /// splitting, using that a sum of independent Poissons is Poisson.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and >= 0");
        let mut total = 0u64;
        let mut remaining = mean;
        while remaining > 500.0 {
            total += self.poisson_small(500.0);
            remaining -= 500.0;
        }
        total + self.poisson_small(remaining)
    }

    fn poisson_small(&mut self, mean: f64) -> u64 {
        if mean == 0.0 {
            return 0;
        }
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut prod = 1.0f64;
        loop {
            prod *= self.next_f64();
            if prod <= limit {
                return k;
            }
            k += 1;
        }
    }

    /// Standard normal via Box-Muller (one value per call, second discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential with rate 1.
    pub fn exp1(&mut self) -> f64 {
        let u = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        -u.ln()
    }
}

/// Fold an `i64` into a `u64` word preserving injectivity.
#[inline]
pub fn word(v: i64) -> u64 {
    v as u64
}
