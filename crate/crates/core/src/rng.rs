//! Counter-based random streams.
//!
//! Every variate is addressed by `(seed, stream_id, counter)`: the seed is the
//! Philox4x32-10 key, and the 128-bit Philox counter is built from the stream
//! id (high half) and the block index (low half). One block yields two 64-bit
//! words; the stream counter indexes words, so a stream can be positioned
//! anywhere without generating the prefix. Monte Carlo code addresses samples
//! by index, which makes results independent of how work is split over threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let p0 = u64::from(ctr[0]) * u64::from(PHILOX_M0);
    let p1 = u64::from(ctr[2]) * u64::from(PHILOX_M1);
    [
        ((p1 >> 32) as u32) ^ ctr[1] ^ key[0],
        p1 as u32,
        ((p0 >> 32) as u32) ^ ctr[3] ^ key[1],
        p0 as u32,
    ]
}

/// The Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        c = philox_round(c, k);
    }
    c
}

/// SplitMix64 finalizer, used to derive child stream ids.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// The same stream positioned at word `counter`.
    pub fn at(self, counter: u64) -> Self {
        Self { counter, ..self }
    }

    /// A child stream whose id is a hash of this id and `child`. Children of
    /// distinct parents or with distinct indices do not overlap in practice.
    pub fn split(&self, child: u64) -> Self {
        let id = mix64(self.stream_id ^ mix64(child.wrapping_add(0x632B_E59B_D9B4_E019)));
        Self::new(self.seed, id)
    }

    fn block(&self, index: u64) -> [u32; 4] {
        let ctr = [
            index as u32,
            (index >> 32) as u32,
            self.stream_id as u32,
            (self.stream_id >> 32) as u32,
        ];
        let key = [self.seed as u32, (self.seed >> 32) as u32];
        philox4x32_10(ctr, key)
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = self.block(self.counter >> 1);
        let lane = (self.counter & 1) as usize * 2;
        self.counter = self.counter.wrapping_add(1);
        u64::from(out[lane]) | (u64::from(out[lane + 1]) << 32)
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_open01())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }

    pub fn sample_normal(&mut self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.fill_normal(&mut out);
        out
    }

    pub fn fill_uniform_cube(&mut self, dom: &CubeDomain, out: &mut [f64]) {
        let width = dom.b - dom.a;
        for v in out.iter_mut() {
            *v = (dom.a + width * self.next_open01()).clamp(dom.a, dom.b);
        }
    }

    pub fn sample_uniform_cube(&mut self, dom: &CubeDomain) -> Vec<f64> {
        let mut out = vec![0.0; dom.d];
        self.fill_uniform_cube(dom, &mut out);
        out
    }
}

/// The cube `[a, b]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeDomain {
    pub a: f64,
    pub b: f64,
    pub d: usize,
}

impl CubeDomain {
    pub fn new(a: f64, b: f64, d: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidArgument(format!(
                "cube requires finite a < b, got [{a}, {b}]"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("cube dimension must be >= 1".into()));
        }
        Ok(Self { a, b, d })
    }

    pub fn unit(d: usize) -> Self {
        Self { a: 0.0, b: 1.0, d }
    }

    /// The cube grown by `margin` on every side.
    pub fn inflate(&self, margin: f64) -> Self {
        Self {
            a: self.a - margin,
            b: self.b + margin,
            d: self.d,
        }
    }

    pub fn volume(&self) -> f64 {
        (self.b - self.a).powi(self.d as i32)
    }
}

/// Inverse of the standard normal CDF, Wichura's AS241 (PPND16).
///
/// Relative accuracy is about 1e-16 over (0, 1). Input must lie in the open
/// unit interval; the endpoints map to infinities.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r
            + 67265.770927008700853)
            * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r
            + 39307.89580009271061)
            * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
            + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
            + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answers() {
        // Random123 kat_vectors for philox4x32_10.
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn inverse_cdf_matches_reference_values() {
        // scipy.special.ndtri
        let cases = [
            (0.5, 0.0),
            (0.975, 1.959963984540054),
            (0.025, -1.9599639845400545),
            (0.8, 0.8416212335729143),
            (0.1, -1.2815515655446004),
            (1e-10, -6.361340902404056),
            (0.999999, 4.753424308817087),
            (1e-300, -37.0470962993612),
        ];
        for (p, z) in cases {
            let got = inverse_normal_cdf(p);
            assert!(
                (got - z).abs() <= 1e-12 * z.abs().max(1.0),
                "p={p}: {got} vs {z}"
            );
        }
    }

    #[test]
    fn inverse_cdf_agrees_with_statrs_on_grid() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let diff = (inverse_normal_cdf(p) - n.inverse_cdf(p)).abs();
            assert!(diff <= 1e-9, "p={p}: diff {diff}");
        }
    }

    #[test]
    fn reset_counter_reproduces_vector() {
        let s = RandomStream::new(7, 3).at(11);
        let mut a = s;
        let mut b = s;
        assert_eq!(a.sample_normal(3), b.sample_normal(3));
        // Positioning by counter equals drawing the prefix.
        let mut c = RandomStream::new(7, 3);
        for _ in 0..11 {
            c.next_u64();
        }
        let mut d = s;
        assert_eq!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn normal_moments() {
        let mut s = RandomStream::new(2024, 1);
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let mut s1 = RandomStream::new(99, 1);
        let mut s2 = RandomStream::new(99, 2);
        let n = 100_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = s1.next_normal();
            let y = s2.next_normal();
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let vx = sxx / nf - (sx / nf).powi(2);
        let vy = syy / nf - (sy / nf).powi(2);
        let rho = cov / (vx * vy).sqrt();
        assert!(rho.abs() < 0.01, "rho {rho}");
    }

    #[test]
    fn split_children_differ() {
        let root = RandomStream::new(5, 0);
        let mut a = root.split(0);
        let mut b = root.split(1);
        assert_ne!(a.stream_id, b.stream_id);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(root.split(4), root.split(4));
    }

    #[test]
    fn uniform_cube_range_and_mean() {
        let dom = CubeDomain::unit(1);
        let mut s = RandomStream::new(1, 1);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = s.sample_uniform_cube(&dom)[0];
            assert!((0.0..=1.0).contains(&x));
            sum += x;
        }
        assert!((sum / n as f64 - 0.5).abs() < 4e-3);
    }

    #[test]
    fn degenerate_cube_stays_in_range() {
        let mut s = RandomStream::new(3, 3);
        for eps in [1e-3, 1e-9, 1e-15] {
            let dom = CubeDomain::new(2.0, 2.0 + eps, 4).unwrap();
            for _ in 0..1000 {
                for x in s.sample_uniform_cube(&dom) {
                    assert!(x >= 2.0 && x <= 2.0 + eps);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_cubes() {
        assert!(CubeDomain::new(1.0, 1.0, 2).is_err());
        assert!(CubeDomain::new(0.0, 1.0, 0).is_err());
        assert!(CubeDomain::new(f64::NAN, 1.0, 1).is_err());
    }
}
