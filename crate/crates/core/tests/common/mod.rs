//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use qan_core::protocol::{Basis, PulseStream};
use qan_core::sync::ReceivedFrame;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Composite Simpson quadrature of `2/sqrt(pi) exp(-t^2)` on `[0, x]`.
pub fn erf_simpson(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let f = |t: f64| (-t * t).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
}

/// Cyclic correlation `C[j] = sum_i x[i] s[(i + j) mod L]` by brute force.
pub fn brute_correlation(x: &[i8], s: &[i8]) -> Vec<i64> {
    let l = s.len();
    (0..l)
        .map(|j| {
            x.iter()
                .enumerate()
                .map(|(i, &v)| i64::from(v) * i64::from(s[(i + j) % l]))
                .sum()
        })
        .collect()
}

pub fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Detected and error counts per intensity `[mu, nu]` for one basis.
#[derive(Debug, Clone, Copy)]
pub struct BasisCounts {
    pub n: [f64; 2],
    pub m: [f64; 2],
}

pub struct Decoy {
    pub mu: f64,
    pub nu: f64,
    pub p: [f64; 2],
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f_e: f64,
}

impl Decoy {
    pub fn standard() -> Self {
        Decoy {
            mu: 0.52,
            nu: 0.13,
            p: [0.69, 0.31],
            eps_sec: 1e-9,
            eps_cor: 1e-15,
            f_e: 1.16,
        }
    }

    fn tau(&self, n: i32) -> f64 {
        let fact = (1..=n).map(f64::from).product::<f64>();
        [self.mu, self.nu]
            .iter()
            .zip(self.p)
            .map(|(&k, p)| p * (-k).exp() * k.powi(n) / fact)
            .sum()
    }

    fn shifted(&self, c: [f64; 2], i: usize, sign: f64) -> f64 {
        let k = [self.mu, self.nu][i];
        let tot: f64 = c.iter().sum();
        k.exp() / self.p[i] * (c[i] + sign * (tot / 2.0 * (21.0 / self.eps_sec).ln()).sqrt())
    }

    /// `(s0 lower, s0 upper, s1 lower)` of one basis.
    pub fn vacuum_single(&self, b: BasisCounts) -> (f64, f64, f64) {
        let (mu, nu) = (self.mu, self.nu);
        let tot: f64 = b.n.iter().sum();
        let s0l = self.tau(0) / (mu - nu)
            * (mu * self.shifted(b.n, 1, -1.0) - nu * self.shifted(b.n, 0, 1.0));
        let s0u = 2.0
            * (self.tau(0) * nu.exp() / self.p[1] * b.m[1]
                + (tot / 2.0 * (21.0 / self.eps_sec).ln()).sqrt());
        let s1l = self.tau(1) * mu / (nu * (mu - nu))
            * (self.shifted(b.n, 1, -1.0)
                - nu * nu / (mu * mu) * self.shifted(b.n, 0, 1.0)
                - (mu * mu - nu * nu) / (mu * mu) * s0u / self.tau(0));
        (s0l, s0u, s1l)
    }

    /// Secret key length in bits (before clamping at zero).
    pub fn key_length(&self, z: BasisCounts, x: BasisCounts) -> f64 {
        let (s0l, _, s1l) = self.vacuum_single(z);
        let (_, _, x1l) = self.vacuum_single(x);
        let v1u = self.tau(1) / (self.mu - self.nu)
            * (self.shifted(x.m, 0, 1.0) - self.shifted(x.m, 1, -1.0));
        let phi = if s1l > 0.0 && x1l > 0.0 {
            let b = (v1u / x1l).clamp(1e-12, 0.5);
            let (c, d) = (s1l, x1l);
            let g = ((c + d) * (1.0 - b) * b / (c * d * std::f64::consts::LN_2)
                * ((c + d) / (c * d * (1.0 - b) * b) * 21.0f64.powi(2) / self.eps_sec.powi(2))
                    .log2())
            .sqrt();
            (b + g).min(0.5)
        } else {
            0.5
        };
        let nz: f64 = z.n.iter().sum();
        let ez = z.m.iter().sum::<f64>() / nz;
        s0l.max(0.0) + s1l * (1.0 - h2(phi))
            - nz * self.f_e * h2(ez)
            - 6.0 * (19.0 / self.eps_sec).log2()
            - (2.0 / self.eps_cor).log2()
    }

    /// `max(l, 0) q f / N`.
    pub fn rate(&self, z: BasisCounts, x: BasisCounts, q: f64, f: f64, pulses: f64) -> f64 {
        self.key_length(z, x).max(0.0) * q * f / pulses
    }

    /// Expected counts of a link with transmittance `eta`, misalignment
    /// `p_opt`, dark probability `p_dc` and relative cross-talk `x`, scaled
    /// to `n_z` sifted Z bits, plus the total pulse count at interleave `M`.
    pub fn expected(
        &self,
        eta: f64,
        p_opt: f64,
        p_dc: f64,
        x: f64,
        p_z: f64,
        n_z: f64,
        interleave: f64,
    ) -> (BasisCounts, BasisCounts, f64) {
        let ks = [self.mu, self.nu];
        let q = |k: f64| k * eta * (1.0 + x) + p_dc;
        let e = |k: f64| k * eta * (p_opt + x / 2.0) + p_dc / 2.0;
        let per_z: f64 = (0..2).map(|i| p_z * p_z * self.p[i] * q(ks[i])).sum();
        let random = n_z / per_z;
        let basis = |pb: f64| BasisCounts {
            n: [0, 1].map(|i| random * pb * pb * self.p[i] * q(ks[i])),
            m: [0, 1].map(|i| random * pb * pb * self.p[i] * e(ks[i])),
        };
        (
            basis(p_z),
            basis(1.0 - p_z),
            random * (interleave + 1.0) / interleave,
        )
    }
}

/// Received frame of a thinned pulse stream: each pulse clicks with
/// probability `eta`, the receiver picks Z with probability 0.9 and flips
/// 1% of the bits.
pub fn thinned_frame(stream: &PulseStream, shift: u64, eta: f64, rng: &mut ChaCha8Rng) -> ReceivedFrame {
    let spec = stream.spec();
    let values = (0..spec.frame_len() as u64)
        .map(|k| {
            if !rng.random_bool(eta) {
                return 0;
            }
            let s = stream.symbol(shift + k);
            let z = rng.random_bool(0.9);
            let same = (s.basis == Basis::Z) == z;
            let bit = if same { s.bit } else { rng.random_range(0..2u8) } ^ u8::from(rng.random_bool(0.01));
            match (z, bit) {
                (true, 0) => 1,
                (true, _) => -1,
                _ => 0,
            }
        })
        .collect();
    ReceivedFrame {
        slot: 0,
        spec,
        origin_period: 0,
        values,
        conflicts: 0,
    }
}
