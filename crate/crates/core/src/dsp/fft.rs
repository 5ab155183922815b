//! Mixed-radix decimation-in-time FFT for arbitrary lengths.
//!
//! Radices 2, 3 and 5 cover every STFT size in use; any other prime factor
//! falls back to a direct DFT stage of that radix.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::math;

pub struct Fft {
    n: usize,
    factors: Vec<usize>,
    twiddles: Vec<Complex64>,
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while n > 1 {
        if p * p > n {
            out.push(n);
            break;
        }
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    out
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "fft length must be positive");
        let twiddles = (0..n)
            .map(|j| {
                let a = -2.0 * PI * j as f64 / n as f64;
                Complex64::new(math::cos(a), math::sin(a))
            })
            .collect();
        Fft {
            n,
            factors: factorize(n),
            twiddles,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `X[k] = sum_n x[n] exp(-2 pi i k n / N)`.
    pub fn forward(&self, input: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(input.len(), self.n);
        assert_eq!(out.len(), self.n);
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.factors.iter().copied().max().unwrap_or(1)];
        self.rec(input, 0, 1, self.n, 0, out, &mut tmp);
    }

    /// `x[n] = sum_k X[k] exp(+2 pi i k n / N)`, without the 1/N factor.
    pub fn inverse_unnormalized(&self, input: &[Complex64], out: &mut [Complex64]) {
        let conj: Vec<Complex64> = input.iter().map(|c| c.conj()).collect();
        self.forward(&conj, out);
        out.iter_mut().for_each(|c| *c = c.conj());
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        &self,
        x: &[Complex64],
        offset: usize,
        stride: usize,
        n: usize,
        level: usize,
        out: &mut [Complex64],
        tmp: &mut [Complex64],
    ) {
        if n == 1 {
            out[0] = x[offset];
            return;
        }
        let p = self.factors[level];
        let m = n / p;
        for r in 0..p {
            self.rec(x, offset + r * stride, stride * p, m, level + 1, &mut out[r * m..(r + 1) * m], tmp);
        }
        let tstep = self.n / n;
        if p == 2 {
            for q in 0..m {
                let t = out[q + m] * self.twiddles[q * tstep];
                let a = out[q];
                out[q] = a + t;
                out[q + m] = a - t;
            }
            return;
        }
        let pstep = self.n / p;
        for q in 0..m {
            for r in 0..p {
                tmp[r] = out[r * m + q] * self.twiddles[r * q * tstep];
            }
            for kk in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for (r, t) in tmp[..p].iter().enumerate() {
                    acc += t * self.twiddles[((r * kk) % p) * pstep];
                }
                out[q + kk * m] = acc;
            }
        }
    }
}
