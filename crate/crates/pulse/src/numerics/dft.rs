//! Real-input discrete Fourier transform and its adjoint.
//!
//! The transform is the direct O(N^2) sum with a precomputed twiddle table.
//! Forecast horizons here are a few hundred steps and rarely powers of two,
//! so a radix-2 FFT buys nothing; a fast transform may replace this as long
//! as results agree to 1e-9.
//!
//! Forward, one-sided, unnormalized:
//!   re[k] = sum_n x[n] * cos(2*pi*k*n / N)
//!   im[k] = -sum_n x[n] * sin(2*pi*k*n / N)
//! for k = 0..=N/2. The adjoint is the transpose of that linear map.

/// Number of one-sided bins for input length `n`.
pub fn bins(n: usize) -> usize {
    n / 2 + 1
}

/// Cos/sin table for all (bin, sample) pairs of a length-`n` transform.
pub struct Twiddle {
    pub n: usize,
    pub k: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddle {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rdft requires length >= 1");
        let k = bins(n);
        let mut cos = vec![0.0; k * n];
        let mut sin = vec![0.0; k * n];
        let step = 2.0 * std::f64::consts::PI / n as f64;
        for ki in 0..k {
            for ni in 0..n {
                // Reduce k*n modulo N before the trig call: keeps the
                // argument small so long inputs do not lose accuracy.
                let phase = step * ((ki * ni) % n) as f64;
                cos[ki * n + ni] = phase.cos();
                sin[ki * n + ni] = phase.sin();
            }
        }
        Twiddle { n, k, cos, sin }
    }

    /// Forward transform of one row.
    pub fn forward(&self, x: &[f64], re: &mut [f64], im: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for ki in 0..self.k {
            let c = &self.cos[ki * self.n..(ki + 1) * self.n];
            let s = &self.sin[ki * self.n..(ki + 1) * self.n];
            let mut sum_re = 0.0;
            let mut sum_im = 0.0;
            for ni in 0..self.n {
                sum_re += x[ni] * c[ni];
                sum_im -= x[ni] * s[ni];
            }
            re[ki] = sum_re;
            im[ki] = sum_im;
        }
    }

    /// Adjoint (transpose) of the forward map: accumulates into `x_out`.
    pub fn adjoint(&self, u_re: &[f64], u_im: &[f64], x_out: &mut [f64]) {
        debug_assert_eq!(x_out.len(), self.n);
        for ki in 0..self.k {
            let c = &self.cos[ki * self.n..(ki + 1) * self.n];
            let s = &self.sin[ki * self.n..(ki + 1) * self.n];
            let gr = u_re[ki];
            let gi = u_im[ki];
            for ni in 0..self.n {
                x_out[ni] += gr * c[ni] - gi * s[ni];
            }
        }
    }
}

/// One-shot forward transform of a single row.
pub fn rdft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let tw = Twiddle::new(x.len());
    let mut re = vec![0.0; tw.k];
    let mut im = vec![0.0; tw.k];
    tw.forward(x, &mut re, &mut im);
    (re, im)
}

/// One-sided modulus spectrum of a single row.
pub fn modulus_spectrum(x: &[f64]) -> Vec<f64> {
    let (re, im) = rdft(x);
    re.iter().zip(&im).map(|(r, i)| (r * r + i * i).sqrt()).collect()
}
