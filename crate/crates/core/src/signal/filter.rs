//! Butterworth filters in second-order-section form and zero-phase
//! (forward-backward) application.
//!
//! Designs go through the analog prototype, a frequency transformation and the
//! bilinear transform with pre-warped edges. Forward-backward filtering uses
//! odd-extension padding and steady-state initial conditions, so a constant
//! input produces no start-up transient.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    // a[0] is implicitly 1.
    a: [f64; 2],
}

impl Biquad {
    fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn scale(&mut self, k: f64) {
        for b in &mut self.b {
            *b *= k;
        }
    }
}

/// A cascade of biquad sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
}

fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn bilinear(s: Complex64, rate_hz: f64) -> Complex64 {
    let fs2 = 2.0 * rate_hz;
    (fs2 + s) / (fs2 - s)
}

fn prewarp(freq_hz: f64, rate_hz: f64) -> f64 {
    2.0 * rate_hz * (PI * freq_hz / rate_hz).tan()
}

/// Groups digital poles into conjugate pairs (and leftover real poles).
fn pole_pairs(poles: &[Complex64]) -> Vec<(Complex64, Option<Complex64>)> {
    const EPS: f64 = 1e-10;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > EPS).collect();
    upper.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= EPS)
        .map(|p| p.re)
        .collect();
    real.sort_by(f64::total_cmp);

    let mut pairs: Vec<(Complex64, Option<Complex64>)> =
        upper.into_iter().map(|p| (p, Some(p.conj()))).collect();
    for chunk in real.chunks(2) {
        let first = Complex64::new(chunk[0], 0.0);
        pairs.push((first, chunk.get(1).map(|&r| Complex64::new(r, 0.0))));
    }
    pairs
}

fn denominator(p: Complex64, q: Option<Complex64>) -> [f64; 2] {
    match q {
        Some(q) => {
            let sum = p + q;
            let prod = p * q;
            [-sum.re, prod.re]
        }
        None => [-p.re, 0.0],
    }
}

impl Sos {
    /// Butterworth low-pass of the given order.
    pub fn butter_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("filter order must be positive".into()));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "low-pass cutoff {cutoff_hz} Hz must lie in (0, {})",
                rate_hz / 2.0
            )));
        }
        let wc = prewarp(cutoff_hz, rate_hz);
        let poles: Vec<Complex64> = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(p * wc, rate_hz))
            .collect();
        let sections = pole_pairs(&poles)
            .into_iter()
            .map(|(p, q)| {
                let b = if q.is_some() { [1.0, 2.0, 1.0] } else { [1.0, 1.0, 0.0] };
                let mut s = Biquad {
                    b,
                    a: denominator(p, q),
                };
                let g = s.dc_gain();
                s.scale(1.0 / g);
                s
            })
            .collect();
        Ok(Sos { sections })
    }

    /// Butterworth band-pass whose low-pass prototype has the given order
    /// (the resulting filter has `2 * order` poles).
    pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("filter order must be positive".into()));
        }
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "band edges {low_hz}-{high_hz} Hz must satisfy 0 < low < high < {}",
                rate_hz / 2.0
            )));
        }
        let w1 = prewarp(low_hz, rate_hz);
        let w2 = prewarp(high_hz, rate_hz);
        let bw = w2 - w1;
        let w0sq = w1 * w2;
        let mut poles = Vec::with_capacity(2 * order);
        for p in prototype_poles(order) {
            // Roots of s^2 - p*bw*s + w0^2 = 0.
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0sq).sqrt();
            poles.push(bilinear((pb + disc) / 2.0, rate_hz));
            poles.push(bilinear((pb - disc) / 2.0, rate_hz));
        }
        let center = 2.0 * (w0sq.sqrt() / (2.0 * rate_hz)).atan();
        let sections = pole_pairs(&poles)
            .into_iter()
            .map(|(p, q)| {
                let mut s = Biquad {
                    b: [1.0, 0.0, -1.0],
                    a: denominator(p, q),
                };
                let g = s.response(center).norm();
                s.scale(1.0 / g);
                s
            })
            .collect();
        Ok(Sos { sections })
    }

    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Magnitude of a single forward pass at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / rate_hz;
        self.sections
            .iter()
            .map(|s| s.response(omega).norm())
            .product()
    }

    /// Steady-state section states for a unit constant input.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut u = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let y = s.dc_gain() * u;
                let z = [y - s.b[0] * u, s.b[2] * u - s.a[1] * y];
                u = y;
                z
            })
            .collect()
    }

    fn run(&self, x: &mut [f64], mut state: Vec<[f64; 2]>) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in x.iter_mut() {
                let xin = *v;
                let y = s.b[0] * xin + z[0];
                z[0] = s.b[1] * xin - s.a[0] * y + z[1];
                z[1] = s.b[2] * xin - s.a[1] * y;
                *v = y;
            }
        }
    }

    /// Causal single pass with zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, vec![[0.0; 2]; self.sections.len()]);
        y
    }

    /// Zero-phase forward-backward filtering.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.iter().map(|_| 0.0).collect();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.steady_state();
        let scaled = |zi: &[[f64; 2]], k: f64| zi.iter().map(|z| [z[0] * k, z[1] * k]).collect();

        let first = ext[0];
        self.run(&mut ext, scaled(&zi, first));
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, scaled(&zi, first));
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}
