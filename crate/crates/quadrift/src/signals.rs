//! Control signals on a uniform time grid: iterated primitives, the norms
//! appearing in the drift statements, and closed-form signal generators.
//!
//! Primitives are cumulative composite-Simpson integrals (odd grid points
//! use the one-sided (5, 8, −1)/12 rule so every sample is fourth-order
//! accurate); grids with an odd number of steps fall back to the trapezoid
//! rule, recorded in the `scheme` flag.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which cumulative integration rule a primitive stack was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegrationScheme {
    Simpson,
    Trapezoid,
}

/// An r-channel real control sampled at t_i = i·T/N, i = 0..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub t_final: f64,
    /// values[ℓ][i] = u^{ℓ+1}(t_i).
    pub values: Vec<Vec<f64>>,
}

impl ControlGrid {
    pub fn new(t_final: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument("horizon T must be positive and finite".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("control needs at least one channel".into()));
        }
        let len = values[0].len();
        if len < 3 {
            return Err(Error::InvalidArgument("control grid needs at least N = 2 steps".into()));
        }
        for channel in &values {
            if channel.len() != len {
                return Err(Error::InvalidArgument("all channels must share one grid".into()));
            }
            if channel.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("control samples must be finite".into()));
            }
        }
        Ok(ControlGrid { t_final, values })
    }

    pub fn zero(t_final: f64, r: usize, steps: usize) -> Result<Self> {
        ControlGrid::new(t_final, vec![vec![0.0; steps + 1]; r])
    }

    pub fn r(&self) -> usize {
        self.values.len()
    }

    pub fn steps(&self) -> usize {
        self.values[0].len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_final * i as f64 / self.steps() as f64
    }

    pub fn channel(&self, ell: usize) -> &[f64] {
        &self.values[ell - 1]
    }

    /// All channels at sample i, as a small vector.
    pub fn at(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|ch| ch[i]).collect()
    }

    pub fn scale(&self, factor: f64) -> ControlGrid {
        ControlGrid {
            t_final: self.t_final,
            values: self
                .values
                .iter()
                .map(|ch| ch.iter().map(|v| factor * v).collect())
                .collect(),
        }
    }

    /// Write as CSV with columns t, u1, …, ur.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.r()).map(|l| format!("u{l}")));
        writer.write_record(&header)?;
        for i in 0..=self.steps() {
            let mut row = vec![format!("{:.17e}", self.time(i))];
            row.extend(self.values.iter().map(|ch| format!("{:.17e}", ch[i])));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Read a CSV produced by [`ControlGrid::to_csv`] (columns t, u1..ur),
    /// checking that the time column is a uniform grid starting at 0.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let width = reader.headers()?.len();
        if width < 2 {
            return Err(Error::Parse("control CSV needs columns t, u1, ...".into()));
        }
        let r = width - 1;
        let mut times = Vec::new();
        let mut values = vec![Vec::new(); r];
        for record in reader.records() {
            let record = record?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
            };
            times.push(parse(&record[0])?);
            for (ell, slot) in values.iter_mut().enumerate() {
                slot.push(parse(&record[ell + 1])?);
            }
        }
        if times.len() < 3 {
            return Err(Error::Parse("control CSV needs at least 3 samples".into()));
        }
        let t_final = *times.last().unwrap();
        let n = times.len() - 1;
        for (i, &t) in times.iter().enumerate() {
            let expect = t_final * i as f64 / n as f64;
            if (t - expect).abs() > 1e-9 * t_final.max(1.0) {
                return Err(Error::Parse(format!(
                    "time column is not a uniform grid at row {i}: {t} vs {expect}"
                )));
            }
        }
        ControlGrid::new(t_final, values)
    }
}

/// Default step count so that dt ≤ min(1e−3·T, 0.1/λ_J), rounded up to even.
pub fn default_steps(t_final: f64, lambda_max: f64) -> usize {
    let dt_cap = (1e-3 * t_final).min(0.1 / lambda_max);
    let n = (t_final / dt_cap).ceil() as usize;
    (n.max(2) + 1) & !1
}

/// Iterated primitives u_0 = u, u_{n+1}(t) = ∫₀ᵗ u_n, on the control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveStack {
    pub t_final: f64,
    /// orders[ℓ][n][i] = u_n^{ℓ+1}(t_i) for n = 0..=depth.
    pub orders: Vec<Vec<Vec<f64>>>,
    pub scheme: IntegrationScheme,
}

impl PrimitiveStack {
    pub fn depth(&self) -> usize {
        self.orders[0].len() - 1
    }

    /// u_n^ℓ on the grid, with 1-indexed channel.
    pub fn primitive(&self, ell: usize, n: usize) -> &[f64] {
        &self.orders[ell - 1][n]
    }
}

/// Cumulative integral of `f` on a uniform grid with spacing `dt`.
///
/// Even points accumulate ordinary Simpson panels; each odd point adds the
/// (5, 8, −1)/12 forward rule over its half panel, so the result is a
/// fourth-order primitive at every sample. Odd step counts use the
/// trapezoid rule instead (second order).
pub fn cumulative_integral(f: &[f64], dt: f64) -> (Vec<f64>, IntegrationScheme) {
    let n = f.len() - 1;
    let mut out = vec![0.0; n + 1];
    if n % 2 == 0 {
        let mut i = 0;
        while i + 2 <= n {
            out[i + 1] = out[i] + dt / 12.0 * (5.0 * f[i] + 8.0 * f[i + 1] - f[i + 2]);
            out[i + 2] = out[i] + dt / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
            i += 2;
        }
        (out, IntegrationScheme::Simpson)
    } else {
        for i in 0..n {
            out[i + 1] = out[i] + 0.5 * dt * (f[i] + f[i + 1]);
        }
        (out, IntegrationScheme::Trapezoid)
    }
}

/// Build primitives u_1, …, u_depth for every channel.
pub fn iterated_primitives(u: &ControlGrid, depth: usize) -> Result<PrimitiveStack> {
    if depth == 0 {
        return Err(Error::InvalidArgument("primitive depth must be >= 1".into()));
    }
    let dt = u.dt();
    let mut scheme = IntegrationScheme::Simpson;
    let mut orders = Vec::with_capacity(u.r());
    for channel in &u.values {
        let mut tower = Vec::with_capacity(depth + 1);
        tower.push(channel.clone());
        for n in 0..depth {
            let (next, used) = cumulative_integral(&tower[n], dt);
            if used == IntegrationScheme::Trapezoid {
                scheme = IntegrationScheme::Trapezoid;
            }
            tower.push(next);
        }
        orders.push(tower);
    }
    Ok(PrimitiveStack {
        t_final: u.t_final,
        orders,
        scheme,
    })
}

/// ∫₀ᵀ f(t)dt on the grid (Simpson for even step count, else trapezoid).
pub fn integral_on_grid(f: &[f64], dt: f64) -> f64 {
    let n = f.len() - 1;
    if n % 2 == 0 {
        let mut acc = 0.0;
        let mut i = 0;
        while i + 2 <= n {
            acc += dt / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
            i += 2;
        }
        acc
    } else {
        let mut acc = 0.0;
        for i in 0..n {
            acc += 0.5 * dt * (f[i] + f[i + 1]);
        }
        acc
    }
}

/// Complex-valued counterpart of [`cumulative_integral`].
pub fn cumulative_integral_c64(f: &[Complex64], dt: f64) -> (Vec<Complex64>, IntegrationScheme) {
    let n = f.len() - 1;
    let mut out = vec![Complex64::ZERO; n + 1];
    if n % 2 == 0 {
        let mut i = 0;
        while i + 2 <= n {
            out[i + 1] = out[i] + dt / 12.0 * (5.0 * f[i] + 8.0 * f[i + 1] - f[i + 2]);
            out[i + 2] = out[i] + dt / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
            i += 2;
        }
        (out, IntegrationScheme::Simpson)
    } else {
        for i in 0..n {
            out[i + 1] = out[i] + 0.5 * dt * (f[i] + f[i + 1]);
        }
        (out, IntegrationScheme::Trapezoid)
    }
}

/// Complex-valued counterpart of [`integral_on_grid`].
pub fn integral_on_grid_c64(f: &[Complex64], dt: f64) -> Complex64 {
    let n = f.len() - 1;
    let mut acc = Complex64::ZERO;
    if n % 2 == 0 {
        let mut i = 0;
        while i + 2 <= n {
            acc += dt / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
            i += 2;
        }
    } else {
        for i in 0..n {
            acc += 0.5 * dt * (f[i] + f[i + 1]);
        }
    }
    acc
}

/// L²(0,T) norm of a grid function.
pub fn l2_norm(f: &[f64], t_final: f64) -> f64 {
    let dt = t_final / (f.len() - 1) as f64;
    let squares: Vec<f64> = f.iter().map(|v| v * v).collect();
    integral_on_grid(&squares, dt).max(0.0).sqrt()
}

/// Sup norm of a grid function.
pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// First derivative on a uniform grid by fourth-order finite differences
/// (centered in the interior, one-sided at the four boundary samples).
pub fn derivative_on_grid(f: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = f.len() - 1;
    if n < 4 {
        return Err(Error::InvalidArgument(
            "derivative stencil needs at least 5 grid samples".into(),
        ));
    }
    let h12 = 12.0 * dt;
    let mut out = vec![0.0; n + 1];
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / h12;
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / h12;
    for i in 2..n - 1 {
        out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / h12;
    }
    out[n - 1] = (3.0 * f[n] + 10.0 * f[n - 1] - 18.0 * f[n - 2] + 6.0 * f[n - 3] - f[n - 4]) / h12;
    out[n] = (25.0 * f[n] - 48.0 * f[n - 1] + 36.0 * f[n - 2] - 16.0 * f[n - 3] + 3.0 * f[n - 4]) / h12;
    Ok(out)
}

/// H^m(0,T) norm of the control, root-sum-square over channels:
/// (Σ_ℓ Σ_{i=0}^{m} ‖D^i u^ℓ‖²_{L²})^{1/2}.
pub fn sobolev_norm(u: &ControlGrid, m: usize) -> Result<f64> {
    if 4 * m >= u.steps() && m > 0 {
        return Err(Error::InvalidArgument(format!(
            "H^{m} stencils do not fit on a grid with {} steps",
            u.steps()
        )));
    }
    let dt = u.dt();
    let mut total = 0.0;
    for channel in &u.values {
        let mut current = channel.clone();
        let norm = l2_norm(&current, u.t_final);
        total += norm * norm;
        for _ in 0..m {
            current = derivative_on_grid(&current, dt)?;
            let norm = l2_norm(&current, u.t_final);
            total += norm * norm;
        }
    }
    Ok(total.sqrt())
}

/// Smallness proxy for the W^{−1,∞} norm: the sup of the first primitive,
/// maximized over channels. This is the quantity every drift estimate is
/// actually driven by; it is a proxy, not a quotient-space norm.
pub fn wminus1inf_proxy(u: &ControlGrid) -> Result<f64> {
    let stack = iterated_primitives(u, 1)?;
    Ok((1..=u.r())
        .map(|ell| sup_norm(stack.primitive(ell, 1)))
        .fold(0.0, f64::max))
}

/// End-of-horizon primitive values u_p^ℓ(T), p = 1..=depth, per channel.
/// Returned as out[ℓ−1][p−1].
pub fn boundary_values(stack: &PrimitiveStack) -> Vec<Vec<f64>> {
    stack
        .orders
        .iter()
        .map(|tower| tower[1..].iter().map(|f| *f.last().unwrap()).collect())
        .collect()
}

/// Closed-form signal generators, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ControlLaw {
    /// u(t) = level.
    Constant { level: f64 },
    /// u(t) = amplitude · cos(omega·t + phase).
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// u(t) = Σ coeffs[i] · tⁱ.
    Polynomial { coeffs: Vec<f64> },
    /// Random trigonometric polynomial with periods T, T/2, …, T/modes:
    /// coefficients are drawn once from a seeded generator and normalized
    /// so that |u| ≤ amplitude pointwise for every t.
    RandomFourier {
        modes: usize,
        amplitude: f64,
        seed: u64,
    },
}

/// A law with all randomness resolved, evaluable at any t.
#[derive(Debug, Clone)]
pub enum RealizedLaw {
    Closed(ControlLaw),
    Fourier {
        t_final: f64,
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
    },
}

impl ControlLaw {
    /// Resolve randomness (if any) against the horizon.
    pub fn realize(&self, t_final: f64) -> RealizedLaw {
        match self {
            ControlLaw::RandomFourier {
                modes,
                amplitude,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut cos_coeffs: Vec<f64> =
                    (0..*modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let mut sin_coeffs: Vec<f64> =
                    (0..*modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let mass: f64 = cos_coeffs
                    .iter()
                    .chain(sin_coeffs.iter())
                    .map(|c| c.abs())
                    .sum();
                let scale = if mass > 0.0 { amplitude / mass } else { 0.0 };
                for c in cos_coeffs.iter_mut().chain(sin_coeffs.iter_mut()) {
                    *c *= scale;
                }
                RealizedLaw::Fourier {
                    t_final,
                    cos_coeffs,
                    sin_coeffs,
                }
            }
            other => RealizedLaw::Closed(other.clone()),
        }
    }
}

impl RealizedLaw {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RealizedLaw::Closed(ControlLaw::Constant { level }) => *level,
            RealizedLaw::Closed(ControlLaw::Sinusoid {
                amplitude,
                omega,
                phase,
            }) => amplitude * (omega * t + phase).cos(),
            RealizedLaw::Closed(ControlLaw::Polynomial { coeffs }) => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
            RealizedLaw::Closed(ControlLaw::RandomFourier { .. }) => {
                unreachable!("realize() resolves random laws")
            }
            RealizedLaw::Fourier {
                t_final,
                cos_coeffs,
                sin_coeffs,
            } => {
                let base = 2.0 * PI / t_final;
                let mut acc = 0.0;
                for (m, (a, b)) in cos_coeffs.iter().zip(sin_coeffs.iter()).enumerate() {
                    let arg = base * (m + 1) as f64 * t;
                    acc += a * arg.cos() + b * arg.sin();
                }
                acc
            }
        }
    }
}

/// JSON document describing a multichannel control on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub channels: Vec<ControlLaw>,
}

impl ControlSpec {
    /// Sample every channel on the grid; `fallback_steps` is used when the
    /// document does not pin N.
    pub fn sample(&self, fallback_steps: usize) -> Result<ControlGrid> {
        let n = self.steps.unwrap_or(fallback_steps);
        if n < 2 {
            return Err(Error::InvalidArgument("control grid needs N >= 2".into()));
        }
        let laws: Vec<RealizedLaw> = self.channels.iter().map(|c| c.realize(self.t_final)).collect();
        let values = laws
            .iter()
            .map(|law| {
                (0..=n)
                    .map(|i| law.eval(self.t_final * i as f64 / n as f64))
                    .collect()
            })
            .collect();
        ControlGrid::new(self.t_final, values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("control spec serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn single(t_final: f64, samples: Vec<f64>) -> ControlGrid {
        ControlGrid::new(t_final, vec![samples]).unwrap()
    }

    fn sampled<F: Fn(f64) -> f64>(f: F, t_final: f64, n: usize) -> ControlGrid {
        single(
            t_final,
            (0..=n).map(|i| f(t_final * i as f64 / n as f64)).collect(),
        )
    }

    #[test]
    fn primitives_of_zero_and_one() {
        let t_final = 0.7;
        let zero = sampled(|_| 0.0, t_final, 100);
        let stack = iterated_primitives(&zero, 3).unwrap();
        for n in 0..=3 {
            assert!(stack.primitive(1, n).iter().all(|&v| v == 0.0));
        }

        let one = sampled(|_| 1.0, t_final, 100);
        let stack = iterated_primitives(&one, 2).unwrap();
        assert_eq!(stack.scheme, IntegrationScheme::Simpson);
        for i in [0, 13, 50, 100] {
            let t = one.time(i);
            assert_abs_diff_eq!(stack.primitive(1, 1)[i], t, epsilon = 1e-13);
            assert_abs_diff_eq!(stack.primitive(1, 2)[i], 0.5 * t * t, epsilon = 1e-13);
        }
        assert_eq!(stack.primitive(1, 1)[0], 0.0);
        assert_eq!(stack.primitive(1, 2)[0], 0.0);
    }

    #[test]
    fn primitive_of_cosine_matches_antiderivative() {
        let t_final = 2.0;
        let omega = 7.3;
        let u = sampled(|t| (omega * t).cos(), t_final, 400);
        let stack = iterated_primitives(&u, 1).unwrap();
        for i in [1, 57, 200, 399, 400] {
            let t = u.time(i);
            assert_abs_diff_eq!(
                stack.primitive(1, 1)[i],
                (omega * t).sin() / omega,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn odd_grid_falls_back_to_trapezoid() {
        let u = sampled(|_| 1.0, 1.0, 101);
        let stack = iterated_primitives(&u, 1).unwrap();
        assert_eq!(stack.scheme, IntegrationScheme::Trapezoid);
        assert_abs_diff_eq!(stack.primitive(1, 1)[101], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn discrete_fundamental_theorem_is_second_order() {
        let t_final = 1.0;
        let defect = |n: usize| {
            let u = sampled(|t| (5.0 * t).sin() * (1.0 + t), t_final, n);
            let stack = iterated_primitives(&u, 1).unwrap();
            let f = stack.primitive(1, 0);
            let big_f = stack.primitive(1, 1);
            let dt = u.dt();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let lhs = (big_f[i + 1] - big_f[i]) / dt;
                let rhs = 0.5 * (f[i] + f[i + 1]);
                worst = worst.max((lhs - rhs).abs());
            }
            worst
        };
        let coarse = defect(100);
        let fine = defect(200);
        let ratio = coarse / fine;
        assert!(
            (3.0..5.0).contains(&ratio),
            "expected O(dt^2) defect, got ratio {ratio} ({coarse} vs {fine})"
        );
    }

    #[test]
    fn l2_and_sup_norms() {
        let t_final = 0.42;
        let zero = sampled(|_| 0.0, t_final, 50);
        assert_eq!(l2_norm(zero.channel(1), t_final), 0.0);
        let one = sampled(|_| 1.0, t_final, 50);
        assert_abs_diff_eq!(l2_norm(one.channel(1), t_final), t_final.sqrt(), epsilon = 1e-12);
        let wave = sampled(|t| (3.0 * t).sin(), t_final, 50);
        assert!(sup_norm(wave.channel(1)) <= 1.0);
    }

    #[test]
    fn sobolev_norm_closed_form_oracle() {
        // u(t) = sin(2πt/T): ‖u‖²_{L²} = T/2 and ‖u'‖²_{L²} = (2π/T)²·T/2.
        let t_final = 0.3;
        let u = sampled(|t| (2.0 * PI * t / t_final).sin(), t_final, 2000);
        let expected = (t_final / 2.0 + (2.0 * PI / t_final).powi(2) * t_final / 2.0).sqrt();
        let h1 = sobolev_norm(&u, 1).unwrap();
        assert!(
            ((h1 - expected) / expected).abs() < 1e-6,
            "H1 = {h1}, closed form = {expected}"
        );
        let h0 = sobolev_norm(&u, 0).unwrap();
        assert_abs_diff_eq!(h0, l2_norm(u.channel(1), t_final), epsilon = 1e-14);
    }

    #[test]
    fn sobolev_norm_rejects_oversized_stencils() {
        let u = sampled(|t| t, 1.0, 8);
        assert!(sobolev_norm(&u, 2).is_err());
    }

    #[test]
    fn primitive_sup_proxy_examples() {
        let t_final = 0.8;
        let zero = sampled(|_| 0.0, t_final, 200);
        assert_eq!(wminus1inf_proxy(&zero).unwrap(), 0.0);
        let one = sampled(|_| 1.0, t_final, 200);
        assert_abs_diff_eq!(wminus1inf_proxy(&one).unwrap(), t_final, epsilon = 1e-12);
        let cosine = sampled(|t| (2.0 * PI * t / t_final).cos(), t_final, 200);
        assert_abs_diff_eq!(
            wminus1inf_proxy(&cosine).unwrap(),
            t_final / (2.0 * PI),
            epsilon = 1e-6
        );
    }

    #[test]
    fn boundary_values_example() {
        let t_final = 0.5;
        let one = ControlGrid::new(t_final, vec![vec![1.0; 201], vec![2.0; 201]]).unwrap();
        let stack = iterated_primitives(&one, 2).unwrap();
        let bv = boundary_values(&stack);
        assert_abs_diff_eq!(bv[0][0], t_final, epsilon = 1e-12);
        assert_abs_diff_eq!(bv[0][1], 0.5 * t_final * t_final, epsilon = 1e-12);
        assert_abs_diff_eq!(bv[1][0], 2.0 * t_final, epsilon = 1e-12);

        let full_period = sampled(|t| (2.0 * PI * t / t_final).sin(), t_final, 400);
        let stack = iterated_primitives(&full_period, 1).unwrap();
        let bv = boundary_values(&stack);
        assert_abs_diff_eq!(bv[0][0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        let grid = ControlGrid::new(
            0.25,
            vec![
                (0..=40).map(|i| (i as f64 * 0.09).sin()).collect(),
                (0..=40).map(|i| (i as f64 * 0.05).cos()).collect(),
            ],
        )
        .unwrap();
        grid.to_csv(&path).unwrap();
        let back = ControlGrid::from_csv(&path).unwrap();
        assert_eq!(back.r(), 2);
        assert_eq!(back.steps(), 40);
        assert_abs_diff_eq!(back.t_final, 0.25, epsilon = 1e-15);
        for ell in 1..=2 {
            for i in 0..=40 {
                assert_abs_diff_eq!(back.channel(ell)[i], grid.channel(ell)[i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn control_spec_json_and_determinism() {
        let text = r#"{
            "T": 0.1,
            "N": 64,
            "channels": [
                {"law": "constant", "level": 0.5},
                {"law": "sinusoid", "amplitude": 1.0, "omega": 29.6},
                {"law": "polynomial", "coeffs": [0.0, 1.0, 2.0]},
                {"law": "random-fourier", "modes": 5, "amplitude": 0.3, "seed": 7}
            ]
        }"#;
        let spec = ControlSpec::from_json(text).unwrap();
        let grid = spec.sample(0).unwrap();
        assert_eq!(grid.r(), 4);
        assert_eq!(grid.steps(), 64);
        assert_eq!(grid.channel(1)[10], 0.5);
        assert_abs_diff_eq!(grid.channel(2)[0], 1.0, epsilon = 1e-15);
        let t = grid.time(7);
        assert_abs_diff_eq!(grid.channel(3)[7], t + 2.0 * t * t, epsilon = 1e-15);
        assert!(sup_norm(grid.channel(4)) <= 0.3 + 1e-12);

        // Same seed → identical samples; different seed → different signal.
        let again = spec.sample(0).unwrap();
        assert_eq!(grid, again);
        let mut other = spec.clone();
        other.channels[3] = ControlLaw::RandomFourier {
            modes: 5,
            amplitude: 0.3,
            seed: 8,
        };
        assert_ne!(other.sample(0).unwrap().channel(4), grid.channel(4));

        // Round-trip through JSON is the identity on the spec.
        let emitted = spec.to_json();
        assert_eq!(ControlSpec::from_json(&emitted).unwrap(), spec);
    }

    #[test]
    fn default_steps_resolves_fastest_phase() {
        let lambda_max = (64.0 * PI).powi(2);
        let n = default_steps(0.05, lambda_max);
        assert_eq!(n % 2, 0);
        let dt = 0.05 / n as f64;
        assert!(dt <= 1e-3 * 0.05 + 1e-18);
        assert!(dt <= 0.1 / lambda_max + 1e-18);
    }

    proptest! {
        #[test]
        fn sobolev_dominates_l2(seed in 0u64..1000) {
            let spec = ControlSpec {
                t_final: 0.4,
                steps: Some(240),
                channels: vec![ControlLaw::RandomFourier { modes: 4, amplitude: 1.0, seed }],
            };
            let u = spec.sample(0).unwrap();
            let h2 = sobolev_norm(&u, 2).unwrap();
            let h1 = sobolev_norm(&u, 1).unwrap();
            let l2 = l2_norm(u.channel(1), u.t_final);
            prop_assert!(h2 + 1e-12 >= h1);
            prop_assert!(h1 + 1e-12 >= l2);
        }

        #[test]
        fn primitive_sup_bounded_by_cauchy_schwarz(seed in 0u64..1000) {
            let spec = ControlSpec {
                t_final: 0.6,
                steps: Some(300),
                channels: vec![ControlLaw::RandomFourier { modes: 6, amplitude: 2.0, seed }],
            };
            let u = spec.sample(0).unwrap();
            let proxy = wminus1inf_proxy(&u).unwrap();
            let bound = u.t_final.sqrt() * l2_norm(u.channel(1), u.t_final);
            prop_assert!(proxy <= bound * (1.0 + 1e-6) + 1e-12);
        }
    }
}
