//! Dirichlet-Laplacian eigenstructure on (0,1), dipolar-moment functions,
//! and the moment matrices ⟨μ φ_j, φ_p⟩.
//!
//! Modes are indexed from 1 throughout (`lambda(1) = π²`); internal arrays
//! store index j at slot j−1.
//!
//! Moment matrices can be built two ways: entry-by-entry adaptive quadrature
//! of μ·φ_j·φ_p ([`moment`]), or through the cosine-moment table
//! F(n) = ∫ μ(x)cos(nπx)dx with the product-to-sum identity
//! 2·sin(jπx)sin(pπx) = cos((j−p)πx) − cos((j+p)πx) ([`moment_table`]).
//! The second form costs O(J) quadratures instead of O(J²) and is exactly
//! symmetric by construction.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::quadrature;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Eigenvalues and the derived frequency gaps for a truncation of size J.
///
/// `omega[j]` is the gap to the ground mode and `nu[j]` the gap to the
/// target mode K, so `omega[j] + nu[j] = omega[K]` for every j.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub nu: Vec<f64>,
    pub target_mode: usize,
}

impl EigenData {
    /// λ_j = (jπ)², 1-indexed.
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambda[j - 1]
    }

    /// ω_j = λ_j − λ_1, 1-indexed.
    pub fn omega(&self, j: usize) -> f64 {
        self.omega[j - 1]
    }

    /// ν_j = λ_K − λ_j, 1-indexed.
    pub fn nu(&self, j: usize) -> f64 {
        self.nu[j - 1]
    }

    /// ω_K, the transition frequency of the lost direction.
    pub fn omega_target(&self) -> f64 {
        self.omega[self.target_mode - 1]
    }

    pub fn truncation(&self) -> usize {
        self.lambda.len()
    }
}

/// Closed-form eigendata λ_j = (jπ)² for the valid `config`.
pub fn eigendata(config: &ProblemConfig) -> EigenData {
    let j_max = config.j_max;
    let lambda: Vec<f64> = (1..=j_max)
        .map(|j| {
            let jpi = j as f64 * PI;
            jpi * jpi
        })
        .collect();
    let omega = lambda.iter().map(|l| l - lambda[0]).collect();
    let nu = lambda
        .iter()
        .map(|l| lambda[config.target_mode - 1] - l)
        .collect();
    EigenData {
        lambda,
        omega,
        nu,
        target_mode: config.target_mode,
    }
}

/// φ_j(x) = √2 sin(jπx) for 1 ≤ j and x in [0,1].
pub fn eval_mode(j: usize, x: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidArgument("mode index must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "mode argument x = {x} outside [0, 1]"
        )));
    }
    Ok(SQRT_2 * (j as f64 * PI * x).sin())
}

fn mode_unchecked(j: usize, x: f64) -> f64 {
    SQRT_2 * (j as f64 * PI * x).sin()
}

/// One smooth compactly supported bump: on its support (lo, hi) it equals
/// amplitude · exp(−1/(s(1−s))) with s = (x−lo)/(hi−lo), and 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub lo: f64,
    pub hi: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let s = (x - self.lo) / (self.hi - self.lo);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        self.amplitude * (-1.0 / (s * (1.0 - s))).exp()
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument("bump parameters must be finite".into()));
        }
        if !(0.0 < self.lo && self.lo < self.hi && self.hi < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bump support ({}, {}) must sit strictly inside (0, 1)",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// A dipolar-moment function on (0,1), in one of two closed-form families.
///
/// Both families are smooth enough for every hypothesis the laboratory
/// checks, so regularity never has to be verified numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDipole", into = "RawDipole")]
pub enum DipoleFunction {
    /// μ(x) = Σ_m coeffs[m−1] · sin(mπx).
    Sine { coeffs: Vec<f64> },
    /// Sum of compactly supported smooth bumps.
    Bumps { bumps: Vec<Bump> },
}

/// Wire form of a dipole: {"kind": "sine"|"bumps", "params": [...]}.
/// Sine params are the coefficients; bump params are flattened
/// (lo, hi, amplitude) triples.
#[derive(Debug, Serialize, Deserialize)]
struct RawDipole {
    kind: String,
    params: Vec<f64>,
}

impl From<DipoleFunction> for RawDipole {
    fn from(d: DipoleFunction) -> Self {
        match d {
            DipoleFunction::Sine { coeffs } => RawDipole {
                kind: "sine".into(),
                params: coeffs,
            },
            DipoleFunction::Bumps { bumps } => RawDipole {
                kind: "bumps".into(),
                params: bumps
                    .iter()
                    .flat_map(|b| [b.lo, b.hi, b.amplitude])
                    .collect(),
            },
        }
    }
}

impl TryFrom<RawDipole> for DipoleFunction {
    type Error = Error;

    fn try_from(raw: RawDipole) -> Result<Self> {
        match raw.kind.as_str() {
            "sine" => Ok(DipoleFunction::Sine { coeffs: raw.params }),
            "bumps" => {
                if raw.params.len() % 3 != 0 {
                    return Err(Error::Parse(format!(
                        "bump params must be (lo, hi, amplitude) triples, got {} values",
                        raw.params.len()
                    )));
                }
                let bumps: Vec<Bump> = raw
                    .params
                    .chunks_exact(3)
                    .map(|c| Bump {
                        lo: c[0],
                        hi: c[1],
                        amplitude: c[2],
                    })
                    .collect();
                let d = DipoleFunction::Bumps { bumps };
                d.validate()?;
                Ok(d)
            }
            other => Err(Error::Parse(format!(
                "unknown dipole kind {other:?}; expected \"sine\" or \"bumps\""
            ))),
        }
    }
}

impl DipoleFunction {
    pub fn zero() -> Self {
        DipoleFunction::Sine { coeffs: vec![] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DipoleFunction::Sine { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(i, a)| a * ((i + 1) as f64 * PI * x).sin())
                .sum(),
            DipoleFunction::Bumps { bumps } => bumps.iter().map(|b| b.eval(x)).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DipoleFunction::Sine { coeffs } => {
                if coeffs.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidArgument("sine coefficients must be finite".into()));
                }
                Ok(())
            }
            DipoleFunction::Bumps { bumps } => bumps.iter().try_for_each(Bump::validate),
        }
    }

    /// Disjoint intervals outside of which the function vanishes
    /// identically. Quadratures are restricted to these so that narrow bumps
    /// are never missed by a coarse first panel; overlapping bumps are
    /// merged so no region is ever integrated twice.
    pub fn support_pieces(&self) -> Vec<(f64, f64)> {
        match self {
            DipoleFunction::Sine { coeffs } => {
                if coeffs.iter().all(|&a| a == 0.0) {
                    vec![]
                } else {
                    vec![(0.0, 1.0)]
                }
            }
            DipoleFunction::Bumps { bumps } => {
                let mut raw: Vec<(f64, f64)> = bumps
                    .iter()
                    .filter(|b| b.amplitude != 0.0)
                    .map(|b| (b.lo, b.hi))
                    .collect();
                raw.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
                for (lo, hi) in raw {
                    match merged.last_mut() {
                        Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                        _ => merged.push((lo, hi)),
                    }
                }
                merged
            }
        }
    }

    /// F(n) = ∫₀¹ μ(x) cos(nπx) dx, with an error bound.
    ///
    /// Sine series have the closed form ∫ sin(mπx)cos(nπx)dx =
    /// 2m/(π(m²−n²)) for m+n odd and 0 otherwise; bumps are integrated
    /// adaptively over their supports.
    pub fn cosine_moment(&self, n: usize, tol: f64) -> Result<(f64, f64)> {
        match self {
            DipoleFunction::Sine { coeffs } => {
                let value = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * sine_times_cosine_integral(i + 1, n))
                    .sum();
                Ok((value, 0.0))
            }
            DipoleFunction::Bumps { .. } => {
                let pieces = self.support_pieces();
                let mut value = 0.0;
                let mut bound = 0.0;
                let piece_tol = tol / pieces.len().max(1) as f64;
                for (lo, hi) in pieces {
                    let f = |x: f64| self.eval(x) * (n as f64 * PI * x).cos();
                    let q = quadrature::integrate_with(&f, lo, hi, piece_tol, 3)?;
                    value += q.value;
                    bound += q.error_bound;
                }
                Ok((value, bound))
            }
        }
    }

    /// ⟨μ φ_j, φ_p⟩ via the cosine-moment closed form, available for sine
    /// series without any quadrature. Used as an independent oracle in tests.
    pub fn sine_moment_closed_form(&self, j: usize, p: usize) -> Option<f64> {
        match self {
            DipoleFunction::Sine { coeffs } => {
                let diff = j.abs_diff(p);
                let sum = j + p;
                let value = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        a * (sine_times_cosine_integral(i + 1, diff)
                            - sine_times_cosine_integral(i + 1, sum))
                    })
                    .sum();
                Some(value)
            }
            DipoleFunction::Bumps { .. } => None,
        }
    }
}

/// ∫₀¹ sin(mπx) cos(nπx) dx for integers m ≥ 1, n ≥ 0.
fn sine_times_cosine_integral(m: usize, n: usize) -> f64 {
    if (m + n) % 2 == 0 {
        0.0
    } else {
        let mf = m as f64;
        let nf = n as f64;
        2.0 * mf / (PI * (mf * mf - nf * nf))
    }
}

/// The r dipolar moments μ = (μ_1, …, μ_r).
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleSet {
    pub mus: Vec<DipoleFunction>,
}

impl DipoleSet {
    pub fn new(mus: Vec<DipoleFunction>) -> Result<Self> {
        let set = DipoleSet { mus };
        set.validate()?;
        Ok(set)
    }

    pub fn r(&self) -> usize {
        self.mus.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mus.is_empty() {
            return Err(Error::InvalidArgument("a dipole set needs at least one channel".into()));
        }
        self.mus.iter().try_for_each(DipoleFunction::validate)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            r: usize,
            mus: &'a [DipoleFunction],
        }
        serde_json::to_string_pretty(&Doc {
            r: self.mus.len(),
            mus: &self.mus,
        })
        .expect("dipole serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            r: usize,
            mus: Vec<DipoleFunction>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.r != doc.mus.len() {
            return Err(Error::Parse(format!(
                "dipole set declares r = {} but lists {} functions",
                doc.r,
                doc.mus.len()
            )));
        }
        DipoleSet::new(doc.mus)
    }
}

/// ⟨f φ_j, φ_p⟩ for an arbitrary pointwise-evaluable weight f.
pub fn moment_of<F: Fn(f64) -> f64>(f: &F, j: usize, p: usize, tol: f64) -> Result<f64> {
    let integrand = |x: f64| f(x) * (mode_unchecked(j, x) * mode_unchecked(p, x));
    Ok(quadrature::integrate(&integrand, 0.0, 1.0, tol)?.value)
}

/// ⟨μ φ_j, φ_p⟩ by adaptive quadrature restricted to the support of μ.
pub fn moment(mu: &DipoleFunction, j: usize, p: usize, tol: f64) -> Result<f64> {
    if j == 0 || p == 0 {
        return Err(Error::InvalidArgument("mode indices must be >= 1".into()));
    }
    let pieces = mu.support_pieces();
    let piece_tol = tol / pieces.len().max(1) as f64;
    let mut value = 0.0;
    for (lo, hi) in pieces {
        let integrand = |x: f64| mu.eval(x) * (mode_unchecked(j, x) * mode_unchecked(p, x));
        value += quadrature::integrate_with(&integrand, lo, hi, piece_tol, 3)?.value;
    }
    Ok(value)
}

/// Per-channel J×J matrices of ⟨μ_ℓ φ_j, φ_p⟩, exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub entries: Vec<DMatrix<f64>>,
    pub quad_error: f64,
}

impl MomentTable {
    /// ⟨μ_ℓ φ_j, φ_p⟩ with 1-indexed channel and modes.
    pub fn entry(&self, ell: usize, j: usize, p: usize) -> f64 {
        self.entries[ell - 1][(j - 1, p - 1)]
    }

    pub fn truncation(&self) -> usize {
        self.entries[0].nrows()
    }
}

/// Build the full moment table through cosine moments: each channel needs
/// F(0..2J), and entry (j,p) = F(|j−p|) − F(j+p).
pub fn moment_table(mus: &DipoleSet, config: &ProblemConfig) -> Result<MomentTable> {
    mus.validate()?;
    let j_max = config.j_max;
    let mut entries = Vec::with_capacity(mus.r());
    let mut quad_error: f64 = 0.0;
    for mu in &mus.mus {
        let mut cosine = vec![0.0; 2 * j_max + 1];
        let mut channel_err: f64 = 0.0;
        for (n, slot) in cosine.iter_mut().enumerate() {
            let (value, bound) = mu.cosine_moment(n, config.tol)?;
            *slot = value;
            channel_err = channel_err.max(bound);
        }
        let mat = DMatrix::from_fn(j_max, j_max, |row, col| {
            let j = row + 1;
            let p = col + 1;
            cosine[j.abs_diff(p)] - cosine[j + p]
        });
        entries.push(mat);
        quad_error = quad_error.max(2.0 * channel_err);
    }
    Ok(MomentTable { entries, quad_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProblemConfig;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn config_with(j_max: usize, target: usize) -> ProblemConfig {
        let mut c = ProblemConfig::new(1, target, 2);
        c.j_max = j_max;
        c.validate().unwrap();
        c
    }

    #[test]
    fn eigendata_closed_forms() {
        let config = config_with(16, 3);
        let eig = eigendata(&config);
        assert_abs_diff_eq!(eig.lambda(1), 9.869_604_4, epsilon = 1e-6);
        assert_abs_diff_eq!(eig.lambda(2), 4.0 * PI * PI, epsilon = 1e-12);
        assert_eq!(eig.omega(1), 0.0);
        assert_eq!(eig.nu(3), 0.0);
        for j in 1..=16 {
            let resid = (eig.omega(j) + eig.nu(j) - eig.omega_target()).abs();
            assert!(resid <= 1e-9 * eig.omega_target().max(1.0), "j = {j}");
        }
    }

    #[test]
    fn mode_values_and_domain() {
        assert_abs_diff_eq!(eval_mode(1, 0.5).unwrap(), SQRT_2, epsilon = 1e-15);
        assert_eq!(eval_mode(7, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(eval_mode(2, 0.5).unwrap(), 0.0, epsilon = 1e-15);
        assert!(eval_mode(0, 0.5).is_err());
        assert!(eval_mode(1, -0.1).is_err());
        assert!(eval_mode(1, 1.1).is_err());
    }

    #[test]
    fn constant_weight_recovers_orthonormality() {
        let one = |_: f64| 1.0;
        assert_abs_diff_eq!(moment_of(&one, 1, 1, 1e-12).unwrap(), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(moment_of(&one, 3, 3, 1e-12).unwrap(), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(moment_of(&one, 2, 5, 1e-12).unwrap(), 0.0, epsilon = 1e-11);
    }

    /// Fixed-step composite Simpson on [0,1], used only as an oracle here.
    fn simpson_oracle<F: Fn(f64) -> f64>(f: F, panels: usize) -> f64 {
        let h = 1.0 / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            let a = i as f64 * h;
            acc += h / 6.0 * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h));
        }
        acc
    }

    #[test]
    fn linear_weight_moments() {
        let lin = |x: f64| x;
        assert_abs_diff_eq!(moment_of(&lin, 1, 1, 1e-12).unwrap(), 0.5, epsilon = 1e-11);

        let adaptive = moment_of(&lin, 1, 2, 1e-12).unwrap();
        let closed = -16.0 / (9.0 * PI * PI);
        let oracle = simpson_oracle(
            |x| x * mode_unchecked(1, x) * mode_unchecked(2, x),
            10_000,
        );
        assert_abs_diff_eq!(adaptive, closed, epsilon = 1e-10);
        assert_abs_diff_eq!(adaptive, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(adaptive, -0.180127, epsilon = 1e-6);
    }

    #[test]
    fn sine_series_quadrature_matches_closed_form() {
        let mu = DipoleFunction::Sine {
            coeffs: vec![0.7, -0.3, 0.0, 0.11],
        };
        for (j, p) in [(1, 1), (1, 2), (2, 5), (3, 4), (6, 6)] {
            let quad = moment(&mu, j, p, 1e-12).unwrap();
            let closed = mu.sine_moment_closed_form(j, p).unwrap();
            assert_abs_diff_eq!(quad, closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn sine_cosine_integral_spot_checks() {
        // ∫ sin(πx)cos(0)dx = 2/π; ∫ sin(2πx)cos(πx)dx = 4/(3π).
        assert_abs_diff_eq!(sine_times_cosine_integral(1, 0), 2.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(
            sine_times_cosine_integral(2, 1),
            4.0 / (3.0 * PI),
            epsilon = 1e-15
        );
        assert_eq!(sine_times_cosine_integral(3, 1), 0.0);
        assert_eq!(sine_times_cosine_integral(2, 2), 0.0);
    }

    #[test]
    fn bump_evaluation_and_support() {
        let bump = Bump {
            lo: 0.2,
            hi: 0.4,
            amplitude: 3.0,
        };
        assert_eq!(bump.eval(0.1), 0.0);
        assert_eq!(bump.eval(0.2), 0.0);
        assert_eq!(bump.eval(0.4), 0.0);
        assert_abs_diff_eq!(bump.eval(0.3), 3.0 * (-4.0f64).exp(), epsilon = 1e-15);
        assert!(bump.eval(0.25) > 0.0);
    }

    #[test]
    fn bump_moment_against_simpson_oracle() {
        let mu = DipoleFunction::Bumps {
            bumps: vec![
                Bump { lo: 0.1, hi: 0.3, amplitude: 1.5 },
                Bump { lo: 0.6, hi: 0.9, amplitude: -0.8 },
            ],
        };
        for (j, p) in [(1, 1), (1, 4), (3, 5)] {
            let adaptive = moment(&mu, j, p, 1e-12).unwrap();
            let oracle = simpson_oracle(
                |x| mu.eval(x) * mode_unchecked(j, x) * mode_unchecked(p, x),
                20_000,
            );
            assert_abs_diff_eq!(adaptive, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn moment_table_matches_entrywise_quadrature() {
        let mus = DipoleSet::new(vec![
            DipoleFunction::Bumps {
                bumps: vec![Bump { lo: 0.15, hi: 0.45, amplitude: 1.0 }],
            },
            DipoleFunction::zero(),
        ])
        .unwrap();
        let config = config_with(8, 2);
        let table = moment_table(&mus, &config).unwrap();
        assert_eq!(table.entries.len(), 2);
        assert_eq!(table.truncation(), 8);
        // Second channel is identically zero.
        assert_eq!(table.entries[1].amax(), 0.0);
        // First channel agrees with the literal definition entry by entry.
        for j in 1..=8 {
            for p in j..=8 {
                let direct = moment(&mus.mus[0], j, p, 1e-12).unwrap();
                assert_abs_diff_eq!(table.entry(1, j, p), direct, epsilon = 1e-9);
                assert_eq!(table.entry(1, j, p), table.entry(1, p, j));
            }
        }
        assert!(table.quad_error < 1e-9);
    }

    #[test]
    fn dipole_set_json_round_trip() {
        let set = DipoleSet::new(vec![
            DipoleFunction::Sine { coeffs: vec![1.0, 0.25, -0.125] },
            DipoleFunction::Bumps {
                bumps: vec![
                    Bump { lo: 0.1, hi: 0.2, amplitude: 0.5 },
                    Bump { lo: 0.55, hi: 0.8, amplitude: -2.0 },
                ],
            },
        ])
        .unwrap();
        let text = set.to_json();
        let parsed = DipoleSet::from_json(&text).unwrap();
        assert_eq!(parsed, set);
        assert_eq!(parsed.to_json(), text);

        assert!(text.contains("\"r\": 2"));
        assert!(text.contains("\"sine\""));
        assert!(text.contains("\"bumps\""));
    }

    #[test]
    fn dipole_set_rejects_malformed_documents() {
        assert!(DipoleSet::from_json(r#"{"r": 3, "mus": [{"kind": "sine", "params": []}]}"#).is_err());
        assert!(DipoleSet::from_json(r#"{"r": 1, "mus": [{"kind": "poly", "params": []}]}"#).is_err());
        assert!(DipoleSet::from_json(
            r#"{"r": 1, "mus": [{"kind": "bumps", "params": [0.1, 0.2]}]}"#
        )
        .is_err());
        // Support touching the boundary is rejected.
        assert!(DipoleSet::from_json(
            r#"{"r": 1, "mus": [{"kind": "bumps", "params": [0.0, 0.5, 1.0]}]}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn moment_is_symmetric(
            lo in 0.05f64..0.4,
            width in 0.05f64..0.3,
            amp in -2.0f64..2.0,
            j in 1usize..7,
            p in 1usize..7,
        ) {
            let mu = DipoleFunction::Bumps {
                bumps: vec![Bump { lo, hi: lo + width, amplitude: amp }],
            };
            let a = moment(&mu, j, p, 1e-10).unwrap();
            let b = moment(&mu, p, j, 1e-10).unwrap();
            prop_assert!((a - b).abs() <= 2e-10);
        }

        #[test]
        fn sine_closed_form_is_a_faithful_oracle(
            a1 in -1.0f64..1.0,
            a2 in -1.0f64..1.0,
            j in 1usize..6,
            p in 1usize..6,
        ) {
            let mu = DipoleFunction::Sine { coeffs: vec![a1, a2] };
            let quad = moment(&mu, j, p, 1e-11).unwrap();
            let closed = mu.sine_moment_closed_form(j, p).unwrap();
            prop_assert!((quad - closed).abs() <= 1e-10);
        }
    }
}
