//! A four-state polynomial model whose quadratic drift blocks small-time
//! controllability, verified in exact rational arithmetic.
//!
//! The model couples two scalar controls to four states:
//!
//! ```text
//! x1' = u1                x3' = u2
//! x2' = x1                x4' = (x1^2 + x1 x3 / 2 + 2 x3^2) - 2 u2 x3 - x2^2 - u2 x1^2
//! ```
//!
//! Everything interesting happens in `x4`: its drift is a quadratic form in
//! the control primitives, and the claim is that `x4(T) + x3(T)^2 < 0` is
//! unreachable from the origin in small time.  This module certifies that
//! claim symbolically and probes it numerically:
//!
//! * a sparse polynomial algebra over arbitrary-precision rationals, with
//!   exact Lie brackets `[f, g] = Dg·f − Df·g`;
//! * a small grammar of bracket words (`M`, `W`, `C`) naming the iterated
//!   brackets whose values at the origin drive the obstruction;
//! * [`obstruction_certificate`], which spans the reachable directions at
//!   the origin, extracts an annihilating functional by exact elimination,
//!   and tests the induced quadratic form for definiteness — no floats, so
//!   a `Some(witness)` is a proof, not an approximation;
//! * an RK4 simulator for the model that consumes control grids pairwise so
//!   every internal stage lands on an exact sample.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::signals::{self, ControlGrid, ControlLaw, ControlSpec};

/// Exact scalar used throughout this module.
pub type Rational = BigRational;

/// Shorthand constructor for small rationals.
pub fn rational(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

// ---------------------------------------------------------------------------
// Sparse polynomials over the rationals
// ---------------------------------------------------------------------------

/// A multivariate polynomial with rational coefficients.
///
/// Terms are keyed by their exponent vectors in a `BTreeMap`, so the
/// representation is canonical: two polynomials are equal iff their maps are.
/// Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    vars: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl Polynomial {
    pub fn zero(vars: usize) -> Self {
        Polynomial {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, value: Rational) -> Self {
        let mut p = Polynomial::zero(vars);
        p.add_term(vec![0; vars], value);
        p
    }

    /// The coordinate function `x_i` (0-based).
    pub fn variable(vars: usize, i: usize) -> Self {
        assert!(i < vars, "variable index {i} out of range for {vars} vars");
        let mut exps = vec![0; vars];
        exps[i] = 1;
        let mut p = Polynomial::zero(vars);
        p.add_term(exps, Rational::one());
        p
    }

    /// A single term `coeff · x^exps`.
    pub fn monomial(exps: &[u32], coeff: Rational) -> Self {
        let mut p = Polynomial::zero(exps.len());
        p.add_term(exps.to_vec(), coeff);
        p
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, exps: Vec<u32>, coeff: Rational) {
        debug_assert_eq!(exps.len(), self.vars);
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                let sum = slot.get() + &coeff;
                if sum.is_zero() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.vars, other.vars, "polynomial variable counts differ");
        let mut out = self.clone();
        for (exps, coeff) in &other.terms {
            out.add_term(exps.clone(), coeff.clone());
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Polynomial {
        let mut out = self.clone();
        for coeff in out.terms.values_mut() {
            *coeff = -&*coeff;
        }
        out
    }

    pub fn scale(&self, factor: &Rational) -> Polynomial {
        let mut out = Polynomial::zero(self.vars);
        if factor.is_zero() {
            return out;
        }
        for (exps, coeff) in &self.terms {
            out.add_term(exps.clone(), coeff * factor);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.vars, other.vars, "polynomial variable counts differ");
        let mut out = Polynomial::zero(self.vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(exps, ca * cb);
            }
        }
        out
    }

    /// Partial derivative with respect to `x_i`.
    pub fn partial(&self, i: usize) -> Polynomial {
        assert!(i < self.vars, "variable index {i} out of range");
        let mut out = Polynomial::zero(self.vars);
        for (exps, coeff) in &self.terms {
            if exps[i] == 0 {
                continue;
            }
            let mut lowered = exps.clone();
            lowered[i] -= 1;
            out.add_term(lowered, coeff * rat(exps[i] as i64));
        }
        out
    }

    /// Value at the origin — the constant term.
    pub fn constant_term(&self) -> Rational {
        self.terms
            .get(vec![0u32; self.vars].as_slice())
            .cloned()
            .unwrap_or_else(Rational::zero)
    }
}

// ---------------------------------------------------------------------------
// Polynomial vector fields and Lie brackets
// ---------------------------------------------------------------------------

/// A polynomial vector field on `R^d`: `d` components, each a polynomial in
/// the `d` coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyVectorField {
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let d = components.len();
        if d == 0 {
            return Err(Error::InvalidArgument(
                "a vector field needs at least one component".into(),
            ));
        }
        for (i, c) in components.iter().enumerate() {
            if c.vars() != d {
                return Err(Error::InvalidArgument(format!(
                    "component {i} is a polynomial in {} variables, expected {d}",
                    c.vars()
                )));
            }
        }
        Ok(PolyVectorField { components })
    }

    pub fn zero(d: usize) -> Self {
        PolyVectorField {
            components: vec![Polynomial::zero(d); d],
        }
    }

    /// The constant field `e_i` (0-based direction).
    pub fn constant_direction(d: usize, i: usize) -> Self {
        let mut f = PolyVectorField::zero(d);
        f.components[i] = Polynomial::constant(d, Rational::one());
        f
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn value_at_origin(&self) -> Vec<Rational> {
        self.components.iter().map(Polynomial::constant_term).collect()
    }
}

/// Exact Lie bracket `[f, g] = Dg·f − Df·g`.
pub fn lie_bracket(f: &PolyVectorField, g: &PolyVectorField) -> Result<PolyVectorField> {
    let d = f.dimension();
    if g.dimension() != d {
        return Err(Error::InvalidArgument(format!(
            "cannot bracket fields on R^{d} and R^{}",
            g.dimension()
        )));
    }
    let mut components = Vec::with_capacity(d);
    for i in 0..d {
        let mut acc = Polynomial::zero(d);
        for j in 0..d {
            acc = acc.add(&g.components[i].partial(j).mul(&f.components[j]));
            acc = acc.sub(&f.components[i].partial(j).mul(&g.components[j]));
        }
        components.push(acc);
    }
    Ok(PolyVectorField { components })
}

// ---------------------------------------------------------------------------
// Bracket words
// ---------------------------------------------------------------------------

/// A name for one of the iterated brackets evaluated at the origin.
///
/// With `f0` the drift and `f_ch` the control field of channel `ch` (1-based),
/// and writing `b ↦ b0` for one bracket with the drift (`b0 = [b, f0]`):
///
/// * `M(l, ch)`      — the channel field bracketed `l` times with the drift.
/// * `W(p, l, ch)`   — `[M(p−1, ch), M(p, ch)]`, then `l` drift brackets;
///   requires `p ≥ 1`.
/// * `C(p, l, a, b)` — `(−1)^p · [M(⌊(p+1)/2⌋, a), M(⌊p/2⌋, b)]`, then `l`
///   drift brackets; requires `a < b`.
///
/// The grammar accepted by [`BracketWord::from_str`] (and produced by
/// `Display`) is
///
/// ```text
/// word = "M(" nat "," chan ")"
///      | "W(" nat "," nat "," chan ")"
///      | "C(" nat "," nat "," chan "," chan ")" ;
/// nat  = digit { digit } ;
/// chan = nonzero digit { digit } ;
/// ```
///
/// with whitespace ignored around numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BracketWord {
    M { l: usize, channel: usize },
    W { p: usize, l: usize, channel: usize },
    C { p: usize, l: usize, first: usize, second: usize },
}

impl fmt::Display for BracketWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketWord::M { l, channel } => write!(f, "M({l},{channel})"),
            BracketWord::W { p, l, channel } => write!(f, "W({p},{l},{channel})"),
            BracketWord::C { p, l, first, second } => write!(f, "C({p},{l},{first},{second})"),
        }
    }
}

impl FromStr for BracketWord {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        let bad = |msg: &str| Error::Parse(format!("bracket word '{trimmed}': {msg}"));
        let (head, rest) = trimmed
            .split_once('(')
            .ok_or_else(|| bad("expected '(' after the letter"))?;
        let body = rest
            .strip_suffix(')')
            .ok_or_else(|| bad("expected closing ')'"))?;
        let numbers: Vec<usize> = body
            .split(',')
            .map(|piece| {
                piece
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad(&format!("'{}' is not a number", piece.trim())))
            })
            .collect::<Result<_>>()?;
        let word = match (head.trim(), numbers.as_slice()) {
            ("M", &[l, channel]) => BracketWord::M { l, channel },
            ("W", &[p, l, channel]) => BracketWord::W { p, l, channel },
            ("C", &[p, l, first, second]) => BracketWord::C { p, l, first, second },
            ("M", _) => return Err(bad("M takes exactly (l, channel)")),
            ("W", _) => return Err(bad("W takes exactly (p, l, channel)")),
            ("C", _) => return Err(bad("C takes exactly (p, l, first, second)")),
            _ => return Err(bad("expected M, W or C")),
        };
        word.validate_shape().map_err(|msg| bad(&msg))?;
        Ok(word)
    }
}

impl BracketWord {
    /// Constraints intrinsic to the word, independent of any field family.
    fn validate_shape(&self) -> std::result::Result<(), String> {
        match *self {
            BracketWord::M { channel, .. } | BracketWord::W { channel, .. } => {
                if channel == 0 {
                    return Err("channels are numbered from 1".into());
                }
            }
            BracketWord::C { first, second, .. } => {
                if first == 0 || second == 0 {
                    return Err("channels are numbered from 1".into());
                }
                if first >= second {
                    return Err("C requires first channel < second channel".into());
                }
            }
        }
        if let BracketWord::W { p: 0, .. } = self {
            return Err("W requires p >= 1".into());
        }
        Ok(())
    }

    fn max_channel(&self) -> usize {
        match *self {
            BracketWord::M { channel, .. } | BracketWord::W { channel, .. } => channel,
            BracketWord::C { second, .. } => second,
        }
    }
}

/// Parse a bracket word from its text form.
pub fn parse_bracket_word(text: &str) -> Result<BracketWord> {
    text.parse()
}

/// `b ↦ [b, drift]`, iterated `l` times.
fn iterated_drift_bracket(
    mut field: PolyVectorField,
    drift: &PolyVectorField,
    l: usize,
) -> Result<PolyVectorField> {
    for _ in 0..l {
        field = lie_bracket(&field, drift)?;
    }
    Ok(field)
}

fn m_field(fields: &[PolyVectorField], channel: usize, l: usize) -> Result<PolyVectorField> {
    iterated_drift_bracket(fields[channel].clone(), &fields[0], l)
}

/// The polynomial vector field a bracket word names, for a family
/// `fields = [drift, channel 1, channel 2, …]`.
pub fn bracket_word_field(
    word: &BracketWord,
    fields: &[PolyVectorField],
) -> Result<PolyVectorField> {
    word.validate_shape().map_err(Error::Parse)?;
    if fields.len() < 2 {
        return Err(Error::InvalidArgument(
            "need a drift field and at least one channel field".into(),
        ));
    }
    let channels = fields.len() - 1;
    if word.max_channel() > channels {
        return Err(Error::InvalidArgument(format!(
            "word {word} mentions channel {}, but only {channels} channels exist",
            word.max_channel()
        )));
    }
    let drift = &fields[0];
    match *word {
        BracketWord::M { l, channel } => m_field(fields, channel, l),
        BracketWord::W { p, l, channel } => {
            let lower = m_field(fields, channel, p - 1)?;
            let upper = m_field(fields, channel, p)?;
            iterated_drift_bracket(lie_bracket(&lower, &upper)?, drift, l)
        }
        BracketWord::C { p, l, first, second } => {
            let left = m_field(fields, first, (p + 1) / 2)?;
            let right = m_field(fields, second, p / 2)?;
            let mut field = iterated_drift_bracket(lie_bracket(&left, &right)?, drift, l)?;
            if p % 2 == 1 {
                field = PolyVectorField {
                    components: field.components.iter().map(Polynomial::neg).collect(),
                };
            }
            Ok(field)
        }
    }
}

/// The exact value of a bracket word's field at the origin.
pub fn evaluate_bracket_word(
    word: &BracketWord,
    fields: &[PolyVectorField],
) -> Result<Vec<Rational>> {
    Ok(bracket_word_field(word, fields)?.value_at_origin())
}

/// Every word whose origin value spans the reachable directions at order `k`,
/// with drift-bracket depth truncated at `l_max`: all `M`, the `W` words with
/// `p ≤ k − 1`, and the `C` words with `p ≤ 2k − 2`.
pub fn spanning_words(k: usize, channels: usize, l_max: usize) -> Vec<BracketWord> {
    let mut words = Vec::new();
    for channel in 1..=channels {
        for l in 0..=l_max {
            words.push(BracketWord::M { l, channel });
        }
    }
    for channel in 1..=channels {
        for p in 1..k {
            for l in 0..=l_max {
                words.push(BracketWord::W { p, l, channel });
            }
        }
    }
    for first in 1..=channels {
        for second in (first + 1)..=channels {
            for p in 0..=(2 * k).saturating_sub(2) {
                for l in 0..=l_max {
                    words.push(BracketWord::C { p, l, first, second });
                }
            }
        }
    }
    words
}

// ---------------------------------------------------------------------------
// Exact linear algebra over the rationals
// ---------------------------------------------------------------------------

/// Reduced row echelon form in place; returns the pivot columns.
fn rref(rows: &mut [Vec<Rational>]) -> Vec<usize> {
    let height = rows.len();
    let width = if height == 0 { 0 } else { rows[0].len() };
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..width {
        let Some(pivot_row) = (rank..height).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot_row);
        let pivot = rows[rank][col].clone();
        for entry in rows[rank].iter_mut() {
            *entry = &*entry / &pivot;
        }
        for r in 0..height {
            if r != rank && !rows[r][col].is_zero() {
                let factor = rows[r][col].clone();
                for c in 0..width {
                    let delta = &rows[rank][c] * &factor;
                    rows[r][c] = &rows[r][c] - &delta;
                }
            }
        }
        pivots.push(col);
        rank += 1;
        if rank == height {
            break;
        }
    }
    pivots
}

/// Basis of `{ v : row · v = 0 for every row }`, by exact elimination.
fn rational_kernel(rows: &[Vec<Rational>], width: usize) -> Vec<Vec<Rational>> {
    let mut work: Vec<Vec<Rational>> = rows.to_vec();
    let pivots = rref(&mut work);
    let mut basis = Vec::new();
    for free in 0..width {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = vec![Rational::zero(); width];
        v[free] = Rational::one();
        for (row, &col) in pivots.iter().enumerate() {
            v[col] = -work[row][free].clone();
        }
        basis.push(v);
    }
    basis
}

fn determinant(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    let mut work: Vec<Vec<Rational>> = m.to_vec();
    let mut det = Rational::one();
    for col in 0..n {
        let Some(pivot_row) = (col..n).find(|&r| !work[r][col].is_zero()) else {
            return Rational::zero();
        };
        if pivot_row != col {
            work.swap(col, pivot_row);
            det = -det;
        }
        let pivot = work[col][col].clone();
        det *= &pivot;
        for r in (col + 1)..n {
            if work[r][col].is_zero() {
                continue;
            }
            let factor = &work[r][col] / &pivot;
            for c in col..n {
                let delta = &work[col][c] * &factor;
                work[r][c] = &work[r][c] - &delta;
            }
        }
    }
    det
}

/// Sylvester test on a symmetric rational matrix: `Some(1)` if positive
/// definite, `Some(-1)` if negative definite, `None` otherwise.
fn definiteness_sign(m: &[Vec<Rational>]) -> Option<i8> {
    let n = m.len();
    let minor = |size: usize, flip: bool| -> Rational {
        let sub: Vec<Vec<Rational>> = (0..size)
            .map(|i| {
                (0..size)
                    .map(|j| if flip { -m[i][j].clone() } else { m[i][j].clone() })
                    .collect()
            })
            .collect();
        determinant(&sub)
    };
    for (sign, flip) in [(1i8, false), (-1i8, true)] {
        if (1..=n).all(|size| minor(size, flip).is_positive()) {
            return Some(sign);
        }
    }
    None
}

/// Exact square root of a nonnegative rational, when one exists.
fn rational_sqrt(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let sn = r.numer().sqrt();
    let sd = r.denom().sqrt();
    if &(&sn * &sn) == r.numer() && &(&sd * &sd) == r.denom() {
        Some(Rational::new(sn, sd))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Obstruction certificates
// ---------------------------------------------------------------------------

/// A functional annihilating the reachable directions, together with the
/// sign-definite quadratic form it induces on the control amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionWitness {
    /// The annihilating functional, as coordinates on the state space.
    pub functional: Vec<Rational>,
    /// `form[a][b]` with diagonal `functional · W(k,0,ch) / 2` and symmetric
    /// off-diagonal entries `functional · C(2k−1,0,a,b) / 2`.
    pub form: Vec<Vec<Rational>>,
    /// `+1` when the form is positive definite, `-1` when negative definite.
    pub sign: i8,
}

/// Result of the exact obstruction search at a given order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionCertificate {
    pub k: usize,
    pub l_max: usize,
    /// Dimension of the span of all word values at the origin.
    pub span_dimension: usize,
    /// Basis of the functionals vanishing on that span.
    pub annihilator: Vec<Vec<Rational>>,
    /// First annihilating functional whose quadratic form is definite.
    pub witness: Option<ObstructionWitness>,
}

impl ObstructionCertificate {
    pub fn to_json(&self) -> String {
        let rows = |m: &[Vec<Rational>]| -> Vec<Vec<String>> {
            m.iter()
                .map(|row| row.iter().map(Rational::to_string).collect())
                .collect()
        };
        let witness = self.witness.as_ref().map(|w| {
            serde_json::json!({
                "functional": w.functional.iter().map(Rational::to_string).collect::<Vec<_>>(),
                "form": rows(&w.form),
                "sign": w.sign,
            })
        });
        serde_json::json!({
            "k": self.k,
            "l_max": self.l_max,
            "span_dimension": self.span_dimension,
            "annihilator": rows(&self.annihilator),
            "witness": witness,
        })
        .to_string()
    }
}

/// Search for an exact quadratic obstruction at order `k`.
///
/// The reachable directions at the origin are spanned by the values of the
/// words from [`spanning_words`] (drift-bracket depth truncated at `l_max`;
/// on polynomial fields the `M` towers become identically zero once the
/// depth exceeds the polynomial degrees involved, so a finite truncation
/// loses nothing).  Every functional that kills the whole span is a
/// candidate; the certificate keeps the first one whose induced form is
/// definite, in exact arithmetic throughout.
pub fn obstruction_certificate(
    fields: &[PolyVectorField],
    k: usize,
    l_max: usize,
) -> Result<ObstructionCertificate> {
    if k == 0 {
        return Err(Error::InvalidArgument("order k must be >= 1".into()));
    }
    if fields.len() < 2 {
        return Err(Error::InvalidArgument(
            "need a drift field and at least one channel field".into(),
        ));
    }
    let d = fields[0].dimension();
    for (i, f) in fields.iter().enumerate() {
        if f.dimension() != d {
            return Err(Error::InvalidArgument(format!(
                "field {i} lives on R^{}, expected R^{d}",
                f.dimension()
            )));
        }
    }
    if fields[0].value_at_origin().iter().any(|c| !c.is_zero()) {
        return Err(Error::InvalidArgument(
            "the drift field must vanish at the origin".into(),
        ));
    }
    let channels = fields.len() - 1;

    let mut span_rows = Vec::new();
    for word in spanning_words(k, channels, l_max) {
        let value = evaluate_bracket_word(&word, fields)?;
        if value.iter().any(|c| !c.is_zero()) {
            span_rows.push(value);
        }
    }
    let mut rank_probe = span_rows.clone();
    let span_dimension = rref(&mut rank_probe).len();
    let annihilator = rational_kernel(&span_rows, d);

    let dot = |p: &[Rational], v: &[Rational]| -> Rational {
        p.iter().zip(v).map(|(a, b)| a * b).sum()
    };
    let half = rational(1, 2);
    let mut witness = None;
    for functional in &annihilator {
        let mut form = vec![vec![Rational::zero(); channels]; channels];
        for a in 1..=channels {
            let w = evaluate_bracket_word(&BracketWord::W { p: k, l: 0, channel: a }, fields)?;
            form[a - 1][a - 1] = dot(functional, &w) * &half;
            for b in (a + 1)..=channels {
                let c = evaluate_bracket_word(
                    &BracketWord::C { p: 2 * k - 1, l: 0, first: a, second: b },
                    fields,
                )?;
                let entry = dot(functional, &c) * &half;
                form[a - 1][b - 1] = entry.clone();
                form[b - 1][a - 1] = entry;
            }
        }
        if let Some(sign) = definiteness_sign(&form) {
            witness = Some(ObstructionWitness {
                functional: functional.clone(),
                form,
                sign,
            });
            break;
        }
    }

    Ok(ObstructionCertificate {
        k,
        l_max,
        span_dimension,
        annihilator,
        witness,
    })
}

// ---------------------------------------------------------------------------
// The four-state model
// ---------------------------------------------------------------------------

/// The drift and the two channel fields of the model, on `R^4`.
pub fn toy_fields() -> [PolyVectorField; 3] {
    let d = 4;
    let x = |i: usize| Polynomial::variable(d, i);
    // drift: (0, x1, 0, x1^2 + x1 x3 / 2 + 2 x3^2 - x2^2)
    let drift_last = x(0)
        .mul(&x(0))
        .add(&x(0).mul(&x(2)).scale(&rational(1, 2)))
        .add(&x(2).mul(&x(2)).scale(&rat(2)))
        .sub(&x(1).mul(&x(1)));
    let drift = PolyVectorField::new(vec![
        Polynomial::zero(d),
        x(0),
        Polynomial::zero(d),
        drift_last,
    ])
    .expect("drift field is well-formed");
    // channel 1: e1
    let f1 = PolyVectorField::constant_direction(d, 0);
    // channel 2: (0, 0, 1, -2 x3 - x1^2)
    let f2_last = x(2).scale(&rat(-2)).sub(&x(0).mul(&x(0)));
    let f2 = PolyVectorField::new(vec![
        Polynomial::zero(d),
        Polynomial::zero(d),
        Polynomial::constant(d, Rational::one()),
        f2_last,
    ])
    .expect("channel field is well-formed");
    [drift, f1, f2]
}

fn toy_rhs(x: &[f64; 4], u1: f64, u2: f64) -> [f64; 4] {
    [
        u1,
        x[0],
        u2,
        x[0] * x[0] + 0.5 * x[0] * x[2] + 2.0 * x[2] * x[2]
            - 2.0 * u2 * x[2]
            - x[1] * x[1]
            - u2 * x[0] * x[0],
    ]
}

const BLOW_UP_NORM: f64 = 1e6;

fn integrate_toy(
    u: &ControlGrid,
    mut record: impl FnMut(f64, &[f64; 4]),
) -> Result<[f64; 4]> {
    if u.r() != 2 {
        return Err(Error::InvalidArgument(format!(
            "the model has two control channels, the grid carries {}",
            u.r()
        )));
    }
    let n = u.steps();
    if n % 2 != 0 {
        return Err(Error::InvalidArgument(
            "need an even number of grid steps so every RK4 stage lands on a sample".into(),
        ));
    }
    // One RK4 step spans two grid intervals: the stages at t, t + h/2 and
    // t + h all read exact samples, which keeps the scheme fourth order.
    let h = 2.0 * u.dt();
    let mut x = [0.0_f64; 4];
    record(0.0, &x);
    for step in 0..n / 2 {
        let i = 2 * step;
        let (a0, b0) = (u.channel(1)[i], u.channel(2)[i]);
        let (a1, b1) = (u.channel(1)[i + 1], u.channel(2)[i + 1]);
        let (a2, b2) = (u.channel(1)[i + 2], u.channel(2)[i + 2]);
        let k1 = toy_rhs(&x, a0, b0);
        let x2 = std::array::from_fn(|j| x[j] + 0.5 * h * k1[j]);
        let k2 = toy_rhs(&x2, a1, b1);
        let x3 = std::array::from_fn(|j| x[j] + 0.5 * h * k2[j]);
        let k3 = toy_rhs(&x3, a1, b1);
        let x4 = std::array::from_fn(|j| x[j] + h * k3[j]);
        let k4 = toy_rhs(&x4, a2, b2);
        for j in 0..4 {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t = u.time(i + 2);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > BLOW_UP_NORM {
            return Err(Error::BlowUp { step, t, norm });
        }
        record(t, &x);
    }
    Ok(x)
}

/// Integrate the model from the origin; returns the state at the horizon.
///
/// The grid must carry two channels and an even number of steps.
pub fn simulate_toy(u: &ControlGrid) -> Result<[f64; 4]> {
    integrate_toy(u, |_, _| {})
}

/// Full trajectory `(t, x1, x2, x3, x4)` at every RK4 step.
pub fn toy_trajectory(u: &ControlGrid) -> Result<Vec<[f64; 5]>> {
    let mut rows = Vec::with_capacity(u.steps() / 2 + 1);
    integrate_toy(u, |t, x| rows.push([t, x[0], x[1], x[2], x[3]]))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// The model's quadratic form, exactly
// ---------------------------------------------------------------------------

/// Exact comparison of the model's origin form against the coefficients of
/// the integral bound `x4(T) ≥ 3/4·‖U1‖² + 7/4·‖U3‖² + (cross terms)` that
/// a direct expansion of `x4` yields.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyFormCheck {
    /// The form the bracket certificate induces on the two amplitudes.
    pub form: [[Rational; 2]; 2],
    pub form_positive_definite: bool,
    /// Diagonal comparison form from the direct integral expansion.
    pub comparison: [[Rational; 2]; 2],
    /// `form − comparison`.
    pub difference: [[Rational; 2]; 2],
    /// Eigenvalues of the difference, ascending; exact because the
    /// characteristic discriminant is a perfect square here.
    pub difference_eigenvalues: [Rational; 2],
    pub difference_positive_semidefinite: bool,
}

impl ToyFormCheck {
    pub fn to_json(&self) -> String {
        let rows = |m: &[[Rational; 2]; 2]| -> Vec<Vec<String>> {
            m.iter()
                .map(|row| row.iter().map(Rational::to_string).collect())
                .collect()
        };
        serde_json::json!({
            "form": rows(&self.form),
            "form_positive_definite": self.form_positive_definite,
            "comparison": rows(&self.comparison),
            "difference": rows(&self.difference),
            "difference_eigenvalues": self
                .difference_eigenvalues
                .iter()
                .map(Rational::to_string)
                .collect::<Vec<_>>(),
            "difference_positive_semidefinite": self.difference_positive_semidefinite,
        })
        .to_string()
    }
}

/// Build the model's origin form straight from the three certificate words
/// and compare it against the diagonal form of the direct integral bound.
///
/// This path shares no code with [`obstruction_certificate`]'s elimination,
/// so agreement between the two is a genuine cross-check.
pub fn toy_quadratic_form_check() -> Result<ToyFormCheck> {
    let fields = toy_fields();
    // The annihilating functional is the last coordinate.
    let functional: Vec<Rational> = vec![Rational::zero(), Rational::zero(), Rational::zero(), Rational::one()];
    let dot = |v: &[Rational]| -> Rational {
        functional.iter().zip(v).map(|(a, b)| a * b).sum()
    };
    let half = rational(1, 2);
    let w1 = evaluate_bracket_word(&BracketWord::W { p: 1, l: 0, channel: 1 }, &fields)?;
    let w2 = evaluate_bracket_word(&BracketWord::W { p: 1, l: 0, channel: 2 }, &fields)?;
    let c12 = evaluate_bracket_word(&BracketWord::C { p: 1, l: 0, first: 1, second: 2 }, &fields)?;
    let off = dot(&c12) * &half;
    let form = [
        [dot(&w1) * &half, off.clone()],
        [off, dot(&w2) * &half],
    ];

    let comparison = [
        [rational(3, 4), Rational::zero()],
        [Rational::zero(), rational(7, 4)],
    ];
    let difference = std::array::from_fn(|i| {
        std::array::from_fn(|j| &form[i][j] - &comparison[i][j])
    });

    let as_rows = |m: &[[Rational; 2]; 2]| -> Vec<Vec<Rational>> {
        m.iter().map(|row| row.to_vec()).collect()
    };
    let form_positive_definite = definiteness_sign(&as_rows(&form)) == Some(1);

    let trace = &difference[0][0] + &difference[1][1];
    let det = &difference[0][0] * &difference[1][1] - &difference[0][1] * &difference[1][0];
    let discriminant = &trace * &trace - rat(4) * &det;
    let root = rational_sqrt(&discriminant).ok_or_else(|| {
        Error::InvalidArgument(
            "the difference form's characteristic discriminant is not a rational square".into(),
        )
    })?;
    let low = (&trace - &root) * &half;
    let high = (&trace + &root) * &half;
    let difference_positive_semidefinite = !low.is_negative();

    Ok(ToyFormCheck {
        form,
        form_positive_definite,
        comparison,
        difference,
        difference_eigenvalues: [low, high],
        difference_positive_semidefinite,
    })
}

// ---------------------------------------------------------------------------
// Numerical probes of the unreachable set
// ---------------------------------------------------------------------------

/// Outcome of a randomized sweep testing the drift bound along trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDriftScan {
    pub samples: usize,
    pub seed: u64,
    /// Coefficient `C` in the tested bound `x4(T) ≥ C·‖U1‖² − x3(T)²`,
    /// where `U1` is the first primitive of the first control channel.
    pub coefficient: f64,
    /// Samples violating the bound beyond discretization noise.
    pub violations: usize,
    /// Smallest observed `x4(T) + x3(T)² − C·‖U1‖²` (nonnegative ⇔ bound holds).
    pub worst_margin: f64,
    /// Smallest observed `x4(T) + x3(T)²` (nonnegative ⇔ the set
    /// `{x4 + x3² < 0}` was never reached).
    pub worst_forbidden: f64,
}

impl ToyDriftScan {
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "samples": self.samples,
            "seed": self.seed,
            "coefficient": self.coefficient,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "worst_forbidden": self.worst_forbidden,
        })
        .to_string()
    }
}

/// Drive the model with `samples` random smooth control pairs of sup norm
/// at most `amplitude` on `[0, t_final]` and test the drift bound with
/// coefficient `coefficient` on every trajectory.
pub fn toy_drift_scan(
    samples: usize,
    t_final: f64,
    amplitude: f64,
    steps: usize,
    seed: u64,
    coefficient: f64,
) -> Result<ToyDriftScan> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    let mut worst_forbidden = f64::INFINITY;
    for s in 0..samples {
        let spec = ControlSpec {
            t_final,
            steps: Some(steps),
            channels: vec![
                ControlLaw::RandomFourier {
                    modes: 3,
                    amplitude,
                    seed: seed.wrapping_mul(2).wrapping_add(2 * s as u64),
                },
                ControlLaw::RandomFourier {
                    modes: 3,
                    amplitude,
                    seed: seed.wrapping_mul(2).wrapping_add(2 * s as u64 + 1),
                },
            ],
        };
        let grid = spec.sample(steps)?;
        let x = simulate_toy(&grid)?;
        let primitives = signals::iterated_primitives(&grid, 1)?;
        let u1_norm = signals::l2_norm(primitives.primitive(1, 1), t_final);
        let forbidden = x[3] + x[2] * x[2];
        let margin = forbidden - coefficient * u1_norm * u1_norm;
        if margin < -1e-12 {
            violations += 1;
        }
        worst_margin = worst_margin.min(margin);
        worst_forbidden = worst_forbidden.min(forbidden);
    }
    Ok(ToyDriftScan {
        samples,
        seed,
        coefficient,
        violations,
        worst_margin,
        worst_forbidden,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn e(d: usize, i: usize) -> Vec<Rational> {
        let mut v = vec![Rational::zero(); d];
        v[i] = Rational::one();
        v
    }

    fn zero_vec(d: usize) -> Vec<Rational> {
        vec![Rational::zero(); d]
    }

    #[test]
    fn polynomial_algebra_is_exact() {
        let x = Polynomial::variable(2, 0);
        let y = Polynomial::variable(2, 1);
        let sum = x.add(&y);
        let diff = x.sub(&y);
        let expected = x.mul(&x).sub(&y.mul(&y));
        assert_eq!(sum.mul(&diff), expected);
        // d/dx (x^2 y) = 2 x y
        let xxy = x.mul(&x).mul(&y);
        assert_eq!(xxy.partial(0), x.mul(&y).scale(&rat(2)));
        assert!(xxy.partial(0).partial(1).partial(0).constant_term() == rat(2));
        assert!(Polynomial::zero(2).is_zero());
        assert!(sum.sub(&sum).is_zero());
    }

    #[test]
    fn bracket_of_a_field_with_itself_vanishes() {
        let [drift, f1, f2] = toy_fields();
        for f in [&drift, &f1, &f2] {
            assert!(lie_bracket(f, f).unwrap().is_zero());
        }
    }

    #[test]
    fn bracket_of_constant_fields_vanishes() {
        let a = PolyVectorField::constant_direction(3, 0);
        let b = PolyVectorField::constant_direction(3, 2);
        assert!(lie_bracket(&a, &b).unwrap().is_zero());
    }

    #[test]
    fn bracket_rejects_mismatched_dimensions() {
        let a = PolyVectorField::constant_direction(2, 0);
        let b = PolyVectorField::constant_direction(3, 0);
        assert!(matches!(
            lie_bracket(&a, &b),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn channel_fields_commute_at_the_origin_but_not_identically() {
        let fields = toy_fields();
        let bracket = lie_bracket(&fields[1], &fields[2]).unwrap();
        assert!(!bracket.is_zero());
        assert_eq!(bracket.value_at_origin(), zero_vec(4));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn jacobi_identity_holds_exactly(raw in proptest::collection::vec((0u32..3, 0u32..3, -3i64..=3), 3 * 2 * 2)) {
            // Three fields on R^2, two terms per component, small exponents.
            let mut fields = Vec::new();
            for chunk in raw.chunks(4) {
                let mut components = Vec::new();
                for pair in chunk.chunks(2) {
                    let mut p = Polynomial::zero(2);
                    for &(ex, ey, c) in pair {
                        p = p.add(&Polynomial::monomial(&[ex, ey], rat(c)));
                    }
                    components.push(p);
                }
                fields.push(PolyVectorField::new(components).unwrap());
            }
            let (f, g, h) = (&fields[0], &fields[1], &fields[2]);
            let term = |a: &PolyVectorField, b: &PolyVectorField, c: &PolyVectorField| {
                lie_bracket(a, &lie_bracket(b, c).unwrap()).unwrap()
            };
            let mut total = PolyVectorField::zero(2);
            for t in [term(f, g, h), term(g, h, f), term(h, f, g)] {
                total = PolyVectorField::new(
                    (0..2).map(|i| total.component(i).add(t.component(i))).collect(),
                ).unwrap();
            }
            prop_assert!(total.is_zero());
        }
    }

    #[test]
    fn word_parser_roundtrips_and_rejects_garbage() {
        for text in ["M(3,1)", "W(1,0,2)", "C(1,0,1,2)"] {
            let word = parse_bracket_word(text).unwrap();
            assert_eq!(word.to_string(), text);
        }
        assert_eq!(
            parse_bracket_word(" M( 2 , 1 ) ").unwrap(),
            BracketWord::M { l: 2, channel: 1 }
        );
        for text in [
            "W(0,1,1)",   // W needs p >= 1
            "C(1,0,2,1)", // channels out of order
            "C(1,0,1,1)", // equal channels
            "M(1,0)",     // channels are 1-based
            "M(1)",       // wrong arity
            "C(1,0,1)",   // wrong arity
            "Q(1,2)",     // unknown letter
            "M(1,2",      // missing paren
            "M(a,1)",     // not a number
        ] {
            assert!(
                matches!(parse_bracket_word(text), Err(Error::Parse(_))),
                "'{text}' should fail to parse"
            );
        }
    }

    #[test]
    fn generator_towers_terminate_on_the_model() {
        let fields = toy_fields();
        let value = |text: &str| {
            evaluate_bracket_word(&parse_bracket_word(text).unwrap(), &fields).unwrap()
        };
        assert_eq!(value("M(0,1)"), e(4, 0));
        assert_eq!(value("M(1,1)"), e(4, 1));
        assert_eq!(value("M(2,1)"), zero_vec(4));
        assert_eq!(value("M(0,2)"), e(4, 2));
        assert_eq!(value("M(1,2)"), zero_vec(4));
        // Depth 4 is already the zero field, so deeper towers stay zero.
        assert!(bracket_word_field(&BracketWord::M { l: 4, channel: 1 }, &fields)
            .unwrap()
            .is_zero());
    }

    #[test]
    fn certificate_words_take_their_closed_form_values() {
        let fields = toy_fields();
        let value = |word: BracketWord| evaluate_bracket_word(&word, &fields).unwrap();

        let mut two_e4 = zero_vec(4);
        two_e4[3] = rat(2);
        assert_eq!(value(BracketWord::W { p: 1, l: 0, channel: 1 }), two_e4);

        let mut four_e4 = zero_vec(4);
        four_e4[3] = rat(4);
        assert_eq!(value(BracketWord::W { p: 1, l: 0, channel: 2 }), four_e4);

        let mut half_e4 = zero_vec(4);
        half_e4[3] = rational(1, 2);
        assert_eq!(
            value(BracketWord::C { p: 1, l: 0, first: 1, second: 2 }),
            half_e4
        );

        for l in 0..=4 {
            assert_eq!(
                value(BracketWord::C { p: 0, l, first: 1, second: 2 }),
                zero_vec(4),
                "C(0,{l},1,2) should vanish at the origin"
            );
        }
    }

    #[test]
    fn origin_form_matches_the_hand_computation() {
        let check = toy_quadratic_form_check().unwrap();
        assert_eq!(check.form[0][0], rat(1));
        assert_eq!(check.form[0][1], rational(1, 4));
        assert_eq!(check.form[1][0], rational(1, 4));
        assert_eq!(check.form[1][1], rat(2));
        assert!(check.form_positive_definite);
        for row in &check.difference {
            for entry in row {
                assert_eq!(*entry, rational(1, 4));
            }
        }
        assert_eq!(check.difference_eigenvalues[0], rat(0));
        assert_eq!(check.difference_eigenvalues[1], rational(1, 2));
        assert!(check.difference_positive_semidefinite);
    }

    #[test]
    fn obstruction_certificate_recovers_the_annihilator() {
        let fields = toy_fields();
        let cert = obstruction_certificate(&fields, 1, 4).unwrap();
        assert_eq!(cert.span_dimension, 3);
        assert_eq!(cert.annihilator, vec![e(4, 3)]);
        let witness = cert.witness.expect("the model carries a definite form");
        assert_eq!(witness.functional, e(4, 3));
        assert_eq!(witness.sign, 1);
        let direct = toy_quadratic_form_check().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(witness.form[i][j], direct.form[i][j]);
            }
        }
    }

    #[test]
    fn spanning_words_enumerate_the_expected_grammar() {
        let words = spanning_words(1, 2, 4);
        // 2 channels x 5 depths of M, no W at k = 1, one C pair with p = 0.
        assert_eq!(words.len(), 2 * 5 + 5);
        assert!(words.iter().all(|w| w.validate_shape().is_ok()));
        let words2 = spanning_words(2, 2, 4);
        // adds W(1,l,ch) for both channels and C(p,l,1,2) for p = 1, 2.
        assert_eq!(words2.len(), words.len() + 2 * 5 + 2 * 5);
    }

    fn grid_from_laws(laws: Vec<ControlLaw>, t_final: f64, steps: usize) -> ControlGrid {
        ControlSpec {
            t_final,
            steps: Some(steps),
            channels: laws,
        }
        .sample(steps)
        .unwrap()
    }

    #[test]
    fn zero_control_stays_at_the_origin() {
        let grid = ControlGrid::zero(1.0, 2, 64).unwrap();
        let x = simulate_toy(&grid).unwrap();
        assert_eq!(x, [0.0; 4]);
    }

    #[test]
    fn linear_chain_integrates_exactly() {
        let t_final = 0.5;
        let grid = grid_from_laws(
            vec![
                ControlLaw::Constant { level: 1.0 },
                ControlLaw::Constant { level: 0.0 },
            ],
            t_final,
            64,
        );
        let x = simulate_toy(&grid).unwrap();
        assert_abs_diff_eq!(x[0], t_final, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], t_final * t_final / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn third_state_is_the_second_channel_primitive() {
        let t_final = 0.3;
        let omega = 2.0 * std::f64::consts::PI;
        let grid = grid_from_laws(
            vec![
                ControlLaw::Constant { level: 0.0 },
                ControlLaw::Sinusoid { amplitude: 1.0, omega, phase: 0.0 },
            ],
            t_final,
            2000,
        );
        let x = simulate_toy(&grid).unwrap();
        assert_abs_diff_eq!(x[2], (omega * t_final).sin() / omega, epsilon = 1e-10);
    }

    #[test]
    fn rk4_error_contracts_sixteen_fold() {
        let t_final = 1.0;
        let laws = vec![
            ControlLaw::Sinusoid { amplitude: 1.0, omega: 5.0, phase: 0.3 },
            ControlLaw::Sinusoid { amplitude: 0.8, omega: 3.0, phase: 1.1 },
        ];
        let run = |steps: usize| simulate_toy(&grid_from_laws(laws.clone(), t_final, steps)).unwrap();
        let reference = run(12800);
        let error = |steps: usize| {
            let x = run(steps);
            x.iter()
                .zip(reference.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max)
        };
        let (e200, e400, e800) = (error(200), error(400), error(800));
        assert!(e800 > 1e-14, "error {e800} too close to noise to measure order");
        let r1 = e200 / e400;
        let r2 = e400 / e800;
        assert!((10.0..30.0).contains(&r1), "first halving contracted by {r1}");
        assert!((10.0..30.0).contains(&r2), "second halving contracted by {r2}");
    }

    #[test]
    fn odd_step_grids_are_rejected() {
        let grid = ControlGrid::zero(1.0, 2, 63).unwrap();
        assert!(matches!(
            simulate_toy(&grid),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn blow_up_is_reported_not_propagated() {
        let grid = grid_from_laws(
            vec![
                ControlLaw::Constant { level: 1.0e4 },
                ControlLaw::Constant { level: 0.0 },
            ],
            1.0,
            100,
        );
        match simulate_toy(&grid) {
            Err(Error::BlowUp { t, norm, .. }) => {
                assert!(t < 1.0);
                assert!(norm > BLOW_UP_NORM);
            }
            other => panic!("expected a blow-up report, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_endpoints_match_the_plain_run() {
        let grid = grid_from_laws(
            vec![
                ControlLaw::Sinusoid { amplitude: 0.5, omega: 4.0, phase: 0.0 },
                ControlLaw::Constant { level: 0.2 },
            ],
            0.7,
            128,
        );
        let x = simulate_toy(&grid).unwrap();
        let rows = toy_trajectory(&grid).unwrap();
        assert_eq!(rows.len(), 65);
        assert_eq!(rows[0], [0.0; 5]);
        let last = rows.last().unwrap();
        assert_abs_diff_eq!(last[0], 0.7, epsilon = 1e-12);
        for j in 0..4 {
            assert_eq!(last[j + 1], x[j]);
        }
    }

    #[test]
    fn drift_scan_sees_no_forbidden_states() {
        let scan = toy_drift_scan(40, 0.05, 0.05, 400, 11, 0.5).unwrap();
        assert_eq!(scan.violations, 0, "worst margin {}", scan.worst_margin);
        assert!(scan.worst_forbidden >= -1e-12);
        assert!(scan.worst_margin >= -1e-12);
    }
}
