//! Truncated multivariate power series over `ℚ(i)`.
//!
//! A [`Jet`] stores the Taylor coefficients of a germ at the origin up to a
//! degree cap. Coefficients above the cap are unknown; every operation
//! propagates the cap so that the stored coefficients are always exact.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::matrix;
use crate::scalars::{rat_int, GaussianRational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Holomorphic,
    Antiholomorphic,
    Real,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// Index of the conjugate variable (itself for real variables).
    pub conj: usize,
}

/// One real coordinate direction of a context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RealCoord {
    /// `Re` of the holomorphic variable with this index.
    Re(usize),
    /// `Im` of the holomorphic variable with this index.
    Im(usize),
    Real(usize),
}

#[derive(Debug, PartialEq, Eq)]
pub struct VariableContext {
    vars: Vec<Variable>,
}

pub type Ctx = Arc<VariableContext>;

#[derive(Default)]
pub struct ContextBuilder {
    vars: Vec<Variable>,
}

impl ContextBuilder {
    /// Adds the holomorphic names of `pairs` in order, then their conjugates.
    pub fn complex(mut self, pairs: &[(&str, &str)]) -> Self {
        let base = self.vars.len();
        let k = pairs.len();
        for (j, (h, _)) in pairs.iter().enumerate() {
            self.vars.push(Variable {
                name: (*h).to_string(),
                kind: VarKind::Holomorphic,
                conj: base + k + j,
            });
        }
        for (j, (_, a)) in pairs.iter().enumerate() {
            self.vars.push(Variable {
                name: (*a).to_string(),
                kind: VarKind::Antiholomorphic,
                conj: base + j,
            });
        }
        self
    }

    pub fn real(mut self, name: &str) -> Self {
        let idx = self.vars.len();
        self.vars.push(Variable {
            name: name.to_string(),
            kind: VarKind::Real,
            conj: idx,
        });
        self
    }

    pub fn build(self) -> Ctx {
        Arc::new(VariableContext { vars: self.vars })
    }
}

impl VariableContext {
    pub fn builder() -> ContextBuilder {
        ContextBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn var(&self, i: usize) -> &Variable {
        &self.vars[i]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vars[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn conj(&self, i: usize) -> usize {
        self.vars[i].conj
    }

    pub fn kind(&self, i: usize) -> VarKind {
        self.vars[i].kind
    }

    /// Real coordinates: `(Re, Im)` of each holomorphic variable in order,
    /// followed by the real variables.
    pub fn real_coords(&self) -> Vec<RealCoord> {
        let mut out = Vec::with_capacity(self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Holomorphic {
                out.push(RealCoord::Re(i));
                out.push(RealCoord::Im(i));
            }
        }
        for (i, v) in self.vars.iter().enumerate() {
            if v.kind == VarKind::Real {
                out.push(RealCoord::Real(i));
            }
        }
        out
    }

    /// Complex value of every variable at a real point given in
    /// [`real_coords`](Self::real_coords) order.
    pub fn complex_point(&self, x: &[f64]) -> Vec<Complex64> {
        let coords = self.real_coords();
        assert_eq!(coords.len(), x.len(), "point has wrong dimension");
        let mut p = vec![Complex64::new(0.0, 0.0); self.vars.len()];
        for (c, &v) in coords.iter().zip(x) {
            match *c {
                RealCoord::Re(h) => {
                    p[h].re += v;
                }
                RealCoord::Im(h) => {
                    p[h].im += v;
                }
                RealCoord::Real(r) => p[r] = Complex64::new(v, 0.0),
            }
        }
        for (i, var) in self.vars.iter().enumerate() {
            if var.kind == VarKind::Antiholomorphic {
                p[i] = p[var.conj].conj();
            }
        }
        p
    }

    pub fn check_involution(&self) -> bool {
        self.vars.iter().enumerate().all(|(i, v)| {
            let c = &self.vars[v.conj];
            c.conj == i
                && match v.kind {
                    VarKind::Real => v.conj == i,
                    VarKind::Holomorphic => c.kind == VarKind::Antiholomorphic,
                    VarKind::Antiholomorphic => c.kind == VarKind::Holomorphic,
                }
        })
    }
}

pub fn same_context(a: &Ctx, b: &Ctx) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Exponent vector, ordered by total degree and then lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MultiIndex(SmallVec<[u16; 12]>);

impl MultiIndex {
    pub fn zeros(n: usize) -> Self {
        Self(SmallVec::from_elem(0, n))
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut m = Self::zeros(n);
        m.0[i] = 1;
        m
    }

    pub fn from_slice(e: &[u16]) -> Self {
        Self(SmallVec::from_slice(e))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u16 {
        self.0[i]
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| u32::from(e)).sum()
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn checked_minus(&self, other: &Self) -> Option<Self> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<SmallVec<_>>>()
            .map(Self)
    }

    fn with(&self, i: usize, e: u16) -> Self {
        let mut m = self.clone();
        m.0[i] = e;
        m
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Truncated power series. `cap` is the highest degree whose coefficients
/// are known; `cap = -1` means nothing is known.
#[derive(Clone)]
pub struct Jet {
    ctx: Ctx,
    cap: i32,
    terms: BTreeMap<MultiIndex, GaussianRational>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.cap == other.cap && self.terms == other.terms && same_context(&self.ctx, &other.ctx)
    }
}

impl Jet {
    pub fn zero(ctx: &Ctx, cap: i32) -> Self {
        Self {
            ctx: ctx.clone(),
            cap,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(ctx: &Ctx, cap: i32, c: GaussianRational) -> Self {
        Self::monomial(ctx, cap, &vec![0; ctx.len()], c)
    }

    pub fn one(ctx: &Ctx, cap: i32) -> Self {
        Self::constant(ctx, cap, GaussianRational::one())
    }

    pub fn var(ctx: &Ctx, cap: i32, i: usize) -> Self {
        Self::monomial(ctx, cap, MultiIndex::unit(ctx.len(), i).exponents(), GaussianRational::one())
    }

    pub fn var_named(ctx: &Ctx, cap: i32, name: &str) -> Self {
        let i = ctx.index_of(name).unwrap_or_else(|| panic!("unknown variable `{name}`"));
        Self::var(ctx, cap, i)
    }

    pub fn monomial(ctx: &Ctx, cap: i32, exps: &[u16], c: GaussianRational) -> Self {
        Self::from_terms(ctx, cap, [(MultiIndex::from_slice(exps), c)])
    }

    /// Builds a jet, summing repeated monomials and dropping those above `cap`.
    pub fn from_terms<I>(ctx: &Ctx, cap: i32, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, GaussianRational)>,
    {
        let mut j = Self::zero(ctx, cap);
        for (m, c) in terms {
            assert_eq!(m.len(), ctx.len(), "multi-index length differs from context");
            j.add_term(m, &c);
        }
        j
    }

    fn add_term(&mut self, m: MultiIndex, c: &GaussianRational) {
        if c.is_zero() || m.degree() as i32 > self.cap {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn context(&self) -> &Ctx {
        &self.ctx
    }

    pub fn cap(&self) -> i32 {
        self.cap
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &GaussianRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &MultiIndex) -> GaussianRational {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn coeff_of(&self, exps: &[u16]) -> GaussianRational {
        self.coeff(&MultiIndex::from_slice(exps))
    }

    pub fn constant_term(&self) -> GaussianRational {
        self.coeff(&MultiIndex::zeros(self.ctx.len()))
    }

    /// Lower bound for the order of vanishing.
    pub fn valuation(&self) -> i32 {
        self.terms
            .keys()
            .next()
            .map_or(self.cap + 1, |m| m.degree() as i32)
    }

    /// Highest degree carrying a nonzero coefficient, if any.
    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(MultiIndex::degree)
    }

    pub fn truncate(&self, cap: i32) -> Self {
        let cap = cap.min(self.cap);
        Self {
            ctx: self.ctx.clone(),
            cap,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() as i32 <= cap)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Same coefficients with a lowered (never raised) cap. Raising is
    /// only sound for polynomials known to be exact; see [`assume_exact_to`](Self::assume_exact_to).
    pub fn with_cap(&self, cap: i32) -> Self {
        self.truncate(cap)
    }

    /// Declares that the stored coefficients are exact through `cap`.
    /// Used for polynomial literals whose higher coefficients vanish.
    pub fn assume_exact_to(&self, cap: i32) -> Self {
        let mut j = self.clone();
        j.cap = cap;
        j.terms.retain(|m, _| m.degree() as i32 <= cap);
        j
    }

    pub fn homogeneous_part(&self, d: u32) -> Self {
        Self {
            ctx: self.ctx.clone(),
            cap: self.cap,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == d)
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, k: &GaussianRational) -> Self {
        if k.is_zero() {
            return Self::zero(&self.ctx, self.cap);
        }
        Self {
            ctx: self.ctx.clone(),
            cap: self.cap,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn scale_int(&self, k: i64) -> Self {
        self.scale(&GaussianRational::from_ints(k, 0))
    }

    fn check_ctx(&self, other: &Self) -> Result<()> {
        if same_context(&self.ctx, &other.ctx) {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_ctx(other)?;
        let mut out = self.truncate(self.cap.min(other.cap));
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&-other)
    }

    /// Cap of a product: known coefficients of one factor meet the known
    /// low-order vanishing of the other.
    fn product_cap(&self, other: &Self) -> i32 {
        let (ca, cb) = (self.cap, other.cap);
        let (va, vb) = (self.valuation(), other.valuation());
        (ca + vb).min(cb + va).min(ca.max(cb))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_ctx(other)?;
        let cap = self.product_cap(other);
        Ok(self.mul_to(other, cap))
    }

    /// Product with all terms above `cap` discarded. `cap` must not exceed
    /// the sound product cap.
    fn mul_to(&self, other: &Self, cap: i32) -> Self {
        let mut acc: HashMap<MultiIndex, GaussianRational> = HashMap::new();
        for (ma, ca) in &self.terms {
            let da = ma.degree() as i32;
            if da + other.valuation() > cap {
                break;
            }
            for (mb, cb) in &other.terms {
                if da + mb.degree() as i32 > cap {
                    break;
                }
                let p = ca * cb;
                let m = ma.plus(mb);
                match acc.get_mut(&m) {
                    Some(v) => *v += &p,
                    None => {
                        acc.insert(m, p);
                    }
                }
            }
        }
        Self {
            ctx: self.ctx.clone(),
            cap,
            terms: acc.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::one(&self.ctx, self.cap);
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    pub fn partial(&self, i: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.get(i);
            if e > 0 {
                terms.insert(m.with(i, e - 1), c.scale(&rat_int(i64::from(e))));
            }
        }
        Self {
            ctx: self.ctx.clone(),
            cap: self.cap - 1,
            terms,
        }
    }

    pub fn derive(&self, alpha: &MultiIndex) -> Self {
        let mut out = self.clone();
        for (i, &e) in alpha.exponents().iter().enumerate() {
            for _ in 0..e {
                out = out.partial(i);
            }
        }
        out
    }

    /// Derivative along a real coordinate: `∂_{Re z} = ∂_z + ∂_z̄`,
    /// `∂_{Im z} = i(∂_z − ∂_z̄)`.
    pub fn real_partial(&self, coord: RealCoord) -> Self {
        match coord {
            RealCoord::Real(r) => self.partial(r),
            RealCoord::Re(h) => &self.partial(h) + &self.partial(self.ctx.conj(h)),
            RealCoord::Im(h) => {
                (&self.partial(h) - &self.partial(self.ctx.conj(h))).scale(&GaussianRational::i())
            }
        }
    }

    /// Value at 0 of a mixed real derivative, given as a list of coordinates.
    pub fn real_derivative_at_zero(&self, coords: &[RealCoord]) -> GaussianRational {
        let mut j = self.clone();
        for &c in coords {
            j = j.real_partial(c);
        }
        debug_assert!(j.cap >= 0, "derivative exceeds the known order");
        j.constant_term()
    }

    /// Coefficient-wise conjugation composed with the variable involution.
    pub fn conj(&self) -> Self {
        let n = self.ctx.len();
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut e: SmallVec<[u16; 12]> = SmallVec::from_elem(0, n);
                for i in 0..n {
                    e[self.ctx.conj(i)] = m.get(i);
                }
                (MultiIndex(e), c.conj())
            })
            .collect();
        Self {
            ctx: self.ctx.clone(),
            cap: self.cap,
            terms,
        }
    }

    pub fn is_real(&self) -> bool {
        self.conj().terms == self.terms
    }

    pub fn real_part(&self) -> Self {
        (self + &self.conj()).scale(&GaussianRational::from_ratio(1, 2))
    }

    pub fn imag_part(&self) -> Self {
        (self - &self.conj()).scale(&GaussianRational::new(rat_int(0), crate::scalars::rat(-1, 2)))
    }

    /// Whether `self − other` vanishes through the smaller cap.
    pub fn agrees_with(&self, other: &Self) -> bool {
        self.try_sub(other).map(|d| d.is_zero()).unwrap_or(false)
    }

    /// Lowest degree at which `self` and `other` differ, or `None` when they
    /// agree through the common cap.
    pub fn first_difference(&self, other: &Self) -> Option<u32> {
        self.try_sub(other).ok().and_then(|d| d.terms.keys().next().map(MultiIndex::degree))
    }

    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = c.to_complex();
                for (i, &e) in m.exponents().iter().enumerate() {
                    if e > 0 {
                        v *= point[i].powu(u32::from(e));
                    }
                }
                v
            })
            .sum()
    }

    pub fn substitute(&self, sub: &Substitution) -> Result<Self> {
        sub.apply(self)
    }

    /// Multiplicative inverse, by the geometric series in the non-constant part.
    pub fn reciprocal(&self) -> Result<Self> {
        let c0 = self.constant_term();
        if c0.is_zero() {
            return Err(Error::NonInvertible);
        }
        let inv0 = c0.inv()?;
        let u = (self - &Self::constant(&self.ctx, self.cap, c0)).scale(&-&inv0);
        let mut out = Self::one(&self.ctx, self.cap);
        let mut p = Self::one(&self.ctx, self.cap);
        for _ in 0..=self.cap.max(0) {
            p = &p * &u;
            if p.is_zero() {
                break;
            }
            out = &out + &p;
        }
        Ok(out.scale(&inv0))
    }

    /// Solves `r(…, y, …) = 0` for the variable `var` as a jet in the other
    /// variables, by the fixed-point iteration `y ← y − r(y)/∂_y r(0)`.
    pub fn implicit_solve(&self, var: usize) -> Result<Self> {
        let ctx = &self.ctx;
        if ctx.kind(var) != VarKind::Real {
            return Err(Error::assertion(
                "implicit_solve",
                format!("`{}` is not a real variable", ctx.name(var)),
            ));
        }
        if !self.constant_term().is_zero() {
            return Err(Error::BasePoint {
                var: ctx.name(var).to_string(),
            });
        }
        let a = self.coeff(&MultiIndex::unit(ctx.len(), var));
        if a.is_zero() {
            return Err(Error::NonGraph {
                var: ctx.name(var).to_string(),
            });
        }
        let inv_a = a.inv()?;
        let mut y = Self::zero(ctx, self.cap);
        // each pass fixes at least one more degree
        for _ in 0..=self.cap + 1 {
            let sub = Substitution::identity(ctx).set(var, y.clone());
            let res = self.substitute(&sub)?;
            let next = &y - &res.scale(&inv_a);
            let next = next.truncate(self.cap);
            if next.terms == y.terms {
                return Ok(next);
            }
            y = next;
        }
        Err(Error::assertion("implicit_solve", "iteration did not stabilise"))
    }

    /// Malgrange division: `φ = f·(−v + g)` with `g` free of `v`, `f(0) = 1`.
    pub fn weierstrass_divide(&self, var: usize) -> Result<(Self, Self)> {
        let ctx = &self.ctx;
        if !self.constant_term().is_zero() {
            return Err(Error::PreparationFailure("φ(0) ≠ 0".into()));
        }
        let a = self.coeff(&MultiIndex::unit(ctx.len(), var));
        if a.is_zero() {
            return Err(Error::PreparationFailure(format!(
                "∂φ/∂{} vanishes at 0",
                ctx.name(var)
            )));
        }
        if a != GaussianRational::from_ints(-1, 0) {
            return Err(Error::PreparationFailure(format!(
                "∂φ/∂{} (0) = {a}, expected −1",
                ctx.name(var)
            )));
        }
        let g = self.implicit_solve(var)?;
        let v = Self::var(ctx, self.cap, var);
        // ψ(v) = φ(v + g) vanishes at v = 0, so ψ = v·q
        let psi = self.substitute(&Substitution::identity(ctx).set(var, &v + &g))?;
        let mut q = Self::zero(ctx, psi.cap - 1);
        for (m, c) in &psi.terms {
            let e = m.get(var);
            if e == 0 {
                return Err(Error::PreparationFailure(format!(
                    "residual {c} on a {}-free monomial",
                    ctx.name(var)
                )));
            }
            q.add_term(m.with(var, e - 1), c);
        }
        let f = -&q.substitute(&Substitution::identity(ctx).set(var, &v - &g))?;
        debug_assert!(f.constant_term().is_one());
        Ok((f, g))
    }

    /// Random jet with small integer-ratio coefficients, used by property tests.
    pub fn random<R: Rng + ?Sized>(
        ctx: &Ctx,
        cap: i32,
        min_degree: u32,
        terms: usize,
        rng: &mut R,
    ) -> Self {
        let n = ctx.len();
        let mut out = Self::zero(ctx, cap);
        if cap < min_degree as i32 {
            return out;
        }
        for _ in 0..terms {
            let d = rng.gen_range(min_degree..=cap as u32);
            let mut e = vec![0u16; n];
            for _ in 0..d {
                e[rng.gen_range(0..n)] += 1;
            }
            let c = GaussianRational::new(
                crate::scalars::rat(rng.gen_range(-9..=9), rng.gen_range(1..=9)),
                crate::scalars::rat(rng.gen_range(-9..=9), rng.gen_range(1..=9)),
            );
            out.add_term(MultiIndex::from_slice(&e), &c);
        }
        out
    }

    pub fn to_literal(&self) -> JetLiteral {
        JetLiteral {
            variables: self.ctx.vars.iter().map(|v| v.name.clone()).collect(),
            degree_cap: self.cap,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| JetTerm {
                    exponents: m.exponents().to_vec(),
                    coeff: c.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a jet from a literal whose variable list matches `ctx`.
    pub fn from_literal(ctx: &Ctx, lit: &JetLiteral) -> Result<Self> {
        let names: Vec<&str> = ctx.vars.iter().map(|v| v.name.as_str()).collect();
        if lit.variables.iter().map(String::as_str).ne(names.iter().copied()) {
            return Err(Error::ContextMismatch);
        }
        if lit.terms.iter().any(|t| t.exponents.len() != ctx.len()) {
            return Err(Error::ContextMismatch);
        }
        Ok(Self::from_terms(
            ctx,
            lit.degree_cap,
            lit.terms
                .iter()
                .map(|t| (MultiIndex::from_slice(&t.exponents), t.coeff.clone())),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetTerm {
    pub exponents: Vec<u16>,
    pub coeff: GaussianRational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetLiteral {
    pub variables: Vec<String>,
    pub degree_cap: i32,
    pub terms: Vec<JetTerm>,
}

/// Floating copy of a jet's coefficients for repeated evaluation.
#[derive(Clone, Debug)]
pub struct NumericPoly {
    terms: Vec<(Vec<u16>, Complex64)>,
}

impl NumericPoly {
    pub fn eval(&self, point: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(point)
                    .filter(|(k, _)| **k > 0)
                    .fold(*c, |acc, (k, z)| acc * z.powu(u32::from(*k)))
            })
            .sum()
    }
}

impl From<&Jet> for NumericPoly {
    fn from(j: &Jet) -> Self {
        Self {
            terms: j.terms.iter().map(|(m, c)| (m.exponents().to_vec(), c.to_complex())).collect(),
        }
    }
}

impl fmt::Display for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for (i, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "·{}", self.ctx.name(i))?,
                    _ => write!(f, "·{}^{e}", self.ctx.name(i))?,
                }
            }
        }
        write!(f, " + O({})", self.cap + 1)
    }
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.try_add(rhs).expect("jet context mismatch")
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.try_sub(rhs).expect("jet context mismatch")
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.try_mul(rhs).expect("jet context mismatch")
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            ctx: self.ctx.clone(),
            cap: self.cap,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

#[derive(Clone, Debug)]
enum Image {
    Zero,
    /// Exact renaming to a target variable.
    Var(usize),
    Series { jet: Jet, shifted: bool },
}

/// A map from the variables of a source context to jets in a target
/// context. Variables left unmapped are sent to zero.
#[derive(Clone, Debug)]
pub struct Substitution {
    source: Ctx,
    target: Ctx,
    images: Vec<Image>,
}

impl Substitution {
    pub fn new(source: &Ctx, target: &Ctx) -> Self {
        Self {
            source: source.clone(),
            target: target.clone(),
            images: vec![Image::Zero; source.len()],
        }
    }

    pub fn identity(ctx: &Ctx) -> Self {
        Self {
            source: ctx.clone(),
            target: ctx.clone(),
            images: (0..ctx.len()).map(Image::Var).collect(),
        }
    }

    /// Maps every source variable to the target variable of the same name,
    /// where one exists.
    pub fn by_name(source: &Ctx, target: &Ctx) -> Self {
        let mut s = Self::new(source, target);
        for (i, v) in source.vars.iter().enumerate() {
            if let Some(j) = target.index_of(&v.name) {
                s.images[i] = Image::Var(j);
            }
        }
        s
    }

    pub fn rename(mut self, var: usize, target_var: usize) -> Self {
        self.images[var] = Image::Var(target_var);
        self
    }

    pub fn zero(mut self, var: usize) -> Self {
        self.images[var] = Image::Zero;
        self
    }

    /// Sends `var` to a jet vanishing at the origin.
    pub fn set(mut self, var: usize, jet: Jet) -> Self {
        self.images[var] = Image::Series { jet, shifted: false };
        self
    }

    /// Sends `var` to a jet with a declared nonzero constant term. The
    /// source jet must be polynomial in `var`.
    pub fn shift(mut self, var: usize, jet: Jet) -> Self {
        self.images[var] = Image::Series { jet, shifted: true };
        self
    }

    pub fn set_named(self, name: &str, jet: Jet) -> Self {
        let i = self.source.index_of(name).unwrap_or_else(|| panic!("unknown variable `{name}`"));
        self.set(i, jet)
    }

    pub fn source(&self) -> &Ctx {
        &self.source
    }

    pub fn target(&self) -> &Ctx {
        &self.target
    }

    /// Image of a source variable as a jet in the target context.
    pub fn image(&self, var: usize, cap: i32) -> Jet {
        match &self.images[var] {
            Image::Zero => Jet::zero(&self.target, cap),
            Image::Var(j) => Jet::var(&self.target, cap, *j),
            Image::Series { jet, .. } => jet.clone(),
        }
    }

    fn apply(&self, a: &Jet) -> Result<Jet> {
        if !same_context(&a.ctx, &self.source) {
            return Err(Error::ContextMismatch);
        }
        let n_src = self.source.len();
        let mut used = vec![false; n_src];
        for m in a.terms.keys() {
            for (i, &e) in m.exponents().iter().enumerate() {
                used[i] |= e > 0;
            }
        }
        let mut v_min: Option<i32> = None;
        let mut c_min: Option<i32> = None;
        let mut c_max = a.cap;
        for (i, img) in self.images.iter().enumerate() {
            match img {
                Image::Zero => {}
                Image::Var(_) => {
                    if used[i] {
                        v_min = Some(v_min.map_or(1, |v| v.min(1)));
                    }
                }
                Image::Series { jet, shifted } => {
                    if !same_context(&jet.ctx, &self.target) {
                        return Err(Error::ContextMismatch);
                    }
                    if !shifted && !jet.constant_term().is_zero() {
                        return Err(Error::BasePoint {
                            var: self.source.name(i).to_string(),
                        });
                    }
                    if used[i] {
                        c_min = Some(c_min.map_or(jet.cap, |c| c.min(jet.cap)));
                        c_max = c_max.max(jet.cap);
                        if !shifted {
                            let v = jet.valuation();
                            v_min = Some(v_min.map_or(v, |w| w.min(v)));
                        }
                    }
                }
            }
        }
        let mut cap = c_max;
        if let Some(v) = v_min {
            cap = cap.min((a.cap + 1).saturating_mul(v) - 1);
        }
        if let Some(c) = c_min {
            cap = cap.min(c);
        }

        // group terms by their exponents on series-valued variables
        let series_vars: Vec<usize> = (0..n_src)
            .filter(|&i| used[i] && matches!(self.images[i], Image::Series { .. }))
            .collect();
        let n_tgt = self.target.len();
        let mut groups: BTreeMap<Vec<u16>, Jet> = BTreeMap::new();
        'terms: for (m, c) in &a.terms {
            let mut e = vec![0u16; n_tgt];
            for (i, &k) in m.exponents().iter().enumerate() {
                if k == 0 {
                    continue;
                }
                match self.images[i] {
                    Image::Zero => continue 'terms,
                    Image::Var(j) => e[j] += k,
                    Image::Series { .. } => {}
                }
            }
            if e.iter().map(|&x| x as i32).sum::<i32>() > cap {
                continue;
            }
            let sig: Vec<u16> = series_vars.iter().map(|&i| m.get(i)).collect();
            groups
                .entry(sig)
                .or_insert_with(|| Jet::zero(&self.target, cap))
                .add_term(MultiIndex::from_slice(&e), c);
        }

        let mut powers: HashMap<(usize, u16), Jet> = HashMap::new();
        let mut out = Jet::zero(&self.target, cap);
        for (sig, poly) in groups {
            if poly.is_zero() {
                continue;
            }
            let mut factor = poly;
            for (k, &i) in series_vars.iter().enumerate() {
                if sig[k] == 0 {
                    continue;
                }
                let p = self.power(i, sig[k], cap, &mut powers);
                factor = factor.mul_to(&p, cap);
                if factor.is_zero() {
                    break;
                }
            }
            for (m, c) in &factor.terms {
                out.add_term(m.clone(), c);
            }
        }
        Ok(out)
    }

    fn power(&self, var: usize, e: u16, cap: i32, cache: &mut HashMap<(usize, u16), Jet>) -> Jet {
        if let Some(p) = cache.get(&(var, e)) {
            return p.clone();
        }
        let Image::Series { jet, .. } = &self.images[var] else {
            unreachable!("power of a non-series image")
        };
        let base = jet.truncate(cap);
        let p = if e == 1 {
            base
        } else {
            let prev = self.power(var, e - 1, cap, cache);
            prev.mul_to(&base, cap)
        };
        cache.insert((var, e), p.clone());
        p
    }
}

/// Solves `M·x = b` by iterating `x ← M(0)⁻¹(b − (M − M(0))·x)`.
pub fn linear_solve(m: &[Vec<Jet>], b: &[Jet]) -> Result<Vec<Jet>> {
    let n = b.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::assertion("linear_solve", "matrix is not square"));
    }
    let ctx = b[0].ctx.clone();
    let cap = m
        .iter()
        .flatten()
        .chain(b)
        .map(Jet::cap)
        .min()
        .unwrap_or(0);
    let m0: matrix::Matrix = m
        .iter()
        .map(|row| row.iter().map(Jet::constant_term).collect())
        .collect();
    let m0_inv = matrix::inverse(&m0).map_err(|_| Error::DegenerateFrame)?;
    let m1: Vec<Vec<Jet>> = m
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| (e - &Jet::constant(&ctx, cap, e.constant_term())).truncate(cap))
                .collect()
        })
        .collect();
    let apply_inv = |v: &[Jet]| -> Vec<Jet> {
        (0..n)
            .map(|i| {
                let mut acc = Jet::zero(&ctx, cap);
                for (j, vj) in v.iter().enumerate() {
                    if !m0_inv[i][j].is_zero() {
                        acc = &acc + &vj.scale(&m0_inv[i][j]);
                    }
                }
                acc
            })
            .collect()
    };
    let b: Vec<Jet> = b.iter().map(|x| x.truncate(cap)).collect();
    let mut x = apply_inv(&b);
    for _ in 0..=cap + 1 {
        let rhs: Vec<Jet> = (0..n)
            .map(|i| {
                let mut acc = b[i].clone();
                for (j, xj) in x.iter().enumerate() {
                    if !m1[i][j].is_zero() {
                        acc = &acc - &(&m1[i][j] * xj);
                    }
                }
                acc.truncate(cap)
            })
            .collect();
        let next = apply_inv(&rhs);
        if next.iter().zip(&x).all(|(a, b)| a.terms == b.terms) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::assertion("linear_solve", "iteration did not stabilise"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(re: i64, im: i64) -> GaussianRational {
        GaussianRational::from_ints(re, im)
    }

    fn zctx() -> Ctx {
        VariableContext::builder().complex(&[("z", "zb")]).build()
    }

    fn wctx() -> Ctx {
        VariableContext::builder().real("w").build()
    }

    #[test]
    fn context_involution() {
        let c = VariableContext::builder()
            .complex(&[("z1", "zb1"), ("z2", "zb2")])
            .real("s")
            .build();
        assert!(c.check_involution());
        assert_eq!(c.conj(0), 2);
        assert_eq!(c.conj(4), 4);
        assert_eq!(
            c.real_coords(),
            vec![RealCoord::Re(0), RealCoord::Im(0), RealCoord::Re(1), RealCoord::Im(1), RealCoord::Real(4)]
        );
    }

    #[test]
    fn ring_examples() {
        let c = zctx();
        let z = Jet::var(&c, 3, 0);
        let zb = Jet::var(&c, 2, 1);
        let one = Jet::one(&c, 3);
        let p = &(&one + &z) * &(&one - &z);
        assert_eq!(p, &one - &(&z * &z));
        let zz = Jet::var(&c, 2, 0);
        let x = &zz + &zb;
        assert!((&(&x * &x) * &x).is_zero());
        assert!((&x * &x).is_real());
    }

    #[test]
    fn derivative_examples() {
        let c = zctx();
        let f = Jet::monomial(&c, 6, &[2, 1], g(1, 0));
        assert_eq!(f.partial(0), Jet::monomial(&c, 5, &[1, 1], g(2, 0)));
        let q = Jet::monomial(&c, 6, &[2, 2], g(1, 0));
        assert_eq!(q.derive(&MultiIndex::from_slice(&[2, 2])).constant_term(), g(4, 0));
    }

    #[test]
    fn substitution_examples() {
        let zc = VariableContext::builder().real("z").build();
        let wc = wctx();
        let z = Jet::var(&zc, 3, 0);
        let geom = Jet::one(&zc, 3).try_sub(&z).unwrap().reciprocal().unwrap();
        let w = Jet::var(&wc, 3, 0);
        let img = &w + &(&w * &w);
        let out = geom.substitute(&Substitution::new(&zc, &wc).set(0, img)).unwrap();
        let expect = Jet::from_terms(
            &wc,
            3,
            (0..4).map(|k| (MultiIndex::from_slice(&[k]), g(k.max(1) as i64, 0))),
        );
        assert_eq!(out, expect);
        assert_eq!(geom.substitute(&Substitution::identity(&zc)).unwrap(), geom);

        let tc = VariableContext::builder().real("tau").build();
        let sc = VariableContext::builder().real("sigma").build();
        let sigma2 = Jet::monomial(&sc, 4, &[2], g(1, 0));
        let shift = &Jet::one(&tc, 4) + &Jet::var(&tc, 4, 0);
        let out = sigma2.substitute(&Substitution::new(&sc, &tc).shift(0, shift.clone())).unwrap();
        assert_eq!(out, &shift * &shift);
        let err = sigma2.substitute(&Substitution::new(&sc, &tc).set(0, shift));
        assert!(matches!(err, Err(Error::BasePoint { .. })));
    }

    #[test]
    fn reciprocal_examples() {
        let c = wctx();
        let w = Jet::var(&c, 5, 0);
        let r = (&Jet::one(&c, 5) - &w).reciprocal().unwrap();
        assert!((0..=5).all(|k| r.coeff_of(&[k]).is_one()));
        assert_eq!(Jet::constant(&c, 5, g(2, 0)).reciprocal().unwrap(), Jet::constant(&c, 5, GaussianRational::from_ratio(1, 2)));
        assert_eq!(w.reciprocal(), Err(Error::NonInvertible));
    }

    #[test]
    fn linear_solve_examples() {
        let c = zctx();
        let z = Jet::var(&c, 4, 0);
        let one = Jet::one(&c, 4);
        let b = vec![&z * &z, Jet::var(&c, 4, 1)];
        let id = vec![vec![one.clone(), Jet::zero(&c, 4)], vec![Jet::zero(&c, 4), one.clone()]];
        assert_eq!(linear_solve(&id, &b).unwrap(), b);
        let u = linear_solve(&[vec![&one - &z]], std::slice::from_ref(&one)).unwrap();
        assert_eq!(u[0], (&one - &z).reciprocal().unwrap());
        assert_eq!(linear_solve(&[vec![z.clone()]], &[one]), Err(Error::DegenerateFrame));
    }

    #[test]
    fn implicit_solve_examples() {
        let c = VariableContext::builder().complex(&[("z1", "zb1")]).real("s").real("y").build();
        let y = Jet::var(&c, 6, 3);
        let z2 = Jet::monomial(&c, 6, &[1, 1, 0, 0], g(1, 0));
        let r = &y.scale_int(2) + &z2;
        let half = GaussianRational::from_ratio(-1, 2);
        assert_eq!(r.implicit_solve(3).unwrap(), z2.scale(&half));
        let quartic = Jet::monomial(&c, 6, &[2, 2, 0, 0], g(3, 0));
        let r = &r + &quartic;
        let sol = r.implicit_solve(3).unwrap();
        assert_eq!(sol, (&z2 + &quartic).scale(&half));
        let x1 = Jet::var(&c, 6, 2);
        assert!(matches!((&x1 * &x1).implicit_solve(2), Err(Error::NonGraph { .. })));
    }

    #[test]
    fn weierstrass_examples() {
        let c = VariableContext::builder().real("s").real("t").build();
        let cap = 6;
        let s = Jet::var(&c, cap, 0);
        let t = Jet::var(&c, cap, 1);
        let (f, gg) = (&t - &s).weierstrass_divide(0).unwrap();
        assert_eq!(f, Jet::one(&c, cap - 1));
        assert_eq!(gg, t);
        let phi = &(&t - &s) + &(&s * &t);
        let (f, gg) = phi.weierstrass_divide(0).unwrap();
        assert_eq!(f, (&Jet::one(&c, cap) - &t).truncate(cap - 1));
        let one = Jet::one(&c, cap);
        assert_eq!(gg, &t * &(&one - &t).reciprocal().unwrap());
        assert!(matches!((&s * &s).weierstrass_divide(0), Err(Error::PreparationFailure(_))));
    }

    #[test]
    fn literal_round_trip() {
        let c = zctx();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j = Jet::random(&c, 4, 0, 6, &mut rng);
        let lit = j.to_literal();
        let back = Jet::from_literal(&c, &lit).unwrap();
        assert_eq!(back, j);
    }

    fn ctx3() -> Ctx {
        VariableContext::builder().complex(&[("z", "zb")]).real("s").build()
    }

    fn rj(seed: u64, cap: i32, min_degree: u32) -> Jet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Jet::random(&ctx3(), cap, min_degree, 5, &mut rng)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ring_axioms(s in any::<u64>()) {
            let (a, b, c) = (rj(s, 4, 0), rj(s ^ 1, 4, 0), rj(s ^ 2, 4, 0));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!((&a * &b).truncate(3), &a.truncate(3) * &b.truncate(3));
        }

        #[test]
        fn reality_is_closed(s in any::<u64>()) {
            let a = rj(s, 4, 0).real_part();
            let b = rj(s ^ 7, 4, 0).real_part();
            prop_assert!((&a * &b).is_real());
        }

        #[test]
        fn reciprocal_inverts(s in any::<u64>()) {
            let a = &rj(s, 5, 1) + &Jet::constant(&ctx3(), 5, g(1 + (s % 5) as i64, 1));
            let r = a.reciprocal().unwrap();
            prop_assert_eq!(&a * &r, Jet::one(&ctx3(), 5));
        }

        #[test]
        fn mixed_partials_commute(s in any::<u64>()) {
            let a = rj(s, 5, 0);
            prop_assert_eq!(a.partial(0).partial(2), a.partial(2).partial(0));
        }

        #[test]
        fn substitution_is_a_homomorphism(s in any::<u64>()) {
            let (a, b) = (rj(s, 4, 0), rj(s ^ 3, 4, 0));
            let sub = Substitution::identity(&ctx3())
                .set(0, rj(s ^ 5, 4, 1))
                .set(2, rj(s ^ 9, 4, 2));
            let lhs = (&a * &b).substitute(&sub).unwrap();
            let rhs = &a.substitute(&sub).unwrap() * &b.substitute(&sub).unwrap();
            prop_assert!(lhs.agrees_with(&rhs));
        }

        #[test]
        fn implicit_solve_residual_vanishes(s in any::<u64>()) {
            let c = ctx3();
            let r = &Jet::var(&c, 5, 2).scale_int(2) + &rj(s, 5, 2);
            let y = r.implicit_solve(2).unwrap();
            prop_assert_eq!(y.coeff(&MultiIndex::unit(3, 2)), GaussianRational::zero());
            let res = r.substitute(&Substitution::identity(&c).set(2, y)).unwrap();
            prop_assert!(res.is_zero());
        }

        #[test]
        fn weierstrass_reconstructs(s in any::<u64>()) {
            let c = ctx3();
            let phi = &(&Jet::var(&c, 5, 0) - &Jet::var(&c, 5, 2)) + &rj(s, 5, 2);
            let (f, gg) = phi.weierstrass_divide(2).unwrap();
            prop_assert!(f.constant_term().is_one());
            prop_assert!(gg.terms().all(|(m, _)| m.get(2) == 0));
            let rebuilt = &f * &(&gg - &Jet::var(&c, 5, 2));
            prop_assert!(rebuilt.agrees_with(&phi));
            prop_assert_eq!(f.cap(), 4);
        }
    }
}
