//! Differential forms and vector fields with jet coefficients.
//!
//! Covariables are the differentials of the context variables, so a form
//! on `(z, z̄, s)` is stored over `dz, dz̄, ds`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::jets::{same_context, Ctx, Jet, RealCoord, Substitution};
use crate::matrix;
use crate::scalars::GaussianRational;

/// Sign and merged index list of `dv_a ∧ dv_b` for increasing lists, or
/// `None` when an index repeats.
fn merge(a: &[usize], b: &[usize]) -> Option<(bool, Vec<usize>)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut neg = false;
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            // b[j] jumps over the remaining a's
            if (a.len() - i) % 2 == 1 {
                neg = !neg;
            }
            out.push(b[j]);
            j += 1;
        } else {
            return None;
        }
    }
    Some((neg, out))
}

#[derive(Clone, PartialEq)]
pub struct FormJet {
    ctx: Ctx,
    cap: i32,
    degree: usize,
    comps: BTreeMap<Vec<usize>, Jet>,
}

impl FormJet {
    pub fn zero(ctx: &Ctx, cap: i32, degree: usize) -> Self {
        Self {
            ctx: ctx.clone(),
            cap,
            degree,
            comps: BTreeMap::new(),
        }
    }

    /// `dv` for the context variable with index `i`.
    pub fn dvar(ctx: &Ctx, cap: i32, i: usize) -> Self {
        Self::zero(ctx, cap, 1).with_component(vec![i], Jet::one(ctx, cap))
    }

    pub fn function(f: &Jet) -> Self {
        Self::zero(f.context(), f.cap(), 0).with_component(Vec::new(), f.clone())
    }

    pub fn one_form(ctx: &Ctx, cap: i32, comps: &[Jet]) -> Self {
        let mut out = Self::zero(ctx, cap, 1);
        for (i, c) in comps.iter().enumerate() {
            out = out.with_component(vec![i], c.clone());
        }
        out
    }

    /// Adds `f·dv_{idx}`, reordering `idx` into increasing order with sign.
    pub fn with_component(mut self, idx: Vec<usize>, f: Jet) -> Self {
        assert_eq!(idx.len(), self.degree, "component has wrong degree");
        let mut sorted = idx;
        let mut neg = false;
        for i in 0..sorted.len() {
            for j in 0..sorted.len() - 1 - i {
                if sorted[j] > sorted[j + 1] {
                    sorted.swap(j, j + 1);
                    neg = !neg;
                } else if sorted[j] == sorted[j + 1] {
                    return self;
                }
            }
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return self;
        }
        let f = if neg { -&f } else { f };
        self.cap = self.cap.min(f.cap());
        self.insert(sorted, f);
        self
    }

    fn insert(&mut self, idx: Vec<usize>, f: Jet) {
        let merged = match self.comps.remove(&idx) {
            Some(old) => &old + &f,
            None => f,
        };
        if !merged.is_zero() {
            self.comps.insert(idx, merged);
        }
    }

    pub fn context(&self) -> &Ctx {
        &self.ctx
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Smallest cap among the components and the declared cap.
    pub fn cap(&self) -> i32 {
        self.comps.values().map(Jet::cap).fold(self.cap, i32::min)
    }

    pub fn components(&self) -> impl Iterator<Item = (&Vec<usize>, &Jet)> {
        self.comps.iter()
    }

    /// Coefficient on `dv_{idx}` with `idx` increasing.
    pub fn component(&self, idx: &[usize]) -> Jet {
        self.comps
            .get(idx)
            .cloned()
            .unwrap_or_else(|| Jet::zero(&self.ctx, self.cap()))
    }

    pub fn is_zero(&self) -> bool {
        self.comps.is_empty()
    }

    fn check(&self, other: &Self) -> Result<()> {
        if !same_context(&self.ctx, &other.ctx) {
            return Err(Error::ContextMismatch);
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        if self.degree != other.degree {
            return Err(Error::FormDegree {
                expected: self.degree,
                found: other.degree,
            });
        }
        let mut out = self.clone();
        out.cap = self.cap.min(other.cap);
        for (k, f) in &other.comps {
            out.insert(k.clone(), f.clone());
        }
        Ok(out.truncate(out.cap()))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(&GaussianRational::from_ints(-1, 0)))
    }

    pub fn scale(&self, k: &GaussianRational) -> Self {
        self.map(|f| f.scale(k))
    }

    pub fn mul_jet(&self, f: &Jet) -> Self {
        let mut out = self.map(|c| c * f);
        out.cap = out.cap.min(f.cap());
        out
    }

    fn map(&self, op: impl Fn(&Jet) -> Jet) -> Self {
        let mut out = Self::zero(&self.ctx, self.cap, self.degree);
        for (k, f) in &self.comps {
            out.insert(k.clone(), op(f));
        }
        out
    }

    pub fn truncate(&self, cap: i32) -> Self {
        let mut out = self.map(|f| f.truncate(cap));
        out.cap = self.cap.min(cap);
        out
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = Self::zero(&self.ctx, self.cap.min(other.cap), self.degree + other.degree);
        for (a, fa) in &self.comps {
            for (b, fb) in &other.comps {
                if let Some((neg, idx)) = merge(a, b) {
                    let p = fa * fb;
                    out.insert(idx, if neg { -&p } else { p });
                }
            }
        }
        Ok(out)
    }

    pub fn exterior_d(&self) -> Self {
        let n = self.ctx.len();
        let mut out = Self::zero(&self.ctx, self.cap - 1, self.degree + 1);
        for (idx, f) in &self.comps {
            for v in 0..n {
                let df = f.partial(v);
                if df.is_zero() {
                    continue;
                }
                if let Some((neg, merged)) = merge(&[v], idx) {
                    out.insert(merged, if neg { -&df } else { df });
                }
            }
        }
        out
    }

    /// Contraction with the first slot.
    pub fn interior(&self, v: &VectorFieldJet) -> Result<Self> {
        if !same_context(&self.ctx, &v.ctx) {
            return Err(Error::ContextMismatch);
        }
        if self.degree == 0 {
            return Err(Error::FormDegree {
                expected: 1,
                found: 0,
            });
        }
        let mut out = Self::zero(&self.ctx, self.cap.min(v.cap()), self.degree - 1);
        for (idx, f) in &self.comps {
            for (a, &i) in idx.iter().enumerate() {
                let vi = &v.comps[i];
                if vi.is_zero() {
                    continue;
                }
                let mut rest = idx.clone();
                rest.remove(a);
                let p = f * vi;
                out.insert(rest, if a % 2 == 1 { -&p } else { p });
            }
        }
        Ok(out)
    }

    /// Full contraction `α(V₁, …, V_k)` with the determinant convention.
    pub fn pair(&self, fields: &[&VectorFieldJet]) -> Result<Jet> {
        if fields.len() != self.degree {
            return Err(Error::FormDegree {
                expected: self.degree,
                found: fields.len(),
            });
        }
        let mut form = self.clone();
        for v in fields {
            form = form.interior(v)?;
        }
        Ok(form.component(&[]))
    }

    /// Conjugation: `conj(f dv_I) = conj(f) d(conj v)_I`.
    pub fn conj(&self) -> Self {
        let mut out = Self::zero(&self.ctx, self.cap, self.degree);
        for (idx, f) in &self.comps {
            let cidx: Vec<usize> = idx.iter().map(|&i| self.ctx.conj(i)).collect();
            out = out.with_component(cidx, f.conj());
        }
        out
    }

    pub fn is_real(&self) -> bool {
        self.try_sub(&self.conj()).map(|d| d.is_zero()).unwrap_or(false)
    }

    /// Pullback along a substitution: coefficients are composed and each
    /// `dv` becomes the differential of the image of `v`.
    pub fn pullback(&self, sub: &Substitution) -> Result<Self> {
        if !same_context(&self.ctx, sub.source()) {
            return Err(Error::ContextMismatch);
        }
        let target = sub.target();
        let cap = self.cap();
        let dimg: Vec<Self> = (0..self.ctx.len())
            .map(|i| Self::function(&sub.image(i, cap + 1)).exterior_d())
            .collect();
        let mut out = Self::zero(target, cap, self.degree);
        for (idx, f) in &self.comps {
            let mut term = Self::function(&f.substitute(sub)?);
            for &i in idx {
                term = term.wedge(&dimg[i])?;
            }
            out = out.try_add(&term)?;
        }
        Ok(out)
    }

    /// Coefficient of `dx₁∧…∧dx_m` in real coordinates, for a top-degree form.
    pub fn top_density(&self) -> Result<Jet> {
        let n = self.ctx.len();
        if self.degree != n {
            return Err(Error::FormDegree {
                expected: n,
                found: self.degree,
            });
        }
        let coords = self.ctx.real_coords();
        if coords.len() != n {
            return Err(Error::assertion("top_density", "context is not closed under conjugation"));
        }
        // row v: dv expressed in the real covariables
        let mut m = vec![vec![GaussianRational::zero(); n]; n];
        for (c, coord) in coords.iter().enumerate() {
            match *coord {
                RealCoord::Re(h) => {
                    m[h][c] = GaussianRational::one();
                    m[self.ctx.conj(h)][c] = GaussianRational::one();
                }
                RealCoord::Im(h) => {
                    m[h][c] = GaussianRational::i();
                    m[self.ctx.conj(h)][c] = -GaussianRational::i();
                }
                RealCoord::Real(r) => m[r][c] = GaussianRational::one(),
            }
        }
        let det = matrix::determinant(&m);
        let all: Vec<usize> = (0..n).collect();
        Ok(self.component(&all).scale(&det))
    }
}

impl fmt::Debug for FormJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.comps.is_empty() {
            return write!(f, "0 [{}-form]", self.degree);
        }
        for (k, (idx, c)) in self.comps.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            let names: Vec<String> = idx.iter().map(|&i| format!("d{}", self.ctx.name(i))).collect();
            write!(f, "[{}] {c}", names.join("∧"))?;
        }
        Ok(())
    }
}

/// Vector field `Σ V^v ∂_v` over the context variables.
#[derive(Clone, PartialEq)]
pub struct VectorFieldJet {
    ctx: Ctx,
    comps: Vec<Jet>,
}

impl VectorFieldJet {
    pub fn new(ctx: &Ctx, comps: Vec<Jet>) -> Self {
        assert_eq!(comps.len(), ctx.len(), "one component per variable");
        Self { ctx: ctx.clone(), comps }
    }

    pub fn zero(ctx: &Ctx, cap: i32) -> Self {
        Self::new(ctx, vec![Jet::zero(ctx, cap); ctx.len()])
    }

    /// Coordinate field `∂_v`.
    pub fn coordinate(ctx: &Ctx, cap: i32, i: usize) -> Self {
        let mut f = Self::zero(ctx, cap);
        f.comps[i] = Jet::one(ctx, cap);
        f
    }

    pub fn context(&self) -> &Ctx {
        &self.ctx
    }

    pub fn components(&self) -> &[Jet] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &Jet {
        &self.comps[i]
    }

    pub fn cap(&self) -> i32 {
        self.comps.iter().map(Jet::cap).min().unwrap_or(i32::MAX)
    }

    pub fn apply(&self, f: &Jet) -> Jet {
        let mut out = Jet::zero(&self.ctx, f.cap() - 1);
        for (i, v) in self.comps.iter().enumerate() {
            out = &out + &(v * &f.partial(i));
        }
        out
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if !same_context(&self.ctx, &other.ctx) {
            return Err(Error::ContextMismatch);
        }
        Ok(Self::new(
            &self.ctx,
            self.comps.iter().zip(&other.comps).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(&GaussianRational::from_ints(-1, 0)))
    }

    pub fn scale(&self, k: &GaussianRational) -> Self {
        Self::new(&self.ctx, self.comps.iter().map(|c| c.scale(k)).collect())
    }

    pub fn mul_jet(&self, f: &Jet) -> Self {
        Self::new(&self.ctx, self.comps.iter().map(|c| c * f).collect())
    }

    pub fn lie_bracket(&self, other: &Self) -> Result<Self> {
        if !same_context(&self.ctx, &other.ctx) {
            return Err(Error::ContextMismatch);
        }
        Ok(Self::new(
            &self.ctx,
            self.comps
                .iter()
                .zip(&other.comps)
                .map(|(u, v)| &self.apply(v) - &other.apply(u))
                .collect(),
        ))
    }

    /// `conj(V)` with `conj(V)^{v̄} = conj(V^v)`.
    pub fn conj(&self) -> Self {
        let mut comps = vec![Jet::zero(&self.ctx, self.cap()); self.ctx.len()];
        for (i, c) in self.comps.iter().enumerate() {
            comps[self.ctx.conj(i)] = c.conj();
        }
        Self::new(&self.ctx, comps)
    }

    pub fn truncate(&self, cap: i32) -> Self {
        Self::new(&self.ctx, self.comps.iter().map(|c| c.truncate(cap)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Jet::is_zero)
    }
}

impl fmt::Debug for VectorFieldJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.comps.iter().enumerate() {
            if !c.is_zero() {
                writeln!(f, "∂{}: {c}", self.ctx.name(i))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::VariableContext;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(re: i64, im: i64) -> GaussianRational {
        GaussianRational::from_ints(re, im)
    }

    fn ctx(n: usize) -> Ctx {
        let names: Vec<(String, String)> =
            (1..=n).map(|j| (format!("z{j}"), format!("zb{j}"))).collect();
        let pairs: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        VariableContext::builder().complex(&pairs).real("s").build()
    }

    fn heisenberg_omega(c: &Ctx, n: usize, cap: i32) -> FormJet {
        let mut w = FormJet::dvar(c, cap, 2 * n);
        let half_i = GaussianRational::new(crate::scalars::rat_int(0), crate::scalars::rat(1, 2));
        for j in 0..n {
            let z = Jet::var(c, cap, j);
            let zb = Jet::var(c, cap, n + j);
            let t = FormJet::zero(c, cap, 1)
                .with_component(vec![j], zb.scale(&half_i))
                .with_component(vec![n + j], z.scale(&-&half_i));
            w = w.try_add(&t).unwrap();
        }
        w
    }

    #[test]
    fn wedge_examples() {
        let c = ctx(1);
        let dz = FormJet::dvar(&c, 4, 0);
        let dzb = FormJet::dvar(&c, 4, 1);
        let a = dz.wedge(&dzb).unwrap();
        assert_eq!(a, dzb.wedge(&dz).unwrap().scale(&g(-1, 0)));
        assert!(a.wedge(&a).unwrap().is_zero());

        let c2 = ctx(2);
        let mut sum = FormJet::zero(&c2, 4, 2);
        let mut ordered = FormJet::function(&Jet::one(&c2, 4));
        for j in 0..2 {
            let t = FormJet::dvar(&c2, 4, j).wedge(&FormJet::dvar(&c2, 4, 2 + j)).unwrap();
            sum = sum.try_add(&t).unwrap();
            ordered = ordered.wedge(&t).unwrap();
        }
        assert_eq!(sum.wedge(&sum).unwrap(), ordered.scale(&g(2, 0)));
    }

    #[test]
    fn d_examples() {
        let c = ctx(1);
        let w = FormJet::zero(&c, 4, 1).with_component(vec![1], Jet::var(&c, 4, 0));
        let expect = FormJet::dvar(&c, 3, 0).wedge(&FormJet::dvar(&c, 3, 1)).unwrap();
        assert_eq!(w.exterior_d(), expect);

        for n in 1..=2 {
            let c = ctx(n);
            let dw = heisenberg_omega(&c, n, 4).exterior_d();
            let mut expect = FormJet::zero(&c, 3, 2);
            for j in 0..n {
                let t = FormJet::dvar(&c, 3, j).wedge(&FormJet::dvar(&c, 3, n + j)).unwrap();
                expect = expect.try_add(&t.scale(&g(0, -1))).unwrap();
            }
            assert_eq!(dw, expect);
        }
    }

    #[test]
    fn pair_examples() {
        let c = ctx(1);
        let ds = FormJet::dvar(&c, 4, 2);
        let ps = VectorFieldJet::coordinate(&c, 4, 2);
        assert!(ds.pair(&[&ps]).unwrap().constant_term().is_one());
        assert!(matches!(ds.pair(&[]), Err(Error::FormDegree { .. })));

        let dw = heisenberg_omega(&c, 1, 4).exterior_d();
        // Heisenberg frame L = ∂_z − (i z̄ / 2) ∂_s
        let l = VectorFieldJet::new(
            &c,
            vec![Jet::one(&c, 4), Jet::zero(&c, 4), Jet::var(&c, 4, 1).scale(&GaussianRational::new(crate::scalars::rat_int(0), crate::scalars::rat(-1, 2)))],
        );
        let lb = l.conj();
        assert_eq!(dw.pair(&[&l, &lb]).unwrap().constant_term(), g(0, -1));
        assert!(heisenberg_omega(&c, 1, 4).pair(&[&l]).unwrap().is_zero());
        let br = l.lie_bracket(&lb).unwrap();
        assert_eq!(br.component(2).constant_term(), g(0, 1));
    }

    #[test]
    fn heisenberg_density_is_one() {
        for n in 1..=2 {
            let c = ctx(n);
            let w = heisenberg_omega(&c, n, 6);
            let half = w.exterior_d().scale(&GaussianRational::from_ratio(-1, 2));
            let mut vol = FormJet::function(&Jet::one(&c, 6));
            for _ in 0..n {
                vol = vol.wedge(&half).unwrap();
            }
            let vol = vol.wedge(&w).unwrap().scale(&GaussianRational::from_ratio(1, if n == 2 { 2 } else { 1 }));
            let lam = vol.top_density().unwrap();
            assert!(lam.constant_term().is_one());
            assert_eq!(lam.num_terms(), 1);
        }
        let c = ctx(1);
        assert!(matches!(FormJet::dvar(&c, 2, 0).top_density(), Err(Error::FormDegree { .. })));
    }

    fn rjet(c: &Ctx, seed: u64, cap: i32) -> Jet {
        Jet::random(c, cap, 0, 4, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn rform(c: &Ctx, seed: u64, cap: i32, degree: usize) -> FormJet {
        let mut f = FormJet::zero(c, cap, degree);
        let n = c.len();
        let mut idx: Vec<usize> = (0..degree).collect();
        let mut k = 0u64;
        loop {
            f = f.with_component(idx.clone(), rjet(c, seed.wrapping_add(k), cap));
            k += 1;
            // next increasing tuple
            let mut i = degree;
            loop {
                if i == 0 {
                    return f;
                }
                i -= 1;
                if idx[i] < n - degree + i {
                    idx[i] += 1;
                    for j in i + 1..degree {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn rfield(c: &Ctx, seed: u64, cap: i32) -> VectorFieldJet {
        VectorFieldJet::new(c, (0..c.len()).map(|i| rjet(c, seed ^ (i as u64 + 100), cap)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn d_squared_vanishes(s in any::<u64>()) {
            let c = ctx(1);
            prop_assert!(rform(&c, s, 5, 1).exterior_d().exterior_d().is_zero());
        }

        #[test]
        fn leibniz(s in any::<u64>()) {
            let c = ctx(1);
            let a = rform(&c, s, 4, 1);
            let b = rform(&c, s ^ 11, 4, 1);
            let lhs = a.wedge(&b).unwrap().exterior_d();
            let rhs = a.exterior_d().wedge(&b).unwrap()
                .try_sub(&a.wedge(&b.exterior_d()).unwrap()).unwrap();
            prop_assert!(lhs.try_sub(&rhs).unwrap().is_zero());
        }

        #[test]
        fn cartan_formula(s in any::<u64>()) {
            let c = ctx(1);
            let a = rform(&c, s, 5, 1);
            let u = rfield(&c, s ^ 3, 5);
            let v = rfield(&c, s ^ 5, 5);
            let lhs = a.exterior_d().pair(&[&u, &v]).unwrap();
            let rhs = &(&u.apply(&a.pair(&[&v]).unwrap()) - &v.apply(&a.pair(&[&u]).unwrap()))
                - &a.pair(&[&u.lie_bracket(&v).unwrap()]).unwrap();
            prop_assert!(lhs.agrees_with(&rhs));
        }

        #[test]
        fn pairing_is_antisymmetric(s in any::<u64>()) {
            let c = ctx(1);
            let a = rform(&c, s, 4, 2);
            let u = rfield(&c, s ^ 3, 4);
            let v = rfield(&c, s ^ 5, 4);
            prop_assert_eq!(a.pair(&[&u, &v]).unwrap(), -&a.pair(&[&v, &u]).unwrap());
        }

        #[test]
        fn jacobi_identity(s in any::<u64>()) {
            let c = ctx(1);
            let (u, v, w) = (rfield(&c, s, 5), rfield(&c, s ^ 1, 5), rfield(&c, s ^ 2, 5));
            let t1 = u.lie_bracket(&v.lie_bracket(&w).unwrap()).unwrap();
            let t2 = v.lie_bracket(&w.lie_bracket(&u).unwrap()).unwrap();
            let t3 = w.lie_bracket(&u.lie_bracket(&v).unwrap()).unwrap();
            let sum = t1.try_add(&t2).unwrap().try_add(&t3).unwrap();
            prop_assert!(sum.is_zero());
        }
    }
}
