//! The Boutet de Monvel–Sjöstrand phase of a normal-form surface and its
//! Malgrange factorization.

use rand::Rng;

use crate::error::Result;
use crate::exterior::{FormJet, VectorFieldJet};
use crate::geometry::{ensure, r4, GeometryReport, ModelSurface};
use crate::jets::{Ctx, Jet, MultiIndex, NumericPoly, Substitution, VariableContext};
use crate::scalars::GaussianRational;

fn gi(re: i64, im: i64) -> GaussianRational {
    GaussianRational::from_ints(re, im)
}

fn pairs(prefix: &str, bar: &str, n: usize) -> Vec<(String, String)> {
    (1..=n).map(|j| (format!("{prefix}{j}"), format!("{bar}{j}"))).collect()
}

fn as_refs(p: &[(String, String)]) -> Vec<(&str, &str)> {
    p.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect()
}

/// `(z₁…z_{n+1}, z̄…, w₁…w_{n+1}, w̄…)`.
pub fn doubled_ambient_context(n: usize) -> Ctx {
    let z = pairs("z", "zb", n + 1);
    let w = pairs("w", "wb", n + 1);
    VariableContext::builder().complex(&as_refs(&z)).complex(&as_refs(&w)).build()
}

/// `(z′, z̄′, s, w′, w̄′, t)`: two points of the surface, `t = y_{2n+1}`.
pub fn phase_context(n: usize) -> Ctx {
    let z = pairs("z", "zb", n);
    let w = pairs("w", "wb", n);
    VariableContext::builder()
        .complex(&as_refs(&z))
        .real("s")
        .complex(&as_refs(&w))
        .real("t")
        .build()
}

/// Index helpers for [`phase_context`].
#[derive(Clone, Copy, Debug)]
pub struct PhaseVars {
    pub n: usize,
}

impl PhaseVars {
    pub fn z(&self, j: usize) -> usize {
        j
    }
    pub fn zb(&self, j: usize) -> usize {
        self.n + j
    }
    pub fn s(&self) -> usize {
        2 * self.n
    }
    pub fn w(&self, j: usize) -> usize {
        2 * self.n + 1 + j
    }
    pub fn wb(&self, j: usize) -> usize {
        3 * self.n + 1 + j
    }
    pub fn t(&self) -> usize {
        4 * self.n + 1
    }
    /// Variables of the first point.
    pub fn x_vars(&self) -> std::ops::Range<usize> {
        0..2 * self.n + 1
    }
}

/// Phase as a jet in [`phase_context`].
#[derive(Clone, Debug)]
pub struct PhaseJet {
    pub jet: Jet,
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct Factorization {
    pub f: Jet,
    /// Free of `s`.
    pub g: Jet,
    pub n: usize,
}

impl Factorization {
    /// `Φ = −s + g`.
    pub fn big_phi(&self) -> Jet {
        let ctx = self.g.context();
        &self.g - &Jet::var(ctx, self.g.cap(), PhaseVars { n: self.n }.s())
    }
}

/// `φ̊(z, w̄) = (1/i) Σ ∂^{α+β}r(0)/(α!β!) z^α w̄^β`.
pub fn ambient_phase(surface: &ModelSurface) -> Result<Jet> {
    let n = surface.n();
    let q = doubled_ambient_context(n);
    let m = n + 1;
    let mut sub = Substitution::new(surface.ambient(), &q);
    for j in 0..m {
        // z ↦ z, z̄ ↦ w̄
        sub = sub.rename(j, j).rename(m + j, 3 * m + j);
    }
    let phi = surface.r().substitute(&sub)?.scale(&gi(0, -1));
    for (mono, c) in phi.terms() {
        let bad = (m..3 * m).any(|i| mono.get(i) > 0);
        ensure(!bad, "ambient_phase_support", || format!("coefficient {c} on a z̄ or w monomial"))?;
    }
    Ok(phi)
}

/// Graph function of the second point: `R(w′, w̄′, t)`.
fn second_point(n: usize, graph_r: &Jet, target: &Ctx) -> Result<Jet> {
    let pv = PhaseVars { n };
    let mut sub = Substitution::new(graph_r.context(), target);
    for j in 0..n {
        sub = sub.rename(j, pv.w(j)).rename(n + j, pv.wb(j));
    }
    graph_r.substitute(&sub.rename(2 * n, pv.t()))
}

fn first_point(f: &Jet, target: &Ctx) -> Result<Jet> {
    f.substitute(&Substitution::by_name(f.context(), target))
}

/// Diagonal restriction `y = x` into the surface context.
pub fn diagonal(n: usize, f: &Jet, sc: &Ctx) -> Result<Jet> {
    let pv = PhaseVars { n };
    let mut sub = Substitution::new(f.context(), sc);
    for j in 0..n {
        sub = sub.rename(pv.z(j), j).rename(pv.zb(j), n + j).rename(pv.w(j), j).rename(pv.wb(j), n + j);
    }
    f.substitute(&sub.rename(pv.s(), 2 * n).rename(pv.t(), 2 * n))
}

/// `x ↔ y`.
fn swap_points(n: usize, f: &Jet) -> Result<Jet> {
    let pv = PhaseVars { n };
    let ctx = f.context();
    let mut sub = Substitution::new(ctx, ctx);
    for j in 0..n {
        sub = sub
            .rename(pv.z(j), pv.w(j))
            .rename(pv.w(j), pv.z(j))
            .rename(pv.zb(j), pv.wb(j))
            .rename(pv.wb(j), pv.zb(j));
    }
    f.substitute(&sub.rename(pv.s(), pv.t()).rename(pv.t(), pv.s()))
}

/// Reeb field acting on the first point.
fn lift_reeb(reeb: &VectorFieldJet, pc: &Ctx) -> Result<VectorFieldJet> {
    let mut comps = vec![Jet::zero(pc, reeb.cap()); pc.len()];
    for (v, c) in reeb.components().iter().enumerate() {
        comps[v] = first_point(c, pc)?;
    }
    Ok(VectorFieldJet::new(pc, comps))
}

/// `φ̊` with `z_{n+1} ↦ s + iR(x)` and `w̄_{n+1} ↦ t − iR(y)`.
pub fn restrict_phase(surface: &ModelSurface, ambient_phi: &Jet, geom: &GeometryReport) -> Result<PhaseJet> {
    let n = surface.n();
    let m = n + 1;
    let pc = phase_context(n);
    let pv = PhaseVars { n };
    let cap = ambient_phi.cap();
    let rx = first_point(&geom.graph_r, &pc)?;
    let ry = second_point(n, &geom.graph_r, &pc)?;
    let i = gi(0, 1);
    let s = Jet::var(&pc, cap, pv.s());
    let t = Jet::var(&pc, cap, pv.t());
    let mut sub = Substitution::new(ambient_phi.context(), &pc);
    for j in 0..n {
        sub = sub.rename(j, pv.z(j)).rename(3 * m + j, pv.wb(j));
    }
    let sub = sub.set(n, &s + &rx.scale(&i)).set(3 * m + n, &t - &ry.scale(&i));
    let phi = ambient_phi.substitute(&sub)?;
    let out = PhaseJet { jet: phi, n };
    check_phase(&out, geom)?;
    Ok(out)
}

/// Heisenberg part `−s + t + (i/2)Σ(|z|² − 2zw̄ + |w|²)`.
pub fn model_phase(n: usize, cap: i32) -> Jet {
    let pc = phase_context(n);
    let pv = PhaseVars { n };
    let var = |i| Jet::var(&pc, cap, i);
    let mut phi = &var(pv.t()) - &var(pv.s());
    let hi = GaussianRational::new(crate::scalars::rat(0, 1), crate::scalars::rat(1, 2));
    for j in 0..n {
        let q = &(&(&var(pv.z(j)) * &var(pv.zb(j))) + &(&var(pv.w(j)) * &var(pv.wb(j))))
            - &(&var(pv.z(j)) * &var(pv.wb(j))).scale(&gi(2, 0));
        phi = &phi + &q.scale(&hi);
    }
    phi
}

fn check_phase(phase: &PhaseJet, geom: &GeometryReport) -> Result<()> {
    let n = phase.n;
    let phi = &phase.jet;
    let pc = phi.context().clone();
    let sc = &geom.ctx;
    let pv = PhaseVars { n };

    let diag = diagonal(n, phi, sc)?;
    ensure(diag.is_zero(), "phase_diagonal", || format!("φ(x,x) = {diag}"))?;

    // d_xφ|diag = −ω₀ and d_yφ|diag = ω₀
    let mut dx = FormJet::zero(sc, phi.cap() - 1, 1);
    let mut dy = FormJet::zero(sc, phi.cap() - 1, 1);
    for v in 0..2 * n + 1 {
        let yv = if v == 2 * n { pv.t() } else { 2 * n + 1 + v };
        dx = dx.with_component(vec![v], diagonal(n, &phi.partial(v), sc)?);
        dy = dy.with_component(vec![v], diagonal(n, &phi.partial(yv), sc)?);
    }
    let sum = dx.try_add(&geom.omega0)?;
    ensure(sum.is_zero(), "phase_dx_diagonal", || format!("d_xφ + ω₀ = {sum:?}"))?;
    let diff = dy.try_sub(&geom.omega0)?;
    ensure(diff.is_zero(), "phase_dy_diagonal", || format!("d_yφ − ω₀ = {diff:?}"))?;

    // Hermitian symmetry φ(x,y) = −conj φ(y,x)
    let sym = phi + &swap_points(n, phi)?.conj();
    ensure(sym.is_zero(), "phase_hermitian", || format!("φ(x,y) + conj φ(y,x) = {sym}"))?;

    // Taylor formula modulo degree 4
    let dev = phi - &model_phase(n, phi.cap());
    ensure(dev.valuation() >= 4, "phase_taylor", || format!("φ − model = {dev}"))?;

    // quartic transfer
    for q in quartic_indices(n) {
        let (a, b, c, d) = q;
        let want = &r4(&geom.graph_r, n, a, b, c, d) * &gi(0, -1);
        for (side, (h, hb)) in [("x", (0usize, n)), ("y", (pv.w(0), pv.wb(0)))] {
            let mut e = vec![0u16; pc.len()];
            e[h + a] += 1;
            e[h + b] += 1;
            e[hb + c] += 1;
            e[hb + d] += 1;
            let got = phi.derive(&MultiIndex::from_slice(&e)).constant_term();
            ensure(got == want, "phase_quartic_transfer", || {
                format!("{side}-side ∂⁴φ at ({a},{b},{c},{d}) = {got}, −i∂⁴R = {want}")
            })?;
        }
    }

    let t2 = t_squared_at_zero(phi, &geom.reeb)?;
    ensure(t2.is_zero(), "phase_t_squared", || format!("T²φ(0,0) = {t2}"))?;
    Ok(())
}

fn quartic_indices(n: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            for c in 0..n {
                for d in c..n {
                    out.push((a, b, c, d));
                }
            }
        }
    }
    out
}

/// `(T²f)(0,0)` with `T` acting on the first point.
pub fn t_squared_at_zero(f: &Jet, reeb: &VectorFieldJet) -> Result<GaussianRational> {
    let t = lift_reeb(reeb, f.context())?;
    Ok(t.apply(&t.apply(f)).constant_term())
}

pub fn malgrange_factor(phase: &PhaseJet, geom: &GeometryReport) -> Result<Factorization> {
    let n = phase.n;
    let pv = PhaseVars { n };
    let (f, g) = phase.jet.weierstrass_divide(pv.s())?;
    let fact = Factorization { f, g, n };
    let sc = &geom.ctx;

    // ∂_sφ = −f on the diagonal, so f(x,x) = ω₀(∂_s); this is 1 only when
    // ∂_s is the Reeb direction, e.g. for perturbations free of z_{n+1}
    let fd = diagonal(n, &fact.f, sc)?;
    let ws = geom.omega0.component(&[2 * n]);
    ensure((&fd - &ws).is_zero(), "factor_f_diagonal", || format!("f(x,x) = {fd}, ω₀(∂_s) = {ws}"))?;
    if geom.orders.ds_coefficient.is_none() {
        ensure((&fd - &Jet::one(sc, fd.cap())).is_zero(), "factor_f_diagonal_one", || format!("f(x,x) = {fd}"))?;
    }
    let gd = diagonal(n, &fact.g, sc)?;
    let s = Jet::var(sc, gd.cap(), 2 * n);
    ensure((&gd - &s).is_zero(), "factor_g_diagonal", || format!("g(x′,x) = {gd}"))?;
    let one = Jet::one(fact.f.context(), fact.f.cap());
    let dev = &fact.f - &one;
    ensure(dev.valuation() >= 3, "factor_f_order", || format!("f − 1 = {dev}"))?;
    let t2 = t_squared_at_zero(&fact.big_phi(), &geom.reeb)?;
    ensure(t2.is_zero(), "factor_t_squared", || format!("T²Φ(0,0) = {t2}"))?;
    let rebuilt = &fact.f * &fact.big_phi();
    ensure(rebuilt.agrees_with(&phase.jet), "factor_reconstruction", || {
        format!("f·Φ − φ = {}", &rebuilt - &phase.jet)
    })?;
    Ok(fact)
}

/// Smallest `Im φ` over random real points in the ball of the given radius.
pub fn sample_min_imaginary<R: Rng + ?Sized>(phase: &PhaseJet, samples: usize, radius: f64, rng: &mut R) -> f64 {
    let ctx = phase.jet.context();
    let dim = ctx.real_coords().len();
    let poly = NumericPoly::from(&phase.jet);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x: Vec<f64> = loop {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
            if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                break p;
            }
        };
        let v = poly.eval(&ctx.complex_point(&x));
        worst = worst.min(v.im);
    }
    worst
}

/// Full phase stage: ambient phase, restriction and factorization.
pub fn compute_phase(surface: &ModelSurface, geom: &GeometryReport) -> Result<(PhaseJet, Factorization)> {
    let amb = ambient_phase(surface)?;
    // diagonal resummation: φ̊(z, z̄) = r/i
    let q = amb.context().clone();
    let m = surface.n() + 1;
    let mut back = Substitution::new(&q, surface.ambient());
    for j in 0..m {
        back = back.rename(j, j).rename(3 * m + j, m + j);
    }
    let resummed = amb.substitute(&back)?;
    let want = surface.r().scale(&gi(0, -1));
    ensure(resummed == want, "ambient_phase_diagonal", || format!("φ̊(z,z̄) = {resummed}"))?;
    let phase = restrict_phase(surface, &amb, geom)?;
    let fact = malgrange_factor(&phase, geom)?;
    Ok((phase, fact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ambient_context, compute_geometry, random_surface, RandomSurfaceConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn heisenberg_phase() {
        for n in 1..=2 {
            let s = ModelSurface::heisenberg(n, 6).unwrap();
            let g = compute_geometry(&s).unwrap();
            let amb = ambient_phase(&s).unwrap();
            let q = amb.context().clone();
            let m = n + 1;
            let mut want = &Jet::var(&q, 6, 3 * m + n) - &Jet::var(&q, 6, n);
            for j in 0..n {
                want = &want - &(&Jet::var(&q, 6, j) * &Jet::var(&q, 6, 3 * m + j)).scale(&gi(0, 1));
            }
            assert_eq!(amb, want);
            let (phase, fact) = compute_phase(&s, &g).unwrap();
            assert_eq!(phase.jet, model_phase(n, 6));
            assert_eq!(fact.f, Jet::one(phase.jet.context(), 5));
            let pv = PhaseVars { n };
            let expect_g = &model_phase(n, 6) + &Jet::var(phase.jet.context(), 6, pv.s());
            assert_eq!(fact.g, expect_g);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            assert!(sample_min_imaginary(&phase, 1000, 0.1, &mut rng) >= 0.0);
        }
    }

    #[test]
    fn quartic_phase_is_positive() {
        let ctx = ambient_context(1);
        let h = Jet::monomial(&ctx, 6, &[2, 0, 2, 0], gi(3, 0));
        let s = ModelSurface::with_perturbation(1, 6, &h).unwrap();
        let g = compute_geometry(&s).unwrap();
        let (phase, _) = compute_phase(&s, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_min_imaginary(&phase, 1000, 0.1, &mut rng) >= -1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn random_phase_identities(seed in any::<u64>(), n in 1usize..=2, transverse in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = RandomSurfaceConfig { transverse, ..RandomSurfaceConfig::new(n) };
            let s = random_surface(&cfg, &mut rng).unwrap();
            let g = compute_geometry(&s).unwrap();
            let (phase, fact) = compute_phase(&s, &g).unwrap();
            prop_assert!(fact.f.constant_term().is_one());
            // the positivity neighbourhood shrinks with the coefficients
            let radius = if transverse { 0.01 } else { 0.1 };
            prop_assert!(sample_min_imaginary(&phase, 500, radius, &mut rng) >= -1e-12);
        }
    }
}

