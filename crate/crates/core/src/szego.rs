//! The coefficient `A₁(0,0)` of the Szegő kernel expansion at the center of a
//! normal-form surface, computed three ways: stationary phase on the
//! reproducing identity `Π = Π²`, the closed formula in `λ` and `R`, and the
//! Tanaka–Webster scalar curvature.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{compute_geometry, ensure, GeometryReport, ModelSurface};
use crate::jets::{Ctx, Jet, Substitution, VariableContext};
use crate::phase::{compute_phase, Factorization, PhaseJet, PhaseVars};
use crate::scalars::{rat, GaussianRational, PiScaled};
use crate::stationary::{self, CriticalPointData, Prefactor, SPOperator};

fn gi(re: i64, im: i64) -> GaussianRational {
    GaussianRational::from_ints(re, im)
}

/// `(w′, w̄′, s_w, τ)` with `σ = 1 + τ`.
pub fn composition_context(n: usize) -> Ctx {
    let pairs: Vec<(String, String)> = (1..=n).map(|j| (format!("w{j}"), format!("wb{j}"))).collect();
    let p: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    VariableContext::builder().complex(&p).real("sw").real("tau").build()
}

#[derive(Clone, Copy, Debug)]
struct CompVars {
    n: usize,
}

impl CompVars {
    fn w(self, j: usize) -> usize {
        j
    }
    fn wb(self, j: usize) -> usize {
        self.n + j
    }
    fn sw(self) -> usize {
        2 * self.n
    }
    fn tau(self) -> usize {
        2 * self.n + 1
    }
}

/// `F(w, σ) = Φ(0, w) + σΦ(w, 0)` at `σ = 1 + τ`.
pub fn compose_phase(fact: &Factorization) -> Result<Jet> {
    let n = fact.n;
    let pv = PhaseVars { n };
    let cv = CompVars { n };
    let fc = composition_context(n);
    let pc = fact.g.context();
    let cap = fact.g.cap();

    let mut at_origin_x = Substitution::new(pc, &fc);
    let mut at_origin_y = Substitution::new(pc, &fc);
    for j in 0..n {
        at_origin_x = at_origin_x.rename(pv.w(j), cv.w(j)).rename(pv.wb(j), cv.wb(j));
        at_origin_y = at_origin_y.rename(pv.z(j), cv.w(j)).rename(pv.zb(j), cv.wb(j));
    }
    let at_origin_x = at_origin_x.rename(pv.t(), cv.sw());
    let g0w = fact.g.substitute(&at_origin_x)?;
    let gw0 = fact.g.substitute(&at_origin_y)?;

    let sw = Jet::var(&fc, cap, cv.sw());
    let sigma = &Jet::one(&fc, cap) + &Jet::var(&fc, cap, cv.tau());
    let f = &g0w + &(&sigma * &(&gw0 - &sw));
    if let Some((m, c)) = f.terms().next().filter(|(m, _)| m.degree() <= 1) {
        let v = m.exponents().iter().position(|&e| e > 0).map_or("1", |v| fc.name(v));
        return Err(Error::NotCritical { monomial: v.to_string(), coefficient: c.to_string() });
    }
    Ok(f)
}

/// `L = iΣ∂²/∂w_j∂w̄_j + ∂²/∂s_w∂τ`.
fn apply_l(n: usize, f: &Jet) -> Jet {
    let cv = CompVars { n };
    let mut out = f.partial(cv.sw()).partial(cv.tau());
    for j in 0..n {
        out = &out + &f.partial(cv.w(j)).partial(cv.wb(j)).scale(&gi(0, 1));
    }
    out
}

/// `F(0)=0`, `dF(0)=0`, `det F″ = (−1)^{n+1}2^{2n}`, prefactor `2π^{n+1}`, and
/// `½⟨F″⁻¹D,D⟩ = L` coefficientwise.
pub fn verify_critical_data(n: usize, f: &Jet) -> Result<CriticalPointData> {
    let data = stationary::hessian_at(f)?;
    let sign = if (n + 1).is_multiple_of(2) { 1 } else { -1 };
    let want_det = gi(sign * (1i64 << (2 * n)), 0);
    ensure(data.det == want_det, "hessian_det", || format!("det = {}, expected {want_det}", data.det))?;
    let want_pref = PiScaled::new(gi(2, 0), n as i32 + 1);
    ensure(data.prefactor.exact() == Some(&want_pref), "prefactor", || {
        format!("prefactor {:?}, expected {want_pref}", data.prefactor)
    })?;

    let cv = CompVars { n };
    let op = SPOperator::new(f.context(), &data);
    let nv = f.context().len();
    let half = rat(1, 2);
    for a in 0..nv {
        for b in 0..nv {
            let mut want = GaussianRational::zero();
            for j in 0..n {
                if (a, b) == (cv.w(j), cv.wb(j)) || (a, b) == (cv.wb(j), cv.w(j)) {
                    want = GaussianRational::new(rat(0, 1), half.clone());
                }
            }
            if (a, b) == (cv.sw(), cv.tau()) || (a, b) == (cv.tau(), cv.sw()) {
                want = GaussianRational::real(half.clone());
            }
            let got = op.coeff(a, b).scale(&half);
            ensure(got == want, "operator_l", || format!("½C[{a}][{b}] = {got}, expected {want}"))?;
        }
    }
    Ok(data)
}

/// `λ` in the composition variables.
fn lambda_in_w(n: usize, lambda: &Jet, fc: &Ctx) -> Result<Jet> {
    let cv = CompVars { n };
    let mut sub = Substitution::new(lambda.context(), fc);
    for j in 0..n {
        sub = sub.rename(j, cv.w(j)).rename(n + j, cv.wb(j));
    }
    lambda.substitute(&sub.rename(2 * n, cv.sw()))
}

/// `G = F − ½⟨F″x, x⟩` with its vanishing ledger checked.
pub fn g_remainder(n: usize, f: &Jet) -> Result<Jet> {
    let g = stationary::cubic_remainder(f)?;
    let cv = CompVars { n };
    for (m, c) in g.terms() {
        let tau = m.get(cv.tau());
        ensure(!(tau == 0 && m.degree() == 3), "g_pure_cubic", || format!("coefficient {c} on a τ-free cubic"))?;
        ensure(tau <= 1, "g_pure_sigma", || format!("coefficient {c} with τ^{tau}"))?;
    }
    Ok(g)
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryRoute {
    /// `P₀` and `P₁` for `u = λ(w)(1+τ)ⁿ`, before the factor `κ²`.
    pub p0: GaussianRational,
    pub p1: GaussianRational,
    pub b0: PiScaled,
    pub a1: PiScaled,
}

/// `A₀ = κ = ½π^{−(n+1)}`.
pub fn leading_coefficient(n: usize) -> PiScaled {
    PiScaled::new(GaussianRational::from_ratio(1, 2), -(n as i32 + 1))
}

pub fn route_stationary(n: usize, f: &Jet, data: &CriticalPointData, lambda: &Jet) -> Result<StationaryRoute> {
    let fc = f.context();
    let cv = CompVars { n };
    let g = g_remainder(n, f)?;
    let lam = lambda_in_w(n, lambda, fc)?;
    let sigma = &Jet::one(fc, f.cap()) + &Jet::var(fc, f.cap(), cv.tau());
    let u = &lam * &sigma.pow(n as u32);

    let mut p1 = GaussianRational::zero();
    for mu in 0..=2u32 {
        let needed = 2 * (mu + 1);
        let base = (&g.pow(mu) * &u).truncate(needed as i32);
        if base.cap() < needed as i32 {
            return Err(Error::TruncationUnsound { needed, available: base.cap().max(0) as u32 });
        }
        let val = (0..=mu).fold(base, |acc, _| apply_l(n, &acc)).constant_term();
        let fact = rat(1, [1, 2, 12][mu as usize]);
        p1 += &(&val * &gi(0, -1)).scale(&fact);
    }

    let generic = stationary::sp_terms(f, &u, 1)?;
    ensure(generic[1] == p1, "p1_generic", || format!("generic P₁ = {}, specialised {p1}", generic[1]))?;
    let p0 = generic[0].clone();
    ensure(p0 == lam.constant_term(), "p0", || format!("P₀ = {p0}"))?;

    let kappa = leading_coefficient(n);
    let pref = data.prefactor.exact().ok_or_else(|| Error::assertion("prefactor", "not exact"))?;
    let b0 = (pref * &(&kappa * &kappa)).scale(&p0);
    ensure(b0 == kappa, "b0", || format!("B₀ = {b0}, A₀ = {kappa}"))?;
    // A₁ = S + 2A₁ with S = 2π^{n+1}κ²P₁
    let s = (pref * &(&kappa * &kappa)).scale(&p1);
    Ok(StationaryRoute { p0, p1, b0, a1: -&s })
}

pub fn route_closed_form(geom: &GeometryReport) -> Result<PiScaled> {
    let bracket = &geom.lambda_lap0 + &geom.r_quartic_trace0;
    ensure(bracket.is_real(), "closed_form_real", || format!("bracket = {bracket}"))?;
    Ok(leading_coefficient(geom.n).scale(&-&bracket))
}

pub fn route_curvature(geom: &GeometryReport) -> PiScaled {
    leading_coefficient(geom.n).scale(&geom.r_scal0.scale(&rat(1, 2)))
}

#[derive(Clone, Debug, Serialize)]
pub struct SzegoReport {
    pub n: usize,
    pub a0: PiScaled,
    pub a1_route_sp: PiScaled,
    pub a1_route_closed: PiScaled,
    pub a1_route_curv: PiScaled,
    pub r_scal0: GaussianRational,
    pub hessian_det: GaussianRational,
    pub prefactor: PiScaled,
    pub p0: GaussianRational,
    pub p1: GaussianRational,
    pub b0: PiScaled,
    /// `(sp = closed, closed = curv, sp = curv)`.
    pub agreement: [bool; 3],
}

impl SzegoReport {
    pub fn all_agree(&self) -> bool {
        self.agreement.iter().all(|&b| b)
    }
}

/// Every intermediate object of the pipeline.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub geometry: GeometryReport,
    pub phase: PhaseJet,
    pub factorization: Factorization,
    pub composed: Jet,
    pub critical: CriticalPointData,
    pub report: SzegoReport,
}

pub fn run_pipeline(surface: &ModelSurface) -> Result<Pipeline> {
    let n = surface.n();
    let geometry = compute_geometry(surface).map_err(|e| e.in_stage("geometry"))?;
    let (phase, factorization) = compute_phase(surface, &geometry).map_err(|e| e.in_stage("phase"))?;
    let composed = compose_phase(&factorization).map_err(|e| e.in_stage("composition"))?;
    let critical = verify_critical_data(n, &composed).map_err(|e| e.in_stage("critical_point"))?;

    let (sp, (closed, curv)) = rayon::join(
        || route_stationary(n, &composed, &critical, &geometry.lambda),
        || (route_closed_form(&geometry), route_curvature(&geometry)),
    );
    let sp = sp.map_err(|e| e.in_stage("route_stationary"))?;
    let closed = closed.map_err(|e| e.in_stage("route_closed_form"))?;

    let prefactor = match &critical.prefactor {
        Prefactor::Exact(p) => p.clone(),
        Prefactor::Numeric { .. } => unreachable!("checked by verify_critical_data"),
    };
    let report = SzegoReport {
        n,
        a0: leading_coefficient(n),
        agreement: [sp.a1 == closed, closed == curv, sp.a1 == curv],
        a1_route_sp: sp.a1,
        a1_route_closed: closed,
        a1_route_curv: curv,
        r_scal0: geometry.r_scal0.clone(),
        hessian_det: critical.det.clone(),
        prefactor,
        p0: sp.p0,
        p1: sp.p1,
        b0: sp.b0,
    };
    Ok(Pipeline { geometry, phase, factorization, composed, critical, report })
}

pub fn full_report(surface: &ModelSurface) -> Result<SzegoReport> {
    run_pipeline(surface).map(|p| p.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ambient_context, random_surface, RandomSurfaceConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn heisenberg_report() {
        for n in 1..=2 {
            let s = ModelSurface::heisenberg(n, 6).unwrap();
            let p = run_pipeline(&s).unwrap();
            let r = &p.report;
            assert!(r.all_agree());
            assert!(r.a1_route_sp.is_zero());
            assert_eq!(r.a0, PiScaled::new(GaussianRational::from_ratio(1, 2), -(n as i32) - 1));
            assert_eq!(r.b0, r.a0);
            let sign = if n % 2 == 1 { 1 } else { -1 };
            assert_eq!(r.hessian_det, gi(sign * (1 << (2 * n)), 0));
            assert_eq!(r.prefactor, PiScaled::new(gi(2, 0), n as i32 + 1));
            // F = i Σ|w|² + τ-terms
            let cv = CompVars { n };
            let fc = p.composed.context();
            let mut e = vec![0u16; fc.len()];
            e[cv.w(0)] = 1;
            e[cv.wb(0)] = 1;
            assert_eq!(p.composed.coeff_of(&e), gi(0, 1));
        }
    }

    #[test]
    fn quartic_worked_example() {
        let ctx = ambient_context(1);
        for c in [1i64, -3, 5] {
            let h = Jet::monomial(&ctx, 6, &[2, 0, 2, 0], gi(c, 0));
            let s = ModelSurface::with_perturbation(1, 6, &h).unwrap();
            let r = full_report(&s).unwrap();
            let want = PiScaled::new(gi(-c, 0), -2);
            assert_eq!(r.a1_route_sp, want);
            assert_eq!(r.a1_route_closed, want);
            assert_eq!(r.a1_route_curv, want);
        }
    }

    #[test]
    fn g_ledger_heisenberg() {
        let s = ModelSurface::heisenberg(1, 6).unwrap();
        let p = run_pipeline(&s).unwrap();
        let g = g_remainder(1, &p.composed).unwrap();
        assert!(g.valuation() >= 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn three_routes_agree(seed in any::<u64>(), n in 1usize..=2, transverse in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = RandomSurfaceConfig { transverse, ..RandomSurfaceConfig::new(n) };
            let s = random_surface(&cfg, &mut rng).unwrap();
            let r = full_report(&s).unwrap();
            prop_assert!(r.all_agree(), "{:?}", r);
        }
    }
}
