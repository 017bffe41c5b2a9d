//! Randomized self-checks behind `szego check`.

use cr_szego::exterior::FormJet;
use cr_szego::geometry::{
    ambient_context, compute_geometry, random_hermitian, random_surface, ModelSurface, RandomSurfaceConfig,
};
use cr_szego::jets::{Jet, Substitution, VariableContext};
use cr_szego::oracle::{gamma_pv, quad_1d, sp_numeric_check, EULER_GAMMA};
use cr_szego::phase::{compute_phase, model_phase, sample_min_imaginary};
use cr_szego::scalars::{rat, GaussianRational, PiScaled};
use cr_szego::szego::full_report;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::spec::SurfaceSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Jets,
    Exterior,
    Geometry,
    Phase,
    Szego,
    Oracle,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [Suite::Jets, Suite::Exterior, Suite::Geometry, Suite::Phase, Suite::Szego, Suite::Oracle];

    fn expand(self) -> Vec<Suite> {
        match self {
            Suite::All => Self::EACH.to_vec(),
            s => vec![s],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Suite::Jets => "jets",
            Suite::Exterior => "exterior",
            Suite::Geometry => "geometry",
            Suite::Phase => "phase",
            Suite::Szego => "szego",
            Suite::Oracle => "oracle",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Failure {
    /// `None` for the fixed checks.
    pub sample: Option<usize>,
    pub seed: Option<u64>,
    pub detail: String,
    /// Input that reproduces the failure via `szego run`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproduction: Option<SurfaceSpec>,
}

#[derive(Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub samples: usize,
    pub failure: Option<Failure>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

type SampleResult = Result<(), (String, Option<SurfaceSpec>)>;

fn fail(detail: impl Into<String>) -> SampleResult {
    Err((detail.into(), None))
}

fn fail_on(surface: &ModelSurface, detail: impl Into<String>) -> SampleResult {
    Err((detail.into(), Some(SurfaceSpec::from_surface(surface))))
}

fn pick_surface(rng: &mut ChaCha8Rng) -> Result<ModelSurface, String> {
    let mut cfg = RandomSurfaceConfig::new(rng.gen_range(1..=2));
    cfg.transverse = rng.gen_bool(0.5);
    random_surface(&cfg, rng).map_err(|e| e.to_string())
}

/// Equal through the lower of the two caps.
fn agree(a: &Jet, b: &Jet) -> bool {
    a.first_difference(b).is_none()
}

fn jets_sample(rng: &mut ChaCha8Rng) -> SampleResult {
    let n = rng.gen_range(1..=2);
    let ctx = ambient_context(n);
    let vars: Vec<usize> = (0..ctx.len()).collect();
    let p = random_hermitian(&ctx, 6, &vars, &[1, 2, 3], 3, rng);
    let q = random_hermitian(&ctx, 6, &vars, &[1, 2], 3, rng);
    let i = rng.gen_range(0..ctx.len());
    let pq = &p * &q;
    if !agree(&pq.partial(i), &(&(&p.partial(i) * &q) + &(&p * &q.partial(i)))) {
        return fail(format!("Leibniz rule fails for ∂/∂{i}"));
    }
    if !agree(&p.conj().conj(), &p) || !agree(&p, &p.conj()) {
        return fail("Hermitian polynomial is not conjugation invariant");
    }
    let image = &Jet::var(&ctx, 6, 0) + &(&q * &Jet::var(&ctx, 6, 1));
    let sigma = Substitution::identity(&ctx).set(0, image);
    let lhs = pq.substitute(&sigma).map_err(|e| (e.to_string(), None))?;
    let a = p.substitute(&sigma).map_err(|e| (e.to_string(), None))?;
    let b = q.substitute(&sigma).map_err(|e| (e.to_string(), None))?;
    if !agree(&lhs, &(&a * &b)) {
        return fail("substitution is not multiplicative");
    }
    Ok(())
}

fn exterior_sample(rng: &mut ChaCha8Rng) -> SampleResult {
    let ctx = ambient_context(rng.gen_range(1..=2));
    let vars: Vec<usize> = (0..ctx.len()).collect();
    let comps: Vec<Jet> = (0..ctx.len()).map(|_| random_hermitian(&ctx, 6, &vars, &[0, 1, 2, 3], 2, rng)).collect();
    let alpha = FormJet::one_form(&ctx, 6, &comps);
    if !alpha.exterior_d().exterior_d().is_zero() {
        return fail("d² ≠ 0 on a 1-form");
    }
    let f = random_hermitian(&ctx, 6, &vars, &[1, 2], 2, rng);
    let df = FormJet::function(&f).exterior_d();
    let lhs = alpha.mul_jet(&f).exterior_d();
    let rhs = df
        .wedge(&alpha)
        .and_then(|w| w.try_add(&alpha.exterior_d().mul_jet(&f)))
        .map_err(|e| (e.to_string(), None))?;
    if !lhs.try_sub(&rhs).map_err(|e| (e.to_string(), None))?.is_zero() {
        return fail("d(fα) ≠ df∧α + f dα");
    }
    let re = alpha.try_add(&alpha.conj()).map_err(|e| (e.to_string(), None))?;
    if !re.is_real() {
        return fail("α + ᾱ is not real");
    }
    Ok(())
}

fn geometry_sample(rng: &mut ChaCha8Rng) -> SampleResult {
    let s = pick_surface(rng).map_err(|e| (e, None))?;
    let g = match compute_geometry(&s) {
        Ok(g) => g,
        Err(e) => return fail_on(&s, e.to_string()),
    };
    if !g.lambda.constant_term().is_one() {
        return fail_on(&s, "λ(0) ≠ 1");
    }
    if (0..g.ctx.len()).any(|i| !g.lambda.partial(i).constant_term().is_zero()) {
        return fail_on(&s, "dλ(0) ≠ 0");
    }
    if g.christoffel.iter().flatten().flatten().any(|c| !c.constant_term().is_zero()) {
        return fail_on(&s, "Γ(0) ≠ 0");
    }
    if g.ricci0 != g.ricci0_closed || g.r_scal0 != g.r_scal0_closed {
        return fail_on(&s, format!("curvature {} differs from closed form {}", g.r_scal0, g.r_scal0_closed));
    }
    if let Err(e) = g.orders.check(s.is_transverse_free()) {
        return fail_on(&s, e.to_string());
    }
    Ok(())
}

fn phase_sample(rng: &mut ChaCha8Rng) -> SampleResult {
    let s = pick_surface(rng).map_err(|e| (e, None))?;
    let checked = compute_geometry(&s).and_then(|g| compute_phase(&s, &g));
    let (phase, _) = match checked {
        Ok(p) => p,
        Err(e) => return fail_on(&s, e.to_string()),
    };
    let radius = if s.is_transverse_free() { 0.1 } else { 0.01 };
    let worst = sample_min_imaginary(&phase, 200, radius, rng);
    if worst < -1e-12 {
        return fail_on(&s, format!("Im φ = {worst:e} < 0"));
    }
    Ok(())
}

fn szego_sample(rng: &mut ChaCha8Rng) -> SampleResult {
    let s = pick_surface(rng).map_err(|e| (e, None))?;
    let r = match full_report(&s) {
        Ok(r) => r,
        Err(e) => return fail_on(&s, e.to_string()),
    };
    if !r.all_agree() {
        return fail_on(
            &s,
            format!("routes disagree: {} / {} / {}", r.a1_route_sp, r.a1_route_closed, r.a1_route_curv),
        );
    }
    let quarter = PiScaled::new(r.r_scal0.scale(&rat(1, 4)), -(r.n as i32) - 1);
    if r.a1_route_sp != quarter {
        return fail_on(&s, format!("A₁ = {} but R_scal/4 = {}", r.a1_route_sp, quarter));
    }
    if r.b0 != r.a0 {
        return fail_on(&s, "B₀ ≠ A₀");
    }
    Ok(())
}

fn oracle_sample(rng: &mut ChaCha8Rng) -> SampleResult {
    let m = rng.gen_range(0..=3);
    let x = Complex64::new(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0));
    let exact = gamma_pv(m, x).map_err(|e| (e.to_string(), None))?;
    let upper = 80.0 / x.re;
    let q = quad_1d(|t| t.powi(m) * (-x * t).exp(), 0.0, upper, 1e-13, 200_000).map_err(|e| (e.to_string(), None))?;
    let rel = (q.value - exact).norm() / exact.norm();
    if rel > 1e-10 {
        return fail(format!("Γ-integral m = {m}, x = {x}: relative error {rel:e}"));
    }
    Ok(())
}

fn lift<T>(r: cr_szego::Result<T>) -> Result<T, (String, Option<SurfaceSpec>)> {
    r.map_err(|e| (e.to_string(), None))
}

fn quartic_surface(c: i64) -> ModelSurface {
    let ctx = ambient_context(1);
    ModelSurface::with_perturbation(1, 6, &Jet::monomial(&ctx, 6, &[2, 0, 2, 0], GaussianRational::from_ints(c, 0)))
        .expect("quartic surface is in normal form")
}

fn jets_fixed() -> SampleResult {
    let ctx = ambient_context(1);
    let z = Jet::var(&ctx, 6, 0);
    let one = Jet::one(&ctx, 6);
    if &(&z + &one) * &(&z - &one) != &z.pow(2) - &one {
        return fail("(z + 1)(z − 1) ≠ z² − 1");
    }
    let inv = lift((&one - &z).reciprocal())?;
    let geometric = (0..=6).fold(Jet::zero(&ctx, 6), |acc, k| &acc + &z.pow(k));
    if !agree(&inv, &geometric) {
        return fail("1/(1 − z) is not the geometric series");
    }
    Ok(())
}

fn exterior_fixed() -> SampleResult {
    let ctx = ambient_context(1);
    let (z, zb) = (Jet::var(&ctx, 6, 0), Jet::var(&ctx, 6, 2));
    let form = FormJet::dvar(&ctx, 6, 2).mul_jet(&z);
    let want = lift(FormJet::dvar(&ctx, 6, 0).wedge(&FormJet::dvar(&ctx, 6, 2)))?;
    if !lift(form.exterior_d().try_sub(&want))?.is_zero() {
        return fail("d(z dz̄) ≠ dz ∧ dz̄");
    }
    if !FormJet::function(&(&z.pow(2) * &zb)).exterior_d().exterior_d().is_zero() {
        return fail("d² ≠ 0 on a function");
    }
    Ok(())
}

fn geometry_fixed() -> SampleResult {
    for n in 1..=3 {
        let s = lift(ModelSurface::heisenberg(n, 6))?;
        let g = lift(compute_geometry(&s))?;
        if !(&g.lambda - &Jet::one(&g.ctx, g.lambda.cap())).is_zero() || !g.r_scal0.is_zero() {
            return fail_on(&s, "Heisenberg: λ ≢ 1 or R_scal ≠ 0");
        }
    }
    let s = quartic_surface(1);
    let g = lift(compute_geometry(&s))?;
    if g.r_scal0 != GaussianRational::from_ints(-4, 0) {
        return fail_on(&s, format!("R_scal(0) = {} for |z₁|⁴, expected −4", g.r_scal0));
    }
    Ok(())
}

fn phase_fixed() -> SampleResult {
    for n in 1..=2 {
        let s = lift(ModelSurface::heisenberg(n, 6))?;
        let g = lift(compute_geometry(&s))?;
        let (phase, fact) = lift(compute_phase(&s, &g))?;
        if phase.jet != model_phase(n, 6) || !agree(&fact.f, &Jet::one(fact.f.context(), fact.f.cap())) {
            return fail_on(&s, "Heisenberg phase differs from the model phase");
        }
    }
    Ok(())
}

fn szego_fixed() -> SampleResult {
    let s = quartic_surface(1);
    let r = lift(full_report(&s))?;
    let want = PiScaled::new(GaussianRational::from_ints(-1, 0), -2);
    if !r.all_agree() || r.a1_route_sp != want {
        return fail_on(&s, format!("A₁ = {} for |z₁|⁴, expected {want}", r.a1_route_sp));
    }
    let h = lift(ModelSurface::heisenberg(2, 6))?;
    let r = lift(full_report(&h))?;
    if !r.all_agree() || !r.a1_route_sp.is_zero() {
        return fail_on(&h, "Heisenberg A₁ ≠ 0");
    }
    Ok(())
}

fn oracle_fixed() -> SampleResult {
    let half_i = GaussianRational::new(rat(0, 1), rat(1, 2));
    let line = VariableContext::builder().real("x").build();
    let x = Jet::var(&line, 8, 0);
    let f = &x.pow(2).scale(&half_i) + &x.pow(3).scale(&GaussianRational::new(rat(0, 1), rat(1, 10)));
    let u = &(&Jet::one(&line, 8) + &x.pow(2).scale_int(3)) + &x.pow(4);
    let plane = VariableContext::builder().real("x").real("y").build();
    let (px, py) = (Jet::var(&plane, 6, 0), Jet::var(&plane, 6, 1));
    let f2 = (&px.pow(2) + &py.pow(2)).scale(&half_i);
    let u2 = &(&Jet::one(&plane, 6) + &(&px * &py)) + &px.pow(2);
    for (f, u, big_n) in [(&f, &u, 2), (&f2, &u2, 1)] {
        let r = lift(sp_numeric_check(f, u, big_n, &[10.0, 20.0, 40.0, 80.0]))?;
        if r.order < f64::from(big_n) - 0.2 {
            return fail(format!("stationary phase decay order {:.2} < {}", r.order, f64::from(big_n) - 0.2));
        }
    }
    for x in [Complex64::new(1.0, 0.0), Complex64::new(2.0, 1.0)] {
        let want = -x.ln() - EULER_GAMMA;
        let got = lift(gamma_pv(-1, x))?;
        if (got - want).norm() > 1e-8 {
            return fail(format!("finite part at x = {x}: {got}, expected {want}"));
        }
    }
    Ok(())
}

fn run_fixed(suite: Suite) -> SampleResult {
    match suite {
        Suite::Jets => jets_fixed(),
        Suite::Exterior => exterior_fixed(),
        Suite::Geometry => geometry_fixed(),
        Suite::Phase => phase_fixed(),
        Suite::Szego => szego_fixed(),
        Suite::Oracle => oracle_fixed(),
        Suite::All => unreachable!("expanded before running"),
    }
}

fn run_sample(suite: Suite, seed: u64) -> SampleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        Suite::Jets => jets_sample(&mut rng),
        Suite::Exterior => exterior_sample(&mut rng),
        Suite::Geometry => geometry_sample(&mut rng),
        Suite::Phase => phase_sample(&mut rng),
        Suite::Szego => szego_sample(&mut rng),
        Suite::Oracle => oracle_sample(&mut rng),
        Suite::All => unreachable!("expanded before sampling"),
    }
}

/// Runs the fixed checks and `samples` random samples per suite, sample `i`
/// seeded with `seed + i`. Samples run in parallel; the first failure by
/// index is kept.
pub fn run_checks(suite: Suite, seed: u64, samples: usize) -> Vec<SuiteOutcome> {
    suite
        .expand()
        .into_iter()
        .map(|suite| {
            let fixed = run_fixed(suite).err().map(|(detail, reproduction)| Failure {
                sample: None,
                seed: None,
                detail,
                reproduction,
            });
            let failure = fixed.or_else(|| {
                let results: Vec<SampleResult> = (0..samples)
                    .into_par_iter()
                    .map(|i| run_sample(suite, seed.wrapping_add(i as u64)))
                    .collect();
                results.into_iter().enumerate().find_map(|(i, r)| {
                    r.err().map(|(detail, reproduction)| Failure {
                        sample: Some(i),
                        seed: Some(seed.wrapping_add(i as u64)),
                        detail,
                        reproduction,
                    })
                })
            });
            SuiteOutcome { suite, samples, failure }
        })
        .collect()
}

pub fn outcome_text(o: &SuiteOutcome) -> String {
    match &o.failure {
        None => format!("{}: PASS ({} samples)\n", o.suite.name(), o.samples),
        Some(f) => {
            let at = match (f.sample, f.seed) {
                (Some(i), Some(seed)) => format!("sample {i} (seed {seed})"),
                _ => "fixed check".to_string(),
            };
            let mut s = format!("{}: FAIL at {at}: {}\n", o.suite.name(), f.detail);
            if let Some(spec) = &f.reproduction {
                s += "reproduce with `szego run` on:\n";
                s += &spec.to_json();
                s.push('\n');
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_samples() {
        for o in run_checks(Suite::All, 7, 3) {
            assert!(o.passed(), "{}", outcome_text(&o));
        }
    }

    #[test]
    fn zero_samples_is_vacuous() {
        let out = run_checks(Suite::Szego, 0, 0);
        assert_eq!(out.len(), 1);
        assert!(out[0].passed());
    }

    #[test]
    fn deterministic() {
        let a = run_checks(Suite::Oracle, 11, 4);
        let b = run_checks(Suite::Oracle, 11, 4);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
