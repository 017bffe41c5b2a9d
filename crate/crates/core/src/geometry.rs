//! Pseudohermitian geometry of a normal-form hypersurface at its center.

// index loops mirror the tensor formulas
#![allow(clippy::needless_range_loop)]

use rand::Rng;

use crate::error::{Error, NormalFormViolation, Result};
use crate::exterior::{FormJet, VectorFieldJet};
use crate::jets::{linear_solve, Ctx, Jet, MultiIndex, Substitution, VariableContext};
use crate::matrix::Matrix;
use crate::scalars::{rat, GaussianRational};

fn gi(re: i64, im: i64) -> GaussianRational {
    GaussianRational::from_ints(re, im)
}

fn half_i() -> GaussianRational {
    GaussianRational::new(rat(0, 1), rat(1, 2))
}

pub(crate) fn ensure(ok: bool, check: &str, detail: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::assertion(check, detail()))
    }
}

fn complex_names(prefix: &str, bar: &str, n: usize) -> Vec<(String, String)> {
    (1..=n).map(|j| (format!("{prefix}{j}"), format!("{bar}{j}"))).collect()
}

fn build(pairs: &[(String, String)], reals: &[&str]) -> Ctx {
    let p: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut b = VariableContext::builder().complex(&p);
    for r in reals {
        b = b.real(r);
    }
    b.build()
}

/// `(z₁…z_{n+1}, z̄₁…z̄_{n+1})`.
pub fn ambient_context(n: usize) -> Ctx {
    build(&complex_names("z", "zb", n + 1), &[])
}

/// `(z₁…z_n, z̄₁…z̄_n, s)` with `s = x_{2n+1}`.
pub fn surface_context(n: usize) -> Ctx {
    build(&complex_names("z", "zb", n), &["s"])
}

fn solve_context(n: usize) -> Ctx {
    build(&complex_names("z", "zb", n), &["s", "y"])
}

/// `−i z_{n+1} + i z̄_{n+1} + Σ z_j z̄_j`, i.e. `2 Im z_{n+1} + |z′|²`.
pub fn model_defining_function(ctx: &Ctx, n: usize, cap: i32) -> Jet {
    let m = 2 * (n + 1);
    let mut e = vec![0u16; m];
    e[n] = 1;
    let mut r = Jet::monomial(ctx, cap, &e, gi(0, -1));
    e[n] = 0;
    e[2 * n + 1] = 1;
    r = &r + &Jet::monomial(ctx, cap, &e, gi(0, 1));
    for j in 0..n {
        let mut e = vec![0u16; m];
        e[j] = 1;
        e[n + 1 + j] = 1;
        r = &r + &Jet::monomial(ctx, cap, &e, gi(1, 0));
    }
    r
}

fn monomial_label(ctx: &Ctx, m: &MultiIndex) -> String {
    let parts: Vec<String> = m
        .exponents()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| if e == 1 { ctx.name(i).to_string() } else { format!("{}^{e}", ctx.name(i)) })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("·")
    }
}

/// A validated defining function in normal form.
#[derive(Clone, Debug)]
pub struct ModelSurface {
    n: usize,
    cap: i32,
    ambient: Ctx,
    r: Jet,
}

impl ModelSurface {
    pub const MIN_CAP: i32 = 6;

    pub fn validate_normal_form(n: usize, cap: i32, r: Jet) -> Result<Self> {
        let nf = |v| Error::NormalForm(v);
        if n == 0 {
            return Err(nf(NormalFormViolation::BadDimension { n }));
        }
        if cap < Self::MIN_CAP {
            return Err(nf(NormalFormViolation::CapTooSmall { cap }));
        }
        let ambient = r.context().clone();
        if ambient.len() != 2 * (n + 1) {
            return Err(Error::ContextMismatch);
        }
        let r = r.assume_exact_to(cap);
        let conj = r.conj();
        if let Some((m, _)) = r.terms().find(|(m, c)| conj.coeff(m) != **c) {
            return Err(nf(NormalFormViolation::NonReal {
                monomial: monomial_label(&ambient, m),
            }));
        }
        let diff = &r - &model_defining_function(&ambient, n, cap);
        for (m, _) in diff.terms() {
            let monomial = monomial_label(&ambient, m);
            match m.degree() {
                0..=2 => return Err(nf(NormalFormViolation::WrongQuadraticPart { monomial })),
                3 => return Err(nf(NormalFormViolation::LowDegreePerturbation { monomial })),
                _ => {}
            }
        }
        Ok(Self { n, cap, ambient, r })
    }

    pub fn heisenberg(n: usize, cap: i32) -> Result<Self> {
        let ctx = ambient_context(n);
        Self::validate_normal_form(n, cap, model_defining_function(&ctx, n, cap))
    }

    /// Model plus a perturbation given in [`ambient_context`].
    pub fn with_perturbation(n: usize, cap: i32, h: &Jet) -> Result<Self> {
        let ctx = ambient_context(n);
        let h = Jet::from_literal(&ctx, &h.to_literal())?.assume_exact_to(cap);
        Self::validate_normal_form(n, cap, &model_defining_function(&ctx, n, cap) + &h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cap(&self) -> i32 {
        self.cap
    }

    pub fn ambient(&self) -> &Ctx {
        &self.ambient
    }

    pub fn r(&self) -> &Jet {
        &self.r
    }

    pub fn perturbation(&self) -> Jet {
        &self.r - &model_defining_function(&self.ambient, self.n, self.cap)
    }

    /// Same surface with a different working degree cap.
    pub fn with_cap(&self, cap: i32) -> Result<Self> {
        Self::validate_normal_form(self.n, cap, self.r.assume_exact_to(cap))
    }

    /// Whether the perturbation is independent of `z_{n+1}` and `z̄_{n+1}`.
    pub fn is_transverse_free(&self) -> bool {
        let (a, b) = (self.n, 2 * self.n + 1);
        self.perturbation().terms().all(|(m, _)| m.get(a) == 0 && m.get(b) == 0)
    }
}

/// How a random quartic perturbation is drawn.
#[derive(Clone, Copy, Debug)]
pub struct RandomSurfaceConfig {
    pub n: usize,
    pub cap: i32,
    /// Number of monomials drawn before Hermitian closure.
    pub terms: usize,
    /// Allow the perturbation to involve `z_{n+1}, z̄_{n+1}`.
    pub transverse: bool,
    /// Also add random terms of degree 5 and 6.
    pub higher_order: bool,
}

impl RandomSurfaceConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cap: ModelSurface::MIN_CAP,
            terms: 3,
            transverse: false,
            higher_order: false,
        }
    }
}

fn random_coeff<R: Rng + ?Sized>(rng: &mut R) -> (i64, i64) {
    (rng.gen_range(-9..=9), rng.gen_range(1..=9))
}

/// Random Hermitian polynomial with monomials of the given degrees.
pub fn random_hermitian<R: Rng + ?Sized>(
    ctx: &Ctx,
    cap: i32,
    vars: &[usize],
    degrees: &[u32],
    terms: usize,
    rng: &mut R,
) -> Jet {
    let mut h = Jet::zero(ctx, cap);
    for _ in 0..terms {
        let d = degrees[rng.gen_range(0..degrees.len())];
        let mut e = vec![0u16; ctx.len()];
        for _ in 0..d {
            e[vars[rng.gen_range(0..vars.len())]] += 1;
        }
        let (a, b) = random_coeff(rng);
        let (c, d) = random_coeff(rng);
        let coeff = GaussianRational::new(rat(a, b), rat(c, d));
        h = &h + &Jet::monomial(ctx, cap, &e, coeff);
    }
    &h + &h.conj()
}

pub fn random_surface<R: Rng + ?Sized>(cfg: &RandomSurfaceConfig, rng: &mut R) -> Result<ModelSurface> {
    let n = cfg.n;
    let ctx = ambient_context(n);
    let vars: Vec<usize> = (0..2 * (n + 1))
        .filter(|&i| cfg.transverse || (i != n && i != 2 * n + 1))
        .collect();
    let mut h = random_hermitian(&ctx, cfg.cap, &vars, &[4], cfg.terms, rng);
    // one tangential (2,2) term so that the curvature is generically nonzero
    let mut e = vec![0u16; ctx.len()];
    for k in 0..4 {
        let j = rng.gen_range(0..n);
        e[if k < 2 { j } else { n + 1 + j }] += 1;
    }
    let (a, b) = random_coeff(rng);
    let a = if a == 0 { 1 } else { a };
    let c = Jet::monomial(&ctx, cfg.cap, &e, GaussianRational::new(rat(a, b), rat(0, 1)));
    h = &h + &(&c + &c.conj()).scale(&GaussianRational::from_ratio(1, 2));
    if cfg.higher_order {
        h = &h + &random_hermitian(&ctx, cfg.cap, &vars, &[5, 6], cfg.terms, rng);
    }
    ModelSurface::with_perturbation(n, cfg.cap, &h)
}

/// Lowest degree at which two jets differ (`None`: equal through the cap).
fn disagreement(a: &Jet, b: &Jet) -> Option<u32> {
    a.first_difference(b)
}

fn form_disagreement(a: &FormJet, b: &FormJet) -> Option<u32> {
    let d = a.try_sub(b).ok()?;
    d.components().filter_map(|(_, f)| f.terms().next().map(|(m, _)| m.degree())).min()
}

/// Orders to which the standard normal-form approximations hold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormulaOrders {
    pub cap: i32,
    /// ω₀ against `ds − iΣ(R_{z_j}dz_j − R_{z̄_j}dz̄_j)`.
    pub omega0: Option<u32>,
    /// dω₀ against `2iΣ R_{z_j z̄_k} dz_j∧dz̄_k`.
    pub d_omega0: Option<u32>,
    /// `L_j` against `∂_{z_j} + iR_{z_j}∂_s`.
    pub frame: Option<u32>,
    /// ds-coefficient of ω₀ against 1.
    pub ds_coefficient: Option<u32>,
}

impl FormulaOrders {
    fn holds_to(order: Option<u32>, d: u32) -> bool {
        order.is_none_or(|o| o >= d)
    }

    /// The displayed formulas hold modulo these degrees for every normal form;
    /// with a transverse-free perturbation they hold to the expected orders.
    pub fn check(&self, transverse_free: bool) -> Result<()> {
        let (w, dw, fr) = if transverse_free { (4, 3, 4) } else { (3, 2, 4) };
        ensure(Self::holds_to(self.omega0, w), "omega0_formula", || {
            format!("ω₀ formula fails at degree {:?}, expected ≥ {w}", self.omega0)
        })?;
        ensure(Self::holds_to(self.d_omega0, dw), "d_omega0_formula", || {
            format!("dω₀ formula fails at degree {:?}, expected ≥ {dw}", self.d_omega0)
        })?;
        ensure(Self::holds_to(self.frame, fr), "frame_formula", || {
            format!("frame formula fails at degree {:?}, expected ≥ {fr}", self.frame)
        })?;
        if transverse_free {
            ensure(self.ds_coefficient.is_none(), "omega0_ds_coefficient", || {
                format!("ds-coefficient differs from 1 at degree {:?}", self.ds_coefficient)
            })?;
        }
        Ok(())
    }
}

/// Geometric data of a normal-form surface in graph coordinates `(z′, z̄′, s)`.
#[derive(Clone, Debug)]
pub struct GeometryReport {
    pub n: usize,
    pub cap: i32,
    pub ctx: Ctx,
    /// Graph function: the surface is `x_{2n+2} = R(x₁…x_{2n+1})`.
    pub graph_r: Jet,
    pub omega0: FormJet,
    pub d_omega0: FormJet,
    pub reeb: VectorFieldJet,
    pub frame: Vec<VectorFieldJet>,
    pub lambda: Jet,
    /// `g_{αβ̄} = i·dω₀(L_α, L̄_β)`.
    pub levi_g: Vec<Vec<Jet>>,
    /// `christoffel[i][j][l] = Γ^l_{ij}` with `∇_{L_i}L_j = Γ^l_{ij}L_l`.
    pub christoffel: Vec<Vec<Vec<Jet>>>,
    pub ricci0: Matrix,
    pub ricci0_closed: Matrix,
    pub r_scal0: GaussianRational,
    pub r_scal0_closed: GaussianRational,
    /// `Σ_l ∂²λ/∂z_l∂z̄_l(0)`.
    pub lambda_lap0: GaussianRational,
    /// `Σ_{j,k} ∂⁴R/∂z_j∂z̄_j∂z_k∂z̄_k(0)`.
    pub r_quartic_trace0: GaussianRational,
    pub orders: FormulaOrders,
}

/// Substitution `z_{n+1} ↦ s + iR`, `z̄_{n+1} ↦ s − iR` from ambient to
/// graph coordinates.
pub fn graph_map(surface: &ModelSurface, graph_r: &Jet, ctx: &Ctx) -> Substitution {
    let n = surface.n;
    let s = Jet::var(ctx, graph_r.cap(), 2 * n);
    let ir = graph_r.scale(&gi(0, 1));
    let mut sub = Substitution::new(surface.ambient(), ctx);
    for j in 0..n {
        sub = sub.rename(j, j).rename(n + 1 + j, n + j);
    }
    sub.set(n, &s + &ir).set(2 * n + 1, &s - &ir)
}

pub fn solve_graph(surface: &ModelSurface) -> Result<Jet> {
    let n = surface.n;
    let cap = surface.cap;
    let yc = solve_context(n);
    let s = Jet::var(&yc, cap, 2 * n);
    let iy = Jet::var(&yc, cap, 2 * n + 1).scale(&gi(0, 1));
    let mut sub = Substitution::new(surface.ambient(), &yc);
    for j in 0..n {
        sub = sub.rename(j, j).rename(n + 1 + j, n + j);
    }
    let sub = sub.set(n, &s + &iy).set(2 * n + 1, &s - &iy);
    let r_y = surface.r.substitute(&sub)?;
    let sol = r_y.implicit_solve(2 * n + 1)?;
    let sc = surface_context(n);
    let graph_r = sol.substitute(&Substitution::by_name(&yc, &sc))?;
    // back-substitution residual
    let back = r_y.substitute(&Substitution::identity(&yc).set(2 * n + 1, sol))?;
    ensure(back.is_zero(), "graph_residual", || format!("r(x, R(x)) = {back}"))?;
    Ok(graph_r)
}

/// ω₀: pullback of `(i/2)(∂r − ∂̄r)` to the graph.
pub fn contact_form(surface: &ModelSurface, graph_r: &Jet) -> Result<FormJet> {
    let a = surface.ambient();
    let m = a.len();
    let half = m / 2;
    let cap = surface.cap;
    let comps: Vec<Jet> = (0..m)
        .map(|v| {
            let d = surface.r.partial(v);
            if v < half {
                d.scale(&half_i())
            } else {
                d.scale(&-half_i())
            }
        })
        .collect();
    let form = FormJet::one_form(a, cap - 1, &comps);
    form.pullback(&graph_map(surface, graph_r, &surface_context(surface.n)))
}

/// `ω(∂_v, ∂_u)` for a 2-form.
fn two_form_entry(w: &FormJet, v: usize, u: usize) -> Jet {
    use std::cmp::Ordering::*;
    match v.cmp(&u) {
        Less => w.component(&[v, u]),
        Greater => -&w.component(&[u, v]),
        Equal => Jet::zero(w.context(), w.cap()),
    }
}

/// Reeb field: `ω₀(T) = −1`, `dω₀(T, ·) = 0`.
pub fn reeb_field(omega0: &FormJet) -> Result<VectorFieldJet> {
    let ctx = omega0.context().clone();
    let m = ctx.len();
    let d_omega = omega0.exterior_d();
    let cap = d_omega.cap();
    let mut rows = vec![(0..m).map(|v| omega0.component(&[v])).collect::<Vec<_>>()];
    let mut rhs = vec![Jet::constant(&ctx, cap, gi(-1, 0))];
    for u in 0..m - 1 {
        rows.push((0..m).map(|v| two_form_entry(&d_omega, v, u)).collect());
        rhs.push(Jet::zero(&ctx, cap));
    }
    let t = linear_solve(&rows, &rhs).map_err(|e| match e {
        Error::DegenerateFrame => Error::assertion("reeb_field", "contact structure is degenerate at 0"),
        e => e,
    })?;
    let t = VectorFieldJet::new(&ctx, t);
    let w_t = omega0.pair(&[&t])?;
    ensure(
        (&w_t + &Jet::one(&ctx, w_t.cap())).is_zero(),
        "reeb_normalisation",
        || format!("ω₀(T) + 1 = {}", &w_t + &Jet::one(&ctx, w_t.cap())),
    )?;
    let contraction = d_omega.interior(&t)?;
    ensure(contraction.is_zero(), "reeb_kernel", || format!("dω₀(T, ·) = {contraction:?}"))?;
    Ok(t)
}

/// `L_j = ∂_{z_j} − (r_{z_j} / 2r_{z_{n+1}})|_graph ∂_s`.
pub fn cr_frame(surface: &ModelSurface, graph_r: &Jet) -> Result<Vec<VectorFieldJet>> {
    let n = surface.n;
    let sc = surface_context(n);
    let gm = graph_map(surface, graph_r, &sc);
    let r_t = surface.r.partial(n);
    let inv_t = r_t.reciprocal().map_err(|_| {
        Error::assertion("cr_frame", "∂r/∂z_{n+1} vanishes at 0")
    })?;
    let inv_t_graph = r_t.substitute(&gm)?.reciprocal()?;
    let mut frame = Vec::with_capacity(n);
    for j in 0..n {
        let r_j = surface.r.partial(j);
        // ambient tangency check
        let ambient_l = &r_j - &(&(&r_j * &inv_t) * &r_t);
        ensure(ambient_l.is_zero(), "frame_tangency", || format!("L_{} r = {ambient_l}", j + 1))?;
        let coeff = (&r_j.substitute(&gm)? * &inv_t_graph).scale(&GaussianRational::from_ratio(-1, 2));
        let cap = coeff.cap();
        let mut comps = vec![Jet::zero(&sc, cap); sc.len()];
        comps[j] = Jet::one(&sc, cap);
        comps[2 * n] = coeff;
        frame.push(VectorFieldJet::new(&sc, comps));
    }
    // L_j annihilates the pulled-back antiholomorphic coordinate z̄_{n+1}
    let zb_last = gm.image(2 * n + 1, graph_r.cap());
    for (j, l) in frame.iter().enumerate() {
        let v = l.apply(&zb_last);
        ensure(v.is_zero(), "frame_type", || format!("L_{} z̄_(n+1) = {v}", j + 1))?;
    }
    Ok(frame)
}

pub fn volume_density(omega0: &FormJet) -> Result<Jet> {
    let ctx = omega0.context();
    let n = (ctx.len() - 1) / 2;
    let half = omega0.exterior_d().scale(&GaussianRational::from_ratio(-1, 2));
    let mut vol = FormJet::function(&Jet::one(ctx, omega0.cap()));
    let mut fact = 1i64;
    for k in 1..=n {
        vol = vol.wedge(&half)?;
        fact *= k as i64;
    }
    let vol = vol.wedge(omega0)?.scale(&GaussianRational::from_ratio(1, fact));
    vol.top_density()
}

/// Coordinates of `v` in the frame `(L₁…L_n, L̄₁…L̄_n, T)`.
fn frame_coordinates(basis: &[VectorFieldJet], v: &VectorFieldJet) -> Result<Vec<Jet>> {
    let m = basis.len();
    let rows: Vec<Vec<Jet>> = (0..m)
        .map(|r| basis.iter().map(|b| b.component(r).clone()).collect())
        .collect();
    linear_solve(&rows, v.components())
}

fn full_basis(frame: &[VectorFieldJet], reeb: &VectorFieldJet) -> Vec<VectorFieldJet> {
    let mut b: Vec<VectorFieldJet> = frame.to_vec();
    b.extend(frame.iter().map(VectorFieldJet::conj));
    b.push(reeb.clone());
    b
}

/// Tanaka–Webster Christoffel symbols from
/// `dω₀(∇_{L_i}L_j, L̄_k) = L_i(dω₀(L_j, L̄_k)) − dω₀(L_j, [L_i, L̄_k]_{T^{0,1}})`.
pub fn tw_connection(
    d_omega0: &FormJet,
    frame: &[VectorFieldJet],
    reeb: &VectorFieldJet,
) -> Result<Vec<Vec<Vec<Jet>>>> {
    let n = frame.len();
    let bars: Vec<VectorFieldJet> = frame.iter().map(VectorFieldJet::conj).collect();
    let basis = full_basis(frame, reeb);
    // G_{l k̄} = dω₀(L_l, L̄_k)
    let gmat: Vec<Vec<Jet>> = (0..n)
        .map(|l| (0..n).map(|k| d_omega0.pair(&[&frame[l], &bars[k]])).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    // b[i][k] = (0,1) coordinates of [L_i, L̄_k]
    let mut proj01 = vec![Vec::with_capacity(n); n];
    for i in 0..n {
        for k in 0..n {
            let br = frame[i].lie_bracket(&bars[k])?;
            let c = frame_coordinates(&basis, &br)?;
            proj01[i].push(c[n..2 * n].to_vec());
        }
    }
    let system: Vec<Vec<Jet>> = (0..n).map(|k| (0..n).map(|l| gmat[l][k].clone()).collect()).collect();
    let mut gamma = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let rhs: Vec<Jet> = (0..n)
                .map(|k| {
                    let mut t = frame[i].apply(&gmat[j][k]);
                    for (m, b) in proj01[i][k].iter().enumerate() {
                        t = &t - &(b * &gmat[j][m]);
                    }
                    t
                })
                .collect();
            gamma[i][j] = linear_solve(&system, &rhs).map_err(|e| match e {
                Error::DegenerateFrame => Error::assertion("tw_connection", "Levi matrix is degenerate at 0"),
                e => e,
            })?;
        }
    }
    Ok(gamma)
}

fn zbar_derivative0(f: &Jet, n: usize, l: usize) -> GaussianRational {
    f.partial(n + l).constant_term()
}

/// `∂⁴R/∂z_a∂z_b∂z̄_c∂z̄_d(0)` in graph coordinates.
pub fn r4(graph_r: &Jet, n: usize, a: usize, b: usize, c: usize, d: usize) -> GaussianRational {
    let mut e = vec![0u16; 2 * n + 1];
    e[a] += 1;
    e[b] += 1;
    e[n + c] += 1;
    e[n + d] += 1;
    graph_r.derive(&MultiIndex::from_slice(&e)).constant_term()
}

/// Ricci tensor and scalar curvature at 0, from the connection and in closed form.
pub fn tw_curvature(
    gamma: &[Vec<Vec<Jet>>],
    levi_g: &[Vec<Jet>],
    graph_r: &Jet,
) -> Result<(Matrix, GaussianRational, Matrix, GaussianRational)> {
    let n = gamma.len();
    let mut ricci = vec![vec![GaussianRational::zero(); n]; n];
    let mut closed = vec![vec![GaussianRational::zero(); n]; n];
    for a in 0..n {
        for l in 0..n {
            for k in 0..n {
                ricci[a][l] -= &zbar_derivative0(&gamma[k][a][k], n, l);
                closed[a][l] += &r4(graph_r, n, k, a, k, l).scale(&rat(2, 1));
            }
        }
    }
    let g0: Matrix = levi_g
        .iter()
        .map(|row| row.iter().map(Jet::constant_term).collect())
        .collect();
    let ginv = crate::matrix::inverse(&g0)?;
    let trace = |m: &Matrix| {
        let mut s = GaussianRational::zero();
        for a in 0..n {
            for l in 0..n {
                s += &(&ginv[l][a] * &m[a][l]);
            }
        }
        s
    };
    let (rs, rs_closed) = (trace(&ricci), trace(&closed));
    Ok((ricci, rs, closed, rs_closed))
}

pub fn compute_geometry(surface: &ModelSurface) -> Result<GeometryReport> {
    let n = surface.n;
    let ctx = surface_context(n);
    let graph_r = solve_graph(surface)?;
    for j in 0..n {
        for k in 0..n {
            let mut e = vec![0u16; 2 * n + 1];
            e[j] += 1;
            e[n + k] += 1;
            let v = graph_r.derive(&MultiIndex::from_slice(&e)).constant_term();
            let want = if j == k { GaussianRational::from_ratio(-1, 2) } else { GaussianRational::zero() };
            ensure(v == want, "graph_hessian", || format!("∂²R/∂z{}∂z̄{}(0) = {v}", j + 1, k + 1))?;
        }
    }

    let omega0 = contact_form(surface, &graph_r)?;
    ensure(omega0.is_real(), "omega0_real", || "ω₀ is not real".into())?;
    let d_omega0 = omega0.exterior_d();
    let reeb = reeb_field(&omega0)?;
    let frame = cr_frame(surface, &graph_r)?;
    for (j, l) in frame.iter().enumerate() {
        for (tag, f) in [("L", l.clone()), ("L̄", l.conj())] {
            let v = omega0.pair(&[&f])?;
            ensure(v.is_zero(), "omega0_annihilates_frame", || format!("ω₀({tag}_{}) = {v}", j + 1))?;
        }
    }
    // T = −∂_s + O(|x|²)
    for (v, c) in reeb.components().iter().enumerate() {
        let want = if v == 2 * n { gi(-1, 0) } else { GaussianRational::zero() };
        let dev = c - &Jet::constant(&ctx, c.cap(), want);
        ensure(dev.valuation() >= 2, "reeb_leading_order", || format!("T^{} = {c}", ctx.name(v)))?;
    }
    // involutivity of T^{1,0}
    let basis = full_basis(&frame, &reeb);
    for i in 0..n {
        for j in i + 1..n {
            let br = frame[i].lie_bracket(&frame[j])?;
            let c = frame_coordinates(&basis, &br)?;
            ensure(c[n..].iter().all(Jet::is_zero), "frame_involutive", || {
                format!("[L_{}, L_{}] leaves T^(1,0)", i + 1, j + 1)
            })?;
        }
    }

    let lambda = volume_density(&omega0)?;
    ensure(lambda.constant_term().is_one(), "lambda_at_0", || format!("λ(0) = {}", lambda.constant_term()))?;
    ensure(lambda.homogeneous_part(1).is_zero(), "lambda_gradient", || {
        format!("dλ(0) ≠ 0: {}", lambda.homogeneous_part(1))
    })?;

    let mut levi_g = Vec::with_capacity(n);
    for a in 0..n {
        let mut row = Vec::with_capacity(n);
        for b in 0..n {
            row.push(d_omega0.pair(&[&frame[a], &frame[b].conj()])?.scale(&gi(0, 1)));
        }
        levi_g.push(row);
    }
    for (a, row) in levi_g.iter().enumerate() {
        for (b, g) in row.iter().enumerate() {
            let want = if a == b { GaussianRational::one() } else { GaussianRational::zero() };
            ensure(g.constant_term() == want, "levi_metric_at_0", || {
                format!("g_({},{})(0) = {}", a + 1, b + 1, g.constant_term())
            })?;
        }
    }

    let christoffel = tw_connection(&d_omega0, &frame, &reeb)?;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let gm = &christoffel[i][j][k];
                ensure(gm.constant_term().is_zero(), "christoffel_at_0", || {
                    format!("Γ^{}_({},{})(0) = {}", k + 1, i + 1, j + 1, gm.constant_term())
                })?;
                for h in 0..n {
                    let lhs = zbar_derivative0(gm, n, h);
                    let rhs = r4(&graph_r, n, i, j, k, h).scale(&rat(-2, 1));
                    ensure(lhs == rhs, "christoffel_derivative", || {
                        format!("∂Γ^{}_({},{})/∂z̄{}(0) = {lhs}, closed form {rhs}", k + 1, i + 1, j + 1, h + 1)
                    })?;
                }
            }
        }
    }
    let (ricci0, r_scal0, ricci0_closed, r_scal0_closed) = tw_curvature(&christoffel, &levi_g, &graph_r)?;
    ensure(ricci0 == ricci0_closed, "ricci_closed_form", || {
        format!("bracket route {ricci0:?} vs closed form {ricci0_closed:?}")
    })?;
    for a in 0..n {
        for l in 0..n {
            ensure(ricci0[a][l] == ricci0[l][a].conj(), "ricci_hermitian", || format!("{ricci0:?}"))?;
        }
    }

    let mut lambda_lap0 = GaussianRational::zero();
    let mut r_quartic_trace0 = GaussianRational::zero();
    for l in 0..n {
        lambda_lap0 += &lambda.partial(l).partial(n + l).constant_term();
        for k in 0..n {
            r_quartic_trace0 += &r4(&graph_r, n, l, k, l, k);
        }
    }
    ensure(
        lambda_lap0 == r_quartic_trace0.scale(&rat(-2, 1)),
        "lambda_laplacian",
        || format!("Σ∂²λ(0) = {lambda_lap0}, −2Σ∂⁴R(0) = {}", r_quartic_trace0.scale(&rat(-2, 1))),
    )?;

    let orders = formula_orders(surface, &graph_r, &omega0, &d_omega0, &frame);
    orders.check(surface.is_transverse_free())?;

    Ok(GeometryReport {
        n,
        cap: surface.cap,
        ctx,
        graph_r,
        omega0,
        d_omega0,
        reeb,
        frame,
        lambda,
        levi_g,
        christoffel,
        ricci0,
        ricci0_closed,
        r_scal0,
        r_scal0_closed,
        lambda_lap0,
        r_quartic_trace0,
        orders,
    })
}

fn formula_orders(
    surface: &ModelSurface,
    graph_r: &Jet,
    omega0: &FormJet,
    d_omega0: &FormJet,
    frame: &[VectorFieldJet],
) -> FormulaOrders {
    let n = surface.n;
    let ctx = omega0.context();
    let cap = graph_r.cap();
    let mut display = FormJet::dvar(ctx, cap - 1, 2 * n);
    for j in 0..n {
        let rz = graph_r.partial(j).scale(&gi(0, -1));
        let rzb = graph_r.partial(n + j).scale(&gi(0, 1));
        display = display
            .try_add(&FormJet::zero(ctx, cap - 1, 1).with_component(vec![j], rz).with_component(vec![n + j], rzb))
            .expect("same context");
    }
    let mut display_d = FormJet::zero(ctx, cap - 2, 2);
    for j in 0..n {
        for k in 0..n {
            let c = graph_r.partial(j).partial(n + k).scale(&gi(0, 2));
            display_d = display_d
                .try_add(&FormJet::zero(ctx, cap - 2, 2).with_component(vec![j, n + k], c))
                .expect("same context");
        }
    }
    let frame_order = frame
        .iter()
        .enumerate()
        .filter_map(|(j, l)| disagreement(l.component(2 * n), &graph_r.partial(j).scale(&gi(0, 1))))
        .min();
    FormulaOrders {
        cap: surface.cap,
        omega0: form_disagreement(omega0, &display),
        d_omega0: form_disagreement(d_omega0, &display_d),
        frame: frame_order,
        ds_coefficient: disagreement(&omega0.component(&[2 * n]), &Jet::one(ctx, cap - 1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quartic_z1(c: GaussianRational) -> ModelSurface {
        let ctx = ambient_context(1);
        let h = Jet::monomial(&ctx, 6, &[2, 0, 2, 0], c);
        ModelSurface::with_perturbation(1, 6, &h).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ModelSurface::heisenberg(2, 6).is_ok());
        assert!(quartic_z1(GaussianRational::from_ratio(1, 3)).n() == 1);
        let ctx = ambient_context(1);
        let cubic = Jet::monomial(&ctx, 6, &[1, 0, 2, 0], gi(1, 0));
        let err = ModelSurface::with_perturbation(1, 6, &cubic).unwrap_err();
        assert!(matches!(err, Error::NormalForm(NormalFormViolation::NonReal { .. })));
        let real_cubic = &cubic + &cubic.conj();
        let err = ModelSurface::with_perturbation(1, 6, &real_cubic).unwrap_err();
        assert!(matches!(err, Error::NormalForm(NormalFormViolation::LowDegreePerturbation { .. })));
        let quad = Jet::monomial(&ctx, 6, &[1, 0, 1, 0], gi(1, 0));
        let err = ModelSurface::with_perturbation(1, 6, &quad).unwrap_err();
        assert!(matches!(err, Error::NormalForm(NormalFormViolation::WrongQuadraticPart { .. })));
        let err = ModelSurface::heisenberg(1, 5).unwrap_err();
        assert!(matches!(err, Error::NormalForm(NormalFormViolation::CapTooSmall { cap: 5 })));
    }

    #[test]
    fn heisenberg_geometry() {
        for n in 1..=2 {
            let s = ModelSurface::heisenberg(n, 6).unwrap();
            let g = compute_geometry(&s).unwrap();
            let ctx = &g.ctx;
            let mut want = Jet::zero(ctx, 6);
            for j in 0..n {
                let mut e = vec![0u16; 2 * n + 1];
                e[j] = 1;
                e[n + j] = 1;
                want = &want + &Jet::monomial(ctx, 6, &e, GaussianRational::from_ratio(-1, 2));
            }
            assert_eq!(g.graph_r, want);
            assert_eq!(g.omega0.component(&[2 * n]), Jet::one(ctx, 5));
            assert_eq!(g.lambda.num_terms(), 1);
            assert!(g.lambda.constant_term().is_one());
            assert!(g.reeb.components().iter().enumerate().all(|(v, c)| if v == 2 * n {
                c.constant_term() == gi(-1, 0) && c.num_terms() == 1
            } else {
                c.is_zero()
            }));
            assert!(g.christoffel.iter().flatten().flatten().all(Jet::is_zero));
            assert!(g.r_scal0.is_zero());
            assert_eq!(g.orders.omega0, None);
        }
    }

    #[test]
    fn quartic_worked_example() {
        for c in [gi(1, 0), GaussianRational::from_ratio(-3, 7)] {
            let g = compute_geometry(&quartic_z1(c.clone())).unwrap();
            let ctx = &g.ctx;
            let z2 = Jet::monomial(ctx, 6, &[1, 1, 0], gi(1, 0));
            let want = (&z2 + &(&z2 * &z2).scale(&c)).scale(&GaussianRational::from_ratio(-1, 2));
            assert_eq!(g.graph_r, want);
            assert_eq!(g.lambda_lap0, c.scale(&rat(4, 1)));
            assert_eq!(g.r_quartic_trace0, c.scale(&rat(-2, 1)));
            assert_eq!(g.r_scal0, c.scale(&rat(-4, 1)));
        }
    }

    #[test]
    fn transverse_perturbation_orders() {
        // z₁²z̄₁z̄₂ + c.c. involves z₂ = z_{n+1}
        let ctx = ambient_context(1);
        let h = Jet::monomial(&ctx, 6, &[2, 0, 1, 1], gi(1, 0));
        let s = ModelSurface::with_perturbation(1, 6, &(&h + &h.conj())).unwrap();
        assert!(!s.is_transverse_free());
        let g = compute_geometry(&s).unwrap();
        assert_eq!(g.orders.ds_coefficient, Some(3));
        assert_eq!(g.orders.omega0, Some(3));
        assert_eq!(g.orders.d_omega0, Some(2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn random_surface_identities(seed in any::<u64>(), n in 1usize..=2, transverse in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = RandomSurfaceConfig { transverse, ..RandomSurfaceConfig::new(n) };
            let s = random_surface(&cfg, &mut rng).unwrap();
            let g = compute_geometry(&s).unwrap();
            prop_assert_eq!(&g.r_scal0, &g.r_scal0_closed);
            prop_assert!(g.r_scal0.is_real());
        }
    }
}
