//! Versioned JSON reports for `szego run`.

use cr_szego::geometry::{compute_geometry, GeometryReport, ModelSurface};
use cr_szego::matrix::Matrix;
use cr_szego::phase::{compute_phase, Factorization};
use cr_szego::scalars::GaussianRational;
use cr_szego::szego::{run_pipeline, SzegoReport};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    Geometry,
    Phase,
    Szego,
    All,
}

#[derive(Debug, Serialize)]
pub struct OrdersSection {
    pub cap: i32,
    pub omega0: Option<u32>,
    pub d_omega0: Option<u32>,
    pub frame: Option<u32>,
    pub ds_coefficient: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct GeometrySection {
    pub lambda0: GaussianRational,
    pub lambda_laplacian0: GaussianRational,
    pub r_quartic_trace0: GaussianRational,
    pub ricci0: Matrix,
    pub ricci0_closed_form: Matrix,
    pub r_scal0: GaussianRational,
    pub r_scal0_closed_form: GaussianRational,
    /// Lowest degree at which the displayed approximations fail (`null`:
    /// exact through the cap).
    pub formula_orders: OrdersSection,
}

#[derive(Debug, Serialize)]
pub struct PhaseSection {
    pub phase_terms: usize,
    pub f_minus_one_valuation: i32,
    pub f_diagonal_is_one: bool,
    pub g_terms: usize,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub n: usize,
    pub truncation_degree: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub szego: Option<SzegoReport>,
}

fn geometry_section(g: &GeometryReport) -> GeometrySection {
    GeometrySection {
        lambda0: g.lambda.constant_term(),
        lambda_laplacian0: g.lambda_lap0.clone(),
        r_quartic_trace0: g.r_quartic_trace0.clone(),
        ricci0: g.ricci0.clone(),
        ricci0_closed_form: g.ricci0_closed.clone(),
        r_scal0: g.r_scal0.clone(),
        r_scal0_closed_form: g.r_scal0_closed.clone(),
        formula_orders: OrdersSection {
            cap: g.orders.cap,
            omega0: g.orders.omega0,
            d_omega0: g.orders.d_omega0,
            frame: g.orders.frame,
            ds_coefficient: g.orders.ds_coefficient,
        },
    }
}

fn phase_section(phase_terms: usize, fact: &Factorization, geom: &GeometryReport) -> PhaseSection {
    let one = cr_szego::jets::Jet::one(fact.f.context(), fact.f.cap());
    PhaseSection {
        phase_terms,
        f_minus_one_valuation: (&fact.f - &one).valuation(),
        f_diagonal_is_one: geom.orders.ds_coefficient.is_none(),
        g_terms: fact.g.num_terms(),
    }
}

/// Runs the stages needed for `kind`. Every stage asserts its own identities.
pub fn build(surface: &ModelSurface, kind: ReportKind) -> cr_szego::Result<Report> {
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        n: surface.n(),
        truncation_degree: surface.cap(),
        geometry: None,
        phase: None,
        szego: None,
    };
    match kind {
        ReportKind::Geometry => {
            let g = compute_geometry(surface).map_err(|e| e.in_stage("geometry"))?;
            report.geometry = Some(geometry_section(&g));
        }
        ReportKind::Phase => {
            let g = compute_geometry(surface).map_err(|e| e.in_stage("geometry"))?;
            let (p, f) = compute_phase(surface, &g).map_err(|e| e.in_stage("phase"))?;
            report.phase = Some(phase_section(p.jet.num_terms(), &f, &g));
        }
        ReportKind::Szego | ReportKind::All => {
            let p = run_pipeline(surface)?;
            if kind == ReportKind::All {
                report.geometry = Some(geometry_section(&p.geometry));
                report.phase = Some(phase_section(p.phase.jet.num_terms(), &p.factorization, &p.geometry));
            }
            report.szego = Some(p.report);
        }
    }
    Ok(report)
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = format!("n = {}, truncation degree {}\n", self.n, self.truncation_degree);
        if let Some(g) = &self.geometry {
            out += &format!(
                "geometry\n  λ(0) = {}\n  Σ∂²λ/∂z∂z̄(0) = {}\n  Σ∂⁴R(0) = {}\n  R_scal(0) = {} (closed form {})\n",
                g.lambda0, g.lambda_laplacian0, g.r_quartic_trace0, g.r_scal0, g.r_scal0_closed_form
            );
            let o = &g.formula_orders;
            let show = |d: Option<u32>| d.map_or("exact".to_string(), |d| format!("fails at degree {d}"));
            out += &format!(
                "  displayed formulas: ω₀ {}, dω₀ {}, frame {}, ds-coefficient {}\n",
                show(o.omega0),
                show(o.d_omega0),
                show(o.frame),
                show(o.ds_coefficient)
            );
        }
        if let Some(p) = &self.phase {
            out += &format!(
                "phase\n  {} terms, f − 1 of order {}, f(x,x) ≡ 1: {}\n",
                p.phase_terms, p.f_minus_one_valuation, p.f_diagonal_is_one
            );
        }
        if let Some(s) = &self.szego {
            out += &format!(
                "szego\n  det Hess = {}\n  prefactor = {}\n  A₀ = {}  B₀ = {}\n  A₁ (stationary phase) = {}\n  A₁ (closed form)      = {}\n  A₁ (curvature)        = {}\n  agreement: {}\n",
                s.hessian_det,
                s.prefactor,
                s.a0,
                s.b0,
                s.a1_route_sp,
                s.a1_route_closed,
                s.a1_route_curv,
                s.all_agree()
            );
        }
        out
    }
}
