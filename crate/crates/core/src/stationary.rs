//! Stationary phase over exact arithmetic: Hessians of jets at a real
//! critical point, the branch-correct prefactor and the terms `P_j`.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::ensure;
use crate::jets::{Ctx, Jet, RealCoord};
use crate::matrix::{self, Matrix};
use crate::scalars::{rat, rat_int, GaussianRational, PiScaled};

/// `det(F″(0)/2πi)^{−1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub enum Prefactor {
    Exact(PiScaled),
    /// Floating value with the arguments of the eigenvalues of `F″(0)/i`
    /// whose principal square roots were taken.
    Numeric { value: Complex64, eigenvalue_args: Vec<f64> },
}

impl Prefactor {
    pub fn to_complex(&self) -> Complex64 {
        match self {
            Self::Exact(p) => p.to_complex(),
            Self::Numeric { value, .. } => *value,
        }
    }

    pub fn exact(&self) -> Option<&PiScaled> {
        match self {
            Self::Exact(p) => Some(p),
            Self::Numeric { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriticalPointData {
    pub coords: Vec<RealCoord>,
    /// Real-coordinate Hessian at 0.
    pub hessian: Matrix,
    pub inverse: Matrix,
    pub det: GaussianRational,
    pub prefactor: Prefactor,
}

/// `⟨F″(0)⁻¹D, D⟩` with `D = −i∂`, written against complex partials:
/// `Σ coeffs[a][b] ∂_a∂_b` over the variables of the context.
#[derive(Clone, Debug)]
pub struct SPOperator {
    ctx: Ctx,
    coeffs: Matrix,
}

fn gi(re: i64, im: i64) -> GaussianRational {
    GaussianRational::from_ints(re, im)
}

fn factorial(n: u32) -> GaussianRational {
    GaussianRational::real(rat_int((1..=i64::from(n)).product()))
}

/// Requires `F(0) = 0`, `dF(0) = 0` and a nonsingular Hessian.
pub fn hessian_at(f: &Jet) -> Result<CriticalPointData> {
    let ctx = f.context();
    if f.cap() < 2 {
        return Err(Error::TruncationUnsound { needed: 2, available: f.cap().max(0) as u32 });
    }
    if let Some((m, c)) = f.terms().next().filter(|(m, _)| m.degree() <= 1) {
        let monomial = if m.degree() == 0 {
            "1".to_string()
        } else {
            let v = m.exponents().iter().position(|&e| e > 0).unwrap_or(0);
            ctx.name(v).to_string()
        };
        return Err(Error::NotCritical { monomial, coefficient: c.to_string() });
    }
    let coords = ctx.real_coords();
    let hessian: Matrix = coords
        .iter()
        .map(|&a| coords.iter().map(|&b| f.real_derivative_at_zero(&[a, b])).collect())
        .collect();
    let det = matrix::determinant(&hessian);
    if det.is_zero() {
        return Err(Error::Singular);
    }
    let inverse = invert_symmetric(&hessian)?;
    let prefactor = sp_prefactor(&hessian, &det)?;
    Ok(CriticalPointData { coords, hessian, inverse, det, prefactor })
}

pub fn invert_symmetric(m: &Matrix) -> Result<Matrix> {
    ensure(matrix::is_symmetric(m), "invert_symmetric", || "matrix is not symmetric".into())?;
    let inv = matrix::inverse(m)?;
    ensure(matrix::matmul(m, &inv) == matrix::identity(m.len()), "invert_symmetric", || {
        "M·M⁻¹ ≠ I".into()
    })?;
    Ok(inv)
}

fn eigenvalues_over_i(h: &Matrix) -> Vec<Complex64> {
    let m = h.len();
    let minus_i = Complex64::new(0.0, -1.0);
    let a = DMatrix::from_fn(m, m, |r, c| h[r][c].to_complex() * minus_i);
    let schur = Schur::new(a);
    let (_, t) = schur.unpack();
    (0..m).map(|k| t[(k, k)]).collect()
}

/// `det(H/2πi)^{−1/2} = (2π)^{m/2} Π μ_k^{−1/2}` with `μ_k` the eigenvalues
/// of `H/i` and principal roots.
pub fn sp_prefactor(h: &Matrix, det: &GaussianRational) -> Result<Prefactor> {
    if det.is_zero() {
        return Err(Error::Singular);
    }
    let m = h.len();
    let mu = eigenvalues_over_i(h);
    let scale = mu.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for z in &mu {
        ensure(z.re >= -1e-10 * scale, "prefactor_branch", || {
            format!("eigenvalue {z} of F″/i has negative real part")
        })?;
    }
    let root_num: Complex64 = mu.iter().map(|z| z.sqrt()).product();
    if m.is_multiple_of(2) {
        // i^m = (−1)^{m/2}
        let det_over = if (m / 2).is_multiple_of(2) { det.clone() } else { -det };
        if let Ok(root) = det_over.exact_sqrt() {
            let rc = root.to_complex();
            let root = if (rc - root_num).norm() <= (rc + root_num).norm() { root } else { -root };
            ensure((root.to_complex() - root_num).norm() <= 1e-8 * root_num.norm(), "prefactor_branch", || {
                format!("exact root {root} disagrees with eigenvalue product {root_num}")
            })?;
            let two_half = GaussianRational::real(rat_int(1 << (m / 2)));
            return Ok(Prefactor::Exact(PiScaled::new(two_half.checked_div(&root)?, (m / 2) as i32)));
        }
    }
    let value = Complex64::new(2.0 * std::f64::consts::PI, 0.0).powf(m as f64 / 2.0) / root_num;
    Ok(Prefactor::Numeric { value, eigenvalue_args: mu.iter().map(|z| z.arg()).collect() })
}

impl SPOperator {
    /// Rewrites `−F″(0)⁻¹` from real to complex partials.
    pub fn new(ctx: &Ctx, data: &CriticalPointData) -> Self {
        let nv = ctx.len();
        // ∂_{coord} = Σ_v map[coord][v] ∂_v
        let map: Matrix = data
            .coords
            .iter()
            .map(|&c| {
                let mut row = vec![GaussianRational::zero(); nv];
                match c {
                    RealCoord::Real(r) => row[r] = GaussianRational::one(),
                    RealCoord::Re(h) => {
                        row[h] = GaussianRational::one();
                        row[ctx.conj(h)] = GaussianRational::one();
                    }
                    RealCoord::Im(h) => {
                        row[h] = gi(0, 1);
                        row[ctx.conj(h)] = gi(0, -1);
                    }
                }
                row
            })
            .collect();
        let neg_inv: Matrix = data.inverse.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
        let map_t: Matrix = (0..nv).map(|v| map.iter().map(|row| row[v].clone()).collect()).collect();
        let coeffs = matrix::matmul(&matrix::matmul(&map_t, &neg_inv), &map);
        Self { ctx: ctx.clone(), coeffs }
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn coeff(&self, a: usize, b: usize) -> &GaussianRational {
        &self.coeffs[a][b]
    }

    pub fn context(&self) -> &Ctx {
        &self.ctx
    }

    pub fn apply(&self, f: &Jet) -> Jet {
        let mut out = Jet::zero(f.context(), f.cap() - 2);
        for (a, row) in self.coeffs.iter().enumerate() {
            let fa = f.partial(a);
            for (b, c) in row.iter().enumerate() {
                if !c.is_zero() {
                    out = &out + &fa.partial(b).scale(c);
                }
            }
        }
        out
    }

    pub fn apply_pow(&self, f: &Jet, v: u32) -> Jet {
        (0..v).fold(f.clone(), |acc, _| self.apply(&acc))
    }
}

/// `h = F − F(0) − ½⟨F″(0)x, x⟩`, i.e. `F` minus its quadratic part at a
/// critical point.
pub fn cubic_remainder(f: &Jet) -> Result<Jet> {
    let h = f - &f.homogeneous_part(2);
    ensure(h.valuation() >= 3, "cubic_remainder", || format!("h = {h}"))?;
    Ok(h)
}

/// `(v, μ)` pairs with `v − μ = j` and `2v ≥ 3μ`.
pub fn term_indices(j: u32) -> impl Iterator<Item = (u32, u32)> {
    (0..=2 * j).map(move |mu| (j + mu, mu))
}

/// `P₀u … P_Ju` at the critical point 0 of `F`.
pub fn sp_terms(f: &Jet, u: &Jet, big_j: u32) -> Result<Vec<GaussianRational>> {
    let data = hessian_at(f)?;
    let op = SPOperator::new(f.context(), &data);
    let h = cubic_remainder(f)?;
    let minus_i = gi(0, -1);
    let mut out = Vec::with_capacity(big_j as usize + 1);
    for j in 0..=big_j {
        let mut pj = GaussianRational::zero();
        for (v, mu) in term_indices(j) {
            let needed = 2 * v;
            let base = (&h.pow(mu) * u).truncate(needed as i32);
            if base.cap() < needed as i32 {
                return Err(Error::TruncationUnsound { needed, available: base.cap().max(0) as u32 });
            }
            let val = op.apply_pow(&base, v).constant_term();
            let w = minus_i.pow(j).scale(&rat(1, 1 << v)).checked_div(&(&factorial(v) * &factorial(mu)))?;
            pj += &(&val * &w);
        }
        out.push(pj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::VariableContext;

    fn line() -> Ctx {
        VariableContext::builder().real("x").build()
    }

    fn plane() -> Ctx {
        VariableContext::builder().real("x").real("y").build()
    }

    fn half_i() -> GaussianRational {
        GaussianRational::new(rat(0, 1), rat(1, 2))
    }

    #[test]
    fn gaussian_hessian_and_prefactor() {
        let ctx = plane();
        let f = (&Jet::var(&ctx, 6, 0).pow(2) + &Jet::var(&ctx, 6, 1).pow(2)).scale(&half_i());
        let d = hessian_at(&f).unwrap();
        assert_eq!(d.hessian, vec![vec![gi(0, 1), gi(0, 0)], vec![gi(0, 0), gi(0, 1)]]);
        assert_eq!(d.det, gi(-1, 0));
        // det(I/2π)^{−1/2} = 2π
        assert_eq!(d.prefactor, Prefactor::Exact(PiScaled::new(gi(2, 0), 1)));
    }

    #[test]
    fn one_dimensional_prefactor_is_numeric() {
        let ctx = line();
        let f = Jet::var(&ctx, 6, 0).pow(2).scale(&half_i());
        let d = hessian_at(&f).unwrap();
        let v = d.prefactor.to_complex();
        assert!((v - Complex64::new((2.0 * std::f64::consts::PI).sqrt(), 0.0)).norm() < 1e-12);
        assert!(matches!(d.prefactor, Prefactor::Numeric { .. }));
    }

    #[test]
    fn cubic_is_singular() {
        let ctx = line();
        let f = Jet::var(&ctx, 6, 0).pow(3);
        assert_eq!(hessian_at(&f).unwrap_err(), Error::Singular);
        let g = &f + &Jet::var(&ctx, 6, 0);
        assert!(matches!(hessian_at(&g).unwrap_err(), Error::NotCritical { .. }));
    }

    #[test]
    fn inverse_examples() {
        let two_i = vec![vec![gi(0, 2), gi(0, 0)], vec![gi(0, 0), gi(0, 2)]];
        let inv = invert_symmetric(&two_i).unwrap();
        let want = GaussianRational::new(rat(0, 1), rat(-1, 2));
        assert_eq!(inv, vec![vec![want.clone(), gi(0, 0)], vec![gi(0, 0), want]]);
        let anti = vec![vec![gi(0, 0), gi(-1, 0)], vec![gi(-1, 0), gi(0, 0)]];
        assert_eq!(invert_symmetric(&anti).unwrap(), anti);
        let bad = vec![vec![gi(0, 0), gi(1, 0)], vec![gi(2, 0), gi(0, 0)]];
        assert!(invert_symmetric(&bad).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let ctx = line();
        let f = Jet::var(&ctx, 6, 0).pow(2).scale(&half_i());
        let u = Jet::var(&ctx, 6, 0).pow(2);
        let p = sp_terms(&f, &u, 1).unwrap();
        assert_eq!(p, vec![gi(0, 0), gi(1, 0)]);
        let u1 = Jet::one(&ctx, 6);
        assert_eq!(sp_terms(&f, &u1, 1).unwrap(), vec![gi(1, 0), gi(0, 0)]);
        // x⁴ moment: ∫e^{−kx²/2}x⁴ = 3√(2π/k)k⁻²
        let u4 = Jet::var(&ctx, 12, 0).pow(4);
        let f8 = Jet::var(&ctx, 12, 0).pow(2).scale(&half_i());
        assert_eq!(sp_terms(&f8, &u4, 2).unwrap(), vec![gi(0, 0), gi(0, 0), gi(3, 0)]);
    }

    #[test]
    fn p0_is_value() {
        let ctx = plane();
        let x = Jet::var(&ctx, 6, 0);
        let y = Jet::var(&ctx, 6, 1);
        let f = &(&(&x.pow(2) + &y.pow(2)).scale(&half_i()) + &x.pow(3)) + &(&x * &y.pow(2)).scale(&gi(0, 1));
        let u = &Jet::constant(&ctx, 6, gi(3, -1)) + &(&x * &y);
        assert_eq!(sp_terms(&f, &u, 0).unwrap()[0], gi(3, -1));
    }

    #[test]
    fn truncation_is_checked() {
        let ctx = line();
        let f = Jet::var(&ctx, 4, 0).pow(2).scale(&half_i());
        let u = Jet::one(&ctx, 4);
        assert!(matches!(sp_terms(&f, &u, 1).unwrap_err(), Error::TruncationUnsound { .. }));
    }

    #[test]
    fn enumeration() {
        assert_eq!(term_indices(1).collect::<Vec<_>>(), vec![(1, 0), (2, 1), (3, 2)]);
        assert!(term_indices(2).all(|(v, mu)| v - mu == 2 && 2 * v >= 3 * mu));
    }
}
