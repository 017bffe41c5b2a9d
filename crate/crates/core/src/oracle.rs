//! Double-precision oracles: adaptive Gauss–Kronrod quadrature, the
//! regularized Gamma integrals, the distributional reduction identity and
//! an empirical decay check for stationary phase.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jets::{Jet, NumericPoly, VarKind};
use crate::stationary::{hessian_at, sp_terms};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

// 15-point Kronrod nodes on [0, 1] (symmetric), with the embedded 7-point
// Gauss rule on the odd-indexed nodes.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod value, `|K − G|`, and `∫|f|` by the Kronrod rule.
fn gk15(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WK[7];
    let mut g = fc * WG[3];
    let mut abs = fc.norm() * WK[7];
    for i in 0..7 {
        let (l, r) = (f(c - h * XK[i]), f(c + h * XK[i]));
        k += (l + r) * WK[i];
        abs += (l.norm() + r.norm()) * WK[i];
        if i % 2 == 1 {
            g += (l + r) * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm(), abs * h.abs())
}

/// Neumaier-compensated sum in the given order.
fn compensated_sum(values: impl Iterator<Item = Complex64>) -> Complex64 {
    let (mut s, mut c) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for v in values {
        for (sp, cp, vp) in [(&mut s.re, &mut c.re, v.re), (&mut s.im, &mut c.im, v.im)] {
            let t = *sp + vp;
            if sp.abs() >= vp.abs() {
                *cp += (*sp - t) + vp;
            } else {
                *cp += (vp - t) + *sp;
            }
            *sp = t;
        }
    }
    s + c
}

struct Cell {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

/// Globally adaptive bisection of the worst cell. Cells whose error is at
/// round-off level are frozen.
fn adapt(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64, budget: usize) -> Result<(Complex64, f64, usize)> {
    let roundoff = |e: f64, abs: f64, a: f64, b: f64| {
        e <= 50.0 * f64::EPSILON * abs || (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs()))
    };
    let (v, e, abs) = gk15(f, a, b);
    let mut evals = 15;
    let mut frozen = Vec::new();
    let mut live = Vec::new();
    if roundoff(e, abs, a, b) {
        frozen.push(Cell { a, b, value: v, err: e });
    } else {
        live.push(Cell { a, b, value: v, err: e });
    }
    loop {
        let total: f64 = live.iter().chain(&frozen).map(|c| c.err).sum();
        if total <= tol || live.is_empty() {
            break;
        }
        if evals + 30 > budget {
            return Err(Error::Oracle(format!("quadrature budget exhausted, error estimate {total:e}")));
        }
        let worst = live
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .expect("nonempty");
        let cell = live.swap_remove(worst);
        let m = 0.5 * (cell.a + cell.b);
        for (lo, hi) in [(cell.a, m), (m, cell.b)] {
            let (v, e, abs) = gk15(f, lo, hi);
            let c = Cell { a: lo, b: hi, value: v, err: e };
            if roundoff(e, abs, lo, hi) {
                frozen.push(c);
            } else {
                live.push(c);
            }
        }
        evals += 30;
    }
    let mut cells: Vec<Cell> = live.into_iter().chain(frozen).collect();
    cells.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = compensated_sum(cells.iter().map(|c| c.value));
    Ok((value, cells.iter().map(|c| c.err).sum(), evals))
}

/// Adaptive G7K15 over `[a, b]`, split into fixed panels evaluated in
/// parallel and summed in panel order.
pub fn quad_1d<F>(f: F, a: f64, b: f64, tol: f64, budget: usize) -> Result<QuadratureResult>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    const PANELS: usize = 16;
    let w = (b - a) / PANELS as f64;
    let per = budget / PANELS;
    let parts: Vec<Result<(Complex64, f64, usize)>> = (0..PANELS)
        .into_par_iter()
        .map(|p| {
            let lo = a + w * p as f64;
            let hi = if p + 1 == PANELS { b } else { lo + w };
            adapt(&f, lo, hi, tol / PANELS as f64, per)
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(QuadratureResult {
        value: compensated_sum(parts.iter().map(|p| p.0)),
        error_estimate: parts.iter().map(|p| p.1).sum(),
        evaluations: parts.iter().map(|p| p.2).sum(),
    })
}

fn quad_1d_serial(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64, budget: usize) -> Result<QuadratureResult> {
    let (value, error_estimate, evaluations) = adapt(f, a, b, tol, budget)?;
    Ok(QuadratureResult { value, error_estimate, evaluations })
}

/// `∫_box e^{ikF(x)} u(x) dx` for a box of dimension 1 or 2 (nested in 2D).
pub fn quad_oscillatory<P, U>(phase: P, u: U, k: f64, domain: &[(f64, f64)], tol: f64) -> Result<QuadratureResult>
where
    P: Fn(&[f64]) -> Complex64 + Sync,
    U: Fn(&[f64]) -> Complex64 + Sync,
{
    let i = Complex64::new(0.0, 1.0);
    match domain {
        [(a, b)] => quad_1d(|x| (i * k * phase(&[x])).exp() * u(&[x]), *a, *b, tol, 2_000_000),
        [(a, b), (c, d)] => {
            let inner_tol = tol / (b - a).abs().max(1.0) / 4.0;
            let inner_evals = std::sync::atomic::AtomicUsize::new(0);
            let inner_err = std::sync::Mutex::new(0.0_f64);
            let failure = std::sync::Mutex::new(None);
            let outer = quad_1d(
                |x| {
                    let g = |y: f64| (i * k * phase(&[x, y])).exp() * u(&[x, y]);
                    match quad_1d_serial(&g, *c, *d, inner_tol, 200_000) {
                        Ok(r) => {
                            inner_evals.fetch_add(r.evaluations, std::sync::atomic::Ordering::Relaxed);
                            let mut e = inner_err.lock().expect("poisoned");
                            *e = e.max(r.error_estimate);
                            r.value
                        }
                        Err(err) => {
                            *failure.lock().expect("poisoned") = Some(err);
                            Complex64::new(0.0, 0.0)
                        }
                    }
                },
                *a,
                *b,
                tol,
                200_000,
            )?;
            if let Some(err) = failure.into_inner().expect("poisoned") {
                return Err(err);
            }
            let inner_err = inner_err.into_inner().expect("poisoned");
            Ok(QuadratureResult {
                value: outer.value,
                error_estimate: outer.error_estimate + inner_err * (b - a).abs(),
                evaluations: inner_evals.into_inner(),
            })
        }
        _ => Err(Error::Oracle(format!("unsupported dimension {}", domain.len()))),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Finite-part value of `∫₀^∞ e^{−tx} t^m dt` for `Re x ≥ 0`, `x ≠ 0`.
pub fn gamma_pv(m: i32, x: Complex64) -> Result<Complex64> {
    if x.norm() == 0.0 {
        return Err(Error::Oracle("gamma_pv at x = 0".into()));
    }
    if x.re < 0.0 {
        return Err(Error::Oracle(format!("gamma_pv needs Re x ≥ 0, got {x}")));
    }
    if m >= 0 {
        return Ok(factorial(m as u32) * x.powi(-m - 1));
    }
    let p = (-m - 1) as u32;
    let harmonic: f64 = (1..=p).map(|j| 1.0 / f64::from(j)).sum();
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign / factorial(p) * x.powi(-m - 1) * (x.ln() + EULER_GAMMA - harmonic))
}

#[derive(Clone, Debug)]
pub struct ReductionReport {
    pub epsilons: Vec<f64>,
    pub differences: Vec<Complex64>,
    /// Richardson limit of the differences as `ε → 0`.
    pub extrapolated: f64,
}

/// Pairs `∫₀^∞e^{it(GF+iε)}tᵐdt` and `G^{−m−1}∫₀^∞e^{it(F+iε)}tᵐdt` with a
/// test function over `[−half_width, half_width]` and extrapolates their
/// difference to `ε = 0`.
pub fn osc_reduction_check<F, G, T>(
    f: F,
    g: G,
    m: u32,
    test: T,
    half_width: f64,
    epsilons: &[f64],
) -> Result<ReductionReport>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
    T: Fn(f64) -> f64 + Sync,
{
    let i = Complex64::new(0.0, 1.0);
    let mut diffs = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let side = |x: f64| -> Complex64 {
            let (fx, gx) = (f(x), g(x));
            let a = gamma_pv(m as i32, -i * (gx * fx + i * eps)).unwrap_or_default();
            let b = gamma_pv(m as i32, -i * (fx + i * eps)).unwrap_or_default() / gx.powi(m as i32 + 1);
            (a - b) * test(x)
        };
        let r = quad_1d(side, -half_width, half_width, 1e-11, 4_000_000)?;
        diffs.push(r.value);
    }
    let extrapolated = richardson(epsilons, &diffs)?;
    Ok(ReductionReport { epsilons: epsilons.to_vec(), differences: diffs, extrapolated })
}

/// Polynomial (Neville) extrapolation to `ε = 0` from the last three points.
fn richardson(eps: &[f64], vals: &[Complex64]) -> Result<f64> {
    let n = eps.len();
    if n < 2 || vals.len() != n {
        return Err(Error::Oracle("extrapolation needs at least two points".into()));
    }
    let start = n.saturating_sub(3);
    let (xs, mut p) = (&eps[start..], vals[start..].to_vec());
    for level in 1..xs.len() {
        for j in 0..xs.len() - level {
            let (x0, x1) = (xs[j], xs[j + level]);
            p[j] = (p[j + 1] * x0 - p[j] * x1) / (x0 - x1);
        }
    }
    let limit = p[0].norm();
    if !limit.is_finite() {
        return Err(Error::Oracle("extrapolation diverged".into()));
    }
    Ok(limit)
}

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub ks: Vec<f64>,
    /// Normalized remainders `|I(k)/(pref·k^{−d/2}) − Σ_{j<N} k^{−j}P_j|`.
    pub remainders: Vec<f64>,
    /// `−slope` of the least-squares fit of `log remainder` on `log k`.
    pub order: f64,
}

/// Smooth cutoff equal to 1 on `[−a, a]` and 0 outside `(−b, b)`.
pub fn cutoff(x: f64, a: f64, b: f64) -> f64 {
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (b - x.abs()) / (b - a);
    psi(t) / (psi(t) + psi(1.0 - t))
}

/// Compares quadrature of `∫e^{ikF}u·χ` with the stationary-phase sum
/// through order `N − 1`, for `F`, `u` jets in 1 or 2 real variables.
pub fn sp_numeric_check(f: &Jet, u: &Jet, big_n: u32, ks: &[f64]) -> Result<DecayReport> {
    let ctx = f.context();
    if ctx.vars().iter().any(|v| v.kind != VarKind::Real) || !(1..=2).contains(&ctx.len()) {
        return Err(Error::Oracle("numeric check supports 1 or 2 real variables".into()));
    }
    let d = ctx.len();
    let data = hessian_at(f)?;
    let p = sp_terms(f, u, big_n.saturating_sub(1))?;
    let pref = data.prefactor.to_complex();
    let (fp, up) = (NumericPoly::from(f), NumericPoly::from(u));
    let (flat, support) = (3.0, 4.0);
    let to_c = |x: &[f64]| x.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>();
    let domain = vec![(-support, support); d];
    let mut remainders = Vec::with_capacity(ks.len());
    for &k in ks {
        let q = quad_oscillatory(
            |x| fp.eval(&to_c(x)),
            |x| up.eval(&to_c(x)) * x.iter().map(|&v| cutoff(v, flat, support)).product::<f64>(),
            k,
            &domain,
            1e-13,
        )?;
        let norm = pref * k.powf(-(d as f64) / 2.0);
        let series: Complex64 = p.iter().enumerate().map(|(j, pj)| pj.to_complex() * k.powi(-(j as i32))).sum();
        remainders.push((q.value / norm - series).norm());
    }
    // an exact expansion leaves only round-off
    let order = if remainders.iter().all(|&r| r < 1e-12) { f64::INFINITY } else { -fit_slope(ks, &remainders) };
    Ok(DecayReport { ks: ks.to_vec(), remainders, order })
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Ctx, VariableContext};
    use crate::scalars::{rat, GaussianRational};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gaussian_quadrature() {
        let k = 10.0;
        let q = quad_oscillatory(|x| c(0.0, x[0] * x[0] / 2.0), |_| c(1.0, 0.0), k, &[(-8.0, 8.0)], 1e-12).unwrap();
        assert!((q.value - (2.0 * PI / k).sqrt()).norm() < 1e-10);
        assert!(q.error_estimate >= 0.0);
        let q2 = quad_oscillatory(|x| c(0.0, x[0] * x[0] / 2.0), |x| c(x[0] * x[0], 0.0), k, &[(-8.0, 8.0)], 1e-12)
            .unwrap();
        assert!((q2.value - (2.0 * PI / k).sqrt() / k).norm() < 1e-10);
        let q3 = quad_oscillatory(
            |x| c(0.0, (x[0] * x[0] + x[1] * x[1]) / 2.0),
            |x| c(1.0 + x[0] * x[0], 0.0),
            k,
            &[(-8.0, 8.0), (-8.0, 8.0)],
            1e-11,
        )
        .unwrap();
        let one_d = (2.0 * PI / k).sqrt();
        assert!((q3.value - one_d * (one_d + one_d / k)).norm() < 1e-9);
    }

    #[test]
    fn oscillatory_phase() {
        // ∫e^{ikx}e^{−x²} = √π e^{−k²/4}
        let k = 3.0;
        let q = quad_oscillatory(|x| c(x[0], 0.0), |x| c((-x[0] * x[0]).exp(), 0.0), k, &[(-9.0, 9.0)], 1e-12)
            .unwrap();
        assert!((q.value - PI.sqrt() * (-k * k / 4.0).exp()).norm() < 1e-10);
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma_pv(0, c(1.0, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        assert!((gamma_pv(2, c(2.0, 0.0)).unwrap() - 0.25).norm() < 1e-15);
        assert!((gamma_pv(-1, c(1.0, 0.0)).unwrap() + EULER_GAMMA).norm() < 1e-15);
        assert!(gamma_pv(1, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn euler_gamma_by_quadrature() {
        // −γ = ∫₀^∞ e^{−t} log t dt, split at 1 to tame the log
        let f = |t: f64| c((-t).exp() * t.ln(), 0.0);
        let a = quad_1d(f, 0.0, 1.0, 1e-14, 2_000_000).unwrap().value;
        let b = quad_1d(f, 1.0, 60.0, 1e-14, 2_000_000).unwrap().value;
        assert!((a + b + EULER_GAMMA).norm() < 1e-12);
    }

    #[test]
    fn gamma_matches_quadrature() {
        for m in 0..=4 {
            for x in [c(1.0, 0.0), c(2.0, 0.0), c(1.0, 1.0)] {
                let t_max = 80.0 / x.re;
                let q = quad_1d(|t| (-t * x).exp() * t.powi(m), 0.0, t_max, 1e-14, 2_000_000).unwrap();
                let want = gamma_pv(m, x).unwrap();
                assert!((q.value - want).norm() <= 1e-10 * want.norm(), "m={m} x={x}");
            }
        }
    }

    #[test]
    fn finite_parts_match_quadrature() {
        for x in [1.0_f64, 2.0] {
            // FP∫ t⁻¹e^{−tx}: subtract 1 on [0,1]
            let a = quad_1d(|t| c((-t * x).exp_m1() / t, 0.0), 0.0, 1.0, 1e-14, 2_000_000).unwrap().value;
            let b = quad_1d(|t| c((-t * x).exp() / t, 0.0), 1.0, 80.0, 1e-14, 2_000_000).unwrap().value;
            let want = gamma_pv(-1, c(x, 0.0)).unwrap();
            assert!((a + b - want).norm() < 1e-10, "x={x} {} {want}", a + b);
            // FP∫ t⁻²e^{−tx}: subtract 1 − tx on [0,1]; FP∫₀¹t⁻² = −1
            // e^u − 1 − u without cancellation
            let second = |u: f64| {
                if u.abs() < 1e-2 {
                    u * u * (0.5 + u / 6.0 + u * u / 24.0 + u * u * u / 120.0)
                } else {
                    u.exp_m1() - u
                }
            };
            let a = quad_1d(|t| c(second(-t * x) / (t * t), 0.0), 0.0, 1.0, 1e-14, 2_000_000)
                .unwrap()
                .value;
            let b = quad_1d(|t| c((-t * x).exp() / (t * t), 0.0), 1.0, 80.0, 1e-14, 2_000_000).unwrap().value;
            let want = gamma_pv(-2, c(x, 0.0)).unwrap();
            assert!((a + b - 1.0 - want).norm() < 1e-9, "x={x}");
        }
    }

    fn eps() -> Vec<f64> {
        vec![1e-1, 1e-2, 1e-3, 1e-4]
    }

    #[test]
    fn reduction_trivial() {
        let r = osc_reduction_check(|x| x, |_| 1.0, 0, |x| (-x * x).exp(), 8.0, &eps()).unwrap();
        assert!(r.differences.iter().all(|d| d.norm() == 0.0));
        assert_eq!(r.extrapolated, 0.0);
    }

    #[test]
    fn reduction_with_factor() {
        let r0 = osc_reduction_check(|x| x, |x| 1.0 + x * x, 0, |x| (-x * x).exp(), 8.0, &eps()).unwrap();
        assert!(r0.extrapolated < 1e-6, "{r0:?}");
        let r1 = osc_reduction_check(|x| x, |x| 1.0 + x * x, 1, |x| (-x * x).exp(), 8.0, &eps()).unwrap();
        assert!(r1.extrapolated < 1e-5, "{r1:?}");
    }

    fn real_ctx(names: &[&str]) -> Ctx {
        names.iter().fold(VariableContext::builder(), |b, n| b.real(n)).build()
    }

    fn half_i() -> GaussianRational {
        GaussianRational::new(rat(0, 1), rat(1, 2))
    }

    #[test]
    fn decay_orders() {
        let ks = [10.0, 20.0, 40.0, 80.0];
        let ctx = real_ctx(&["x"]);
        let x = Jet::var(&ctx, 8, 0);
        let f = x.pow(2).scale(&half_i());
        let u = &(&(&Jet::one(&ctx, 8) + &x) + &x.pow(2).scale_int(3)) + &x.pow(4);
        let r = sp_numeric_check(&f, &u, 2, &ks).unwrap();
        assert!(r.order >= 1.8, "{r:?}");
        let f3 = &f + &x.pow(3).scale(&GaussianRational::new(rat(0, 1), rat(1, 10)));
        let r = sp_numeric_check(&f3, &u, 2, &ks).unwrap();
        assert!(r.order >= 1.8, "{r:?}");

        let ctx2 = real_ctx(&["x", "y"]);
        let (x, y) = (Jet::var(&ctx2, 6, 0), Jet::var(&ctx2, 6, 1));
        let f2 = (&x.pow(2) + &y.pow(2)).scale(&half_i());
        let u2 = &(&Jet::one(&ctx2, 6) + &(&x * &y)) + &x.pow(2);
        let r = sp_numeric_check(&f2, &u2, 1, &ks).unwrap();
        assert!(r.order >= 0.8, "{r:?}");
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5, 1.0, 2.0), 1.0);
        assert_eq!(cutoff(2.5, 1.0, 2.0), 0.0);
        let m = cutoff(1.5, 1.0, 2.0);
        assert!((m - 0.5).abs() < 1e-12);
    }
}
