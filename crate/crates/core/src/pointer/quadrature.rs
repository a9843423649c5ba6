//! Direct numerical evaluation of pointer moments.
//!
//! This path shares nothing with the closed-form moments beyond the mixture
//! data: derivatives come from Hermite polynomials evaluated pointwise and the
//! integrals from adaptive Gauss–Kronrod quadrature. It exists to check the
//! closed forms.

use super::{gaussian, GaussianMixture, MomentSpec};
use crate::error::{Error, Result};
use crate::hilbert::C64;

pub const QUAD_ABS_TOL: f64 = 1e-10;
pub const QUAD_REL_TOL: f64 = 1e-12;
const MAX_INTERVALS: usize = 4000;
const WINDOW_WIDTHS: f64 = 10.0;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> C64, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).norm())
}

/// Integrates `f` over `[a, b]`, bisecting the worst interval until the
/// estimated error is below `max(QUAD_ABS_TOL, QUAD_REL_TOL·|I|)`.
pub fn integrate_adaptive(f: impl Fn(f64) -> C64, a: f64, b: f64) -> Result<(C64, f64)> {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    loop {
        let total: C64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        let tol = QUAD_ABS_TOL.max(QUAD_REL_TOL * total.norm());
        if err <= tol {
            return Ok((total, err));
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::IntegrationFailure { achieved: err });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// Probabilists' Hermite polynomial `He_n(t)`.
fn hermite_he(n: u32, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = t * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `dⁿ/dxⁿ g(x − μ; s)`; `g` is a normal density of variance `2s²` up to a constant.
fn gaussian_derivative(n: u32, x: f64, mu: f64, s: f64) -> f64 {
    let sigma = std::f64::consts::SQRT_2 * s;
    let t = (x - mu) / sigma;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * sigma.powi(-(n as i32)) * hermite_he(n, t) * gaussian(x - mu, s)
}

/// `⟨ψ|op|ψ⟩ / ⟨ψ|ψ⟩` by quadrature of every term pair and coordinate.
pub fn quadrature_moment(mix: &GaussianMixture, spec: &MomentSpec) -> Result<C64> {
    spec.check_against(mix)?;
    let mut num = C64::new(0.0, 0.0);
    let mut den = C64::new(0.0, 0.0);
    for ti in mix.terms() {
        for tj in mix.terms() {
            let mut op = C64::new(1.0, 0.0);
            let mut ov = C64::new(1.0, 0.0);
            for c in 0..mix.dim() {
                let (m, n) = spec.powers()[c];
                let s = mix.width(c);
                let (mi, mj) = (ti.center[c], tj.center[c]);
                let lo = mi.min(mj) - WINDOW_WIDTHS * s;
                let hi = mi.max(mj) + WINDOW_WIDTHS * s;
                let phase = C64::new(0.0, -1.0).powu(n);
                let (v, _) = integrate_adaptive(
                    |x| phase * (gaussian(x - mi, s) * x.powi(m as i32) * gaussian_derivative(n, x, mj, s)),
                    lo,
                    hi,
                )?;
                let (o, _) = integrate_adaptive(
                    |x| C64::new(gaussian(x - mi, s) * gaussian(x - mj, s), 0.0),
                    lo,
                    hi,
                )?;
                op *= v;
                ov *= o;
            }
            let w = ti.coeff.conj() * tj.coeff;
            num += w * op;
            den += w * ov;
        }
    }
    if !(den.re > 0.0) {
        return Err(Error::NormVanishes);
    }
    Ok(num / den.re)
}
