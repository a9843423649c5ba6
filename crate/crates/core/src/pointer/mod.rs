//! Pointer wavefunctions as finite mixtures of equal-width Gaussians.
//!
//! A mixture in `dim` coordinates with per-coordinate width `s_c` is
//!
//! ```text
//! ψ(q) = Σ_k c_k Π_c g(q_c − μ_kc; s_c),   g(x; s) = (2π s²)^(-1/4) exp(−x²/4s²)
//! ```
//!
//! so that a single term has `|ψ|²` with standard deviation `s_c` in each
//! coordinate. Every post-coupling pointer in this crate has this form, which
//! keeps all overlaps and polynomial moments in closed form.
//!
//! Momentum is `P = −i ∂/∂q` (ħ = 1) and within one coordinate operators are
//! ordered position-first.

mod quadrature;
mod sampling;

pub use quadrature::{integrate_adaptive, quadrature_moment, QUAD_ABS_TOL, QUAD_REL_TOL};
pub use sampling::{sample_readout, GridSampler, Samples};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::C64;

pub const MAX_COORDS: usize = 2;
pub const MAX_MOMENT_DEGREE: u32 = 4;
pub const MAX_COMB_TERMS: usize = 64;

const NORM_TOL: f64 = 1e-28;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Term {
    pub coeff: C64,
    /// Only the first `dim` entries are meaningful; the rest are zero.
    pub center: [f64; MAX_COORDS],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianMixture {
    dim: usize,
    widths: [f64; MAX_COORDS],
    terms: Vec<Term>,
}

/// How a two-coordinate device distributes the nominal width `Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthConvention {
    /// Each coordinate has width `Δ`.
    Single,
    /// Each coordinate has width `Δ/√2`, so `Q_A + Q_B` has width `Δ`.
    Split,
}

impl std::str::FromStr for WidthConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(WidthConvention::Single),
            "split" => Ok(WidthConvention::Split),
            other => Err(Error::invalid(format!("unknown width convention `{other}`"))),
        }
    }
}

impl WidthConvention {
    pub fn coordinate_width(self, delta: f64) -> f64 {
        match self {
            WidthConvention::Single => delta,
            WidthConvention::Split => delta * std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

fn check_width(w: f64) -> Result<()> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::invalid(format!("pointer width must be positive and finite, got {w}")));
    }
    Ok(())
}

impl GaussianMixture {
    pub fn new(dim: usize, widths: &[f64], terms: Vec<Term>) -> Result<Self> {
        if dim == 0 || dim > MAX_COORDS || widths.len() != dim {
            return Err(Error::invalid(format!(
                "mixture needs 1 or 2 coordinates with one width each (dim {dim}, {} widths)",
                widths.len()
            )));
        }
        widths.iter().try_for_each(|&w| check_width(w))?;
        if terms.is_empty() {
            return Err(Error::invalid("mixture needs at least one term"));
        }
        let mut w = [1.0; MAX_COORDS];
        w[..dim].copy_from_slice(widths);
        let mut terms = terms;
        for t in &mut terms {
            if !t.coeff.re.is_finite() || !t.coeff.im.is_finite() || t.center.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("mixture terms must be finite"));
            }
            for c in dim..MAX_COORDS {
                t.center[c] = 0.0;
            }
        }
        let mix = GaussianMixture { dim, widths: w, terms };
        let scale: f64 = mix.terms.iter().map(|t| t.coeff.norm_sqr()).sum();
        let n2 = mix.norm_sqr();
        if !(scale > 0.0) || !(n2 / scale > NORM_TOL) {
            return Err(Error::NormVanishes);
        }
        Ok(mix)
    }

    pub fn one_dim(width: f64, terms: &[(C64, f64)]) -> Result<Self> {
        let terms = terms
            .iter()
            .map(|&(coeff, c)| Term { coeff, center: [c, 0.0] })
            .collect();
        Self::new(1, &[width], terms)
    }

    pub fn two_dim(widths: [f64; 2], terms: &[(C64, [f64; 2])]) -> Result<Self> {
        let terms = terms.iter().map(|&(coeff, center)| Term { coeff, center }).collect();
        Self::new(2, &widths, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths[..self.dim]
    }

    pub fn width(&self, coord: usize) -> f64 {
        self.widths[coord]
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Smallest and largest term center along `coord`.
    pub fn center_range(&self, coord: usize) -> (f64, f64) {
        self.terms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t.center[coord]), hi.max(t.center[coord]))
        })
    }

    /// `∫ g_i g_j` along one coordinate.
    fn overlap_1d(&self, coord: usize, mu_i: f64, mu_j: f64) -> f64 {
        let s = self.widths[coord];
        let d = mu_i - mu_j;
        (-d * d / (8.0 * s * s)).exp()
    }

    fn pair_overlap(&self, i: &Term, j: &Term) -> f64 {
        (0..self.dim)
            .map(|c| self.overlap_1d(c, i.center[c], j.center[c]))
            .product()
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut acc = 0.0;
        for (a, ti) in self.terms.iter().enumerate() {
            acc += ti.coeff.norm_sqr();
            for tj in &self.terms[a + 1..] {
                acc += 2.0 * (ti.coeff.conj() * tj.coeff).re * self.pair_overlap(ti, tj);
            }
        }
        acc
    }

    /// `⟨self|other⟩` for mixtures of the same dimension and widths.
    pub fn inner(&self, other: &GaussianMixture) -> Result<C64> {
        if self.dim != other.dim || self.widths != other.widths {
            return Err(Error::invalid("inner product needs mixtures of equal dimension and widths"));
        }
        let mut acc = C64::new(0.0, 0.0);
        for ti in &self.terms {
            for tj in &other.terms {
                acc += ti.coeff.conj() * tj.coeff * self.pair_overlap(ti, tj);
            }
        }
        Ok(acc)
    }

    /// `‖ψ − φ‖` in L2. Terms sharing a center are merged before the norm is
    /// taken, so nearly equal mixtures on a common lattice keep full precision.
    pub fn l2_distance(&self, other: &GaussianMixture) -> Result<f64> {
        self.inner(other)?;
        let mut terms: Vec<Term> = self.terms.clone();
        for t in &other.terms {
            match terms.iter_mut().find(|u| u.center == t.center) {
                Some(u) => u.coeff -= t.coeff,
                None => terms.push(Term { coeff: -t.coeff, center: t.center }),
            }
        }
        let diff = GaussianMixture { dim: self.dim, widths: self.widths, terms };
        Ok(diff.norm_sqr().max(0.0).sqrt())
    }

    /// Rescales the coefficients so that `‖ψ‖ = 1`.
    pub fn normalized(&self) -> Self {
        let k = 1.0 / self.norm_sqr().sqrt();
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= k;
        }
        out
    }

    pub fn evaluate(&self, q: &[f64]) -> C64 {
        debug_assert_eq!(q.len(), self.dim);
        self.terms
            .iter()
            .map(|t| {
                let g: f64 = (0..self.dim)
                    .map(|c| gaussian(q[c] - t.center[c], self.widths[c]))
                    .product();
                t.coeff * g
            })
            .sum()
    }

    /// `|ψ(q)|² / ‖ψ‖²`.
    pub fn density_at(&self, q: &[f64]) -> f64 {
        self.evaluate(q).norm_sqr() / self.norm_sqr()
    }

    /// Density of one coordinate with the others integrated out.
    pub fn marginal_density_at(&self, coord: usize, x: f64) -> f64 {
        assert!(coord < self.dim);
        let s = self.widths[coord];
        let mut acc = 0.0;
        for (a, ti) in self.terms.iter().enumerate() {
            let gi = gaussian(x - ti.center[coord], s);
            for (b, tj) in self.terms.iter().enumerate() {
                let other: f64 = (0..self.dim)
                    .filter(|&c| c != coord)
                    .map(|c| self.overlap_1d(c, ti.center[c], tj.center[c]))
                    .product();
                let gj = if a == b { gi } else { gaussian(x - tj.center[coord], s) };
                acc += (ti.coeff.conj() * tj.coeff).re * other * gi * gj;
            }
        }
        acc / self.norm_sqr()
    }

    pub fn shifted(&self, by: &[f64]) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            for c in 0..self.dim {
                t.center[c] += by[c];
            }
        }
        out
    }

    /// Exact `⟨ψ|op|ψ⟩ / ⟨ψ|ψ⟩` from closed-form Gaussian overlap integrals.
    pub fn moment(&self, spec: &MomentSpec) -> Result<C64> {
        analytic_moment(self, spec)
    }

    pub fn mean(&self, coord: usize) -> f64 {
        self.moment(&MomentSpec::position(coord)).expect("valid spec").re
    }

    pub fn variance(&self, coord: usize) -> f64 {
        let m = self.mean(coord);
        let m2 = self
            .moment(&MomentSpec::single(coord, 2, 0))
            .expect("valid spec")
            .re;
        m2 - m * m
    }

    /// Variance of `Q_A + Q_B` for a two-coordinate mixture.
    pub fn sum_variance(&self) -> f64 {
        assert_eq!(self.dim, 2);
        let m = |s: MomentSpec| self.moment(&s).expect("valid spec").re;
        let mean = m(MomentSpec::position(0)) + m(MomentSpec::position(1));
        let second = m(MomentSpec::single(0, 2, 0)) + 2.0 * m(MomentSpec::qq()) + m(MomentSpec::single(1, 2, 0));
        second - mean * mean
    }

    /// Projects a two-coordinate mixture onto the `Q_A + Q_B` coordinate of
    /// width `Δ`: term `(c, (a, b))` becomes `(c, a + b)`.
    pub fn sum_coordinate_terms(&self) -> Vec<(C64, f64)> {
        self.terms
            .iter()
            .map(|t| (t.coeff, t.center[..self.dim].iter().sum()))
            .collect()
    }
}

/// Normalized Gaussian amplitude `(2πs²)^(-1/4) exp(−x²/4s²)`.
pub fn gaussian(x: f64, s: f64) -> f64 {
    (2.0 * std::f64::consts::PI * s * s).powf(-0.25) * (-x * x / (4.0 * s * s)).exp()
}

/// Powers of position and momentum per coordinate, position applied last
/// (i.e. the operator is `Π_c Q_c^q P_c^p`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MomentSpec {
    powers: [(u32, u32); MAX_COORDS],
}

impl MomentSpec {
    pub fn new(powers: &[(u32, u32)]) -> Result<Self> {
        if powers.is_empty() || powers.len() > MAX_COORDS {
            return Err(Error::invalid("moment spec needs one entry per coordinate"));
        }
        let mut p = [(0, 0); MAX_COORDS];
        p[..powers.len()].copy_from_slice(powers);
        let spec = MomentSpec { powers: p };
        if spec.degree() > MAX_MOMENT_DEGREE {
            return Err(Error::invalid(format!(
                "moment degree {} exceeds {MAX_MOMENT_DEGREE}",
                spec.degree()
            )));
        }
        Ok(spec)
    }

    pub fn single(coord: usize, q: u32, p: u32) -> Self {
        let mut powers = [(0, 0); MAX_COORDS];
        powers[coord] = (q, p);
        MomentSpec { powers }
    }

    pub fn position(coord: usize) -> Self {
        Self::single(coord, 1, 0)
    }

    pub fn momentum(coord: usize) -> Self {
        Self::single(coord, 0, 1)
    }

    /// `Q_A Q_B`
    pub fn qq() -> Self {
        MomentSpec { powers: [(1, 0), (1, 0)] }
    }

    /// `P_A P_B`
    pub fn pp() -> Self {
        MomentSpec { powers: [(0, 1), (0, 1)] }
    }

    /// `Q_A P_B`
    pub fn qp() -> Self {
        MomentSpec { powers: [(1, 0), (0, 1)] }
    }

    /// `P_A Q_B`
    pub fn pq() -> Self {
        MomentSpec { powers: [(0, 1), (1, 0)] }
    }

    pub fn powers(&self) -> &[(u32, u32); MAX_COORDS] {
        &self.powers
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().map(|(q, p)| q + p).sum()
    }

    /// True when the operator is Hermitian as written (no coordinate mixes
    /// position and momentum).
    pub fn is_hermitian(&self) -> bool {
        self.powers.iter().all(|&(q, p)| q == 0 || p == 0)
    }

    pub(crate) fn check_against(&self, mix: &GaussianMixture) -> Result<()> {
        if self.powers[mix.dim..].iter().any(|&(q, p)| q + p > 0) {
            return Err(Error::invalid(format!(
                "moment spec addresses a coordinate beyond the mixture dimension {}",
                mix.dim
            )));
        }
        Ok(())
    }
}

/// Coefficients of `∂ⁿg / g` for `g` centered at `mu` with width `s`,
/// lowest power first.
fn derivative_polynomial(n: u32, mu: f64, s: f64) -> Vec<f64> {
    let k = 1.0 / (2.0 * s * s);
    let mut poly = vec![1.0];
    for _ in 0..n {
        // D' − D·(x − μ)k
        let mut next = vec![0.0; poly.len() + 1];
        for (p, &a) in poly.iter().enumerate() {
            if p > 0 {
                next[p - 1] += p as f64 * a;
            }
            next[p + 1] -= a * k;
            next[p] += a * k * mu;
        }
        poly = next;
    }
    poly
}

/// Raw moments `E[xᵏ]`, `k = 0..=max`, of a normal with the given mean and variance.
fn normal_raw_moments(mean: f64, var: f64, max: usize) -> Vec<f64> {
    let mut m = vec![1.0; max + 1];
    if max >= 1 {
        m[1] = mean;
    }
    for k in 2..=max {
        m[k] = mean * m[k - 1] + (k - 1) as f64 * var * m[k - 2];
    }
    m
}

/// `∫ g_i(x) xᵐ (−i∂)ⁿ g_j(x) dx`.
fn pair_integral_1d(m: u32, n: u32, mu_i: f64, mu_j: f64, s: f64) -> C64 {
    let d = mu_i - mu_j;
    let overlap = (-d * d / (8.0 * s * s)).exp();
    if overlap == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let poly = derivative_polynomial(n, mu_j, s);
    let moments = normal_raw_moments(0.5 * (mu_i + mu_j), s * s, poly.len() + m as usize);
    let expectation: f64 = poly
        .iter()
        .enumerate()
        .map(|(p, &a)| a * moments[p + m as usize])
        .sum();
    C64::new(0.0, -1.0).powu(n) * (overlap * expectation)
}

pub fn analytic_moment(mix: &GaussianMixture, spec: &MomentSpec) -> Result<C64> {
    spec.check_against(mix)?;
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for ti in &mix.terms {
        for tj in &mix.terms {
            let w = ti.coeff.conj() * tj.coeff;
            let mut term = C64::new(1.0, 0.0);
            let mut ov = 1.0;
            for c in 0..mix.dim {
                let (q, p) = spec.powers[c];
                let s = mix.widths[c];
                ov *= mix.overlap_1d(c, ti.center[c], tj.center[c]);
                term *= pair_integral_1d(q, p, ti.center[c], tj.center[c], s);
            }
            num += w * term;
            den += (w * ov).re;
        }
    }
    if !(den > 0.0) {
        return Err(Error::NormVanishes);
    }
    Ok(num / den)
}

/// Initial device: a zero-centered product Gaussian.
pub fn standard_pointer(dim: usize, delta: f64, convention: WidthConvention) -> Result<GaussianMixture> {
    check_width(delta)?;
    let one = C64::new(1.0, 0.0);
    match dim {
        1 => GaussianMixture::one_dim(delta, &[(one, 0.0)]),
        2 => {
            let w = convention.coordinate_width(delta);
            GaussianMixture::two_dim([w, w], &[(one, [0.0, 0.0])])
        }
        _ => Err(Error::invalid(format!("pointer dimension must be 1 or 2, got {dim}"))),
    }
}

/// String front end for [`standard_pointer`].
pub fn standard_pointer_named(dim: usize, delta: f64, convention: &str) -> Result<GaussianMixture> {
    standard_pointer(dim, delta, convention.parse()?)
}

/// Entangled two-coordinate device `Σ_{l=0..k} G(Q₁ + lξ) G(Q₂ − lξ)`, every
/// term centered on `Q₁ + Q₂ = 0`, per-coordinate width `Δ/√2`, normalized.
pub fn comb_pointer(k: usize, xi: f64, delta: f64) -> Result<GaussianMixture> {
    check_width(delta)?;
    if k > MAX_COMB_TERMS {
        return Err(Error::invalid(format!("comb order {k} exceeds the cap {MAX_COMB_TERMS}")));
    }
    if !xi.is_finite() {
        return Err(Error::invalid("comb shift must be finite"));
    }
    // Pairwise term overlap is exp(−ξ²(i−j)²/2Δ²).
    let mut norm2 = 0.0;
    for i in 0..=k {
        for j in 0..=k {
            let d = (i as f64 - j as f64) * xi;
            norm2 += (-d * d / (2.0 * delta * delta)).exp();
        }
    }
    let coeff = C64::new(1.0 / norm2.sqrt(), 0.0);
    let w = WidthConvention::Split.coordinate_width(delta);
    let terms: Vec<(C64, [f64; 2])> = (0..=k)
        .map(|l| (coeff, [-(l as f64) * xi, l as f64 * xi]))
        .collect();
    GaussianMixture::two_dim([w, w], &terms)
}
