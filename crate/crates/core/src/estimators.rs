//! Joint weak values from pointer correlations, and the ensemble size each
//! measurement scheme needs to reach a given precision.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::coupling::{sum_readout, weak_couple_and_postselect, CouplingSpec};
use crate::error::{Error, Result};
use crate::hilbert::{HermitianOperator, C64};
use crate::pointer::{GaussianMixture, MomentSpec, WidthConvention};
use crate::tsvf::{weak_value, TwoStateVector};

/// Bilinear pointer correlations of a two-coordinate pointer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelatorSet {
    pub qq: C64,
    pub pp: C64,
    pub qp: C64,
    pub pq: C64,
    pub q_a: f64,
    pub q_b: f64,
    pub p_a: f64,
    pub p_b: f64,
    /// Single-shot variance of the product `Q_A Q_B`.
    pub qq_variance: f64,
    /// Single-shot variance of the product `P_A P_B`.
    pub pp_variance: f64,
    /// Pointer width per coordinate.
    pub width: f64,
}

pub fn correlators(mix: &GaussianMixture) -> Result<CorrelatorSet> {
    if mix.dim() != 2 {
        return Err(Error::invalid("correlators need a two-coordinate pointer"));
    }
    let m = |s: MomentSpec| mix.moment(&s);
    let qq = m(MomentSpec::qq())?;
    let pp = m(MomentSpec::pp())?;
    let qq2 = m(MomentSpec::new(&[(2, 0), (2, 0)])?)?.re;
    let pp2 = m(MomentSpec::new(&[(0, 2), (0, 2)])?)?.re;
    Ok(CorrelatorSet {
        qq,
        pp,
        qp: m(MomentSpec::qp())?,
        pq: m(MomentSpec::pq())?,
        q_a: m(MomentSpec::position(0))?.re,
        q_b: m(MomentSpec::position(1))?.re,
        p_a: m(MomentSpec::momentum(0))?.re,
        p_b: m(MomentSpec::momentum(1))?.re,
        qq_variance: qq2 - qq.re * qq.re,
        pp_variance: pp2 - pp.re * pp.re,
        width: mix.width(0),
    })
}

/// `[2⟨Q_AQ_B⟩ − Re(A_w* B_w)] + i[4Δ²⟨Q_AP_B⟩ − Im(A_w* B_w)]`.
pub fn resch_steinberg(corr: &CorrelatorSet, a_w: C64, b_w: C64) -> C64 {
    let d2 = corr.width * corr.width;
    let ab = a_w.conj() * b_w;
    C64::new(2.0 * corr.qq.re - ab.re, 4.0 * d2 * corr.qp.re - ab.im)
}

/// `[⟨Q_AQ_B⟩ − 4Δ⁴⟨P_AP_B⟩] + i·2Δ²[⟨Q_AP_B⟩ + ⟨P_AQ_B⟩]`.
///
/// To leading order `2Δ²⟨Q_AP_B⟩ → ½[Im(AB)_w + Im(A_w*B_w)]` and
/// `2Δ²⟨P_AQ_B⟩ → ½[Im(AB)_w − Im(A_w*B_w)]`, so the sum isolates `Im(AB)_w`.
pub fn lundeen(corr: &CorrelatorSet) -> C64 {
    let d2 = corr.width * corr.width;
    C64::new(corr.qq.re - 4.0 * d2 * d2 * corr.pp.re, 2.0 * d2 * (corr.qp.re + corr.pq.re))
}

/// `⟨(Q_A − 2Δ²P_A)(Q_B + 2Δ²P_B)⟩`, a single local observable.
///
/// Tends to `Re(AB)_w + Im(A_w*B_w)`; this is `Re(AB)_w` whenever the local
/// weak values are real.
pub fn combined_quadrature_readout(corr: &CorrelatorSet) -> f64 {
    let d2 = corr.width * corr.width;
    corr.qq.re + 2.0 * d2 * (corr.qp.re - corr.pq.re) - 4.0 * d2 * d2 * corr.pp.re
}

/// Single-pointer coupling to `A·B` as if a non-local interaction existed.
pub fn hypothetical_direct_product(
    tsv: &TwoStateVector,
    a: &HermitianOperator,
    b: &HermitianOperator,
    delta: f64,
) -> Result<GaussianMixture> {
    let ab = a.product(b)?;
    weak_couple_and_postselect(tsv, &CouplingSpec::local_single(ab, delta)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrecisionTarget {
    pub relative_bias: f64,
    pub relative_uncertainty: f64,
}

impl Default for PrecisionTarget {
    fn default() -> Self {
        PrecisionTarget { relative_bias: 0.01, relative_uncertainty: 0.10 }
    }
}

impl PrecisionTarget {
    pub fn new(relative_bias: f64, relative_uncertainty: f64) -> Result<Self> {
        let ok = |x: f64| x > 0.0 && x < 1.0;
        if !ok(relative_bias) || !ok(relative_uncertainty) {
            return Err(Error::invalid("precision targets must lie in (0, 1)"));
        }
        Ok(PrecisionTarget { relative_bias, relative_uncertainty })
    }
}

/// Logarithmic grid of pointer widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaGrid {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: u32,
}

impl Default for DeltaGrid {
    fn default() -> Self {
        DeltaGrid { lo: 0.1, hi: 1e8, per_decade: 32 }
    }
}

impl DeltaGrid {
    pub fn new(lo: f64, hi: f64, per_decade: u32) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) || per_decade == 0 {
            return Err(Error::invalid(format!("bad width grid {lo}:{hi}:{per_decade}")));
        }
        Ok(DeltaGrid { lo, hi, per_decade })
    }

    pub fn points(&self) -> Vec<f64> {
        let (l0, l1) = (self.lo.log10(), self.hi.log10());
        let steps = ((l1 - l0) * self.per_decade as f64 + 1e-9).floor() as usize;
        (0..=steps)
            .map(|i| 10f64.powf(l0 + i as f64 / self.per_decade as f64))
            .collect()
    }
}

impl FromStr for DeltaGrid {
    type Err = Error;

    /// `lo:hi:per_decade`, e.g. `0.1:1e8:32`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid(format!("width grid `{s}` is not lo:hi:per_decade"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let per: u32 = parts[2].trim().parse().map_err(|_| bad())?;
        DeltaGrid::new(lo, hi, per)
    }
}

/// Measurement schemes compared by [`required_ensemble_size`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleScheme {
    /// One pointer on `A`; statistic `Q`.
    LocalSingle,
    /// One pointer on `A + B`; statistic `Q₊`.
    EntangledSum,
    /// Split-width local pointers on `A` and `B`; statistic `Q_A + Q_B`.
    LocalPair,
    /// Local pointers of width `Δ`; estimator `2⟨Q_AQ_B⟩ − Re(A_w*B_w)`,
    /// statistic `2 Q_AQ_B`.
    JointResch,
    /// Local pointers of width `Δ`; estimator `⟨Q_AQ_B⟩ − 4Δ⁴⟨P_AP_B⟩`,
    /// statistic `Q_AQ_B`.
    JointLundeen,
    /// One pointer on `A·B`; statistic `Q`.
    DirectProduct,
}

impl EnsembleScheme {
    pub const ALL: [EnsembleScheme; 6] = [
        EnsembleScheme::LocalSingle,
        EnsembleScheme::EntangledSum,
        EnsembleScheme::LocalPair,
        EnsembleScheme::JointResch,
        EnsembleScheme::JointLundeen,
        EnsembleScheme::DirectProduct,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EnsembleScheme::LocalSingle => "local_single",
            EnsembleScheme::EntangledSum => "entangled_sum",
            EnsembleScheme::LocalPair => "local_pair",
            EnsembleScheme::JointResch => "joint_resch",
            EnsembleScheme::JointLundeen => "joint_lundeen",
            EnsembleScheme::DirectProduct => "direct_product",
        }
    }

    fn needs_pair(&self) -> bool {
        !matches!(self, EnsembleScheme::LocalSingle)
    }
}

impl fmt::Display for EnsembleScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnsembleScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnsembleScheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown ensemble scheme `{s}`")))
    }
}

/// Observables and selection for one ensemble comparison.
#[derive(Clone, Debug)]
pub struct SchemeInput<'a> {
    pub tsv: &'a TwoStateVector,
    pub a: &'a HermitianOperator,
    pub b: Option<&'a HermitianOperator>,
}

impl<'a> SchemeInput<'a> {
    fn pair(&self, scheme: EnsembleScheme) -> Result<&'a HermitianOperator> {
        self.b
            .ok_or_else(|| Error::invalid(format!("scheme {scheme} needs two observables")))
    }

    /// Exact weak value the scheme is meant to reach.
    pub fn reference(&self, scheme: EnsembleScheme) -> Result<C64> {
        match scheme {
            EnsembleScheme::LocalSingle => weak_value(self.tsv, self.a),
            EnsembleScheme::EntangledSum | EnsembleScheme::LocalPair => {
                weak_value(self.tsv, &self.a.add(self.pair(scheme)?)?)
            }
            EnsembleScheme::JointResch | EnsembleScheme::JointLundeen | EnsembleScheme::DirectProduct => {
                weak_value(self.tsv, &self.a.product(self.pair(scheme)?)?)
            }
        }
    }
}

/// Real readout of a scheme at one width, with the single-shot standard
/// deviation of its statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchemePoint {
    pub delta: f64,
    pub readout: f64,
    pub sigma: f64,
}

pub fn scheme_point(scheme: EnsembleScheme, input: &SchemeInput<'_>, delta: f64) -> Result<SchemePoint> {
    let tsv = input.tsv;
    let (readout, sigma) = match scheme {
        EnsembleScheme::LocalSingle => {
            let m = weak_couple_and_postselect(tsv, &CouplingSpec::local_single(input.a.clone(), delta)?)?;
            (m.mean(0), m.variance(0).sqrt())
        }
        EnsembleScheme::EntangledSum => {
            let b = input.pair(scheme)?;
            let m = weak_couple_and_postselect(tsv, &CouplingSpec::entangled_sum(input.a.clone(), b.clone(), delta)?)?;
            (m.mean(0), m.variance(0).sqrt())
        }
        EnsembleScheme::LocalPair => {
            let b = input.pair(scheme)?;
            let spec = CouplingSpec::local_pair(input.a.clone(), b.clone(), delta, WidthConvention::Split)?;
            let m = weak_couple_and_postselect(tsv, &spec)?;
            (sum_readout(&m)?, m.sum_variance().sqrt())
        }
        EnsembleScheme::JointResch | EnsembleScheme::JointLundeen => {
            let b = input.pair(scheme)?;
            let spec = CouplingSpec::local_pair(input.a.clone(), b.clone(), delta, WidthConvention::Single)?;
            let corr = correlators(&weak_couple_and_postselect(tsv, &spec)?)?;
            let sd = corr.qq_variance.max(0.0).sqrt();
            if scheme == EnsembleScheme::JointResch {
                let (aw, bw) = (weak_value(tsv, input.a)?, weak_value(tsv, b)?);
                (resch_steinberg(&corr, aw, bw).re, 2.0 * sd)
            } else {
                (lundeen(&corr).re, sd)
            }
        }
        EnsembleScheme::DirectProduct => {
            let m = hypothetical_direct_product(tsv, input.a, input.pair(scheme)?, delta)?;
            (m.mean(0), m.variance(0).sqrt())
        }
    };
    Ok(SchemePoint { delta, readout, sigma })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRequirement {
    pub scheme: EnsembleScheme,
    pub reference: C64,
    pub delta_star: f64,
    pub bias: f64,
    pub sigma: f64,
    pub n: u128,
}

/// `ceil(x)`, treating values within rounding noise of an integer as that integer.
fn ceil_count(x: f64) -> u128 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u128
    } else {
        x.ceil() as u128
    }
}

/// Smallest grid width whose readout bias is within `relative_bias·|ref|`,
/// and the ensemble needed there for a standard error of
/// `relative_uncertainty·|ref|`.
pub fn required_ensemble_size(
    scheme: EnsembleScheme,
    input: &SchemeInput<'_>,
    target: PrecisionTarget,
    grid: &DeltaGrid,
) -> Result<EnsembleRequirement> {
    if scheme.needs_pair() {
        input.pair(scheme)?;
    }
    let reference = input.reference(scheme)?;
    let scale = reference.norm();
    if !(scale > 0.0) {
        return Err(Error::invalid("reference weak value is zero; relative precision undefined"));
    }
    let mut best = (f64::INFINITY, f64::NAN);
    for delta in grid.points() {
        let pt = scheme_point(scheme, input, delta)?;
        let bias = pt.readout - reference.re;
        if bias.abs() < best.0 {
            best = (bias.abs(), delta);
        }
        if bias.abs() <= target.relative_bias * scale {
            let n = (pt.sigma / (target.relative_uncertainty * scale)).powi(2);
            return Ok(EnsembleRequirement {
                scheme,
                reference,
                delta_star: delta,
                bias,
                sigma: pt.sigma,
                n: ceil_count(n),
            });
        }
    }
    Err(Error::BiasUnreachable { best_bias: best.0, best_width: best.1 })
}

/// Readout of `scheme` across the grid.
pub fn scheme_curve(scheme: EnsembleScheme, input: &SchemeInput<'_>, grid: &DeltaGrid) -> Result<Vec<SchemePoint>> {
    grid.points().into_iter().map(|d| scheme_point(scheme, input, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{sigma_z, StateVector};
    use crate::pointer::standard_pointer;
    use crate::systems::{local_z_pair, product_family_member, sum_example};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pair_pointer(tsv: &TwoStateVector, delta: f64) -> GaussianMixture {
        let (a, b) = local_z_pair();
        weak_couple_and_postselect(tsv, &CouplingSpec::local_pair(a, b, delta, WidthConvention::Single).unwrap()).unwrap()
    }

    #[test]
    fn uncoupled_pointer_error_scales() {
        for delta in [0.5, 3.0, 40.0] {
            let corr = correlators(&standard_pointer(2, delta, WidthConvention::Single).unwrap()).unwrap();
            assert_abs_diff_eq!(corr.qq.norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(corr.pp.norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(corr.qq_variance.sqrt(), delta * delta, epsilon = 1e-12 * delta * delta);
            assert_abs_diff_eq!(corr.pp_variance.sqrt(), 1.0 / (4.0 * delta * delta), epsilon = 1e-12);
            assert_abs_diff_eq!(lundeen(&corr).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(combined_quadrature_readout(&corr), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn product_mixture_factorizes() {
        let a = [(c(1.0, 0.3), -0.5), (c(0.4, -0.2), 1.5)];
        let b = [(c(0.8, 0.0), 0.7), (c(-0.1, 0.6), -1.2)];
        let mut terms = Vec::new();
        for (ca, xa) in a {
            for (cb, xb) in b {
                terms.push((ca * cb, [xa, xb]));
            }
        }
        let joint = GaussianMixture::two_dim([1.1, 1.1], &terms).unwrap();
        let corr = correlators(&joint).unwrap();
        assert_abs_diff_eq!(corr.qp.re, corr.q_a * corr.p_b, epsilon = 1e-12);
        assert_abs_diff_eq!(corr.pq.re, corr.p_a * corr.q_b, epsilon = 1e-12);
        for v in [corr.qq, corr.pp, corr.qp, corr.pq] {
            assert!(v.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn product_estimators_on_the_sum_example() {
        let tsv = sum_example(0.11, -0.05).unwrap();
        let (a, b) = local_z_pair();
        let (aw, bw) = (weak_value(&tsv, &a).unwrap(), weak_value(&tsv, &b).unwrap());
        let corr = correlators(&pair_pointer(&tsv, 1e5)).unwrap();
        assert!((lundeen(&corr).re - 21.0).abs() <= 0.21);
        assert!((resch_steinberg(&corr, aw, bw).re - 21.0).abs() <= 0.21);
        assert!(lundeen(&corr).im.abs() <= 1e-3);
    }

    #[test]
    fn imaginary_product_from_family() {
        for t in [0.7, 2.0] {
            let tsv = product_family_member(t).unwrap();
            let corr = correlators(&pair_pointer(&tsv, 1e3)).unwrap();
            let l = lundeen(&corr);
            assert!((l - c(1.0, 2.0 / 3.0)).norm() <= 1e-4, "{l}");
            let d2 = 1e6;
            assert!((2.0 * d2 * corr.qp.re - (1.0 / 3.0 + 2.0 / (9.0 * t))).abs() <= 1e-4);
            assert!((2.0 * d2 * corr.pq.re - (1.0 / 3.0 - 2.0 / (9.0 * t))).abs() <= 1e-4);
            // Re(AB)_w + Im(A_w* B_w) with Im(A_w* B_w) = 4/(9t).
            assert!((combined_quadrature_readout(&corr) - (1.0 + 4.0 / (9.0 * t))).abs() <= 1e-4);
        }
    }

    #[test]
    fn combined_readout_matches_real_part_for_real_weak_values() {
        let tsv = sum_example(0.3, 0.2).unwrap();
        let corr = correlators(&pair_pointer(&tsv, 1e4)).unwrap();
        assert!((combined_quadrature_readout(&corr) - lundeen(&corr).re).abs() <= 1e-6);
    }

    #[test]
    fn family_members_disagree_on_raw_correlations() {
        // Same (AB)_w, different A_w* B_w: ⟨Q_AQ_B⟩ alone cannot be pooled.
        let delta = 1e3;
        let q1 = correlators(&pair_pointer(&product_family_member(0.5).unwrap(), delta)).unwrap();
        let q2 = correlators(&pair_pointer(&product_family_member(4.0).unwrap(), delta)).unwrap();
        assert!((q1.qq.re - q2.qq.re).abs() > 0.1);
        assert!((lundeen(&q1) - lundeen(&q2)).norm() <= 1e-4);
    }

    #[test]
    fn identity_product_resch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let i2 = crate::hilbert::HermitianOperator::identity(vec![2]).unwrap();
        let (ia, ib) = (i2.embed(&[2, 2], 0).unwrap(), i2.embed(&[2, 2], 1).unwrap());
        for _ in 0..5 {
            let draw = |rng: &mut ChaCha8Rng| {
                StateVector::new(vec![2, 2], (0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap()
            };
            let tsv = TwoStateVector::new(draw(&mut rng), draw(&mut rng)).unwrap();
            let spec = CouplingSpec::local_pair(ia.clone(), ib.clone(), 1e4, WidthConvention::Single).unwrap();
            let corr = correlators(&weak_couple_and_postselect(&tsv, &spec).unwrap()).unwrap();
            let r = resch_steinberg(&corr, c(1.0, 0.0), c(1.0, 0.0));
            assert_abs_diff_eq!((r - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
        }
    }

    fn random_moderate_tsv(rng: &mut ChaCha8Rng, bound: f64) -> TwoStateVector {
        let (a, b) = local_z_pair();
        loop {
            let draw = |rng: &mut ChaCha8Rng| {
                StateVector::new(vec![2, 2], (0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                    .unwrap()
                    .normalize()
                    .unwrap()
            };
            let tsv = TwoStateVector::new(draw(rng), draw(rng)).unwrap();
            if tsv.overlap().norm() < 0.3 {
                continue;
            }
            let ok = [&a, &b, &a.product(&b).unwrap()]
                .iter()
                .all(|o| weak_value(&tsv, o).unwrap().norm() <= bound);
            if ok {
                return tsv;
            }
        }
    }

    #[test]
    fn estimators_converge_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (a, b) = local_z_pair();
        let ab = a.product(&b).unwrap();
        for _ in 0..10 {
            let tsv = random_moderate_tsv(&mut rng, 3.0);
            let want = weak_value(&tsv, &ab).unwrap();
            let (aw, bw) = (weak_value(&tsv, &a).unwrap(), weak_value(&tsv, &b).unwrap());
            let errs = |d: f64| {
                let corr = correlators(&pair_pointer(&tsv, d)).unwrap();
                ((resch_steinberg(&corr, aw, bw) - want).norm(), (lundeen(&corr) - want).norm())
            };
            let (r2, l2) = errs(1e2);
            let (r4, l4) = errs(1e4);
            for (e2, e4) in [(r2, r4), (l2, l4)] {
                let slope = (e4 / e2).log10() / 2.0;
                assert!((slope + 2.0).abs() <= 0.1, "slope {slope}");
            }
            let (r3, l3) = errs(1e3);
            assert!(r3 <= 1e-4 * want.norm().max(1.0) && l3 <= 1e-4 * want.norm().max(1.0));
        }
    }

    #[test]
    fn delta_grid_points() {
        let g = DeltaGrid::default();
        let p = g.points();
        assert_eq!(p.len(), 9 * 32 + 1);
        assert_abs_diff_eq!(p[0], 0.1, epsilon = 1e-15);
        assert!((p[p.len() - 1] / 1e8 - 1.0).abs() < 1e-12);
        assert_eq!("1:100:4".parse::<DeltaGrid>().unwrap().points().len(), 9);
        assert!("1:100".parse::<DeltaGrid>().is_err());
        assert!("0:100:4".parse::<DeltaGrid>().is_err());
        assert!(PrecisionTarget::new(0.0, 0.1).is_err());
    }

    #[test]
    fn eigenstate_ensemble_is_bias_free() {
        let up = StateVector::basis(vec![2], &[0]).unwrap();
        let tsv = TwoStateVector::new(up.clone(), up).unwrap();
        let z = sigma_z();
        let input = SchemeInput { tsv: &tsv, a: &z, b: None };
        let req = required_ensemble_size(EnsembleScheme::LocalSingle, &input, PrecisionTarget::default(), &DeltaGrid::default()).unwrap();
        assert_eq!(req.bias, 0.0);
        assert_abs_diff_eq!(req.delta_star, 0.1, epsilon = 1e-15);
        assert_eq!(req.n, 1);
    }

    #[test]
    fn unreachable_bias_is_reported() {
        let tsv = sum_example(0.11, -0.05).unwrap();
        let (a, b) = local_z_pair();
        let input = SchemeInput { tsv: &tsv, a: &a, b: Some(&b) };
        let grid = DeltaGrid::new(0.1, 10.0, 8).unwrap();
        let r = required_ensemble_size(EnsembleScheme::EntangledSum, &input, PrecisionTarget::default(), &grid);
        assert!(matches!(r, Err(Error::BiasUnreachable { .. })));
        let single = SchemeInput { tsv: &tsv, a: &a, b: None };
        assert!(required_ensemble_size(EnsembleScheme::LocalPair, &single, PrecisionTarget::default(), &grid).is_err());
    }

    #[test]
    fn sum_schemes_ensemble_sizes() {
        let tsv = sum_example(0.11, -0.05).unwrap();
        let (a, b) = local_z_pair();
        let input = SchemeInput { tsv: &tsv, a: &a, b: Some(&b) };
        let t = PrecisionTarget::default();
        let g = DeltaGrid::default();
        let ent = required_ensemble_size(EnsembleScheme::EntangledSum, &input, t, &g).unwrap();
        let loc = required_ensemble_size(EnsembleScheme::LocalPair, &input, t, &g).unwrap();
        assert!(ent.n as f64 >= 1.1e3 && ent.n as f64 <= 4.4e3, "{ent:?}");
        assert!(loc.n as f64 >= 4.1e5 && loc.n as f64 <= 1.64e6, "{loc:?}");
    }

    #[test]
    fn local_pair_is_costlier_across_delta() {
        let (a, b) = local_z_pair();
        let t = PrecisionTarget::default();
        let g = DeltaGrid::default();
        for i in 0..=9 {
            let d = 0.1001 + i as f64 * (1.0 - 0.1001) / 9.0;
            let tsv = sum_example(d, -0.05).unwrap();
            let input = SchemeInput { tsv: &tsv, a: &a, b: Some(&b) };
            let ent = required_ensemble_size(EnsembleScheme::EntangledSum, &input, t, &g).unwrap();
            let loc = required_ensemble_size(EnsembleScheme::LocalPair, &input, t, &g).unwrap();
            assert!(loc.n > ent.n, "δ={d}: local {} vs entangled {}", loc.n, ent.n);
        }
    }

    #[test]
    fn direct_product_readout() {
        let tsv = sum_example(0.11, -0.05).unwrap();
        let (a, b) = local_z_pair();
        let err = |d: f64| (hypothetical_direct_product(&tsv, &a, &b, d).unwrap().mean(0) - 21.0).abs();
        assert!(err(1e3) < 0.01);
        let slope = (err(1e3) / err(1e2)).log10();
        assert!((slope + 2.0).abs() <= 0.1, "slope {slope}");
        let up = StateVector::basis(vec![2, 2], &[0, 1]).unwrap();
        let eig = TwoStateVector::new(up.clone(), up).unwrap();
        let m = hypothetical_direct_product(&eig, &a, &b, 3.0).unwrap();
        assert_eq!(m.terms().len(), 1);
        assert_eq!(m.terms()[0].center[0], -1.0);
    }
}
