//! Quantities of a pre- and post-selected system: weak values, weak
//! variances, ABL outcome probabilities and sequential weak values.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{inner, HermitianOperator, StateVector, UnitaryOperator, C64};

/// `|overlap| / (‖pre‖·‖post‖)` at or below this counts as orthogonal.
pub const OVERLAP_TOL: f64 = 1e-14;

/// Normalized ABL denominators at or below this mean no outcome reaches the
/// post-selection.
pub const ABL_DENOMINATOR_TOL: f64 = 1e-28;

/// Pre-selected ket `|Ψ⟩` and post-selected bra `⟨Φ|` (stored as the ket `|Φ⟩`).
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStateVector {
    pre: StateVector,
    post: StateVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AblOutcome {
    pub eigenvalue: f64,
    pub probability: f64,
}

impl TwoStateVector {
    pub fn new(pre: StateVector, post: StateVector) -> Result<Self> {
        if pre.dims() != post.dims() {
            return Err(Error::DimensionMismatch {
                expected: pre.dims().to_vec(),
                found: post.dims().to_vec(),
            });
        }
        Ok(TwoStateVector { pre, post })
    }

    pub fn pre(&self) -> &StateVector {
        &self.pre
    }

    pub fn post(&self) -> &StateVector {
        &self.post
    }

    pub fn dims(&self) -> &[usize] {
        self.pre.dims()
    }

    /// `⟨Φ|Ψ⟩`.
    pub fn overlap(&self) -> C64 {
        inner(&self.post, &self.pre).expect("dims checked at construction")
    }

    fn norm_product(&self) -> f64 {
        self.pre.norm() * self.post.norm()
    }

    fn checked_overlap(&self) -> Result<C64> {
        let ov = self.overlap();
        let scale = self.norm_product();
        let rel = if scale > 0.0 { ov.norm() / scale } else { 0.0 };
        if !(rel > OVERLAP_TOL) {
            return Err(Error::OverlapVanishes { overlap: ov.norm() });
        }
        Ok(ov)
    }

    /// `⟨Φ|op|Ψ⟩`.
    pub fn amplitude(&self, op: &HermitianOperator) -> Result<C64> {
        op.sandwich(&self.post, &self.pre)
    }

    pub fn weak_value(&self, a: &HermitianOperator) -> Result<C64> {
        weak_value(self, a)
    }
}

/// `⟨Φ|A|Ψ⟩ / ⟨Φ|Ψ⟩`.
pub fn weak_value(tsv: &TwoStateVector, a: &HermitianOperator) -> Result<C64> {
    let ov = tsv.checked_overlap()?;
    Ok(tsv.amplitude(a)? / ov)
}

/// `(A²)_w − (A_w)²`, kept complex and un-rooted.
pub fn weak_variance(tsv: &TwoStateVector, a: &HermitianOperator) -> Result<C64> {
    let aw = weak_value(tsv, a)?;
    let a2w = weak_value(tsv, &a.square())?;
    Ok(a2w - aw * aw)
}

/// Leading correction to a Gaussian pointer of width `delta`:
/// `[(A²)_w − (A_w)²] / (4Δ²)`.
pub fn weakness_metric(tsv: &TwoStateVector, a: &HermitianOperator, delta: f64) -> Result<C64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("pointer width must be positive, got {delta}")));
    }
    Ok(weak_variance(tsv, a)? / (4.0 * delta * delta))
}

/// ABL probabilities of each (merged) eigenvalue of `c`, ascending by eigenvalue.
pub fn abl_probabilities(tsv: &TwoStateVector, c: &HermitianOperator) -> Result<Vec<AblOutcome>> {
    if c.dims() != tsv.dims() {
        return Err(Error::DimensionMismatch {
            expected: tsv.dims().to_vec(),
            found: c.dims().to_vec(),
        });
    }
    let pre = tsv.pre.amplitudes();
    let post = tsv.post.amplitudes();
    let weights: Vec<(f64, f64)> = c
        .eigenspaces()
        .iter()
        .map(|e| (e.value, post.dotc(&(&e.projector * pre)).norm_sqr()))
        .collect();
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let scale = tsv.norm_product().powi(2);
    if !(scale > 0.0) || !(total / scale > ABL_DENOMINATOR_TOL) {
        return Err(Error::PostSelectionImpossible);
    }
    Ok(weights
        .into_iter()
        .map(|(eigenvalue, w)| AblOutcome {
            eigenvalue,
            probability: w / total,
        })
        .collect())
}

/// Mean strong-measurement result `Σ c_n Prob(c_n)` of a pre- and post-selected system.
pub fn pp_expectation(tsv: &TwoStateVector, c: &HermitianOperator) -> Result<f64> {
    Ok(abl_probabilities(tsv, c)?
        .iter()
        .map(|o| o.eigenvalue * o.probability)
        .sum())
}

/// `⟨Φ|B·V·A|Ψ⟩ / ⟨Φ|V|Ψ⟩`; with `V = I` this is `(BA)_w`.
pub fn sequential_weak_value(
    tsv: &TwoStateVector,
    a: &HermitianOperator,
    b: &HermitianOperator,
    v: &UnitaryOperator,
) -> Result<C64> {
    let evolved_pre = v.apply(&tsv.pre)?;
    let denom = inner(&tsv.post, &evolved_pre)?;
    let scale = tsv.norm_product();
    if !(scale > 0.0) || !(denom.norm() / scale > OVERLAP_TOL) {
        return Err(Error::OverlapVanishes { overlap: denom.norm() });
    }
    let chain = b.apply(&v.apply(&a.apply(&tsv.pre)?)?)?;
    Ok(inner(&tsv.post, &chain)? / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{sigma_x, sigma_z, up, Tensor};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Pre `(1+ε)|↑↓⟩ + (−1+ε)|↓↑⟩ + δ|↑↑⟩`, post `|↑↓⟩+|↓↑⟩+|↑↑⟩+|↓↓⟩`.
    pub(crate) fn sum_example(delta: f64, eps: f64) -> TwoStateVector {
        let dims = vec![2, 2];
        let pre = StateVector::from_terms(
            dims.clone(),
            &[(c(1.0 + eps, 0.0), &[0, 1]), (c(-1.0 + eps, 0.0), &[1, 0]), (c(delta, 0.0), &[0, 0])],
        )
        .unwrap();
        let post = StateVector::new(dims, vec![c(0.5, 0.0); 4]).unwrap();
        TwoStateVector::new(pre.normalize().unwrap(), post).unwrap()
    }

    fn zs() -> (HermitianOperator, HermitianOperator) {
        let dims = [2, 2];
        (sigma_z().embed(&dims, 0).unwrap(), sigma_z().embed(&dims, 1).unwrap())
    }

    /// Pre `|↑↓⟩+|↓↑⟩+ε|↑↑⟩`, post `|↑↓⟩−|↓↑⟩+ε|↑↑⟩` (normalizers dropped).
    fn abl_example(eps: f64) -> TwoStateVector {
        let dims = vec![2, 2];
        let pre = StateVector::from_terms(
            dims.clone(),
            &[(c(1.0, 0.0), &[0, 1]), (c(1.0, 0.0), &[1, 0]), (c(eps, 0.0), &[0, 0])],
        )
        .unwrap();
        let post = StateVector::from_terms(
            dims,
            &[(c(1.0, 0.0), &[0, 1]), (c(-1.0, 0.0), &[1, 0]), (c(eps, 0.0), &[0, 0])],
        )
        .unwrap();
        TwoStateVector::new(pre, post).unwrap()
    }

    fn random_tsv(rng: &mut impl Rng, dims: Vec<usize>) -> TwoStateVector {
        let n: usize = dims.iter().product();
        let mut draw = || {
            StateVector::new(
                dims.clone(),
                (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
            )
            .unwrap()
        };
        let pre = draw();
        let post = draw();
        TwoStateVector::new(pre, post).unwrap()
    }

    fn random_hermitian(dims: Vec<usize>, rng: &mut impl Rng) -> HermitianOperator {
        let n: usize = dims.iter().product();
        let a = DMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        HermitianOperator::new(dims, (&a + a.adjoint()) * c(0.5, 0.0)).unwrap()
    }

    #[test]
    fn sum_example_weak_values() {
        let tsv = sum_example(0.11, -0.05);
        let (za, zb) = zs();
        let sum = za.add(&zb).unwrap();
        assert_abs_diff_eq!((weak_value(&tsv, &sum).unwrap() - c(22.0, 0.0)).norm(), 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!((weak_value(&tsv, &za).unwrap() - c(211.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!((weak_value(&tsv, &zb).unwrap() - c(-189.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
        let prod = za.product(&zb).unwrap();
        assert_abs_diff_eq!((weak_value(&tsv, &prod).unwrap() - c(21.0, 0.0)).norm(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn spin_hundred_style_weak_value() {
        let eps = 0.1f64.atan();
        let post = StateVector::new(vec![2], vec![c(eps.sin(), 0.0), c(eps.cos(), 0.0)]).unwrap();
        let tsv = TwoStateVector::new(up(), post).unwrap();
        assert_abs_diff_eq!((weak_value(&tsv, &sigma_x()).unwrap() - c(10.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenstate_cases() {
        let tsv = TwoStateVector::new(up(), up()).unwrap();
        assert_eq!(weak_value(&tsv, &sigma_z()).unwrap(), c(1.0, 0.0));
        assert_eq!(weak_variance(&tsv, &sigma_z()).unwrap(), c(0.0, 0.0));
        assert_eq!(pp_expectation(&tsv, &sigma_z()).unwrap(), 1.0);
        for d in [0.1, 1.0, 100.0] {
            assert_eq!(weakness_metric(&tsv, &sigma_z(), d).unwrap(), c(0.0, 0.0));
        }
        let probs = abl_probabilities(&tsv, &sigma_z()).unwrap();
        assert_eq!(probs[1], AblOutcome { eigenvalue: 1.0, probability: 1.0 });
        assert_eq!(probs[0].probability, 0.0);
    }

    #[test]
    fn weak_variance_of_sum_example() {
        // By hand: (A²)_w for A = σA+σB is 4δ/(2ε+δ) = 44, and A_w = 22.
        let tsv = sum_example(0.11, -0.05);
        let (za, zb) = zs();
        let sum = za.add(&zb).unwrap();
        let v = weak_variance(&tsv, &sum).unwrap();
        assert_abs_diff_eq!(v.re, 44.0 - 484.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-9);
        let va = weak_variance(&tsv, &za).unwrap();
        assert_abs_diff_eq!(va.re, 1.0 - 211.0 * 211.0, epsilon = 1e-7);
        let m = weakness_metric(&tsv, &sum, 10.0).unwrap();
        assert_abs_diff_eq!(m.re, -1.1, epsilon = 1e-12);
        let ratio = weakness_metric(&tsv, &za, 3.0).unwrap() / weakness_metric(&tsv, &za, 6.0).unwrap();
        assert_abs_diff_eq!(ratio.re, 4.0, epsilon = 1e-12);
        assert!(weakness_metric(&tsv, &za, 0.0).is_err());
    }

    #[test]
    fn orthogonal_selection_is_rejected() {
        let tsv = TwoStateVector::new(up(), crate::hilbert::down()).unwrap();
        assert!(matches!(weak_value(&tsv, &sigma_z()), Err(Error::OverlapVanishes { .. })));
        // Nearly orthogonal is the interesting regime and must be accepted.
        let e = 1e-9;
        let post = StateVector::new(vec![2], vec![c(e, 0.0), c(1.0, 0.0)]).unwrap();
        let tsv = TwoStateVector::new(up(), post).unwrap();
        let w = weak_value(&tsv, &sigma_x()).unwrap();
        assert_abs_diff_eq!(w.re / 1e9, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn abl_nonlocal_sum_is_certain() {
        let (za, zb) = zs();
        let sum = za.add(&zb).unwrap();
        for eps in [0.05, 0.2, 0.3, 1.0, 3.0] {
            let probs = abl_probabilities(&abl_example(eps), &sum).unwrap();
            let top = probs.iter().find(|o| (o.eigenvalue - 2.0).abs() < 1e-9).unwrap();
            assert_eq!(top.probability, 1.0);
            assert_abs_diff_eq!(pp_expectation(&abl_example(eps), &sum).unwrap(), 2.0, epsilon = 1e-15);
        }
        // At ε = 0 no outcome of the sum reaches the post-selection.
        assert!(matches!(
            abl_probabilities(&abl_example(0.0), &sum),
            Err(Error::PostSelectionImpossible)
        ));
    }

    #[test]
    fn abl_local_symmetric_case() {
        let (za, _) = zs();
        let probs = abl_probabilities(&abl_example(0.0), &za).unwrap();
        assert_abs_diff_eq!(probs[0].probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(probs[1].probability, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn local_expectation_closed_form() {
        // |⟨Φ|Π↑|Ψ⟩|² = (1+ε²)², |⟨Φ|Π↓|Ψ⟩|² = 1 by direct expansion.
        let (za, _) = zs();
        let eps: f64 = 0.2;
        let e2 = eps * eps;
        let expected = ((1.0 + e2).powi(2) - 1.0) / ((1.0 + e2).powi(2) + 1.0);
        assert_abs_diff_eq!(expected, 0.0816 / 2.0816, epsilon = 1e-15);
        let got = pp_expectation(&abl_example(eps), &za).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    }

    /// Independent enumeration over product-basis projectors.
    fn brute_force_joint(tsv: &TwoStateVector) -> Vec<f64> {
        let pre = tsv.pre().amplitudes();
        let post = tsv.post().amplitudes();
        let w: Vec<f64> = (0..4).map(|k| (post[k].conj() * pre[k]).norm_sqr()).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }

    #[test]
    fn abl_joint_matches_enumeration() {
        // Non-degenerate joint observable with eigenvalue k on basis ket k.
        let joint = HermitianOperator::diagonal(vec![2, 2], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        for eps in [0.3, 0.7] {
            let tsv = abl_example(eps);
            let probs = abl_probabilities(&tsv, &joint).unwrap();
            let brute = brute_force_joint(&tsv);
            for (o, b) in probs.iter().zip(&brute) {
                assert_abs_diff_eq!(o.probability, *b, epsilon = 1e-12);
            }
            let e4 = eps.powi(4);
            assert_abs_diff_eq!(probs[0].probability, e4 / (2.0 + e4), epsilon = 1e-14);
        }
    }

    #[test]
    fn sequential_reduces_to_product() {
        let tsv = sum_example(0.11, -0.05);
        let (za, zb) = zs();
        let id = UnitaryOperator::identity(vec![2, 2]).unwrap();
        let w = sequential_weak_value(&tsv, &za, &zb, &id).unwrap();
        assert_abs_diff_eq!((w - c(21.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
        let eye = HermitianOperator::identity(vec![2, 2]).unwrap();
        let v = UnitaryOperator::exp_i(&sigma_x().embed(&[2, 2], 1).unwrap(), 0.4).unwrap();
        let w = sequential_weak_value(&tsv, &eye, &eye, &v).unwrap();
        assert_abs_diff_eq!((w - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sequential_against_matrix_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tsv = random_tsv(&mut rng, vec![2]);
        let v = UnitaryOperator::new(vec![2], sigma_x().matrix().clone()).unwrap();
        let got = sequential_weak_value(&tsv, &sigma_z(), &sigma_z(), &v).unwrap();
        let z = sigma_z().matrix().clone();
        let x = sigma_x().matrix().clone();
        let chain = &z * &x * &z;
        let pre = tsv.pre().amplitudes();
        let post = tsv.post().amplitudes();
        let want = post.dotc(&(&chain * pre)) / post.dotc(&(&x * pre));
        assert_abs_diff_eq!((got - want).norm(), 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn weak_value_is_linear(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tsv = random_tsv(&mut rng, vec![2, 2]);
            let a = random_hermitian(vec![2, 2], &mut rng);
            let b = random_hermitian(vec![2, 2], &mut rng);
            let lhs = weak_value(&tsv, &a.add(&b).unwrap()).unwrap();
            let rhs = weak_value(&tsv, &a).unwrap() + weak_value(&tsv, &b).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }

        #[test]
        fn gauge_invariance(seed in any::<u64>(), re1 in -3.0..3.0f64, im1 in -3.0..3.0f64,
                            re2 in -3.0..3.0f64, im2 in -3.0..3.0f64) {
            prop_assume!(c(re1, im1).norm() > 0.1 && c(re2, im2).norm() > 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tsv = random_tsv(&mut rng, vec![2, 2]);
            let a = random_hermitian(vec![2, 2], &mut rng);
            let scaled = TwoStateVector::new(tsv.pre().scale(c(re1, im1)), tsv.post().scale(c(re2, im2))).unwrap();
            let (w0, w1) = (weak_value(&tsv, &a).unwrap(), weak_value(&scaled, &a).unwrap());
            prop_assert!((w0 - w1).norm() <= 1e-12 * (1.0 + w0.norm()));
            let (v0, v1) = (weak_variance(&tsv, &a).unwrap(), weak_variance(&scaled, &a).unwrap());
            prop_assert!((v0 - v1).norm() <= 1e-12 * (1.0 + v0.norm()));
            let p0 = abl_probabilities(&tsv, &a).unwrap();
            let p1 = abl_probabilities(&scaled, &a).unwrap();
            for (x, y) in p0.iter().zip(&p1) {
                prop_assert!((x.probability - y.probability).abs() <= 1e-12);
            }
        }

        #[test]
        fn abl_is_a_distribution(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tsv = random_tsv(&mut rng, vec![2, 2]);
            let a = random_hermitian(vec![2, 2], &mut rng);
            let probs = abl_probabilities(&tsv, &a).unwrap();
            prop_assert!(probs.iter().all(|o| o.probability >= 0.0));
            let total: f64 = probs.iter().map(|o| o.probability).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            let mean: f64 = probs.iter().map(|o| o.probability * o.eigenvalue).sum();
            prop_assert!((mean - pp_expectation(&tsv, &a).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn abl_concentrates_on_shared_eigenstate(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_hermitian(vec![3], &mut rng);
            let k = rng.gen_range(0..3);
            let space = &a.eigenspaces()[k];
            let ket = StateVector::new(vec![3], space.projector.column(0).iter().copied().collect()).unwrap();
            let tsv = TwoStateVector::new(ket.clone(), ket).unwrap();
            let probs = abl_probabilities(&tsv, &a).unwrap();
            prop_assert!((probs[k].probability - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn tensor_builds_two_particle_tsv() {
        let pre = up().tensor_with(&up()).unwrap();
        let tsv = TwoStateVector::new(pre.clone(), pre).unwrap();
        let (za, zb) = zs();
        assert_eq!(weak_value(&tsv, &za.product(&zb).unwrap()).unwrap(), c(1.0, 0.0));
    }
}
