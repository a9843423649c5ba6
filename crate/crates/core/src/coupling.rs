//! Von Neumann couplings between a system and one or two Gaussian pointers,
//! strong projective measurement, and the controlled-flip modular-sum device.
//!
//! Couplings are impulsive, `exp(−i g P A)`, and are evaluated exactly in the
//! eigenbasis of the coupled observables: every eigenvalue combination shifts a
//! copy of the initial pointer and carries the amplitude `⟨Φ|Π_a Π_b|Ψ⟩`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{inner, HermitianOperator, StateVector, UnitaryOperator, C64};
use crate::pointer::{comb_pointer, standard_pointer, GaussianMixture, MomentSpec, Term, WidthConvention};
use crate::tsvf::TwoStateVector;

/// Post-selection amplitudes below this fraction of `‖Φ‖‖Ψ‖` are dropped.
const AMPLITUDE_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    LocalSingle,
    LocalPair,
    EntangledSum,
    Comb { k: usize, xi: f64 },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::LocalSingle => "local_single",
            Scheme::LocalPair => "local_pair",
            Scheme::EntangledSum => "entangled_sum",
            Scheme::Comb { .. } => "comb",
        }
    }

    fn needs_pair(&self) -> bool {
        !matches!(self, Scheme::LocalSingle)
    }
}

#[derive(Clone, Debug)]
pub struct CouplingSpec {
    scheme: Scheme,
    a: HermitianOperator,
    b: Option<HermitianOperator>,
    width: f64,
    convention: WidthConvention,
    strength: f64,
}

impl CouplingSpec {
    fn build(
        scheme: Scheme,
        a: HermitianOperator,
        b: Option<HermitianOperator>,
        width: f64,
        convention: WidthConvention,
    ) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid(format!("pointer width must be positive, got {width}")));
        }
        if scheme.needs_pair() != b.is_some() {
            return Err(Error::invalid(format!(
                "scheme {} needs {} observable(s)",
                scheme.name(),
                if scheme.needs_pair() { 2 } else { 1 }
            )));
        }
        if let Some(b) = &b {
            if a.dims() != b.dims() {
                return Err(Error::DimensionMismatch { expected: a.dims().to_vec(), found: b.dims().to_vec() });
            }
            a.commutes_with(b)?;
        }
        Ok(CouplingSpec { scheme, a, b, width, convention, strength: 1.0 })
    }

    /// One pointer of width `Δ` coupled to `A`.
    pub fn local_single(a: HermitianOperator, width: f64) -> Result<Self> {
        Self::build(Scheme::LocalSingle, a, None, width, WidthConvention::Single)
    }

    /// Independent pointers coupled to `A` and `B`.
    pub fn local_pair(a: HermitianOperator, b: HermitianOperator, width: f64, convention: WidthConvention) -> Result<Self> {
        Self::build(Scheme::LocalPair, a, Some(b), width, convention)
    }

    /// One pointer of width `Δ` on the `Q₊` coordinate coupled to `A + B`.
    pub fn entangled_sum(a: HermitianOperator, b: HermitianOperator, width: f64) -> Result<Self> {
        Self::build(Scheme::EntangledSum, a, Some(b), width, WidthConvention::Single)
    }

    /// Two pointers prepared in the `k`-term comb state with shift `ξ`.
    pub fn comb(a: HermitianOperator, b: HermitianOperator, k: usize, xi: f64, width: f64) -> Result<Self> {
        Self::build(Scheme::Comb { k, xi }, a, Some(b), width, WidthConvention::Split)
    }

    pub fn with_strength(mut self, g: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::invalid("coupling strength must be finite"));
        }
        self.strength = g;
        Ok(self)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn convention(&self) -> WidthConvention {
        self.convention
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn observables(&self) -> (&HermitianOperator, Option<&HermitianOperator>) {
        (&self.a, self.b.as_ref())
    }

    /// The same spec at another width.
    pub fn at_width(&self, width: f64) -> Result<Self> {
        let mut s = Self::build(self.scheme, self.a.clone(), self.b.clone(), width, self.convention)?;
        s.strength = self.strength;
        Ok(s)
    }
}

/// `⟨Φ|Π_a Π_b|Ψ⟩` for every eigenvalue pair with a non-negligible amplitude.
/// With one observable the second eigenvalue is 0.
pub fn joint_amplitudes(
    tsv: &TwoStateVector,
    a: &HermitianOperator,
    b: Option<&HermitianOperator>,
) -> Result<Vec<(C64, f64, f64)>> {
    if a.dims() != tsv.dims() {
        return Err(Error::DimensionMismatch { expected: tsv.dims().to_vec(), found: a.dims().to_vec() });
    }
    let pre = tsv.pre().amplitudes();
    let post = tsv.post().amplitudes();
    let floor = AMPLITUDE_TOL * tsv.pre().norm() * tsv.post().norm();
    let mut out = Vec::new();
    let b_spaces: Vec<(f64, Option<&DMatrix<C64>>)> = match b {
        Some(b) => {
            if b.dims() != tsv.dims() {
                return Err(Error::DimensionMismatch { expected: tsv.dims().to_vec(), found: b.dims().to_vec() });
            }
            b.eigenspaces().iter().map(|e| (e.value, Some(&e.projector))).collect()
        }
        None => vec![(0.0, None)],
    };
    for ea in a.eigenspaces() {
        for (vb, pb) in &b_spaces {
            let v = match pb {
                Some(pb) => &ea.projector * (*pb * pre),
                None => &ea.projector * pre,
            };
            let amp = post.dotc(&v);
            if amp.norm() > floor {
                out.push((amp, ea.value, *vb));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::PostSelectionImpossible);
    }
    Ok(out)
}

/// Combines every term of `initial` with every outcome, multiplying
/// coefficients and adding center shifts.
fn shift_mixture(initial: &GaussianMixture, outcomes: &[(C64, [f64; 2])]) -> Result<GaussianMixture> {
    let mut terms = Vec::with_capacity(initial.terms().len() * outcomes.len());
    for t in initial.terms() {
        for &(c, shift) in outcomes {
            terms.push(Term { coeff: t.coeff * c, center: [t.center[0] + shift[0], t.center[1] + shift[1]] });
        }
    }
    GaussianMixture::new(initial.dim(), initial.widths(), terms)
}

/// Pointer wavefunction after the coupling and a successful post-selection,
/// normalized.
pub fn weak_couple_and_postselect(tsv: &TwoStateVector, spec: &CouplingSpec) -> Result<GaussianMixture> {
    tsv.weak_value(&HermitianOperator::identity(tsv.dims().to_vec())?)?;
    let amps = joint_amplitudes(tsv, &spec.a, spec.b.as_ref())?;
    let g = spec.strength;
    let delta = spec.width;
    let mix = match spec.scheme {
        Scheme::LocalSingle => {
            let outcomes: Vec<_> = amps.iter().map(|&(c, a, _)| (c, [g * a, 0.0])).collect();
            shift_mixture(&standard_pointer(1, delta, WidthConvention::Single)?, &outcomes)
        }
        Scheme::EntangledSum => {
            let outcomes: Vec<_> = amps.iter().map(|&(c, a, b)| (c, [g * (a + b), 0.0])).collect();
            shift_mixture(&standard_pointer(1, delta, WidthConvention::Single)?, &outcomes)
        }
        Scheme::LocalPair => {
            let outcomes: Vec<_> = amps.iter().map(|&(c, a, b)| (c, [g * a, g * b])).collect();
            shift_mixture(&standard_pointer(2, delta, spec.convention)?, &outcomes)
        }
        Scheme::Comb { k, xi } => {
            let outcomes: Vec<_> = amps.iter().map(|&(c, a, b)| (c, [g * a, g * b])).collect();
            shift_mixture(&comb_pointer(k, xi, delta)?, &outcomes)
        }
    }
    .map_err(|e| match e {
        Error::NormVanishes => Error::PostSelectionImpossible,
        e => e,
    })?;
    Ok(mix.normalized())
}

/// `⟨Q⟩ + i·2Δ²⟨P⟩` of a one-coordinate pointer of initial width `Δ`.
pub fn weak_readout(mix: &GaussianMixture, width: f64) -> Result<C64> {
    if mix.dim() != 1 {
        return Err(Error::invalid("weak readout needs a one-coordinate pointer"));
    }
    let q = mix.moment(&MomentSpec::position(0))?;
    let p = mix.moment(&MomentSpec::momentum(0))?;
    Ok(C64::new(q.re, 2.0 * width * width * p.re))
}

/// `⟨Q_A + Q_B⟩` of a two-coordinate pointer.
pub fn sum_readout(mix: &GaussianMixture) -> Result<f64> {
    if mix.dim() != 2 {
        return Err(Error::invalid("sum readout needs a two-coordinate pointer"));
    }
    Ok(mix.moment(&MomentSpec::position(0))?.re + mix.moment(&MomentSpec::position(1))?.re)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongOutcome {
    pub eigenvalue: f64,
    pub probability: f64,
    #[serde(skip)]
    pub collapsed_state: StateVector,
}

/// Born-rule outcomes of a projective measurement of `op`, one per eigenspace
/// with nonzero weight, ascending in eigenvalue.
pub fn strong_measure(state: &StateVector, op: &HermitianOperator) -> Result<Vec<StrongOutcome>> {
    if state.dims() != op.dims() {
        return Err(Error::DimensionMismatch { expected: op.dims().to_vec(), found: state.dims().to_vec() });
    }
    let n2 = state.norm().powi(2);
    if !(n2 > 0.0) {
        return Err(Error::NormVanishes);
    }
    let mut out = Vec::new();
    for e in op.eigenspaces() {
        let v = &e.projector * state.amplitudes();
        let p = v.norm_squared() / n2;
        if p > 1e-15 {
            let collapsed = StateVector::new(state.dims().to_vec(), v.iter().copied().collect())?.normalize()?;
            out.push(StrongOutcome { eigenvalue: e.value, probability: p, collapsed_state: collapsed });
        }
    }
    Ok(out)
}

/// Spin-1 basis in the order `(+1, 0, −1)`.
fn spin1(m: i32) -> StateVector {
    let idx = (1 - m) as usize;
    StateVector::basis(vec![3], &[idx]).expect("m in -1..=1")
}

/// Alice's probability of finding `(|−1⟩ + |0⟩)/√2` after a strong measurement
/// of `S_z^A S_z^B` on `(|−1⟩ + |0⟩)_A/√2 ⊗ |m⟩_B`, where Bob chose `m = 0` or,
/// if he flipped, `m = 1`.
pub fn causality_scenario(bob_flips: bool) -> f64 {
    use crate::hilbert::{spin_operator, Axis, SpinKind};
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let alice = spin1(-1).scale(C64::new(s, 0.0)).add(&spin1(0).scale(C64::new(s, 0.0))).unwrap();
    let bob = spin1(if bob_flips { 1 } else { 0 });
    let state = alice.tensor(&bob).unwrap();
    let sz = spin_operator(SpinKind::Spin1, Axis::Z);
    let zz = sz.tensor(&sz).unwrap();
    strong_measure(&state, &zz)
        .unwrap()
        .iter()
        .map(|o| {
            // Alice's projector acts on A only: trace out B.
            let psi = &o.collapsed_state;
            let p: f64 = (0..3)
                .map(|b| {
                    let proj = alice.tensor(&StateVector::basis(vec![3], &[b]).unwrap()).unwrap();
                    inner(&proj, psi).unwrap().norm_sqr()
                })
                .sum();
            o.probability * p
        })
        .sum()
}

/// Permutation unitary flipping qubit `target` iff qubit `control` is `↓`.
pub fn controlled_flip(n_qubits: usize, control: usize, target: usize) -> Result<UnitaryOperator> {
    if control >= n_qubits || target >= n_qubits || control == target {
        return Err(Error::invalid("controlled flip needs two distinct qubits in range"));
    }
    let dims = vec![2; n_qubits];
    let n = 1usize << n_qubits;
    let bit = |q: usize| 1usize << (n_qubits - 1 - q);
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        let j = if i & bit(control) != 0 { i ^ bit(target) } else { i };
        m[(j, i)] = C64::new(1.0, 0.0);
    }
    UnitaryOperator::new(dims, m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParityBranch {
    /// Probability of this `(σ_z^A + σ_z^B) mod 4` class.
    pub probability: f64,
    /// Ancilla `CD` state conditioned on the class.
    #[serde(skip)]
    pub ancilla: StateVector,
    /// Unnormalized `AB` component of the class.
    #[serde(skip)]
    pub system: StateVector,
}

#[derive(Clone, Debug)]
pub struct ModularSumResult {
    /// Joint state over `A, B, C, D`.
    pub state: StateVector,
    /// Keyed by `(σ_z^A + σ_z^B) mod 4`: 2 for `↑↑`/`↓↓`, 0 for `↑↓`/`↓↑`.
    pub classes: BTreeMap<u8, ParityBranch>,
    /// Reduced density matrix of `CD`.
    pub ancilla_density: DMatrix<C64>,
}

impl ModularSumResult {
    /// Trace distance between the conditional ancilla states of the two classes
    /// (1 when the ancillas distinguish them perfectly).
    pub fn class_distinguishability(&self) -> f64 {
        let states: Vec<&StateVector> = self.classes.values().map(|b| &b.ancilla).collect();
        if states.len() < 2 {
            return 0.0;
        }
        let ov = inner(states[0], states[1]).unwrap().norm_sqr();
        (1.0 - ov).max(0.0).sqrt()
    }
}

/// Couples a two-qubit state to a Bell-pair ancilla `(|↑↑⟩ + |↓↓⟩)_CD/√2`
/// through controlled flips `A→C` and `B→D`.
pub fn modular_sum_measure(state_ab: &StateVector) -> Result<ModularSumResult> {
    if state_ab.dims() != [2, 2] {
        return Err(Error::DimensionMismatch { expected: vec![2, 2], found: state_ab.dims().to_vec() });
    }
    let psi = state_ab.normalize()?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bell = StateVector::new(vec![2, 2], vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)])?;
    let joint = psi.tensor(&bell)?;
    let u = controlled_flip(4, 0, 2)?.compose(&controlled_flip(4, 1, 3)?)?;
    let out = u.apply(&joint)?;

    let amps = out.amplitudes();
    let mut rho = DMatrix::<C64>::zeros(4, 4);
    for ab in 0..4 {
        for x in 0..4 {
            for y in 0..4 {
                rho[(x, y)] += amps[ab * 4 + x] * amps[ab * 4 + y].conj();
            }
        }
    }

    let mut classes = BTreeMap::new();
    for (class, members) in [(0u8, [1usize, 2]), (2u8, [0usize, 3])] {
        let mut sys = vec![C64::new(0.0, 0.0); 4];
        for &ab in &members {
            sys[ab] = psi.amplitudes()[ab];
        }
        let p: f64 = sys.iter().map(|c| c.norm_sqr()).sum();
        if p <= 1e-15 {
            continue;
        }
        // All members of a class leave the ancilla in the same state; read it
        // off the member with the larger amplitude.
        let amp = |k: usize| psi.amplitudes()[k].norm_sqr();
        let ab = if amp(members[0]) >= amp(members[1]) { members[0] } else { members[1] };
        let anc: Vec<C64> = (0..4).map(|x| amps[ab * 4 + x]).collect();
        let ancilla = StateVector::new(vec![2, 2], anc)?.normalize()?;
        classes.insert(class, ParityBranch { probability: p, ancilla, system: StateVector::new(vec![2, 2], sys)? });
    }
    Ok(ModularSumResult { state: out, classes, ancilla_density: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{sigma_x, sigma_z, up};
    use crate::pointer::sample_readout;
    use crate::tsvf::{pp_expectation, weak_value};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fig1() -> TwoStateVector {
        let e = 0.1f64.atan();
        let post = StateVector::new(vec![2], vec![c(e.sin(), 0.0), c(e.cos(), 0.0)]).unwrap();
        TwoStateVector::new(up(), post).unwrap()
    }

    fn fig1_pointer(delta: f64) -> GaussianMixture {
        weak_couple_and_postselect(&fig1(), &CouplingSpec::local_single(sigma_x(), delta).unwrap()).unwrap()
    }

    fn sum_tsv() -> TwoStateVector {
        let (d, e) = (0.11, -0.05);
        let pre = StateVector::from_terms(
            vec![2, 2],
            &[(c(1.0 + e, 0.0), &[0, 1]), (c(-1.0 + e, 0.0), &[1, 0]), (c(d, 0.0), &[0, 0])],
        )
        .unwrap();
        let post = StateVector::new(vec![2, 2], vec![c(1.0, 0.0); 4]).unwrap();
        TwoStateVector::new(pre, post).unwrap()
    }

    fn zs() -> (HermitianOperator, HermitianOperator) {
        (sigma_z().embed(&[2, 2], 0).unwrap(), sigma_z().embed(&[2, 2], 1).unwrap())
    }

    fn split(delta: f64) -> CouplingSpec {
        let (a, b) = zs();
        CouplingSpec::local_pair(a, b, delta, WidthConvention::Split).unwrap()
    }

    fn ent(delta: f64) -> CouplingSpec {
        let (a, b) = zs();
        CouplingSpec::entangled_sum(a, b, delta).unwrap()
    }

    /// Two-term closed form: ⟨Q⟩ = sin 2ε / (1 − cos 2ε · exp(−1/2Δ²)).
    fn two_outcome_mean(delta: f64) -> f64 {
        let e = 0.1f64.atan();
        (2.0 * e).sin() / (1.0 - (2.0 * e).cos() * (-0.5 / (delta * delta)).exp())
    }

    #[test]
    fn single_pointer_readouts_across_widths() {
        for delta in [0.1, 0.3, 1.0, 2.0, 5.0, 25.0, 100.0, 1e4] {
            assert_abs_diff_eq!(fig1_pointer(delta).mean(0), two_outcome_mean(delta), epsilon = 1e-12);
        }
        for (delta, want) in [(0.1, 0.2), (1.0, 0.5), (25.0, 9.6), (100.0, 9.98)] {
            let q = fig1_pointer(delta).mean(0);
            assert!((q - want).abs() <= 0.05, "Δ={delta}: ⟨Q⟩={q}");
        }
    }

    #[test]
    fn strong_regime_matches_abl_mean() {
        let e = 0.1f64.atan();
        let q = fig1_pointer(0.1).mean(0);
        assert_abs_diff_eq!(q, (2.0 * e).sin(), epsilon = 1e-6);
        let pp = pp_expectation(&fig1(), &sigma_x()).unwrap();
        assert_abs_diff_eq!(fig1_pointer(1e-3).mean(0), pp, epsilon = 1e-6);
    }

    #[test]
    fn wide_pointer_density_peaks_at_weak_value() {
        let m = fig1_pointer(100.0);
        let (x, _) = (0..=4000)
            .map(|i| -50.0 + 0.025 * i as f64)
            .map(|x| (x, m.density_at(&[x])))
            .fold((0.0, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best });
        assert!((x - 9.98).abs() <= 0.2, "argmax {x}");
    }

    #[test]
    fn wide_pointer_sample_mean() {
        let m = fig1_pointer(100.0);
        let n = 100_000;
        let s = sample_readout(&m, n, 17);
        let sd = m.variance(0).sqrt();
        assert!((s.mean(0) - 9.98).abs() <= 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn eigenstate_pointer_is_a_single_shifted_gaussian() {
        let tsv = TwoStateVector::new(up(), up()).unwrap();
        for delta in [0.01, 1.0, 300.0] {
            let m = weak_couple_and_postselect(&tsv, &CouplingSpec::local_single(sigma_z(), delta).unwrap()).unwrap();
            assert_eq!(m.terms().len(), 1);
            assert_eq!(m.terms()[0].center[0], 1.0);
            let r = weak_readout(&m, delta).unwrap();
            assert_abs_diff_eq!((r - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pair_readouts() {
        for (delta, qa, qb, tol) in [(10.0, 0.5, -0.4, 0.1), (100.0, 42.0, -38.0, 0.5), (1000.0, 203.0, -181.0, 1.0)] {
            let m = weak_couple_and_postselect(&sum_tsv(), &split(delta)).unwrap();
            assert!((m.mean(0) - qa).abs() <= tol, "Δ={delta} Q_A={}", m.mean(0));
            assert!((m.mean(1) - qb).abs() <= tol, "Δ={delta} Q_B={}", m.mean(1));
        }
    }

    #[test]
    fn entangled_readouts() {
        let m = weak_couple_and_postselect(&sum_tsv(), &ent(1000.0)).unwrap();
        assert_abs_diff_eq!(m.mean(0), 21.998, epsilon = 0.001);
        let e2 = (weak_readout(&weak_couple_and_postselect(&sum_tsv(), &ent(100.0)).unwrap(), 100.0).unwrap() - 22.0).norm();
        let e3 = (weak_readout(&m, 1000.0).unwrap() - 22.0).norm();
        let slope = (e3 / e2).log10();
        assert!((slope + 2.0).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn entangled_equals_sum_coordinate_of_split_pair() {
        let delta = 37.0;
        let e = weak_couple_and_postselect(&sum_tsv(), &ent(delta)).unwrap();
        let p = weak_couple_and_postselect(&sum_tsv(), &split(delta)).unwrap();
        let from_pair = GaussianMixture::one_dim(delta, &p.sum_coordinate_terms()).unwrap();
        assert_eq!(e.terms().len(), from_pair.terms().len());
        let (e0, p0) = (e.terms()[0].coeff, from_pair.terms()[0].coeff);
        for (x, y) in e.terms().iter().zip(from_pair.terms()) {
            assert_abs_diff_eq!((x.coeff / e0 - y.coeff / p0).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(x.center[0], y.center[0], epsilon = 1e-12);
        }
        // Linearity of moments on the pair itself.
        let plus = sum_readout(&p).unwrap();
        assert_abs_diff_eq!(plus, p.mean(0) + p.mean(1), epsilon = 1e-12);
        // Terms sharing a + b interfere fully only on the one-coordinate pointer.
        assert!((plus - e.mean(0)).abs() > 1.0);
    }

    #[test]
    fn comb_approaches_entangled_readout() {
        let delta = 100.0;
        let target = weak_couple_and_postselect(&sum_tsv(), &ent(delta)).unwrap().mean(0);
        let (a, b) = zs();
        let readouts: Vec<f64> = [0, 1, 2, 4, 8, 16, 32, 64]
            .iter()
            .map(|&k| {
                let spec = CouplingSpec::comb(a.clone(), b.clone(), k, delta, delta).unwrap();
                sum_readout(&weak_couple_and_postselect(&sum_tsv(), &spec).unwrap()).unwrap()
            })
            .collect();
        assert!(readouts.windows(2).all(|w| w[1] > w[0]), "{readouts:?}");
        assert!(readouts.iter().all(|&r| r < target));
        assert!((target - readouts[7]) < 0.1 * (target - readouts[0]));
    }

    #[test]
    fn coupling_strength_scales_shifts() {
        let spec = CouplingSpec::local_single(sigma_x(), 1e4).unwrap().with_strength(2.5).unwrap();
        let m = weak_couple_and_postselect(&fig1(), &spec).unwrap();
        assert_abs_diff_eq!(m.mean(0), 25.0, epsilon = 0.01);
    }

    #[test]
    fn spec_validation() {
        let (a, b) = zs();
        assert!(CouplingSpec::local_single(a.clone(), 0.0).is_err());
        assert!(CouplingSpec::local_pair(a.clone(), sigma_z(), 1.0, WidthConvention::Single).is_err());
        let x_on_a = sigma_x().embed(&[2, 2], 0).unwrap();
        assert!(matches!(CouplingSpec::entangled_sum(a, x_on_a, 1.0), Err(Error::NonCommuting { .. })));
        let orth = TwoStateVector::new(up(), crate::hilbert::down()).unwrap();
        let spec = CouplingSpec::local_single(sigma_z(), 1.0).unwrap();
        assert!(matches!(weak_couple_and_postselect(&orth, &spec), Err(Error::OverlapVanishes { .. })));
        assert!(CouplingSpec::local_single(b, f64::NAN).is_err());
    }

    #[test]
    fn weak_limit_convergence_on_random_qubit_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (a, b) = zs();
        let sum = a.add(&b).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let draw = |rng: &mut ChaCha8Rng| {
                StateVector::new(vec![2, 2], (0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                    .unwrap()
                    .normalize()
                    .unwrap()
            };
            let tsv = TwoStateVector::new(draw(&mut rng), draw(&mut rng)).unwrap();
            if tsv.overlap().norm() < 0.3 {
                continue;
            }
            let (wa, ws) = (weak_value(&tsv, &a).unwrap(), weak_value(&tsv, &sum).unwrap());
            if wa.norm() > 3.0 || ws.norm() > 3.0 {
                continue;
            }
            checked += 1;
            for (spec_at, target) in [
                (Box::new(|d| CouplingSpec::local_single(a.clone(), d).unwrap()) as Box<dyn Fn(f64) -> CouplingSpec>, wa),
                (Box::new(|d| CouplingSpec::entangled_sum(a.clone(), b.clone(), d).unwrap()), ws),
            ] {
                let err = |d: f64| {
                    let m = weak_couple_and_postselect(&tsv, &spec_at(d)).unwrap();
                    (weak_readout(&m, d).unwrap() - target).norm()
                };
                let slope = (err(1e4) / err(1e2)).log10() / 2.0;
                assert!((slope + 2.0).abs() <= 0.1, "slope {slope}");
            }
            let err_pair = |d: f64| {
                let m = weak_couple_and_postselect(&tsv, &CouplingSpec::local_pair(a.clone(), b.clone(), d, WidthConvention::Single).unwrap()).unwrap();
                (m.mean(0) - wa.re).abs()
            };
            let slope = (err_pair(1e4) / err_pair(1e2)).log10() / 2.0;
            assert!((slope + 2.0).abs() <= 0.1, "pair slope {slope}");
        }
    }

    #[test]
    fn strong_measurement_outcomes() {
        let out = strong_measure(&up(), &sigma_x()).unwrap();
        assert_eq!(out.len(), 2);
        for o in &out {
            assert_abs_diff_eq!(o.probability, 0.5, epsilon = 1e-12);
            let again = strong_measure(&o.collapsed_state, &sigma_x()).unwrap();
            assert_eq!(again.len(), 1);
            assert_abs_diff_eq!(again[0].eigenvalue, o.eigenvalue, epsilon = 1e-12);
        }
    }

    #[test]
    fn strong_measurement_matches_projection_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = zs();
        let op = a.add(&b).unwrap();
        for _ in 0..20 {
            let psi = StateVector::new(vec![2, 2], (0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap();
            let out = strong_measure(&psi, &op).unwrap();
            let n2 = psi.norm().powi(2);
            let amp = |i: usize| psi.amplitudes()[i].norm_sqr() / n2;
            let want = [(-2.0, amp(3)), (0.0, amp(1) + amp(2)), (2.0, amp(0))];
            assert_eq!(out.len(), 3);
            for (o, (v, p)) in out.iter().zip(want) {
                assert_abs_diff_eq!(o.eigenvalue, v, epsilon = 1e-10);
                assert_abs_diff_eq!(o.probability, p, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(out.iter().map(|o| o.probability).sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn instantaneous_product_measurement() {
        use crate::hilbert::{spin_operator, Axis, SpinKind};
        let sz = spin_operator(SpinKind::Spin1, Axis::Z);
        let zz = sz.tensor(&sz).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let alice = spin1(-1).scale(c(s, 0.0)).add(&spin1(0).scale(c(s, 0.0))).unwrap();
        let psi = alice.tensor(&spin1(0)).unwrap();
        let out = strong_measure(&psi, &zz).unwrap();
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out[0].eigenvalue, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[0].probability, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(inner(&out[0].collapsed_state, &psi).unwrap().norm(), 1.0, epsilon = 1e-12);
        let flipped = strong_measure(&alice.tensor(&spin1(1)).unwrap(), &zz).unwrap();
        let vals: Vec<(f64, f64)> = flipped.iter().map(|o| (o.eigenvalue, o.probability)).collect();
        assert_eq!(vals.len(), 2);
        assert_abs_diff_eq!(vals[0].0, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[0].1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1].0, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn causality_signal() {
        let stay = causality_scenario(false);
        let flip = causality_scenario(true);
        assert_abs_diff_eq!(stay, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(flip, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stay - flip, 0.5, epsilon = 1e-12);
    }

    fn two_qubit(amps: [f64; 4]) -> StateVector {
        StateVector::new(vec![2, 2], amps.iter().map(|&x| c(x, 0.0)).collect()).unwrap()
    }

    /// Builds the controlled-flip network directly from basis-state bookkeeping.
    fn flip_oracle(ab: &StateVector) -> StateVector {
        let mut out = vec![c(0.0, 0.0); 16];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for a in 0..2 {
            for b in 0..2 {
                for cd in [(0, 0), (1, 1)] {
                    let cc = cd.0 ^ a;
                    let dd = cd.1 ^ b;
                    out[(a << 3) | (b << 2) | (cc << 1) | dd] += ab.amplitudes()[(a << 1) | b] * s;
                }
            }
        }
        StateVector::new(vec![2; 4], out).unwrap()
    }

    #[test]
    fn modular_sum_even_class_leaves_ancilla() {
        let r = modular_sum_measure(&two_qubit([1.0, 0.0, 0.0, 0.0])).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = two_qubit([s, 0.0, 0.0, s]);
        assert_eq!(r.classes.len(), 1);
        assert_abs_diff_eq!(inner(&r.classes[&2].ancilla, &bell).unwrap().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn modular_sum_odd_class_flips_ancilla() {
        let r = modular_sum_measure(&two_qubit([0.0, 1.0, 0.0, 0.0])).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let flipped = two_qubit([0.0, s, s, 0.0]);
        assert_abs_diff_eq!(inner(&r.classes[&0].ancilla, &flipped).unwrap().norm(), 1.0, epsilon = 1e-12);
        let want = flip_oracle(&two_qubit([0.0, 1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(inner(&want, &r.state).unwrap().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn modular_sum_on_second_class_members() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = modular_sum_measure(&two_qubit([0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(inner(&r.classes[&0].ancilla, &two_qubit([0.0, s, s, 0.0])).unwrap().norm(), 1.0, epsilon = 1e-12);
        let r = modular_sum_measure(&two_qubit([0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(inner(&r.classes[&2].ancilla, &two_qubit([s, 0.0, 0.0, s])).unwrap().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn modular_sum_preserves_amplitudes_within_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let amps = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let psi = two_qubit(amps).normalize().unwrap();
            let r = modular_sum_measure(&psi).unwrap();
            let want = flip_oracle(&psi);
            assert_abs_diff_eq!((want.amplitudes() - r.state.amplitudes()).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.class_distinguishability(), 1.0, epsilon = 1e-12);
            let total: f64 = r.classes.values().map(|b| b.probability).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            let p_even = psi.amplitudes()[0].norm_sqr() + psi.amplitudes()[3].norm_sqr();
            assert_abs_diff_eq!(r.classes[&2].probability, p_even, epsilon = 1e-12);
            assert_abs_diff_eq!(r.ancilla_density.trace().re, 1.0, epsilon = 1e-12);
        }
        let singlet = two_qubit([0.0, 1.0, -1.0, 0.0]);
        let r = modular_sum_measure(&singlet).unwrap();
        assert_eq!(r.classes.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_abs_diff_eq!(r.classes[&0].probability, 1.0, epsilon = 1e-12);
        let sys = &r.classes[&0].system;
        assert_abs_diff_eq!((sys.amplitudes()[1] + sys.amplitudes()[2]).norm(), 0.0, epsilon = 1e-12);
    }

    /// Phase-insensitive distance between two unitaries.
    fn unitary_distance(u: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
        let n = u.nrows() as f64;
        let tr = (u.adjoint() * v).trace();
        (1.0 - tr.norm() / n).max(0.0)
    }

    #[test]
    fn generator_for_the_controlled_flip() {
        let z = sigma_z();
        let x = sigma_x();
        let i2 = HermitianOperator::identity(vec![2]).unwrap();
        let i4 = HermitianOperator::identity(vec![2, 2]).unwrap();
        let zx = z.tensor(&x).unwrap();
        let flip = controlled_flip(2, 0, 1).unwrap();
        // Flip on ↓: exp(iπ/4 (I − σ_z − σ_x + σ_zσ_x)).
        let h = i4
            .sub(&z.tensor(&i2).unwrap())
            .unwrap()
            .sub(&i2.tensor(&x).unwrap())
            .unwrap()
            .add(&zx)
            .unwrap();
        let u = UnitaryOperator::exp_i(&h, std::f64::consts::FRAC_PI_4).unwrap();
        assert_abs_diff_eq!((u.matrix() - flip.matrix()).norm(), 0.0, epsilon = 1e-12);
        // The form I + σ_zσ_x + σ_x acts on the ↑ branch instead, with a relative phase.
        let printed = i4.add(&zx).unwrap().add(&i2.tensor(&x).unwrap()).unwrap();
        let v = UnitaryOperator::exp_i(&printed, std::f64::consts::FRAC_PI_4).unwrap();
        assert!(unitary_distance(v.matrix(), flip.matrix()) > 0.5);
        let up_flip = {
            let mut m = DMatrix::<C64>::zeros(4, 4);
            m[(0, 1)] = c(0.0, 1.0);
            m[(1, 0)] = c(0.0, 1.0);
            m[(2, 2)] = c(1.0, 0.0);
            m[(3, 3)] = c(1.0, 0.0);
            m
        };
        assert!(unitary_distance(v.matrix(), &up_flip) < 1e-12);
    }
}
