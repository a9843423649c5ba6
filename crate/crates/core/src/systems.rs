//! Reference pre/post-selected systems used by the scenarios, the CLI and tests.

use crate::error::Result;
use crate::hilbert::{sigma_z, HermitianOperator, StateVector, C64};
use crate::tsvf::TwoStateVector;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Pre `|↑⟩`, post `sin ε⟨↑| + cos ε⟨↓|` with `tan ε = 1/10`; `(σ_x)_w = 10`.
pub fn tilted_qubit() -> TwoStateVector {
    let e = 0.1f64.atan();
    let pre = StateVector::basis(vec![2], &[0]).expect("valid label");
    let post = StateVector::new(vec![2], vec![re(e.sin()), re(e.cos())]).expect("two amplitudes");
    TwoStateVector::new(pre, post).expect("same dims")
}

/// Pre `(1+ε)|↑↓⟩ + (−1+ε)|↓↑⟩ + δ|↑↑⟩` (normalized), post the uniform
/// superposition of all four basis states.
pub fn two_qubit_family(delta: C64, eps: C64) -> Result<TwoStateVector> {
    let pre = StateVector::from_terms(
        vec![2, 2],
        &[(re(1.0) + eps, &[0, 1]), (re(-1.0) + eps, &[1, 0]), (delta, &[0, 0])],
    )?
    .normalize()?;
    let post = StateVector::new(vec![2, 2], vec![re(0.5); 4])?;
    TwoStateVector::new(pre, post)
}

/// Real-parameter member of [`two_qubit_family`].
pub fn sum_example(delta: f64, eps: f64) -> Result<TwoStateVector> {
    two_qubit_family(re(delta), re(eps))
}

/// Member of [`two_qubit_family`] with `δ = (3 + i)t`, `ε = −i t/2`, for which
/// `(σ_z^A σ_z^B)_w = 1 + 2i/3` independently of `t`.
pub fn product_family_member(t: f64) -> Result<TwoStateVector> {
    two_qubit_family(C64::new(3.0 * t, t), C64::new(0.0, -0.5 * t))
}

/// Pre `|↑↓⟩ + |↓↑⟩ + ε|↑↑⟩`, post `|↑↓⟩ − |↓↑⟩ + ε|↑↑⟩`, both normalized.
pub fn abl_example(eps: f64) -> Result<TwoStateVector> {
    let pre = StateVector::from_terms(vec![2, 2], &[(re(1.0), &[0, 1]), (re(1.0), &[1, 0]), (re(eps), &[0, 0])])?
        .normalize()?;
    let post = StateVector::from_terms(vec![2, 2], &[(re(1.0), &[0, 1]), (re(-1.0), &[1, 0]), (re(eps), &[0, 0])])?
        .normalize()?;
    TwoStateVector::new(pre, post)
}

/// `(σ_z^A, σ_z^B)` on two qubits.
pub fn local_z_pair() -> (HermitianOperator, HermitianOperator) {
    let z = sigma_z();
    (z.embed(&[2, 2], 0).expect("qubit pair"), z.embed(&[2, 2], 1).expect("qubit pair"))
}
