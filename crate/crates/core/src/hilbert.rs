//! Dense linear algebra over finite-dimensional composite systems.
//!
//! Basis order is particle-major: for dimensions `[d0, d1, ...]` the label
//! `[i0, i1, ...]` maps to the flat index `((i0 * d1) + i1) * d2 + ...`.
//! For spin-1/2 particles level 0 is `↑` and level 1 is `↓`; for spin-1
//! particles the levels are ordered `+1, 0, -1`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest total Hilbert-space dimension accepted by [`tensor`] and friends.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Eigenvalues closer than this are merged into one eigenspace.
pub const DEGENERACY_TOL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

fn total_dim(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::invalid(format!("dimensions must be positive, got {dims:?}")));
    }
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d).ok_or(Error::DimensionOverflow {
            dim: usize::MAX,
            max: DEFAULT_MAX_DIM,
        })
    })
}

fn check_dim(dims: &[usize], max: usize) -> Result<usize> {
    let dim = total_dim(dims)?;
    if dim > max {
        return Err(Error::DimensionOverflow { dim, max });
    }
    Ok(dim)
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Per-particle level indices of a product basis ket.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisLabel(Vec<usize>);

impl BasisLabel {
    pub fn new(dims: &[usize], levels: Vec<usize>) -> Result<Self> {
        if levels.len() != dims.len() || levels.iter().zip(dims).any(|(&l, &d)| l >= d) {
            return Err(Error::InvalidLabel {
                label: levels,
                dims: dims.to_vec(),
            });
        }
        Ok(BasisLabel(levels))
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn index(&self, dims: &[usize]) -> usize {
        self.0.iter().zip(dims).fold(0, |acc, (&l, &d)| acc * d + l)
    }

    pub fn from_index(dims: &[usize], mut index: usize) -> Self {
        let mut levels = vec![0; dims.len()];
        for (slot, &d) in levels.iter_mut().zip(dims).rev() {
            *slot = index % d;
            index /= d;
        }
        BasisLabel(levels)
    }
}

/// A (possibly unnormalized) pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let dim = check_dim(&dims, DEFAULT_MAX_DIM)?;
        if amps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: vec![dim],
                found: vec![amps.len()],
            });
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("state amplitudes must be finite"));
        }
        Ok(StateVector {
            dims,
            amps: DVector::from_vec(amps),
        })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let dim = check_dim(&dims, DEFAULT_MAX_DIM)?;
        Ok(StateVector {
            dims,
            amps: DVector::zeros(dim),
        })
    }

    /// The basis ket `|levels⟩`.
    pub fn basis(dims: Vec<usize>, levels: &[usize]) -> Result<Self> {
        let label = BasisLabel::new(&dims, levels.to_vec())?;
        let mut s = Self::zeros(dims)?;
        let i = label.index(&s.dims);
        s.amps[i] = C64::new(1.0, 0.0);
        Ok(s)
    }

    /// Builds a state from `(coefficient, label)` pairs; repeated labels add up.
    pub fn from_terms(dims: Vec<usize>, terms: &[(C64, &[usize])]) -> Result<Self> {
        let mut s = Self::zeros(dims)?;
        for (c, levels) in terms {
            let label = BasisLabel::new(&s.dims, levels.to_vec())?;
            let i = label.index(&s.dims);
            s.amps[i] += *c;
        }
        Ok(s)
    }

    pub(crate) fn from_parts(dims: Vec<usize>, amps: DVector<C64>) -> Self {
        debug_assert_eq!(amps.len(), dims.iter().product::<usize>());
        StateVector { dims, amps }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amplitude(&self, levels: &[usize]) -> Result<C64> {
        let label = BasisLabel::new(&self.dims, levels.to_vec())?;
        Ok(self.amps[label.index(&self.dims)])
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NormVanishes);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        StateVector {
            dims: self.dims.clone(),
            amps: &self.amps * c,
        }
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        same_dims(&self.dims, &other.dims)?;
        Ok(StateVector {
            dims: self.dims.clone(),
            amps: &self.amps + &other.amps,
        })
    }

    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        tensor_states(self, other, DEFAULT_MAX_DIM)
    }

    /// `⟨self|ket⟩`.
    pub fn inner(&self, ket: &StateVector) -> Result<C64> {
        inner(self, ket)
    }
}

fn same_dims(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a.to_vec(),
            found: b.to_vec(),
        });
    }
    Ok(())
}

/// `⟨bra|ket⟩`, conjugate-linear in `bra`.
pub fn inner(bra: &StateVector, ket: &StateVector) -> Result<C64> {
    same_dims(&bra.dims, &ket.dims)?;
    Ok(bra.amps.dotc(&ket.amps))
}

/// One eigenspace of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Eigenspace {
    pub value: f64,
    pub projector: DMatrix<C64>,
    pub rank: usize,
}

/// A Hermitian matrix on a composite system, with a lazily computed spectral
/// decomposition.
#[derive(Debug)]
pub struct HermitianOperator {
    dims: Vec<usize>,
    matrix: DMatrix<C64>,
    eigen: OnceLock<Vec<Eigenspace>>,
}

impl Clone for HermitianOperator {
    fn clone(&self) -> Self {
        let eigen = OnceLock::new();
        if let Some(e) = self.eigen.get() {
            let _ = eigen.set(e.clone());
        }
        HermitianOperator {
            dims: self.dims.clone(),
            matrix: self.matrix.clone(),
            eigen,
        }
    }
}

impl PartialEq for HermitianOperator {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.matrix == other.matrix
    }
}

impl HermitianOperator {
    pub fn new(dims: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = check_dim(&dims, DEFAULT_MAX_DIM)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: vec![dim, dim],
                found: vec![matrix.nrows(), matrix.ncols()],
            });
        }
        let deviation = max_abs(&(&matrix - matrix.adjoint()));
        if !(deviation <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian { deviation });
        }
        // Symmetrize away the residual so downstream spectra are exactly real.
        let matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(HermitianOperator {
            dims,
            matrix,
            eigen: OnceLock::new(),
        })
    }

    pub fn from_real(dims: Vec<usize>, rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0));
        Self::new(dims, m)
    }

    pub fn identity(dims: Vec<usize>) -> Result<Self> {
        let dim = check_dim(&dims, DEFAULT_MAX_DIM)?;
        Self::new(dims, DMatrix::identity(dim, dim))
    }

    pub fn diagonal(dims: Vec<usize>, values: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0)));
        Self::new(dims, DMatrix::from_diagonal(&d))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        same_dims(&self.dims, &state.dims)?;
        Ok(StateVector::from_parts(self.dims.clone(), &self.matrix * &state.amps))
    }

    pub fn tensor(&self, other: &HermitianOperator) -> Result<Self> {
        tensor_operators(self, other, DEFAULT_MAX_DIM)
    }

    /// Places `self` on particle `position` of a system with `dims`, identity elsewhere.
    pub fn embed(&self, dims: &[usize], position: usize) -> Result<Self> {
        if self.dims.len() != 1 || position >= dims.len() || dims[position] != self.dims[0] {
            return Err(Error::DimensionMismatch {
                expected: dims.to_vec(),
                found: self.dims.clone(),
            });
        }
        let mut out: Option<HermitianOperator> = None;
        for (k, &d) in dims.iter().enumerate() {
            let factor = if k == position {
                self.clone()
            } else {
                HermitianOperator::identity(vec![d])?
            };
            out = Some(match out {
                None => factor,
                Some(acc) => acc.tensor(&factor)?,
            });
        }
        Ok(out.expect("dims is non-empty"))
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<Self> {
        same_dims(&self.dims, &other.dims)?;
        Self::new(self.dims.clone(), &self.matrix + &other.matrix)
    }

    pub fn sub(&self, other: &HermitianOperator) -> Result<Self> {
        same_dims(&self.dims, &other.dims)?;
        Self::new(self.dims.clone(), &self.matrix - &other.matrix)
    }

    pub fn scale(&self, k: f64) -> Self {
        HermitianOperator {
            dims: self.dims.clone(),
            matrix: &self.matrix * C64::new(k, 0.0),
            eigen: OnceLock::new(),
        }
    }

    /// Matrix product `self · other`; fails unless the result is Hermitian,
    /// i.e. unless the two operators commute.
    pub fn product(&self, other: &HermitianOperator) -> Result<Self> {
        same_dims(&self.dims, &other.dims)?;
        Self::new(self.dims.clone(), &self.matrix * &other.matrix)
    }

    pub fn square(&self) -> Self {
        HermitianOperator {
            dims: self.dims.clone(),
            matrix: &self.matrix * &self.matrix,
            eigen: OnceLock::new(),
        }
    }

    pub fn commutes_with(&self, other: &HermitianOperator) -> Result<()> {
        same_dims(&self.dims, &other.dims)?;
        let c = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        let deviation = max_abs(&c);
        if deviation > 1e-10 {
            return Err(Error::NonCommuting { deviation });
        }
        Ok(())
    }

    /// `⟨bra|self|ket⟩`.
    pub fn sandwich(&self, bra: &StateVector, ket: &StateVector) -> Result<C64> {
        same_dims(&self.dims, &bra.dims)?;
        same_dims(&self.dims, &ket.dims)?;
        Ok(bra.amps.dotc(&(&self.matrix * &ket.amps)))
    }

    /// Spectral decomposition with eigenvalues sorted ascending and
    /// near-degenerate eigenvalues merged.
    pub fn eigenspaces(&self) -> &[Eigenspace] {
        self.eigen.get_or_init(|| decompose(&self.matrix))
    }
}

fn decompose(matrix: &DMatrix<C64>) -> Vec<Eigenspace> {
    let n = matrix.nrows();
    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut spaces: Vec<(Vec<f64>, DMatrix<C64>)> = Vec::new();
    for &k in &order {
        let value = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let outer = &v * v.adjoint();
        match spaces.last_mut() {
            Some((vals, proj)) if (value - vals[0]).abs() <= DEGENERACY_TOL => {
                vals.push(value);
                *proj += outer;
            }
            _ => spaces.push((vec![value], outer)),
        }
    }
    spaces
        .into_iter()
        .map(|(vals, projector)| Eigenspace {
            value: vals.iter().sum::<f64>() / vals.len() as f64,
            rank: vals.len(),
            projector,
        })
        .collect()
}

/// Eigenvalue/projector pairs; see [`HermitianOperator::eigenspaces`].
pub fn eigendecompose(op: &HermitianOperator) -> Vec<(f64, DMatrix<C64>)> {
    op.eigenspaces()
        .iter()
        .map(|e| (e.value, e.projector.clone()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOperator {
    dims: Vec<usize>,
    matrix: DMatrix<C64>,
}

impl UnitaryOperator {
    pub fn new(dims: Vec<usize>, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = check_dim(&dims, DEFAULT_MAX_DIM)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: vec![dim, dim],
                found: vec![matrix.nrows(), matrix.ncols()],
            });
        }
        let deviation = max_abs(&(matrix.adjoint() * &matrix - DMatrix::identity(dim, dim)));
        if !(deviation <= UNITARY_TOL) {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(UnitaryOperator { dims, matrix })
    }

    pub fn identity(dims: Vec<usize>) -> Result<Self> {
        let dim = check_dim(&dims, DEFAULT_MAX_DIM)?;
        Self::new(dims, DMatrix::identity(dim, dim))
    }

    /// `exp(i·angle·H)`, built from the spectral decomposition of `H`.
    pub fn exp_i(h: &HermitianOperator, angle: f64) -> Result<Self> {
        let dim = h.matrix.nrows();
        let mut m = DMatrix::zeros(dim, dim);
        for e in h.eigenspaces() {
            m += &e.projector * C64::from_polar(1.0, angle * e.value);
        }
        Self::new(h.dims.clone(), m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        same_dims(&self.dims, &state.dims)?;
        Ok(StateVector::from_parts(self.dims.clone(), &self.matrix * &state.amps))
    }

    pub fn compose(&self, after: &UnitaryOperator) -> Result<Self> {
        same_dims(&self.dims, &after.dims)?;
        Self::new(self.dims.clone(), &after.matrix * &self.matrix)
    }

    pub fn tensor(&self, other: &UnitaryOperator) -> Result<Self> {
        let dims = [self.dims.clone(), other.dims.clone()].concat();
        check_dim(&dims, DEFAULT_MAX_DIM)?;
        Self::new(dims, self.matrix.kronecker(&other.matrix))
    }
}

impl From<&HermitianOperator> for DMatrix<C64> {
    fn from(op: &HermitianOperator) -> Self {
        op.matrix.clone()
    }
}

pub fn tensor_states(x: &StateVector, y: &StateVector, max_dim: usize) -> Result<StateVector> {
    let dims = [x.dims.clone(), y.dims.clone()].concat();
    check_dim(&dims, max_dim)?;
    Ok(StateVector::from_parts(dims, x.amps.kronecker(&y.amps)))
}

pub fn tensor_operators(
    x: &HermitianOperator,
    y: &HermitianOperator,
    max_dim: usize,
) -> Result<HermitianOperator> {
    let dims = [x.dims.clone(), y.dims.clone()].concat();
    check_dim(&dims, max_dim)?;
    HermitianOperator::new(dims, x.matrix.kronecker(&y.matrix))
}

/// Tensor product of two states or two operators, in argument order.
pub trait Tensor: Sized {
    fn tensor_with(&self, other: &Self) -> Result<Self>;
}

impl Tensor for StateVector {
    fn tensor_with(&self, other: &Self) -> Result<Self> {
        tensor_states(self, other, DEFAULT_MAX_DIM)
    }
}

impl Tensor for HermitianOperator {
    fn tensor_with(&self, other: &Self) -> Result<Self> {
        tensor_operators(self, other, DEFAULT_MAX_DIM)
    }
}

pub fn tensor<T: Tensor>(x: &T, y: &T) -> Result<T> {
    x.tensor_with(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpinKind {
    Pauli,
    Spin1,
}

impl FromStr for SpinKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pauli" | "spin1/2" | "qubit" => Ok(SpinKind::Pauli),
            "spin1" | "spin-1" => Ok(SpinKind::Spin1),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(s)
    }
}

/// Pauli matrices (eigenvalues ±1) or spin-1 components (eigenvalues −1, 0, +1).
pub fn spin_operator(kind: SpinKind, axis: Axis) -> HermitianOperator {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let (dim, entries): (usize, Vec<C64>) = match (kind, axis) {
        (SpinKind::Pauli, Axis::X) => (2, vec![z, one, one, z]),
        (SpinKind::Pauli, Axis::Y) => (2, vec![z, -i, i, z]),
        (SpinKind::Pauli, Axis::Z) => (2, vec![one, z, z, -one]),
        (SpinKind::Spin1, Axis::X) => {
            let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            (3, vec![z, s, z, s, z, s, z, s, z])
        }
        (SpinKind::Spin1, Axis::Y) => {
            let s = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
            (3, vec![z, -s, z, s, z, -s, z, s, z])
        }
        (SpinKind::Spin1, Axis::Z) => (3, vec![one, z, z, z, z, z, z, z, -one]),
    };
    let m = DMatrix::from_row_slice(dim, dim, &entries);
    HermitianOperator::new(vec![dim], m).expect("spin matrices are Hermitian")
}

/// String front end for [`spin_operator`], e.g. `("pauli", "z")`.
pub fn spin_constructor(kind: &str, axis: &str) -> Result<HermitianOperator> {
    Ok(spin_operator(kind.parse()?, axis.parse()?))
}

pub fn sigma_x() -> HermitianOperator {
    spin_operator(SpinKind::Pauli, Axis::X)
}

pub fn sigma_z() -> HermitianOperator {
    spin_operator(SpinKind::Pauli, Axis::Z)
}

pub fn up() -> StateVector {
    StateVector::basis(vec![2], &[0]).expect("valid label")
}

pub fn down() -> StateVector {
    StateVector::basis(vec![2], &[1]).expect("valid label")
}
