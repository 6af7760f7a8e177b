//! Safety set `X = {s : lower ≤ D·s − v ≤ upper}` and ellipsoidal safety
//! envelope `Ω = {s : sᵀPs ≤ φ}`.

use serde::{Deserialize, Serialize};

use crate::eigen::{eigendecompose, EigenDecomposition};
use crate::error::{check_dim, CoreError, Result};
use crate::matrix::{solve_linear, Matrix, SymmetricMatrix};
use crate::scalar::Scalar;

/// Boundary tolerance used when classifying simulated states.
pub const RUNTIME_BOUNDARY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct SafetySet<T> {
    d: Matrix<T>,
    v: Vec<T>,
    upper: Vec<T>,
    lower: Vec<T>,
}

impl<T: Scalar> SafetySet<T> {
    pub fn new(d: Matrix<T>, v: Vec<T>, upper: Vec<T>, lower: Vec<T>) -> Result<Self> {
        let h = d.rows();
        if h == 0 || d.cols() == 0 {
            return Err(CoreError::InvalidSafetySet("D must be at least 1x1".into()));
        }
        check_dim("safety set v", h, v.len())?;
        check_dim("safety set upper bound", h, upper.len())?;
        check_dim("safety set lower bound", h, lower.len())?;
        for i in 0..h {
            if !(lower[i] < upper[i]) {
                return Err(CoreError::InvalidSafetySet(format!(
                    "row {i}: lower bound {} is not below upper bound {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { d, v, upper, lower })
    }

    /// Axis-aligned symmetric box `|s_i| ≤ bounds[i]`.
    pub fn symmetric_box(bounds: &[T]) -> Result<Self> {
        let n = bounds.len();
        Self::new(
            Matrix::identity(n),
            vec![T::zero(); n],
            bounds.to_vec(),
            bounds.iter().map(|&b| -b).collect(),
        )
    }

    /// Symmetric bounds `|[D]_i · s| ≤ bounds[i]` on arbitrary rows.
    pub fn symmetric_rows(d: Matrix<T>, bounds: &[T]) -> Result<Self> {
        let h = d.rows();
        Self::new(
            d,
            vec![T::zero(); h],
            bounds.to_vec(),
            bounds.iter().map(|&b| -b).collect(),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.d.cols()
    }

    pub fn num_constraints(&self) -> usize {
        self.d.rows()
    }

    pub fn d(&self) -> &Matrix<T> {
        &self.d
    }

    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    /// `lower ≤ D·s − v ≤ upper`, componentwise and inclusive.
    pub fn contains(&self, s: &[T]) -> Result<bool> {
        check_dim("safety set state", self.state_dim(), s.len())?;
        Ok(self.contains_unchecked(s))
    }

    pub(crate) fn contains_unchecked(&self, s: &[T]) -> bool {
        self.d
            .mul_vec(s)
            .iter()
            .zip(&self.v)
            .zip(self.lower.iter().zip(&self.upper))
            .all(|((&ds, &v), (&lo, &hi))| {
                let r = ds - v;
                lo <= r && r <= hi
            })
    }
}

/// `Ω = {s : sᵀPs ≤ φ}` with `P ≻ 0` and `φ > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyEnvelope<T> {
    p: SymmetricMatrix<T>,
    phi: T,
    eigen: EigenDecomposition<T>,
}

impl<T: Scalar> SafetyEnvelope<T> {
    pub fn new(p: SymmetricMatrix<T>, phi: T) -> Result<Self> {
        if !(phi > T::zero()) || !phi.is_finite() {
            return Err(CoreError::NonPositivePhi(phi.as_f64()));
        }
        let eigen = eigendecompose(&p)?;
        if !(eigen.min_eigenvalue() > T::zero()) {
            return Err(CoreError::NotPositiveDefinite {
                min_eigenvalue: eigen.min_eigenvalue().as_f64(),
            });
        }
        Ok(Self { p, phi, eigen })
    }

    /// Envelope with the default level `φ = 1`.
    pub fn unit(p: SymmetricMatrix<T>) -> Result<Self> {
        Self::new(p, T::one())
    }

    pub fn p(&self) -> &SymmetricMatrix<T> {
        &self.p
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn eigen(&self) -> &EigenDecomposition<T> {
        &self.eigen
    }

    pub fn with_phi(&self, phi: T) -> Result<Self> {
        if !(phi > T::zero()) {
            return Err(CoreError::NonPositivePhi(phi.as_f64()));
        }
        Ok(Self { phi, ..self.clone() })
    }

    pub fn contains(&self, s: &[T]) -> Result<bool> {
        Ok(lyapunov_value(self, s)? <= self.phi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateClass {
    InsideEnvelope,
    OnBoundary,
    InSetOutsideEnvelope,
    Unsafe,
}

/// `sᵀPs`.
pub fn lyapunov_value<T: Scalar>(env: &SafetyEnvelope<T>, s: &[T]) -> Result<T> {
    check_dim("lyapunov_value state", env.dim(), s.len())?;
    Ok(env.p.quad_form(s))
}

pub fn classify<T: Scalar>(
    set: &SafetySet<T>,
    env: &SafetyEnvelope<T>,
    s: &[T],
    boundary_tol: T,
) -> Result<StateClass> {
    check_dim("classify envelope", set.state_dim(), env.dim())?;
    let v = lyapunov_value(env, s)?;
    let gap = v - env.phi;
    Ok(if gap.abs() <= boundary_tol {
        StateClass::OnBoundary
    } else if gap < T::zero() {
        StateClass::InsideEnvelope
    } else if set.contains_unchecked(s) {
        StateClass::InSetOutsideEnvelope
    } else {
        StateClass::Unsafe
    })
}

/// Support function `max_{s∈Ω} dᵀs = sqrt(φ · dᵀP⁻¹d)`.
pub fn envelope_support<T: Scalar>(env: &SafetyEnvelope<T>, direction: &[T]) -> Result<T> {
    check_dim("support direction", env.dim(), direction.len())?;
    if direction.iter().all(|&x| x == T::zero()) {
        return Err(CoreError::ZeroDirection);
    }
    let x = solve_linear(env.p.matrix(), direction)?;
    let dpd: T = direction.iter().zip(&x).map(|(&a, &b)| a * b).sum();
    Ok((env.phi * dpd.max(T::zero())).sqrt())
}

/// Certifies `Ω ⊆ X` row by row through the support function.
///
/// Only origin-centred sets (`v = 0`) are supported; a nonzero offset is an error.
pub fn envelope_contained_in_set<T: Scalar>(env: &SafetyEnvelope<T>, set: &SafetySet<T>) -> Result<bool> {
    Ok(containment_ratios(env, set)?.iter().all(|&r| r <= T::one()))
}

/// Per-row ratio `support(D_i) / min(upper_i, −lower_i)`; containment iff all ≤ 1.
pub fn containment_ratios<T: Scalar>(env: &SafetyEnvelope<T>, set: &SafetySet<T>) -> Result<Vec<T>> {
    check_dim("containment state dimension", set.state_dim(), env.dim())?;
    if let Some((row, &value)) = set.v.iter().enumerate().find(|(_, &v)| v != T::zero()) {
        return Err(CoreError::AsymmetricSafetySet {
            row,
            value: value.as_f64(),
        });
    }
    (0..set.num_constraints())
        .map(|i| {
            let bound = set.upper[i].min(-set.lower[i]);
            let support = envelope_support(env, set.d.row(i))?;
            Ok(if bound > T::zero() {
                support / bound
            } else {
                T::infinity()
            })
        })
        .collect()
}
