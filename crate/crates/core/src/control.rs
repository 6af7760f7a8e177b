//! Model-based feedback, its Lyapunov certificate, the residual action and
//! the safety-embedded reward.
//!
//! The certificate is the triple `(F, P, α)` with `Ā = A + B·F`,
//! `H = ĀᵀPĀ` and `0 ≺ H ≺ α·P`. Along the nominal closed loop
//! `s' = Ā·s` this gives `V(s') = sᵀHs < α·V(s)` for `V(s) = sᵀPs`, so
//! every sublevel set of `V`, and in particular `Ω`, is forward invariant.

use serde::{Deserialize, Serialize};

use crate::eigen::eigendecompose;
use crate::error::{check_dim, CoreError, Result, ViolatedCondition};
use crate::geometry::{containment_ratios, SafetyEnvelope, SafetySet};
use crate::matrix::{inverse, solve_matrix, Matrix, SymmetricMatrix};
use crate::scalar::Scalar;

const RICCATI_MAX_ITERATIONS: usize = 100_000;
const RICCATI_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_DOUBLINGS: usize = 64;
/// Slack applied to the touching scale so rounding never breaks containment.
const CONTAINMENT_SLACK: f64 = 1e-9;

/// Known dynamics `s(k+1) = A·s(k) + B·a(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct LinearModel<T> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(CoreError::Malformed(format!(
                "A must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        check_dim("B rows", a.rows(), b.rows())?;
        if !a.is_finite() || !b.is_finite() {
            return Err(CoreError::NonFinite("linear model"));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.cols()
    }

    /// `A + B·F`.
    pub fn closed_loop(&self, f_gain: &Matrix<T>) -> Result<Matrix<T>> {
        check_dim("F rows", self.action_dim(), f_gain.rows())?;
        check_dim("F cols", self.state_dim(), f_gain.cols())?;
        Ok(self.a.add(&self.b.matmul(f_gain)))
    }

    /// `(A/r, B/r)`; an LQR design on the scaled model places every
    /// closed-loop eigenvalue of the original model inside radius `r`.
    pub fn scaled(&self, r: T) -> Self {
        Self {
            a: self.a.scale(T::one() / r),
            b: self.b.scale(T::one() / r),
        }
    }

    pub fn step(&self, s: &[T], a: &[T]) -> Vec<T> {
        let mut next = self.a.mul_vec(s);
        for (x, bu) in next.iter_mut().zip(self.b.mul_vec(a)) {
            *x += bu;
        }
        next
    }
}

/// Validated decay certificate `0 ≺ H ≺ α·P`.
#[derive(Clone, Debug)]
pub struct Certificate<T> {
    f_gain: Matrix<T>,
    p: SymmetricMatrix<T>,
    h: SymmetricMatrix<T>,
    alpha: T,
    a_bar: Matrix<T>,
    h_margin: T,
    decay_margin: T,
}

impl<T: Scalar> Certificate<T> {
    pub fn f_gain(&self) -> &Matrix<T> {
        &self.f_gain
    }

    pub fn p(&self) -> &SymmetricMatrix<T> {
        &self.p
    }

    pub fn h(&self) -> &SymmetricMatrix<T> {
        &self.h
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn a_bar(&self) -> &Matrix<T> {
        &self.a_bar
    }

    /// Smallest eigenvalue of `H`.
    pub fn h_margin(&self) -> T {
        self.h_margin
    }

    /// Smallest eigenvalue of `α·P − H`.
    pub fn decay_margin(&self) -> T {
        self.decay_margin
    }

    pub fn state_dim(&self) -> usize {
        self.p.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.f_gain.rows()
    }

    /// `Ω = {s : sᵀPs ≤ φ}` built on this certificate's `P`.
    pub fn envelope(&self, phi: T) -> Result<SafetyEnvelope<T>> {
        SafetyEnvelope::new(self.p.clone(), phi)
    }

    pub fn report(&self) -> CertificateReport {
        let to_rows = |m: &Matrix<T>| -> Vec<Vec<f64>> {
            m.to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(Scalar::as_f64).collect())
                .collect()
        };
        let eig = |m: &SymmetricMatrix<T>| -> Vec<f64> {
            eigendecompose(m)
                .map(|d| d.eigenvalues.into_iter().map(Scalar::as_f64).collect())
                .unwrap_or_default()
        };
        let gap = self.p.scale(self.alpha).sub(&self.h);
        CertificateReport {
            alpha: self.alpha.as_f64(),
            f_gain: to_rows(&self.f_gain),
            p: to_rows(self.p.matrix()),
            h: to_rows(self.h.matrix()),
            a_bar: to_rows(&self.a_bar),
            eigenvalues_p: eig(&self.p),
            eigenvalues_h: eig(&self.h),
            eigenvalues_alpha_p_minus_h: eig(&gap),
            h_margin: self.h_margin.as_f64(),
            decay_margin: self.decay_margin.as_f64(),
        }
    }
}

/// Serializable view of a certificate with its eigenvalue margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub alpha: f64,
    pub f_gain: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub a_bar: Vec<Vec<f64>>,
    pub eigenvalues_p: Vec<f64>,
    pub eigenvalues_h: Vec<f64>,
    pub eigenvalues_alpha_p_minus_h: Vec<f64>,
    pub h_margin: f64,
    pub decay_margin: f64,
}

/// Infinite-horizon discrete LQR gain `F = −K` from the Riccati fixed point.
///
/// Iterates `X ← Q + AᵀXA − AᵀXB(R + BᵀXB)⁻¹BᵀXA` from `X = Q` until the
/// update falls below `1e-12` relative to `max(1, ‖X‖_max)`.
pub fn dlqr_gain<T: Scalar>(
    model: &LinearModel<T>,
    state_weight: &SymmetricMatrix<T>,
    input_weight: &SymmetricMatrix<T>,
) -> Result<Matrix<T>> {
    let n = model.state_dim();
    let m = model.action_dim();
    check_dim("state weight", n, state_weight.dim())?;
    check_dim("input weight", m, input_weight.dim())?;
    let a = &model.a;
    let b = &model.b;
    let at = a.transpose();
    let bt = b.transpose();
    let q = state_weight.matrix();
    let r = input_weight.matrix();
    let tol = T::tol(RICCATI_TOL);

    let gain_of = |x: &Matrix<T>| -> Result<Matrix<T>> {
        let bx = bt.matmul(x);
        let lhs = r.add(&bx.matmul(b));
        solve_matrix(&lhs, &bx.matmul(a))
    };

    let mut x = q.clone();
    for _ in 0..RICCATI_MAX_ITERATIONS {
        let k = gain_of(&x)?;
        let atx = at.matmul(&x);
        let next = q.add(&atx.matmul(a)).sub(&atx.matmul(b).matmul(&k));
        let next = SymmetricMatrix::new(next)?.into_matrix();
        if !next.is_finite() {
            break;
        }
        let delta = next.sub(&x).max_abs();
        let scale = next.max_abs().max(T::one());
        x = next;
        if delta <= tol * scale {
            return Ok(gain_of(&x)?.scale(-T::one()));
        }
    }
    Err(CoreError::RiccatiNoConvergence {
        iterations: RICCATI_MAX_ITERATIONS,
    })
}

/// Sum of the series `Σ_k (Mᵀ)^k M^k` by repeated doubling, i.e. the
/// solution of `MᵀXM − X = −I`. Fails if `M^(2^j)` does not vanish.
fn lyapunov_series<T: Scalar>(m: &Matrix<T>) -> Result<SymmetricMatrix<T>> {
    let n = m.rows();
    let mut x = Matrix::identity(n);
    let mut power = m.clone();
    for _ in 0..LYAPUNOV_MAX_DOUBLINGS {
        let term = power.transpose().matmul(&x).matmul(&power);
        x = x.add(&term);
        power = power.matmul(&power);
        if !x.is_finite() || !power.is_finite() {
            return Err(CoreError::DecayConditionViolated);
        }
        if power.max_abs() <= T::epsilon() * T::lit(1e-3) {
            return SymmetricMatrix::new(x);
        }
    }
    Err(CoreError::DecayConditionViolated)
}

/// `P` satisfying the decay certificate for `Ā` and touching the safety set.
///
/// Solves `(1/α)·ĀᵀP₀Ā − P₀ = −I` and returns `P = c·P₀` with the smallest
/// `c` for which every constraint row's support value is within its bound
/// (the tightest row touches to within `1e-9`).
pub fn lyapunov_p<T: Scalar>(
    a_bar: &Matrix<T>,
    decay_alpha: T,
    set: &SafetySet<T>,
) -> Result<SymmetricMatrix<T>> {
    if !a_bar.is_square() {
        return Err(CoreError::Malformed("A_bar must be square".into()));
    }
    check_dim("safety set state dimension", a_bar.rows(), set.state_dim())?;
    if !(decay_alpha > T::zero() && decay_alpha <= T::one()) {
        return Err(CoreError::InvalidAlpha(decay_alpha.as_f64()));
    }
    let scaled = a_bar.scale(T::one() / decay_alpha.sqrt());
    let p0 = lyapunov_series(&scaled)?;
    let env0 = SafetyEnvelope::unit(p0.clone())?;
    let ratios = containment_ratios(&env0, set)?;
    let worst = ratios.iter().fold(T::zero(), |m, &r| m.max(r));
    if !worst.is_finite() || worst == T::zero() {
        return Err(CoreError::ContainmentImpossible(
            "constraint rows give no finite positive support bound".into(),
        ));
    }
    // support scales as c^(-1/2); c = worst² makes the tightest row touch.
    let c = worst * worst * (T::one() + T::tol(CONTAINMENT_SLACK));
    Ok(p0.scale(c))
}

/// Computes `Ā` and `H = ĀᵀPĀ` and checks `0 ≺ H ≺ α·P`.
pub fn build_certificate<T: Scalar>(
    model: &LinearModel<T>,
    f_gain: &Matrix<T>,
    p: &SymmetricMatrix<T>,
    alpha: T,
) -> Result<Certificate<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(CoreError::InvalidAlpha(alpha.as_f64()));
    }
    check_dim("P dimension", model.state_dim(), p.dim())?;
    let a_bar = model.closed_loop(f_gain)?;
    let p_eig = eigendecompose(p)?;
    if !(p_eig.min_eigenvalue() > T::zero()) {
        return Err(CoreError::CertificateViolation {
            condition: ViolatedCondition::PNotPositiveDefinite,
            min_eigenvalue: p_eig.min_eigenvalue().as_f64(),
        });
    }
    let h = p.congruence(&a_bar);
    let h_margin = eigendecompose(&h)?.min_eigenvalue();
    if !(h_margin > T::zero()) {
        return Err(CoreError::CertificateViolation {
            condition: ViolatedCondition::HNotPositiveDefinite,
            min_eigenvalue: h_margin.as_f64(),
        });
    }
    let decay_margin = eigendecompose(&p.scale(alpha).sub(&h))?.min_eigenvalue();
    if !(decay_margin > T::zero()) {
        return Err(CoreError::CertificateViolation {
            condition: ViolatedCondition::DecayRateExceeded,
            min_eigenvalue: decay_margin.as_f64(),
        });
    }
    Ok(Certificate {
        f_gain: f_gain.clone(),
        p: p.clone(),
        h,
        alpha,
        a_bar,
        h_margin,
        decay_margin,
    })
}

/// Weights and decay rate for [`synthesize`].
#[derive(Clone, Debug)]
pub struct SynthesisSpec<T> {
    pub state_weight: SymmetricMatrix<T>,
    pub input_weight: SymmetricMatrix<T>,
    pub alpha: T,
    /// Radius passed to the LQR design; defaults to `sqrt(α)`, the largest
    /// closed-loop spectral radius compatible with `H ≺ α·P`.
    pub stability_radius: Option<T>,
}

/// LQR feedback on the radius-scaled model, then `P` from [`lyapunov_p`],
/// validated by [`build_certificate`].
pub fn synthesize<T: Scalar>(
    model: &LinearModel<T>,
    spec: &SynthesisSpec<T>,
    set: &SafetySet<T>,
) -> Result<Certificate<T>> {
    if !(spec.alpha > T::zero() && spec.alpha < T::one()) {
        return Err(CoreError::InvalidAlpha(spec.alpha.as_f64()));
    }
    let radius = spec.stability_radius.unwrap_or_else(|| spec.alpha.sqrt());
    let f_gain = dlqr_gain(&model.scaled(radius), &spec.state_weight, &spec.input_weight)?;
    let a_bar = model.closed_loop(&f_gain)?;
    let p = lyapunov_p(&a_bar, spec.alpha, set)?;
    build_certificate(model, &f_gain, &p, spec.alpha)
}

/// `a = a_drl + F·s`.
pub fn residual_action<T: Scalar>(cert: &Certificate<T>, s: &[T], a_drl: &[T]) -> Result<Vec<T>> {
    check_dim("residual_action state", cert.state_dim(), s.len())?;
    check_dim(
        "residual_action data-driven action",
        cert.action_dim(),
        a_drl.len(),
    )?;
    Ok(cert
        .f_gain
        .mul_vec(s)
        .into_iter()
        .zip(a_drl)
        .map(|(phy, &drl)| drl + phy)
        .collect())
}

/// `s_kᵀ·H·s_k − s_nextᵀ·P·s_next + w`.
pub fn safety_reward<T: Scalar>(cert: &Certificate<T>, s_k: &[T], s_next: &[T], w_term: T) -> T {
    cert.h.quad_form(s_k) - cert.p.quad_form(s_next) + w_term
}

/// `P⁻¹`, used when the caller wants the envelope's covariance-like shape.
pub fn envelope_shape<T: Scalar>(p: &SymmetricMatrix<T>) -> Result<Matrix<T>> {
    inverse(p.matrix())
}
