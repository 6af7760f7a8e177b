//! Worst-case initial conditions on the boundary of the safety envelope.
//!
//! Every `s` with `sᵀPs = φ` can be written `s = Q·y`, where `P = Q·Λ·Qᵀ` and
//! `y` lies on the axis-aligned ellipsoid `Σ λ_i y_i² = φ`. Parameterizing `y`
//! with `n − 1` angles gives
//!
//! ```text
//! y_1 = sqrt(φ/λ_1) · sin θ_1 · Π_{m=2}^{n-1} sin θ_m
//! y_i = sqrt(φ/λ_i) · cos θ_{i-1} · Π_{m=i}^{n-1} sin θ_m     (i ≥ 2)
//! ```
//!
//! which telescopes to `Σ λ_i y_i² / φ = 1` one angle at a time.
//!
//! The grid walks `θ_1` over `q_1` equally spaced values. For each it emits
//! the point with all other angles at zero, then nests `θ_2` (outermost)
//! through `θ_{n-1}` (innermost) over their `q_r − 1` nonzero values. Setting
//! `θ_{n-1} = 0` collapses `y` onto its last axis regardless of the other
//! angles, which is why zero is reserved for the single leading point.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::EigenDecomposition;
use crate::error::{check_dim, CoreError, Result};
use crate::geometry::SafetyEnvelope;
use crate::scalar::Scalar;

/// Sampling resolution for the boundary grid and the number of curriculum periods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleGridSpec {
    /// State dimension `n ≥ 2`.
    pub n: usize,
    /// `q_r` for `r = 1..n−1`.
    pub q: Vec<usize>,
    /// Level value of the sampled boundary.
    #[serde(default = "default_phi")]
    pub phi: f64,
    /// Number of passes over the grid during training.
    pub period: usize,
}

fn default_phi() -> f64 {
    1.0
}

impl AngleGridSpec {
    pub fn new(n: usize, q: Vec<usize>, phi: f64, period: usize) -> Result<Self> {
        let spec = Self { n, q, phi, period };
        spec.validate()?;
        Ok(spec)
    }

    /// `n`-dimensional spec with every `q_r` equal, as in the `(p-q)` naming.
    pub fn uniform(n: usize, q: usize, period: usize) -> Result<Self> {
        Self::new(n, vec![q; n.saturating_sub(1)], 1.0, period)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CoreError::InvalidGrid(format!(
                "state dimension must be at least 2, got {}",
                self.n
            )));
        }
        if self.q.len() != self.n - 1 {
            return Err(CoreError::InvalidGrid(format!(
                "expected {} sample counts, got {}",
                self.n - 1,
                self.q.len()
            )));
        }
        if let Some(r) = self.q.iter().position(|&q| q == 0) {
            return Err(CoreError::InvalidGrid(format!("q[{}] must be at least 1", r + 1)));
        }
        if self.period == 0 {
            return Err(CoreError::InvalidGrid("period must be at least 1".into()));
        }
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return Err(CoreError::NonPositivePhi(self.phi));
        }
        Ok(())
    }

    /// Points produced by one pass of the generator.
    pub fn points_per_period(&self) -> usize {
        let q1 = self.q[0];
        if self.n == 2 {
            return q1;
        }
        let inner: usize = self.q[1..].iter().map(|&q| q - 1).product();
        q1 * inner + q1
    }
}

/// Total number of training episodes: `q_1·p·Π_{i=2}^{n−1}(q_i − 1) + q_1·p`.
///
/// With `n = 2` there are no nested angle loops and the count is `q_1·p`.
pub fn episode_count(spec: &AngleGridSpec) -> usize {
    spec.points_per_period() * spec.period
}

/// Ordered boundary set, immutable after generation.
#[derive(Clone, Debug)]
pub struct WorstCaseGrid<T> {
    points: Vec<Vec<T>>,
    angles: Vec<Vec<T>>,
    spec: AngleGridSpec,
    envelope: SafetyEnvelope<T>,
}

impl<T: Scalar> WorstCaseGrid<T> {
    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    /// The angle tuple each point was generated from.
    pub fn angles(&self) -> &[Vec<T>] {
        &self.angles
    }

    pub fn spec(&self) -> &AngleGridSpec {
        &self.spec
    }

    pub fn envelope(&self) -> &SafetyEnvelope<T> {
        &self.envelope
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Iterates the curriculum order: the full grid, `period` times.
    pub fn curriculum(&self) -> impl Iterator<Item = (usize, usize, &[T])> + '_ {
        (0..self.spec.period).flat_map(move |period| {
            self.points
                .iter()
                .enumerate()
                .map(move |(i, p)| (period, i, p.as_slice()))
        })
    }

    /// CSV with header `index,s1,...,sn`, one row per point in generation order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.spec.n;
        let header: Vec<String> = std::iter::once("index".to_string())
            .chain((1..=n).map(|i| format!("s{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, p) in self.points.iter().enumerate() {
            write!(w, "{i}")?;
            for x in p {
                write!(w, ",{}", x)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Maps an angle tuple to a state on `{s : sᵀPs = φ}`.
pub fn boundary_point<T: Scalar>(decomp: &EigenDecomposition<T>, phi: T, thetas: &[T]) -> Result<Vec<T>> {
    let n = decomp.dim();
    check_dim("boundary_point angles", n.saturating_sub(1), thetas.len())?;
    if !(phi > T::zero()) {
        return Err(CoreError::NonPositivePhi(phi.as_f64()));
    }
    if let Some(&lam) = decomp.eigenvalues.iter().find(|&&l| !(l > T::zero())) {
        return Err(CoreError::NotPositiveDefinite {
            min_eigenvalue: lam.as_f64(),
        });
    }
    if n == 1 {
        return Ok(vec![decomp.q[(0, 0)] * (phi / decomp.eigenvalues[0]).sqrt()]);
    }
    // tail[i] = Π_{m=i}^{n-1} sin θ_m (1-based θ), tail[n] = 1.
    let mut tail = vec![T::one(); n + 1];
    for i in (1..n).rev() {
        tail[i] = tail[i + 1] * thetas[i - 1].sin();
    }
    let mut y = vec![T::zero(); n];
    y[0] = (phi / decomp.eigenvalues[0]).sqrt() * thetas[0].sin() * tail[2];
    for i in 2..=n {
        y[i - 1] = (phi / decomp.eigenvalues[i - 1]).sqrt() * thetas[i - 2].cos() * tail[i];
    }
    Ok(decomp.q.mul_vec(&y))
}

/// Generates the ordered worst-case boundary set for one period.
pub fn generate_grid<T: Scalar>(env: &SafetyEnvelope<T>, spec: &AngleGridSpec) -> Result<WorstCaseGrid<T>> {
    spec.validate()?;
    check_dim("generate_grid state dimension", spec.n, env.dim())?;
    let phi = T::lit(spec.phi);
    let two_pi = T::PI() + T::PI();
    let step = |q: usize, k: usize| two_pi * T::lit(k as f64) / T::lit(q as f64);

    let n = spec.n;
    let mut points = Vec::with_capacity(spec.points_per_period());
    let mut angles = Vec::with_capacity(spec.points_per_period());
    let mut push = |thetas: Vec<T>| -> Result<()> {
        points.push(boundary_point(env.eigen(), phi, &thetas)?);
        angles.push(thetas);
        Ok(())
    };

    for k1 in 0..spec.q[0] {
        let mut thetas = vec![T::zero(); n - 1];
        thetas[0] = step(spec.q[0], k1);
        push(thetas.clone())?;
        if n == 2 {
            continue;
        }
        // Odometer over θ_2..θ_{n-1}, innermost (last) angle fastest.
        let inner = &spec.q[1..];
        if inner.iter().any(|&q| q < 2) {
            continue;
        }
        let mut idx = vec![1usize; inner.len()];
        'odometer: loop {
            for (r, &k) in idx.iter().enumerate() {
                thetas[r + 1] = step(inner[r], k);
            }
            push(thetas.clone())?;
            let mut r = inner.len();
            loop {
                if r == 0 {
                    break 'odometer;
                }
                r -= 1;
                idx[r] += 1;
                if idx[r] < inner[r] {
                    break;
                }
                idx[r] = 1;
            }
        }
    }

    Ok(WorstCaseGrid {
        points,
        angles,
        spec: spec.clone(),
        envelope: env.clone(),
    })
}

/// Uniform draw, independently per component, from `[low, high]`.
///
/// A degenerate interval `low == high` yields `low`; `low > high` is an error.
pub fn random_initial_condition<T: Scalar, R: Rng + ?Sized>(
    intervals: &[(T, T)],
    rng: &mut R,
) -> Result<Vec<T>> {
    intervals
        .iter()
        .enumerate()
        .map(|(dim, &(low, high))| {
            if !(low <= high) {
                return Err(CoreError::EmptyInterval {
                    dim,
                    low: low.as_f64(),
                    high: high.as_f64(),
                });
            }
            Ok(if low == high {
                low
            } else {
                rng.gen_range(low..=high)
            })
        })
        .collect()
}
