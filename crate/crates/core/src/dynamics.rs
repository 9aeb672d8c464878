//! Phase-space propagation under `H = Σ p_j²/2m_j + κ (x3 p1 + p3 p2)`.
//!
//! Hamilton's equations are linear, `ṙ = K r`, and `K` is nilpotent
//! (`K⁴ = 0`: p1 feeds p3, p3 feeds x3, x3 feeds x1), so the exact flow is
//! the cubic polynomial `S(t) = I + tK + t²K²/2 + t³K³/6`. Moments evolve as
//! `mean → S mean`, `cov → S cov Sᵀ`.

use nalgebra::Matrix6;
use serde::Serialize;

use crate::error::{invalid, AkError, Result};
use crate::gaussian::{symplectic_form, PhaseSpaceMoments, P1, P2, P3, X1, X2, X3};

/// Masses and coupling of the measurement Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianParams {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub kappa: f64,
}

impl HamiltonianParams {
    /// Masses must be positive; `κ = 0` (free particles) is allowed.
    pub fn new(m1: f64, m2: f64, m3: f64, kappa: f64) -> Result<Self> {
        let h = Self { m1, m2, m3, kappa };
        h.validate()?;
        Ok(h)
    }

    pub fn unit_masses(kappa: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, kappa)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.m1, self.m2, self.m3, self.kappa].iter().all(|v| v.is_finite());
        if !finite || self.m1 <= 0.0 || self.m2 <= 0.0 || self.m3 <= 0.0 {
            return Err(invalid(format!(
                "masses must be finite and positive, got ({}, {}, {})",
                self.m1, self.m2, self.m3
            )));
        }
        if self.kappa < 0.0 {
            return Err(invalid(format!("coupling must be non-negative, got {}", self.kappa)));
        }
        Ok(())
    }

    /// `b = m2 m3 κ² - 1`
    pub fn b(&self) -> f64 {
        self.m2 * self.m3 * self.kappa * self.kappa - 1.0
    }

    /// `a(t) = 12 m3 + m1 κ² t²`
    pub fn a(&self, t: f64) -> f64 {
        12.0 * self.m3 + self.m1 * self.kappa * self.kappa * t * t
    }

    /// Same masses, different coupling.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.m1, self.m2, self.m3, kappa)
    }
}

/// Exact linear phase-space flow over a time interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticMap {
    pub matrix: Matrix6<f64>,
    pub time: f64,
}

impl SymplecticMap {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix6::identity(),
            time: 0.0,
        }
    }

    /// Largest entry of `SᵀΩS - Ω`.
    pub fn symplectic_defect(&self) -> f64 {
        let omega = symplectic_form();
        (self.matrix.transpose() * omega * self.matrix - omega).amax()
    }

    /// Map for `t1 + t2` from maps for `t1` and `t2` (flows commute).
    pub fn compose(&self, other: &SymplecticMap) -> SymplecticMap {
        SymplecticMap {
            matrix: self.matrix * other.matrix,
            time: self.time + other.time,
        }
    }
}

/// Generator `K` of `ṙ = K r`:
/// `ẋ1 = p1/m1 + κ x3`, `ẋ2 = p2/m2 + κ p3`, `ẋ3 = p3/m3 + κ p2`,
/// `ṗ1 = ṗ2 = 0`, `ṗ3 = -κ p1`.
pub fn drift_matrix(h: &HamiltonianParams) -> Matrix6<f64> {
    let mut k = Matrix6::zeros();
    k[(X1, P1)] = 1.0 / h.m1;
    k[(X1, X3)] = h.kappa;
    k[(X2, P2)] = 1.0 / h.m2;
    k[(X2, P3)] = h.kappa;
    k[(X3, P3)] = 1.0 / h.m3;
    k[(X3, P2)] = h.kappa;
    k[(P3, P1)] = -h.kappa;
    k
}

pub fn symplectic_map(h: &HamiltonianParams, t: f64) -> Result<SymplecticMap> {
    h.validate()?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(format!("propagation time must be finite and >= 0, got {t}")));
    }
    let k = drift_matrix(h) * t;
    let k2 = k * k;
    let k3 = k2 * k;
    Ok(SymplecticMap {
        matrix: Matrix6::identity() + k + k2 / 2.0 + k3 / 6.0,
        time: t,
    })
}

pub fn propagate_moments(state: &PhaseSpaceMoments, map: &SymplecticMap) -> Result<PhaseSpaceMoments> {
    let s = &map.matrix;
    let cov = s * state.cov * s.transpose();
    PhaseSpaceMoments::new(s * state.mean, 0.5 * (cov + cov.transpose()))
}

/// Meter readings at `t = 1/κ` in the κ → ∞ limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeterMoments {
    pub dx1sq: f64,
    pub dx2sq: f64,
    pub mean_x1: f64,
    pub mean_x2: f64,
}

/// Large-coupling meter map:
/// `Δx1² → Δx1² + Δx3² + Δp2²/4 + α`, `Δx2² → Δx2² + Δp3² + Δp1²/4 - β`,
/// `⟨x1⟩ → ⟨x1⟩ + ⟨x3⟩ + ⟨p2⟩/2`, `⟨x2⟩ → ⟨x2⟩ + ⟨p3⟩ - ⟨p1⟩/2`.
pub fn asymptotic_map(state: &PhaseSpaceMoments) -> Result<MeterMoments> {
    let v = |i| state.variance(i);
    let dx1sq = v(X1) + v(X3) + v(P2) / 4.0 + state.alpha();
    let dx2sq = v(X2) + v(P3) + v(P1) / 4.0 - state.beta();
    if dx1sq <= 0.0 || dx2sq <= 0.0 {
        return Err(AkError::DegenerateState(format!(
            "asymptotic meter variances are not positive: ({dx1sq}, {dx2sq})"
        )));
    }
    let m = &state.mean;
    Ok(MeterMoments {
        dx1sq,
        dx2sq,
        mean_x1: m[X1] + m[X3] + m[P2] / 2.0,
        mean_x2: m[X2] + m[P3] - m[P1] / 2.0,
    })
}

/// Meter moments from the exact flow at `t = 1/κ`.
pub fn exact_meter_moments(state: &PhaseSpaceMoments, h: &HamiltonianParams) -> Result<MeterMoments> {
    if h.kappa <= 0.0 {
        return Err(invalid("measurement time 1/κ needs κ > 0"));
    }
    let out = propagate_moments(state, &symplectic_map(h, 1.0 / h.kappa)?)?;
    Ok(MeterMoments {
        dx1sq: out.variance(X1),
        dx2sq: out.variance(X2),
        mean_x1: out.mean[X1],
        mean_x2: out.mean[X2],
    })
}

/// Absolute differences between exact and asymptotic meter moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeterDeltas {
    pub dx1sq: f64,
    pub dx2sq: f64,
    pub mean_x1: f64,
    pub mean_x2: f64,
}

impl MeterDeltas {
    pub fn between(a: &MeterMoments, b: &MeterMoments) -> Self {
        Self {
            dx1sq: (a.dx1sq - b.dx1sq).abs(),
            dx2sq: (a.dx2sq - b.dx2sq).abs(),
            mean_x1: (a.mean_x1 - b.mean_x1).abs(),
            mean_x2: (a.mean_x2 - b.mean_x2).abs(),
        }
    }

    pub fn max(&self) -> f64 {
        self.dx1sq.max(self.dx2sq).max(self.mean_x1).max(self.mean_x2)
    }

    pub fn max_variance(&self) -> f64 {
        self.dx1sq.max(self.dx2sq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStep {
    pub kappa: f64,
    pub deltas: MeterDeltas,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRatio {
    pub kappa_from: f64,
    pub kappa_to: f64,
    /// `error(κ_from) / error(κ_to)`
    pub ratio: f64,
    /// `κ_to / κ_from`, the ratio a first-order remainder produces.
    pub expected: f64,
    /// `ratio` within a factor 2 of `expected`.
    pub first_order: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<ConvergenceStep>,
    pub ratios: Vec<ConvergenceRatio>,
}

impl ConvergenceReport {
    pub fn is_first_order(&self) -> bool {
        self.ratios.iter().all(|r| r.first_order)
    }
}

/// Compares the exact flow at `t = 1/κ` with [`asymptotic_map`] along a
/// strictly increasing list of couplings.
///
/// Fails with [`AkError::NonConvergence`] when the largest deviation does
/// not shrink. Whether the decrease is first order is reported, not
/// enforced: states whose `O(1/κ)` coefficients vanish (e.g. the minimal
/// product state) converge at second order.
pub fn convergence_check(
    state: &PhaseSpaceMoments,
    masses: &HamiltonianParams,
    kappas: &[f64],
) -> Result<ConvergenceReport> {
    if kappas.len() < 2 {
        return Err(invalid("convergence check needs at least two couplings"));
    }
    if kappas.windows(2).any(|w| w[1] <= w[0]) || kappas[0] <= 0.0 {
        return Err(invalid(format!(
            "couplings must be positive and strictly increasing: {kappas:?}"
        )));
    }
    let asymptotic = asymptotic_map(state)?;
    let steps = kappas
        .iter()
        .map(|&kappa| {
            let exact = exact_meter_moments(state, &masses.with_kappa(kappa)?)?;
            Ok(ConvergenceStep {
                kappa,
                deltas: MeterDeltas::between(&exact, &asymptotic),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ratios = Vec::with_capacity(steps.len() - 1);
    for w in steps.windows(2) {
        let (e0, e1) = (w[0].deltas.max(), w[1].deltas.max());
        if e0 == 0.0 && e1 == 0.0 {
            continue;
        }
        if e1 >= e0 {
            return Err(AkError::NonConvergence(format!(
                "deviation grew from {e0:e} at κ = {} to {e1:e} at κ = {}",
                w[0].kappa, w[1].kappa
            )));
        }
        let ratio = e0 / e1;
        let expected = w[1].kappa / w[0].kappa;
        ratios.push(ConvergenceRatio {
            kappa_from: w[0].kappa,
            kappa_to: w[1].kappa,
            ratio,
            expected,
            first_order: ratio >= expected / 2.0 && ratio <= expected * 2.0,
        });
    }
    Ok(ConvergenceReport { steps, ratios })
}
