//! The generalized Arthurs-Kelly bound and its violation by correlated probes.
//!
//! For a separable probe the meter product at `t = 1/κ` obeys
//! `Δx1 Δx2 ≥ Γ = ½√K1 + ½√K2 + √K3` with `K_j = Δx_j² Δp_j²`. Correlated
//! probes carry `α, β ≠ 0`, which shift the meter variances and can push the
//! product `Γ_C` below `Γ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::asymptotic_map;
use crate::error::{AkError, Result};
use crate::gaussian::{
    assemble_initial_state, probe_moments, GaussianProbeParams, GaussianSystemParams, PhaseSpaceMoments, C64,
};

/// Relative gap below which `Γ_C` and `Γ` count as equal.
pub const BOUNDARY_REL_TOL: f64 = 1e-12;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(AkError::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_ks(k1: f64, k2: f64, k3: f64) -> Result<()> {
    check_positive("K1", k1)?;
    check_positive("K2", k2)?;
    check_positive("K3", k3)
}

/// `Γ = ½√K1 + ½√K2 + √K3`.
pub fn gamma_bound(k1: f64, k2: f64, k3: f64) -> Result<f64> {
    check_ks(k1, k2, k3)?;
    Ok(0.5 * k1.sqrt() + 0.5 * k2.sqrt() + k3.sqrt())
}

/// Separable meter product `Δx1²(1/κ) Δx2²(1/κ)` as a function of
/// `x = Δp1² Δp2²` and `y = Δp2² Δp3²`.
pub fn separable_product(k1: f64, k2: f64, k3: f64, x: f64, y: f64) -> f64 {
    0.25 * (k1 + k2) + k3 + k1 * k2 / x + k2 * k3 / y + k1 * y / x + 0.25 * k3 * x / y + x / 16.0 + 0.25 * y
}

/// Partial derivatives of [`separable_product`] with respect to `x` and `y`.
pub fn stationarity_residuals(k1: f64, k2: f64, k3: f64, x: f64, y: f64) -> (f64, f64) {
    (
        -k1 * k2 / (x * x) - k1 * y / (x * x) + 0.25 * k3 / y + 1.0 / 16.0,
        -k2 * k3 / (y * y) + k1 / x - 0.25 * k3 * x / (y * y) + 0.25,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimizedProduct {
    pub product_min: f64,
    pub x_opt: f64,
    pub y_opt: f64,
}

/// Minimum of [`separable_product`] over `x, y > 0`, attained at
/// `x = 4√(K1K2)`, `y = 2√(K2K3)`; the minimum value is `Γ²`.
pub fn minimized_product(k1: f64, k2: f64, k3: f64) -> Result<MinimizedProduct> {
    check_ks(k1, k2, k3)?;
    let x_opt = 4.0 * (k1 * k2).sqrt();
    let y_opt = 2.0 * (k2 * k3).sqrt();
    Ok(MinimizedProduct {
        product_min: separable_product(k1, k2, k3, x_opt, y_opt),
        x_opt,
        y_opt,
    })
}

/// Correlated-probe meter product with `z = Δp3² Δp1²` as an extra
/// coordinate. Diagnostic only: it has no useful minimum over `z`.
#[allow(clippy::too_many_arguments)]
pub fn correlated_product(k1: f64, k2: f64, k3: f64, x: f64, y: f64, z: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_ks(k1, k2, k3)?;
    for (n, v) in [("x", x), ("y", y), ("z", z)] {
        check_positive(n, v)?;
    }
    let alpha_term = k2 * (z / (x * y)).sqrt() + (y * z / x).sqrt() + 0.25 * (x * z / y).sqrt();
    let beta_term = k1 * (y / (x * z)).sqrt() + k3 * (x / (y * z)).sqrt() + 0.25 * (x * y / z).sqrt();
    Ok(separable_product(k1, k2, k3, x, y) - alpha * beta + alpha * alpha_term - beta * beta_term)
}

/// `Δx1(1/κ) Δx2(1/κ)` in the large-coupling limit.
pub fn meter_product(state: &PhaseSpaceMoments) -> Result<f64> {
    let m = asymptotic_map(state)?;
    Ok((m.dx1sq * m.dx2sq).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub dx1sq_t: f64,
    pub dx2sq_t: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gamma_c: f64,
    /// `Γ_C ≤ Γ`
    pub violates_generalized: bool,
    /// `Γ_C < 1`
    pub violates_original: bool,
}

/// Γ from the initial `K_j` and the meter product of `state`.
pub fn uncertainty_report(state: &PhaseSpaceMoments) -> Result<UncertaintyReport> {
    let meters = asymptotic_map(state)?;
    let (k1, k2, k3) = (
        state.uncertainty_product(1),
        state.uncertainty_product(2),
        state.uncertainty_product(3),
    );
    let gamma = gamma_bound(k1, k2, k3)?;
    let gamma_c = (meters.dx1sq * meters.dx2sq).sqrt();
    Ok(UncertaintyReport {
        dx1sq_t: meters.dx1sq,
        dx2sq_t: meters.dx2sq,
        k1,
        k2,
        k3,
        alpha: state.alpha(),
        beta: state.beta(),
        gamma,
        gamma_c,
        violates_generalized: gamma_c <= gamma,
        violates_original: gamma_c < 1.0,
    })
}

fn check_family(ar: f64, br: f64, cr: f64, ci: f64) -> Result<()> {
    check_positive("A_R", ar)?;
    check_positive("B_R", br)?;
    if !(cr.is_finite() && ci.is_finite()) {
        return Err(AkError::Domain("C_R and C_I must be finite".into()));
    }
    if ar * br - cr * cr <= 0.0 {
        return Err(AkError::Domain(format!(
            "probe not normalizable: A_R B_R - C_R² = {}",
            ar * br - cr * cr
        )));
    }
    Ok(())
}

/// Centred probe of the correlated family with `A_I = C_R C_I / B_R`, `B_I = C_R C_I / A_R`.
pub fn constrained_probe(ar: f64, br: f64, cr: f64, ci: f64) -> Result<GaussianProbeParams> {
    check_family(ar, br, cr, ci)?;
    GaussianProbeParams::centered(C64::new(ar, cr * ci / br), C64::new(br, cr * ci / ar), C64::new(cr, ci))
        .map_err(|e| AkError::Domain(e.to_string()))
}

/// `Γ_C` of the constrained family with the minimal system state, from the
/// propagated moments.
pub fn gamma_c(ar: f64, br: f64, cr: f64, ci: f64) -> Result<f64> {
    let probe = constrained_probe(ar, br, cr, ci)?;
    let state = assemble_initial_state(&probe, &GaussianSystemParams::minimal())?;
    meter_product(&state)
}

/// `Γ_C = √(f1 f2) / (8 √(A_R B_R) (A_R B_R - C_R²))` with
/// `f1 = 4 A_R B_R + D (A_R B_R + 4 A_R + C_I² + 4 C_I)`,
/// `f2 = 4 A_R B_R + D (A_R B_R + 4 B_R + C_I² - 4 C_I)`, `D = A_R B_R - C_R²`.
pub fn gamma_c_closed_form(ar: f64, br: f64, cr: f64, ci: f64) -> Result<f64> {
    check_family(ar, br, cr, ci)?;
    let d = ar * br - cr * cr;
    let f1 = 4.0 * ar * br + d * (ar * br + 4.0 * ar + ci * ci + 4.0 * ci);
    let f2 = 4.0 * ar * br + d * (ar * br + 4.0 * br + ci * ci - 4.0 * ci);
    Ok((f1 * f2).sqrt() / (8.0 * (ar * br).sqrt() * d))
}

/// Separable bound for the constrained family with the minimal system:
/// `Γ = ½ (1 + √((A_R B_R + C_I²) / (A_R B_R - C_R²)))`.
pub fn gamma_family(ar: f64, br: f64, cr: f64, ci: f64) -> Result<f64> {
    check_family(ar, br, cr, ci)?;
    Ok(0.5 * (1.0 + ((ar * br + ci * ci) / (ar * br - cr * cr)).sqrt()))
}

/// Inclusive linear range sampled at `steps` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        Self { min, max, steps }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.steps < 2 {
            return Err(AkError::InvalidParameters(format!("{name} needs at least 2 steps")));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.max < self.min {
            return Err(AkError::InvalidParameters(format!(
                "{name} range must be finite with min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// `A_R × C_I` plane at fixed `B_R`, `C_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanGrid {
    pub br: f64,
    pub cr: f64,
    pub ar: AxisRange,
    pub ci: AxisRange,
}

impl ScanGrid {
    /// `B_R = C_R = 1`, `A_R ∈ [1.05, 10]`, `C_I ∈ [-10, 10]`, 200 × 200.
    pub fn panel_a() -> Self {
        Self {
            br: 1.0,
            cr: 1.0,
            ar: AxisRange::new(1.05, 10.0, 200),
            ci: AxisRange::new(-10.0, 10.0, 200),
        }
    }

    /// `B_R = 1`, `C_R = 2`, `A_R ∈ [4.05, 20]`, `C_I ∈ [-10, 10]`, 200 × 200.
    pub fn panel_b() -> Self {
        Self {
            br: 1.0,
            cr: 2.0,
            ar: AxisRange::new(4.05, 20.0, 200),
            ci: AxisRange::new(-10.0, 10.0, 200),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.br.is_finite() && self.br > 0.0 && self.cr.is_finite()) {
            return Err(AkError::InvalidParameters(format!(
                "need finite B_R > 0 and finite C_R, got B_R = {}, C_R = {}",
                self.br, self.cr
            )));
        }
        self.ar.validate("A_R")?;
        self.ci.validate("C_I")
    }

    pub fn len(&self) -> usize {
        self.ar.steps * self.ci.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub a_r: f64,
    pub c_i: f64,
    pub valid: bool,
    /// NaN at invalid points.
    pub gamma: f64,
    pub gamma_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub violates_generalized: bool,
    pub violates_original: bool,
    /// `|Γ_C - Γ| ≤ 10⁻¹² Γ`
    pub boundary: bool,
}

fn scan_point(grid: &ScanGrid, a_r: f64, c_i: f64) -> ScanRow {
    let invalid = ScanRow {
        a_r,
        c_i,
        valid: false,
        gamma: f64::NAN,
        gamma_c: f64::NAN,
        alpha: f64::NAN,
        beta: f64::NAN,
        violates_generalized: false,
        violates_original: false,
        boundary: false,
    };
    if a_r * grid.br <= grid.cr * grid.cr {
        return invalid;
    }
    let evaluated = (|| -> Result<ScanRow> {
        let gamma = gamma_family(a_r, grid.br, grid.cr, c_i)?;
        let gamma_c = gamma_c(a_r, grid.br, grid.cr, c_i)?;
        let pm = probe_moments(&constrained_probe(a_r, grid.br, grid.cr, c_i)?)?;
        Ok(ScanRow {
            a_r,
            c_i,
            valid: true,
            gamma,
            gamma_c,
            alpha: pm.alpha,
            beta: pm.beta,
            violates_generalized: gamma_c <= gamma,
            violates_original: gamma_c < 1.0,
            boundary: (gamma_c - gamma).abs() <= BOUNDARY_REL_TOL * gamma,
        })
    })();
    evaluated.unwrap_or(invalid)
}

/// Evaluates `Γ` and `Γ_C` over the grid, `A_R` outer and `C_I` inner.
///
/// Points run in parallel on the current rayon pool; the output order is
/// the grid order whatever the pool size.
pub fn violation_scan(grid: &ScanGrid) -> Result<Vec<ScanRow>> {
    grid.validate()?;
    let n_ci = grid.ci.steps;
    Ok((0..grid.len())
        .into_par_iter()
        .map(|idx| scan_point(grid, grid.ar.value(idx / n_ci), grid.ci.value(idx % n_ci)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanSummary {
    pub points: usize,
    pub valid: usize,
    pub violations: usize,
    pub boundary: usize,
    pub original_violations: usize,
    /// NaN when no point is valid.
    pub min_gamma_c: f64,
    pub negative_alpha: usize,
    pub negative_beta: usize,
}

pub fn summarize(rows: &[ScanRow]) -> ScanSummary {
    let valid: Vec<&ScanRow> = rows.iter().filter(|r| r.valid).collect();
    ScanSummary {
        points: rows.len(),
        valid: valid.len(),
        violations: valid.iter().filter(|r| r.violates_generalized).count(),
        boundary: valid.iter().filter(|r| r.boundary).count(),
        original_violations: valid.iter().filter(|r| r.violates_original).count(),
        min_gamma_c: valid.iter().map(|r| r.gamma_c).reduce(f64::min).unwrap_or(f64::NAN),
        negative_alpha: valid.iter().filter(|r| r.alpha < 0.0).count(),
        negative_beta: valid.iter().filter(|r| r.beta < 0.0).count(),
    }
}
