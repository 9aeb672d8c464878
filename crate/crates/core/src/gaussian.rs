//! Gaussian probe and system states and their phase-space moments.
//!
//! A pure Gaussian wavefunction on `n` modes is written
//! `ψ(x) ∝ exp(-½ xᵀ M x + dᵀ x)` with `M` complex symmetric and `Re M`
//! positive definite. Its moments follow from `Re M`, `Im M` and `d` in
//! closed form (see [`gaussian_moments`]). The two-mode probe uses
//! `M = [[A, -C], [-C, B]]`, `d = (D1, D2)`; the system mode uses
//! `M = A3`, `d = D3`.
//!
//! Cross position/momentum entries are symmetrized,
//! `⟨{x_i, p_j}⟩/2 - ⟨x_i⟩⟨p_j⟩`, which keeps every covariance real.

use nalgebra::{Matrix2, Matrix6, SMatrix, SVector, Vector2, Vector6};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, AkError, Result};
use crate::quadrature::{integrate_2d, QuadratureOptions};

pub type C64 = Complex64;

/// Phase-space indices in the fixed ordering `(x1, x2, x3, p1, p2, p3)`.
pub const X1: usize = 0;
pub const X2: usize = 1;
pub const X3: usize = 2;
pub const P1: usize = 3;
pub const P2: usize = 4;
pub const P3: usize = 5;

/// Eigenvalue slack allowed when testing `cov + iΩ/2 ⪰ 0`.
pub const PHYSICALITY_TOL: f64 = 1e-10;

/// Two-mode probe `ψ(x1, x2) = N exp(-A x1²/2 - B x2²/2 + C x1 x2 + D1 x1 + D2 x2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianProbeParams {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d1: C64,
    pub d2: C64,
}

impl GaussianProbeParams {
    pub fn new(a: C64, b: C64, c: C64, d1: C64, d2: C64) -> Result<Self> {
        let p = Self { a, b, c, d1, d2 };
        p.validate()?;
        Ok(p)
    }

    /// Product of two minimal-uncertainty ground states (A = B = 1).
    pub fn minimal() -> Self {
        Self {
            a: C64::new(1.0, 0.0),
            b: C64::new(1.0, 0.0),
            c: C64::new(0.0, 0.0),
            d1: C64::new(0.0, 0.0),
            d2: C64::new(0.0, 0.0),
        }
    }

    /// Centred probe with the given quadratic coefficients.
    pub fn centered(a: C64, b: C64, c: C64) -> Result<Self> {
        Self::new(a, b, c, C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.c, self.d1, self.d2];
        if all.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("probe parameters must be finite"));
        }
        if self.a.re <= 0.0 || self.b.re <= 0.0 {
            return Err(invalid(format!(
                "probe needs Re(A) > 0 and Re(B) > 0, got {} and {}",
                self.a.re, self.b.re
            )));
        }
        if self.real_determinant() <= 0.0 {
            return Err(invalid(format!(
                "probe is not normalizable: Re(A)Re(B) - Re(C)^2 = {}",
                self.real_determinant()
            )));
        }
        Ok(())
    }

    /// `A_R B_R - C_R²`, positive for a normalizable probe.
    pub fn real_determinant(&self) -> f64 {
        self.a.re * self.b.re - self.c.re * self.c.re
    }

    pub fn quadratic_matrix(&self) -> Matrix2<C64> {
        Matrix2::new(self.a, -self.c, -self.c, self.b)
    }

    pub fn linear_vector(&self) -> Vector2<C64> {
        Vector2::new(self.d1, self.d2)
    }

    /// `ln |N|²` of the normalization constant.
    pub fn log_norm_sq(&self) -> f64 {
        let (ar, br, cr) = (self.a.re, self.b.re, self.c.re);
        let (d1, d2) = (self.d1.re, self.d2.re);
        let det = self.real_determinant();
        0.5 * det.ln() - std::f64::consts::PI.ln() - (ar * d2 * d2 + br * d1 * d1 + 2.0 * d1 * d2 * cr) / det
    }

    /// Normalized wavefunction value (phase convention: `N` real and positive).
    pub fn psi(&self, x1: f64, x2: f64) -> C64 {
        (self.exponent(x1, x2) + 0.5 * self.log_norm_sq()).exp()
    }

    fn exponent(&self, x1: f64, x2: f64) -> C64 {
        -0.5 * self.a * x1 * x1 - 0.5 * self.b * x2 * x2 + self.c * x1 * x2 + self.d1 * x1 + self.d2 * x2
    }

    /// `∇ψ / ψ`, the logarithmic derivative of the wavefunction.
    fn log_gradient(&self, x1: f64, x2: f64) -> (C64, C64) {
        (
            -self.a * x1 + self.c * x2 + self.d1,
            self.c * x1 - self.b * x2 + self.d2,
        )
    }
}

/// One-mode system state `φ(x3) ∝ exp(-A3 x3²/2 + D3 x3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianSystemParams {
    pub a3: C64,
    pub d3: C64,
}

impl GaussianSystemParams {
    pub fn new(a3: C64, d3: C64) -> Result<Self> {
        let p = Self { a3, d3 };
        p.validate()?;
        Ok(p)
    }

    /// `exp(-x3²/2) / π^{1/4}`.
    pub fn minimal() -> Self {
        Self {
            a3: C64::new(1.0, 0.0),
            d3: C64::new(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.a3, self.d3].iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(invalid("system parameters must be finite"));
        }
        if self.a3.re <= 0.0 {
            return Err(invalid(format!("system needs Re(A3) > 0, got {}", self.a3.re)));
        }
        Ok(())
    }
}

/// Closed-form variances and cross-correlations of the probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeMomentSummary {
    pub dx1sq: f64,
    pub dx2sq: f64,
    pub dp1sq: f64,
    pub dp2sq: f64,
    /// `⟨x1 p2⟩ - ⟨x1⟩⟨p2⟩`
    pub alpha: f64,
    /// `⟨x2 p1⟩ - ⟨x2⟩⟨p1⟩`
    pub beta: f64,
}

/// First and second moments of an `N`-mode Gaussian, split into blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMoments<const N: usize> {
    pub mean_x: SVector<f64, N>,
    pub mean_p: SVector<f64, N>,
    pub cov_xx: SMatrix<f64, N, N>,
    /// `cov_xp[(i, j)] = ⟨{x_i, p_j}⟩/2 - ⟨x_i⟩⟨p_j⟩`
    pub cov_xp: SMatrix<f64, N, N>,
    pub cov_pp: SMatrix<f64, N, N>,
}

/// Moments of the single system mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemMoments {
    pub dx3sq: f64,
    pub dp3sq: f64,
    pub mean_x3: f64,
    pub mean_p3: f64,
    pub cov_xp: f64,
}

/// Mean vector and covariance matrix of the three-mode state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpaceMoments {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
}

/// Moments of `ψ(x) ∝ exp(-½ xᵀ M x + dᵀ x)`.
///
/// With `M = M_R + i M_I`: position covariance `½ M_R⁻¹`, symmetrized
/// cross block `-½ M_R⁻¹ M_I`, momentum covariance
/// `½ (M_R + M_I M_R⁻¹ M_I)`, position mean `M_R⁻¹ d_R` and momentum mean
/// `d_I - M_I ⟨x⟩`.
pub fn gaussian_moments<const N: usize>(m: &SMatrix<C64, N, N>, d: &SVector<C64, N>) -> Result<ModeMoments<N>> {
    let m_re = m.map(|z| z.re);
    let m_im = m.map(|z| z.im);
    let m_re_inv = m_re
        .cholesky()
        .ok_or_else(|| invalid("real part of the quadratic form is not positive definite"))?
        .inverse();

    let cov_xx = 0.5 * m_re_inv;
    let cov_xp = -0.5 * m_re_inv * m_im;
    let cov_pp = 0.5 * (m_re + m_im * m_re_inv * m_im);
    let mean_x = m_re_inv * d.map(|z| z.re);
    let mean_p = d.map(|z| z.im) - m_im * mean_x;

    Ok(ModeMoments {
        mean_x,
        mean_p,
        cov_xx: symmetrize(&cov_xx),
        cov_xp,
        cov_pp: symmetrize(&cov_pp),
    })
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    0.5 * (m + m.transpose())
}

/// Variances and α, β of the probe in the closed form quoted for the
/// two-mode Gaussian family. They depend on `A`, `B`, `C` only.
pub fn probe_moments(params: &GaussianProbeParams) -> Result<ProbeMomentSummary> {
    params.validate()?;
    let (ar, ai) = (params.a.re, params.a.im);
    let (br, bi) = (params.b.re, params.b.im);
    let (cr, ci) = (params.c.re, params.c.im);
    let det = ar * br - cr * cr;
    Ok(ProbeMomentSummary {
        dx1sq: 0.5 * br / det,
        dx2sq: 0.5 * ar / det,
        dp1sq: 0.5 * ar + (ar * ci * ci + ai * ai * br - 2.0 * ai * cr * ci) / (2.0 * det),
        dp2sq: 0.5 * br + (ar * bi * bi + br * ci * ci - 2.0 * bi * cr * ci) / (2.0 * det),
        alpha: (br * ci - bi * cr) / (2.0 * det),
        beta: (ar * ci - ai * cr) / (2.0 * det),
    })
}

/// All first and second moments of the probe modes 1 and 2.
pub fn full_probe_moments(params: &GaussianProbeParams) -> Result<ModeMoments<2>> {
    params.validate()?;
    gaussian_moments(&params.quadratic_matrix(), &params.linear_vector())
}

pub fn system_moments(params: &GaussianSystemParams) -> Result<SystemMoments> {
    params.validate()?;
    let m = SMatrix::<C64, 1, 1>::new(params.a3);
    let d = SVector::<C64, 1>::new(params.d3);
    let mm = gaussian_moments(&m, &d)?;
    Ok(SystemMoments {
        dx3sq: mm.cov_xx[(0, 0)],
        dp3sq: mm.cov_pp[(0, 0)],
        mean_x3: mm.mean_x[0],
        mean_p3: mm.mean_p[0],
        cov_xp: mm.cov_xp[(0, 0)],
    })
}

/// Phase-space moments of the separable state `ψ(x1, x2) φ(x3)`.
pub fn assemble_initial_state(probe: &GaussianProbeParams, system: &GaussianSystemParams) -> Result<PhaseSpaceMoments> {
    let pm = full_probe_moments(probe)?;
    let sm = system_moments(system)?;

    let mut mean = Vector6::zeros();
    let mut cov = Matrix6::zeros();
    for i in 0..2 {
        mean[X1 + i] = pm.mean_x[i];
        mean[P1 + i] = pm.mean_p[i];
        for j in 0..2 {
            cov[(X1 + i, X1 + j)] = pm.cov_xx[(i, j)];
            cov[(P1 + i, P1 + j)] = pm.cov_pp[(i, j)];
            cov[(X1 + i, P1 + j)] = pm.cov_xp[(i, j)];
            cov[(P1 + j, X1 + i)] = pm.cov_xp[(i, j)];
        }
    }
    mean[X3] = sm.mean_x3;
    mean[P3] = sm.mean_p3;
    cov[(X3, X3)] = sm.dx3sq;
    cov[(P3, P3)] = sm.dp3sq;
    cov[(X3, P3)] = sm.cov_xp;
    cov[(P3, X3)] = sm.cov_xp;

    let state = PhaseSpaceMoments::new(mean, cov)?;
    if !state.is_physical(PHYSICALITY_TOL) {
        return Err(AkError::DegenerateState(format!(
            "assembled covariance violates cov + iΩ/2 ⪰ 0 (min eigenvalue {:e})",
            state.physicality_min_eigenvalue()
        )));
    }
    Ok(state)
}

/// Canonical symplectic form `[[0, I₃], [-I₃, 0]]`.
pub fn symplectic_form() -> Matrix6<f64> {
    let mut omega = Matrix6::zeros();
    for i in 0..3 {
        omega[(i, i + 3)] = 1.0;
        omega[(i + 3, i)] = -1.0;
    }
    omega
}

impl PhaseSpaceMoments {
    /// Checks symmetry and strictly positive diagonal entries.
    pub fn new(mean: Vector6<f64>, cov: Matrix6<f64>) -> Result<Self> {
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(AkError::DegenerateState("non-finite moment".into()));
        }
        let scale = cov.amax().max(1.0);
        let asym = (cov - cov.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(AkError::DegenerateState(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if let Some(i) = (0..6).find(|&i| cov[(i, i)] <= 0.0) {
            return Err(AkError::DegenerateState(format!(
                "variance of phase-space coordinate {i} is {}",
                cov[(i, i)]
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[(i, i)]
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.cov[(i, j)]
    }

    /// `⟨x1 p2⟩ - ⟨x1⟩⟨p2⟩`
    pub fn alpha(&self) -> f64 {
        self.cov[(X1, P2)]
    }

    /// `⟨x2 p1⟩ - ⟨x2⟩⟨p1⟩`
    pub fn beta(&self) -> f64 {
        self.cov[(X2, P1)]
    }

    /// `K_j = Δx_j² Δp_j²` for mode `j ∈ {1, 2, 3}`.
    pub fn uncertainty_product(&self, mode: usize) -> f64 {
        assert!((1..=3).contains(&mode), "mode index must be 1, 2 or 3");
        self.variance(mode - 1) * self.variance(mode + 2)
    }

    /// Smallest eigenvalue of the Hermitian matrix `cov + iΩ/2`.
    ///
    /// Computed through the real 12×12 embedding `[[X, -Y], [Y, X]]` of
    /// `X + iY`, which has the same spectrum with doubled multiplicity.
    pub fn physicality_min_eigenvalue(&self) -> f64 {
        let half_omega = 0.5 * symplectic_form();
        let mut big = SMatrix::<f64, 12, 12>::zeros();
        big.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.cov);
        big.fixed_view_mut::<6, 6>(6, 6).copy_from(&self.cov);
        big.fixed_view_mut::<6, 6>(0, 6).copy_from(&(-half_omega));
        big.fixed_view_mut::<6, 6>(6, 0).copy_from(&half_omega);
        big.symmetric_eigenvalues().min()
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.physicality_min_eigenvalue() >= -tol
    }
}

/// A phase-space quadrature of the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    X1,
    X2,
    P1,
    P2,
}

/// Which probe moment the quadrature oracle should compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentDescriptor {
    Mean(Quadrature),
    /// Symmetrized central second moment.
    Covariance(Quadrature, Quadrature),
}

/// Brute-force probe moments from 2D adaptive quadrature of the explicit
/// wavefunction.
///
/// Momentum enters through `∂ψ = (∇ ln ψ) ψ` under the integral:
/// `⟨p_j⟩ = Re ∫ ψ* (-i ∂_j ψ)`, `⟨{x_i, p_j}⟩/2 = Re ∫ ψ* x_i (-i ∂_j ψ)`
/// and `⟨p_i p_j⟩ = Re ∫ (∂_i ψ)* ∂_j ψ`.
#[derive(Debug, Clone)]
pub struct MomentOracle {
    params: GaussianProbeParams,
    opts: QuadratureOptions,
    x_range: (f64, f64),
    y_range: (f64, f64),
    norm: f64,
}

/// Half-width of the integration box in marginal standard deviations.
const ORACLE_BOX_SIGMAS: f64 = 12.0;

impl MomentOracle {
    pub fn new(params: &GaussianProbeParams) -> Result<Self> {
        Self::with_options(
            params,
            QuadratureOptions {
                abs_tol: 1e-12,
                rel_tol: 1e-12,
                max_subdivisions: 400,
            },
        )
    }

    pub fn with_options(params: &GaussianProbeParams, opts: QuadratureOptions) -> Result<Self> {
        params.validate()?;
        // |ψ|² ∝ exp(-(x-μ)ᵀ M_R (x-μ)): centre and marginal widths of the box.
        let (ar, br, cr) = (params.a.re, params.b.re, params.c.re);
        let det = ar * br - cr * cr;
        let mu1 = (br * params.d1.re + cr * params.d2.re) / det;
        let mu2 = (cr * params.d1.re + ar * params.d2.re) / det;
        let s1 = (0.5 * br / det).sqrt();
        let s2 = (0.5 * ar / det).sqrt();
        let mut oracle = Self {
            params: *params,
            opts,
            x_range: (mu1 - ORACLE_BOX_SIGMAS * s1, mu1 + ORACLE_BOX_SIGMAS * s1),
            y_range: (mu2 - ORACLE_BOX_SIGMAS * s2, mu2 + ORACLE_BOX_SIGMAS * s2),
            norm: 1.0,
        };
        oracle.norm = oracle.integrate(|_, _, _, _| 1.0)?;
        Ok(oracle)
    }

    /// `∫ |ψ|²` over the truncation box; close to 1 for the normalization `N`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Integrates `|ψ|² w(x1, x2, g1, g2)`, where `g = ∇ ln ψ`.
    fn integrate<W>(&self, w: W) -> Result<f64>
    where
        W: Fn(f64, f64, C64, C64) -> f64,
    {
        let p = &self.params;
        let r = integrate_2d(
            |x1, x2| {
                let density = p.psi(x1, x2).norm_sqr();
                if density == 0.0 {
                    return 0.0;
                }
                let (g1, g2) = p.log_gradient(x1, x2);
                density * w(x1, x2, g1, g2)
            },
            self.x_range,
            self.y_range,
            &self.opts,
        )?;
        Ok(r.value / self.norm)
    }

    fn local(q: Quadrature, x1: f64, x2: f64, g1: C64, g2: C64) -> C64 {
        // value of (O ψ)/ψ for each quadrature
        match q {
            Quadrature::X1 => C64::new(x1, 0.0),
            Quadrature::X2 => C64::new(x2, 0.0),
            Quadrature::P1 => C64::new(0.0, -1.0) * g1,
            Quadrature::P2 => C64::new(0.0, -1.0) * g2,
        }
    }

    fn mean(&self, q: Quadrature) -> Result<f64> {
        self.integrate(|x1, x2, g1, g2| Self::local(q, x1, x2, g1, g2).re)
    }

    pub fn moment(&self, which: MomentDescriptor) -> Result<f64> {
        match which {
            MomentDescriptor::Mean(q) => self.mean(q),
            MomentDescriptor::Covariance(a, b) => {
                let ma = self.mean(a)?;
                let mb = self.mean(b)?;
                let is_p = |q| matches!(q, Quadrature::P1 | Quadrature::P2);
                let raw = self.integrate(|x1, x2, g1, g2| {
                    let la = Self::local(a, x1, x2, g1, g2);
                    let lb = Self::local(b, x1, x2, g1, g2);
                    match (is_p(a), is_p(b)) {
                        // ⟨p_i p_j⟩ = ⟨p_i ψ | p_j ψ⟩
                        (true, true) => (la.conj() * lb).re,
                        // x is real and diagonal: ⟨{x, p}⟩/2 = Re ⟨ψ| x p |ψ⟩
                        _ => (la * lb).re,
                    }
                })?;
                Ok(raw - ma * mb)
            }
        }
    }
}

/// One-shot oracle evaluation with default accuracy settings.
pub fn moment_oracle(params: &GaussianProbeParams, which: MomentDescriptor) -> Result<f64> {
    MomentOracle::new(params)?.moment(which)
}

/// Random valid probe: `Re A, Re B ∈ [0.3, 3]`, `|Re C| < 0.9 √(Re A Re B)`,
/// imaginary parts of `A, B, C` in `[-1.5, 1.5]`, `D1, D2` in the unit square.
pub fn sample_probe<R: Rng + ?Sized>(rng: &mut R) -> GaussianProbeParams {
    let ar = rng.gen_range(0.3..3.0);
    let br = rng.gen_range(0.3..3.0);
    let cr = rng.gen_range(-0.9..0.9) * f64::sqrt(ar * br);
    let mut unit = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (d1, d2) = (unit(), unit());
    GaussianProbeParams {
        a: C64::new(ar, rng.gen_range(-1.5..1.5)),
        b: C64::new(br, rng.gen_range(-1.5..1.5)),
        c: C64::new(cr, rng.gen_range(-1.5..1.5)),
        d1,
        d2,
    }
}

/// Random valid system state: `Re A3 ∈ [0.3, 3]`, `Im A3 ∈ [-1.5, 1.5]`, `D3` in the unit square.
pub fn sample_system<R: Rng + ?Sized>(rng: &mut R) -> GaussianSystemParams {
    GaussianSystemParams {
        a3: C64::new(rng.gen_range(0.3..3.0), rng.gen_range(-1.5..1.5)),
        d3: C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn probe(a: C64, b: C64, cc: C64) -> GaussianProbeParams {
        GaussianProbeParams::centered(a, b, cc).unwrap()
    }

    #[test]
    fn decoupled_minimal_probe() {
        let m = probe_moments(&GaussianProbeParams::minimal()).unwrap();
        for v in [m.dx1sq, m.dx2sq, m.dp1sq, m.dp2sq] {
            assert_eq!(v, 0.5);
        }
        assert_eq!((m.alpha, m.beta), (0.0, 0.0));
    }

    #[test]
    fn squeezed_product_probe() {
        let m = probe_moments(&probe(c(2.0, 0.0), c(2.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(m.dx1sq, 0.25);
        assert_eq!(m.dp1sq, 1.0);
        assert_eq!((m.alpha, m.beta), (0.0, 0.0));
    }

    #[test]
    fn imaginary_coupling_gives_half_correlations() {
        let m = probe_moments(&probe(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0))).unwrap();
        assert_relative_eq!(m.alpha, 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.beta, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn constrained_family_products() {
        // A_I = C_R C_I / B_R, B_I = C_R C_I / A_R
        for &(ar, br, cr, ci) in &[(3.0, 1.0, 1.0, 1.0), (1.5, 0.7, 0.3, -2.0), (5.0, 1.0, 2.0, 4.0)] {
            let p = probe(c(ar, cr * ci / br), c(br, cr * ci / ar), c(cr, ci));
            let m = probe_moments(&p).unwrap();
            let expected = (ar * br + ci * ci) / (4.0 * (ar * br - cr * cr));
            assert_relative_eq!(m.dx1sq * m.dp1sq, expected, max_relative = 1e-13);
            assert_relative_eq!(m.dx2sq * m.dp2sq, expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn rejects_non_normalizable_probe() {
        let err = GaussianProbeParams::centered(c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, AkError::InvalidParameters(_)));
        let bad = GaussianProbeParams {
            c: c(2.0, 0.0),
            ..GaussianProbeParams::minimal()
        };
        assert!(probe_moments(&bad).is_err());
        assert!(full_probe_moments(&bad).is_err());
        assert!(GaussianProbeParams::centered(c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)).is_err());
        assert!(GaussianSystemParams::new(c(0.0, 1.0), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn full_moments_of_minimal_probe() {
        let m = full_probe_moments(&GaussianProbeParams::minimal()).unwrap();
        assert_eq!(m.cov_xx, Matrix2::identity() * 0.5);
        assert_eq!(m.cov_pp, Matrix2::identity() * 0.5);
        assert_eq!(m.cov_xp, Matrix2::zeros());
        assert_eq!(m.mean_x, Vector2::zeros());
        assert_eq!(m.mean_p, Vector2::zeros());
    }

    #[test]
    fn real_shift_moves_position_mean_only() {
        let p = GaussianProbeParams::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(3.0, 0.0), c(0.0, 0.0)).unwrap();
        let m = full_probe_moments(&p).unwrap();
        assert_eq!(m.mean_x[0], 3.0);
        assert_eq!(m.mean_p[0], 0.0);
    }

    #[test]
    fn full_moments_carry_alpha_beta() {
        let p = probe(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
        let full = full_probe_moments(&p).unwrap();
        let summary = probe_moments(&p).unwrap();
        assert_relative_eq!(full.cov_xp[(0, 1)], summary.alpha, epsilon = 1e-15);
        assert_relative_eq!(full.cov_xp[(1, 0)], summary.beta, epsilon = 1e-15);
        assert_relative_eq!(full.cov_xp[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn system_mode_moments() {
        let s = system_moments(&GaussianSystemParams::minimal()).unwrap();
        assert_eq!((s.dx3sq, s.dp3sq), (0.5, 0.5));
        let s = system_moments(&GaussianSystemParams::new(c(2.0, 0.0), c(0.0, 0.0)).unwrap()).unwrap();
        assert_relative_eq!(s.dx3sq, 0.25, epsilon = 1e-15);
        assert_relative_eq!(s.dp3sq, 1.0, epsilon = 1e-15);
        let s = system_moments(&GaussianSystemParams::new(c(1.0, 1.0), c(0.0, 0.0)).unwrap()).unwrap();
        assert_relative_eq!(s.dp3sq, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.cov_xp, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn chirped_system_matches_quadrature() {
        // one-mode oracle: embed the system mode as mode 1 of a product probe
        let p = probe(c(1.0, 1.0), c(1.0, 0.0), c(0.0, 0.0));
        let oracle = MomentOracle::new(&p).unwrap();
        let dp = oracle
            .moment(MomentDescriptor::Covariance(Quadrature::P1, Quadrature::P1))
            .unwrap();
        let xp = oracle
            .moment(MomentDescriptor::Covariance(Quadrature::X1, Quadrature::P1))
            .unwrap();
        assert!((dp - 1.0).abs() < 1e-8, "{dp}");
        assert!((xp + 0.5).abs() < 1e-8, "{xp}");
    }

    #[test]
    fn minimal_assembly_is_half_identity() {
        let s = assemble_initial_state(&GaussianProbeParams::minimal(), &GaussianSystemParams::minimal()).unwrap();
        assert_eq!(s.cov, Matrix6::identity() * 0.5);
        assert_eq!(s.mean, Vector6::zeros());
    }

    #[test]
    fn assembly_has_no_probe_system_correlations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = assemble_initial_state(&sample_probe(&mut rng), &sample_system(&mut rng)).unwrap();
            for probe_idx in [X1, X2, P1, P2] {
                for sys_idx in [X3, P3] {
                    assert_eq!(s.cov[(probe_idx, sys_idx)], 0.0);
                    assert_eq!(s.cov[(sys_idx, probe_idx)], 0.0);
                }
            }
        }
    }

    #[test]
    fn entangled_probe_is_physical_and_pure() {
        let s = assemble_initial_state(
            &probe(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)),
            &GaussianSystemParams::minimal(),
        )
        .unwrap();
        // a pure Gaussian saturates cov + iΩ/2 ⪰ 0: its smallest eigenvalue is 0
        let min = s.physicality_min_eigenvalue();
        assert!(min.abs() < 1e-12, "{min}");
    }

    #[test]
    fn normalization_constant_integrates_to_one() {
        let p = GaussianProbeParams::new(c(1.3, 0.4), c(0.8, -0.2), c(0.5, 0.7), c(0.6, -0.3), c(-0.9, 0.2)).unwrap();
        let oracle = MomentOracle::new(&p).unwrap();
        assert!((oracle.normalization() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oracle_trivial_moments() {
        let m = GaussianProbeParams::minimal();
        let v = moment_oracle(&m, MomentDescriptor::Covariance(Quadrature::X1, Quadrature::X1)).unwrap();
        assert!((v - 0.5).abs() < 1e-8);
        let sq = probe(c(2.0, 0.0), c(2.0, 0.0), c(0.0, 0.0));
        let v = moment_oracle(&sq, MomentDescriptor::Covariance(Quadrature::P1, Quadrature::P1)).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn oracle_alpha_matches_closed_form() {
        let p = probe(c(1.0, 0.0), c(1.0, 0.0), c(0.3, 0.4));
        let alpha = moment_oracle(&p, MomentDescriptor::Covariance(Quadrature::X1, Quadrature::P2)).unwrap();
        let beta = moment_oracle(&p, MomentDescriptor::Covariance(Quadrature::X2, Quadrature::P1)).unwrap();
        let closed = probe_moments(&p).unwrap();
        // (B_R C_I - B_I C_R) / (2 (A_R B_R - C_R²)) = 0.4 / 1.82
        assert!((closed.alpha - 0.4 / 1.82).abs() < 1e-15);
        assert!((alpha - closed.alpha).abs() < 1e-8, "{alpha}");
        assert!((beta - closed.beta).abs() < 1e-8, "{beta}");
    }

    #[test]
    fn symplectic_form_is_antisymmetric_involution() {
        let o = symplectic_form();
        assert_eq!(o.transpose(), -o);
        assert_eq!(o * o, -Matrix6::identity());
    }
}
