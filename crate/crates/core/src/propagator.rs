//! Closed-form Feynman kernel of the measurement Hamiltonian.
//!
//! The action is quadratic, so `K[Q : q : t] = F(t) exp(i S_cl)` with the
//! classical action `S_cl` written in `z1 = Q1 - q1`, `z2 = Q2 - q2`,
//! `z± = Q3 ± q3`, and the endpoint-independent prefactor `F(t)`. Both use
//! `a(t) = 12 m3 + m1 κ² t²` and `b = m2 m3 κ² - 1`.

use nalgebra::{Matrix3, Matrix4x6, Matrix6, SMatrix, Vector3};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::dynamics::HamiltonianParams;
use crate::error::{invalid, AkError, Result};
use crate::gaussian::{gaussian_moments, GaussianProbeParams, GaussianSystemParams, PhaseSpaceMoments, C64};

/// Configurations with `|b|` below this are rejected as singular.
pub const B_SINGULAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEndpoints {
    /// Initial positions `q`.
    pub start: Vector3<f64>,
    /// Final positions `Q`.
    pub end: Vector3<f64>,
    pub t: f64,
}

impl KernelEndpoints {
    pub fn new(start: Vector3<f64>, end: Vector3<f64>, t: f64) -> Self {
        Self { start, end, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelEvaluation {
    pub action: f64,
    pub prefactor: Complex64,
    pub kernel: Complex64,
}

fn check_regular(h: &HamiltonianParams, t: f64) -> Result<()> {
    h.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(AkError::SingularTime(format!("kernel needs t > 0, got {t}")));
    }
    let b = h.b();
    if b.abs() < B_SINGULAR_TOL {
        return Err(AkError::SingularTime(format!(
            "b = m2 m3 κ² - 1 = {b:e} vanishes (κ = {})",
            h.kappa
        )));
    }
    let denom = h.a(t) * b * t;
    if denom == 0.0 || !denom.is_finite() {
        return Err(AkError::SingularTime(format!("a(t) b t = {denom:e}")));
    }
    Ok(())
}

/// Coefficients of `S_cl = zᵀ W z / (2 a b t)` in the basis `(z1, z2, z+, z-)`.
fn z_form(h: &HamiltonianParams, t: f64) -> nalgebra::Matrix4<f64> {
    let (m1, m2, m3, k) = (h.m1, h.m2, h.m3, h.kappa);
    let (a, b) = (h.a(t), h.b());
    let mut w = nalgebra::Matrix4::zeros();
    w[(0, 0)] = 12.0 * m1 * m3 * b;
    w[(1, 1)] = -m2 * a;
    w[(2, 2)] = 3.0 * m1 * m3 * k * k * t * t * b;
    w[(3, 3)] = -m3 * a;
    w[(0, 2)] = -6.0 * m1 * m3 * k * t * b;
    w[(2, 0)] = w[(0, 2)];
    w[(1, 3)] = m2 * m3 * k * a;
    w[(3, 1)] = w[(1, 3)];
    w
}

/// Classical action along the trajectory from `q` at time 0 to `Q` at `t`.
pub fn classical_action(h: &HamiltonianParams, e: &KernelEndpoints) -> Result<f64> {
    check_regular(h, e.t)?;
    let (m1, m2, m3, k, t) = (h.m1, h.m2, h.m3, h.kappa, e.t);
    let (a, b) = (h.a(t), h.b());
    let z1 = e.end[0] - e.start[0];
    let z2 = e.end[1] - e.start[1];
    let zp = e.end[2] + e.start[2];
    let zm = e.end[2] - e.start[2];
    let bracket = 12.0 * m1 * m3 * b * z1 * z1 - m2 * a * z2 * z2 - m3 * a * zm * zm
        + 3.0 * m1 * m3 * k * k * t * t * b * zp * zp
        - 12.0 * m1 * m3 * k * t * b * z1 * zp
        + 2.0 * m2 * m3 * k * a * z2 * zm;
    Ok(bracket / (2.0 * a * b * t))
}

/// Hessian `H` of the action in `v = (Q1, Q2, Q3, q1, q2, q3)`: `S_cl = ½ vᵀ H v`.
pub fn action_hessian(h: &HamiltonianParams, t: f64) -> Result<Matrix6<f64>> {
    check_regular(h, t)?;
    #[rustfmt::skip]
    let l = Matrix4x6::new(
        1.0, 0.0, 0.0, -1.0,  0.0,  0.0,
        0.0, 1.0, 0.0,  0.0, -1.0,  0.0,
        0.0, 0.0, 1.0,  0.0,  0.0,  1.0,
        0.0, 0.0, 1.0,  0.0,  0.0, -1.0,
    );
    let w = z_form(h, t);
    Ok(l.transpose() * w * l / (h.a(t) * h.b() * t))
}

/// Prefactor `F(t) = sqrt(3 m1 m2 m3² / (2π³ i b t³ a(t)))`, principal branch.
pub fn prefactor(h: &HamiltonianParams, t: f64) -> Result<Complex64> {
    check_regular(h, t)?;
    let num = 3.0 * h.m1 * h.m2 * h.m3 * h.m3;
    let den = Complex64::new(0.0, 2.0 * PI.powi(3) * h.b() * t.powi(3) * h.a(t));
    Ok((Complex64::new(num, 0.0) / den).sqrt())
}

/// Right-hand side of the composition identity for the prefactor:
/// `π^{3/2} F(t1) F(t - t1) sqrt(2 i b t1³ (t-t1)³ a(t1) a(t-t1) / (3 m1 m2 m3² t³ a(t)))`.
/// Equal to `F(t)` up to a sign fixed by the square-root branches.
pub fn prefactor_via_composition(h: &HamiltonianParams, t1: f64, t: f64) -> Result<Complex64> {
    let t2 = t - t1;
    let f1 = prefactor(h, t1)?;
    let f2 = prefactor(h, t2)?;
    check_regular(h, t)?;
    let num = Complex64::new(0.0, 2.0 * h.b() * t1.powi(3) * t2.powi(3) * h.a(t1) * h.a(t2));
    let den = 3.0 * h.m1 * h.m2 * h.m3 * h.m3 * t.powi(3) * h.a(t);
    Ok(PI.powf(1.5) * f1 * f2 * (num / den).sqrt())
}

pub fn kernel(h: &HamiltonianParams, e: &KernelEndpoints) -> Result<KernelEvaluation> {
    let action = classical_action(h, e)?;
    let prefactor = prefactor(h, e.t)?;
    Ok(KernelEvaluation {
        action,
        prefactor,
        kernel: prefactor * Complex64::new(0.0, action).exp(),
    })
}

/// Free-particle action `(m1 z1² + m2 z2² + m3 z-²) / (2t)`.
pub fn free_action(h: &HamiltonianParams, e: &KernelEndpoints) -> f64 {
    let z = e.end - e.start;
    (h.m1 * z[0] * z[0] + h.m2 * z[1] * z[1] + h.m3 * z[2] * z[2]) / (2.0 * e.t)
}

/// Free-particle prefactor `Π_j sqrt(m_j / (2π i t))`.
pub fn free_prefactor(h: &HamiltonianParams, t: f64) -> Complex64 {
    [h.m1, h.m2, h.m3]
        .iter()
        .map(|&m| (Complex64::new(m, 0.0) / Complex64::new(0.0, 2.0 * PI * t)).sqrt())
        .product()
}

/// `∫ d³x K[Q : x : t1] K[x : q : t - t1]` evaluated as a Gaussian integral.
///
/// With `S1 + S2 = const + Jᵀx + ½ xᵀ G x`, the integral is
/// `F(t1) F(t-t1) (2π)^{3/2} Π_k (-i g_k)^{-1/2} exp(i (const - ½ Jᵀ G⁻¹ J))`,
/// `g_k` the eigenvalues of `G` and each root on the principal branch.
pub fn composed_kernel(
    h: &HamiltonianParams,
    end: &Vector3<f64>,
    start: &Vector3<f64>,
    t1: f64,
    t: f64,
) -> Result<Complex64> {
    let t2 = t - t1;
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(invalid(format!(
            "split time must satisfy 0 < t1 < t, got t1 = {t1}, t = {t}"
        )));
    }
    // first leg: x -> Q over t1; second leg: q -> x over t2
    let h1 = action_hessian(h, t1)?;
    let h2 = action_hessian(h, t2)?;
    let h1_ff = h1.fixed_view::<3, 3>(0, 0);
    let h1_fi = h1.fixed_view::<3, 3>(0, 3);
    let h1_ii = h1.fixed_view::<3, 3>(3, 3);
    let h2_ff = h2.fixed_view::<3, 3>(0, 0);
    let h2_fi = h2.fixed_view::<3, 3>(0, 3);
    let h2_ii = h2.fixed_view::<3, 3>(3, 3);

    let g: Matrix3<f64> = h1_ii + h2_ff;
    let j: Vector3<f64> = h1_fi.transpose() * end + h2_fi * start;
    let g_inv = g
        .try_inverse()
        .ok_or_else(|| AkError::SingularQuadraticForm("intermediate-point Hessian is singular".into()))?;
    let constant = 0.5 * end.dot(&(h1_ff * end)) + 0.5 * start.dot(&(h2_ii * start));
    let phase = constant - 0.5 * j.dot(&(g_inv * j));

    let eig = g.symmetric_eigenvalues();
    let gauss: Complex64 = eig
        .iter()
        .map(|&gk| Complex64::new(0.0, -gk).sqrt().inv())
        .product::<Complex64>()
        * (2.0 * PI).powf(1.5);

    Ok(prefactor(h, t1)? * prefactor(h, t2)? * gauss * Complex64::new(0.0, phase).exp())
}

/// Evolves `ψ(q1, q2) φ(q3)` through the kernel for time `t` and returns the
/// moments of the resulting three-mode Gaussian.
///
/// Writing the initial state as `exp(-½ qᵀ M₀ q + d₀ᵀ q)` and the action as
/// `½ xᵀ A x + xᵀ B q + ½ qᵀ C q`, the `q` integral completes the square
/// with `P = M₀ - iC`, leaving `exp(-½ xᵀ M' x + d'ᵀ x)` where
/// `M' = -iA + B P⁻¹ Bᵀ` and `d' = i B P⁻¹ d₀`.
pub fn kernel_evolve_gaussian(
    h: &HamiltonianParams,
    probe: &GaussianProbeParams,
    system: &GaussianSystemParams,
    t: f64,
) -> Result<PhaseSpaceMoments> {
    probe.validate()?;
    system.validate()?;
    let hess = action_hessian(h, t)?;
    let to_c = |m: SMatrix<f64, 3, 3>| m.map(|v| C64::new(v, 0.0));
    let a = to_c(hess.fixed_view::<3, 3>(0, 0).into_owned());
    let b = to_c(hess.fixed_view::<3, 3>(0, 3).into_owned());
    let c = to_c(hess.fixed_view::<3, 3>(3, 3).into_owned());

    let mp = probe.quadratic_matrix();
    let zero = C64::new(0.0, 0.0);
    #[rustfmt::skip]
    let m0 = Matrix3::new(
        mp[(0, 0)], mp[(0, 1)], zero,
        mp[(1, 0)], mp[(1, 1)], zero,
        zero,       zero,       system.a3,
    );
    let d0 = Vector3::new(probe.d1, probe.d2, system.d3);

    let i = C64::new(0.0, 1.0);
    let p = m0 - c * i;
    let p_inv = p
        .try_inverse()
        .ok_or_else(|| AkError::SingularQuadraticForm("initial-coordinate quadratic form is singular".into()))?;
    let m_out = -a * i + b * p_inv * b.transpose();
    let m_out = (m_out + m_out.transpose()).scale(0.5);
    let d_out = b * p_inv * d0 * i;

    let mm = gaussian_moments(&m_out, &d_out)
        .map_err(|_| AkError::SingularQuadraticForm("evolved wavefunction is not normalizable".into()))?;
    let mut mean = nalgebra::Vector6::zeros();
    let mut cov = Matrix6::zeros();
    mean.fixed_rows_mut::<3>(0).copy_from(&mm.mean_x);
    mean.fixed_rows_mut::<3>(3).copy_from(&mm.mean_p);
    cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&mm.cov_xx);
    cov.fixed_view_mut::<3, 3>(0, 3).copy_from(&mm.cov_xp);
    cov.fixed_view_mut::<3, 3>(3, 0).copy_from(&mm.cov_xp.transpose());
    cov.fixed_view_mut::<3, 3>(3, 3).copy_from(&mm.cov_pp);
    PhaseSpaceMoments::new(mean, cov)
}

fn large_coupling_a(h: &HamiltonianParams) -> f64 {
    h.m1 + 12.0 * h.m3
}

/// Linear map `(q1, q2, q3) → (X, Y, Z)` of the large-coupling delta-function
/// arguments, with `a = m1 + 12 m3`.
pub fn jacobian_forward(h: &HamiltonianParams) -> Result<Matrix3<f64>> {
    h.validate()?;
    if h.kappa <= 0.0 {
        return Err(invalid("Jacobian map needs κ > 0"));
    }
    let a = large_coupling_a(h);
    let (m1, m3, k) = (h.m1, h.m3, h.kappa);
    #[rustfmt::skip]
    let m = Matrix3::new(
        1.0,                     0.0,            0.5,
        0.0,                     1.0 / (m3 * k), -1.0,
        6.0 * m1 * m3 * k / a,   -1.0,           3.0 * m1 * m3 * k / a,
    );
    Ok(m)
}

/// Closed-form inverse `(X, Y, Z) → (q1, q2, q3)`.
pub fn jacobian_inverse(h: &HamiltonianParams) -> Result<Matrix3<f64>> {
    h.validate()?;
    if h.kappa <= 0.0 {
        return Err(invalid("Jacobian map needs κ > 0"));
    }
    let a = large_coupling_a(h);
    let (m1, m3, k) = (h.m1, h.m3, h.kappa);
    #[rustfmt::skip]
    let m = Matrix3::new(
        1.0 - 3.0 * m1 / a,      0.5,  1.0 / (2.0 * m3 * k),
        6.0 * m1 * m3 * k / a,   0.0,  -1.0,
        6.0 * m1 / a,            -1.0, -1.0 / (m3 * k),
    );
    Ok(m)
}

/// `|det|` of [`jacobian_forward`]; equal to 1 for every valid `h`.
pub fn jacobian_unit_check(h: &HamiltonianParams) -> Result<f64> {
    Ok(jacobian_forward(h)?.determinant().abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{drift_matrix, propagate_moments, symplectic_map};
    use crate::gaussian::{assemble_initial_state, P1, X1, X2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec<R: Rng>(rng: &mut R) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        )
    }

    /// Action from the Hamilton flow: shoot on the initial momenta, then
    /// integrate the Lagrangian along the trajectory with Gauss-Legendre.
    fn shooting_action(h: &HamiltonianParams, e: &KernelEndpoints) -> f64 {
        let s = symplectic_map(h, e.t).unwrap().matrix;
        let s_xx = s.fixed_view::<3, 3>(0, 0);
        let s_xp = s.fixed_view::<3, 3>(0, 3).into_owned();
        let p0 = s_xp.try_inverse().unwrap() * (e.end - s_xx * e.start);
        let r0 = nalgebra::Vector6::new(e.start[0], e.start[1], e.start[2], p0[0], p0[1], p0[2]);
        let k = drift_matrix(h);
        let b = h.b();
        // 10-point Gauss-Legendre is exact for the degree-6 integrand
        let nodes = [
            (0.148_874_338_981_631_2, 0.295_524_224_714_752_9),
            (0.433_395_394_129_247_2, 0.269_266_719_309_996_4),
            (0.679_409_568_299_024_4, 0.219_086_362_515_982),
            (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
            (0.973_906_528_517_171_7, 0.066_671_344_308_688_1),
        ];
        let lagrangian = |tau: f64| {
            let r = symplectic_map(h, tau).unwrap().matrix * r0;
            let v = k * r;
            0.5 * h.m1 * (v[0] - h.kappa * r[2]).powi(2)
                - (h.m2 * v[1] * v[1] + h.m3 * v[2] * v[2] - 2.0 * h.kappa * h.m2 * h.m3 * v[1] * v[2]) / (2.0 * b)
        };
        let half = 0.5 * e.t;
        nodes
            .iter()
            .map(|&(x, w)| w * (lagrangian(half * (1.0 - x)) + lagrangian(half * (1.0 + x))))
            .sum::<f64>()
            * half
    }

    #[test]
    fn action_matches_shooting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = HamiltonianParams::unit_masses(2.0).unwrap();
        for _ in 0..20 {
            let e = KernelEndpoints::new(rand_vec(&mut rng), rand_vec(&mut rng), 0.5);
            let s = classical_action(&h, &e).unwrap();
            let oracle = shooting_action(&h, &e);
            assert!((s - oracle).abs() <= 1e-6 * s.abs().max(1.0), "{s} vs {oracle}");
        }
        let h = HamiltonianParams::new(2.0, 3.0, 5.0, 1.3).unwrap();
        for _ in 0..20 {
            let e = KernelEndpoints::new(rand_vec(&mut rng), rand_vec(&mut rng), 0.7);
            let s = classical_action(&h, &e).unwrap();
            assert!((s - shooting_action(&h, &e)).abs() <= 1e-6 * s.abs().max(1.0));
        }
    }

    #[test]
    fn action_reduces_to_free_particles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = HamiltonianParams::new(1.5, 0.5, 2.5, 1e-8).unwrap();
        for _ in 0..20 {
            let e = KernelEndpoints::new(rand_vec(&mut rng), rand_vec(&mut rng), rng.gen_range(0.1..2.0));
            let s = classical_action(&h, &e).unwrap();
            let free = free_action(&h, &e);
            assert!((s - free).abs() <= 1e-6 * free, "{s} vs {free}");
        }
    }

    #[test]
    fn action_vanishes_for_fixed_endpoints_at_origin_of_mode_three() {
        let h = HamiltonianParams::unit_masses(2.0).unwrap();
        let q = Vector3::new(0.4, -1.2, 0.0);
        assert_eq!(classical_action(&h, &KernelEndpoints::new(q, q, 0.8)).unwrap(), 0.0);
    }

    #[test]
    fn hessian_reproduces_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = HamiltonianParams::new(0.9, 1.4, 0.6, 2.2).unwrap();
        let hess = action_hessian(&h, 0.65).unwrap();
        for _ in 0..10 {
            let e = KernelEndpoints::new(rand_vec(&mut rng), rand_vec(&mut rng), 0.65);
            let v = nalgebra::Vector6::new(e.end[0], e.end[1], e.end[2], e.start[0], e.start[1], e.start[2]);
            let s = classical_action(&h, &e).unwrap();
            assert!((0.5 * v.dot(&(hess * v)) - s).abs() < 1e-12 * s.abs().max(1.0));
        }
    }

    #[test]
    fn action_depends_on_modes_one_and_two_through_displacements() {
        let h = HamiltonianParams::new(1.1, 0.8, 1.9, 1.6).unwrap();
        let e = KernelEndpoints::new(Vector3::new(0.3, -0.7, 0.5), Vector3::new(1.2, 0.4, -0.9), 0.9);
        let shift = Vector3::new(2.5, -1.5, 0.0);
        let moved = KernelEndpoints::new(e.start + shift, e.end + shift, e.t);
        let (s0, s1) = (classical_action(&h, &e).unwrap(), classical_action(&h, &moved).unwrap());
        assert!((s0 - s1).abs() < 1e-12);
    }

    #[test]
    fn action_hessian_is_constant() {
        // finite-difference second derivatives do not depend on the base point
        let h = HamiltonianParams::unit_masses(1.7).unwrap();
        let t = 0.8;
        let s = |v: &nalgebra::Vector6<f64>| {
            classical_action(
                &h,
                &KernelEndpoints::new(Vector3::new(v[3], v[4], v[5]), Vector3::new(v[0], v[1], v[2]), t),
            )
            .unwrap()
        };
        let fd = |base: nalgebra::Vector6<f64>| {
            let step = 1e-2;
            Matrix6::from_fn(|i, j| {
                let mut e_i = nalgebra::Vector6::zeros();
                let mut e_j = nalgebra::Vector6::zeros();
                e_i[i] = step;
                e_j[j] = step;
                (s(&(base + e_i + e_j)) - s(&(base + e_i)) - s(&(base + e_j)) + s(&base)) / (step * step)
            })
        };
        let h0 = fd(nalgebra::Vector6::zeros());
        let h1 = fd(nalgebra::Vector6::new(1.0, -2.0, 0.5, 0.3, 1.7, -1.1));
        assert!((h0 - h1).amax() < 1e-6 * h0.amax());
        assert!((h0 - action_hessian(&h, t).unwrap()).amax() < 1e-6 * h0.amax());
    }

    #[test]
    fn prefactor_free_limit() {
        for (m1, m2, m3, t) in [(1.0, 1.0, 1.0, 1.0), (2.0, 3.0, 5.0, 0.4)] {
            let h = HamiltonianParams::new(m1, m2, m3, 0.0).unwrap();
            let f = prefactor(&h, t).unwrap();
            let expected = Complex64::new(0.0, m1 * m2 * m3 / (8.0 * PI.powi(3) * t.powi(3))).sqrt();
            assert!((f - expected).norm() < 1e-14 * expected.norm());
            // the product of three free roots lands on the opposite branch
            assert!((f + free_prefactor(&h, t)).norm() < 1e-14 * expected.norm());
        }
    }

    #[test]
    fn prefactor_is_regular_and_composes_up_to_sign() {
        let h = HamiltonianParams::unit_masses(1.0);
        // b = 0 at κ = 1 for unit masses
        assert!(matches!(prefactor(&h.unwrap(), 1.0), Err(AkError::SingularTime(_))));
        let h = HamiltonianParams::new(1.0, 1.0, 1.0, 1.5).unwrap();
        let f = prefactor(&h, 1.0).unwrap();
        assert!(f.norm().is_finite() && f.norm() > 0.0);

        let h = HamiltonianParams::unit_masses(2.0).unwrap();
        let f = prefactor(&h, 1.0).unwrap();
        let g = prefactor_via_composition(&h, 0.3, 1.0).unwrap();
        let err = (f - g).norm().min((f + g).norm());
        assert!(err < 1e-12 * f.norm(), "{f} vs {g}");
    }

    #[test]
    fn kernel_modulus_is_endpoint_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = HamiltonianParams::new(1.2, 0.7, 1.6, 2.4).unwrap();
        let f = prefactor(&h, 0.9).unwrap().norm();
        for _ in 0..10 {
            let k = kernel(&h, &KernelEndpoints::new(rand_vec(&mut rng), rand_vec(&mut rng), 0.9)).unwrap();
            assert!((k.kernel.norm() - f).abs() < 1e-14 * f);
            assert_eq!(k.kernel, k.prefactor * Complex64::new(0.0, k.action).exp());
        }
    }

    #[test]
    fn free_kernel_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = HamiltonianParams::new(0.8, 1.3, 2.1, 0.0).unwrap();
        for _ in 0..10 {
            let e = KernelEndpoints::new(rand_vec(&mut rng), rand_vec(&mut rng), rng.gen_range(0.2..2.0));
            let k = kernel(&h, &e).unwrap().kernel;
            let product: Complex64 = (0..3)
                .map(|j| {
                    let m = [h.m1, h.m2, h.m3][j];
                    let z = e.end[j] - e.start[j];
                    (Complex64::new(m, 0.0) / Complex64::new(0.0, 2.0 * PI * e.t)).sqrt()
                        * Complex64::new(0.0, m * z * z / (2.0 * e.t)).exp()
                })
                .product();
            let err = (k - product).norm().min((k + product).norm());
            assert!(err < 1e-12 * k.norm());
        }
    }

    #[test]
    fn kernels_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (h, t, t1) in [
            (HamiltonianParams::unit_masses(2.0).unwrap(), 1.0, 0.3),
            (HamiltonianParams::new(2.0, 3.0, 5.0, 0.4).unwrap(), 1.3, 0.9),
        ] {
            for _ in 0..20 {
                let (q, big_q) = (rand_vec(&mut rng), rand_vec(&mut rng));
                let direct = kernel(&h, &KernelEndpoints::new(q, big_q, t)).unwrap().kernel;
                let composed = composed_kernel(&h, &big_q, &q, t1, t).unwrap();
                let err = (direct - composed).norm().min((direct + composed).norm());
                assert!(err < 1e-8 * direct.norm(), "{direct} vs {composed}");
            }
        }
    }

    #[test]
    fn free_gaussian_spreading() {
        let h = HamiltonianParams::unit_masses(0.0).unwrap();
        let s = kernel_evolve_gaussian(
            &h,
            &GaussianProbeParams::minimal(),
            &GaussianSystemParams::minimal(),
            1.0,
        )
        .unwrap();
        for j in 0..3 {
            assert!((s.variance(j) - 1.0).abs() < 1e-12);
            assert!((s.variance(j + 3) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_evolution_matches_symplectic_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let h = HamiltonianParams::new(
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.0..3.0),
            )
            .unwrap();
            if h.b().abs() < 0.05 {
                continue;
            }
            let probe = crate::gaussian::sample_probe(&mut rng);
            let system = crate::gaussian::sample_system(&mut rng);
            let t = rng.gen_range(0.2..2.0);
            let via_kernel = kernel_evolve_gaussian(&h, &probe, &system, t).unwrap();
            let init = assemble_initial_state(&probe, &system).unwrap();
            let via_flow = propagate_moments(&init, &symplectic_map(&h, t).unwrap()).unwrap();
            assert!(
                (via_kernel.cov - via_flow.cov).amax() < 1e-8,
                "{}",
                (via_kernel.cov - via_flow.cov).amax()
            );
            assert!((via_kernel.mean - via_flow.mean).amax() < 1e-8);
        }
    }

    #[test]
    fn kernel_evolution_at_large_coupling() {
        let h = HamiltonianParams::unit_masses(1e3).unwrap();
        let s = kernel_evolve_gaussian(
            &h,
            &GaussianProbeParams::minimal(),
            &GaussianSystemParams::minimal(),
            1e-3,
        )
        .unwrap();
        let product = s.variance(X1) * s.variance(X2);
        assert!((product - (9.0f64 / 8.0).powi(2)).abs() < 1e-2, "{product}");
        assert!((s.variance(P1) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn unit_jacobian() {
        for (m, k) in [((1.0, 1.0, 1.0), 1e3), ((2.0, 3.0, 5.0), 1e4), ((0.3, 7.0, 0.9), 2.0)] {
            let h = HamiltonianParams::new(m.0, m.1, m.2, k).unwrap();
            assert!((jacobian_unit_check(&h).unwrap() - 1.0).abs() < 1e-10);
            let id = jacobian_inverse(&h).unwrap() * jacobian_forward(&h).unwrap();
            assert!((id - Matrix3::identity()).amax() < 1e-10);
        }
        assert!(jacobian_unit_check(&HamiltonianParams::unit_masses(0.0).unwrap()).is_err());
    }

    #[test]
    fn singular_configurations_are_rejected() {
        let h = HamiltonianParams::new(1.0, 4.0, 1.0, 0.5).unwrap(); // b = 0
        let e = KernelEndpoints::new(Vector3::zeros(), Vector3::zeros(), 1.0);
        assert!(matches!(classical_action(&h, &e), Err(AkError::SingularTime(_))));
        let h = HamiltonianParams::unit_masses(2.0).unwrap();
        let e = KernelEndpoints::new(Vector3::zeros(), Vector3::zeros(), 0.0);
        assert!(matches!(kernel(&h, &e), Err(AkError::SingularTime(_))));
    }

    #[test]
    fn p1_row_is_untouched_by_kernel_evolution() {
        let h = HamiltonianParams::new(1.0, 2.0, 0.5, 1.7).unwrap();
        let probe = GaussianProbeParams::centered(C64::new(1.3, 0.2), C64::new(0.9, -0.4), C64::new(0.3, 0.6)).unwrap();
        let init = assemble_initial_state(&probe, &GaussianSystemParams::minimal()).unwrap();
        let out = kernel_evolve_gaussian(&h, &probe, &GaussianSystemParams::minimal(), 0.6).unwrap();
        assert!((out.variance(P1) - init.variance(P1)).abs() < 1e-10);
    }
}
