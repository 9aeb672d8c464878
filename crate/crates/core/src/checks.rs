//! Randomized self-checks of the kernel identities.
//!
//! Each check draws its trials from a ChaCha stream seeded by the caller, so
//! a given configuration always produces the same outcomes.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{propagate_moments, symplectic_map, HamiltonianParams};
use crate::error::{invalid, AkError, Result};
use crate::gaussian::{assemble_initial_state, sample_probe, sample_system};
use crate::propagator::{
    classical_action, composed_kernel, free_action, jacobian_forward, jacobian_inverse, jacobian_unit_check, kernel,
    kernel_evolve_gaussian, prefactor, prefactor_via_composition, KernelEndpoints, B_SINGULAR_TOL,
};

pub const FREE_LIMIT_KAPPA: f64 = 1e-8;
pub const FREE_ACTION_TOL: f64 = 1e-6;
pub const FREE_PREFACTOR_TOL: f64 = 1e-12;
pub const COMPOSITION_TOL: f64 = 1e-8;
pub const JACOBIAN_TOL: f64 = 1e-10;
pub const EQUIVALENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelCheckConfig {
    pub hamiltonian: HamiltonianParams,
    pub t: f64,
    pub split: f64,
    pub seed: u64,
    pub trials: usize,
}

impl KernelCheckConfig {
    pub fn validate(&self) -> Result<()> {
        self.hamiltonian.validate()?;
        if self.hamiltonian.b().abs() < B_SINGULAR_TOL {
            return Err(AkError::SingularTime(format!(
                "b = m2 m3 κ² - 1 = {:e} vanishes at κ = {}",
                self.hamiltonian.b(),
                self.hamiltonian.kappa
            )));
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(invalid(format!("time must be positive, got {}", self.t)));
        }
        if !(self.split > 0.0 && self.split < self.t) {
            return Err(invalid(format!(
                "split must satisfy 0 < t1 < t, got t1 = {}",
                self.split
            )));
        }
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub trials: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Trials where the two sides agreed only after flipping the overall sign.
    pub sign_flips: Option<usize>,
}

impl CheckOutcome {
    fn new(name: &'static str, errors: &[f64], tolerance: f64, sign_flips: Option<usize>) -> Self {
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        let all_finite = errors.iter().all(|e| e.is_finite());
        Self {
            name,
            trials: errors.len(),
            max_error,
            tolerance,
            passed: all_finite && max_error <= tolerance,
            sign_flips,
        }
    }
}

/// Relative distance between `a` and `b` up to an overall sign; the flag
/// tells whether the sign flip was the closer match.
fn up_to_sign(a: Complex64, b: Complex64) -> (f64, bool) {
    let scale = a.norm().max(b.norm());
    let (plus, minus) = ((a - b).norm() / scale, (a + b).norm() / scale);
    if minus < plus {
        (minus, true)
    } else {
        (plus, false)
    }
}

fn rand_point<R: Rng>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
    )
}

/// Random valid Hamiltonian with `|b|` kept away from zero.
fn rand_hamiltonian<R: Rng>(rng: &mut R, kappa_range: (f64, f64)) -> HamiltonianParams {
    loop {
        let h = HamiltonianParams {
            m1: rng.gen_range(0.5..2.0),
            m2: rng.gen_range(0.5..2.0),
            m3: rng.gen_range(0.5..2.0),
            kappa: rng.gen_range(kappa_range.0..kappa_range.1),
        };
        if h.b().abs() > 0.05 {
            return h;
        }
    }
}

pub fn check_free_limit_action(cfg: &KernelCheckConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let h = cfg.hamiltonian.with_kappa(FREE_LIMIT_KAPPA)?;
    let mut errors = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let e = KernelEndpoints::new(rand_point(rng), rand_point(rng), rng.gen_range(0.1..2.0));
        let free = free_action(&h, &e);
        errors.push((classical_action(&h, &e)? - free).abs() / free);
    }
    Ok(CheckOutcome::new("free-limit-action", &errors, FREE_ACTION_TOL, None))
}

pub fn check_free_limit_prefactor(cfg: &KernelCheckConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let h = cfg.hamiltonian.with_kappa(0.0)?;
    let m = h.m1 * h.m2 * h.m3;
    let mut errors = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let t: f64 = rng.gen_range(0.1..2.0);
        let expected = Complex64::new(0.0, m / (8.0 * std::f64::consts::PI.powi(3) * t.powi(3))).sqrt();
        let got = prefactor(&h, t)?;
        errors.push((got - expected).norm() / expected.norm());
    }
    Ok(CheckOutcome::new(
        "free-limit-prefactor",
        &errors,
        FREE_PREFACTOR_TOL,
        None,
    ))
}

/// Kernel composition at the configured `(t1, t)` with random endpoints.
pub fn check_kernel_composition(cfg: &KernelCheckConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let h = &cfg.hamiltonian;
    let mut errors = Vec::with_capacity(cfg.trials);
    let mut flips = 0;
    for _ in 0..cfg.trials {
        let (start, end) = (rand_point(rng), rand_point(rng));
        let direct = kernel(h, &KernelEndpoints::new(start, end, cfg.t))?.kernel;
        let composed = composed_kernel(h, &end, &start, cfg.split, cfg.t)?;
        let (err, flipped) = up_to_sign(direct, composed);
        flips += flipped as usize;
        errors.push(err);
    }
    Ok(CheckOutcome::new(
        "composition-kernel",
        &errors,
        COMPOSITION_TOL,
        Some(flips),
    ))
}

/// Prefactor composition identity at the configured split, then random splits.
pub fn check_prefactor_composition(cfg: &KernelCheckConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let h = &cfg.hamiltonian;
    let mut errors = Vec::with_capacity(cfg.trials);
    let mut flips = 0;
    for i in 0..cfg.trials {
        let (t1, t) = if i == 0 {
            (cfg.split, cfg.t)
        } else {
            let t = rng.gen_range(0.2..2.0);
            (t * rng.gen_range(0.1..0.9), t)
        };
        let (err, flipped) = up_to_sign(prefactor(h, t)?, prefactor_via_composition(h, t1, t)?);
        flips += flipped as usize;
        errors.push(err);
    }
    Ok(CheckOutcome::new(
        "composition-prefactor",
        &errors,
        COMPOSITION_TOL,
        Some(flips),
    ))
}

/// `|det| = 1` and inverse consistency of the large-coupling change of
/// variables; the first trial uses the configured masses.
pub fn check_unit_jacobian(cfg: &KernelCheckConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut errors = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials {
        let h = if i == 0 && cfg.hamiltonian.kappa > 0.0 {
            cfg.hamiltonian
        } else {
            HamiltonianParams::new(
                rng.gen_range(0.1..10.0),
                rng.gen_range(0.1..10.0),
                rng.gen_range(0.1..10.0),
                10f64.powf(rng.gen_range(0.0..4.0)),
            )?
        };
        let det_err = (jacobian_unit_check(&h)? - 1.0).abs();
        let roundtrip = jacobian_inverse(&h)? * jacobian_forward(&h)?;
        let inv_err = (roundtrip - nalgebra::Matrix3::identity()).amax();
        errors.push(det_err.max(inv_err));
    }
    Ok(CheckOutcome::new("unit-jacobian", &errors, JACOBIAN_TOL, None))
}

/// Gaussian moments evolved through the kernel against the symplectic flow.
pub fn check_kernel_vs_symplectic(cfg: &KernelCheckConfig, rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut errors = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials {
        let (h, t) = if i % 2 == 0 {
            (cfg.hamiltonian, cfg.t)
        } else {
            (rand_hamiltonian(rng, (0.0, 3.0)), rng.gen_range(0.2..2.0))
        };
        let (probe, system) = (sample_probe(rng), sample_system(rng));
        let via_kernel = kernel_evolve_gaussian(&h, &probe, &system, t)?;
        let via_flow = propagate_moments(&assemble_initial_state(&probe, &system)?, &symplectic_map(&h, t)?)?;
        let scale = via_flow.cov.amax().max(via_flow.mean.amax()).max(1.0);
        let err = (via_kernel.cov - via_flow.cov)
            .amax()
            .max((via_kernel.mean - via_flow.mean).amax());
        errors.push(err / scale);
    }
    Ok(CheckOutcome::new(
        "kernel-vs-symplectic",
        &errors,
        EQUIVALENCE_TOL,
        None,
    ))
}

/// Runs every identity check, each on its own seeded stream.
pub fn run_kernel_checks(cfg: &KernelCheckConfig) -> Result<Vec<CheckOutcome>> {
    cfg.validate()?;
    type Check = fn(&KernelCheckConfig, &mut ChaCha8Rng) -> Result<CheckOutcome>;
    let checks: [Check; 6] = [
        check_free_limit_action,
        check_free_limit_prefactor,
        check_kernel_composition,
        check_prefactor_composition,
        check_unit_jacobian,
        check_kernel_vs_symplectic,
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, check)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            check(cfg, &mut rng)
        })
        .collect()
}
