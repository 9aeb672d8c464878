//! Globally adaptive Gauss-Kronrod (7/15) quadrature in one and two
//! dimensions.
//!
//! The 2D rule is iterated: the outer integral over `x` is adaptive and each
//! outer node evaluates an adaptive inner integral over `y`. The inner
//! tolerance is scaled by the outer interval length so that the inner errors
//! cannot accumulate past the requested outer tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{AkError, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], XGK[5] and the centre.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of intervals held by a single 1D adaptive call.
    pub max_subdivisions: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_subdivisions: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One Gauss-Kronrod 15-point panel on `[a, b]`. Returns (kronrod, |kronrod - gauss|).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let sum = f(center - dx) + f(center + dx);
        kronrod += w * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the summed
/// error drops below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: &QuadratureOptions) -> Result<QuadratureResult>
where
    F: FnMut(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(AkError::InvalidParameters(format!(
            "integration limits must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }

    let (value, error) = gk15(&mut f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    loop {
        // re-summed each pass: running updates cancel badly after a huge first estimate
        let (total, total_err) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s: &Segment| (v + s.value, e + s.error));
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_subdivisions {
            return Err(AkError::NonConvergence(format!(
                "error estimate {total_err:e} above tolerance {tol:e} after {} subdivisions",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }

    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(QuadratureResult {
        value,
        error,
        evaluations,
    })
}

/// Iterated adaptive integration of `f(x, y)` over `[x0, x1] × [y0, y1]`.
pub fn integrate_2d<F>(
    f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    opts: &QuadratureOptions,
) -> Result<QuadratureResult>
where
    F: Fn(f64, f64) -> f64,
{
    let inner_opts = QuadratureOptions {
        abs_tol: opts.abs_tol / (10.0 * (x1 - x0).abs().max(1.0)),
        rel_tol: opts.rel_tol / 10.0,
        max_subdivisions: opts.max_subdivisions,
    };
    let mut inner_failure: Option<AkError> = None;
    let mut evaluations = 0;
    let outer = integrate(
        |x| {
            if inner_failure.is_some() {
                return 0.0;
            }
            match integrate(|y| f(x, y), y0, y1, &inner_opts) {
                Ok(r) => {
                    evaluations += r.evaluations;
                    r.value
                }
                Err(e) => {
                    inner_failure = Some(e);
                    0.0
                }
            }
        },
        x0,
        x1,
        opts,
    )?;
    if let Some(e) = inner_failure {
        return Err(e);
    }
    Ok(QuadratureResult {
        value: outer.value,
        error: outer.error,
        evaluations,
    })
}
