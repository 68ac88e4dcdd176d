//! Adaptive Gauss–Kronrod (7/15 point) integration.
//!
//! Panels are bisected until the Kronrod/Gauss difference falls under the
//! local share of the absolute tolerance. The integrand is never evaluated at
//! the interval endpoints, so integrable endpoint singularities such as
//! `x^{-1/2}` are handled by repeated bisection toward the singular end.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the 7-point rule living on XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 60;

/// Kronrod estimate and error estimate for a single panel.
pub fn gk15_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to roughly `tol` absolute error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    let (value, err) = gk15_panel(&f, a, b);
    refine(&f, a, b, value, err, tol.max(f64::MIN_POSITIVE), 0)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (a + b);
    if err <= tol || depth >= MAX_DEPTH || mid <= a || mid >= b {
        return whole;
    }
    let (left, left_err) = gk15_panel(f, a, mid);
    let (right, right_err) = gk15_panel(f, mid, b);
    // Stop once the refined pair agrees with the parent estimate.
    if left_err + right_err <= tol && ((left + right) - whole).abs() <= tol {
        return left + right;
    }
    refine(f, a, mid, left, left_err, 0.5 * tol, depth + 1)
        + refine(f, mid, b, right, right_err, 0.5 * tol, depth + 1)
}
