//! Adaptive Gauss–Kronrod (G7/K15) quadrature.
//!
//! Each panel's error is estimated as |K15 − G7|; panels are bisected until
//! the estimate falls under their share of the absolute tolerance.

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
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One K15 panel: (integral, error estimate).
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

const MAX_DEPTH: u32 = 40;
// every interval is bisected at least this many times before trusting the estimate
const MIN_DEPTH: u32 = 2;

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns the estimate and the accumulated error bound.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> (f64, f64) {
        let forced = depth > MAX_DEPTH - MIN_DEPTH;
        if (!forced && whole.1 <= tol) || depth == 0 || (b - a).abs() < 1e-12 {
            return whole;
        }
        let mid = 0.5 * (a + b);
        let left = gauss_kronrod_15(f, a, mid);
        let right = gauss_kronrod_15(f, mid, b);
        let l = recurse(f, a, mid, 0.5 * tol, left, depth - 1);
        let r = recurse(f, mid, b, 0.5 * tol, right, depth - 1);
        (l.0 + r.0, l.1 + r.1)
    }
    let whole = gauss_kronrod_15(f, a, b);
    recurse(f, a, b, tol, whole, MAX_DEPTH)
}

/// Integral over consecutive breakpoints, the tolerance split evenly.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], tol: f64) -> (f64, f64) {
    let panels = breaks.len().saturating_sub(1).max(1) as f64;
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate(f, w[0], w[1], tol / panels))
        .fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1))
}
