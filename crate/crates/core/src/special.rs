//! Log-gamma and polygamma functions, plus the rising-factorial sums the
//! negative binomial likelihood needs.

use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<F: Scalar>(x: F) -> F {
    if x >= F::lit(10.0) {
        // Stirling series
        let inv = x.recip();
        let inv2 = inv * inv;
        let series = inv
            * (F::lit(1.0 / 12.0)
                - inv2
                    * (F::lit(1.0 / 360.0)
                        - inv2 * (F::lit(1.0 / 1260.0) - inv2 * F::lit(1.0 / 1680.0))));
        return (x - F::lit(0.5)) * x.ln() - x + F::lit(0.918_938_533_204_672_8) + series;
    }
    if x < F::lit(0.5) {
        // reflection keeps the Lanczos sum in its accurate range
        let pi = F::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(F::one() - x);
    }
    let z = x - F::one();
    let mut acc = F::lit(LANCZOS[0]);
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += F::lit(c) / (z + F::from_index(k));
    }
    let t = z + F::lit(LANCZOS_G + 0.5);
    F::lit(0.918_938_533_204_672_8) + (z + F::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Digamma function for `x > 0`.
pub fn digamma<F: Scalar>(mut x: F) -> F {
    let mut shift = F::zero();
    while x < F::lit(10.0) {
        shift -= x.recip();
        x += F::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (F::lit(1.0 / 12.0)
            - inv2
                * (F::lit(1.0 / 120.0)
                    - inv2
                        * (F::lit(1.0 / 252.0)
                            - inv2 * (F::lit(1.0 / 240.0) - inv2 * F::lit(1.0 / 132.0)))));
    shift + x.ln() - F::lit(0.5) * inv - series
}

/// Trigamma function for `x > 0`.
pub fn trigamma<F: Scalar>(mut x: F) -> F {
    let mut shift = F::zero();
    while x < F::lit(10.0) {
        shift += (x * x).recip();
        x += F::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv
        + inv2 * F::lit(0.5)
        + inv2
            * inv
            * (F::lit(1.0 / 6.0)
                - inv2
                    * (F::lit(1.0 / 30.0)
                        - inv2
                            * (F::lit(1.0 / 42.0)
                                - inv2 * (F::lit(1.0 / 30.0) - inv2 * F::lit(5.0 / 66.0)))));
    shift + series
}

// Finite sums are exact for integer y and avoid cancellation when r >> y.
fn use_finite_sum<F: Scalar>(y: u64, r: F) -> bool {
    y < 1000 || r > F::lit(1e4) * F::from_count(y)
}

/// `ln Γ(y + r) − ln Γ(r)`.
pub fn ln_rising<F: Scalar>(y: u64, r: F) -> F {
    if use_finite_sum(y, r) {
        (0..y).map(|k| (r + F::from_count(k)).ln()).sum()
    } else {
        ln_gamma(r + F::from_count(y)) - ln_gamma(r)
    }
}

/// `ψ(y + r) − ψ(r)`.
pub fn digamma_rising<F: Scalar>(y: u64, r: F) -> F {
    if use_finite_sum(y, r) {
        (0..y).map(|k| (r + F::from_count(k)).recip()).sum()
    } else {
        digamma(r + F::from_count(y)) - digamma(r)
    }
}

/// `ψ₁(y + r) − ψ₁(r)`.
pub fn trigamma_rising<F: Scalar>(y: u64, r: F) -> F {
    if use_finite_sum(y, r) {
        -(0..y)
            .map(|k| {
                let v = r + F::from_count(k);
                (v * v).recip()
            })
            .sum::<F>()
    } else {
        trigamma(r + F::from_count(y)) - trigamma(r)
    }
}

/// `ln(y!)`.
pub fn ln_factorial<F: Scalar>(y: u64) -> F {
    if y < 2 {
        F::zero()
    } else {
        ln_gamma(F::from_count(y) + F::one())
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_8e-15,
    ];
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    if r <= 0.0 {
        return if q < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    let r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}
