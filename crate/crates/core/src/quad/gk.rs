//! Adaptive 21-point Gauss–Kronrod integration with QUADPACK-style error
//! rescaling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_563_380_850,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-13,
            rel: 1e-11,
            max_subdivisions: 2000,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs > 0.0) || !(self.rel > 0.0) {
            return Err(invalid("tolerance", "abs and rel must be positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

impl Estimate {
    pub fn add(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            error: self.error + other.error,
            subdivisions: self.subdivisions + other.subdivisions,
        }
    }

    pub fn scale(self, s: f64) -> Estimate {
        Estimate {
            value: self.value * s,
            error: self.error * s.abs(),
            subdivisions: self.subdivisions,
        }
    }
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

/// One 21-point Kronrod panel on `[a, b]`: `(value, error)`.
pub fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Adaptive bisection on `[a, b]` until the summed error estimate is below
/// `max(tol.abs, tol.rel * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Estimate> {
    integrate_with_floor(f, a, b, tol, 0.0)
}

/// As [`integrate`], with an extra absolute floor used when the integral is a
/// small part of a larger sum.
pub fn integrate_with_floor<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: &Tolerance,
    floor: f64,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate::default());
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(invalid("interval", format!("[{a}, {b}] is not finite")));
    }
    let (v0, e0) = qk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v0, error: e0 });
    let mut total = v0;
    let mut err = e0;
    let mut subdivisions = 1;
    loop {
        let target = tol.abs.max(tol.rel * total.abs()).max(floor);
        if err <= target {
            break;
        }
        if subdivisions >= tol.max_subdivisions {
            return Err(Error::NotConverged {
                partial: total,
                error: err,
                subdivisions,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // interval exhausted at machine precision; keep what we have
            heap.push(seg);
            break;
        }
        let (vl, el) = qk21(&f, seg.a, mid);
        let (vr, er) = qk21(&f, mid, seg.b);
        total += vl + vr - seg.value;
        err += el + er - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: vl, error: el });
        heap.push(Segment { a: mid, b: seg.b, value: vr, error: er });
        subdivisions += 1;
    }
    // resum to shed accumulated cancellation in the running totals
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    if !value.is_finite() {
        return Err(Error::NotConverged {
            partial: value,
            error,
            subdivisions,
        });
    }
    Ok(Estimate { value, error, subdivisions })
}

/// Integrates over `[a, b]` split at the interior `points`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    points: &[f64],
    tol: &Tolerance,
    floor: f64,
) -> Result<Estimate> {
    let mut cuts: Vec<f64> = points.iter().copied().filter(|p| *p > a && *p < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut acc = Estimate::default();
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        acc = acc.add(integrate_with_floor(f, lo, hi, tol, floor)?);
        lo = hi;
    }
    Ok(acc)
}

/// `∫_a^b f` when `f` behaves like `(b - y)^gamma` at the right endpoint,
/// via `y = b - (b - a) s^p` with `p = max(1, 2/(gamma + 1))`. The integrand
/// receives the distance `b - y`, computed without cancellation.
pub fn integrate_right_singular<F: Fn(f64) -> f64>(
    f_of_dist: F,
    a: f64,
    b: f64,
    gamma: f64,
    tol: &Tolerance,
    floor: f64,
) -> Result<Estimate> {
    if !(gamma > -1.0) {
        return Err(invalid("gamma", format!("{gamma} is not integrable")));
    }
    let len = b - a;
    let p = (2.0 / (gamma + 1.0)).max(1.0);
    integrate_with_floor(
        |s: f64| {
            let sp = s.powf(p);
            f_of_dist(len * sp) * len * p * sp / s
        },
        0.0,
        1.0,
        tol,
        floor,
    )
}
