//! Ratio tables `f̂ / φ` per bin and the spread verdict computed from them.

use serde::{Deserialize, Serialize};

use crate::barrier::PhiProfile;
use crate::error::{invalid, Error, Result};
use crate::exit::RadialHistogram;
use crate::quad::gk::Tolerance;

/// One histogram bin against the bin average of `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
    pub density: f64,
    pub density_low: f64,
    pub density_high: f64,
    pub phi_avg: f64,
    pub ratio: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub nonempty_bins: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub spread: f64,
    pub spread_max: f64,
    /// Every non-empty bin has a ratio interval inside `(0, ∞)`.
    pub intervals_bounded: bool,
}

/// The verdict is a pure function of the rows, so saved tables reproduce it.
pub fn verdict_from_rows(rows: &[RatioRow], spread_max: f64) -> Verdict {
    let live: Vec<&RatioRow> = rows.iter().filter(|r| r.count > 0).collect();
    let min_ratio = live.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = live.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let intervals_bounded = live
        .iter()
        .all(|r| r.ratio_low > 0.0 && r.ratio_high.is_finite() && r.ratio > 0.0);
    let spread = if live.is_empty() { f64::INFINITY } else { max_ratio / min_ratio };
    Verdict {
        pass: !live.is_empty() && intervals_bounded && spread <= spread_max,
        nonempty_bins: live.len(),
        min_ratio,
        max_ratio,
        spread,
        spread_max,
        intervals_bounded,
    }
}

pub fn rows_to_csv(rows: &[RatioRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "bin_lo",
            "bin_hi",
            "count",
            "density",
            "density_low",
            "density_high",
            "phi_avg",
            "ratio",
            "ratio_low",
            "ratio_high",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<RatioRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Re-derives the verdict from a saved ratio table.
pub fn verdict_from_csv(text: &str, spread_max: f64) -> Result<Verdict> {
    Ok(verdict_from_rows(&rows_from_csv(text)?, spread_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub field: String,
    pub depth: f64,
    pub start: Vec<f64>,
    pub paths: usize,
    pub overflow_fraction: f64,
    pub rows: Vec<RatioRow>,
    pub verdict: Verdict,
}

/// Builds ratio rows from a histogram; `φ` is averaged over each bin by quadrature.
pub fn ratio_rows(hist: &RadialHistogram, phi: &PhiProfile) -> Result<Vec<RatioRow>> {
    let tol = Tolerance {
        abs: 1e-14,
        rel: 1e-10,
        max_subdivisions: 2000,
    };
    hist.bins()
        .into_iter()
        .map(|b| {
            let width = b.hi - b.lo;
            if !(width > 0.0) {
                return Err(invalid("bin", "zero width"));
            }
            let phi_avg = phi.integral(b.lo, b.hi, &tol)? / width;
            Ok(RatioRow {
                bin_lo: b.lo,
                bin_hi: b.hi,
                count: b.count,
                density: b.density,
                density_low: b.density_low,
                density_high: b.density_high,
                phi_avg,
                ratio: b.density / phi_avg,
                ratio_low: b.density_low / phi_avg,
                ratio_high: b.density_high / phi_avg,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(count: u64, ratio: f64) -> RatioRow {
        RatioRow {
            bin_lo: 1.0,
            bin_hi: 1.1,
            count,
            density: ratio,
            density_low: 0.9 * ratio,
            density_high: 1.1 * ratio,
            phi_avg: 1.0,
            ratio,
            ratio_low: 0.9 * ratio,
            ratio_high: 1.1 * ratio,
        }
    }

    #[test]
    fn spread_and_empty_bins() {
        let rows = vec![row(10, 0.5), row(0, 0.0), row(20, 2.0)];
        let v = verdict_from_rows(&rows, 25.0);
        assert!(v.pass);
        assert_eq!(v.nonempty_bins, 2);
        assert!((v.spread - 4.0).abs() < 1e-15);
        assert!(!verdict_from_rows(&rows, 3.0).pass);
        assert!(!verdict_from_rows(&[], 25.0).pass);
    }

    #[test]
    fn csv_round_trip_reproduces_verdict() {
        let rows = vec![row(10, 0.3), row(5, 1.7)];
        let text = rows_to_csv(&rows).unwrap();
        assert_eq!(rows_from_csv(&text).unwrap(), rows);
        assert_eq!(verdict_from_csv(&text, 25.0).unwrap(), verdict_from_rows(&rows, 25.0));
    }
}
