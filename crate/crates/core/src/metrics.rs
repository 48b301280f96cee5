//! The ten depth-evaluation figures, computed over pixels valid in both the
//! estimate and the ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::DepthMap;

pub const DEFAULT_BAD_PIX_THRESHOLD: f64 = 0.10;

/// One evaluation row. Errors are in the depth unit of the inputs (meters),
/// SILog and log-RMSE are scaled by 100, percentages are in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean absolute error.
    pub mean_err: f64,
    /// Median absolute error (even counts average the central pair).
    pub median_err: f64,
    /// Percentage of overlap pixels with relative error above the threshold.
    pub bad_pix: f64,
    /// Relative depth-error threshold the bad-pix figure was computed with.
    pub bad_pix_threshold: f64,
    /// Scale-invariant logarithmic error, x100: variance of log residuals.
    pub silog: f64,
    /// Mean absolute relative error, percent.
    pub aerrr: f64,
    /// RMSE of log residuals, x100.
    pub log_rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// All pixels with a valid estimate, with or without ground truth.
    pub n_points: u64,
    /// Pixels valid in both maps; every error figure is over these.
    pub n_overlap: u64,
    /// False when the median came from a weighted mean of per-frame medians
    /// rather than pooled errors.
    pub median_is_exact: bool,
}

/// Metrics over the overlap of `est` and `gt`. With e = z_est - z_gt and
/// d = ln z_est - ln z_gt:
///   mean_err = mean|e|, median_err = median|e|,
///   AErrR = 100 mean(|e|/z_gt), log_rmse = 100 sqrt(mean d²),
///   SILog = 100 (mean d² - (mean d)²),
///   δ_k = 100 · fraction with max(z_est/z_gt, z_gt/z_est) < 1.25^k,
///   bad_pix = 100 · fraction with |e|/z_gt > threshold.
pub fn compute_metrics(
    est: &DepthMap,
    gt: &DepthMap,
    bad_pix_threshold: f64,
) -> Result<MetricsReport> {
    let pooled = collect_overlap(est, gt)?;
    let n_points = est.valid_count() as u64;
    finish(pooled, n_points, bad_pix_threshold)
}

/// Pooled aggregation: concatenates the overlaps of several frames and
/// computes one report, so the median is exact.
pub fn compute_metrics_pooled(
    frames: &[(&DepthMap, &DepthMap)],
    bad_pix_threshold: f64,
) -> Result<MetricsReport> {
    if frames.is_empty() {
        return Err(Error::Data("no frames to evaluate".into()));
    }
    let mut pooled = Vec::new();
    let mut n_points = 0u64;
    for (est, gt) in frames {
        if let Ok(mut pairs) = collect_overlap(est, gt) {
            pooled.append(&mut pairs);
        }
        n_points += est.valid_count() as u64;
    }
    finish(pooled, n_points, bad_pix_threshold)
}

fn collect_overlap(est: &DepthMap, gt: &DepthMap) -> Result<Vec<(f64, f64)>> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(Error::ShapeMismatch(format!(
            "estimate is {}x{}, ground truth {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut pairs = Vec::new();
    for (x, y, ze) in est.iter_valid() {
        if let Some(zg) = gt.get(x, y) {
            if ze <= 0.0 || zg <= 0.0 {
                return Err(Error::NonFinite(format!(
                    "non-positive depth at ({x}, {y}): est {ze}, gt {zg}"
                )));
            }
            pairs.push((ze, zg));
        }
    }
    Ok(pairs)
}

fn finish(pairs: Vec<(f64, f64)>, n_points: u64, thr: f64) -> Result<MetricsReport> {
    let n = pairs.len();
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    let nf = n as f64;
    let mut abs_errs: Vec<f64> = Vec::with_capacity(n);
    let (mut sum_abs, mut sum_rel, mut sum_d, mut sum_d2) = (0.0, 0.0, 0.0, 0.0);
    let (mut bad, mut d1, mut d2, mut d3) = (0u64, 0u64, 0u64, 0u64);
    for &(ze, zg) in &pairs {
        let e = (ze - zg).abs();
        abs_errs.push(e);
        sum_abs += e;
        sum_rel += e / zg;
        let d = ze.ln() - zg.ln();
        sum_d += d;
        sum_d2 += d * d;
        if e / zg > thr {
            bad += 1;
        }
        let ratio = (ze / zg).max(zg / ze);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25f64.powi(2) {
            d2 += 1;
        }
        if ratio < 1.25f64.powi(3) {
            d3 += 1;
        }
    }
    abs_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        abs_errs[n / 2]
    } else {
        0.5 * (abs_errs[n / 2 - 1] + abs_errs[n / 2])
    };
    let mean_d2 = sum_d2 / nf;
    let mean_d = sum_d / nf;
    Ok(MetricsReport {
        mean_err: sum_abs / nf,
        median_err: median,
        bad_pix: 100.0 * bad as f64 / nf,
        bad_pix_threshold: thr,
        silog: 100.0 * (mean_d2 - mean_d * mean_d),
        aerrr: 100.0 * sum_rel / nf,
        log_rmse: 100.0 * mean_d2.sqrt(),
        delta1: 100.0 * d1 as f64 / nf,
        delta2: 100.0 * d2 as f64 / nf,
        delta3: 100.0 * d3 as f64 / nf,
        n_points,
        n_overlap: n as u64,
        median_is_exact: true,
    })
}

/// Overlap-weighted mean of per-frame reports. The median becomes a weighted
/// mean of medians and is flagged as such; use `compute_metrics_pooled` when
/// an exact pooled median is needed.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Data("nothing to aggregate".into()));
    }
    let total: f64 = reports.iter().map(|r| r.n_overlap as f64).sum();
    if total == 0.0 {
        return Err(Error::EmptyOverlap);
    }
    let thr = reports[0].bad_pix_threshold;
    if reports.iter().any(|r| r.bad_pix_threshold != thr) {
        return Err(Error::Config(
            "cannot aggregate reports with different bad-pix thresholds".into(),
        ));
    }
    let wmean = |f: fn(&MetricsReport) -> f64| -> f64 {
        reports
            .iter()
            .map(|r| f(r) * r.n_overlap as f64)
            .sum::<f64>()
            / total
    };
    Ok(MetricsReport {
        mean_err: wmean(|r| r.mean_err),
        median_err: wmean(|r| r.median_err),
        bad_pix: wmean(|r| r.bad_pix),
        bad_pix_threshold: thr,
        silog: wmean(|r| r.silog),
        aerrr: wmean(|r| r.aerrr),
        log_rmse: wmean(|r| r.log_rmse),
        delta1: wmean(|r| r.delta1),
        delta2: wmean(|r| r.delta2),
        delta3: wmean(|r| r.delta3),
        n_points: reports.iter().map(|r| r.n_points).sum(),
        n_overlap: reports.iter().map(|r| r.n_overlap).sum(),
        median_is_exact: reports.len() == 1 && reports[0].median_is_exact,
    })
}

/// Formats reports as a comparison table, one method per row.
pub fn format_table(rows: &[(String, &MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>9} {:>10} {:>8} {:>7} {:>7} {:>9} {:>7} {:>7} {:>7} {:>9}\n",
        "Method",
        "MeanErr",
        "MedianErr",
        "bad-pix",
        "SILog",
        "AErrR",
        "logRMSE",
        "d<1.25",
        "d<1.25^2",
        "d<1.25^3",
        "#Points"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<28} {:>9.4} {:>10.4} {:>8.2} {:>7.2} {:>7.2} {:>9.2} {:>7.2} {:>8.2} {:>8.2} {:>9}\n",
            name, r.mean_err, r.median_err, r.bad_pix, r.silog, r.aerrr, r.log_rmse, r.delta1,
            r.delta2, r.delta3, r.n_points
        ));
    }
    out
}
