//! Exploratory summaries: binned increment averages against degree, the
//! in-degree survival function and the in/out-degree correlation.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::store::{Category, IncrementPanel};

/// Geometric degree bins `[ratio^i, ratio^(i+1))` over positive degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricBins {
    pub ratio: f64,
}

impl Default for GeometricBins {
    fn default() -> Self {
        Self { ratio: 1.5 }
    }
}

impl GeometricBins {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio > 1.0 && ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!("bin ratio must exceed 1, got {ratio}")));
        }
        Ok(Self { ratio })
    }

    pub fn index(&self, k: u32) -> usize {
        // Small epsilon so that exact powers land in their own bin.
        ((k as f64).ln() / self.ratio.ln() + 1e-9).floor() as usize
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.ratio.powi(i as i32), self.ratio.powi(i as i32 + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub lower: f64,
    pub upper: f64,
    /// Mean degree of the vertices in the bin.
    pub k: f64,
    pub vertices: usize,
    pub mean_increment: f64,
    /// A zero mean cannot be placed on a log scale.
    pub zero_mean: bool,
}

/// Mean increment of `category` at step `t` per geometric degree bin, over
/// vertices with positive degree at `t - 1`. Empty bins are omitted.
pub fn smoothed_averages(panel: &IncrementPanel, category: Category, t: usize, bins: GeometricBins) -> Result<Vec<BinRow>> {
    if t == 0 || t > panel.num_steps() {
        return Err(Error::InvalidConfig(format!("step {t} outside 1..={}", panel.num_steps())));
    }
    let mut pairs = Vec::new();
    panel.for_each_step(|r| {
        if r.t == t {
            let inc = match category {
                Category::Internal => r.x,
                Category::External => r.y,
                Category::Deletion => r.z,
            };
            pairs = r.k_prev.iter().zip(inc).map(|(&k, &y)| (k, y)).collect();
        }
    });
    if pairs.is_empty() {
        return Err(Error::InsufficientData(format!("no existing vertices at step {t}")));
    }
    Ok(bin_pairs(&pairs, bins))
}

/// Bins `(degree, increment)` pairs; zero degrees are dropped.
pub fn bin_pairs(pairs: &[(u32, u32)], bins: GeometricBins) -> Vec<BinRow> {
    let mut acc: std::collections::BTreeMap<usize, (u64, u64, usize)> = Default::default();
    for &(k, y) in pairs.iter().filter(|(k, _)| *k > 0) {
        let e = acc.entry(bins.index(k)).or_default();
        e.0 += k as u64;
        e.1 += y as u64;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(i, (ks, ys, n))| {
            let (lower, upper) = bins.bounds(i);
            let mean = ys as f64 / n as f64;
            BinRow { lower, upper, k: ks as f64 / n as f64, vertices: n, mean_increment: mean, zero_mean: ys == 0 }
        })
        .collect()
}

fn log_points(table: &[BinRow]) -> Vec<(f64, f64)> {
    table.iter().filter(|r| !r.zero_mean).map(|r| (r.k.ln(), r.mean_increment.ln())).collect()
}

/// Least-squares `(slope, intercept)` of `y` on `x`; `None` without spread in `x`.
pub fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Free least-squares line through the log-log bins with positive mean.
pub fn free_fit(table: &[BinRow]) -> Result<(f64, f64)> {
    least_squares(&log_points(table)).ok_or_else(|| Error::InsufficientData("need two bins with positive mean".into()))
}

/// Intercept of the slope-1 line `ln mean = ln k + c` minimising squared residuals.
pub fn slope1_intercept(table: &[BinRow]) -> Result<f64> {
    let pts = log_points(table);
    if pts.is_empty() {
        return Err(Error::InsufficientData("no bin with positive mean".into()));
    }
    Ok(pts.iter().map(|(x, y)| y - x).sum::<f64>() / pts.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest degree used in the fit.
    pub cutoff: f64,
    /// Whether the points above the cutoff lie above the line on average.
    pub tail_above: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalTable {
    /// `(k, P(K ≥ k))` at each distinct positive degree.
    pub points: Vec<(u32, f64)>,
    /// `None` when the body has fewer than two distinct degrees.
    pub fit: Option<SurvivalFit>,
}

/// Empirical survival of the positive in-degrees with a power-law line fitted
/// over degrees up to the 95th percentile.
pub fn survival_plot_data(degrees: &[u32]) -> Result<SurvivalTable> {
    let mut pos: Vec<u32> = degrees.iter().copied().filter(|&k| k > 0).collect();
    if pos.len() < 10 {
        return Err(Error::InsufficientData(format!("{} positive degrees; at least 10 needed", pos.len())));
    }
    pos.sort_unstable();
    let n = pos.len() as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i < pos.len() {
        points.push((pos[i], (pos.len() - i) as f64 / n));
        let k = pos[i];
        while i < pos.len() && pos[i] == k {
            i += 1;
        }
    }
    let sorted: Vec<f64> = pos.iter().map(|&k| k as f64).collect();
    let cutoff = crate::mcmc::quantile(&sorted, 0.95);
    let logs = |keep: &dyn Fn(f64) -> bool| -> Vec<(f64, f64)> {
        points.iter().filter(|(k, _)| keep(*k as f64)).map(|&(k, s)| ((k as f64).ln(), s.ln())).collect()
    };
    let body = logs(&|k| k <= cutoff);
    let fit = least_squares(&body).map(|(slope, intercept)| {
        let tail = logs(&|k| k > cutoff);
        let resid = tail.iter().map(|(x, y)| y - (intercept + slope * x)).sum::<f64>();
        SurvivalFit { slope, intercept, cutoff, tail_above: !tail.is_empty() && resid > 0.0 }
    });
    Ok(SurvivalTable { points, fit })
}

/// Pearson correlation of in- and out-degrees.
pub fn degree_correlation(in_degrees: &[u32], out_degrees: &[u32]) -> Result<f64> {
    if in_degrees.len() != out_degrees.len() {
        return Err(Error::InvalidConfig("degree vectors differ in length".into()));
    }
    if in_degrees.len() < 2 {
        return Err(Error::InsufficientData("correlation needs at least two vertices".into()));
    }
    let n = in_degrees.len() as f64;
    let mx = in_degrees.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = out_degrees.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in in_degrees.iter().zip(out_degrees) {
        let (dx, dy) = (a as f64 - mx, b as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

pub fn write_bins_csv<W: Write>(writer: W, table: &[BinRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in table {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<bins writer>", e))?;
    Ok(())
}

pub fn write_survival_csv<W: Write>(writer: W, table: &SurvivalTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "survival", "fitted"])?;
    for &(k, s) in &table.points {
        let fitted = table
            .fit
            .as_ref()
            .map(|f| (f.intercept + f.slope * (k as f64).ln()).exp().to_string())
            .unwrap_or_default();
        w.write_record([k.to_string(), s.to_string(), fitted])?;
    }
    w.flush().map_err(|e| Error::io("<survival writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_increments_give_flat_bins() {
        let pairs: Vec<(u32, u32)> = (1..200).map(|k| (k, 3)).collect();
        let t = bin_pairs(&pairs, GeometricBins::default());
        assert!(t.iter().all(|r| r.mean_increment == 3.0));
        let (slope, _) = free_fit(&t).unwrap();
        assert!(slope.abs() < 1e-12);
    }

    #[test]
    fn single_bin() {
        let t = bin_pairs(&[(1, 2), (1, 4), (0, 9)], GeometricBins::default());
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].mean_increment, 3.0);
        assert!(free_fit(&t).is_err());
    }

    #[test]
    fn zero_bins_flagged() {
        let t = bin_pairs(&[(1, 0), (10, 4)], GeometricBins::default());
        assert!(t[0].zero_mean);
        assert!(!t[1].zero_mean);
    }

    #[test]
    fn slope_one_intercepts() {
        let t = bin_pairs(&[(10, 5)], GeometricBins::default());
        assert!((slope1_intercept(&t).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        let pairs: Vec<(u32, u32)> = [1u32, 2, 4, 8, 16, 32].iter().map(|&k| (k, 2 * k)).collect();
        let t = bin_pairs(&pairs, GeometricBins::default());
        assert!((slope1_intercept(&t).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(slope1_intercept(&bin_pairs(&[(3, 0)], GeometricBins::default())).is_err());
    }

    #[test]
    fn slope1_intercept_minimises_residuals() {
        let pairs: Vec<(u32, u32)> = (1..60).map(|k| (k, k + (k * 7919) % 5)).collect();
        let t = bin_pairs(&pairs, GeometricBins::default());
        let c = slope1_intercept(&t).unwrap();
        let sse = |c: f64| log_points(&t).iter().map(|(x, y)| (y - x - c).powi(2)).sum::<f64>();
        let best = (-2000..2000).map(|i| i as f64 * 1e-3).map(sse).fold(f64::INFINITY, f64::min);
        assert!(sse(c) <= best + 1e-12);
    }

    #[test]
    fn survival_ladder() {
        // 2^(9-i) vertices of degree 2^i: P(K ≥ 2^i) halves as k doubles.
        let degrees: Vec<u32> = (0..10).flat_map(|i| std::iter::repeat(1u32 << i).take(1 << (9 - i))).collect();
        let t = survival_plot_data(&degrees).unwrap();
        assert_eq!(t.points[0].1, 1.0);
        assert!(t.points.windows(2).all(|w| w[0].1 > w[1].1));
        let fit = t.fit.unwrap();
        assert!((fit.slope + 1.0).abs() < 0.05, "slope {}", fit.slope);
    }

    #[test]
    fn survival_degenerate() {
        let t = survival_plot_data(&[4; 20]).unwrap();
        assert!(t.fit.is_none());
        assert!(survival_plot_data(&[1, 2, 3]).is_err());
    }

    #[test]
    fn correlations() {
        let v = [1u32, 5, 2, 8];
        assert!((degree_correlation(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(degree_correlation(&[1, 2, 3, 4], &[1, 0, 0, 1]).unwrap(), 0.0);
        assert!(matches!(degree_correlation(&[1, 1], &[1, 2]), Err(Error::UndefinedCorrelation)));
        assert!(degree_correlation(&[1], &[1]).is_err());
    }
}
