//! k-space line correlation analysis and report/plot emission.

mod svg;

use crate::error::{Error, Result};
use crate::kcore::{dft2, ComplexImage};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;
use svg::{heat_color, Svg};

/// Readout-reduced line-pair correlations: entry (i, j) is the sum over both
/// readout indices of the feature autocorrelation restricted to columns i and
/// j, i.e. (N-1)^-1 sum_n s_n(i) conj(s_n(j)) with s_n(x) the readout sum of
/// column x of slice n's k-space. Hermitian with a real nonnegative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCorrelationMap {
    entries: Vec<Complex64>,
    pub width: usize,
}

impl LineCorrelationMap {
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.width + j]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.norm()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.arg()).collect()
    }

    /// Column index with the largest correlation magnitude to `anchor`,
    /// excluding the anchor itself.
    pub fn strongest_partner(&self, anchor: usize) -> usize {
        let mut best = usize::MAX;
        let mut best_mag = -1.0;
        for j in 0..self.width {
            if j == anchor {
                continue;
            }
            let m = self.at(anchor, j).norm();
            if m > best_mag {
                best_mag = m;
                best = j;
            }
        }
        best
    }
}

/// Build the line-correlation map from complex image slices: each slice is
/// center-cropped, transformed to k-space, reduced to per-column readout
/// sums, and accumulated as an outer product. The full pixel-by-pixel
/// autocorrelation matrix is never materialized; the readout reduction is
/// fused into the accumulation.
pub fn autocorr(slices: &[ComplexImage], crop: usize) -> Result<LineCorrelationMap> {
    if slices.len() < 2 {
        return Err(Error::InvalidArg(format!(
            "autocorrelation needs at least 2 slices, got {}",
            slices.len()
        )));
    }
    let mut entries = vec![Complex64::new(0.0, 0.0); crop * crop];
    for img in slices {
        let cropped = img.center_crop(crop, crop)?;
        let k = dft2(&cropped)?;
        let mut line_sums = vec![Complex64::new(0.0, 0.0); crop];
        for col in 0..crop {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in 0..crop {
                acc += k.at(row, col);
            }
            line_sums[col] = acc;
        }
        for i in 0..crop {
            for j in 0..crop {
                entries[i * crop + j] += line_sums[i] * line_sums[j].conj();
            }
        }
    }
    let scale = 1.0 / (slices.len() as f64 - 1.0);
    for e in entries.iter_mut() {
        *e *= scale;
    }
    Ok(LineCorrelationMap { entries, width: crop })
}

/// Circular variance 1 - |mean(e^{i phi})| of a set of phases; near 1 for
/// uniformly scattered phases, near 0 for concentrated ones.
pub fn circular_variance(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    let (mut c, mut s) = (0.0, 0.0);
    for &p in phases {
        c += p.cos();
        s += p.sin();
    }
    let n = phases.len() as f64;
    1.0 - (c / n).hypot(s / n)
}

/// serde helpers mapping non-finite f64 to/from the string "inf"/"-inf" so
/// reports with infinite PSNR or an infinite lambda stay valid JSON.
pub mod jsonnum {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum NumOrStr {
            Num(f64),
            Str(String),
        }
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad numeric string '{other}'"))),
            },
        }
    }
}

/// Histogram with equal-width bins over [lo, hi]; values outside clamp into
/// the edge bins. Returns per-bin counts.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let w = (hi - lo) / bins as f64;
    for &v in values {
        let b = (((v - lo) / w).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    counts
}

/// One ROC curve as an SVG plot.
pub fn write_roc_svg(path: &Path, roc: &[(f64, f64)], auroc: f64) -> Result<()> {
    let (w, h, m) = (360.0, 360.0, 40.0);
    let mut svg = Svg::new(w, h);
    svg.line(m, h - m, w - m, h - m, "black");
    svg.line(m, m, m, h - m, "black");
    svg.line(m, h - m, w - m, m, "gray");
    let pts: Vec<(f64, f64)> = roc
        .iter()
        .map(|&(fpr, tpr)| (m + fpr * (w - 2.0 * m), h - m - tpr * (h - 2.0 * m)))
        .collect();
    if !pts.is_empty() {
        svg.polyline(&pts, "crimson");
    }
    svg.text(m, m - 10.0, 12.0, &format!("ROC (AUROC {auroc:.3})"));
    std::fs::write(path, svg.finish())?;
    Ok(())
}

/// Two overlaid score histograms (corrupted vs nominal).
pub fn write_score_histogram_svg(
    path: &Path,
    corrupted: &[f64],
    nominal: &[f64],
    bins: usize,
) -> Result<()> {
    let (w, h, m) = (420.0, 300.0, 40.0);
    let mut svg = Svg::new(w, h);
    let hc = histogram(corrupted, 0.0, 1.0, bins);
    let hn = histogram(nominal, 0.0, 1.0, bins);
    let peak = hc.iter().chain(hn.iter()).cloned().max().unwrap_or(1).max(1) as f64;
    let bw = (w - 2.0 * m) / bins as f64;
    for (i, (&c, &n)) in hc.iter().zip(hn.iter()).enumerate() {
        let x = m + i as f64 * bw;
        let ch = (h - 2.0 * m) * c as f64 / peak;
        let nh = (h - 2.0 * m) * n as f64 / peak;
        svg.rect(x, h - m - nh, bw * 0.45, nh, "steelblue");
        svg.rect(x + bw * 0.45, h - m - ch, bw * 0.45, ch, "crimson");
    }
    svg.line(m, h - m, w - m, h - m, "black");
    svg.text(m, m - 10.0, 12.0, "score distribution (blue nominal, red corrupted)");
    std::fs::write(path, svg.finish())?;
    Ok(())
}

/// Per-lambda task curves (forgetting curves) as overlaid polylines.
pub fn write_curves_svg(path: &Path, labels: &[String], series: &[Vec<f64>]) -> Result<()> {
    let (w, h, m) = (460.0, 320.0, 45.0);
    let mut svg = Svg::new(w, h);
    svg.line(m, h - m, w - m, h - m, "black");
    svg.line(m, m, m, h - m, "black");
    let colors = ["crimson", "steelblue", "seagreen", "darkorange", "purple", "gray"];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &v in s {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !(hi > lo) {
        lo = 0.0;
        hi = 1.0;
    }
    let max_len = series.iter().map(|s| s.len()).max().unwrap_or(0).max(2);
    for (si, s) in series.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let pts: Vec<(f64, f64)> = s
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                (
                    m + i as f64 / (max_len - 1) as f64 * (w - 2.0 * m),
                    h - m - (v - lo) / (hi - lo) * (h - 2.0 * m),
                )
            })
            .collect();
        let color = colors[si % colors.len()];
        svg.polyline(&pts, color);
        if si < labels.len() {
            svg.text(w - m - 90.0, m + 14.0 * si as f64, 11.0, &format!("{} {}", labels[si], color));
        }
    }
    std::fs::write(path, svg.finish())?;
    Ok(())
}

/// Correlation-map heat plot (magnitude or phase view).
pub fn write_correlation_svg(path: &Path, map: &LineCorrelationMap, view_phase: bool) -> Result<()> {
    let n = map.width;
    let cell = (480.0 / n as f64).max(1.0);
    let size = cell * n as f64 + 40.0;
    let mut svg = Svg::new(size, size);
    let values = if view_phase { map.phase() } else { map.magnitude() };
    let (lo, hi) = if view_phase {
        (-std::f64::consts::PI, std::f64::consts::PI)
    } else {
        // log scale for magnitudes
        let mx = values.iter().cloned().fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
        (mx.ln() - 12.0, mx.ln())
    };
    for i in 0..n {
        for j in 0..n {
            let raw = values[i * n + j];
            let v = if view_phase { raw } else { raw.max(f64::MIN_POSITIVE).ln() };
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            svg.rect(20.0 + j as f64 * cell, 20.0 + i as f64 * cell, cell, cell, &heat_color(t));
        }
    }
    svg.text(20.0, 14.0, 12.0, if view_phase { "line correlation phase" } else { "line correlation magnitude (log)" });
    std::fs::write(path, svg.finish())?;
    Ok(())
}

/// Report document kinds accepted by the report emitter; each validates its
/// payload schema strictly.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "schema", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReportDoc {
    Classifier {
        report: crate::detector::ClassifierReport,
        scores_corrupted: Vec<f64>,
        scores_nominal: Vec<f64>,
        baseline_auroc: Option<f64>,
    },
    Ewc {
        report: crate::continual::SequentialReport,
    },
    Transfer {
        report: crate::recon::TransferReport,
    },
}

/// Render a report document: echoes the validated JSON and writes the plots
/// it implies. Byte-deterministic given inputs.
pub fn emit_report(doc: &ReportDoc, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(doc)?)?;
    written.push(json_path);
    match doc {
        ReportDoc::Classifier { report, scores_corrupted, scores_nominal, .. } => {
            if !report.roc.is_empty() {
                let p = dir.join("roc.svg");
                write_roc_svg(&p, &report.roc, report.auroc)?;
                written.push(p);
            }
            if !scores_corrupted.is_empty() || !scores_nominal.is_empty() {
                let p = dir.join("score_hist.svg");
                write_score_histogram_svg(&p, scores_corrupted, scores_nominal, 20)?;
                written.push(p);
            }
        }
        ReportDoc::Ewc { report } => {
            let labels: Vec<String> = report
                .arms
                .iter()
                .filter(|a| !a.task_a_curve.is_empty())
                .map(|a| format!("lambda={}", if a.lambda.is_finite() { format!("{:.0e}", a.lambda) } else { "inf".into() }))
                .collect();
            let series: Vec<Vec<f64>> = report
                .arms
                .iter()
                .filter(|a| !a.task_a_curve.is_empty())
                .map(|a| a.task_a_curve.clone())
                .collect();
            if !series.is_empty() {
                let p = dir.join("forgetting_curves.svg");
                write_curves_svg(&p, &labels, &series)?;
                written.push(p);
            }
        }
        ReportDoc::Transfer { .. } => {}
    }
    Ok(written)
}
