//! Cross-method comparison of preset outputs: one-tailed Welch tests
//! against each method's baseline and convergence plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::presets::{read_series_csv, read_trials_csv, write_aggregate_csv, Aggregate};
use crate::stats::{mean, sample_sd, welch_one_tailed};

/// Trials of one method as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrials {
    pub method: String,
    pub dir: PathBuf,
    pub baseline: Option<String>,
    /// `(metric, values across trials)`.
    pub metrics: Vec<(String, Vec<f64>)>,
    /// Mean best-so-far total MAPE per iteration, when recorded.
    pub series: Vec<f64>,
}

impl MethodTrials {
    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// One method compared against its baseline on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: String,
    pub baseline: String,
    pub metric: String,
    pub method_mean: f64,
    pub baseline_mean: f64,
    pub t: f64,
    pub df: f64,
    /// Probability under H0 of a method mean this far below the baseline.
    pub p_value: f64,
}

pub const COMPARED_METRICS: [&str; 3] = ["total_mape", "dynamic_mae", "heterogeneous_euclidean"];

/// Default baseline of a method by name.
pub fn default_baseline(method: &str) -> Option<&'static str> {
    if method.starts_with("dynamic-") {
        Some("rs-dynamic")
    } else if method == "heterogeneous-bo" {
        Some("rs-heterogeneous")
    } else if method.starts_with("framework-") {
        Some("rs-all")
    } else {
        None
    }
}

fn load_method(dir: &Path) -> Result<MethodTrials> {
    let method = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let rows = read_trials_csv(&dir.join("trials.csv"))?;
    let mut metrics: Vec<(String, Vec<f64>)> = Vec::new();
    for (_, vals) in rows {
        for (name, v) in vals {
            match metrics.iter_mut().find(|(n, _)| *n == name) {
                Some((_, xs)) => xs.push(v),
                None => metrics.push((name, vec![v])),
            }
        }
    }
    let baseline_file = dir.join("baseline.txt");
    let baseline = if baseline_file.exists() {
        Some(fs::read_to_string(baseline_file)?.trim().to_string())
    } else {
        default_baseline(&method).map(String::from)
    };
    let series_file = dir.join("series.csv");
    let series = if series_file.exists() { read_series_csv(&series_file)? } else { Vec::new() };
    Ok(MethodTrials {
        dir: dir.to_path_buf(),
        method,
        baseline,
        metrics,
        series,
    })
}

/// Every immediate subdirectory of `run_dir` holding a `trials.csv`, sorted by name.
pub fn collect_methods(run_dir: &Path) -> Result<Vec<MethodTrials>> {
    if !run_dir.is_dir() {
        return Err(CalibError::InvalidInput(format!("{} is not a directory", run_dir.display())));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("trials.csv").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CalibError::InvalidInput(format!(
            "no method directories with trials.csv under {}",
            run_dir.display()
        )));
    }
    dirs.iter().map(|d| load_method(d)).collect()
}

/// Welch comparisons of every method against its baseline, where both are present
/// and each side has at least two trials.
pub fn compare(methods: &[MethodTrials]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for m in methods {
        let Some(b) = m.baseline.as_deref().and_then(|b| methods.iter().find(|x| x.method == b)) else {
            continue;
        };
        for metric in COMPARED_METRICS {
            let (Some(x), Some(y)) = (m.metric(metric), b.metric(metric)) else {
                continue;
            };
            if x.len() < 2 || y.len() < 2 {
                continue;
            }
            let w = welch_one_tailed(x, y);
            out.push(Comparison {
                method: m.method.clone(),
                baseline: b.method.clone(),
                metric: metric.to_string(),
                method_mean: mean(x),
                baseline_mean: mean(y),
                t: w.t,
                df: w.df,
                p_value: w.p_value,
            });
        }
    }
    out
}

pub fn write_comparisons_csv(path: &Path, rows: &[Comparison]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["method", "baseline", "metric", "method_mean", "baseline_mean", "t", "df", "p_value"])?;
    for c in rows {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_comparisons_csv(path: &Path) -> Result<Vec<Comparison>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| CalibError::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Mean, sd and count of every metric of every method.
pub fn summarize(methods: &[MethodTrials]) -> Vec<Aggregate> {
    methods
        .iter()
        .flat_map(|m| {
            m.metrics.iter().map(|(name, v)| Aggregate {
                method: m.method.clone(),
                metric: name.clone(),
                mean: mean(v),
                sd: sample_sd(v),
                n: v.len(),
            })
        })
        .collect()
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line plot of several series on shared axes.
pub fn line_plot_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let finite = series.iter().flat_map(|(_, s)| s.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let n = series.iter().map(|(_, s)| s.len()).max().unwrap_or(1).max(2);
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} L{pad} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(s, r#"<text x="5" y="{}" font-family="sans-serif" font-size="11">{hi:.4}</text>"#, pad);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-family="sans-serif" font-size="11">{lo:.4}</text>"#, h - pad);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, w - pad, h - pad + 15.0, n - 1);
    for (k, (name, data)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = data
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}" font-family="sans-serif" font-size="12">{}</text>"#,
            w - pad - 150.0,
            pad + 15.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Files written by [`generate_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub methods: Vec<String>,
    pub comparisons: Vec<Comparison>,
    pub files: Vec<PathBuf>,
}

/// Reads every method under `run_dir` and writes `summary.csv`,
/// `comparisons.csv` and `convergence.svg` (plus one SVG per baseline group)
/// into `out_dir`.
pub fn generate_report(run_dir: &Path, out_dir: &Path) -> Result<ReportOutput> {
    let methods = collect_methods(run_dir)?;
    fs::create_dir_all(out_dir)?;
    let comparisons = compare(&methods);
    let mut files = vec![out_dir.join("summary.csv"), out_dir.join("comparisons.csv")];
    write_aggregate_csv(&files[0], &summarize(&methods))?;
    write_comparisons_csv(&files[1], &comparisons)?;

    let with_series: Vec<&MethodTrials> = methods.iter().filter(|m| !m.series.is_empty()).collect();
    if !with_series.is_empty() {
        let all: Vec<(&str, &[f64])> = with_series.iter().map(|m| (m.method.as_str(), m.series.as_slice())).collect();
        let p = out_dir.join("convergence.svg");
        fs::write(&p, line_plot_svg("best-so-far total MAPE", &all))?;
        files.push(p);
        let mut groups: Vec<&str> = with_series.iter().filter_map(|m| m.baseline.as_deref()).collect();
        groups.sort();
        groups.dedup();
        for g in groups {
            let members: Vec<(&str, &[f64])> = with_series
                .iter()
                .filter(|m| m.method == g || m.baseline.as_deref() == Some(g))
                .map(|m| (m.method.as_str(), m.series.as_slice()))
                .collect();
            let p = out_dir.join(format!("convergence_{g}.svg"));
            fs::write(&p, line_plot_svg(&format!("best-so-far total MAPE vs {g}"), &members))?;
            files.push(p);
        }
    }
    Ok(ReportOutput {
        methods: methods.iter().map(|m| m.method.clone()).collect(),
        comparisons,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_method(root: &Path, name: &str, totals: &[f64], series: Option<&[f64]>) {
        let d = root.join(name);
        fs::create_dir_all(&d).unwrap();
        let mut s = String::from("method,trial,seed,total_mape,dynamic_mae\n");
        for (i, v) in totals.iter().enumerate() {
            s.push_str(&format!("{name},{i},0,{v},\n"));
        }
        fs::write(d.join("trials.csv"), s).unwrap();
        if let Some(series) = series {
            crate::presets::write_series_csv(&d.join("series.csv"), series).unwrap();
        }
    }

    #[test]
    fn empty_dir_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(generate_report(d.path(), &d.path().join("r")), Err(CalibError::InvalidInput(_))));
        assert!(collect_methods(&d.path().join("missing")).is_err());
    }

    #[test]
    fn baselines_by_name() {
        assert_eq!(default_baseline("dynamic-by-time"), Some("rs-dynamic"));
        assert_eq!(default_baseline("heterogeneous-bo"), Some("rs-heterogeneous"));
        assert_eq!(default_baseline("framework-b"), Some("rs-all"));
        assert_eq!(default_baseline("rs-all"), None);
    }

    #[test]
    fn comparison_matches_direct_welch() {
        let d = tempfile::tempdir().unwrap();
        let a = [0.040, 0.043, 0.041, 0.044, 0.042];
        let b = [0.055, 0.058, 0.056, 0.059, 0.057];
        write_method(d.path(), "dynamic-by-time", &a, Some(&[0.1, 0.05, 0.04]));
        write_method(d.path(), "rs-dynamic", &b, Some(&[0.2, 0.1, 0.06]));
        let out = d.path().join("report");
        let r = generate_report(d.path(), &out).unwrap();
        assert_eq!(r.methods, vec!["dynamic-by-time", "rs-dynamic"]);
        assert_eq!(r.comparisons.len(), 1);
        let c = &r.comparisons[0];
        let w = welch_one_tailed(&a, &b);
        assert_eq!((c.t, c.p_value), (w.t, w.p_value));
        assert_eq!(read_comparisons_csv(&out.join("comparisons.csv")).unwrap(), r.comparisons);
        assert!(c.p_value < 0.05);
        for f in ["summary.csv", "comparisons.csv", "convergence.svg", "convergence_rs-dynamic.svg"] {
            assert!(out.join(f).is_file(), "{f}");
        }
        let svg = fs::read_to_string(out.join("convergence.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn plot_handles_constant_and_infinite_values() {
        let s = line_plot_svg("a<b", &[("x", &[1.0, 1.0, f64::INFINITY])]);
        assert!(s.contains("a&lt;b"));
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}
