//! Experiment reports: one CSV row per measurement, plus an SVG bar chart.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub language: String,
    pub p_d: f64,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
}

/// Mean and sample standard deviation of one (p_d, language, metric) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub p_d: f64,
    pub language: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Sample (n - 1) standard deviation; 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentReport {
    pub fn push(&mut self, language: &str, p_d: f64, repeat: usize, metric: &str, value: f64) {
        self.rows.push(ExperimentRow {
            language: language.to_string(),
            p_d,
            repeat,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(["language", "p_d", "repeat", "metric", "value"])?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<Result<Vec<ExperimentRow>, _>>()?;
        Ok(ExperimentReport { rows })
    }

    /// Cells in order of first appearance.
    pub fn summaries(&self) -> Vec<Summary> {
        let mut keys: Vec<(f64, &str, &str)> = Vec::new();
        for r in &self.rows {
            let k = (r.p_d, r.language.as_str(), r.metric.as_str());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(p_d, language, metric)| {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.p_d == p_d && r.language == language && r.metric == metric)
                    .map(|r| r.value)
                    .collect();
                let (mean, std) = mean_std(&vals);
                Summary {
                    p_d,
                    language: language.to_string(),
                    metric: metric.to_string(),
                    mean,
                    std,
                    n: vals.len(),
                }
            })
            .collect()
    }

    /// Bar chart with one group per p_d and one bar per (language, metric),
    /// each with a ±1 standard deviation error bar. Values are percentages.
    pub fn to_svg(&self) -> String {
        let cells = self.summaries();
        let mut groups: Vec<f64> = Vec::new();
        let mut series: Vec<(String, String)> = Vec::new();
        for c in &cells {
            if !groups.contains(&c.p_d) {
                groups.push(c.p_d);
            }
            let s = (c.language.clone(), c.metric.clone());
            if !series.contains(&s) {
                series.push(s);
            }
        }
        const PALETTE: [&str; 6] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"];
        let (bar_w, gap, left, top, plot_h) = (18.0, 24.0, 50.0, 20.0, 240.0);
        let group_w = bar_w * series.len().max(1) as f64 + gap;
        let width = left + group_w * groups.len().max(1) as f64 + 20.0;
        let height = top + plot_h + 60.0;
        let y_of = |v: f64| top + plot_h * (1.0 - (v / 100.0).clamp(0.0, 1.0));

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(
            svg,
            r#"<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
            top + plot_h
        );
        for tick in [0, 25, 50, 75, 100] {
            let y = y_of(tick as f64);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{tick}</text>"#,
                left - 4.0,
                y + 3.0
            );
        }
        for (gi, p) in groups.iter().enumerate() {
            let gx = left + gap / 2.0 + gi as f64 * group_w;
            let _ = writeln!(svg, r#"<g class="group" data-pd="{p}">"#);
            for (si, (lang, metric)) in series.iter().enumerate() {
                let Some(c) = cells
                    .iter()
                    .find(|c| c.p_d == *p && &c.language == lang && &c.metric == metric)
                else {
                    continue;
                };
                let x = gx + si as f64 * bar_w;
                let y = y_of(c.mean);
                let _ = writeln!(
                    svg,
                    r#"<rect class="bar" x="{x}" y="{y}" width="{}" height="{}" fill="{}"><title>{} {} p_d={p}: {:.2} ± {:.2}</title></rect>"#,
                    bar_w - 2.0,
                    top + plot_h - y,
                    PALETTE[si % PALETTE.len()],
                    xml_escape(lang),
                    xml_escape(metric),
                    c.mean,
                    c.std
                );
                let cx = x + (bar_w - 2.0) / 2.0;
                let (hi, lo) = (y_of(c.mean + c.std), y_of(c.mean - c.std));
                let _ = writeln!(
                    svg,
                    r#"<line class="error-bar" x1="{cx}" y1="{hi}" x2="{cx}" y2="{lo}" stroke="black"/>"#
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">p_d={p}</text>"#,
                gx + (group_w - gap) / 2.0,
                top + plot_h + 14.0
            );
            svg.push_str("</g>\n");
        }
        for (si, (lang, metric)) in series.iter().enumerate() {
            let y = top + plot_h + 30.0 + (si / 3) as f64 * 12.0;
            let x = left + (si % 3) as f64 * 140.0;
            let _ = writeln!(
                svg,
                r#"<rect class="legend" x="{x}" y="{}" width="8" height="8" fill="{}"/><text x="{}" y="{}" font-size="10">{} {}</text>"#,
                y - 8.0,
                PALETTE[si % PALETTE.len()],
                x + 12.0,
                y,
                xml_escape(lang),
                xml_escape(metric)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the CSV to `path` and, if `svg` is given, the chart next to it.
pub fn emit_report(report: &ExperimentReport, path: &Path, svg: Option<&Path>) -> Result<(), ReportError> {
    write_file(path, &report.to_csv()?)?;
    if let Some(svg_path) = svg {
        write_file(svg_path, &report.to_svg())?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ExperimentReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ExperimentReport::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::default();
        for (i, p) in [0.0, 0.01, 0.3].into_iter().enumerate() {
            for rep in 0..3 {
                r.push("Maltese", p, rep, "valid", 99.0 - 10.0 * i as f64 - rep as f64 * 0.1);
                r.push("Maltese, \"x\"", p, rep, "invalid", 1.0 / 3.0 + rep as f64);
            }
        }
        r
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(
            ExperimentReport::default().to_csv().unwrap(),
            "language,p_d,repeat,metric,value\n"
        );
        assert_eq!(
            ExperimentReport::from_csv("language,p_d,repeat,metric,value\n").unwrap(),
            ExperimentReport::default()
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = sample();
        assert_eq!(ExperimentReport::from_csv(&r.to_csv().unwrap()).unwrap(), r);
    }

    #[test]
    fn summaries_use_sample_std() {
        let s = sample().summaries();
        assert_eq!(s.len(), 6);
        assert!((s[0].mean - 98.9).abs() < 1e-12);
        assert!((s[0].std - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn svg_has_group_per_probability() {
        let svg = sample().to_svg();
        assert_eq!(svg.matches(r#"<g class="group""#).count(), 3);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 6);
        assert_eq!(svg.matches(r#"class="error-bar""#).count(), 6);
        assert!(svg.contains("&quot;x&quot;"));
    }

    #[test]
    fn unwritable_path_errors() {
        let r = sample();
        assert!(emit_report(&r, Path::new("/nonexistent-dir/out.csv"), None).is_err());
    }
}
