//! Evaluation reports and figure emission.
//!
//! Evaluate runs write per-line decode records and per-split summaries as
//! tab-separated text; the report command aggregates many runs into CSV
//! tables and renders SVG charts from those CSVs (never from live state, so
//! regenerating a figure from the same CSV is byte-identical).

use crate::adaptation::{AdaptationResult, AdaptMethod, SummaryRow};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub split: String,
    pub lines: usize,
    pub ref_chars: usize,
    pub edits: usize,
    pub cer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub setup: String,
    pub mode: String,
    pub init: String,
    pub ed: usize,
    pub config_hash: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(
            out,
            "#setup\t{}\n#mode\t{}\n#init\t{}\n#ed\t{}\n#config_hash\t{:016x}",
            self.setup, self.mode, self.init, self.ed, self.config_hash
        )
        .unwrap();
        writeln!(out, "split\tlines\tref_chars\tedits\tcer").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}",
                r.split, r.lines, r.ref_chars, r.edits, r.cer
            )
            .unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut setup = String::new();
        let mut mode = String::new();
        let mut init = String::new();
        let mut ed = 0usize;
        let mut config_hash = 0u64;
        let mut rows = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.splitn(2, '\t');
                let key = parts.next().unwrap_or_default();
                let val = parts.next().unwrap_or_default();
                match key {
                    "setup" => setup = val.to_string(),
                    "mode" => mode = val.to_string(),
                    "init" => init = val.to_string(),
                    "ed" => ed = val.parse().unwrap_or(0),
                    "config_hash" => config_hash = u64::from_str_radix(val, 16).unwrap_or(0),
                    _ => {}
                }
                continue;
            }
            if line.starts_with("split\t") || line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 5 {
                return Err(Error::Format {
                    what: "eval summary",
                    path: path.to_path_buf(),
                    detail: format!("bad row: {line}"),
                });
            }
            rows.push(EvalRow {
                split: parts[0].to_string(),
                lines: parts[1].parse().unwrap_or(0),
                ref_chars: parts[2].parse().unwrap_or(0),
                edits: parts[3].parse().unwrap_or(0),
                cer: parts[4].parse().unwrap_or(f64::NAN),
            });
        }
        Ok(EvalReport {
            setup,
            mode,
            init,
            ed,
            config_hash,
            rows,
        })
    }

    pub fn cer_of(&self, split: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.split == split).map(|r| r.cer)
    }
}

/// Per-line decode records: id, hypothesis, CER.
pub fn save_line_records(path: &Path, records: &[(usize, String, f64)]) -> Result<()> {
    let mut out = String::new();
    for (id, hyp, cer) in records {
        writeln!(out, "{id}\t{hyp}\t{cer:.6}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_adaptation_report(path: &Path, setup: &str, rows: &[AdaptationResult]) -> Result<()> {
    let mut out = String::from("writer\trun\tmethod\tsetup\tcluster_size\tadapted_cer\tbaseline_cer\treduction\n");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            r.writer,
            r.run,
            r.method.as_str(),
            setup,
            r.cluster_size,
            r.adapted_cer,
            r.baseline_cer,
            r.reduction
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_adaptation_report(path: &Path) -> Result<Vec<AdaptationResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split('\t').collect();
        if p.len() != 8 {
            return Err(Error::Format {
                what: "adaptation report",
                path: path.to_path_buf(),
                detail: format!("bad row: {line}"),
            });
        }
        let method = match p[2] {
            "select" => AdaptMethod::Select,
            "optimize" => AdaptMethod::Optimize,
            "finetune" => AdaptMethod::Finetune,
            "encode" => AdaptMethod::Encode,
            other => {
                return Err(Error::Format {
                    what: "adaptation report",
                    path: path.to_path_buf(),
                    detail: format!("unknown method {other}"),
                })
            }
        };
        rows.push(AdaptationResult {
            writer: p[0].parse().unwrap_or(0),
            run: p[1].parse().unwrap_or(0),
            method,
            cluster_size: p[4].parse().unwrap_or(0),
            adapted_cer: p[5].parse().unwrap_or(f64::NAN),
            baseline_cer: p[6].parse().unwrap_or(f64::NAN),
            reduction: p[7].parse().unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

pub fn save_adaptation_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::from("method\tcluster_size\twriters\tmean\tq1\tmedian\tq3\n");
    for s in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            s.method.as_str(),
            s.cluster_size,
            s.writers,
            s.mean,
            s.q1,
            s.median,
            s.q3
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// SVG rendering. Small and dependency-free; charts are regenerated purely
// from CSV rows.

fn svg_header(w: u32, h: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of (x, y) series with log-ish x ticks supplied by the caller.
pub fn svg_line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640u32, 420u32);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 50.0);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (_, pts) in series {
        for &(x, y) in pts {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.is_empty() {
        return svg_header(w, h) + "</svg>\n";
    }
    let (x0, x1) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (mut y0, mut y1) = (
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    if (y1 - y0).abs() < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.08;
    y0 -= pad;
    y1 += pad;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0).max(1e-12) * (w as f64 - ml - mr);
    let sy = |y: f64| h as f64 - mb - (y - y0) / (y1 - y0) * (h as f64 - mt - mb);

    let mut out = svg_header(w, h);
    writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        w / 2,
        title
    )
    .unwrap();
    // axes
    writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h as f64 - mb,
        w as f64 - mr,
        h as f64 - mb
    )
    .unwrap();
    writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        h as f64 - mb
    )
    .unwrap();
    // y ticks
    for t in 0..=4 {
        let yv = y0 + (y1 - y0) * t as f64 / 4.0;
        let yp = sy(yv);
        writeln!(
            out,
            "<line x1=\"{}\" y1=\"{yp:.1}\" x2=\"{ml}\" y2=\"{yp:.1}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{yv:.3}</text>",
            ml - 5.0,
            ml - 8.0,
            yp + 4.0
        )
        .unwrap();
    }
    // x ticks at data points
    let mut xticks: Vec<f64> = xs.clone();
    xticks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xticks.dedup();
    for &xv in &xticks {
        let xp = sx(xv);
        writeln!(
            out,
            "<line x1=\"{xp:.1}\" y1=\"{}\" x2=\"{xp:.1}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{xp:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{xv}</text>",
            h as f64 - mb,
            h as f64 - mb + 5.0,
            h as f64 - mb + 20.0
        )
        .unwrap();
    }
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        )
        .unwrap();
        for &(x, y) in &sorted {
            writeln!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>",
                sx(x),
                sy(y)
            )
            .unwrap();
        }
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{label}</text>",
            ml + 10.0,
            mt + 16.0 * si as f64 + 4.0
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Box plot: one box per group from (min, q1, median, q3, max).
pub fn svg_box_plot(title: &str, groups: &[(String, [f64; 5])]) -> String {
    let (w, h) = (640u32, 420u32);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 70.0);
    if groups.is_empty() {
        return svg_header(w, h) + "</svg>\n";
    }
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for (_, q) in groups {
        y0 = y0.min(q[0]);
        y1 = y1.max(q[4]);
    }
    y0 = y0.min(0.0);
    y1 = y1.max(0.0);
    let pad = (y1 - y0).max(1e-9) * 0.08;
    y0 -= pad;
    y1 += pad;
    let sy = |y: f64| h as f64 - mb - (y - y0) / (y1 - y0) * (h as f64 - mt - mb);
    let slot = (w as f64 - ml - mr) / groups.len() as f64;

    let mut out = svg_header(w, h);
    writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        w / 2,
        title
    )
    .unwrap();
    for t in 0..=4 {
        let yv = y0 + (y1 - y0) * t as f64 / 4.0;
        let yp = sy(yv);
        writeln!(
            out,
            "<line x1=\"{ml}\" y1=\"{yp:.1}\" x2=\"{}\" y2=\"{yp:.1}\" stroke=\"#dddddd\"/>\
             <text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{yv:.3}</text>",
            w as f64 - mr,
            ml - 8.0,
            yp + 4.0
        )
        .unwrap();
    }
    // zero line
    let zp = sy(0.0);
    writeln!(
        out,
        "<line x1=\"{ml}\" y1=\"{zp:.1}\" x2=\"{}\" y2=\"{zp:.1}\" stroke=\"black\" stroke-dasharray=\"4 3\"/>",
        w as f64 - mr
    )
    .unwrap();
    for (i, (label, q)) in groups.iter().enumerate() {
        let cx = ml + slot * (i as f64 + 0.5);
        let bw = slot * 0.5;
        let color = PALETTE[i % PALETTE.len()];
        // whiskers
        writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            sy(q[0]),
            sy(q[1])
        )
        .unwrap();
        writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            sy(q[3]),
            sy(q[4])
        )
        .unwrap();
        // box
        writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{:.1}\" fill=\"{color}\" fill-opacity=\"0.4\" stroke=\"black\"/>",
            cx - bw / 2.0,
            sy(q[3]),
            (sy(q[1]) - sy(q[3])).abs()
        )
        .unwrap();
        // median
        writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>",
            cx - bw / 2.0,
            sy(q[2]),
            cx + bw / 2.0,
            sy(q[2])
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(30 {cx:.1} {})\">{label}</text>",
            h as f64 - mb + 18.0,
            h as f64 - mb + 18.0
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.tsv");
        let report = EvalReport {
            setup: "single_adain_ed32_pretrained_s0".into(),
            mode: "single_adain".into(),
            init: "pretrained".into(),
            ed: 32,
            config_hash: 0xfeed,
            rows: vec![
                EvalRow {
                    split: "TST".into(),
                    lines: 100,
                    ref_chars: 800,
                    edits: 40,
                    cer: 0.05,
                },
                EvalRow {
                    split: "TST_50".into(),
                    lines: 20,
                    ref_chars: 160,
                    edits: 16,
                    cer: 0.1,
                },
            ],
        };
        report.save(&path).unwrap();
        let loaded = EvalReport::load(&path).unwrap();
        assert_eq!(loaded, report);
        assert_eq!(loaded.cer_of("TST"), Some(0.05));
        assert_eq!(loaded.cer_of("nope"), None);
    }

    #[test]
    fn adaptation_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adapt.tsv");
        let rows = vec![AdaptationResult {
            writer: 3,
            run: 1,
            method: AdaptMethod::Optimize,
            cluster_size: 64,
            adapted_cer: 0.04,
            baseline_cer: 0.08,
            reduction: -0.5,
        }];
        save_adaptation_report(&path, "setup", &rows).unwrap();
        let loaded = load_adaptation_report(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].writer, 3);
        assert_eq!(loaded[0].method, AdaptMethod::Optimize);
        assert_eq!(loaded[0].reduction, -0.5);
    }

    #[test]
    fn charts_are_deterministic() {
        let series = vec![
            ("a".to_string(), vec![(16.0, 0.1), (32.0, 0.08)]),
            ("b".to_string(), vec![(16.0, 0.12), (32.0, 0.07)]),
        ];
        assert_eq!(
            svg_line_chart("t", &series),
            svg_line_chart("t", &series)
        );
        let groups = vec![("g".to_string(), [-0.2, -0.1, 0.0, 0.1, 0.2])];
        assert_eq!(svg_box_plot("t", &groups), svg_box_plot("t", &groups));
        assert!(svg_box_plot("t", &groups).contains("</svg>"));
    }
}
