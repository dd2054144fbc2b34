//! Grouped bar charts of plant means as standalone SVG.
//!
//! Every bar carries `data-plant`, `data-method` and `data-value`
//! attributes; `data-value` uses the same formatting as the CSV report so the
//! two can be compared textually.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::suite::{fmt_f64, PlantSummary};
use super::MethodId;
use crate::error::{Error, Result};

/// Quantity plotted by one chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    DeviationPct,
    CpuSeconds,
    PeakRamMb,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::DeviationPct, Metric::CpuSeconds, Metric::PeakRamMb];

    pub fn file_name(self) -> &'static str {
        match self {
            Metric::DeviationPct => "deviation.svg",
            Metric::CpuSeconds => "cpu.svg",
            Metric::PeakRamMb => "ram.svg",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::DeviationPct => "mean area deviation (%)",
            Metric::CpuSeconds => "mean CPU time (s)",
            Metric::PeakRamMb => "mean peak RAM (MB)",
        }
    }

    pub fn value(self, p: &PlantSummary) -> Option<f64> {
        match self {
            Metric::DeviationPct => p.mean_deviation_pct,
            Metric::CpuSeconds => p.mean_cpu_s,
            Metric::PeakRamMb => p.mean_peak_ram_mb,
        }
    }
}

const PALETTE: [&str; 9] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One chart: plants along x, one bar per method within each plant.
pub fn render_chart(plants: &[PlantSummary], metric: Metric) -> Result<String> {
    if plants.is_empty() {
        return Err(Error::EmptyInput("no plant summaries to plot".into()));
    }
    let mut names: Vec<&str> = plants.iter().map(|p| p.plant.as_str()).collect();
    names.dedup();
    let mut methods: Vec<MethodId> = plants.iter().map(|p| p.method).collect();
    methods.sort();
    methods.dedup();

    let values: Vec<f64> = plants.iter().filter_map(|p| metric.value(p)).collect();
    let hi = values.iter().cloned().fold(0.0, f64::max);
    let lo = values.iter().cloned().fold(0.0, f64::min);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };

    let (left, top, plot_h, bar_w, gap) = (70.0, 30.0, 300.0, 14.0, 20.0);
    let group_w = bar_w * methods.len() as f64 + gap;
    let width = left + group_w * names.len() as f64 + 160.0;
    let height = top + plot_h + 60.0;
    let y_of = |v: f64| top + (hi - v) / span * plot_h;
    let zero = y_of(0.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="18">{}</text>"#, metric.label());
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="black"/>"#,
        left + group_w * names.len() as f64
    );
    let _ = writeln!(s, r#"<text x="4" y="{:.2}">{}</text>"#, y_of(hi) + 4.0, fmt_f64(hi));
    if lo < 0.0 {
        let _ = writeln!(s, r#"<text x="4" y="{:.2}">{}</text>"#, y_of(lo) + 4.0, fmt_f64(lo));
    }
    for (g, plant) in names.iter().enumerate() {
        let x0 = left + g as f64 * group_w + 0.5 * gap;
        for (k, method) in methods.iter().enumerate() {
            let Some(v) = plants
                .iter()
                .find(|p| p.plant == *plant && p.method == *method)
                .and_then(|p| metric.value(p))
            else {
                continue;
            };
            let (y, h) = if v >= 0.0 { (y_of(v), zero - y_of(v)) } else { (zero, y_of(v) - zero) };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.2}" width="{bar_w}" height="{h:.2}" fill="{}" data-plant="{}" data-method="{method}" data-value="{}"/>"#,
                x0 + k as f64 * bar_w,
                PALETTE[*method as usize % PALETTE.len()],
                escape(plant),
                fmt_f64(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + 0.5 * bar_w * methods.len() as f64,
            top + plot_h + 20.0,
            escape(plant)
        );
    }
    let legend_x = left + group_w * names.len() as f64 + 20.0;
    for (k, method) in methods.iter().enumerate() {
        let y = top + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{legend_x}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{method}</text>"#,
            PALETTE[*method as usize % PALETTE.len()],
            legend_x + 14.0,
            y + 9.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the deviation, CPU and RAM charts into `dir`.
pub fn emit_plots(plants: &[PlantSummary], dir: &Path) -> Result<Vec<PathBuf>> {
    if plants.is_empty() {
        return Err(Error::EmptyInput("no plant summaries to plot".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for metric in Metric::ALL {
        let path = dir.join(metric.file_name());
        std::fs::write(&path, render_chart(plants, metric)?).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

/// `(plant, method, value)` of every bar in a rendered chart.
pub fn parse_bars(svg: &str) -> Vec<(String, String, String)> {
    let attr = |tag: &str, name: &str| -> Option<String> {
        let start = tag.find(&format!(" {name}=\""))? + name.len() + 3;
        let end = start + tag[start..].find('"')?;
        Some(tag[start..end].to_string())
    };
    svg.split('<')
        .filter(|t| t.starts_with("rect ") && t.contains("data-value"))
        .filter_map(|t| Some((attr(t, "data-plant")?, attr(t, "data-method")?, attr(t, "data-value")?)))
        .collect()
}
