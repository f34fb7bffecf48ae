use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plotters::prelude::*;

use super::Aggregates;
use crate::error::{Error, Result};

/// Writes a two-column `metric,value` table of the aggregates.
pub fn write_csv(agg: &Aggregates, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "samples,{}", agg.samples);
    for (n, acc) in &agg.topn {
        let _ = writeln!(s, "top{n}_accuracy,{acc:.6}");
    }
    match agg.mean_d_sp {
        Some(d) => {
            let _ = writeln!(s, "mean_d_sp,{d:.6}");
        }
        None => s.push_str("mean_d_sp,\n"),
    }
    let _ = writeln!(s, "d_sp_samples,{}", agg.d_sp_samples);
    let _ = writeln!(s, "d_sp_excluded,{}", agg.d_sp_excluded);
    for w in &agg.windows {
        let _ = writeln!(s, "jaccard_w{},{:.6}", w.w, w.jaccard);
        let _ = writeln!(s, "recall_w{},{:.6}", w.w, w.recall);
    }
    let _ = writeln!(s, "truncated,{}", agg.truncated);
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Label, points and colour of one plotted line.
type Series<'a> = (&'a str, Vec<(f64, f64)>, RGBColor);

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, format!("plot: {e}"))
}

fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    x_range: (f64, f64),
    series: &[Series],
) -> Result<()> {
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(44)
        .build_cartesian_2d(x_range.0..x_range.1, 0.0..1.0)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (name, pts, color) in series {
        let color = *color;
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Draws `topn.svg` (accuracy against n) and `windows.svg` (Jaccard and
/// recall against w) into `dir`.
pub fn write_plots(agg: &Aggregates, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !agg.topn.is_empty() {
        let pts: Vec<(f64, f64)> = agg.topn.iter().map(|&(n, a)| (n as f64, a)).collect();
        let hi = pts.last().map_or(1.0, |p| p.0).max(2.0);
        line_plot(
            &dir.join("topn.svg"),
            "Top-n accuracy",
            "n",
            (1.0, hi),
            &[("accuracy", pts, BLUE)],
        )?;
    }
    if !agg.windows.is_empty() {
        let j = agg.windows.iter().map(|w| (w.w, w.jaccard)).collect();
        let r = agg.windows.iter().map(|w| (w.w, w.recall)).collect();
        let lo = agg.windows.iter().map(|w| w.w).fold(f64::INFINITY, f64::min);
        let hi = agg.windows.iter().map(|w| w.w).fold(f64::NEG_INFINITY, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        line_plot(
            &dir.join("windows.svg"),
            "Windowed localization",
            "w (s)",
            (lo, hi),
            &[("jaccard", j, BLUE), ("recall", r, RED)],
        )?;
    }
    Ok(())
}
