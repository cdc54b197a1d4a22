use std::path::Path;

use anyhow::anyhow;
use fgatt::harness::SummaryRow;
use plotters::prelude::*;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// One line per model: seed mean of `metric` against the missing rate, with
/// one-standard-deviation bars.
pub fn metric_vs_rate(path: &Path, summary: &[SummaryRow], metric: &str, dataset: &str) -> anyhow::Result<()> {
    let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.metric == metric).collect();
    if rows.is_empty() {
        return Err(anyhow!("no {metric} rows to plot"));
    }
    let mut models: Vec<&str> = Vec::new();
    for r in &rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let x_lo = rows.iter().map(|r| r.missing_rate).fold(f64::INFINITY, f64::min);
    let x_hi = rows.iter().map(|r| r.missing_rate).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((x_hi - x_lo) * 0.05).max(0.02);
    let y_hi = rows.iter().map(|r| r.mean + r.std).fold(0.0, f64::max) * 1.1;
    let y_hi = if y_hi > 0.0 { y_hi } else { 1.0 };

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} vs missing rate ({dataset})", metric.to_uppercase()), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d((x_lo - pad)..(x_hi + pad), 0.0..y_hi)
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("missing rate")
        .y_desc(metric)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;

    for (i, model) in models.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<&SummaryRow> = rows.iter().copied().filter(|r| r.model == *model).collect();
        chart
            .draw_series(LineSeries::new(pts.iter().map(|r| (r.missing_rate, r.mean)), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(*model)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|r| {
                ErrorBar::new_vertical(r.missing_rate, r.mean - r.std, r.mean, r.mean + r.std, color.filled(), 6)
            }))
            .map_err(|e| anyhow!("{e}"))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperLeft)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}
