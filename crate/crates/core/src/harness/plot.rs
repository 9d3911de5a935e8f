//! SVG rendering of aggregated return curves.

use std::path::Path;

use plotters::prelude::*;

use crate::envs::EnvName;

use super::output::SummaryRow;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Draws mean curves with half-std bands, one line per summary row.
pub(crate) fn render(path: &Path, env: EnvName, rows: &[&SummaryRow]) -> Result<(), String> {
    let curves: Vec<(&SummaryRow, _)> = rows
        .iter()
        .filter_map(|r| r.curve.as_ref().map(|c| (*r, c)))
        .filter(|(_, c)| !c.steps.is_empty())
        .collect();
    if curves.is_empty() {
        return Err("no successful runs to draw".into());
    }
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.steps.iter().copied())
        .max()
        .unwrap_or(1) as f64;
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, c) in &curves {
        for (m, h) in c.mean.iter().zip(&c.half_std) {
            y_min = y_min.min(m - h);
            y_max = y_max.max(m + h);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        return Err("non-finite returns".into());
    }
    if y_max - y_min < 1e-9 {
        y_max += 1.0;
        y_min -= 1.0;
    }

    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    let err = |e: &dyn std::fmt::Display| e.to_string();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{env}: evaluation return"), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(0.0..x_max, y_min..y_max)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc("environment step")
        .y_desc("return")
        .draw()
        .map_err(|e| err(&e))?;

    for (i, (row, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = c.steps.iter().zip(c.mean.iter().zip(&c.half_std));
        let mut band: Vec<(f64, f64)> = upper.map(|(&s, (m, h))| (s as f64, m + h)).collect();
        band.extend(
            c.steps
                .iter()
                .zip(c.mean.iter().zip(&c.half_std))
                .rev()
                .map(|(&s, (m, h))| (s as f64, m - h)),
        );
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.18))))
            .map_err(|e| err(&e))?;
        let label = if row.strategy.selects_actor_batch() {
            format!("{} K={}", row.strategy, row.k)
        } else {
            row.strategy.to_string()
        };
        chart
            .draw_series(LineSeries::new(
                c.steps
                    .iter()
                    .map(|&s| s as f64)
                    .zip(c.mean.iter().copied()),
                color.stroke_width(2),
            ))
            .map_err(|e| err(&e))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
