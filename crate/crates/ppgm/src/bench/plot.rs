//! SVG line plots of gap series on a log scale.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};

const PALETTE: [RGBColor; 5] = [
    RGBColor(214, 69, 65),
    RGBColor(31, 119, 180),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
];

/// One curve per algorithm, `y` on a log₁₀ axis.
pub fn write_gap_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    if series.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(Error::Plot("no points to plot".into()));
    }
    let x_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(x, _)| *x))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in series {
        for (_, y) in pts {
            y_min = y_min.min(*y);
            y_max = y_max.max(*y);
        }
    }
    let y_min = y_min.max(1e-17);
    let y_max = (y_max * 10.0).max(y_min * 10.0);

    let path_str = path
        .to_str()
        .ok_or_else(|| Error::Plot("non-utf8 output path".into()))?
        .to_owned();
    let root = SVGBackend::new(&path_str, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| Error::Plot(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(42)
        .y_label_area_size(64)
        .build_cartesian_2d(0.0..x_max, (y_min..y_max).log_scale())
        .map_err(|e| Error::Plot(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc("objective gap")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(|e| Error::Plot(e.to_string()))?;

    for (i, (name, pts)) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| Error::Plot(e.to_string()))?
            .label(name.clone())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()
        .map_err(|e| Error::Plot(e.to_string()))?;
    root.present().map_err(|e| Error::Plot(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.svg");
        let series = vec![
            (
                "a".to_string(),
                (0..50).map(|i| (i as f64, 10f64.powf(-(i as f64) / 5.0))).collect(),
            ),
            (
                "b".to_string(),
                (0..50).map(|i| (i as f64, 10f64.powf(-(i as f64) / 9.0))).collect(),
            ),
        ];
        write_gap_plot(&path, "test", "iteration", &series).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // crude well-formedness: every opened tag type also closes or self-closes
        assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());
    }
}
