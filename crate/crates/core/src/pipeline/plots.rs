//! SVG renderings of the study tables. These are conveniences; the CSV tables
//! are the reference output.

use std::path::Path;

use plotters::prelude::*;

use super::report::StudyReport;
use crate::error::{Error, Result};
use crate::model::{plunger_capacitance, PhysicalConstants};
use crate::statistics::GateFamily;

const SIZE: (u32, u32) = (720, 480);

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: plotting failed: {e}", path.display()))
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.08).max(hi.abs() * 1e-3).max(1e-12);
    (lo - pad)..(hi + pad)
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// σ and σ̃ (mV) against gate-oxide thickness for both gate families.
pub fn plot_variability(report: &StudyReport, path: &Path) -> Result<()> {
    let Some(table) = &report.variability else {
        return Ok(());
    };
    let Some((t0, t1)) = bounds(table.points.iter().map(|p| p.t_gate)) else {
        return Ok(());
    };
    let (_, s1) = bounds(table.points.iter().map(|p| p.sigma.max(p.sigma_tilde) * 1e3)).unwrap();
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("threshold variability", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(padded(t0, t1), 0.0..s1 * 1.1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("gate oxide thickness (nm)")
        .y_desc("sigma (mV)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (family, color) in [(GateFamily::Plunger, BLUE), (GateFamily::Barrier, RED)] {
        let pts: Vec<_> = table.family(family).collect();
        let name = match family {
            GateFamily::Plunger => "plunger",
            GateFamily::Barrier => "barrier",
        };
        let tilde: Vec<(f64, f64)> = pts.iter().map(|p| (p.t_gate, p.sigma_tilde * 1e3)).collect();
        let raw: Vec<(f64, f64)> = pts.iter().map(|p| (p.t_gate, p.sigma * 1e3)).collect();
        chart
            .draw_series(LineSeries::new(tilde.clone(), color.stroke_width(2)))
            .map_err(|e| plot_err(path, e))?
            .label(format!("{name} sigma~"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart
            .draw_series(tilde.iter().map(|&p| Circle::new(p, 4, color.filled())))
            .map_err(|e| plot_err(path, e))?;
        chart
            .draw_series(raw.iter().map(|&p| Circle::new(p, 4, color.stroke_width(1))))
            .map_err(|e| plot_err(path, e))?
            .label(format!("{name} sigma"))
            .legend(move |(x, y)| Circle::new((x + 8, y), 4, color.stroke_width(1)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Probit plot of the plunger thresholds of every sample.
pub fn plot_cdf(report: &StudyReport, family: GateFamily, path: &Path) -> Result<()> {
    let series: Vec<_> = report.cdfs.iter().filter(|c| c.family == family).collect();
    let Some((v0, v1)) = bounds(series.iter().flat_map(|c| c.values.iter().copied())) else {
        return Ok(());
    };
    let (z0, z1) = bounds(series.iter().flat_map(|c| c.z.iter().copied())).unwrap();
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("threshold distributions", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(padded(v0, v1), padded(z0, z1))
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("threshold voltage (V)")
        .y_desc("z")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, c) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(
                c.values
                    .iter()
                    .zip(&c.z)
                    .map(|(&v, &z)| Circle::new((v, z), 2, color.filled())),
            )
            .map_err(|e| plot_err(path, e))?
            .label(c.sample.clone())
            .legend(move |(x, y)| Circle::new((x + 8, y), 3, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Row-shared and total diamond yield of each sample.
pub fn plot_yields(report: &StudyReport, path: &Path) -> Result<()> {
    let n = report.samples.len();
    if n == 0 {
        return Ok(());
    }
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let labels: Vec<String> = report.samples.iter().map(|s| s.label.clone()).collect();
    let mut chart = ChartBuilder::on(&root)
        .caption("diamond yield", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(-0.5..n as f64 - 0.5, 0.0..1.05)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < labels.len() {
                labels[i as usize].clone()
            } else {
                String::new()
            }
        })
        .y_desc("yield")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (k, (name, color)) in [("row-shared", BLUE), ("total", GREEN)].into_iter().enumerate() {
        let dx = if k == 0 { -0.35 } else { 0.0 };
        chart
            .draw_series(report.samples.iter().enumerate().map(|(i, s)| {
                let y = if k == 0 {
                    s.yields.row_shared_yield
                } else {
                    s.yields.total_yield
                };
                let x = i as f64 + dx;
                Rectangle::new([(x, 0.0), (x + 0.35, y)], color.filled())
            }))
            .map_err(|e| plot_err(path, e))?
            .label(name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

/// Mean plunger capacitance against t1 with the parallel-plate fit.
pub fn plot_capacitance(report: &StudyReport, path: &Path) -> Result<()> {
    let pts: Vec<(f64, f64)> = report.capacitance_points.iter().map(|p| (p.t1, p.mean_c_p)).collect();
    let Some((t0, t1)) = bounds(pts.iter().map(|p| p.0)) else {
        return Ok(());
    };
    let (c0, c1) = bounds(pts.iter().map(|p| p.1)).unwrap();
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let x = padded(t0, t1);
    let mut chart = ChartBuilder::on(&root)
        .caption("plunger capacitance", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(x.clone(), padded(c0, c1))
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("t1 (nm)")
        .y_desc("C_P (aF)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    chart
        .draw_series(pts.iter().map(|&p| Circle::new(p, 5, BLUE.filled())))
        .map_err(|e| plot_err(path, e))?;
    if let Some(fit) = report.capacitance {
        let k = PhysicalConstants::<f64>::si();
        let curve: Vec<(f64, f64)> = (0..=100)
            .map(|i| x.start + (x.end - x.start) * i as f64 / 100.0)
            .filter_map(|t| plunger_capacitance(fit.area, t + fit.delta2, &k).ok().map(|c| (t, c)))
            .collect();
        chart
            .draw_series(LineSeries::new(curve, BLACK.stroke_width(1)))
            .map_err(|e| plot_err(path, e))?;
    }
    root.present().map_err(|e| plot_err(path, e))
}

/// Writes every plot of the study into `dir`.
pub fn write_plots(report: &StudyReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    plot_variability(report, &dir.join("variability.svg"))?;
    plot_cdf(report, GateFamily::Plunger, &dir.join("cdf_plunger.svg"))?;
    plot_cdf(report, GateFamily::Barrier, &dir.join("cdf_barrier.svg"))?;
    plot_yields(report, &dir.join("yields.svg"))?;
    plot_capacitance(report, &dir.join("capacitance.svg"))
}
