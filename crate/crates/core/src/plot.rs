//! SVG rendering of run artifacts.
//!
//! Everything is drawn from the CSV and field files in a run directory, so
//! plots can be regenerated without rerunning the experiment. Output is a
//! pure function of the inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::io;

pub const CALIBRATION_CSV: &str = "calibration_curve.csv";
pub const RECALIBRATED_CSV: &str = "recalibrated_curve.csv";
pub const INTERVALS_CSV: &str = "intervals.csv";
pub const PANEL_TRUTH: &str = "panel_truth.cdyn";
pub const PANEL_MEAN: &str = "panel_mean.cdyn";
pub const PANEL_SIGMA: &str = "panel_sigma.cdyn";

pub const PLOT_FILES: [&str; 4] = [
    "ordered_intervals.svg",
    "calibration.svg",
    "recalibrated.svg",
    "panel.svg",
];

const W: f64 = 420.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Numeric CSV with a header row.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty CSV"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(path, format!("line {}: non-numeric cell", n + 2)))?;
        if row.len() != header.len() {
            return Err(Error::format(
                path,
                format!("line {}: expected {} cells", n + 2, header.len()),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    Ok((header, rows))
}

fn column(path: &Path, header: &[String], rows: &[Vec<f64>], name: &str) -> Result<Vec<f64>> {
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::format(path, format!("missing column '{name}'")))?;
    Ok(rows.iter().map(|r| r[idx]).collect())
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        width / 2.0
    )
    .unwrap();
}

fn axes(out: &mut String, xlabel: &str, ylabel: &str) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN / 2.0 + 10.0);
    write!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xlabel}</text>\n\
         <text x=\"15\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.1})\">{ylabel}</text>\n",
        (x0 + x1) / 2.0,
        H - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();
}

struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.xmax - self.xmin).max(f64::MIN_POSITIVE);
        MARGIN + (x - self.xmin) / span * (W - 1.5 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.ymax - self.ymin).max(f64::MIN_POSITIVE);
        H - MARGIN - (y - self.ymin) / span * (H - 1.5 * MARGIN - 10.0)
    }
}

fn polyline(out: &mut String, frame: &Frame, xs: &[f64], ys: &[f64], color: &str, dashed: bool) {
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
        .collect();
    let dash = if dashed {
        " stroke-dasharray=\"5,4\""
    } else {
        ""
    };
    writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
        points.join(" ")
    )
    .unwrap();
}

/// Observed against expected proportion with the ideal diagonal.
pub fn calibration_svg(title: &str, expected: &[f64], observed: &[f64]) -> String {
    let frame = Frame {
        xmin: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
    };
    let mut out = String::new();
    header(&mut out, W, H, title);
    axes(&mut out, "expected proportion", "observed proportion");
    polyline(&mut out, &frame, &[0.0, 1.0], &[0.0, 1.0], "#888888", true);
    polyline(&mut out, &frame, expected, observed, "#1f77b4", false);
    out.push_str("</svg>\n");
    out
}

/// Predictions with `±z·sigma` bars, ordered by the true value.
pub fn intervals_svg(y: &[f64], mu: &[f64], sigma: &[f64], z: f64) -> String {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let lo = order
        .iter()
        .map(|&i| (mu[i] - z * sigma[i]).min(y[i]))
        .fold(f64::INFINITY, f64::min);
    let hi = order
        .iter()
        .map(|&i| (mu[i] + z * sigma[i]).max(y[i]))
        .fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame {
        xmin: 0.0,
        xmax: (y.len().max(2) - 1) as f64,
        ymin: lo,
        ymax: hi,
    };
    let mut out = String::new();
    header(&mut out, W, H, "Ordered prediction intervals");
    axes(&mut out, "index (ordered by truth)", "value");
    for (rank, &i) in order.iter().enumerate() {
        let x = frame.px(rank as f64);
        writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#aec7e8\"/>",
            frame.py(mu[i] - z * sigma[i]),
            frame.py(mu[i] + z * sigma[i])
        )
        .unwrap();
    }
    for (rank, &i) in order.iter().enumerate() {
        let x = frame.px(rank as f64);
        writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"#1f77b4\"/>",
            frame.py(mu[i])
        )
        .unwrap();
        writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"#ff7f0e\"/>",
            frame.py(y[i])
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

// Blue-white-red ramp on [-1, 1].
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = 1.0 + t;
        (s, s, 1.0)
    } else {
        let s = 1.0 - t;
        (1.0, s, s)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8
    )
}

/// Grid of heat maps, one row per label. Each row shares a symmetric
/// linear color scale set by its largest magnitude.
pub fn heatmap_grid_svg(rows: &[(&str, Vec<Field>)], columns: &[usize]) -> String {
    let size = rows
        .first()
        .and_then(|r| r.1.first())
        .map_or(1, Field::size);
    let cell = (96.0 / size as f64).max(1.0);
    let tile = cell * size as f64;
    let (left, top, gap) = (90.0, 40.0, 6.0);
    let width = left + columns.len() as f64 * (tile + gap);
    let height = top + rows.len() as f64 * (tile + gap);
    let mut out = String::new();
    header(&mut out, width, height, "Rollout panels");
    for (c, step) in columns.iter().enumerate() {
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">step {}</text>",
            left + c as f64 * (tile + gap) + tile / 2.0,
            top - 6.0,
            step + 1
        )
        .unwrap();
    }
    for (r, (label, fields)) in rows.iter().enumerate() {
        let y0 = top + r as f64 * (tile + gap);
        writeln!(
            out,
            "<text x=\"8\" y=\"{:.1}\">{label}</text>",
            y0 + tile / 2.0
        )
        .unwrap();
        let scale = columns
            .iter()
            .map(|&s| fields[s].max_abs())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        for (c, &step) in columns.iter().enumerate() {
            let x0 = left + c as f64 * (tile + gap);
            let f = &fields[step];
            for i in 0..size {
                for j in 0..size {
                    writeln!(
                        out,
                        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{}\"/>",
                        x0 + j as f64 * cell,
                        y0 + i as f64 * cell,
                        diverging(f.get(i, j) / scale)
                    )
                    .unwrap();
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Up to five rollout steps spread evenly, always including the last.
pub fn panel_columns(horizon: usize) -> Vec<usize> {
    let n = horizon.min(5);
    if n <= 1 {
        return vec![0; n];
    }
    (0..n).map(|k| k * (horizon - 1) / (n - 1)).collect()
}

fn curve_plot(dir: &Path, csv: &str, title: &str) -> Result<String> {
    let path = dir.join(csv);
    let (head, rows) = read_csv(&path)?;
    let expected = column(&path, &head, &rows, "expected")?;
    let observed = column(&path, &head, &rows, "observed")?;
    Ok(calibration_svg(title, &expected, &observed))
}

/// Renders every plot of a run directory and returns the written paths.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let calibration = curve_plot(dir, CALIBRATION_CSV, "Average calibration")?;
    let recalibrated = curve_plot(dir, RECALIBRATED_CSV, "Recalibrated calibration")?;

    let path = dir.join(INTERVALS_CSV);
    let (head, rows) = read_csv(&path)?;
    let y = column(&path, &head, &rows, "y")?;
    let mu = column(&path, &head, &rows, "mu")?;
    let sigma = column(&path, &head, &rows, "sigma")?;
    let z = column(&path, &head, &rows, "z")?[0];
    let intervals = intervals_svg(&y, &mu, &sigma, z);

    let truth = io::read_trajectory(&dir.join(PANEL_TRUTH))?.into_frames();
    let mean = io::read_trajectory(&dir.join(PANEL_MEAN))?.into_frames();
    let sigma = io::read_trajectory(&dir.join(PANEL_SIGMA))?.into_frames();
    if truth.len() != mean.len() || truth.len() != sigma.len() {
        return Err(Error::format(
            dir.join(PANEL_MEAN),
            "panel files disagree on step count",
        ));
    }
    let diff = truth
        .iter()
        .zip(&mean)
        .map(|(t, m)| t.abs_diff(m))
        .collect::<Result<Vec<_>>>()?;
    let columns = panel_columns(truth.len());
    let panel = heatmap_grid_svg(
        &[
            ("truth", truth),
            ("prediction", mean),
            ("|difference|", diff),
            ("sigma", sigma),
        ],
        &columns,
    );

    let mut written = Vec::new();
    for (name, svg) in PLOT_FILES
        .iter()
        .zip([intervals, calibration, recalibrated, panel])
    {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_ramp_endpoints() {
        assert_eq!(diverging(-1.0), "#0000ff");
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#ff0000");
        assert_eq!(diverging(7.0), "#ff0000");
    }

    #[test]
    fn panel_column_choice() {
        assert_eq!(panel_columns(10), vec![0, 2, 4, 6, 9]);
        assert_eq!(panel_columns(3), vec![0, 1, 2]);
    }

    #[test]
    fn empty_dir_names_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        match emit_plots(dir.path()).unwrap_err() {
            Error::MissingFile(p) => assert!(p.ends_with(CALIBRATION_CSV)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn corrupt_csv_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(CALIBRATION_CSV),
            "expected,observed\n0,zero\n",
        )
        .unwrap();
        assert!(matches!(emit_plots(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn calibration_plot_has_diagonal() {
        let svg = calibration_svg("t", &[0.0, 0.5, 1.0], &[0.0, 0.7, 1.0]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
    }
}
