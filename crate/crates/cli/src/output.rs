//! Result files: JSON documents, grid CSV matrices and SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use causal_density::Field;
use serde::Serialize;

use crate::CliError;

/// Collects the files a run writes into its output directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Config(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Registers a file written by other means.
    pub fn record(&mut self, name: &str) {
        self.written.push(name.to_owned());
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_owned());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn grid(&mut self, name: &str, quantity: &str, axis_names: [&str; 2], field: &Field) -> Result<PathBuf, CliError> {
        self.write(name, &grid_csv(quantity, axis_names, field))
    }
}

/// A 2-D field as a CSV matrix (rows along the first axis) behind a four-line
/// `#` header.
pub fn grid_csv(quantity: &str, axis_names: [&str; 2], field: &Field) -> String {
    let axes = field.axes();
    let mut s = String::new();
    writeln!(s, "# quantity={quantity}").unwrap();
    for (k, (axis, name)) in axes.iter().zip(axis_names).enumerate() {
        writeln!(
            s,
            "# axis{k}={name} start={} step={} n={}",
            axis.start(),
            axis.step(),
            axis.n_pixels()
        )
        .unwrap();
    }
    writeln!(s, "# rows={} columns={}", axis_names[0], axis_names[1]).unwrap();
    let ny = axes[1].n_pixels();
    for row in field.values().chunks(ny) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{}", line.join(",")).unwrap();
    }
    s
}

/// Reads a matrix written by [`grid_csv`], ignoring the header.
pub fn read_grid_csv(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}")))
                .collect()
        })
        .collect()
}

fn viridis(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let w = pos - i as f64;
    let mix = |a: f64, b: f64| (a + (b - a) * w).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_labels(s: &mut String, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) {
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    let text = |s: &mut String, x: f64, y: f64, anchor: &str, body: String| {
        writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>",
            escape(&body)
        )
        .unwrap();
    };
    text(s, WIDTH / 2.0, HEIGHT - 12.0, "middle", x_label.to_owned());
    text(s, MARGIN, HEIGHT - MARGIN + 14.0, "start", format!("{:.3}", x_range.0));
    text(s, WIDTH - MARGIN, HEIGHT - MARGIN + 14.0, "end", format!("{:.3}", x_range.1));
    text(s, MARGIN - 4.0, HEIGHT - MARGIN, "end", format!("{:.3}", y_range.0));
    text(s, MARGIN - 4.0, MARGIN + 10.0, "end", format!("{:.3}", y_range.1));
    writeln!(
        s,
        "<text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();
}

/// Heat map of a 2-D field, first axis horizontal.
pub fn heatmap_svg(title: &str, axis_names: [&str; 2], field: &Field) -> String {
    let axes = field.axes();
    let (nx, ny) = (axes[0].n_pixels(), axes[1].n_pixels());
    let v = field.values();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = ((WIDTH - 2.0 * MARGIN) / nx as f64, (HEIGHT - 2.0 * MARGIN) / ny as f64);
    let mut s = svg_open(title);
    for i in 0..nx {
        for j in 0..ny {
            let (r, g, b) = viridis((v[i * ny + j] - lo) / span);
            writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({r},{g},{b})\"/>",
                MARGIN + i as f64 * w,
                HEIGHT - MARGIN - (j + 1) as f64 * h,
                w + 0.05,
                h + 0.05
            )
            .unwrap();
        }
    }
    axis_labels(
        &mut s,
        axis_names[0],
        axis_names[1],
        (axes[0].start(), axes[0].end()),
        (axes[1].start(), axes[1].end()),
    );
    s.push_str("</svg>\n");
    s
}

/// Line plot of `mean` with a shaded `mean ± std` band.
pub fn line_svg(title: &str, x_label: &str, y_label: &str, x: &[f64], mean: &[f64], std: &[f64]) -> String {
    let lower: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m - s).collect();
    let upper: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m + s).collect();
    let x_lo = x.first().copied().unwrap_or(0.0);
    let x_hi = x.last().copied().unwrap_or(1.0);
    let y_lo = lower.iter().copied().fold(f64::INFINITY, f64::min);
    let y_hi = upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = if y_hi > y_lo { (y_lo, y_hi) } else { (y_lo - 0.5, y_lo + 0.5) };
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let px = |v: f64| MARGIN + (v - x_lo) / x_span * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let mut s = svg_open(title);
    let mut band: Vec<String> = x.iter().zip(&upper).map(|(a, b)| format!("{:.2},{:.2}", px(*a), py(*b))).collect();
    band.extend(x.iter().zip(&lower).rev().map(|(a, b)| format!("{:.2},{:.2}", px(*a), py(*b))));
    writeln!(s, "<polygon points=\"{}\" fill=\"#9ecae1\" stroke=\"none\"/>", band.join(" ")).unwrap();
    let line: Vec<String> = x.iter().zip(mean).map(|(a, b)| format!("{:.2},{:.2}", px(*a), py(*b))).collect();
    writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>",
        line.join(" ")
    )
    .unwrap();
    axis_labels(&mut s, x_label, y_label, (x_lo, x_hi), (y_lo, y_hi));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use causal_density::Grid1D;

    fn field() -> Field {
        let axes = vec![
            Grid1D::new(2, 0.0, 1.5, 2.0).unwrap(),
            Grid1D::new(3, 3.8, 0.25, 2.0).unwrap(),
        ];
        Field::new(axes, vec![0.1, 0.2, 0.3, 1e-17, 5.0, 6.25]).unwrap()
    }

    #[test]
    fn grid_csv_layout() {
        let text = grid_csv("joint_mean", ["x", "y"], &field());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "# quantity=joint_mean");
        assert_eq!(lines[1], "# axis0=x start=0 step=1.5 n=2");
        assert_eq!(lines[2], "# axis1=y start=3.8 step=0.25 n=3");
        assert_eq!(lines[3], "# rows=x columns=y");
        let m = read_grid_csv(&text).unwrap();
        assert_eq!(m, vec![vec![0.1, 0.2, 0.3], vec![1e-17, 5.0, 6.25]]);
    }

    #[test]
    fn svg_is_well_formed() {
        let s = heatmap_svg("a < b", ["x", "y"], &field());
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<rect x=").count(), 6 + 1);
        let l = line_svg("t", "x", "y", &[0.0, 1.0, 2.0], &[0.2, 0.3, 0.25], &[0.01, 0.02, 0.0]);
        assert!(l.contains("<polyline"));
        assert_eq!(viridis(0.0), (68, 1, 84));
        assert_eq!(viridis(1.0), (253, 231, 37));
    }
}
