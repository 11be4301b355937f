//! Self-contained SVG emission for log-log convergence plots.

use std::fmt::Write as _;

pub struct LogLogPlot {
    pub title: String,
    /// (eps, error) data points
    pub points: Vec<(f64, f64)>,
    pub fit_slope: f64,
    pub fit_intercept: f64,
    /// reference slope guide lines
    pub reference_slopes: Vec<f64>,
    /// suppress the generation comment for byte-identical reruns
    pub reproducible: bool,
    pub timestamp: Option<String>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn path_of(points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let _ = write!(s, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x, y);
    }
    s
}

impl LogLogPlot {
    pub fn render(&self) -> String {
        let xs: Vec<f64> = self.points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.1.max(1e-300).ln()).collect();
        let (xmin, xmax) = bounds(&xs, 0.15);
        let (ymin, ymax) = bounds(&ys, 0.25);
        let sx = |x: f64| MARGIN + (x - xmin) / (xmax - xmin) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - ymin) / (ymax - ymin) * (H - 2.0 * MARGIN);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        if !self.reproducible {
            if let Some(ts) = &self.timestamp {
                let _ = writeln!(svg, "<!-- generated {ts} -->");
            }
        }
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="24" font-family="monospace" font-size="15" text-anchor="middle">{}</text>"#,
            W / 2.0,
            xml_escape(&self.title)
        );
        // axes
        let _ = writeln!(
            svg,
            r#"<path d="M{:.1},{:.1} L{:.1},{:.1} L{:.1},{:.1}" stroke="black" fill="none"/>"#,
            MARGIN,
            MARGIN,
            MARGIN,
            H - MARGIN,
            W - MARGIN,
            H - MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12" text-anchor="middle">eps (log)</text>"#,
            W / 2.0,
            H - 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" font-family="monospace" font-size="12" transform="rotate(-90 16 {:.1})" text-anchor="middle">error (log)</text>"#,
            H / 2.0,
            H / 2.0
        );
        // tick labels at the data points
        for (x, _) in &self.points {
            let px = sx(x.ln());
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#999"/>"##,
                H - MARGIN,
                H - MARGIN + 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{px:.1}" y="{:.1}" font-family="monospace" font-size="10" text-anchor="middle">{x:.4}</text>"#,
                H - MARGIN + 18.0
            );
        }
        // reference slope guides through the first data point
        for (k, slope) in self.reference_slopes.iter().enumerate() {
            let (x0, y0) = (xs[0], ys[0]);
            let pts: Vec<(f64, f64)> = [xmin, xmax]
                .iter()
                .map(|&x| (sx(x), sy(y0 + slope * (x - x0))))
                .collect();
            let dash = ["6 3", "2 3", "8 2"][k % 3];
            let _ = writeln!(
                svg,
                r##"<path d="{}" stroke="#888" stroke-dasharray="{dash}" fill="none"/>"##,
                path_of(&pts)
            );
            let _ = writeln!(
                svg,
                r##"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="11" fill="#555">slope {slope}</text>"##,
                sx(xmax) - 70.0,
                sy(y0 + slope * (xmax - x0)) - 4.0
            );
        }
        // fitted line
        let fit_pts: Vec<(f64, f64)> = [xmin, xmax]
            .iter()
            .map(|&x| (sx(x), sy(self.fit_slope * x + self.fit_intercept)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<path d="{}" stroke="#c22" stroke-width="1.5" fill="none"/>"##,
            path_of(&fit_pts)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="40" font-family="monospace" font-size="12" fill="#c22" text-anchor="middle">fit slope {:.4}</text>"##,
            W / 2.0,
            self.fit_slope
        );
        // data points
        for (x, y) in &self.points {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#226" />"##,
                sx(x.ln()),
                sy(y.max(1e-300).ln())
            );
        }
        let _ = writeln!(svg, "</svg>");
        svg
    }
}

fn bounds(vals: &[f64], pad: f64) -> (f64, f64) {
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    (lo - pad * span, hi + pad * span)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
