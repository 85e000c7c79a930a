use std::fmt::Write as _;

use koopman_uq::ForecastDistribution;

const WIDTH: f64 = 640.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;

/// Maps (step, value) of one channel into its panel.
struct Panel {
    top: f64,
    lo: f64,
    hi: f64,
    steps: usize,
}

impl Panel {
    fn point(&self, t: usize, v: f64) -> String {
        let frac_t = t as f64 / (self.steps.max(2) - 1) as f64;
        let frac_v = (v - self.lo) / (self.hi - self.lo).max(1e-12);
        let x = MARGIN + frac_t * (WIDTH - 2.0 * MARGIN);
        let y = self.top + PANEL_H - MARGIN - frac_v * (PANEL_H - 2.0 * MARGIN);
        format!("{x:.2},{y:.2}")
    }

    fn line(&self, values: &[f64]) -> String {
        values.iter().enumerate().map(|(t, &v)| self.point(t, v)).collect::<Vec<_>>().join(" ")
    }
}

/// One panel per channel: the mean ± spread band, every member, the mean and
/// the truth. `truth` is `horizon × channels`, row-major.
pub fn forecast_svg(dist: &ForecastDistribution, truth: &[f64], names: &[String]) -> String {
    let (m, h, n) = (dist.size(), dist.horizon(), dist.channels());
    let height = PANEL_H * n as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for c in 0..n {
        let members: Vec<Vec<f64>> = (0..m).map(|j| (0..h).map(|t| dist.member(j, t, c)).collect()).collect();
        let mean: Vec<f64> = (0..h).map(|t| dist.mean(t, c)).collect();
        let spread: Vec<f64> = (0..h).map(|t| dist.spread(t, c)).collect();
        let truth_c: Vec<f64> = (0..h).map(|t| truth[t * n + c]).collect();
        let upper: Vec<f64> = mean.iter().zip(&spread).map(|(a, s)| a + s).collect();
        let lower: Vec<f64> = mean.iter().zip(&spread).map(|(a, s)| a - s).collect();
        let (lo, hi) = members
            .iter()
            .flatten()
            .chain(&truth_c)
            .chain(&upper)
            .chain(&lower)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let panel = Panel { top: PANEL_H * c as f64, lo, hi, steps: h };
        let band: Vec<String> = (0..h)
            .map(|t| panel.point(t, upper[t]))
            .chain((0..h).rev().map(|t| panel.point(t, lower[t])))
            .collect();
        let name = names.get(c).map(String::as_str).unwrap_or("");
        let _ = writeln!(svg, r#"<g class="channel" data-channel="{c}">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            panel.top + MARGIN / 2.0,
            escape(name)
        );
        let _ = writeln!(
            svg,
            r##"<polygon class="band" points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
            band.join(" ")
        );
        for (j, member) in members.iter().enumerate() {
            let _ = writeln!(
                svg,
                r##"<polyline class="member" data-member="{j}" points="{}" fill="none" stroke="#6baed6" stroke-width="0.8"/>"##,
                panel.line(member)
            );
        }
        let _ = writeln!(
            svg,
            r##"<polyline class="mean" points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
            panel.line(&mean)
        );
        let _ = writeln!(
            svg,
            r#"<polyline class="truth" points="{}" fill="none" stroke="black" stroke-dasharray="4 2"/>"#,
            panel.line(&truth_c)
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
