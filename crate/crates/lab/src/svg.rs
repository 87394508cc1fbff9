//! Minimal hand-emitted SVG. Coordinates are printed with two decimals so
//! identical inputs give identical bytes.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions at a 1-2-5 step covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let digits = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let s = format!("{v:.digits$}");
    if s == "-0" || s.starts_with("-0.") && s.trim_start_matches("-0.").chars().all(|c| c == '0') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Pads a data range so a constant series still gets a visible axis.
pub fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

pub struct Plot {
    body: String,
    legend: Vec<(String, String, bool)>,
    x: (f64, f64),
    y: (f64, f64),
    title: String,
    xlabel: String,
    ylabel: String,
}

impl Plot {
    pub fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            body: String::new(),
            legend: Vec::new(),
            x,
            y,
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool, label: Option<&str>) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dashed { " stroke-dasharray=\"2,4\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{dash} points=\"{}\"/>",
            coords.join(" ")
        );
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string(), false));
        }
    }

    pub fn points(&mut self, pts: &[(f64, f64)], color: &str, label: Option<&str>) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.body,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
                self.px(x),
                self.py(y)
            );
        }
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string(), true));
        }
    }

    /// Unconnected segments, one `M…L…` pair each.
    pub fn segments(&mut self, segs: &[((f64, f64), (f64, f64))], color: &str, width: f64) {
        if segs.is_empty() {
            return;
        }
        let mut d = String::new();
        for &((x0, y0), (x1, y1)) in segs {
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", self.px(x0), self.py(y0), self.px(x1), self.py(y1));
        }
        let _ = writeln!(self.body, "<path fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" d=\"{d}\"/>");
    }

    pub fn note(&mut self, text: &str) {
        self.legend.push((text.to_string(), String::new(), false));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            (LEFT + WIDTH - RIGHT) / 2.0,
            esc(&self.title)
        );
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            s,
            "<rect x=\"{x0}\" y=\"{y1}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
            x1 - x0,
            y0 - y1
        );
        let xt = nice_ticks(self.x.0, self.x.1, 6);
        let xstep = if xt.len() > 1 { xt[1] - xt[0] } else { 1.0 };
        for t in &xt {
            let p = self.px(*t);
            let _ = writeln!(s, "<line x1=\"{p:.2}\" y1=\"{y0}\" x2=\"{p:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", y0 + 4.0);
            let _ = writeln!(
                s,
                "<text x=\"{p:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                y0 + 16.0,
                tick_label(*t, xstep)
            );
        }
        let yt = nice_ticks(self.y.0, self.y.1, 6);
        let ystep = if yt.len() > 1 { yt[1] - yt[0] } else { 1.0 };
        for t in &yt {
            let p = self.py(*t);
            let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{p:.2}\" x2=\"{x0}\" y2=\"{p:.2}\" stroke=\"black\"/>", x0 - 4.0);
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                x0 - 7.0,
                p + 4.0,
                tick_label(*t, ystep)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            (x0 + x1) / 2.0,
            HEIGHT - 15.0,
            esc(&self.xlabel)
        );
        let _ = writeln!(
            s,
            "<text transform=\"translate(18,{:.2}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
            (y0 + y1) / 2.0,
            esc(&self.ylabel)
        );
        let _ = writeln!(s, "<clipPath id=\"plot-area\"><rect x=\"{x0}\" y=\"{y1}\" width=\"{:.2}\" height=\"{:.2}\"/></clipPath>", x1 - x0, y0 - y1);
        let _ = writeln!(s, "<g clip-path=\"url(#plot-area)\">");
        s.push_str(&self.body);
        let _ = writeln!(s, "</g>");
        for (i, (label, color, dot)) in self.legend.iter().enumerate() {
            let y = TOP + 12.0 + 16.0 * i as f64;
            let lx = x1 + 10.0;
            if color.is_empty() {
                let _ = writeln!(s, "<text x=\"{lx:.2}\" y=\"{y:.2}\">{}</text>", esc(label));
                continue;
            }
            if *dot {
                let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>", lx + 8.0, y - 4.0);
            } else {
                let _ = writeln!(
                    s,
                    "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
                    y - 4.0,
                    lx + 16.0,
                    y - 4.0
                );
            }
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>", lx + 22.0, esc(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Contour segments of a scalar field sampled on a rectilinear grid
/// (`values[j][i]` at `(xs[i], ys[j])`), by marching squares. Saddle cells are
/// resolved by the cell-centre average.
pub fn contour_segments(xs: &[f64], ys: &[f64], values: &[Vec<f64>], level: f64) -> Vec<((f64, f64), (f64, f64))> {
    let mut out = Vec::new();
    let lerp = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        let t = if b.2 == a.2 { 0.5 } else { (level - a.2) / (b.2 - a.2) };
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    };
    for j in 0..ys.len().saturating_sub(1) {
        for i in 0..xs.len().saturating_sub(1) {
            // corners counter-clockwise from bottom-left
            let c = [
                (xs[i], ys[j], values[j][i]),
                (xs[i + 1], ys[j], values[j][i + 1]),
                (xs[i + 1], ys[j + 1], values[j + 1][i + 1]),
                (xs[i], ys[j + 1], values[j + 1][i]),
            ];
            let above: Vec<bool> = c.iter().map(|p| p.2 > level).collect();
            let crossings: Vec<usize> = (0..4).filter(|&e| above[e] != above[(e + 1) % 4]).collect();
            let pt = |e: usize| lerp(c[e], c[(e + 1) % 4]);
            match crossings.len() {
                2 => out.push((pt(crossings[0]), pt(crossings[1]))),
                4 => {
                    let centre = c.iter().map(|p| p.2).sum::<f64>() / 4.0;
                    // pair edges so that the centre's side stays connected
                    if (centre > level) == above[0] {
                        out.push((pt(0), pt(1)));
                        out.push((pt(2), pt(3)));
                    } else {
                        out.push((pt(3), pt(0)));
                        out.push((pt(1), pt(2)));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_use_round_steps() {
        assert_eq!(nice_ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(nice_ticks(3.0, 3.0, 5), vec![3.0]);
        assert_eq!(tick_label(0.6000000000000001, 0.2), "0.6");
        assert_eq!(tick_label(-0.0, 0.5), "0.0");
    }

    #[test]
    fn circle_contour_has_radius_level() {
        let g: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let v: Vec<Vec<f64>> = g.iter().map(|&y| g.iter().map(|&x| x * x + y * y).collect()).collect();
        let segs = contour_segments(&g, &g, &v, 1.0);
        assert!(segs.len() > 20);
        for (a, b) in segs {
            for p in [a, b] {
                assert!(((p.0 * p.0 + p.1 * p.1).sqrt() - 1.0).abs() < 0.02);
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let mut p = Plot::new("t", "x", "y", (0.0, 1.0), (0.0, 1.0));
        p.polyline(&[(0.0, 0.0), (1.0, 1.0)], PALETTE[0], false, Some("a"));
        assert_eq!(p.render(), p.render());
        assert!(p.render().contains("points=\"70.00,365.00 490.00,40.00\""));
    }
}
