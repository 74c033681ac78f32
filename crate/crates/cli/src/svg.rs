//! Static SVG plots of profile curves in the (x, r) half-plane: x to the
//! right, r up, equal scale on both axes.

use std::fmt::Write;

pub struct Curve {
    pub points: Vec<[f64; 2]>,
    pub color: &'static str,
    pub label: String,
}

pub struct Plot {
    pub title: String,
    pub curves: Vec<Curve>,
    /// Radius of the dashed reference circle about the origin.
    pub reference_radius: Option<f64>,
}

const WIDTH: f64 = 720.0;
const MARGIN: f64 = 48.0;

impl Plot {
    pub fn render(&self) -> String {
        let mut xmin = 0.0f64;
        let mut xmax = 0.0f64;
        let mut rmax = 0.0f64;
        for c in &self.curves {
            for p in &c.points {
                xmin = xmin.min(p[0]);
                xmax = xmax.max(p[0]);
                rmax = rmax.max(p[1]);
            }
        }
        if let Some(rr) = self.reference_radius {
            xmin = xmin.min(-rr);
            xmax = xmax.max(rr);
            rmax = rmax.max(rr);
        }
        let pad = 0.05 * (xmax - xmin).max(rmax).max(1e-9);
        let (xmin, xmax, rmax) = (xmin - pad, xmax + pad, rmax + pad);
        let scale = (WIDTH - 2.0 * MARGIN) / (xmax - xmin);
        let height = rmax * scale + 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - xmin) * scale;
        let sy = |r: f64| height - MARGIN - r * scale;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(&self.title));

        // Axes: the x-axis (r = 0) and the r-axis (x = 0).
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            sx(xmin),
            sy(0.0),
            sx(xmax),
            sy(0.0)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1"/>"#,
            sx(0.0),
            sy(0.0),
            sx(0.0),
            sy(rmax)
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">x</text>"#, sx(xmax) - 10.0, sy(0.0) + 16.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">r</text>"#, sx(0.0) + 6.0, sy(rmax) + 12.0);

        // Unit ticks.
        let step = tick_step(xmax - xmin);
        let mut t = (xmin / step).ceil() * step;
        while t <= xmax {
            let _ = writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/>"#, sx(t), sy(0.0), sy(0.0) + 4.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
                sx(t),
                sy(0.0) + 16.0,
                fmt_tick(t)
            );
            t += step;
        }
        let mut t = step;
        while t <= rmax {
            let _ = writeln!(out, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/>"#, sx(0.0) - 4.0, sy(t), sx(0.0));
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
                sx(0.0) - 6.0,
                sy(t) + 3.0,
                fmt_tick(t)
            );
            t += step;
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">1 unit = {:.1} px</text>"#,
            WIDTH - MARGIN,
            height - 8.0,
            scale
        );

        if let Some(rr) = self.reference_radius {
            let _ = writeln!(
                out,
                r#"<path d="M {:.2} {:.2} A {r:.2} {r:.2} 0 0 1 {:.2} {:.2}" fill="none" stroke="gray" stroke-dasharray="4 3"/>"#,
                sx(-rr),
                sy(0.0),
                sx(rr),
                sy(0.0),
                r = rr * scale
            );
        }

        for (k, c) in self.curves.iter().enumerate() {
            if c.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, p) in c.points.iter().enumerate() {
                let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M " } else { "L " }, sx(p[0]), sy(p[1]));
            }
            let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, d.trim_end(), c.color);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
                WIDTH - MARGIN - 160.0,
                40.0 + 14.0 * k as f64,
                c.color,
                escape(&c.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{:.3}", t);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub const PALETTE: [&str; 6] = ["#c0392b", "#2471a3", "#1e8449", "#b9770e", "#7d3c98", "#212f3d"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_axes_circle_and_curves() {
        let plot = Plot {
            title: "a < b".into(),
            curves: vec![Curve { points: vec![[0.0, 1.0], [1.0, 0.5]], color: PALETTE[0], label: "c".into() }],
            reference_radius: Some(1.5),
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("1 unit ="));
    }

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(tick_step(8.0), 1.0);
        assert_eq!(tick_step(3.0), 0.5);
        assert_eq!(fmt_tick(-0.0), "0");
        assert_eq!(fmt_tick(2.5), "2.5");
    }
}
