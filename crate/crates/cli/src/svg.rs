//! Minimal SVG writer for the figures.

use std::fmt::Write;

/// Formats `x` with at most 9 significant digits.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(0.0);
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

/// A square plot mapping data coordinates onto a pixel canvas.
pub struct Plot {
    x_range: (f64, f64),
    y_range: (f64, f64),
    size: f64,
    margin: f64,
    body: String,
}

impl Plot {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), size: f64) -> Self {
        Plot { x_range, y_range, size, margin: 40.0, body: String::new() }
    }

    pub fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let inner = self.size - 2.0 * self.margin;
        let x = self.margin + (p[0] - self.x_range.0) / (self.x_range.1 - self.x_range.0) * inner;
        let y = self.margin + (self.y_range.1 - p[1]) / (self.y_range.1 - self.y_range.0) * inner;
        (x, y)
    }

    /// Pixels per data unit along x.
    pub fn unit(&self) -> f64 {
        (self.size - 2.0 * self.margin) / (self.x_range.1 - self.x_range.0)
    }

    pub fn axes(&mut self) {
        let (x0, y0) = self.px([self.x_range.0, self.y_range.0]);
        let (x1, y1) = self.px([self.x_range.1, self.y_range.1]);
        let _ = writeln!(
            self.body,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
            num(x0),
            num(y1),
            num(x1 - x0),
            num(y0 - y1)
        );
        if self.x_range.0 < 0.0 && self.x_range.1 > 0.0 {
            self.line([0.0, self.y_range.0], [0.0, self.y_range.1], "#ccc", 0.5);
        }
        if self.y_range.0 < 0.0 && self.y_range.1 > 0.0 {
            self.line([self.x_range.0, 0.0], [self.x_range.1, 0.0], "#ccc", 0.5);
        }
    }

    pub fn line(&mut self, a: [f64; 2], b: [f64; 2], color: &str, width: f64) {
        let (x1, y1) = self.px(a);
        let (x2, y2) = self.px(b);
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="{}"/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2),
            num(width)
        );
    }

    /// Arrow from `from` along `delta`, both in data units.
    pub fn arrow(&mut self, from: [f64; 2], delta: [f64; 2], color: &str) {
        let to = [from[0] + delta[0], from[1] + delta[1]];
        let (x1, y1) = self.px(from);
        let (x2, y2) = self.px(to);
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="1" marker-end="url(#head)"/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    pub fn polyline(&mut self, points: &[[f64; 2]], color: &str, dashed: bool) {
        let mut pts = String::new();
        for p in points {
            let (x, y) = self.px(*p);
            let _ = write!(pts, "{},{} ", num(x), num(y));
        }
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"{dash}/>"#,
            pts.trim_end()
        );
    }

    pub fn marker(&mut self, p: [f64; 2], color: &str, label: &str) {
        let (x, y) = self.px(p);
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="3.5" fill="{color}"/>"#, num(x), num(y));
        if !label.is_empty() {
            self.text([p[0], p[1]], label, 6.0, -6.0);
        }
    }

    pub fn text(&mut self, p: [f64; 2], label: &str, dx: f64, dy: f64) {
        let (x, y) = self.px(p);
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#,
            num(x + dx),
            num(y + dy),
            escape(label)
        );
    }

    pub fn title(&mut self, label: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="24" font-size="13" font-family="sans-serif" text-anchor="middle">{}</text>"#,
            num(self.size / 2.0),
            escape(label)
        );
    }

    pub fn finish(self) -> String {
        let s = num(self.size);
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
                "\n",
                r#"<defs><marker id="head" markerWidth="4" markerHeight="4" refX="3.5" refY="2" orient="auto">"#,
                r##"<path d="M0,0 L4,2 L0,4 z" fill="#1f4e9c"/></marker></defs>"##,
                "\n",
                r#"<rect width="100%" height="100%" fill="white"/>"#,
                "\n{body}</svg>\n"
            ),
            s = s,
            body = self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(0.1 + 0.2), "0.3");
        assert_eq!(num(1.0 / 3.0), "0.333333333");
        assert_eq!(num(123456.7891234), "123456.789");
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(2.0), "2");
    }

    #[test]
    fn corners_map_to_margins() {
        let p = Plot::new((-1.0, 1.0), (-1.0, 1.0), 500.0);
        assert_eq!(p.px([-1.0, 1.0]), (40.0, 40.0));
        assert_eq!(p.px([1.0, -1.0]), (460.0, 460.0));
    }

    #[test]
    fn document_is_closed() {
        let mut p = Plot::new((0.0, 1.0), (0.0, 1.0), 200.0);
        p.axes();
        p.arrow([0.5, 0.5], [0.1, 0.0], "black");
        p.marker([0.2, 0.2], "red", "a<b");
        let s = p.finish();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
    }
}
