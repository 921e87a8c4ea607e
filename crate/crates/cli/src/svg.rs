//! Minimal SVG line plots for the report bundles. The x axis is the
//! confidence range [0.5, 1.0]; the y axis is [0, 1].

use std::fmt::Write as _;

pub struct Series {
    pub name: String,
    pub color: &'static str,
    /// (confidence, value) points, both already in plot coordinates.
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn x_pos(confidence: f64) -> f64 {
    MARGIN + (confidence - 0.5) / 0.5 * (WIDTH - 2.0 * MARGIN)
}

fn y_pos(value: f64) -> f64 {
    HEIGHT - MARGIN - value * (HEIGHT - 2.0 * MARGIN)
}

pub fn line_plot(title: &str, x_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{title}</text>"#,
        WIDTH / 2.0
    );
    // Axes.
    let _ = writeln!(
        out,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    );
    for i in 0..=5 {
        let confidence = 0.5 + 0.1 * i as f64;
        let x = x_pos(confidence);
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-size="11">{confidence:.1}</text>"#,
            HEIGHT - MARGIN + 18.0
        );
        let value = 0.2 * i as f64;
        let y = y_pos(value);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end" font-size="11">{value:.1}</text>"#,
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", x_pos(x), y_pos(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            path.join(" "),
            s.color
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                x_pos(x),
                y_pos(y),
                s.color
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 160.0,
            MARGIN + 16.0 * (i + 1) as f64,
            s.color,
            s.name
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Identity reference line for reliability plots.
pub fn identity_series() -> Series {
    Series {
        name: "identity".into(),
        color: "#999999",
        points: vec![(0.5, 0.5), (1.0, 1.0)],
    }
}
