//! A static SVG chart of budget against target on log axes.

use std::fmt::Write;

use crate::campaign::{Learner, SweepRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn log_span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.log10()), hi.max(v.log10())));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// One polyline per learner; cells without a found budget are skipped.
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let found: Vec<(&SweepRow, f64)> = rows.iter().filter_map(|r| r.budget_found.map(|b| (r, b as f64))).collect();
    let (ex0, ex1) = log_span(rows.iter().map(|r| r.eps));
    let (by0, by1) = log_span(found.iter().map(|(_, b)| *b));
    let px = |eps: f64| MARGIN + (eps.log10() - ex0) / (ex1 - ex0) * (WIDTH - 2.0 * MARGIN);
    let py = |b: f64| HEIGHT - MARGIN - (b.log10() - by0) / (by1 - by0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" stroke="black" fill="none"/>"#);
    for e in (ex0 as i32)..=(ex1 as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">1e{e}</text>"#, y1 + 18.0);
    }
    for b in (by0 as i32)..=(by1 as i32) {
        let y = py(10f64.powi(b));
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">1e{b}</text>"#, x0 - 6.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">target excess error</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(svg, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">labels</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);

    for (i, (learner, color)) in [(Learner::Active, "#1f77b4"), (Learner::Passive, "#d62728")].into_iter().enumerate() {
        let pts: Vec<(f64, f64)> = found
            .iter()
            .filter(|(r, _)| r.learner == learner)
            .map(|(r, b)| (px(r.eps), py(*b)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="2"/>"#, path.join(" "));
        for (x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
        }
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, x1 - 60.0, learner.name());
    }
    svg.push_str("</svg>\n");
    svg
}
