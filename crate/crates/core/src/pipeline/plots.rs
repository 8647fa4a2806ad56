use std::fmt::Write as _;

use crate::stratify::SurvivalCurve;

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    let (x0, y0, x1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{MARGIN} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
}

fn legend(s: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#,
            W - 120.0,
            y - 9.0,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="11">{name}</text>"#,
            W - 105.0
        );
    }
}

/// Kaplan–Meier step lines, one per group.
pub fn km_svg(curves: &[(String, &SurvivalCurve)]) -> String {
    let mut s = String::new();
    header(&mut s, "Kaplan-Meier survival by risk group");
    let t_max = curves
        .iter()
        .map(|(_, c)| c.last_time())
        .fold(0.0, f64::max)
        .max(1.0);
    let sx = |t: f64| MARGIN + t / t_max * (W - 1.5 * MARGIN);
    let sy = |v: f64| (H - MARGIN) - v * (H - 2.0 * MARGIN);
    for (i, (_, c)) in curves.iter().enumerate() {
        let mut d = format!("M{:.2},{:.2}", sx(0.0), sy(1.0));
        let mut prev = 1.0;
        for p in &c.points {
            let _ = write!(d, " L{:.2},{:.2} L{:.2},{:.2}", sx(p.time), sy(prev), sx(p.time), sy(p.survival));
            prev = p.survival;
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            COLORS[i % COLORS.len()]
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">time (days)</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="11" transform="rotate(-90 14 {})" text-anchor="middle">survival probability</text>"#,
        H / 2.0,
        H / 2.0
    );
    let names: Vec<String> = curves.iter().map(|(n, _)| n.clone()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// t-SNE scatter coloured by cluster.
pub fn tsne_svg(coords: &[[f64; 2]], clusters: &[usize], names: &[String]) -> String {
    let mut s = String::new();
    header(&mut s, "t-SNE of latent features");
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in coords {
        for d in 0..2 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let span = |d: usize| (hi[d] - lo[d]).max(1e-12);
    for (c, &k) in coords.iter().zip(clusters) {
        let x = MARGIN + 8.0 + (c[0] - lo[0]) / span(0) * (W - 2.5 * MARGIN - 16.0);
        let y = (H - MARGIN - 8.0) - (c[1] - lo[1]) / span(1) * (H - 2.0 * MARGIN - 16.0);
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            COLORS[k % COLORS.len()]
        );
    }
    legend(&mut s, names);
    s.push_str("</svg>\n");
    s
}
