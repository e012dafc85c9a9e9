//! Raw plot data (CSV) and minimal log-log SVG charts.

use std::fmt::Write as _;
use std::path::Path;

use super::report::{put, ManifestEntry, SweepKind, SweepReport};
use super::SweepError;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log scatter of `points` with an optional fitted line `a·x^α` and an
/// optional polyline through `line` (e.g. a frontier).
pub fn svg_loglog(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64)],
    fit: Option<(f64, f64)>,
    line: &[(f64, f64)],
) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{} (log)</text>"#, w / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{} (log)</text>"#,
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    if !pts.is_empty() {
        let lx = |x: f64| x.log10();
        let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(lx(p.0)), b.max(lx(p.0))));
        let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(lx(p.1)), b.max(lx(p.1))));
        if x1 - x0 < 1e-9 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |x: f64| pad + (lx(x) - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (lx(y) - y0) / (y1 - y0) * (h - 2.0 * pad);
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(*x), sy(*y));
        }
        if let Some((a, alpha)) = fit {
            let line: Vec<String> = (0..=40)
                .map(|i| {
                    let x = 10f64.powf(x0 + (x1 - x0) * i as f64 / 40.0);
                    format!("{:.2},{:.2}", sx(x), sy(a * x.powf(alpha)))
                })
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="firebrick" stroke-dasharray="6 4"/>"#, line.join(" "));
        }
        let env: Vec<String> = line
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !env.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, env.join(" "));
        }
        let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-size="10">{:.3e}</text>"#, h - pad + 14.0, 10f64.powf(x0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3e}</text>"#, w - pad, h - pad + 14.0, 10f64.powf(x1));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3e}</text>"#, pad - 4.0, h - pad, 10f64.powf(y0));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3e}</text>"#, pad - 4.0, pad + 10.0, 10f64.powf(y1));
    }
    s.push_str("</svg>\n");
    s
}

/// One `(x, m, fit(x))` CSV and one SVG per fitted law, plus a frontier
/// chart for compute sweeps.
pub fn emit_plot_data(report: &SweepReport, dir: &Path) -> Result<Vec<ManifestEntry>, SweepError> {
    let mut files = Vec::new();
    let resource = report.kind.resource();
    for law in &report.fits {
        let metric = &law.summary.metric;
        let mut csv = String::from("run_id,x,m,fit\n");
        for o in &law.observations {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                o.tags.run_id,
                o.x,
                o.m,
                law.fit.predict(o.x)
            );
        }
        let stem = format!("plots/{metric}_vs_{resource}");
        put(dir, &mut files, &format!("{stem}.csv"), "observations and fitted values", &csv)?;
        let pts: Vec<(f64, f64)> = law.observations.iter().map(|o| (o.x, o.m)).collect();
        let title = format!(
            "{metric} = {:.4}·{resource}^{:.4} (R² {:.3})",
            law.fit.a, law.fit.alpha, law.fit.r_squared
        );
        let svg = svg_loglog(&title, resource, metric, &pts, Some((law.fit.a, law.fit.alpha)), &[]);
        put(dir, &mut files, &format!("{stem}.svg"), "log-log chart", &svg)?;
    }
    if let (SweepKind::Compute, Some(f)) = (report.kind, &report.frontier) {
        let metric = &report.config.metric;
        let pts: Vec<(f64, f64)> = report
            .records
            .iter()
            .filter_map(|r| r.metrics.get(metric).map(|m| (r.tflops(), m)))
            .collect();
        let env: Vec<(f64, f64)> = f
            .envelope
            .iter()
            .map(|p| (p.flops_total / 1e12, p.best_metric))
            .collect();
        let svg = svg_loglog(&format!("{metric} vs compute"), "tflops", metric, &pts, None, &env);
        put(dir, &mut files, "plots/frontier.svg", "compute frontier chart", &svg)?;
    }
    Ok(files)
}
