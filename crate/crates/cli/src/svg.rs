//! Coverage-over-steps chart: per-algorithm mean with a standard-error band.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const POINTS: usize = 200;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Mean and standard error of the mean at every step.
pub fn mean_sem(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut sem = Vec::with_capacity(len);
    for t in 0..len {
        let m = curves.iter().map(|c| c[t]).sum::<f64>() / n;
        let var = if curves.len() > 1 {
            curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        sem.push((var / n).sqrt());
    }
    (mean, sem)
}

/// Renders one series per `(label, runs)` entry; each run is a coverage
/// curve in percent.
pub fn coverage_chart(title: &str, series: &[(String, Vec<Vec<f64>>)]) -> String {
    let steps = series
        .iter()
        .flat_map(|(_, runs)| runs.iter().map(Vec::len))
        .max()
        .unwrap_or(1)
        .max(2);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: usize| LEFT + plot_w * t as f64 / (steps - 1) as f64;
    let y = |c: f64| TOP + plot_h * (1.0 - c.clamp(0.0, 100.0) / 100.0);
    let stride = (steps / POINTS).max(1);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="14" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    for tick in (0..=100).step_by(20) {
        let ty = y(f64::from(tick));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            ty + 4.0
        );
    }
    for k in 0..=4 {
        let t = (steps - 1) * k / 4;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x(t),
            TOP + plot_h + 18.0,
            t + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">activity coverage (%)</text>"#,
        TOP + plot_h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for (i, (label, runs)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let (mean, sem) = mean_sem(runs);
        if mean.is_empty() {
            continue;
        }
        let mut idx: Vec<usize> = (0..mean.len()).step_by(stride).collect();
        if idx.last() != Some(&(mean.len() - 1)) {
            idx.push(mean.len() - 1);
        }
        let upper = idx
            .iter()
            .map(|&t| format!("{:.1},{:.1}", x(t), y(mean[t] + sem[t])));
        let lower = idx
            .iter()
            .rev()
            .map(|&t| format!("{:.1},{:.1}", x(t), y(mean[t] - sem[t])));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = idx
            .iter()
            .map(|&t| format!("{:.1},{:.1}", x(t), y(mean[t])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{} (n={})</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(label),
            runs.len()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sem() {
        let (m, e) = mean_sem(&[vec![0.0, 10.0], vec![2.0, 10.0]]);
        assert_eq!(m, vec![1.0, 10.0]);
        assert!((e[0] - (2.0f64).sqrt() / (2.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(e[1], 0.0);
        let (_, single) = mean_sem(&[vec![3.0]]);
        assert_eq!(single, vec![0.0]);
    }

    #[test]
    fn chart_has_one_band_and_line_per_series() {
        let runs = vec![vec![0.0, 50.0, 100.0], vec![0.0, 25.0, 50.0]];
        let svg = coverage_chart("a<b", &[("x".into(), runs.clone()), ("y".into(), runs)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }
}
