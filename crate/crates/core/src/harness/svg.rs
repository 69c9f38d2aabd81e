//! Minimal static SVG charts: line plots and grouped bars.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 1500;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text transform=\"translate(16,{}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
        (LEFT + W - RIGHT) / 2.0,
        escape(title),
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        escape(xlabel),
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn axes(out: &mut String, (x0, x1): (f64, f64), (y0, y1): (f64, f64), xticks: bool) {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    write!(
        out,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n"
    )
    .unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = TOP + ph * (1.0 - f);
        write!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            tick(y0 + f * (y1 - y0))
        )
        .unwrap();
        if xticks {
            let x = LEFT + pw * f;
            write!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
                TOP + ph + 16.0,
                tick(x0 + f * (x1 - x0))
            )
            .unwrap();
        }
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 14.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        write!(
            out,
            "<rect x=\"{x}\" y=\"{:.2}\" width=\"12\" height=\"4\" fill=\"{}\"/>\n<text x=\"{}\" y=\"{y:.2}\">{}</text>\n",
            y - 6.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            escape(l)
        )
        .unwrap();
    }
}

/// Line chart; `hline` draws a dashed reference level.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], hline: Option<f64>) -> String {
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if let Some(h) = hline {
        y0 = y0.min(h);
        y1 = y1.max(h);
    }
    let (x0, x1) = span(x0, x1);
    let (y0, y1) = span(y0, y1);
    axes(&mut out, (x0, x1), (y0, y1), true);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |x: f64| LEFT + pw * (x - x0) / (x1 - x0);
    let py = |y: f64| TOP + ph * (1.0 - (y - y0) / (y1 - y0));
    for (i, s) in series.iter().enumerate() {
        let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
        let mut d = String::new();
        for &(x, y) in s.points.iter().step_by(stride).filter(|p| p.0.is_finite() && p.1.is_finite()) {
            write!(d, "{}{:.2},{:.2}", if d.is_empty() { "M" } else { " L" }, px(x), py(y)).unwrap();
        }
        write!(
            out,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            COLORS[i % COLORS.len()]
        )
        .unwrap();
    }
    if let Some(h) = hline {
        write!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n",
            py(h),
            LEFT + pw,
            py(h)
        )
        .unwrap();
    }
    legend(&mut out, &series.iter().map(|s| s.label.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group per category, one bar per named series.
pub fn bar_plot(title: &str, xlabel: &str, ylabel: &str, categories: &[String], groups: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    let top = groups
        .iter()
        .flat_map(|g| g.1.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let (y0, y1) = (0.0, if top > 0.0 { top } else { 1.0 });
    axes(&mut out, (0.0, 1.0), (y0, y1), false);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let slot = pw / categories.len().max(1) as f64;
    let bar = slot * 0.8 / groups.len().max(1) as f64;
    for (c, cat) in categories.iter().enumerate() {
        let cx = LEFT + slot * c as f64;
        write!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            cx + slot / 2.0,
            TOP + ph + 16.0,
            escape(cat)
        )
        .unwrap();
        for (g, (_, vals)) in groups.iter().enumerate() {
            let v = vals.get(c).copied().unwrap_or(0.0);
            let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
            let h = ph * (v - y0) / (y1 - y0);
            write!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bar:.2}\" height=\"{h:.2}\" fill=\"{}\"/>\n",
                cx + slot * 0.1 + bar * g as f64,
                TOP + ph - h,
                COLORS[g % COLORS.len()]
            )
            .unwrap();
        }
    }
    legend(&mut out, &groups.iter().map(|g| g.0.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed() {
        let s = Series {
            label: "a<b".into(),
            points: (0..5000).map(|i| (i as f64, (i as f64).sin())).collect(),
        };
        let svg = line_plot("t", "x", "y", &[s], Some(0.5));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_inputs_do_not_produce_nan() {
        let flat = Series { label: "c".into(), points: vec![(1.0, 2.0)] };
        assert!(!line_plot("t", "x", "y", &[flat], None).contains("NaN"));
        assert!(!line_plot("t", "x", "y", &[], None).contains("NaN"));
        let bars = bar_plot("t", "x", "y", &["1".into()], &[("g".into(), vec![0.0])]);
        assert!(!bars.contains("NaN"));
    }
}
