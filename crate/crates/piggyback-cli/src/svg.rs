//! Static semilog convergence charts: one 800 x 500 SVG per
//! (scenario, metric) with the median polyline and the shaded decile band.
//!
//! Output bytes are deterministic for identical input: coordinates are
//! formatted with fixed precision and series are sorted by iteration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::records::{CsvError, Metric, SummaryRow};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct LogAxis {
    lo: f64,
    hi: f64,
}

impl LogAxis {
    /// Decade-padded log10 range over the finite positive values; the
    /// documented fallback when none exist is [1, 10].
    fn from_values(values: impl Iterator<Item = f64>) -> (Self, bool) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if v.is_finite() && v > 0.0 {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return (LogAxis { lo: 0.0, hi: 1.0 }, true);
        }
        let lo = lo.log10().floor();
        let hi = hi.log10().ceil();
        if lo == hi {
            (LogAxis { lo, hi: lo + 1.0 }, false)
        } else {
            (LogAxis { lo, hi }, false)
        }
    }

    /// Vertical pixel for a value; nonpositive values clamp to the bottom
    /// edge, infinities to the top edge.
    fn y(&self, value: f64) -> f64 {
        let t = if value.is_infinite() && value > 0.0 {
            1.0
        } else if !(value > 0.0) || !value.is_finite() {
            0.0
        } else {
            ((value.log10() - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        };
        HEIGHT - MARGIN_BOTTOM - t * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn x_pixel(iter: u64, max_iter: u64) -> f64 {
    let t = if max_iter == 0 {
        0.0
    } else {
        iter as f64 / max_iter as f64
    };
    MARGIN_LEFT + t * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render one chart for rows that all share a scenario and metric, sorted by
/// iteration by the caller.
pub fn render_chart(scenario: &str, metric: Metric, rows: &[&SummaryRow]) -> String {
    let (axis, all_inf) = LogAxis::from_values(
        rows.iter()
            .flat_map(|r| [r.median, r.p10, r.p90].into_iter()),
    );
    let max_iter = rows.iter().map(|r| r.iter).max().unwrap_or(0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{} - {}</text>\n",
        fmt_px(WIDTH / 2.0),
        escape(scenario),
        metric
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = fmt_px(MARGIN_LEFT),
        r = fmt_px(WIDTH - MARGIN_RIGHT),
        t = fmt_px(MARGIN_TOP),
        b = fmt_px(HEIGHT - MARGIN_BOTTOM),
    ));

    // Decade ticks on the log axis, thinned when the range is wide.
    let decades = (axis.hi - axis.lo).round() as i64;
    let step = 1 + decades / 12;
    let mut d = axis.lo as i64;
    while d as f64 <= axis.hi {
        let y = axis.y(10f64.powi(d as i32));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"lightgray\"/>\n",
            fmt_px(MARGIN_LEFT),
            fmt_px(y),
            fmt_px(WIDTH - MARGIN_RIGHT),
            fmt_px(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{}</text>\n",
            fmt_px(MARGIN_LEFT - 6.0),
            fmt_px(y + 4.0),
            d
        ));
        d += step;
    }
    // A few x ticks.
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let iter = (max_iter as f64 * frac).round() as u64;
        let x = x_pixel(iter, max_iter);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt_px(x),
            fmt_px(HEIGHT - MARGIN_BOTTOM + 18.0),
            iter
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n",
        fmt_px((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt_px(HEIGHT - 12.0)
    ));

    if all_inf {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" fill=\"red\" text-anchor=\"middle\">warning: all values non-finite; axis fallback [1, 10]</text>\n",
            fmt_px(WIDTH / 2.0),
            fmt_px(HEIGHT / 2.0)
        ));
    }

    // Decile band: p10 forward, p90 reversed.
    if rows.len() > 1 {
        let mut pts = String::new();
        for r in rows {
            pts.push_str(&format!(
                "{},{} ",
                fmt_px(x_pixel(r.iter, max_iter)),
                fmt_px(axis.y(r.p10))
            ));
        }
        for r in rows.iter().rev() {
            pts.push_str(&format!(
                "{},{} ",
                fmt_px(x_pixel(r.iter, max_iter)),
                fmt_px(axis.y(r.p90))
            ));
        }
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"#aec7e8\" fill-opacity=\"0.45\" stroke=\"none\"/>\n",
            pts.trim_end()
        ));
    }

    // Median polyline.
    let mut pts = String::new();
    for r in rows {
        pts.push_str(&format!(
            "{},{} ",
            fmt_px(x_pixel(r.iter, max_iter)),
            fmt_px(axis.y(r.median))
        ));
    }
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
        pts.trim_end()
    ));

    svg.push_str("</svg>\n");
    svg
}

/// One SVG per (scenario, metric) under `dir`, named
/// `<scenario>_<metric>.svg`; returns the written paths in order.
pub fn write_svg(summary: &[SummaryRow], dir: &Path) -> Result<Vec<PathBuf>, CsvError> {
    let keys: BTreeSet<(String, Metric)> = summary
        .iter()
        .map(|r| (r.scenario.clone(), r.metric))
        .collect();
    let mut written = Vec::new();
    for (scenario, metric) in keys {
        let mut rows: Vec<&SummaryRow> = summary
            .iter()
            .filter(|r| r.scenario == scenario && r.metric == metric)
            .collect();
        rows.sort_by_key(|r| r.iter);
        let content = render_chart(&scenario, metric, &rows);
        let path = dir.join(format!("{scenario}_{metric}.svg"));
        crate::records::write_file(&path, &content)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: u64, v: f64) -> SummaryRow {
        SummaryRow {
            scenario: "s".into(),
            iter,
            metric: Metric::IterateDist,
            median: v,
            p10: v,
            p90: v,
        }
    }

    fn polyline_points(svg: &str) -> Vec<(f64, f64)> {
        let start = svg.find("<polyline points=\"").unwrap() + "<polyline points=\"".len();
        let end = svg[start..].find('"').unwrap() + start;
        svg[start..end]
            .split_whitespace()
            .map(|pair| {
                let (x, y) = pair.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn constant_series_is_horizontal() {
        let rows: Vec<SummaryRow> = (0..5).map(|k| row(k, 0.5)).collect();
        let refs: Vec<&SummaryRow> = rows.iter().collect();
        let svg = render_chart("s", Metric::IterateDist, &refs);
        let pts = polyline_points(&svg);
        assert!(pts.windows(2).all(|w| w[0].1 == w[1].1));
    }

    #[test]
    fn geometric_series_is_straight_in_semilog() {
        let rows: Vec<SummaryRow> = (0..40).map(|k| row(k, 0.5f64.powi(k as i32))).collect();
        let refs: Vec<&SummaryRow> = rows.iter().collect();
        let svg = render_chart("s", Metric::IterateDist, &refs);
        let pts = polyline_points(&svg);
        let slope = (pts[1].1 - pts[0].1) / (pts[1].0 - pts[0].0);
        for w in pts.windows(2) {
            let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            assert!((s - slope).abs() < 0.05, "slope {s} vs {slope}");
        }
    }

    #[test]
    fn degenerate_band_has_zero_width() {
        let rows: Vec<SummaryRow> = (0..4).map(|k| row(k, 2.0f64.powi(-(k as i32)))).collect();
        let refs: Vec<&SummaryRow> = rows.iter().collect();
        let svg = render_chart("s", Metric::IterateDist, &refs);
        // Band polygon: p10 pass equals reversed p90 pass.
        let start = svg.find("<polygon points=\"").unwrap() + "<polygon points=\"".len();
        let end = svg[start..].find('"').unwrap() + start;
        let pts: Vec<&str> = svg[start..end].split_whitespace().collect();
        let n = pts.len() / 2;
        for i in 0..n {
            assert_eq!(pts[i], pts[pts.len() - 1 - i]);
        }
    }

    #[test]
    fn all_inf_series_warns_and_falls_back() {
        let rows: Vec<SummaryRow> = (0..3).map(|k| row(k, f64::INFINITY)).collect();
        let refs: Vec<&SummaryRow> = rows.iter().collect();
        let svg = render_chart("s", Metric::IterateDist, &refs);
        assert!(svg.contains("warning"));
        assert!(svg.contains("1e0"));
        assert!(svg.contains("1e1"));
    }

    #[test]
    fn deterministic_bytes() {
        let rows: Vec<SummaryRow> = (0..10).map(|k| row(k, 1.0 / (k + 1) as f64)).collect();
        let refs: Vec<&SummaryRow> = rows.iter().collect();
        let a = render_chart("s", Metric::IterateDist, &refs);
        let b = render_chart("s", Metric::IterateDist, &refs);
        assert_eq!(a, b);
    }
}
