//! Heatmaps of sweep results.
//!
//! Colors ramp linearly in RGB from [`LOW`] at the smallest mean reward to
//! [`HIGH`] at the largest. Output depends only on the rows, so rendering
//! the same CSV twice gives identical bytes.

use std::fmt::Write;

use crate::artifacts::SweepRow;
use crate::error::{CliError, CliResult};

pub const LOW: [u8; 3] = [68, 1, 84];
pub const HIGH: [u8; 3] = [253, 231, 37];

const CELL: f64 = 24.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const LEGEND: f64 = 120.0;

pub fn ramp(t: f64) -> [u8; 3] {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut c = [0u8; 3];
    for k in 0..3 {
        c[k] = (LOW[k] as f64 + t * (HIGH[k] as f64 - LOW[k] as f64)).round() as u8;
    }
    c
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

fn position(axis: &[f64], value: f64) -> usize {
    axis.iter()
        .position(|a| (a - value).abs() < 1e-9)
        .expect("value taken from the same rows")
}

/// Renders `rows` as a lattice heatmap, x to the right and y upwards.
pub fn heatmap(rows: &[SweepRow], title: &str) -> CliResult<String> {
    if rows.is_empty() {
        return Err(CliError::Input("nothing to render: no rows".into()));
    }
    if rows.iter().any(|r| !r.mean_reward.is_finite()) {
        return Err(CliError::Input("non-finite reward in sweep rows".into()));
    }
    let xs = distinct(rows.iter().map(|r| r.x_param));
    let ys = distinct(rows.iter().map(|r| r.y_param));
    let lo = rows
        .iter()
        .map(|r| r.mean_reward)
        .fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.mean_reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let plot_w = xs.len() as f64 * CELL;
    let plot_h = ys.len() as f64 * CELL;
    let width = LEFT + plot_w + LEGEND;
    let height = TOP + plot_h + BOTTOM;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{LEFT}" y="24" font-size="14">{}</text>"#,
        escape(title)
    )
    .unwrap();

    for r in rows {
        let i = position(&xs, r.x_param);
        let j = position(&ys, r.y_param);
        let t = if span > 0.0 {
            (r.mean_reward - lo) / span
        } else {
            0.0
        };
        let [cr, cg, cb] = ramp(t);
        let x = LEFT + i as f64 * CELL;
        let y = TOP + (ys.len() - 1 - j) as f64 * CELL;
        writeln!(
            s,
            r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{cr:02x}{cg:02x}{cb:02x}"><title>({}, {}): {}</title></rect>"##,
            r.x_param, r.y_param, r.mean_reward
        )
        .unwrap();
    }

    let base = TOP + plot_h;
    for (i, x) in xs.iter().enumerate() {
        let cx = LEFT + (i as f64 + 0.5) * CELL;
        writeln!(
            s,
            r#"<text x="{cx}" y="{}" font-size="8" text-anchor="middle">{}</text>"#,
            base + 12.0,
            tick(*x)
        )
        .unwrap();
    }
    for (j, y) in ys.iter().enumerate() {
        let cy = TOP + (ys.len() - 1 - j) as f64 * CELL + CELL / 2.0 + 3.0;
        writeln!(
            s,
            r#"<text x="{}" y="{cy}" font-size="8" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            tick(*y)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">x_param</text>"#,
        LEFT + plot_w / 2.0,
        base + 32.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">y_param</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    // legend: a vertical ramp with the extremes written next to it
    let lx = LEFT + plot_w + 24.0;
    let steps = 32;
    let bar_h = plot_h.max(CELL * 4.0);
    for k in 0..steps {
        let t = 1.0 - k as f64 / (steps - 1) as f64;
        let [cr, cg, cb] = ramp(t);
        writeln!(
            s,
            r##"<rect x="{lx}" y="{}" width="16" height="{}" fill="#{cr:02x}{cg:02x}{cb:02x}"/>"##,
            TOP + k as f64 * bar_h / steps as f64,
            bar_h / steps as f64 + 0.5
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10">max {}</text>"#,
        lx + 20.0,
        TOP + 8.0,
        number(hi)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10">min {}</text>"#,
        lx + 20.0,
        TOP + bar_h,
        number(lo)
    )
    .unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    format!("{:.2}", v)
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

fn number(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<SweepRow> {
        let mut v = Vec::new();
        for j in 0..3 {
            for i in 0..4 {
                v.push(SweepRow {
                    x_param: 0.1 + 0.1 * i as f64,
                    y_param: 0.1 + 0.1 * j as f64,
                    mean_reward: (i * 3 + j) as f64 * 10.0,
                    n_eval: 1,
                });
            }
        }
        v
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), LOW);
        assert_eq!(ramp(1.0), HIGH);
        assert_eq!(ramp(-3.0), LOW);
        assert_eq!(ramp(f64::NAN), LOW);
    }

    #[test]
    fn one_rect_per_cell_and_extremes_annotated() {
        let svg = heatmap(&rows(), "t").unwrap();
        assert_eq!(svg.matches("<title>").count(), 12);
        assert!(svg.contains("max 110.00"));
        assert!(svg.contains("min 0.00"));
        assert!(svg.contains("#440154"));
        assert!(svg.contains("#fde725"));
        assert_eq!(svg, heatmap(&rows(), "t").unwrap());
    }

    #[test]
    fn constant_grid_renders() {
        let mut r = rows();
        for row in &mut r {
            row.mean_reward = 5.0;
        }
        let svg = heatmap(&r, "<flat>").unwrap();
        assert!(svg.contains("&lt;flat&gt;"));
        assert!(heatmap(&[], "x").is_err());
    }
}
