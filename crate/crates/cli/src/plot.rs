//! Static SVG cost curves: one panel per noise kind, mean cost per
//! controller over the horizon with a ±1 standard-deviation band.
//! Output bytes are deterministic for a given summary.

use std::fmt::Write as _;
use std::path::Path;

use sls_regret::evaluation::NoiseKind;

use crate::config::ControllerKind;
use crate::records::SummaryRow;
use crate::{CliError, Result};

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_B: f64 = 42.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_R: f64 = 14.0;
const COLS: usize = 4;

fn controller_color(c: ControllerKind) -> &'static str {
    match c {
        ControllerKind::Regret => "#d62728",
        ControllerKind::H2 => "#1f77b4",
        ControllerKind::Hinf => "#2ca02c",
        ControllerKind::Clairvoyant => "#7f7f7f",
    }
}

fn f(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the summary as an SVG grid and writes it to `path`.
pub fn emit_plot(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let svg = render_svg(rows)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(parent.display().to_string(), e))?;
        }
    }
    std::fs::write(path, svg).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Renders the SVG document for a nonempty summary.
pub fn render_svg(rows: &[SummaryRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(CliError::Config("empty summary; nothing to plot".into()));
    }
    // Panel per noise kind, in canonical noise order.
    let mut kinds: Vec<NoiseKind> = Vec::new();
    for k in NoiseKind::ALL {
        if rows.iter().any(|r| r.noise == k) && !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    let mut controllers: Vec<ControllerKind> = Vec::new();
    for c in ControllerKind::ALL {
        if rows.iter().any(|r| r.controller == c) {
            controllers.push(c);
        }
    }
    let n_panels = kinds.len();
    let cols = COLS.min(n_panels.max(1));
    let rows_grid = n_panels.div_ceil(cols);
    let width = cols as f64 * PANEL_W + 20.0;
    let height = rows_grid as f64 * PANEL_H + 46.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        f(width), f(height), f(width), f(height)
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>",
        f(width),
        f(height)
    );
    // Legend.
    let mut lx = 16.0;
    for c in &controllers {
        let _ = write!(
            svg,
            "<rect x=\"{}\" y=\"10\" width=\"18\" height=\"4\" fill=\"{}\"/>\n<text x=\"{}\" y=\"17\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            f(lx), controller_color(*c), f(lx + 24.0), c
        );
        lx += 130.0;
    }

    for (pi, kind) in kinds.iter().enumerate() {
        let px = (pi % cols) as f64 * PANEL_W + 10.0;
        let py = (pi / cols) as f64 * PANEL_H + 36.0;
        render_panel(&mut svg, rows, &controllers, *kind, px, py);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn render_panel(
    svg: &mut String,
    rows: &[SummaryRow],
    controllers: &[ControllerKind],
    kind: NoiseKind,
    px: f64,
    py: f64,
) {
    let inner_w = PANEL_W - MARGIN_L - MARGIN_R;
    let inner_h = PANEL_H - MARGIN_T - MARGIN_B;
    let panel: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| r.noise == kind && r.mean_cost.is_finite())
        .collect();
    let t_min = panel.iter().map(|r| r.horizon).min().unwrap_or(2) as f64;
    let t_max = panel.iter().map(|r| r.horizon).max().unwrap_or(3) as f64;
    let mut y_max = 0.0f64;
    for r in &panel {
        let sd = if r.sd_cost.is_finite() {
            r.sd_cost
        } else {
            0.0
        };
        y_max = y_max.max(r.mean_cost + sd);
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    let y_max = y_max * 1.05;
    let x_of = |t: f64| px + MARGIN_L + (t - t_min) / (t_max - t_min).max(1.0) * inner_w;
    let y_of = |v: f64| py + MARGIN_T + (1.0 - (v / y_max).clamp(0.0, 1.0)) * inner_h;

    // Frame and labels.
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>",
        f(px + MARGIN_L), f(py + MARGIN_T), f(inner_w), f(inner_h)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{kind}</text>",
        f(px + MARGIN_L + inner_w / 2.0), f(py + MARGIN_T - 8.0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">T</text>",
        f(px + MARGIN_L + inner_w / 2.0), f(py + PANEL_H - 10.0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">mean cost</text>",
        f(px + 14.0), f(py + MARGIN_T + inner_h / 2.0), f(px + 14.0), f(py + MARGIN_T + inner_h / 2.0)
    );
    // Axis extremes.
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
        f(x_of(t_min)), f(py + MARGIN_T + inner_h + 14.0), t_min as usize
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
        f(x_of(t_max)), f(py + MARGIN_T + inner_h + 14.0), t_max as usize
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
        f(px + MARGIN_L - 4.0), f(y_of(y_max / 1.05) + 4.0), format_sig(y_max / 1.05)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">0</text>",
        f(px + MARGIN_L - 4.0), f(y_of(0.0) + 4.0)
    );

    for c in controllers {
        let mut pts: Vec<(f64, f64, f64)> = panel
            .iter()
            .filter(|r| r.controller == *c)
            .map(|r| {
                let sd = if r.sd_cost.is_finite() {
                    r.sd_cost
                } else {
                    0.0
                };
                (r.horizon as f64, r.mean_cost, sd)
            })
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite horizons"));
        if pts.is_empty() {
            continue;
        }
        let color = controller_color(*c);
        if pts.len() > 1 {
            // ±1 sd band.
            let mut band = String::new();
            for (t, m, sd) in &pts {
                let _ = write!(band, "{},{} ", f(x_of(*t)), f(y_of(m + sd)));
            }
            for (t, m, sd) in pts.iter().rev() {
                let _ = write!(band, "{},{} ", f(x_of(*t)), f(y_of((m - sd).max(0.0))));
            }
            let _ = writeln!(
                svg,
                "<polygon points=\"{}\" fill=\"{}\" opacity=\"0.15\"/>",
                band.trim_end(),
                color
            );
            let mut line = String::new();
            for (t, m, _) in &pts {
                let _ = write!(line, "{},{} ", f(x_of(*t)), f(y_of(*m)));
            }
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"/>",
                line.trim_end(),
                color
            );
        } else {
            let (t, m, _) = pts[0];
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>",
                f(x_of(t)),
                f(y_of(m)),
                color
            );
        }
    }
}

fn format_sig(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else if v >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(
        controller: ControllerKind,
        horizon: usize,
        noise: NoiseKind,
        mean: f64,
        sd: f64,
    ) -> SummaryRow {
        SummaryRow {
            scenario: "synthetic-stable".into(),
            controller,
            horizon,
            noise,
            mean_cost: mean,
            sd_cost: sd,
            trials: 10,
            infeasible: 0,
        }
    }

    #[test]
    fn single_point_renders_marker() {
        let rows = vec![row(
            ControllerKind::Regret,
            5,
            NoiseKind::Gaussian,
            3.0,
            0.5,
        )];
        let svg = render_svg(&rows).unwrap();
        assert!(svg.contains("<circle"));
        assert!(svg.contains("gaussian"));
    }

    #[test]
    fn deterministic_bytes() {
        let rows = vec![
            row(ControllerKind::Regret, 2, NoiseKind::Gaussian, 3.0, 0.5),
            row(ControllerKind::Regret, 3, NoiseKind::Gaussian, 4.0, 0.25),
            row(ControllerKind::H2, 2, NoiseKind::Gaussian, 2.5, 0.5),
            row(ControllerKind::H2, 3, NoiseKind::Gaussian, 3.5, 0.25),
        ];
        assert_eq!(render_svg(&rows).unwrap(), render_svg(&rows).unwrap());
    }

    #[test]
    fn one_panel_per_noise_kind() {
        let mut rows = Vec::new();
        for kind in NoiseKind::ALL {
            rows.push(row(ControllerKind::Regret, 2, kind, 1.0, 0.1));
            rows.push(row(ControllerKind::Regret, 3, kind, 1.2, 0.1));
        }
        let svg = render_svg(&rows).unwrap();
        for kind in NoiseKind::ALL {
            assert!(svg.contains(&format!(">{kind}</text>")));
        }
        // Background, one legend swatch, and eight panel frames.
        assert_eq!(svg.matches("<rect").count(), 1 + 1 + 8);
    }

    #[test]
    fn empty_summary_is_an_error() {
        assert!(render_svg(&[]).is_err());
    }
}
