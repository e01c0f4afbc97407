//! Hand-written SVG panels: per-episode curves and value heat maps.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::output::ValueRow;
use super::run::RunRecord;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const CELL: f64 = 24.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Panel {
    Return,
    Steps,
    BellmanError,
    DeltaL2,
    DeltaLinf,
    L1Norm,
    Nnz,
    Heatmap,
}

impl Panel {
    pub const LINES: [Panel; 7] = [
        Panel::Return,
        Panel::Steps,
        Panel::BellmanError,
        Panel::DeltaL2,
        Panel::DeltaLinf,
        Panel::L1Norm,
        Panel::Nnz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Panel::Return => "return",
            Panel::Steps => "steps",
            Panel::BellmanError => "bellman_error",
            Panel::DeltaL2 => "delta_l2",
            Panel::DeltaLinf => "delta_linf",
            Panel::L1Norm => "l1_norm",
            Panel::Nnz => "nnz",
            Panel::Heatmap => "heatmap",
        }
    }

    fn value(&self, r: &RunRecord) -> f64 {
        match self {
            Panel::Return => r.ret,
            Panel::Steps => r.steps as f64,
            Panel::BellmanError => r.bellman_error,
            Panel::DeltaL2 => r.delta_l2,
            Panel::DeltaLinf => r.delta_linf,
            Panel::L1Norm => r.l1_norm,
            Panel::Nnz => r.nnz as f64,
            Panel::Heatmap => f64::NAN,
        }
    }
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Panel::LINES
            .iter()
            .chain(&[Panel::Heatmap])
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown panel {s:?}")))
    }
}

/// True when the panel has at least one finite value to draw.
pub fn has_data(records: &[RunRecord], panel: Panel) -> bool {
    records.iter().any(|r| panel.value(r).is_finite())
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        w / 2.0
    )
    .unwrap();
}

/// Per-trial curves (thin) and their mean (thick) against the episode index.
pub fn line_svg(records: &[RunRecord], panel: Panel) -> Result<String> {
    if panel == Panel::Heatmap {
        return Err(Error::invalid("heat maps are drawn from a value table"));
    }
    if records.is_empty() {
        return Err(Error::invalid("cannot plot an empty table"));
    }
    if !has_data(records, panel) {
        return Err(Error::invalid(format!(
            "panel `{panel}` has no finite values"
        )));
    }
    let mut trials: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for r in records {
        let v = panel.value(r);
        if v.is_finite() {
            trials.entry(r.trial).or_default().push((r.episode, v));
        }
    }
    let mut by_episode: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for pts in trials.values() {
        for &(e, v) in pts {
            let slot = by_episode.entry(e).or_insert((0.0, 0));
            slot.0 += v;
            slot.1 += 1;
        }
    }
    let mean: Vec<(usize, f64)> = by_episode
        .iter()
        .map(|(&e, &(s, n))| (e, s / n as f64))
        .collect();

    let all = trials.values().flatten();
    let (mut lo, mut hi) = all
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
            (lo.min(v), hi.max(v))
        });
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let max_ep = all.map(|&(e, _)| e).max().unwrap_or(0).max(1) as f64;
    let sx = |e: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * e as f64 / max_ep;
    let sy = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, panel.name());
    writeln!(
        out,
        r#"<path d="M{l} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        l = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )
    .unwrap();
    for (v, y) in [(lo, sy(lo)), (hi, sy(hi))] {
        writeln!(
            out,
            r#"<text x="{}" y="{y:.2}" text-anchor="end">{v:.4}</text>"#,
            MARGIN - 6.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">episode (0..{})</text>"#,
        WIDTH / 2.0,
        HEIGHT - MARGIN / 3.0,
        max_ep
    )
    .unwrap();
    let path = |pts: &[(usize, f64)]| {
        pts.iter()
            .enumerate()
            .map(|(i, &(e, v))| {
                format!(
                    "{}{:.2} {:.2}",
                    if i == 0 { "M" } else { "L" },
                    sx(e),
                    sy(v)
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    for pts in trials.values() {
        writeln!(
            out,
            r##"<path d="{}" fill="none" stroke="#9bb7d4" stroke-width="1"/>"##,
            path(pts)
        )
        .unwrap();
    }
    writeln!(
        out,
        r##"<path d="{}" fill="none" stroke="#1f4e79" stroke-width="2.5"/>"##,
        path(&mean)
    )
    .unwrap();
    out.push_str("</svg>\n");
    Ok(out)
}

/// Values of the lowest-numbered trial over grid cells, one rectangle per state.
pub fn heatmap_svg(values: &[ValueRow]) -> Result<String> {
    let Some(first) = values.iter().map(|v| v.trial).min() else {
        return Err(Error::invalid("cannot plot an empty value table"));
    };
    let rows: Vec<&ValueRow> = values.iter().filter(|v| v.trial == first).collect();
    let mut cells = Vec::with_capacity(rows.len());
    for v in &rows {
        match (v.row, v.col) {
            (Some(r), Some(c)) => cells.push((r, c, v.value)),
            _ => return Err(Error::invalid("heat maps need a grid environment")),
        }
    }
    let height = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let width = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    let (lo, hi) = cells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.2), hi.max(c.2))
        });
    let span = if hi - lo < 1e-12 { 1.0 } else { hi - lo };
    let w = 2.0 * CELL + width as f64 * CELL;
    let h = 3.0 * CELL + height as f64 * CELL;

    let mut out = String::new();
    header(&mut out, w, h, "value");
    for (r, c, v) in cells {
        let t = (v - lo) / span;
        let (red, green, blue) = (
            (68.0 + t * (253.0 - 68.0)) as u8,
            (1.0 + t * (231.0 - 1.0)) as u8,
            (84.0 + t * (37.0 - 84.0)) as u8,
        );
        writeln!(
            out,
            r#"<rect class="cell" x="{:.1}" y="{:.1}" width="{CELL}" height="{CELL}" fill="rgb({red},{green},{blue})"><title>{v:.6}</title></rect>"#,
            CELL + c as f64 * CELL,
            2.0 * CELL + r as f64 * CELL
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">min {lo:.4} max {hi:.4}</text>"#,
        w / 2.0,
        h - 6.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(trial: usize, episode: usize, ret: f64) -> RunRecord {
        RunRecord {
            trial,
            episode,
            steps: 10,
            ret,
            bellman_error: f64::NAN,
            delta_l2: 0.0,
            delta_linf: 0.0,
            l1_norm: 1.0,
            nnz: 3,
            wall_clock_per_step: 1e-6,
        }
    }

    #[test]
    fn line_panels() {
        let rows = vec![
            rec(0, 0, 1.0),
            rec(0, 1, 2.0),
            rec(1, 0, 3.0),
            rec(1, 1, 0.0),
        ];
        let svg = line_svg(&rows, Panel::Return).unwrap();
        assert_eq!(svg, line_svg(&rows, Panel::Return).unwrap());
        assert_eq!(svg.matches("<path d=\"M").count(), 3 + 1);
        assert!(line_svg(&rows, Panel::BellmanError).is_err());
        assert!(line_svg(&[], Panel::Return).is_err());
        assert!(line_svg(&rows, Panel::Heatmap).is_err());
        assert_eq!("delta_linf".parse::<Panel>().unwrap(), Panel::DeltaLinf);
        assert!("".parse::<Panel>().is_err());
    }

    #[test]
    fn heatmap_cells() {
        let grid: Vec<ValueRow> = (0..6)
            .map(|s| ValueRow {
                trial: 0,
                state: s,
                row: Some(s / 3),
                col: Some(s % 3),
                value: s as f64,
            })
            .collect();
        let svg = heatmap_svg(&grid).unwrap();
        assert_eq!(svg.matches("class=\"cell\"").count(), 6);
        let chain = vec![ValueRow {
            trial: 0,
            state: 0,
            row: None,
            col: None,
            value: 1.0,
        }];
        assert!(heatmap_svg(&chain).is_err());
        assert!(heatmap_svg(&[]).is_err());
    }
}
