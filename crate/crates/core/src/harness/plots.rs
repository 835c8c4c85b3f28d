//! Static SVG charts of the leaderboard and bootstrap rank frequencies.

use std::fmt::Write as _;
use std::path::Path;

use super::{CohortResult, EvalConfig};
use crate::error::{EvalError, Result};
use crate::ranking::{BootstrapResult, Leaderboard};

const ROW: f64 = 28.0;
const LABEL_W: f64 = 140.0;
const PLOT_W: f64 = 420.0;
const MARGIN: f64 = 30.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Mean rank per team with a ±1 std whisker.
pub fn leaderboard_svg(board: &Leaderboard) -> String {
    let n = board.standings.len();
    let max_rank = n.max(1) as f64;
    let height = 2.0 * MARGIN + ROW * n as f64 + 20.0;
    let x = |r: f64| LABEL_W + PLOT_W * (r / max_rank);
    let mut s = svg_open(LABEL_W + PLOT_W + MARGIN, height);
    for (i, st) in board.standings.iter().enumerate() {
        let y = MARGIN + ROW * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            LABEL_W - 8.0,
            y + ROW * 0.6,
            escape(&st.team)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{LABEL_W}\" y=\"{}\" width=\"{:.2}\" height=\"{}\" fill=\"#4878a8\"/>",
            y + 4.0,
            x(st.mean_rank) - LABEL_W,
            ROW - 8.0
        );
        let (lo, hi) = (
            (st.mean_rank - st.rank_std).max(0.0),
            st.mean_rank + st.rank_std,
        );
        let yc = y + ROW / 2.0;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" x2=\"{:.2}\" y1=\"{yc}\" y2=\"{yc}\" stroke=\"black\"/>",
            x(lo),
            x(hi.min(max_rank))
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\">{:.2}</text>",
            x(st.mean_rank) + 4.0,
            y + ROW * 0.6 - 8.0,
            st.mean_rank
        );
    }
    let axis_y = MARGIN + ROW * n as f64 + 4.0;
    for r in 0..=n {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{r}</text>",
            x(r as f64),
            axis_y + 12.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Bubble chart of rank frequencies on one axis: teams by row, ranks by
/// column, area proportional to frequency.
pub fn bootstrap_svg(boot: &BootstrapResult, axis: usize) -> String {
    let n = boot.teams.len();
    let slots = 2 * n - 1;
    let col = PLOT_W / slots as f64;
    let height = 2.0 * MARGIN + ROW * n as f64 + 30.0;
    let mut s = svg_open(LABEL_W + PLOT_W + MARGIN, height);
    let _ = writeln!(
        s,
        "<text x=\"{LABEL_W}\" y=\"16\">{} ({} resamples)</text>",
        boot.axes[axis], boot.iterations
    );
    for (t, team) in boot.teams.iter().enumerate() {
        let y = MARGIN + ROW * t as f64 + ROW / 2.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            LABEL_W - 8.0,
            y + 4.0,
            escape(team)
        );
        for (k, &f) in boot.frequencies[axis][t].iter().enumerate() {
            if f <= 0.0 {
                continue;
            }
            let r = (ROW / 2.0 - 1.0) * f.sqrt();
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{y}\" r=\"{r:.2}\" fill=\"#c8553d\" fill-opacity=\"0.8\"/>",
                LABEL_W + col * (k as f64 + 0.5)
            );
        }
    }
    let axis_y = MARGIN + ROW * n as f64 + 16.0;
    for rank in 1..=n {
        let k = 2 * (rank - 1);
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{axis_y}\" text-anchor=\"middle\">{rank}</text>",
            LABEL_W + col * (k as f64 + 0.5)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| EvalError::io(path, e))
}

pub(super) fn write_plots(result: &CohortResult, cfg: &EvalConfig) -> Result<()> {
    let dir = cfg.output_dir.join("plots");
    std::fs::create_dir_all(&dir).map_err(|e| EvalError::io(&dir, e))?;
    write(
        &dir.join("leaderboard.svg"),
        leaderboard_svg(&result.ranking.leaderboard),
    )?;
    let boot = &result.ranking.bootstrap;
    for (a, axis) in boot.axes.iter().enumerate() {
        write(
            &dir.join(format!("bootstrap_{axis}.svg")),
            bootstrap_svg(boot, a),
        )?;
    }
    if let Some(hc) = &result.high_complexity {
        write(
            &dir.join("leaderboard_high_complexity.svg"),
            leaderboard_svg(&hc.leaderboard),
        )?;
    }
    Ok(())
}
