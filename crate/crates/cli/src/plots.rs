//! Deterministic SVG renderings of a finished run, built from its CSVs and
//! `diagnostics.json` only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::run::{io_err, load_diagnostics, Diagnostics, RunError};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    let span = (hi - lo).abs().max(1e-12 * lo.abs().max(1.0));
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    padded(lo, hi)
}

impl Frame {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"##,
            W / 2.0,
            escape(title),
            LEFT + (W - LEFT - RIGHT) / 2.0,
            H - 12.0,
            escape(xlabel),
            TOP + (H - TOP - BOTTOM) / 2.0,
            TOP + (H - TOP - BOTTOM) / 2.0,
            escape(ylabel)
        );
        let mut f = Self { x, y, body };
        f.axes();
        f
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&mut self) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
        let _ = writeln!(self.body, r#"<path class="axes" d="M{x0} {y1}V{y0}H{x1}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * i as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * i as f64 / 4.0;
            let (tx, ty) = (self.px(fx), self.py(fy));
            let _ = writeln!(self.body, r#"<text class="tick" x="{tx:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(fx));
            let _ = writeln!(self.body, r#"<text class="tick" x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 4.0, ty + 4.0, tick(fy));
        }
    }

    fn polyline(&mut self, class: &str, colour: &str, points: &[(f64, f64)], dashed: bool) {
        let pts: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(self.body, r#"<polyline class="{class}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
    }

    fn marker(&mut self, colour: &str, x: f64, y: f64) {
        let _ = writeln!(self.body, r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, self.px(x), self.py(y));
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        for (i, (label, colour)) in entries.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = W - RIGHT - 150.0;
            let _ = writeln!(self.body, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"/>"#, x + 20.0);
            let _ = writeln!(self.body, r#"<text class="legend" x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn read_column(path: &Path, column: &str) -> Result<Vec<(f64, f64)>, RunError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    let idx = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| RunError::Failed(format!("{} has no column {column}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).unwrap_or(f64::NAN);
        out.push((parse(0), parse(idx)));
    }
    Ok(out)
}

fn loss_plots(run_dir: &Path, diag: &Diagnostics, out: &mut Vec<(String, String)>) -> Result<(), RunError> {
    type Series = (String, Vec<(f64, f64)>);
    let mut groups: BTreeMap<(String, usize), Vec<Series>> = BTreeMap::new();
    for c in &diag.cells {
        let series = read_column(&run_dir.join(&c.loss_curve), "median_loss")?;
        groups.entry((c.method.name().to_string(), c.num_qubits)).or_default().push((c.shots_token.clone(), series));
    }
    for ((method, n), series) in groups {
        let x = range(series.iter().flat_map(|s| s.1.iter().map(|p| &p.0)));
        let y = range(series.iter().flat_map(|s| s.1.iter().map(|p| &p.1)));
        let mut f = Frame::new(&format!("{method}, n = {n}: median loss"), "step", "median Tr[Hρ]", x, y);
        let mut legend = Vec::new();
        for (i, (label, pts)) in series.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            f.polyline("series", colour, pts, false);
            legend.push((format!("shots {label}"), colour));
        }
        f.legend(&legend);
        out.push((format!("plots/loss_{method}_n{n:02}.svg"), f.finish()));
    }
    Ok(())
}

fn variance_plots(diag: &Diagnostics, out: &mut Vec<(String, String)>) {
    for rw in &diag.random_walks {
        let r = &rw.report;
        let pts: Vec<(f64, f64)> = r.pooled_variances.iter().enumerate().map(|(t, v)| (t as f64, *v)).collect();
        let x = padded(0.0, r.steps.saturating_sub(1) as f64);
        let y = range(r.pooled_variances.iter().chain(std::iter::once(&r.predicted_variance)).chain(std::iter::once(&0.0)));
        let mut f = Frame::new(&format!("{}: update variance per step", rw.cell), "step", "Var[Δθ]", x, y);
        f.polyline("series", PALETTE[0], &pts, false);
        f.polyline("prediction", PALETTE[1], &[(0.0, r.predicted_variance), (x.1, r.predicted_variance)], true);
        f.legend(&[("ensemble".into(), PALETTE[0]), ("coin model".into(), PALETTE[1])]);
        out.push((format!("plots/variance_{}.svg", rw.cell), f.finish()));
    }
}

fn shade(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let (r, g, b) = (40.0 + 215.0 * t, 60.0 + 160.0 * t, 160.0 + 40.0 * (1.0 - t));
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

fn pca_plots(diag: &Diagnostics, out: &mut Vec<(String, String)>) {
    for entry in &diag.pca {
        let p = &entry.projection;
        let Some(grid) = &p.grid else { continue };
        let x = (grid.xs[0], *grid.xs.last().unwrap());
        let y = (grid.ys[0], *grid.ys.last().unwrap());
        let title = format!("{}, n = {}: loss on the principal plane", entry.method.name(), entry.num_qubits);
        let mut f = Frame::new(&title, "PC 1", "PC 2", x, y);
        let (lo, hi) = range(grid.losses.iter().flatten());
        let (dx, dy) = ((grid.xs[1] - grid.xs[0]) / 2.0, (grid.ys[1] - grid.ys[0]) / 2.0);
        for (j, row) in grid.losses.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let (x0, x1) = (f.px(grid.xs[i] - dx), f.px(grid.xs[i] + dx));
                let (y0, y1) = (f.py(grid.ys[j] + dy), f.py(grid.ys[j] - dy));
                let _ = writeln!(
                    f.body,
                    r#"<rect class="cell" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    x1 - x0,
                    y1 - y0,
                    shade(*v, lo, hi)
                );
            }
        }
        let mut legend = Vec::new();
        for (i, (cell, traj)) in entry.cells.iter().zip(&p.projections).enumerate() {
            let colour = ["#000000", "#ffffff", "#ff2020"][i % 3];
            f.polyline("trajectory", colour, traj, false);
            if let Some(&(a, b)) = traj.first() {
                f.marker(colour, a, b);
            }
            legend.push((cell.clone(), colour));
        }
        f.legend(&legend);
        f.axes();
        out.push((format!("plots/pca_{}_n{:02}.svg", entry.method.name(), entry.num_qubits), f.finish()));
    }
}

fn concentration_plot(diag: &Diagnostics, out: &mut Vec<(String, String)>) {
    let Some(c) = &diag.concentration else { return };
    let exact: Vec<(f64, f64)> = c.rows.iter().filter(|r| r.mode == "exact").map(|r| (r.num_qubits as f64, r.beta_hat.log2())).collect();
    let reference: Vec<(f64, f64)> = c.rows.iter().filter(|r| r.mode == "exact").map(|r| (r.num_qubits as f64, r.reference.log2())).collect();
    let x = range(exact.iter().map(|p| &p.0));
    let y = range(exact.iter().chain(&reference).map(|p| &p.1));
    let mut f = Frame::new(&format!("outcome variance, fitted slope {:.3}", c.fit.slope), "n", "log2 β̂", x, y);
    f.polyline("prediction", PALETTE[1], &reference, true);
    f.polyline("series", PALETTE[0], &exact, false);
    for &(a, b) in &exact {
        f.marker(PALETTE[0], a, b);
    }
    f.legend(&[("estimate".into(), PALETTE[0]), ("2^-n / 4".into(), PALETTE[1])]);
    out.push(("plots/concentration.svg".into(), f.finish()));
}

/// Render every plot the run's data supports. Nothing is written unless all
/// plots render.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<String>, RunError> {
    let diag = load_diagnostics(run_dir)?;
    if diag.cells.is_empty() && diag.pca.is_empty() && diag.concentration.is_none() {
        return Err(RunError::Failed("run has no trajectories or scans to plot".into()));
    }
    let mut out = Vec::new();
    loss_plots(run_dir, &diag, &mut out)?;
    variance_plots(&diag, &mut out);
    pca_plots(&diag, &mut out);
    concentration_plot(&diag, &mut out);
    let dir = run_dir.join("plots");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (rel, body) in &out {
        let path = run_dir.join(rel);
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(out.into_iter().map(|(rel, _)| rel).collect())
}
