//! Dependency-free SVG charts for campaign directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use owal::acquisition::Criterion;
use owal::density::DensityEstimate;
use owal::harness::{read_summary_csv, REFERENCE_PDF_FILE, SUMMARY_FILE};
use owal::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const PAD_LEFT: f64 = 70.0;
const PAD_RIGHT: f64 = 120.0;
const PAD_TOP: f64 = 30.0;
const PAD_BOTTOM: f64 = 45.0;
const MARGIN: f64 = 0.05;
const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Axis range with a fractional margin; `log` works in log10 space.
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Self> {
        let t: Vec<f64> = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .map(|v| if log { v.log10() } else { v })
            .collect();
        let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return None;
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        Some(Self {
            lo: lo - MARGIN * span,
            hi: hi + MARGIN * span,
            log,
        })
    }

    fn frac(&self, v: f64) -> f64 {
        let t = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo.ceil() as i32..=self.hi.floor() as i32)
                .map(|k| (10f64.powi(k), format!("1e{k}")))
                .collect()
        } else {
            let span = self.hi - self.lo;
            let digits = if span >= 10.0 {
                0
            } else if span >= 1.0 {
                2
            } else {
                3
            };
            (0..=4)
                .map(|i| {
                    let v = self.lo + span * i as f64 / 4.0;
                    (v, format!("{v:.digits$}"))
                })
                .collect()
        }
    }
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        PAD_LEFT + self.x.frac(x) * (WIDTH - PAD_LEFT - PAD_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - PAD_BOTTOM - self.y.frac(y) * (HEIGHT - PAD_TOP - PAD_BOTTOM)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let (x0, x1) = (PAD_LEFT, WIDTH - PAD_RIGHT);
        let (y0, y1) = (PAD_TOP, HEIGHT - PAD_BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect class="frame" x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for (v, label) in self.y.ticks() {
            let y = self.py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x0}" x2="{x1}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"##,
                x0 - 5.0,
                y + 4.0
            );
        }
        for (v, label) in self.x.ticks() {
            let x = self.px(v);
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#,
                y1 + 16.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 8.0,
            escape(xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
        s
    }

    fn polyline(&self, pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

type Series = Vec<(f64, f64, f64)>;

fn convergence_svg(problem: &str, series: &BTreeMap<Criterion, Series>) -> Option<String> {
    let x = Axis::fit(series.values().flatten().map(|p| p.0), false)?;
    let y = Axis::fit(series.values().flatten().flat_map(|&(_, m, d)| [m, m - d, m + d]), true)?;
    let frame = Frame { x, y };
    let mut s = frame.open(&format!("{problem}: median error"), "iteration", "log-pdf error");
    for (k, (criterion, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let floor = 10f64.powf(frame.y.lo);
        let upper: Vec<_> = pts.iter().map(|&(i, m, d)| (i, m + d)).collect();
        let lower: Vec<_> = pts.iter().rev().map(|&(i, m, d)| (i, (m - d).max(floor))).collect();
        let band = [upper, lower].concat();
        let _ = writeln!(
            s,
            r#"<polygon class="band" data-criterion="{criterion}" points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            frame.polyline(&band)
        );
        let line: Vec<_> = pts.iter().map(|&(i, m, _)| (i, m)).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-criterion="{criterion}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            frame.polyline(&line)
        );
        let ly = PAD_TOP + 16.0 * (k as f64 + 1.0);
        let lx = WIDTH - PAD_RIGHT + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text class="legend" x="{}" y="{}">{criterion}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn pdf_svg(problem: &str, pdf: &DensityEstimate) -> Option<String> {
    let pts: Vec<(f64, f64)> = (0..pdf.grid.n_points)
        .map(|i| (pdf.grid.point(i), pdf.pdf[i]))
        .collect();
    let frame = Frame {
        x: Axis::fit(pts.iter().map(|p| p.0), false)?,
        y: Axis::fit(pts.iter().map(|p| p.1), true)?,
    };
    let mut s = frame.open(&format!("{problem}: reference output pdf"), "output", "pdf");
    let _ = writeln!(
        s,
        r#"<polyline class="series" points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        frame.polyline(&pts)
    );
    s.push_str("</svg>\n");
    Some(s)
}

/// Writes `<problem>_error.svg` and `<problem>_pdf.svg` for every problem directory under `dir`.
pub fn plot_campaign(dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let mut problems: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SUMMARY_FILE).is_file())
        .collect();
    problems.sort();
    if problems.is_empty() {
        return Err(Error::Format {
            path: dir.display().to_string(),
            message: format!("no <problem>/{SUMMARY_FILE} found"),
        });
    }
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for pdir in problems {
        let name = pdir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut series: BTreeMap<Criterion, Series> = BTreeMap::new();
        for row in read_summary_csv(&pdir.join(SUMMARY_FILE))? {
            series
                .entry(row.criterion)
                .or_default()
                .push((row.iteration as f64, row.median_error, row.mad_half));
        }
        if let Some(svg) = convergence_svg(&name, &series) {
            let path = out.join(format!("{name}_error.svg"));
            fs::write(&path, svg)?;
            written.push(path);
        }
        let pdf_path = pdir.join(REFERENCE_PDF_FILE);
        if pdf_path.is_file() {
            let pdf = DensityEstimate::read_columns(&fs::read_to_string(&pdf_path)?, &pdf_path.display().to_string())?;
            if let Some(svg) = pdf_svg(&name, &pdf) {
                let path = out.join(format!("{name}_pdf.svg"));
                fs::write(&path, svg)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
