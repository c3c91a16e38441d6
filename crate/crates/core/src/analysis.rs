//! PCA of latent codes and plot-data export (CSV tables, static SVG).

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dsp::Spectrum;
use crate::error::{Error, Result};
use crate::nn::TrainHistory;

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric `n × n` row-major matrix by cyclic
/// Jacobi rotations. Eigenvalues come back in descending order; column `k`
/// of the returned row-major matrix is the eigenvector of eigenvalue `k`.
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || matrix.len() != n * n {
        return Err(Error::Shape(format!(
            "{} values do not form a square {n}×{n} matrix",
            matrix.len()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (matrix[i * n + j], matrix[j * n + i]);
            if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::Argument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off_norm = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) < JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaPoint {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    /// Two orthonormal principal axes.
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
    pub projected: Vec<PcaPoint>,
    /// Variance along each axis (covariance eigenvalues).
    pub explained_variance: [f64; 2],
    /// Share of the total variance along each axis.
    pub explained_ratio: [f64; 2],
}

impl PcaResult {
    pub fn project(&self, v: &[f64]) -> [f64; 2] {
        let dot = |c: &[f64]| c.iter().zip(v).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum();
        [dot(&self.components[0]), dot(&self.components[1])]
    }

    pub fn to_table(&self) -> Table {
        Table {
            header: vec!["pc1".into(), "pc2".into(), "label".into()],
            rows: self
                .projected
                .iter()
                .map(|p| vec![fmt_num(p.x), fmt_num(p.y), p.label.clone()])
                .collect(),
        }
    }

    /// Smallest distance between class centroids and the mean distance of
    /// points to their own class centroid.
    pub fn class_separation(&self) -> Option<(f64, f64)> {
        let mut labels: Vec<&str> = self.projected.iter().map(|p| p.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() < 2 {
            return None;
        }
        let centroids: Vec<(f64, f64)> = labels
            .iter()
            .map(|l| {
                let pts: Vec<&PcaPoint> = self.projected.iter().filter(|p| p.label == *l).collect();
                let n = pts.len() as f64;
                (
                    pts.iter().map(|p| p.x).sum::<f64>() / n,
                    pts.iter().map(|p| p.y).sum::<f64>() / n,
                )
            })
            .collect();
        let mut between = f64::INFINITY;
        for i in 0..centroids.len() {
            for j in i + 1..centroids.len() {
                let d = (centroids[i].0 - centroids[j].0).hypot(centroids[i].1 - centroids[j].1);
                between = between.min(d);
            }
        }
        let within = labels
            .iter()
            .zip(&centroids)
            .map(|(l, c)| {
                let pts: Vec<&PcaPoint> = self.projected.iter().filter(|p| p.label == *l).collect();
                pts.iter().map(|p| (p.x - c.0).hypot(p.y - c.1)).sum::<f64>() / pts.len() as f64
            })
            .sum::<f64>()
            / labels.len() as f64;
        Some((between, within))
    }
}

/// Mean-centred 2-D PCA. Each axis is signed so that its largest-magnitude
/// entry is positive.
pub fn pca_2d(latents: &[Vec<f64>], labels: &[String]) -> Result<PcaResult> {
    if latents.len() < 3 {
        return Err(Error::Argument(format!(
            "PCA needs at least 3 vectors, got {}",
            latents.len()
        )));
    }
    if labels.len() != latents.len() {
        return Err(Error::Shape(format!(
            "{} vectors but {} labels",
            latents.len(),
            labels.len()
        )));
    }
    let d = latents[0].len();
    if d < 2 || latents.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("PCA vectors must share a dimension of at least 2".into()));
    }
    let n = latents.len() as f64;
    let mut mean = vec![0.0; d];
    for v in latents {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for v in latents {
        let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += c[i] * c[j] / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    let total: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let (values, vectors) = jacobi_eigen(&cov, d)?;
    let component = |k: usize| {
        let mut c: Vec<f64> = (0..d).map(|row| vectors[row * d + k]).collect();
        let big = c.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if big < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        c
    };
    let explained_variance = [values[0].max(0.0), values[1].max(0.0)];
    let ratio = |v: f64| if total > 0.0 { v / total } else { 0.0 };
    let mut result = PcaResult {
        components: [component(0), component(1)],
        mean,
        projected: Vec::new(),
        explained_variance,
        explained_ratio: [ratio(explained_variance[0]), ratio(explained_variance[1])],
    };
    result.projected = latents
        .iter()
        .zip(labels)
        .map(|(v, l)| {
            let [x, y] = result.project(v);
            PcaPoint { x, y, label: l.clone() }
        })
        .collect();
    Ok(result)
}

/// A CSV table with a mandatory header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// freq_hz, original, reconstructed.
pub fn overlay_table(original: &Spectrum, reconstructed: &Spectrum) -> Result<Table> {
    if original.len() != reconstructed.len() {
        return Err(Error::Shape(format!(
            "overlay of {} and {} bins",
            original.len(),
            reconstructed.len()
        )));
    }
    Ok(Table {
        header: vec!["freq_hz".into(), "original".into(), "reconstructed".into()],
        rows: (0..original.len())
            .map(|i| {
                vec![
                    fmt_num(original.freq_of(i)),
                    fmt_num(original.bins[i]),
                    fmt_num(reconstructed.bins[i]),
                ]
            })
            .collect(),
    })
}

/// One row per epoch: epoch, loss and (for classifiers) accuracy.
pub fn curve_table(history: &TrainHistory) -> Table {
    let with_acc = history.accuracy.len() == history.loss.len() && !history.accuracy.is_empty();
    let mut header = vec!["epoch".to_string(), "loss".to_string()];
    if with_acc {
        header.push("accuracy".into());
    }
    Table {
        header,
        rows: history
            .loss
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut row = vec![(i + 1).to_string(), fmt_num(*l)];
                if with_acc {
                    row.push(fmt_num(history.accuracy[i]));
                }
                row
            })
            .collect(),
    }
}

pub fn export_csv(table: &Table, path: &Path) -> Result<()> {
    if table.header.is_empty() {
        return Err(Error::Argument("CSV table has no columns".into()));
    }
    std::fs::write(path, table.to_csv()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    Lines,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub style: PlotStyle,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static SVG with a fixed 800×500 viewBox, axes with five ticks each, and
/// a legend.
pub fn render_svg(series: &[Series], spec: &PlotSpec) -> Result<String> {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if all.is_empty() {
        return Err(Error::Argument("nothing to plot".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 18.0,
            tick_label(fx)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&spec.y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| (sx(x), sy(y)))
            .collect();
        match spec.style {
            PlotStyle::Lines => {
                let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    coords.join(" ")
                );
            }
            PlotStyle::Points => {
                for (x, y) in pts {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                }
            }
        }
        let ly = top + 15.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            right - 120.0,
            ly,
            right - 105.0,
            ly + 9.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

pub fn export_svg(series: &[Series], spec: &PlotSpec, path: &Path) -> Result<()> {
    let svg = render_svg(series, spec)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Scatter series per class label.
pub fn pca_series(pca: &PcaResult) -> Vec<Series> {
    let mut labels: Vec<&str> = pca.projected.iter().map(|p| p.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
        .into_iter()
        .map(|l| Series {
            name: l.to_string(),
            points: pca
                .projected
                .iter()
                .filter(|p| p.label == l)
                .map(|p| (p.x, p.y))
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal_and_2x2() {
        let (vals, _) = jacobi_eigen(&[3.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(vals, vec![3.0, 1.0]);
        let (vals, vecs) = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[0].abs() - s).abs() < 1e-12 && (vecs[2].abs() - s).abs() < 1e-12);
        assert!(jacobi_eigen(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn pca_of_a_line() {
        let dir: Vec<f64> = (0..128).map(|i| ((i % 7) as f64 - 3.0) / 10.0).collect();
        let latents: Vec<Vec<f64>> = (0..10)
            .map(|t| dir.iter().map(|d| d * t as f64 + 1.0).collect())
            .collect();
        let labels = vec!["a".to_string(); 10];
        let pca = pca_2d(&latents, &labels).unwrap();
        assert!(pca.explained_variance[1].abs() < 1e-9);
        assert!((pca.explained_ratio[0] - 1.0).abs() < 1e-9);
        let dot: f64 = pca.components[0].iter().zip(&pca.components[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
    }

    #[test]
    fn pca_needs_three() {
        let two = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let err = pca_2d(&two, &["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn curve_rows() {
        let h = TrainHistory {
            loss: vec![0.5; 30],
            accuracy: vec![],
        };
        let t = curve_table(&h);
        assert_eq!(t.rows.len(), 30);
        assert_eq!(t.to_csv().lines().next(), Some("epoch,loss"));
    }

    #[test]
    fn svg_escapes_and_closes() {
        let s = Series {
            name: "a<b".into(),
            points: vec![(0.0, 0.0), (1.0, 2.0)],
        };
        let spec = PlotSpec {
            title: "t&t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            style: PlotStyle::Lines,
        };
        let svg = render_svg(&[s], &spec).unwrap();
        assert!(svg.contains("a&lt;b") && svg.contains("t&amp;t"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(render_svg(&[], &spec).is_err());
    }
}
