//! Mean-shift clustering of provider embeddings plus a 2-d PCA projection
//! for plotting.
//!
//! Mean shift is seeded from every point; converged modes are merged when
//! they fall within half the bandwidth of a stronger mode (more support
//! wins, coordinates break ties), which makes the result invariant to input
//! row order.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use std::io::Write;

const SHIFT_TOL: f64 = 1e-6;
const MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Flat,
    Gaussian,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Bandwidth heuristic: for each point take the distance to its
/// `ceil(quantile * n)`-th nearest neighbor (the point itself counts), then
/// average over points.
pub fn estimate_bandwidth(points: &Matrix, quantile: f64) -> Result<f64> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::Parameter("need at least 2 points".into()));
    }
    if !(0.0 < quantile && quantile <= 1.0) {
        return Err(Error::Parameter(format!("quantile {quantile} not in (0,1]")));
    }
    let k = ((quantile * n as f64).ceil() as usize).clamp(1, n);
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<f64> = (0..n)
            .map(|j| sq_dist(points.row(i), points.row(j)))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        total += d[k - 1].sqrt();
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone)]
pub struct MeanShiftResult {
    /// One row per cluster mode, strongest first.
    pub centers: Matrix,
    /// Index into `centers` for every input point.
    pub assignments: Vec<usize>,
}

/// Shifts one seed to convergence; returns the mode.
fn shift_seed(points: &Matrix, seed: &[f64], bandwidth: f64, kernel: Kernel) -> Vec<f64> {
    let d = points.cols();
    let bw2 = bandwidth * bandwidth;
    let mut pos = seed.to_vec();
    for _ in 0..MAX_ITER {
        let mut mean = vec![0.0; d];
        let mut weight = 0.0;
        for i in 0..points.rows() {
            let dist2 = sq_dist(&pos, points.row(i));
            let w = match kernel {
                Kernel::Flat => {
                    if dist2 <= bw2 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Kernel::Gaussian => (-dist2 / (2.0 * bw2)).exp(),
            };
            if w > 0.0 {
                weight += w;
                for (m, &v) in mean.iter_mut().zip(points.row(i)) {
                    *m += w * v;
                }
            }
        }
        if weight == 0.0 {
            break; // isolated seed: it is its own mode
        }
        for m in &mut mean {
            *m /= weight;
        }
        let moved = sq_dist(&pos, &mean).sqrt();
        pos = mean;
        if moved < SHIFT_TOL {
            break;
        }
    }
    pos
}

/// Flat- or Gaussian-kernel mean shift. The number of clusters is implied by
/// the bandwidth.
pub fn mean_shift(points: &Matrix, bandwidth: f64, kernel: Kernel) -> Result<MeanShiftResult> {
    if points.rows() == 0 {
        return Err(Error::Parameter("no points to cluster".into()));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::Parameter(format!("bandwidth {bandwidth} must be positive")));
    }
    points.check_finite("mean shift input")?;
    // canonicalize the row order so kernel sums are evaluated identically no
    // matter how the caller ordered the points
    let mut order: Vec<usize> = (0..points.rows()).collect();
    order.sort_by(|&a, &b| {
        points
            .row(a)
            .iter()
            .zip(points.row(b))
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let points = &points.select_rows(&order);
    let modes: Vec<Vec<f64>> = (0..points.rows())
        .map(|i| shift_seed(points, points.row(i), bandwidth, kernel))
        .collect();
    // support = number of points within the bandwidth of the mode
    let bw2 = bandwidth * bandwidth;
    let mut ranked: Vec<(usize, &Vec<f64>)> = modes
        .iter()
        .map(|m| {
            let support = (0..points.rows())
                .filter(|&i| sq_dist(m, points.row(i)) <= bw2)
                .count();
            (support, m)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| {
            a.1.iter()
                .zip(b.1.iter())
                .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    // merge modes within half a bandwidth of a stronger kept mode
    let merge2 = bw2 / 4.0;
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (_, m) in ranked {
        if kept.iter().all(|c| sq_dist(c, m) > merge2) {
            kept.push(m.clone());
        }
    }
    let mut assignments = vec![0usize; points.rows()];
    for (sorted_i, &orig_i) in order.iter().enumerate() {
        assignments[orig_i] = kept
            .iter()
            .enumerate()
            .min_by(|a, b| {
                sq_dist(a.1, points.row(sorted_i))
                    .partial_cmp(&sq_dist(b.1, points.row(sorted_i)))
                    .expect("finite distances")
            })
            .map(|(c, _)| c)
            .expect("at least one center");
    }
    let centers = Matrix::from_rows(&kept)?;
    Ok(MeanShiftResult {
        centers,
        assignments,
    })
}

/// Projects rows onto the top two principal components. Each component's
/// sign is fixed so its largest-magnitude loading is positive. Returns the
/// projected coordinates and the fraction of variance the two components
/// explain.
pub fn pca_2d(points: &Matrix) -> Result<(Matrix, f64)> {
    let (n, d) = (points.rows(), points.cols());
    if n < 2 || d < 2 {
        return Err(Error::Dimension("pca needs at least 2 rows and 2 columns".into()));
    }
    points.check_finite("pca input")?;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(points.row(i)) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..n {
        let row = points.row(i);
        for a in 0..d {
            for b in a..d {
                let v = (row[a] - mean[a]) * (row[b] - mean[b]) / n as f64;
                cov[a][b] += v;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[a][b] = cov[b][a];
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(&mut cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).expect("finite eigenvalues"));
    let total: f64 = eigvals.iter().map(|v| v.max(0.0)).sum();
    let explained = if total > 0.0 {
        (eigvals[order[0]].max(0.0) + eigvals[order[1]].max(0.0)) / total
    } else {
        0.0
    };
    let mut components = [vec![0.0; d], vec![0.0; d]];
    for (k, comp) in components.iter_mut().enumerate() {
        let col = order[k];
        for a in 0..d {
            comp[a] = eigvecs[a][col];
        }
        // sign convention: the largest-|loading| entry is positive
        let lead = comp
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).expect("finite loadings"))
            .map(|(i, _)| i)
            .expect("nonempty component");
        if comp[lead] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }
    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        let row = points.row(i);
        for (k, comp) in components.iter().enumerate() {
            let v: f64 = (0..d).map(|a| (row[a] - mean[a]) * comp[a]).sum();
            out.set(i, k, v);
        }
    }
    Ok((out, explained))
}

/// Cyclic Jacobi eigendecomposition for a small symmetric matrix. Returns
/// (eigenvalues, eigenvector columns).
fn jacobi_eigen(a: &mut [Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut v = vec![vec![0.0; d]; d];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i][i]).collect(), v)
}

/// `provider_id,x,y,cluster,label` rows over the PCA coordinates.
pub fn write_cluster_csv(
    out: &mut impl Write,
    provider_ids: &[String],
    coords: &Matrix,
    assignments: &[usize],
    labels: &[bool],
) -> Result<()> {
    if coords.rows() != provider_ids.len()
        || assignments.len() != provider_ids.len()
        || labels.len() != provider_ids.len()
    {
        return Err(Error::Dimension("cluster export length mismatch".into()));
    }
    writeln!(out, "provider_id,x,y,cluster,label")?;
    for i in 0..provider_ids.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            provider_ids[i],
            coords.get(i, 0),
            coords.get(i, 1),
            assignments[i],
            u8::from(labels[i])
        )?;
    }
    Ok(())
}

const SVG_PALETTE: [&str; 8] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c", "#dc7ec0", "#797979",
];

/// Scatter plot of the projected points, colored by cluster; known fraud
/// providers get an outline ring.
pub fn write_cluster_svg(
    out: &mut impl Write,
    coords: &Matrix,
    assignments: &[usize],
    labels: &[bool],
) -> Result<()> {
    if coords.rows() != assignments.len() || labels.len() != assignments.len() {
        return Err(Error::Dimension("cluster export length mismatch".into()));
    }
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for i in 0..coords.rows() {
        for k in 0..2 {
            min[k] = min[k].min(coords.get(i, k));
            max[k] = max[k].max(coords.get(i, k));
        }
    }
    let span = |k: usize| (max[k] - min[k]).max(1e-12);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )?;
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#)?;
    for i in 0..coords.rows() {
        let x = pad + (coords.get(i, 0) - min[0]) / span(0) * (w - 2.0 * pad);
        let y = h - pad - (coords.get(i, 1) - min[1]) / span(1) * (h - 2.0 * pad);
        let color = SVG_PALETTE[assignments[i] % SVG_PALETTE.len()];
        let stroke = if labels[i] { r#" stroke="black" stroke-width="1.5""# } else { "" };
        writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.7"{stroke}/>"#
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}
