//! 2-D projections for eyeballing real-versus-synthetic distributions:
//! PCA and an exact (quadratic) t-SNE.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Projected points, one `(x, y)` per input row.
#[derive(Debug, Clone, Serialize)]
pub struct Projection2D {
    pub points: Vec<(f64, f64)>,
}

/// PCA onto the top two principal components of the mean-centered data.
/// Component signs are fixed by making the largest-magnitude loading
/// positive, so results are deterministic.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Projection2D> {
    let (evecs, _evals, means) = pca_components(rows, 2)?;
    let d = means.len();
    let points = rows
        .iter()
        .map(|row| {
            let mut p = [0.0f64; 2];
            for (pc, out) in evecs.iter().zip(p.iter_mut()) {
                *out = (0..d).map(|j| (row[j] - means[j]) * pc[j]).sum();
            }
            (p[0], p[1])
        })
        .collect();
    Ok(Projection2D { points })
}

/// Top-`k` eigenvectors (rows) and eigenvalues of the covariance matrix,
/// plus the feature means. Eigenvalues are sorted descending.
pub fn pca_components(rows: &[Vec<f64>], k: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Usage("PCA needs at least two samples".into()));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Usage("PCA rows must be nonempty and equal length".into()));
    }
    if k == 0 || k > d {
        return Err(Error::Usage(format!("cannot extract {k} components from {d} features")));
    }
    let mut means = vec![0.0; d];
    for row in rows {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in rows {
        for i in 0..d {
            let ci = row[i] - means[i];
            for j in i..d {
                cov[(i, j)] += ci * (row[j] - means[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut evecs = Vec::with_capacity(k);
    let mut evals = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = col.iter().copied().collect();
        // Deterministic sign: the largest-|.| loading is positive.
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if v[pivot] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        evecs.push(v);
        evals.push(eig.eigenvalues[idx]);
    }
    Ok((evecs, evals, means))
}

/// Settings for [`tsne_2d`].
#[derive(Debug, Clone, Copy)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams { perplexity: 30.0, iterations: 1000, learning_rate: 200.0, seed: 0 }
    }
}

/// Exact t-SNE (O(n^2) per iteration) with early exaggeration for the first
/// 100 iterations and momentum switching at iteration 250.
pub fn tsne_2d(rows: &[Vec<f64>], params: &TsneParams) -> Result<Projection2D> {
    let n = rows.len();
    if n < 4 {
        return Err(Error::Usage("t-SNE needs at least four samples".into()));
    }
    if !(params.perplexity > 1.0) || params.iterations == 0 {
        return Err(Error::Config("invalid t-SNE parameters".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Usage("t-SNE rows must be equal length".into()));
    }
    // Squared pairwise distances.
    let mut d2 = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2[i][j] = s;
            d2[j][i] = s;
        }
    }
    // Per-point precision via binary search on the perplexity.
    let target_h = params.perplexity.min((n - 1) as f64).ln();
    let mut p = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut dot = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let e = (-beta * d2[i][j]).exp();
                sum += e;
                dot += beta * d2[i][j] * e;
            }
            let h = if sum > 0.0 { sum.ln() + dot / sum } else { 0.0 };
            if (h - target_h).abs() < 1e-7 {
                break;
            }
            if h > target_h {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            if j != i {
                p[i][j] = (-beta * d2[i][j]).exp();
                sum += p[i][j];
            }
        }
        if sum > 0.0 {
            for j in 0..n {
                p[i][j] /= sum;
            }
        }
    }
    // Symmetrize.
    let mut pij = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            pij[i][j] = ((p[i][j] + p[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            // Small Gaussian init via Box-Muller.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt() * 1e-4;
            [r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin()]
        })
        .collect();
    let mut vel = vec![[0.0f64; 2]; n];

    for iter in 0..params.iterations {
        let exaggeration = if iter < 100 { 4.0 } else { 1.0 };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };
        // Student-t affinities.
        let mut num = vec![vec![0.0f64; n]; n];
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i][j] = q;
                num[j][i] = q;
                z += 2.0 * q;
            }
        }
        let z = z.max(1e-12);
        for i in 0..n {
            let mut g = [0.0f64; 2];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let q = (num[i][j] / z).max(1e-12);
                let mult = (exaggeration * pij[i][j] - q) * num[i][j];
                g[0] += 4.0 * mult * (y[i][0] - y[j][0]);
                g[1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                vel[i][k] = momentum * vel[i][k] - params.learning_rate * g[k];
            }
        }
        for i in 0..n {
            y[i][0] += vel[i][0];
            y[i][1] += vel[i][1];
        }
        // Keep the embedding centered.
        let (mx, my) = y.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p[0], acc.1 + p[1]));
        let (mx, my) = (mx / n as f64, my / n as f64);
        for pt in &mut y {
            pt[0] -= mx;
            pt[1] -= my;
        }
    }
    Ok(Projection2D { points: y.into_iter().map(|p| (p[0], p[1])).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Jacobi eigenvalue iteration, used only as an independent oracle.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v = vec![vec![0.0; n]; n];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..200 {
            let (mut p, mut q, mut biggest) = (0, 1, 0.0);
            for i in 0..n {
                for j in (i + 1)..n {
                    if a[i][j].abs() > biggest {
                        biggest = a[i][j].abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if biggest < 1e-14 {
                break;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..n {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..n {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for k in 0..n {
                let vkp = v[k][p];
                let vkq = v[k][q];
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
        let evals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        (evals, v)
    }

    fn toy_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                // Anisotropic cloud: dominant direction (3, 1, 0.2, ...).
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-0.3..0.3);
                vec![
                    3.0 * a + 0.1 * b,
                    a + b,
                    0.2 * a - 0.5 * b,
                    rng.gen_range(-0.05..0.05),
                ]
            })
            .collect()
    }

    #[test]
    fn pca_matches_jacobi_oracle() {
        let rows = toy_rows(60, 1);
        let (evecs, evals, means) = pca_components(&rows, 2).unwrap();
        // Oracle covariance + Jacobi.
        let d = 4;
        let n = rows.len();
        let mut cov = vec![vec![0.0; d]; d];
        for row in &rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (row[i] - means[i]) * (row[j] - means[j]) / (n - 1) as f64;
                }
            }
        }
        let (o_evals, o_evecs) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| o_evals[b].partial_cmp(&o_evals[a]).unwrap());
        for (k, &idx) in order.iter().take(2).enumerate() {
            assert_abs_diff_eq!(evals[k], o_evals[idx], epsilon = 1e-6);
            // Compare eigenvectors up to sign via |dot| = 1.
            let dot: f64 = (0..d).map(|j| evecs[k][j] * o_evecs[j][idx]).sum();
            assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn pca_first_component_captures_dominant_direction() {
        let rows = toy_rows(80, 2);
        let (evecs, evals, _) = pca_components(&rows, 2).unwrap();
        assert!(evals[0] > evals[1]);
        // Dominant direction is approximately (3, 1, 0.2, 0)/norm.
        let dir = [3.0, 1.0, 0.2, 0.0];
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = evecs[0].iter().zip(&dir).map(|(a, b)| a * b / norm).sum();
        assert!(dot.abs() > 0.98, "alignment {dot}");
    }

    #[test]
    fn pca_projection_is_deterministic() {
        let rows = toy_rows(30, 3);
        let p1 = pca_2d(&rows).unwrap();
        let p2 = pca_2d(&rows).unwrap();
        assert_eq!(p1.points, p2.points);
    }

    #[test]
    fn pca_rejects_degenerate_input() {
        assert!(pca_2d(&[vec![1.0, 2.0]]).is_err());
        assert!(pca_2d(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn tsne_separates_two_distant_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let offset = if i < 20 { 0.0 } else { 50.0 };
            labels.push(i >= 20);
            rows.push(vec![
                offset + rng.gen_range(-1.0..1.0),
                offset + rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]);
        }
        let params = TsneParams { iterations: 300, perplexity: 10.0, ..Default::default() };
        let proj = tsne_2d(&rows, &params).unwrap();
        // Nearly every point should sit nearer its own cluster centroid
        // (the odd point can get stuck on the wrong side early on).
        let c0 = centroid(&proj.points[..20]);
        let c1 = centroid(&proj.points[20..]);
        let d2 = |p: &(f64, f64), c: &(f64, f64)| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2);
        let correct = proj
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| {
                let (own, other) = if *i < 20 { (&c0, &c1) } else { (&c1, &c0) };
                d2(p, own) < d2(p, other)
            })
            .count();
        assert!(correct >= 38, "only {correct}/40 points near their own cluster");
    }

    fn centroid(pts: &[(f64, f64)]) -> (f64, f64) {
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        (sx / n, sy / n)
    }

    #[test]
    fn tsne_is_deterministic_given_seed() {
        let rows = toy_rows(25, 5);
        let params = TsneParams { iterations: 50, perplexity: 8.0, ..Default::default() };
        let a = tsne_2d(&rows, &params).unwrap();
        let b = tsne_2d(&rows, &params).unwrap();
        assert_eq!(a.points, b.points);
    }
}
