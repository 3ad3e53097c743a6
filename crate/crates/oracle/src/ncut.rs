//! Classical normalized cut and eigendecomposition-based spectral clustering.

use crate::OracleError;

type Matrix = Vec<Vec<f64>>;

fn check_square_symmetric(a: &[Vec<f64>]) -> Result<usize, OracleError> {
    let k = a.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != k {
            return Err(OracleError::Param(format!(
                "row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if v < 0.0 || (v - a[j][i]).abs() > 1e-12 {
                return Err(OracleError::Param(format!(
                    "entry ({i},{j}) breaks symmetry or sign"
                )));
            }
        }
    }
    Ok(k)
}

fn degrees(a: &[Vec<f64>]) -> Vec<f64> {
    a.iter().map(|r| r.iter().sum()).collect()
}

fn cluster_count(partition: &[usize], k: usize) -> Result<usize, OracleError> {
    if partition.len() != k {
        return Err(OracleError::Partition(format!(
            "{} labels for {k} nodes",
            partition.len()
        )));
    }
    let c = partition.iter().max().map_or(0, |m| m + 1);
    for i in 0..c {
        if !partition.contains(&i) {
            return Err(OracleError::Partition(format!("cluster {i} is empty")));
        }
    }
    Ok(c)
}

/// `½ Σ_i A(S_i, S̄_i) / vol(S_i)` with `vol(S) = Σ_{u∈S} deg(u)`.
/// `partition[u]` is the cluster label of node `u`; labels must be `0..C`
/// with no empty cluster.
pub fn ncut_objective(a: &[Vec<f64>], partition: &[usize]) -> Result<f64, OracleError> {
    let k = check_square_symmetric(a)?;
    let c = cluster_count(partition, k)?;
    let deg = degrees(a);
    let mut total = 0.0;
    for s in 0..c {
        let mut cut = 0.0;
        let mut vol = 0.0;
        for u in 0..k {
            if partition[u] != s {
                continue;
            }
            vol += deg[u];
            for v in 0..k {
                if partition[v] != s {
                    cut += a[u][v];
                }
            }
        }
        if vol == 0.0 {
            return Err(OracleError::Partition(format!(
                "cluster {s} has zero volume"
            )));
        }
        total += cut / vol;
    }
    Ok(0.5 * total)
}

/// Trace formulation on the indicator matrix `F = D^{1/2} H`, where column
/// `i` of `H` is `1_{S_i} / √vol(S_i)` (so `FᵀF = I_C`). Returns
/// `(tr(Fᵀ D^{-1/2} L D^{-1/2} F), C − tr(Fᵀ D^{-1/2} A D^{-1/2} F), FᵀF)`.
pub fn ncut_trace_form(
    a: &[Vec<f64>],
    partition: &[usize],
) -> Result<(f64, f64, Matrix), OracleError> {
    let k = check_square_symmetric(a)?;
    let c = cluster_count(partition, k)?;
    let deg = degrees(a);
    let mut vol = vec![0.0; c];
    for u in 0..k {
        vol[partition[u]] += deg[u];
    }
    if let Some(s) = vol.iter().position(|&v| v == 0.0) {
        return Err(OracleError::Partition(format!(
            "cluster {s} has zero volume"
        )));
    }
    // F = D^{1/2} H
    let f: Matrix = (0..k)
        .map(|u| {
            (0..c)
                .map(|s| {
                    if partition[u] == s {
                        deg[u].sqrt() / vol[s].sqrt()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let lap_norm: Matrix = (0..k)
        .map(|u| {
            (0..k)
                .map(|v| {
                    let l = if u == v { deg[u] - a[u][v] } else { -a[u][v] };
                    inv_sqrt[u] * l * inv_sqrt[v]
                })
                .collect()
        })
        .collect();
    let e: Matrix = (0..k)
        .map(|u| {
            (0..k)
                .map(|v| inv_sqrt[u] * a[u][v] * inv_sqrt[v])
                .collect()
        })
        .collect();
    let quad = |m: &Matrix| -> f64 {
        let mut t = 0.0;
        for s in 0..c {
            for u in 0..k {
                for v in 0..k {
                    t += f[u][s] * m[u][v] * f[v][s];
                }
            }
        }
        t
    };
    let gram: Matrix = (0..c)
        .map(|i| {
            (0..c)
                .map(|j| (0..k).map(|u| f[u][i] * f[u][j]).sum())
                .collect()
        })
        .collect();
    Ok((quad(&lap_norm), c as f64 - quad(&e), gram))
}

/// Every assignment of `k` nodes to exactly `c` nonempty clusters, as
/// restricted-growth label strings (each partition appears once).
pub fn all_partitions(k: usize, c: usize) -> Vec<Vec<usize>> {
    fn rec(
        pos: usize,
        k: usize,
        c: usize,
        used: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if pos == k {
            if used == c {
                out.push(cur.clone());
            }
            return;
        }
        // Not enough nodes left to open the remaining clusters.
        if c - used.min(c) > k - pos {
            return;
        }
        for label in 0..(used + 1).min(c) {
            cur.push(label);
            rec(pos + 1, k, c, used.max(label + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if c == 0 || c > k {
        return out;
    }
    rec(0, k, c, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Cyclic Jacobi rotations for a symmetric matrix. Returns eigenvalues in
/// descending order with matching unit eigenvectors as columns
/// (`vectors[row][col]`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix), OracleError> {
    let n = a.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(OracleError::Param(format!("row {i} is not length {n}")));
        }
        for j in 0..n {
            if (row[j] - a[j][i]).abs() > 1e-12 {
                return Err(OracleError::Param("matrix is not symmetric".into()));
            }
        }
    }
    let mut m: Matrix = a.to_vec();
    let mut v: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for r in 0..n {
                    let (mrp, mrq) = (m[r][p], m[r][q]);
                    m[r][p] = cs * mrp - sn * mrq;
                    m[r][q] = sn * mrp + cs * mrq;
                }
                for r in 0..n {
                    let (mpr, mqr) = (m[p][r], m[q][r]);
                    m[p][r] = cs * mpr - sn * mqr;
                    m[q][r] = sn * mpr + cs * mqr;
                }
                for r in 0..n {
                    let (vrp, vrq) = (v[r][p], v[r][q]);
                    v[r][p] = cs * vrp - sn * vrq;
                    v[r][q] = sn * vrp + cs * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j][j]
            .partial_cmp(&m[i][i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = (0..n)
        .map(|r| order.iter().map(|&c| v[r][c]).collect())
        .collect();
    Ok((values, vectors))
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    /// `K × C`, column-orthonormal; each column sign-fixed so its
    /// largest-magnitude entry is positive.
    pub assignment: Matrix,
    /// The `C` largest eigenvalues of `D^{-1/2} A D^{-1/2}`, descending.
    pub eigenvalues: Vec<f64>,
    /// Per-row argmax of `assignment`.
    pub partition: Vec<usize>,
}

/// Classical relaxation: top-`C` eigenvectors of `E = D^{-1/2} A D^{-1/2}`.
pub fn spectral_cluster_oracle(a: &[Vec<f64>], c: usize) -> Result<SpectralResult, OracleError> {
    let k = check_square_symmetric(a)?;
    if c == 0 || c > k {
        return Err(OracleError::Param(format!(
            "cluster count {c} for {k} nodes"
        )));
    }
    let deg = degrees(a);
    if let Some(u) = deg.iter().position(|&d| d == 0.0) {
        return Err(OracleError::Param(format!("node {u} is isolated")));
    }
    let e: Matrix = (0..k)
        .map(|u| (0..k).map(|v| a[u][v] / (deg[u] * deg[v]).sqrt()).collect())
        .collect();
    let (values, vectors) = jacobi_eigen(&e)?;
    let mut assignment: Matrix = (0..k).map(|r| vectors[r][..c].to_vec()).collect();
    for col in 0..c {
        let pivot = (0..k)
            .max_by(|&i, &j| {
                assignment[i][col]
                    .abs()
                    .partial_cmp(&assignment[j][col].abs())
                    .unwrap()
            })
            .unwrap();
        if assignment[pivot][col] < 0.0 {
            for row in assignment.iter_mut() {
                row[col] = -row[col];
            }
        }
    }
    let partition = assignment
        .iter()
        .map(|row| {
            (0..c)
                .max_by(|&i, &j| row[i].partial_cmp(&row[j]).unwrap().then(j.cmp(&i)))
                .unwrap()
        })
        .collect();
    Ok(SpectralResult {
        assignment,
        eigenvalues: values[..c].to_vec(),
        partition,
    })
}

/// Spectral radius of a symmetric matrix by power iteration on `A²`, which
/// converges even when `λ` and `−λ` are both extreme.
pub fn power_iteration_radius(a: &[Vec<f64>], iters: usize) -> f64 {
    let n = a.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| a[i].iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    };
    // Deterministic start with no symmetry to avoid orthogonality to the
    // leading eigenvector.
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64)
        .collect();
    let mut estimate = 0.0;
    for _ in 0..iters {
        let y = apply(&apply(&x));
        let norm_x: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_y: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_y == 0.0 {
            return 0.0;
        }
        estimate = (norm_y / norm_x).sqrt();
        x = y.iter().map(|v| v / norm_y).collect();
    }
    estimate
}
