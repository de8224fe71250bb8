#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sefdi::grid::{self, Case};
use sefdi::measurement;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Connected random topology on buses `1..=n`: a random spanning tree plus a
/// few extra lines. Returns `(from, to)` pairs.
pub fn random_topology(rng: &mut TestRng, n: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.push((order[i], order[j]));
    }
    let extra = rng.random_range(0..=n / 2);
    for _ in 0..extra {
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            edges.push((a, b));
        }
    }
    edges
}

fn buses_json(n: usize, reference: usize) -> Vec<Value> {
    (1..=n).map(|id| json!({"id": id, "ref": id == reference})).collect()
}

/// Observable DC case with at least one redundant meter, built from a random
/// subset of active-power flow and injection meters.
pub fn random_dc_case(rng: &mut TestRng, max_buses: usize) -> Case {
    loop {
        let n = rng.random_range(2..=max_buses);
        let edges = random_topology(rng, n);
        let reference = rng.random_range(1..=n);
        let branches: Vec<Value> = edges
            .iter()
            .map(|&(f, t)| json!({"from": f, "to": t, "r": 0.0, "x": rng.random_range(0.05..0.5)}))
            .collect();
        let mut meters = Vec::new();
        for &(f, t) in &edges {
            for (a, b) in [(f, t), (t, f)] {
                if rng.random_bool(0.5) {
                    meters.push(json!({"kind": "flow_p", "from": a, "to": b, "sigma": rng.random_range(0.005..0.05)}));
                }
            }
        }
        for bus in 1..=n {
            if rng.random_bool(0.4) {
                meters.push(json!({"kind": "injection_p", "bus": bus, "sigma": rng.random_range(0.005..0.05)}));
            }
        }
        let doc = json!({"buses": buses_json(n, reference), "branches": branches, "measurements": meters});
        let Ok(case) = grid::parse_case(&doc.to_string()) else { continue };
        if case.measurements.len() < n {
            continue;
        }
        if grid::check_observability(&case.network, &case.measurements).unwrap().observable {
            return case;
        }
    }
}

/// Lossy network with line charging and every AC meter kind everywhere.
pub fn random_ac_case(rng: &mut TestRng, max_buses: usize) -> Case {
    let n = rng.random_range(2..=max_buses);
    let edges = random_topology(rng, n);
    let reference = rng.random_range(1..=n);
    let branches: Vec<Value> = edges
        .iter()
        .map(|&(f, t)| {
            json!({"from": f, "to": t, "r": rng.random_range(0.005..0.08), "x": rng.random_range(0.05..0.4),
                   "bs": rng.random_range(0.0..0.05)})
        })
        .collect();
    let mut meters = Vec::new();
    for &(f, t) in &edges {
        for (a, b) in [(f, t), (t, f)] {
            for kind in ["flow_p", "flow_q", "current_magnitude"] {
                meters.push(json!({"kind": kind, "from": a, "to": b, "sigma": 0.01}));
            }
        }
    }
    for bus in 1..=n {
        for kind in ["injection_p", "injection_q", "voltage_magnitude"] {
            meters.push(json!({"kind": kind, "bus": bus, "sigma": 0.01}));
        }
    }
    let doc = json!({"buses": buses_json(n, reference), "branches": branches, "measurements": meters});
    grid::parse_case(&doc.to_string()).expect("generated AC case parses")
}

/// Random AC free state: angles within ±0.3 rad, magnitudes within 0.9..1.1.
pub fn random_ac_state(rng: &mut TestRng, case: &Case) -> Vec<f64> {
    let n = case.network.n_buses();
    let mut x: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-0.3..0.3)).collect();
    x.extend((0..n).map(|_| rng.random_range(0.9..1.1)));
    x
}

pub fn dc_h(case: &Case) -> DMatrix<f64> {
    measurement::dc_jacobian(&case.network, &case.measurements).unwrap().0
}

pub fn random_vector(rng: &mut TestRng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// Inverse by Gauss-Jordan elimination with partial pivoting on plain
/// row-major vectors.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))?;
        if aug[pivot][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (v, p) in aug[row].iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// WLS estimate from scratch: `(HᵀWH)⁻¹ HᵀWz` with loops and the
/// Gauss-Jordan inverse.
pub fn wls_oracle(h: &DMatrix<f64>, sigmas: &[f64], z: &DVector<f64>) -> Vec<f64> {
    let (m, k) = (h.nrows(), h.ncols());
    let w: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let mut gain = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for a in 0..k {
        for b in 0..k {
            gain[a][b] = (0..m).map(|i| h[(i, a)] * w[i] * h[(i, b)]).sum();
        }
        rhs[a] = (0..m).map(|i| h[(i, a)] * w[i] * z[i]).sum();
    }
    let inv = gauss_jordan_inverse(&gain).expect("gain invertible");
    (0..k).map(|a| (0..k).map(|b| inv[a][b] * rhs[b]).sum()).collect()
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Exact rank of an integer matrix by fraction-free elimination; each
/// updated row is divided by the gcd of its entries.
pub fn exact_rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let m = a.len();
    let k = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..k {
        let Some(p) = (rank..m).find(|&i| a[i][col] != 0) else { continue };
        a.swap(rank, p);
        let pivot = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[col];
            if f == 0 {
                continue;
            }
            for j in col..k {
                row[j] = row[j] * pivot[col] - f * pivot[j];
            }
            let g = row.iter().fold(0, |g, &v| gcd(g, v));
            if g > 1 {
                row.iter_mut().for_each(|v| *v /= g);
            }
        }
        rank += 1;
        if rank == m {
            break;
        }
    }
    rank
}

/// Random small integer matrix; some rows are copies or multiples of others
/// so rank deficiency is common.
pub fn random_integer_matrix(rng: &mut TestRng, m: usize, k: usize) -> Vec<Vec<i64>> {
    let mut rows: Vec<Vec<i64>> = Vec::with_capacity(m);
    for _ in 0..m {
        if !rows.is_empty() && rng.random_bool(0.3) {
            let src = rows[rng.random_range(0..rows.len())].clone();
            let f = rng.random_range(-2..=2);
            rows.push(src.iter().map(|v| v * f).collect());
        } else {
            rows.push((0..k).map(|_| rng.random_range(-3..=3)).collect());
        }
    }
    rows
}

pub fn to_matrix(rows: &[Vec<i64>]) -> DMatrix<f64> {
    let m = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(m, k, |i, j| rows[i][j] as f64)
}
