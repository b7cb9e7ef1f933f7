//! Independent dense reference implementations. Shared by the integration
//! tests here and the acceptance target in the cli crate.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use scosara_core::model::JacobianTensor;

pub fn random_jacobian<R: Rng>(rows: usize, params: usize, rng: &mut R) -> JacobianTensor {
    let cols: Vec<Vec<C64>> = (0..params)
        .map(|_| {
            (0..rows)
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    JacobianTensor::from_columns(&cols).unwrap()
}

pub fn random_block<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

/// `B_0 (x) B_1 (x) ...`, axis 0 slowest.
pub fn dense_kron(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for b in blocks {
        out = out.kronecker(b);
    }
    out
}

pub fn dense_apply(s: &DMatrix<f64>, v: &[C64]) -> Vec<C64> {
    (0..s.nrows())
        .map(|i| (0..s.ncols()).map(|j| v[j] * s[(i, j)]).sum())
        .collect()
}

/// `(2/sigma^2) Re(J^H S^T S J)` with everything materialized.
pub fn dense_fim(s: &DMatrix<f64>, jac: &JacobianTensor, sigma: f64) -> DMatrix<f64> {
    let p = jac.params();
    let n = jac.rows();
    let sc: DMatrix<C64> = s.map(|x| C64::new(x, 0.0));
    let j = DMatrix::from_fn(n, p, |r, c| jac.column(c)[r]);
    let v = &sc * &j;
    let g = v.adjoint() * &v;
    g.map(|z| z.re) * (2.0 / (sigma * sigma))
}

/// Top-`m` order by value, ties to the lower index.
pub fn order_desc(values: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Relaxed rows with an explicit `{0, -inf}` mask matrix.
pub fn dense_rows(values: &[f64], m: usize, tau: f64) -> DMatrix<f64> {
    let n = values.len();
    let order = order_desc(values, m);
    let mut mask = DMatrix::zeros(m, n);
    for i in 0..m {
        for &k in &order[..i] {
            mask[(i, k)] = f64::NEG_INFINITY;
        }
    }
    let mut rows = DMatrix::zeros(m, n);
    for i in 0..m {
        let z: Vec<f64> = (0..n).map(|j| (values[j] + mask[(i, j)]) / tau).collect();
        let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
        let s: f64 = e.iter().sum();
        for j in 0..n {
            rows[(i, j)] = e[j] / s;
        }
    }
    rows
}

pub fn diagonal_blocks(psi: &DMatrix<f64>, lengths: &[usize]) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    let mut o = 0;
    for &n in lengths {
        out.push(psi.view((o, o), (n, n)).into_owned());
        o += n;
    }
    out
}

/// Soft joint-sampler loss evaluated densely.
pub fn dense_loss(
    phi: &[f64],
    noise: &[f64],
    lengths: &[usize],
    budget: usize,
    tau: f64,
    sigma: f64,
    reg_weight: f64,
    d: &[f64],
    batch: &[JacobianTensor],
) -> f64 {
    let perturbed: Vec<f64> = phi.iter().zip(noise).map(|(a, b)| a + b).collect();
    let r = dense_rows(&perturbed, budget, tau);
    let psi = r.transpose() * &r;
    let s = dense_kron(&diagonal_blocks(&psi, lengths));
    let fim_mean = batch.iter().map(|j| dense_fim(&s, j, sigma).trace()).sum::<f64>() / batch.len() as f64;
    let rc = dense_rows(phi, budget, tau);
    let psi_c = rc.transpose() * &rc;
    let reg: f64 = (0..phi.len()).map(|k| d[k] * psi_c[(k, k)]).sum();
    -fim_mean - reg_weight * reg
}

/// Backward elimination recomputing the full trace for every candidate.
/// Ties go to the lower axis, then the lower index.
pub fn naive_greedy(w: &[f64], dims: &[usize], target: impl Fn(&[usize]) -> bool, may_remove: impl Fn(usize, &[usize]) -> bool) -> Vec<Vec<usize>> {
    let mut active: Vec<Vec<usize>> = dims.iter().map(|&n| (0..n).collect()).collect();
    let trace_of = |act: &[Vec<usize>]| -> f64 {
        let mut total = 0.0;
        let mut idx = vec![0usize; dims.len()];
        for &v in w {
            if idx.iter().enumerate().all(|(j, i)| act[j].contains(i)) {
                total += v;
            }
            for j in (0..dims.len()).rev() {
                idx[j] += 1;
                if idx[j] < dims[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        total
    };
    loop {
        let counts: Vec<usize> = active.iter().map(Vec::len).collect();
        if target(&counts) {
            return active;
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for axis in 0..dims.len() {
            if !may_remove(axis, &counts) {
                continue;
            }
            for &k in &active[axis] {
                let mut trial = active.clone();
                trial[axis].retain(|&i| i != k);
                let t = trace_of(&trial);
                if best.is_none_or(|(_, _, b)| t > b) {
                    best = Some((axis, k, t));
                }
            }
        }
        let (axis, k, _) = best.expect("a removal is admissible");
        active[axis].retain(|&i| i != k);
    }
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
