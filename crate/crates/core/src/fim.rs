//! Fisher information under a Kronecker-structured selector.
//!
//! With circular white Gaussian noise of variance `sigma^2`, the Fisher
//! information of the selected data is
//! `(2 / sigma^2) * Re(J^H S^T S J)`, where `J` is the model Jacobian and
//! `S = S_1 (x) ... (x) S_q`. `S` is only ever applied as successive mode
//! products over the data cube.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{ForwardModel, JacobianTensor};
use crate::sampling::{AxisLayout, HardSelection, StructuredSelector};
use crate::C64;

/// Condition number above which [`crb`] regularizes before inverting.
pub const MAX_CONDITION: f64 = 1e12;

/// Multiply the tensor `data` (row-major, dims `dims`) along `axis` by the
/// square matrix `mat`.
pub(crate) fn mode_product(data: &[C64], dims: &[usize], axis: usize, mat: &DMatrix<f64>) -> Vec<C64> {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    for o in 0..outer {
        let base = o * n * inner;
        for a in 0..n {
            let dst = base + a * inner;
            for b in 0..n {
                let m = mat[(a, b)];
                if m == 0.0 {
                    continue;
                }
                let src = base + b * inner;
                for i in 0..inner {
                    out[dst + i] += data[src + i] * m;
                }
            }
        }
    }
    out
}

/// `S v` for `S = S_1 (x) S_2 (x) ... (x) S_q`, in `O(N_Pi * N_Sigma)`.
pub fn kron_apply(selector: &StructuredSelector, v: &[C64]) -> Result<Vec<C64>> {
    let dims = selector.dims();
    if dims.iter().product::<usize>() != v.len() {
        return Err(Error::invalid(format!(
            "selector dims {dims:?} do not match vector length {}",
            v.len()
        )));
    }
    let mut out = v.to_vec();
    for (axis, block) in selector.blocks().iter().enumerate() {
        out = mode_product(&out, &dims, axis, block);
    }
    Ok(out)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be positive, got {sigma}")));
    }
    Ok(())
}

/// Real symmetric Fisher information matrix, parameters ordered `[x, z, a, phi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix(pub DMatrix<f64>);

impl FisherMatrix {
    fn from_columns(cols: &[Vec<C64>], sigma: f64) -> Self {
        let p = cols.len();
        let scale = 2.0 / (sigma * sigma);
        let mut m = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                let s: f64 = cols[a].iter().zip(&cols[b]).map(|(u, v)| (u.conj() * v).re).sum();
                m[(a, b)] = scale * s;
            }
        }
        let sym = (&m + m.transpose()) * 0.5;
        FisherMatrix(sym)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// `(2/sigma^2) Re(V^H V)` with `V = S J`; symmetric blocks make this
/// `J^H S^T S J`.
pub fn fim(selector: &StructuredSelector, jac: &JacobianTensor, sigma: f64) -> Result<FisherMatrix> {
    check_sigma(sigma)?;
    let cols = jac
        .columns()
        .map(|c| kron_apply(selector, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(FisherMatrix::from_columns(&cols, sigma))
}

/// `(2/sigma^2) sum_p ||S j_p||^2`.
pub fn fim_trace(selector: &StructuredSelector, jac: &JacobianTensor, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let mut total = 0.0;
    for c in jac.columns() {
        total += kron_apply(selector, c)?.iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    Ok(2.0 / (sigma * sigma) * total)
}

/// Fisher information of the data rows `rows` only, i.e. for a 0/1 diagonal
/// projection.
pub fn fim_rows(rows: &[usize], jac: &JacobianTensor, sigma: f64) -> Result<FisherMatrix> {
    check_sigma(sigma)?;
    if rows.iter().any(|&r| r >= jac.rows()) {
        return Err(Error::invalid("row index outside the Jacobian"));
    }
    let cols: Vec<Vec<C64>> = jac
        .columns()
        .map(|c| rows.iter().map(|&r| c[r]).collect())
        .collect();
    Ok(FisherMatrix::from_columns(&cols, sigma))
}

/// Per-sample information weight `w[n] = sum_p |J[n, p]|^2`, averaged over a
/// batch of Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl WeightTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::invalid("weight tensor data does not match dims"));
        }
        if data.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights must be nonnegative and finite"));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

pub fn weight_tensor(jacs: &[JacobianTensor], dims: &[usize]) -> Result<WeightTensor> {
    let n: usize = dims.iter().product();
    if jacs.is_empty() {
        return Err(Error::invalid("weight tensor needs at least one Jacobian"));
    }
    let mut data = vec![0.0; n];
    for jac in jacs {
        if jac.rows() != n {
            return Err(Error::invalid("Jacobian rows do not match dims"));
        }
        for col in jac.columns() {
            for (w, v) in data.iter_mut().zip(col) {
                *w += v.norm_sqr();
            }
        }
    }
    let k = jacs.len() as f64;
    data.iter_mut().for_each(|w| *w /= k);
    WeightTensor::new(dims.to_vec(), data)
}

/// Trace of the Fisher information for a hard structured selection, as a
/// sum of weights over the selected grid.
pub fn fim_trace_hard(sel: &HardSelection, w: &WeightTensor, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let layout = AxisLayout::named(w.dims().to_vec(), sel.names().to_vec())?;
    sel.validate(&layout)?;
    let sum: f64 = sel.flat_rows(w.dims()).iter().map(|&n| w.as_slice()[n]).sum();
    Ok(2.0 / (sigma * sigma) * sum)
}

/// Inverse Fisher information with its regularization metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbMatrix {
    pub matrix: DMatrix<f64>,
    /// Whether jitter was added before inversion.
    pub regularized: bool,
    /// Condition number of the diagonally normalized Fisher matrix.
    pub condition: f64,
}

impl CrbMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Trace of the leading `k x k` block (the position parameters for `k = 2`).
    pub fn leading_trace(&self, k: usize) -> f64 {
        (0..k.min(self.matrix.nrows())).map(|i| self.matrix[(i, i)]).sum()
    }
}

/// Invert a Fisher matrix. The conditioning test and the jitter act on the
/// unit-diagonal normalization `D^-1/2 F D^-1/2`, so parameters measured in
/// different units do not trigger regularization by themselves. When the
/// normalized condition number exceeds [`MAX_CONDITION`], `jitter` (relative to
/// the normalized trace over `P`, which is 1) is added to its diagonal.
pub fn crb(f: &FisherMatrix, jitter: f64) -> Result<CrbMatrix> {
    let m = f.matrix();
    let p = m.nrows();
    if !m.is_square() || p == 0 {
        return Err(Error::invalid("Fisher matrix must be square and nonempty"));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::invalid("jitter must be nonnegative"));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax() {
        return Err(Error::invalid("Fisher matrix must be symmetric"));
    }
    let diag: Vec<f64> = (0..p).map(|i| m[(i, i)]).collect();
    if diag.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::SingularFim(format!(
            "a parameter carries no information (diagonal {diag:?})"
        )));
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut normalized = DMatrix::from_fn(p, p, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(normalized.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let regularized = condition > MAX_CONDITION;
    if regularized {
        for i in 0..p {
            normalized[(i, i)] += jitter;
        }
    }
    let chol = normalized.cholesky().ok_or_else(|| {
        Error::SingularFim(format!("not positive definite (condition {condition:e})"))
    })?;
    let inv = chol.inverse();
    let scaled = DMatrix::from_fn(p, p, |i, j| inv[(i, j)] * scale[i] * scale[j]);
    let matrix = (&scaled + scaled.transpose()) * 0.5;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFim("inverse is not finite".into()));
    }
    Ok(CrbMatrix {
        matrix,
        regularized,
        condition,
    })
}

/// Which data samples an evaluation keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    Full,
    Structured(HardSelection),
    /// Unstructured subset of vectorized sample indices.
    Flat(Vec<usize>),
}

impl Sampling {
    pub fn rows(&self, dims: &[usize]) -> Vec<usize> {
        match self {
            Sampling::Full => (0..dims.iter().product()).collect(),
            Sampling::Structured(sel) => sel.flat_rows(dims),
            Sampling::Flat(rows) => rows.clone(),
        }
    }

    /// Retained fraction of samples, `M_Pi / N_Pi`.
    pub fn compression_factor(&self, dims: &[usize]) -> f64 {
        self.rows(dims).len() as f64 / dims.iter().product::<usize>() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbSummary {
    /// `(Trace(CRB), position-only trace)` per scatterer; `None` if excluded.
    pub per_scatterer: Vec<Option<(f64, f64)>>,
    pub mean_trace: f64,
    pub mean_position: f64,
    pub excluded: usize,
    pub regularized: usize,
}

/// Mean CRB traces over precomputed Jacobians. Scatterers whose Fisher matrix
/// cannot be inverted are excluded and counted.
pub fn crb_summary_from_jacobians(
    sampling: &Sampling,
    jacs: &[JacobianTensor],
    dims: &[usize],
    sigma: f64,
    jitter: f64,
) -> Result<CrbSummary> {
    if jacs.is_empty() {
        return Err(Error::invalid("CRB summary needs a nonempty dataset"));
    }
    let rows = sampling.rows(dims);
    let mut per_scatterer = Vec::with_capacity(jacs.len());
    let mut regularized = 0;
    for jac in jacs {
        let f = fim_rows(&rows, jac, sigma)?;
        match crb(&f, jitter) {
            Ok(c) => {
                regularized += usize::from(c.regularized);
                per_scatterer.push(Some((c.trace(), c.leading_trace(2))));
            }
            Err(Error::SingularFim(_)) => per_scatterer.push(None),
            Err(e) => return Err(e),
        }
    }
    let kept: Vec<(f64, f64)> = per_scatterer.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::Evaluation(
            "every scatterer has a singular Fisher matrix".into(),
        ));
    }
    let k = kept.len() as f64;
    Ok(CrbSummary {
        mean_trace: kept.iter().map(|c| c.0).sum::<f64>() / k,
        mean_position: kept.iter().map(|c| c.1).sum::<f64>() / k,
        excluded: jacs.len() - kept.len(),
        regularized,
        per_scatterer,
    })
}

pub fn crb_summary(
    sampling: &Sampling,
    dataset: &crate::model::Dataset,
    model: &ForwardModel,
    sigma: f64,
    jitter: f64,
) -> Result<CrbSummary> {
    let jacs = dataset
        .scatterers
        .iter()
        .map(|s| model.jacobian(s))
        .collect::<Result<Vec<_>>>()?;
    crb_summary_from_jacobians(sampling, &jacs, &model.shape(), sigma, jitter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_dataset, Roi};
    use crate::sampling::AxisLayout;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_selector_is_identity() {
        let sel = StructuredSelector::identity(&[2, 3]);
        let v: Vec<C64> = (0..6).map(|k| c(k as f64, -(k as f64))).collect();
        assert_eq!(kron_apply(&sel, &v).unwrap(), v);
        assert!(kron_apply(&sel, &v[..5]).is_err());
    }

    #[test]
    fn hard_selector_masks_outside_grid() {
        let layout = AxisLayout::new(vec![3, 2]).unwrap();
        let hs = HardSelection::for_layout(&layout, vec![vec![0, 2], vec![1]]).unwrap();
        let sel = StructuredSelector::from_hard(&hs, &layout).unwrap();
        let v: Vec<C64> = (0..6).map(|k| c(k as f64 + 1.0, 0.5)).collect();
        let out = kron_apply(&sel, &v).unwrap();
        let keep = hs.flat_rows(layout.lengths());
        for (n, o) in out.iter().enumerate() {
            if keep.contains(&n) {
                assert_eq!(*o, v[n]);
            } else {
                assert_eq!(*o, c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn fim_single_column_norm_identity() {
        let col = vec![c(1.0, 2.0), c(0.0, -1.0), c(3.0, 0.0)];
        let k: f64 = col.iter().map(|v| v.norm_sqr()).sum();
        let jac = JacobianTensor::from_columns(&[col]).unwrap();
        let f = fim(&StructuredSelector::identity(&[3]), &jac, 0.5).unwrap();
        assert!((f.0[(0, 0)] - 2.0 * k / 0.25).abs() < 1e-12);
        let zero = StructuredSelector::new(vec![DMatrix::zeros(3, 3)]).unwrap();
        assert_eq!(fim(&zero, &jac, 0.5).unwrap().0, DMatrix::zeros(1, 1));
    }

    #[test]
    fn trace_identities() {
        let m = ForwardModel::new(
            crate::model::ArrayGeometry::new(3, 3, 0.3e-3).unwrap(),
            crate::model::PulseSpec::new(5e6, 0.6, 1540.0).unwrap(),
            crate::model::FrequencyGrid::band(&crate::model::PulseSpec::new(5e6, 0.6, 1540.0).unwrap(), 4).unwrap(),
        )
        .unwrap();
        let jac = m.jacobian(&crate::model::Scatterer::new(0.4e-3, 12e-3, 0.9, 1.0)).unwrap();
        let sigma = 0.3;
        let full = fim_trace(&StructuredSelector::identity(&[3, 3, 4]), &jac, sigma).unwrap();
        assert!((full / (2.0 / (sigma * sigma) * jac.frobenius_sq()) - 1.0).abs() < 1e-12);
        let f = fim(&StructuredSelector::identity(&[3, 3, 4]), &jac, sigma).unwrap();
        assert!((f.trace() / full - 1.0).abs() < 1e-12);

        // trace of a Kronecker product of diagonal projections on a constant
        // weight is the product of the block traces
        let layout = AxisLayout::new(vec![3, 3, 4]).unwrap();
        let hs = HardSelection::for_layout(&layout, vec![vec![0, 2], vec![1], vec![0, 1, 3]]).unwrap();
        let w = WeightTensor::new(vec![3, 3, 4], vec![1.0; 36]).unwrap();
        let t = fim_trace_hard(&hs, &w, 1.0).unwrap();
        assert_eq!(t, 2.0 * 2.0 * 1.0 * 3.0);

        let half = fim(&StructuredSelector::identity(&[3, 3, 4]), &jac, 2.0 * sigma).unwrap();
        assert_eq!(half.0, f.0.map(|v| v / 4.0));
    }

    #[test]
    fn weight_tensor_examples() {
        let mut col = vec![c(0.0, 0.0); 4];
        col[2] = c(0.0, 3.0);
        let jac = JacobianTensor::from_columns(&[col, vec![c(0.0, 0.0); 4]]).unwrap();
        let w = weight_tensor(std::slice::from_ref(&jac), &[2, 2]).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0, 9.0, 0.0]);
        let w2 = weight_tensor(&[jac.clone(), jac.clone()], &[2, 2]).unwrap();
        assert_eq!(w2, w);
        assert!((w.total() - jac.frobenius_sq()).abs() < 1e-12);
    }

    #[test]
    fn hard_trace_edge_cases() {
        let layout = AxisLayout::new(vec![2, 2]).unwrap();
        let w = WeightTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let full = HardSelection::full(&layout);
        assert_eq!(fim_trace_hard(&full, &w, 1.0).unwrap(), 20.0);
        let empty = HardSelection::for_layout(&layout, vec![vec![0, 1], vec![]]).unwrap();
        assert_eq!(fim_trace_hard(&empty, &w, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn crb_examples() {
        let d = FisherMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0, 0.5])));
        let inv = crb(&d, 1e-10).unwrap();
        assert!((inv.matrix[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((inv.matrix[(1, 1)] - 0.25).abs() < 1e-15);
        assert!((inv.matrix[(2, 2)] - 2.0).abs() < 1e-15);
        assert!(!inv.regularized);

        let f = FisherMatrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let inv = crb(&f, 1e-10).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]);
        assert!((inv.matrix - expect).amax() < 1e-15);

        let zero = FisherMatrix(DMatrix::zeros(2, 2));
        assert!(matches!(crb(&zero, 1e-10), Err(Error::SingularFim(_))));
    }

    #[test]
    fn rank_deficient_fim_is_regularized() {
        let f = FisherMatrix(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let inv = crb(&f, 1e-10).unwrap();
        assert!(inv.regularized);
        assert!(inv.trace() > 1e9);
        assert!(matches!(crb(&f, 0.0), Err(Error::SingularFim(_))));
    }

    #[test]
    fn summary_single_scatterer_and_monotone_in_information() {
        let m = ForwardModel::desk_default();
        let ds = generate_dataset(Roi::desk_default(), 1, (0.5, 1.5), 3).unwrap();
        let full = crb_summary(&Sampling::Full, &ds, &m, 0.1, 1e-10).unwrap();
        let jac = m.jacobian(&ds.scatterers[0]).unwrap();
        let single = crb(&fim_rows(&Sampling::Full.rows(&m.shape()), &jac, 0.1).unwrap(), 1e-10).unwrap();
        assert_eq!(full.mean_trace, single.trace());
        assert_eq!(full.excluded, 0);

        let layout = m.layout();
        let sub = HardSelection::for_layout(&layout, vec![vec![0, 7], vec![1, 4, 6], vec![3, 7, 8, 12]]).unwrap();
        let ds = generate_dataset(Roi::desk_default(), 16, (0.5, 1.5), 4).unwrap();
        let a = crb_summary(&Sampling::Full, &ds, &m, 0.1, 1e-10).unwrap();
        let b = crb_summary(&Sampling::Structured(sub), &ds, &m, 0.1, 1e-10).unwrap();
        assert!(b.mean_trace >= a.mean_trace);
        assert!(b.mean_position >= a.mean_position);
    }
}
