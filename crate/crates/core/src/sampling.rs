//! Differentiable sampling without replacement over a concatenated logits
//! vector.
//!
//! The logits of every axis are stacked into one vector of length `N_Sigma`.
//! Perturbing them with Gumbel noise and taking the top `M_Sigma` entries is an
//! exact draw without replacement; relaxing each successive argmax into a
//! masked softmax yields a row-stochastic `M_Sigma x N_Sigma` matrix whose Gram
//! matrix carries one soft selector block per axis on its diagonal. Which axis
//! each winner falls into is what allocates the budget.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Axis lengths in vectorization order and their offsets into the joint
/// logits vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisLayout {
    lengths: Vec<usize>,
    offsets: Vec<usize>,
    names: Vec<String>,
}

impl AxisLayout {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        let names = (0..lengths.len()).map(|i| format!("axis{i}")).collect();
        Self::named(lengths, names)
    }

    pub fn named(lengths: Vec<usize>, names: Vec<String>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::invalid("layout needs at least one axis"));
        }
        if lengths.contains(&0) {
            return Err(Error::invalid("axis lengths must be positive"));
        }
        if names.len() != lengths.len() {
            return Err(Error::invalid("one name per axis required"));
        }
        if names.iter().any(|n| n.is_empty() || n.contains(char::is_whitespace) || n.contains(':')) {
            return Err(Error::invalid("axis names must be nonempty words without ':'"));
        }
        let offsets = lengths
            .iter()
            .scan(0, |acc, n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect();
        Ok(Self {
            lengths,
            offsets,
            names,
        })
    }

    pub fn axes(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `N_Sigma`.
    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// `N_Pi`.
    pub fn product(&self) -> usize {
        self.lengths.iter().product()
    }

    pub fn range(&self, axis: usize) -> std::ops::Range<usize> {
        self.offsets[axis]..self.offsets[axis] + self.lengths[axis]
    }

    /// Axis and local index of a joint logits position.
    pub fn locate(&self, n: usize) -> Option<(usize, usize)> {
        if n >= self.total() {
            return None;
        }
        let axis = self.offsets.partition_point(|&o| o <= n) - 1;
        Some((axis, n - self.offsets[axis]))
    }
}

/// Real logits vector, the only trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn zeros(n: usize) -> Self {
        Logits(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn perturbed(&self, noise: &[f64]) -> Logits {
        Logits(self.0.iter().zip(noise).map(|(p, g)| p + g).collect())
    }
}

/// Standard Gumbel variate from a uniform draw on `(0, 1)`.
#[inline]
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

pub fn gumbel_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            // random() is on [0, 1); reject the endpoint so ln stays finite
            let mut u: f64 = rng.random();
            while u == 0.0 {
                u = rng.random();
            }
            gumbel_from_uniform(u)
        })
        .collect()
}

fn rank_cmp(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b].total_cmp(&values[a]).then(a.cmp(&b))
}

/// Indices of the `m` largest entries in decreasing order, lower index first
/// on ties.
pub fn topk_order(values: &[f64], m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > values.len() {
        return Err(Error::invalid(format!(
            "budget {m} outside 1..={}",
            values.len()
        )));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| rank_cmp(values, a, b));
    idx.truncate(m);
    Ok(idx)
}

/// `{0, -inf}` mask: row `i` excludes the first `i` winners. Stored as the
/// winner order; [`MaskMatrix::to_dense`] materializes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    order: Vec<usize>,
    cols: usize,
}

impl MaskMatrix {
    pub fn rows(&self) -> usize {
        self.order.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.order[..row].contains(&col)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.cols];
        for &c in &self.order[..i] {
            r[c] = f64::NEG_INFINITY;
        }
        r
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.cols, |i, j| {
            if self.is_masked(i, j) {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        })
    }
}

pub fn build_mask(order: &[usize], n: usize) -> Result<MaskMatrix> {
    let mut seen = vec![false; n];
    for &k in order {
        if k >= n {
            return Err(Error::invalid(format!("winner index {k} out of range {n}")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::invalid(format!("duplicate winner index {k}")));
        }
    }
    if order.is_empty() {
        return Err(Error::invalid("mask needs at least one row"));
    }
    Ok(MaskMatrix {
        order: order.to_vec(),
        cols: n,
    })
}

/// Row `i` is `softmax((phi_tilde + W[i]) / tau)`; masked entries are exact
/// zeros.
pub fn soft_aux(phi_tilde: &[f64], w: &MaskMatrix, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    if phi_tilde.len() != w.cols() {
        return Err(Error::invalid("logits length does not match mask width"));
    }
    let n = w.cols();
    let mut out = DMatrix::zeros(w.rows(), n);
    let mut masked = vec![false; n];
    for i in 0..w.rows() {
        if i > 0 {
            masked[w.order[i - 1]] = true;
        }
        let peak = (0..n)
            .filter(|&j| !masked[j])
            .map(|j| phi_tilde[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("row {i} of the mask excludes every entry")));
        }
        let mut total = 0.0;
        for j in (0..n).filter(|&j| !masked[j]) {
            let e = ((phi_tilde[j] - peak) / tau).exp();
            out[(i, j)] = e;
            total += e;
        }
        for j in 0..n {
            out[(i, j)] /= total;
        }
    }
    Ok(out)
}

/// One-hot rows of the winners, the forward value of the straight-through
/// estimator.
pub fn hard_aux(order: &[usize], n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(order.len(), n);
    for (i, &k) in order.iter().enumerate() {
        out[(i, k)] = 1.0;
    }
    out
}

/// `Phi^T Phi`. Rows are put into a canonical order first so the result is
/// bit-identical under any row permutation of the input.
pub fn gram(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = phi.shape();
    let mut rows: Vec<usize> = (0..m).collect();
    rows.sort_by(|&a, &b| {
        (0..n)
            .map(|j| phi[(a, j)].total_cmp(&phi[(b, j)]))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let s: f64 = rows.iter().map(|&i| phi[(i, a)] * phi[(i, b)]).sum();
            out[(a, b)] = s;
            out[(b, a)] = s;
        }
    }
    out
}

/// Per-axis selector blocks. Soft blocks come from the diagonal of a Gram
/// matrix; hard blocks are 0/1 diagonal projections.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSelector {
    blocks: Vec<DMatrix<f64>>,
}

impl StructuredSelector {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("selector needs at least one block"));
        }
        if blocks.iter().any(|b| !b.is_square() || b.nrows() == 0) {
            return Err(Error::invalid("selector blocks must be square and nonempty"));
        }
        Ok(Self { blocks })
    }

    pub fn identity(lengths: &[usize]) -> Self {
        Self {
            blocks: lengths.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        }
    }

    pub fn from_hard(sel: &HardSelection, layout: &AxisLayout) -> Result<Self> {
        sel.validate(layout)?;
        let blocks = sel
            .indices()
            .iter()
            .zip(layout.lengths())
            .map(|(idx, &n)| {
                let mut b = DMatrix::zeros(n, n);
                for &k in idx {
                    b[(k, k)] = 1.0;
                }
                b
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.blocks
            .iter()
            .all(|b| (b - b.transpose()).amax() <= tol)
    }
}

pub fn extract_blocks(psi: &DMatrix<f64>, layout: &AxisLayout) -> Result<StructuredSelector> {
    if psi.nrows() != layout.total() || psi.ncols() != layout.total() {
        return Err(Error::invalid(format!(
            "Gram matrix is {}x{}, layout expects {}",
            psi.nrows(),
            psi.ncols(),
            layout.total()
        )));
    }
    let blocks = (0..layout.axes())
        .map(|k| {
            let o = layout.offsets()[k];
            let n = layout.lengths()[k];
            psi.view((o, o), (n, n)).into_owned()
        })
        .collect();
    StructuredSelector::new(blocks)
}

/// Winners per axis.
pub fn allocation(order: &[usize], layout: &AxisLayout) -> Vec<usize> {
    let mut counts = vec![0; layout.axes()];
    for &n in order {
        if let Some((axis, _)) = layout.locate(n) {
            counts[axis] += 1;
        }
    }
    counts
}

/// Sorted selected indices per axis, with axis names for serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardSelection {
    names: Vec<String>,
    indices: Vec<Vec<usize>>,
}

impl HardSelection {
    pub fn new(names: Vec<String>, mut indices: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != indices.len() {
            return Err(Error::invalid("one name per axis required"));
        }
        for idx in indices.iter_mut() {
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid("selection indices must be unique"));
            }
        }
        Ok(Self { names, indices })
    }

    pub fn for_layout(layout: &AxisLayout, indices: Vec<Vec<usize>>) -> Result<Self> {
        let sel = Self::new(layout.names().to_vec(), indices)?;
        sel.validate(layout)?;
        Ok(sel)
    }

    pub fn full(layout: &AxisLayout) -> Self {
        Self {
            names: layout.names().to_vec(),
            indices: layout.lengths().iter().map(|&n| (0..n).collect()).collect(),
        }
    }

    /// Build from joint logits positions.
    pub fn from_winners(winners: &[usize], layout: &AxisLayout) -> Result<Self> {
        let mut indices = vec![Vec::new(); layout.axes()];
        for &n in winners {
            let (axis, k) = layout
                .locate(n)
                .ok_or_else(|| Error::invalid(format!("winner {n} out of range")))?;
            indices[axis].push(k);
        }
        Self::for_layout(layout, indices)
    }

    pub fn validate(&self, layout: &AxisLayout) -> Result<()> {
        if self.indices.len() != layout.axes() {
            return Err(Error::invalid(format!(
                "selection has {} axes, layout has {}",
                self.indices.len(),
                layout.axes()
            )));
        }
        for (idx, &n) in self.indices.iter().zip(layout.lengths()) {
            if idx.iter().any(|&k| k >= n) {
                return Err(Error::invalid(format!("selection index out of range {n}")));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    /// `(M_1, ..., M_q)`.
    pub fn counts(&self) -> Vec<usize> {
        self.indices.iter().map(Vec::len).collect()
    }

    /// `M_Sigma`.
    pub fn total(&self) -> usize {
        self.indices.iter().map(Vec::len).sum()
    }

    /// `M_Pi`.
    pub fn product(&self) -> usize {
        self.indices.iter().map(Vec::len).product()
    }

    /// Flat row indices of the selected grid in row-major vectorization order.
    pub fn flat_rows(&self, lengths: &[usize]) -> Vec<usize> {
        let mut rows = vec![0usize];
        for (idx, &n) in self.indices.iter().zip(lengths) {
            rows = rows
                .iter()
                .flat_map(|&r| idx.iter().map(move |&k| r * n + k))
                .collect();
        }
        if self.indices.iter().any(Vec::is_empty) {
            rows.clear();
        }
        rows
    }

    /// `axis <name>: i_1 i_2 ...`, one line per axis.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, idx) in self.names.iter().zip(&self.indices) {
            let _ = write!(s, "axis {name}:");
            for k in idx {
                let _ = write!(s, " {k}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut indices = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Parse(format!("line {}: expected `axis <name>: <indices>`", lineno + 1));
            let rest = line.strip_prefix("axis ").ok_or_else(bad)?;
            let (name, list) = rest.split_once(':').ok_or_else(bad)?;
            let idx = list
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            names.push(name.trim().to_string());
            indices.push(idx);
        }
        if names.is_empty() {
            return Err(Error::Parse("selection file has no axis lines".into()));
        }
        Self::new(names, indices)
    }
}

/// Noiseless top-`m` selection of the logits, bucketed per axis. Axes left
/// with fewer than `min_per_axis` winners take over the lowest-ranked surplus
/// winners of other axes, filled with their own best unselected entries.
pub fn harden(phi: &[f64], layout: &AxisLayout, m: usize, min_per_axis: usize) -> Result<HardSelection> {
    if phi.len() != layout.total() {
        return Err(Error::invalid("logits length does not match layout"));
    }
    if m < layout.axes() * min_per_axis || m > layout.total() {
        return Err(Error::invalid(format!(
            "budget {m} infeasible for {} axes with at least {min_per_axis} each (N_Sigma = {})",
            layout.axes(),
            layout.total()
        )));
    }
    if layout.lengths().iter().any(|&n| n < min_per_axis) {
        return Err(Error::invalid("an axis is shorter than min_per_axis"));
    }
    let mut ranked = topk_order(phi, m)?;
    let mut counts = allocation(&ranked, layout);
    for axis in 0..layout.axes() {
        while counts[axis] < min_per_axis {
            let pos = ranked
                .iter()
                .rposition(|&n| counts[layout.locate(n).unwrap().0] > min_per_axis)
                .ok_or_else(|| Error::invalid("no surplus winner available for repair"))?;
            let donor = ranked.remove(pos);
            counts[layout.locate(donor).unwrap().0] -= 1;
            let replacement = layout
                .range(axis)
                .filter(|n| !ranked.contains(n))
                .min_by(|&a, &b| rank_cmp(phi, a, b))
                .expect("axis has an unselected entry while below min_per_axis");
            ranked.push(replacement);
            counts[axis] += 1;
        }
    }
    HardSelection::from_winners(&ranked, layout)
}

/// Diagonal of the priority matrix `D`, concatenated over axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityWeights(Vec<f64>);

impl PriorityWeights {
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("priority weights must be nonnegative and finite"));
        }
        Ok(Self(d))
    }

    /// One weight per axis, broadcast over that axis' entries.
    pub fn per_axis(layout: &AxisLayout, weights: &[f64]) -> Result<Self> {
        if weights.len() != layout.axes() {
            return Err(Error::invalid("one priority weight per axis required"));
        }
        Self::new(
            layout
                .lengths()
                .iter()
                .zip(weights)
                .flat_map(|(&n, &w)| std::iter::repeat_n(w, n))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Trace(D Psi)`.
pub fn regularizer(psi: &DMatrix<f64>, d: &PriorityWeights) -> Result<f64> {
    if psi.nrows() != d.len() || !psi.is_square() {
        return Err(Error::invalid("priority weights do not match the Gram matrix"));
    }
    Ok(d.as_slice().iter().enumerate().map(|(n, w)| w * psi[(n, n)]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gumbel_transform_values() {
        assert_eq!(gumbel_from_uniform((-1.0f64).exp()), 0.0);
        let g = gumbel_from_uniform((-std::f64::consts::E).exp());
        assert!((g + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let g = gumbel_noise(1_000_000, &mut ChaCha8Rng::seed_from_u64(0));
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "{mean}");
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_order(&[0.5, 2.0, -1.0, 1.0], 2).unwrap(), vec![1, 3]);
        assert_eq!(topk_order(&[1.0; 5], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(topk_order(&[0.5, 2.0, -1.0, 1.0], 4).unwrap(), vec![1, 3, 0, 2]);
        assert!(topk_order(&[1.0, 2.0], 0).is_err());
        assert!(topk_order(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn mask_examples() {
        let w = build_mask(&[1, 3], 4).unwrap();
        assert_eq!(w.row(0), vec![0.0; 4]);
        assert_eq!(w.row(1), vec![0.0, f64::NEG_INFINITY, 0.0, 0.0]);
        let single = build_mask(&[2], 4).unwrap();
        assert_eq!(single.rows(), 1);
        assert_eq!(single.row(0), vec![0.0; 4]);
        assert!(build_mask(&[1, 1], 4).is_err());
        assert!(build_mask(&[4], 4).is_err());
    }

    #[test]
    fn mask_rows_are_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = gumbel_noise(12, &mut rng);
            let order = topk_order(&g, 7).unwrap();
            let dense = build_mask(&order, 12).unwrap().to_dense();
            for i in 0..7 {
                let inf = dense.row(i).iter().filter(|v| v.is_infinite()).count();
                assert_eq!(inf, i);
                if i > 0 {
                    for j in 0..12 {
                        if dense[(i - 1, j)].is_infinite() {
                            assert!(dense[(i, j)].is_infinite());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn soft_aux_examples() {
        let w = build_mask(&[0], 2).unwrap();
        let r = soft_aux(&[0.0, 0.0], &w, 1.0).unwrap();
        assert_eq!(r.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
        let w = build_mask(&[1], 2).unwrap();
        let r = soft_aux(&[0.0, 3f64.ln()], &w, 1.0).unwrap();
        assert!((r[(0, 0)] - 0.25).abs() < 1e-15 && (r[(0, 1)] - 0.75).abs() < 1e-15);
        assert!(soft_aux(&[0.0, 0.0], &w, 0.0).is_err());
    }

    #[test]
    fn soft_aux_low_temperature_is_one_hot() {
        let phi = [0.3, -1.0, 2.2, 0.9, 1.7];
        let order = topk_order(&phi, 4).unwrap();
        let w = build_mask(&order, 5).unwrap();
        let soft = soft_aux(&phi, &w, 1e-6).unwrap();
        let hard = hard_aux(&order, 5);
        assert!((soft - hard).amax() < 1e-9);
    }

    #[test]
    fn gram_examples() {
        assert_eq!(gram(&DMatrix::identity(2, 2)), DMatrix::identity(2, 2));
        let g = gram(&DMatrix::from_row_slice(1, 2, &[0.5, 0.5]));
        assert_eq!(g, DMatrix::from_element(2, 2, 0.25));
        assert_eq!(g.trace(), 0.5);
    }

    #[test]
    fn blocks_partition_the_trace() {
        let layout = AxisLayout::new(vec![2, 2]).unwrap();
        let sel = extract_blocks(&DMatrix::identity(4, 4), &layout).unwrap();
        assert!(sel.blocks().iter().all(|b| *b == DMatrix::identity(2, 2)));
        let phi = [0.1, 0.7, -0.3, 0.2, 1.1];
        let layout = AxisLayout::new(vec![3, 2]).unwrap();
        let order = topk_order(&phi, 3).unwrap();
        let psi = gram(&soft_aux(&phi, &build_mask(&order, 5).unwrap(), 0.7).unwrap());
        let sel = extract_blocks(&psi, &layout).unwrap();
        assert!(sel.is_symmetric(0.0));
        let sum: f64 = sel.blocks().iter().map(|b| b.trace()).sum();
        assert!((sum - psi.trace()).abs() < 1e-15);
        assert!(extract_blocks(&psi, &AxisLayout::new(vec![2, 2]).unwrap()).is_err());
    }

    #[test]
    fn allocation_examples() {
        let layout = AxisLayout::new(vec![2, 4]).unwrap();
        assert_eq!(allocation(&[0, 1, 5], &layout), vec![2, 1]);
        assert_eq!(allocation(&[0, 1], &layout), vec![2, 0]);
    }

    #[test]
    fn harden_examples() {
        let layout = AxisLayout::new(vec![3, 3]).unwrap();
        let sel = harden(&[3.0, 2.0, 1.0, 2.5, 1.5, 0.5], &layout, 4, 1).unwrap();
        assert_eq!(sel.indices(), &[vec![0, 1], vec![0, 1]]);
        let full = harden(&[0.0; 6], &layout, 6, 1).unwrap();
        assert_eq!(full.counts(), vec![3, 3]);

        let layout = AxisLayout::new(vec![2, 2]).unwrap();
        let sel = harden(&[5.0, 4.0, 0.0, -1.0], &layout, 2, 1).unwrap();
        assert_eq!(sel.indices(), &[vec![0], vec![0]]);
        assert!(harden(&[0.0; 4], &layout, 1, 1).is_err());
    }

    #[test]
    fn uniform_logits_harden_to_prefix() {
        let layout = AxisLayout::new(vec![4, 4, 4]).unwrap();
        let sel = harden(&[0.0; 12], &layout, 6, 1).unwrap();
        assert_eq!(sel.indices(), &[vec![0, 1, 2, 3], vec![0], vec![0]]);
    }

    #[test]
    fn regularizer_examples() {
        let one_hot = hard_aux(&[2, 0, 3], 5);
        let psi = gram(&one_hot);
        let d = PriorityWeights::ones(5);
        assert_eq!(regularizer(&psi, &d).unwrap(), 3.0);
        let half = PriorityWeights::new(vec![0.5; 5]).unwrap();
        assert_eq!(regularizer(&psi, &half).unwrap(), 1.5);
        let uniform = DMatrix::from_element(3, 5, 0.2);
        let r = regularizer(&gram(&uniform), &d).unwrap();
        assert!((r - 3.0 / 5.0).abs() < 1e-15);
        assert!(PriorityWeights::new(vec![-1.0]).is_err());
    }

    #[test]
    fn selection_text_round_trip() {
        let layout = AxisLayout::named(vec![4, 3], vec!["tx".into(), "rx".into()]).unwrap();
        let sel = HardSelection::for_layout(&layout, vec![vec![3, 0], vec![1]]).unwrap();
        let text = sel.to_text();
        assert_eq!(text, "axis tx: 0 3\naxis rx: 1\n");
        assert_eq!(HardSelection::parse(&text).unwrap(), sel);
        assert!(HardSelection::parse("axis tx 1 2").is_err());
        assert!(HardSelection::parse("").is_err());
    }

    #[test]
    fn flat_rows_follow_vectorization() {
        let layout = AxisLayout::new(vec![2, 3, 2]).unwrap();
        let sel = HardSelection::for_layout(&layout, vec![vec![1], vec![0, 2], vec![1]]).unwrap();
        assert_eq!(sel.flat_rows(layout.lengths()), vec![(3) * 2 + 1, (3 + 2) * 2 + 1]);
    }
}
