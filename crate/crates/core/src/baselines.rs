//! Reference selectors evaluated under the same conditions as the joint
//! sampler.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fim::WeightTensor;
use crate::model::{Dataset, ForwardModel, JacobianTensor};
use crate::sampling::{build_mask, gumbel_noise, hard_aux, soft_aux, topk_order, AxisLayout, HardSelection, Logits};
use crate::train::{
    anneal, dataset_jacobians, evaluate_groups, per_axis_groups, train_groups, Adam, StepRecord, TrainConfig,
    TrainReport,
};

/// Largest `N_Pi` the flat learned selector accepts. It holds an
/// `m x N_Pi` relaxation per step.
pub const FLAT_LIMIT: usize = 65_536;

fn round_toward(x: f64, center: f64) -> usize {
    let fl = x.floor();
    let frac = x - fl;
    let r = if frac > 0.5 || (frac == 0.5 && x < center) {
        fl + 1.0
    } else {
        fl
    };
    r as usize
}

/// Evenly spaced indices per axis. Half-way positions round toward the
/// middle of the axis so the pattern is mirror symmetric whenever a
/// symmetric pattern exists.
pub fn uniform_selection(alloc: &[usize], layout: &AxisLayout) -> Result<HardSelection> {
    if alloc.len() != layout.axes() {
        return Err(Error::invalid("one count per axis required"));
    }
    let mut indices = Vec::with_capacity(alloc.len());
    for (&m, &n) in alloc.iter().zip(layout.lengths()) {
        if m == 0 || m > n {
            return Err(Error::invalid(format!("count {m} outside 1..={n}")));
        }
        if m == 1 {
            indices.push(vec![(n - 1) / 2]);
            continue;
        }
        let center = (n - 1) as f64 / 2.0;
        let step = (n - 1) as f64 / (m - 1) as f64;
        let mut taken = vec![false; n];
        let mut idx = Vec::with_capacity(m);
        for k in 0..m {
            let mut i = round_toward(k as f64 * step, center).min(n - 1);
            while taken[i] {
                i = (i + 1) % n;
            }
            taken[i] = true;
            idx.push(i);
        }
        indices.push(idx);
    }
    HardSelection::for_layout(layout, indices)
}

/// Removal history of the greedy search.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    /// `(axis, index, Trace(J) after the removal)`.
    pub removals: Vec<(usize, usize, f64)>,
}

/// Odometer over every combination of active indices with `axis` pinned to
/// `pinned`; calls `f(flat_index, combo)`.
fn for_each_slice(active: &[Vec<usize>], dims: &[usize], axis: usize, pinned: usize, mut f: impl FnMut(usize, &[usize])) {
    let q = dims.len();
    if active.iter().enumerate().any(|(j, a)| j != axis && a.is_empty()) {
        return;
    }
    let mut pos = vec![0usize; q];
    let mut combo = vec![0usize; q];
    loop {
        let mut flat = 0;
        for j in 0..q {
            combo[j] = if j == axis { pinned } else { active[j][pos[j]] };
            flat = flat * dims[j] + combo[j];
        }
        f(flat, &combo);
        let mut advanced = false;
        for j in (0..q).rev() {
            if j == axis {
                continue;
            }
            pos[j] += 1;
            if pos[j] < active[j].len() {
                advanced = true;
                break;
            }
            pos[j] = 0;
        }
        if !advanced {
            return;
        }
    }
}

/// Backward elimination on the information weights. Each step removes the
/// active `(axis, index)` whose slice carries the least weight over the
/// remaining grid. `may_remove(axis, counts)` restricts the candidates;
/// `done(counts)` stops the search.
fn greedy_core(
    w: &WeightTensor,
    layout: &AxisLayout,
    sigma: f64,
    may_remove: impl Fn(usize, &[usize]) -> bool,
    done: impl Fn(&[usize]) -> bool,
) -> Result<(HardSelection, GreedyTrace)> {
    if w.dims() != layout.lengths() {
        return Err(Error::invalid("weight tensor does not match the layout"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("noise level must be positive"));
    }
    let dims = layout.lengths();
    let q = dims.len();
    let scale = 2.0 / (sigma * sigma);
    let weights = w.as_slice();

    let mut active: Vec<Vec<usize>> = dims.iter().map(|&n| (0..n).collect()).collect();
    let mut marginal: Vec<Vec<f64>> = dims.iter().map(|&n| vec![0.0; n]).collect();
    let mut idx = vec![0usize; q];
    for &v in weights {
        for j in 0..q {
            marginal[j][idx[j]] += v;
        }
        for j in (0..q).rev() {
            idx[j] += 1;
            if idx[j] < dims[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    let mut trace = scale * w.total();
    let mut removals = Vec::new();
    loop {
        let counts: Vec<usize> = active.iter().map(Vec::len).collect();
        if done(&counts) {
            break;
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for axis in 0..q {
            if !may_remove(axis, &counts) {
                continue;
            }
            for &k in &active[axis] {
                let delta = marginal[axis][k];
                if best.is_none_or(|(_, _, d)| delta < d) {
                    best = Some((axis, k, delta));
                }
            }
        }
        let (axis, k, delta) = best.ok_or_else(|| Error::invalid("greedy search has no admissible removal"))?;
        for_each_slice(&active, dims, axis, k, |flat, combo| {
            for j in 0..q {
                if j != axis {
                    marginal[j][combo[j]] -= weights[flat];
                }
            }
        });
        active[axis].retain(|&i| i != k);
        trace -= scale * delta;
        removals.push((axis, k, trace));
    }
    let sel = HardSelection::for_layout(layout, active)?;
    Ok((sel, GreedyTrace { removals }))
}

/// Greedy search down to a total budget `m`, keeping at least
/// `min_per_axis` entries per axis.
pub fn greedy_selection(
    w: &WeightTensor,
    m: usize,
    layout: &AxisLayout,
    min_per_axis: usize,
    sigma: f64,
) -> Result<(HardSelection, GreedyTrace)> {
    if m < layout.axes() * min_per_axis || m > layout.total() {
        return Err(Error::invalid(format!("greedy budget {m} infeasible")));
    }
    greedy_core(
        w,
        layout,
        sigma,
        |axis, counts| counts[axis] > min_per_axis,
        |counts| counts.iter().sum::<usize>() == m,
    )
}

/// Greedy search that reduces each axis to a fixed count.
pub fn greedy_selection_with_allocation(
    w: &WeightTensor,
    alloc: &[usize],
    layout: &AxisLayout,
    sigma: f64,
) -> Result<(HardSelection, GreedyTrace)> {
    if alloc.len() != layout.axes() || alloc.iter().zip(layout.lengths()).any(|(&m, &n)| m > n) {
        return Err(Error::invalid("allocation does not fit the layout"));
    }
    greedy_core(
        w,
        layout,
        sigma,
        |axis, counts| counts[axis] > alloc[axis],
        |counts| counts == alloc,
    )
}

/// Per-axis learned selector: one logits vector and one fixed budget per
/// axis, trained on the same objective as the joint sampler.
pub fn jdps_train(cfg: &TrainConfig, alloc: &[usize], model: &ForwardModel, dataset: &Dataset) -> Result<TrainReport> {
    let jacs = dataset_jacobians(model, dataset)?;
    jdps_train_with_jacobians(cfg, alloc, &model.layout(), &jacs)
}

pub fn jdps_train_with_jacobians(
    cfg: &TrainConfig,
    alloc: &[usize],
    layout: &AxisLayout,
    jacs: &[JacobianTensor],
) -> Result<TrainReport> {
    if alloc.len() != layout.axes() {
        return Err(Error::invalid("one budget per axis required"));
    }
    let cfg = TrainConfig {
        budget: alloc.iter().sum(),
        min_per_axis: 0,
        ..cfg.clone()
    };
    cfg.validate(layout)?;
    let groups = per_axis_groups(alloc);
    train_groups(&cfg, layout, jacs, &groups, "jdps", |phi| {
        let indices = (0..layout.axes())
            .map(|k| topk_order(&phi[layout.range(k)], alloc[k]))
            .collect::<Result<Vec<_>>>()?;
        HardSelection::for_layout(layout, indices)
    })
}

/// Which flat budget the unstructured selector compares at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatBudget {
    /// `M_Pi = prod M_i`, matching the compression factor.
    Product,
    /// `M_Sigma = sum M_i`.
    Sum,
}

impl FlatBudget {
    pub fn resolve(self, alloc: &[usize]) -> usize {
        match self {
            FlatBudget::Product => alloc.iter().product(),
            FlatBudget::Sum => alloc.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatReport {
    pub records: Vec<StepRecord>,
    pub logits: Logits,
    /// Selected vectorized sample indices, ascending.
    pub selection: Vec<usize>,
    pub total: usize,
}

impl FlatReport {
    /// `flat <N_Pi>: i_1 i_2 ...`
    pub fn selection_text(&self) -> String {
        let idx: Vec<String> = self.selection.iter().map(|i| i.to_string()).collect();
        format!("flat {}: {}\n", self.total, idx.join(" "))
    }

    pub fn parse_selection(text: &str) -> Result<(usize, Vec<usize>)> {
        let line = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or_else(|| Error::Parse("empty flat selection".into()))?;
        let bad = || Error::Parse("expected `flat <total>: <indices>`".into());
        let (head, list) = line.strip_prefix("flat ").ok_or_else(bad)?.split_once(':').ok_or_else(bad)?;
        let total = head.trim().parse().map_err(|_| bad())?;
        let idx = list
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad()))
            .collect::<Result<Vec<usize>>>()?;
        if idx.iter().any(|&i| i >= total) {
            return Err(Error::Parse("flat index out of range".into()));
        }
        Ok((total, idx))
    }
}

/// Per-sample weights `sum_p |J[n, p]|^2` for each Jacobian.
pub fn sample_weights(jacs: &[JacobianTensor]) -> Vec<Vec<f64>> {
    jacs.iter()
        .map(|j| {
            let mut w = vec![0.0; j.rows()];
            for col in j.columns() {
                for (wn, v) in w.iter_mut().zip(col) {
                    *wn += v.norm_sqr();
                }
            }
            w
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatLoss {
    pub total: f64,
    pub fim_term: f64,
    pub reg_term: f64,
    pub winners: Vec<usize>,
}

/// Objective of the flat selector over a single logits vector of length
/// `N_Pi`. The soft selector is the diagonal `d_n = sum_i R[i, n]^2` of the
/// relaxed Gram matrix, so the FIM trace is `(2/sigma^2) sum_n d_n^2 w_n`.
pub fn flat_loss_gradient(
    phi: &[f64],
    weights: &[f64],
    m: usize,
    cfg: &TrainConfig,
    tau: f64,
    noise: &[f64],
    want_grad: bool,
) -> Result<(FlatLoss, Option<Vec<f64>>)> {
    let n = phi.len();
    if weights.len() != n || noise.len() != n {
        return Err(Error::invalid("flat logits, weights and noise must have equal length"));
    }
    if n > FLAT_LIMIT {
        return Err(Error::ResourceLimit(format!("{n} samples exceed the flat limit {FLAT_LIMIT}")));
    }
    let scale = 2.0 / (cfg.sigma * cfg.sigma);
    let perturbed: Vec<f64> = phi.iter().zip(noise).map(|(p, g)| p + g).collect();
    let order = topk_order(&perturbed, m)?;
    let soft = soft_aux(&perturbed, &build_mask(&order, n)?, tau)?;
    let col_sq = |r: &DMatrix<f64>| -> Vec<f64> { (0..n).map(|j| r.column(j).norm_squared()).collect() };
    let d_soft = col_sq(&soft);
    let d_fwd = match cfg.mode {
        crate::train::Mode::Soft => d_soft.clone(),
        crate::train::Mode::StraightThrough => col_sq(&hard_aux(&order, n)),
    };
    let fim_term = scale * d_fwd.iter().zip(weights).map(|(d, w)| d * d * w).sum::<f64>();

    let clean_order = topk_order(phi, m)?;
    let clean = soft_aux(phi, &build_mask(&clean_order, n)?, tau)?;
    let reg_term = clean.norm_squared();
    let total = -fim_term - cfg.reg_weight * reg_term;
    if !total.is_finite() {
        return Err(Error::numerical(None, "non-finite flat loss"));
    }
    let terms = FlatLoss {
        total,
        fim_term,
        reg_term,
        winners: clean_order,
    };
    if !want_grad {
        return Ok((terms, None));
    }
    let mut grad = vec![0.0; n];
    let d_rows = DMatrix::from_fn(m, n, |i, j| -scale * 4.0 * d_soft[j] * weights[j] * soft[(i, j)]);
    crate::train::softmax_backward(&soft, &d_rows, tau, &mut grad);
    let d_rows = clean.map(|r| -cfg.reg_weight * 2.0 * r);
    crate::train::softmax_backward(&clean, &d_rows, tau, &mut grad);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical(None, "non-finite flat gradient"));
    }
    Ok((terms, Some(grad)))
}

/// Unstructured learned selector over all `N_Pi` samples.
pub fn dps_topk_train(cfg: &TrainConfig, m_flat: usize, model: &ForwardModel, dataset: &Dataset) -> Result<FlatReport> {
    let total = model.len();
    if total > FLAT_LIMIT {
        return Err(Error::ResourceLimit(format!(
            "flat selector over {total} samples needs an {m_flat} x {total} relaxation; limit is {FLAT_LIMIT} samples"
        )));
    }
    let jacs = dataset_jacobians(model, dataset)?;
    dps_topk_train_with_jacobians(cfg, m_flat, &jacs)
}

pub fn dps_topk_train_with_jacobians(cfg: &TrainConfig, m_flat: usize, jacs: &[JacobianTensor]) -> Result<FlatReport> {
    let total = jacs.first().map_or(0, JacobianTensor::rows);
    if total > FLAT_LIMIT {
        return Err(Error::ResourceLimit(format!("{total} samples exceed the flat limit {FLAT_LIMIT}")));
    }
    if jacs.is_empty() {
        return Err(Error::invalid("training needs a nonempty dataset"));
    }
    if m_flat == 0 || m_flat > total {
        return Err(Error::invalid(format!("flat budget {m_flat} outside 1..={total}")));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(cfg.tau_end > 0.0 && cfg.tau_start >= cfg.tau_end) {
        return Err(Error::invalid("invalid training configuration"));
    }
    let per_sample = sample_weights(jacs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut phi = vec![0.0; total];
    let mut adam = Adam::new(total, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let tau = anneal(step, cfg);
        let picks: Vec<usize> = if cfg.batch_size >= jacs.len() {
            (0..jacs.len()).collect()
        } else {
            index::sample(&mut rng, jacs.len(), cfg.batch_size).into_vec()
        };
        let mut w = vec![0.0; total];
        for &k in &picks {
            for (a, b) in w.iter_mut().zip(&per_sample[k]) {
                *a += b;
            }
        }
        w.iter_mut().for_each(|v| *v /= picks.len() as f64);
        let noise = gumbel_noise(total, &mut rng);
        let (terms, grad) =
            flat_loss_gradient(&phi, &w, m_flat, cfg, tau, &noise, true).map_err(|e| e.at_step(step))?;
        records.push(StepRecord {
            step,
            loss: terms.total,
            fim_trace: terms.fim_term,
            reg: terms.reg_term,
            tau,
            allocation: vec![m_flat],
        });
        adam.step(&mut phi, &grad.expect("gradient requested"));
    }
    let mut selection = topk_order(&phi, m_flat)?;
    selection.sort_unstable();
    Ok(FlatReport {
        records,
        logits: Logits(phi),
        selection,
        total,
    })
}

/// Re-export for callers that evaluate the per-axis objective directly.
pub fn jdps_loss_gradient(
    phi: &[f64],
    batch: &[&JacobianTensor],
    layout: &AxisLayout,
    alloc: &[usize],
    cfg: &TrainConfig,
    tau: f64,
    noise: &[f64],
) -> Result<(crate::train::LossTerms, Vec<f64>)> {
    let groups = per_axis_groups(alloc);
    let (t, g) = evaluate_groups(phi, batch, layout, &groups, cfg, tau, noise, true)?;
    Ok((t, g.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::fim_trace_hard;

    #[test]
    fn uniform_examples() {
        let layout = AxisLayout::new(vec![8, 8, 8]).unwrap();
        let sel = uniform_selection(&[4, 8, 1], &layout).unwrap();
        assert_eq!(sel.indices()[0], vec![0, 2, 5, 7]);
        assert_eq!(sel.indices()[1], (0..8).collect::<Vec<_>>());
        assert_eq!(sel.indices()[2], vec![3]);
        assert!(uniform_selection(&[0, 1, 1], &layout).is_err());
        assert!(uniform_selection(&[9, 1, 1], &layout).is_err());
    }

    #[test]
    fn uniform_is_mirror_symmetric_when_possible() {
        for n in 1..20usize {
            for m in 1..=n {
                if n % 2 == 0 && m % 2 == 1 {
                    continue;
                }
                let layout = AxisLayout::new(vec![n]).unwrap();
                let sel = uniform_selection(&[m], &layout).unwrap();
                let idx = &sel.indices()[0];
                assert_eq!(idx.len(), m);
                let mut mirror: Vec<usize> = idx.iter().map(|&k| n - 1 - k).collect();
                mirror.sort_unstable();
                assert_eq!(&mirror, idx, "n={n} m={m}");
            }
        }
    }

    #[test]
    fn greedy_one_axis_hand_trace() {
        let layout = AxisLayout::new(vec![3]).unwrap();
        let w = WeightTensor::new(vec![3], vec![3.0, 1.0, 2.0]).unwrap();
        let (sel, trace) = greedy_selection(&w, 2, &layout, 1, 1.0).unwrap();
        assert_eq!(sel.indices()[0], vec![0, 2]);
        assert_eq!(trace.removals, vec![(0, 1, 2.0 * 5.0)]);
    }

    #[test]
    fn greedy_uniform_weights_follow_tie_rule() {
        let layout = AxisLayout::new(vec![3, 3]).unwrap();
        let w = WeightTensor::new(vec![3, 3], vec![1.0; 9]).unwrap();
        let (sel, trace) = greedy_selection(&w, 4, &layout, 1, 1.0).unwrap();
        // equal slices: axis 0 goes first, then axis 1 (now the larger one)
        assert_eq!(trace.removals[0].0, 0);
        assert_eq!(trace.removals[0].1, 0);
        assert_eq!(trace.removals.len(), 2);
        assert_eq!(sel.counts(), vec![2, 2]);
        assert_eq!(sel.indices(), &[vec![1, 2], vec![1, 2]]);
    }

    #[test]
    fn greedy_trace_matches_hard_trace() {
        let layout = AxisLayout::new(vec![3, 4, 2]).unwrap();
        let data: Vec<f64> = (0..24).map(|k| ((k * 37 % 11) as f64 + 0.5).sqrt()).collect();
        let w = WeightTensor::new(vec![3, 4, 2], data).unwrap();
        let (sel, trace) = greedy_selection(&w, 5, &layout, 1, 0.7).unwrap();
        let direct = fim_trace_hard(&sel, &w, 0.7).unwrap();
        let last = trace.removals.last().unwrap().2;
        assert!((last - direct).abs() <= 1e-10 * direct);
        assert_eq!(trace.removals.len(), 9 - 5);
        let (fixed, _) = greedy_selection_with_allocation(&w, &[1, 2, 2], &layout, 0.7).unwrap();
        assert_eq!(fixed.counts(), vec![1, 2, 2]);
        assert!(greedy_selection(&w, 2, &layout, 1, 0.7).is_err());
    }

    #[test]
    fn flat_guard_refuses_paper_scale() {
        let pulse = crate::model::PulseSpec::new(5e6, 0.6, 1540.0).unwrap();
        let model = ForwardModel::new(
            crate::model::ArrayGeometry::new(64, 64, 0.3e-3).unwrap(),
            pulse,
            crate::model::FrequencyGrid::band(&pulse, 113).unwrap(),
        )
        .unwrap();
        assert_eq!(model.len(), 462_848);
        let ds = crate::model::generate_dataset(crate::model::Roi::desk_default(), 1, (1.0, 1.0), 0).unwrap();
        let err = dps_topk_train(&TrainConfig::default(), 4096, &model, &ds).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit(_)));
    }

    #[test]
    fn flat_selection_text_round_trip() {
        let r = FlatReport {
            records: vec![],
            logits: Logits(vec![]),
            selection: vec![1, 5, 6],
            total: 8,
        };
        let text = r.selection_text();
        assert_eq!(text, "flat 8: 1 5 6\n");
        assert_eq!(FlatReport::parse_selection(&text).unwrap(), (8, vec![1, 5, 6]));
        assert!(FlatReport::parse_selection("flat 4: 9").is_err());
    }
}
