//! Learning the joint logits vector.
//!
//! One loss evaluation runs two branches over the same logits:
//!
//! - the noisy branch perturbs the logits with Gumbel noise, draws the top
//!   `M_Sigma` winners, relaxes each draw into a masked softmax row, forms the
//!   Gram matrix and keeps its per-axis diagonal blocks as the soft selector.
//!   Its value is the batch-mean trace of the Fisher information under that
//!   selector.
//! - the noiseless branch repeats the construction without noise and yields
//!   the regularizer `Trace(D Psi)`.
//!
//! The loss is `-fim_term - reg_weight * reg_term`. The gradient is derived by
//! hand through every stage (Kronecker contraction, Gram blocks, masked
//! softmax); the Gumbel noise is held fixed.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fim::mode_product;
use crate::model::{Dataset, ForwardModel, JacobianTensor};
use crate::sampling::{
    allocation, build_mask, gram, gumbel_noise, hard_aux, harden, soft_aux, topk_order, AxisLayout,
    HardSelection, Logits, PriorityWeights,
};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Soft selector blocks in both the forward value and the gradient.
    Soft,
    /// One-hot rows in the forward value, soft-row gradient.
    StraightThrough,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Mode::Soft),
            "straight_through" => Ok(Mode::StraightThrough),
            _ => Err(Error::invalid(format!("unknown mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Soft => "soft",
            Mode::StraightThrough => "straight_through",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total number of selected entries `M_Sigma`.
    pub budget: usize,
    pub steps: usize,
    /// Scatterers per step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Multiplier on `Trace(D Psi)`.
    pub reg_weight: f64,
    /// Diagonal of `D`; all ones when `None`.
    pub priority: Option<PriorityWeights>,
    pub sigma: f64,
    pub seed: u64,
    pub mode: Mode,
    pub min_per_axis: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budget: 12,
            steps: 300,
            batch_size: 8,
            learning_rate: 0.05,
            tau_start: 1.0,
            tau_end: 0.1,
            reg_weight: 1.0,
            priority: None,
            sigma: 1.0,
            seed: 0,
            mode: Mode::Soft,
            min_per_axis: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, layout: &AxisLayout) -> Result<()> {
        let q = layout.axes();
        if self.budget < q * self.min_per_axis || self.budget > layout.total() {
            return Err(Error::invalid(format!(
                "budget {} outside {}..={}",
                self.budget,
                q * self.min_per_axis,
                layout.total()
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.tau_end > 0.0 && self.tau_start >= self.tau_end && self.tau_start.is_finite()) {
            return Err(Error::invalid("temperatures must satisfy tau_start >= tau_end > 0"));
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::invalid("regularizer weight must be nonnegative"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("noise level must be positive"));
        }
        if let Some(d) = &self.priority {
            if d.len() != layout.total() {
                return Err(Error::invalid("priority weights must cover every logit"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::invalid("invalid optimizer moments"));
        }
        Ok(())
    }

    fn priority_or_ones(&self, n: usize) -> PriorityWeights {
        self.priority.clone().unwrap_or_else(|| PriorityWeights::ones(n))
    }
}

/// Geometric schedule from `tau_start` at step 0 to `tau_end` at the last step.
pub fn anneal(step: usize, cfg: &TrainConfig) -> f64 {
    if cfg.steps <= 1 {
        return cfg.tau_start;
    }
    let frac = step as f64 / (cfg.steps - 1) as f64;
    cfg.tau_start * (cfg.tau_end / cfg.tau_start).powf(frac)
}

/// A contiguous run of axes sampled from one logits segment with its own
/// budget. The joint sampler is a single group over all axes; the per-axis
/// baseline uses one group per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub axes: Range<usize>,
    pub budget: usize,
}

impl Group {
    fn columns(&self, layout: &AxisLayout) -> Range<usize> {
        let start = layout.offsets()[self.axes.start];
        let last = self.axes.end - 1;
        start..layout.offsets()[last] + layout.lengths()[last]
    }
}

pub fn joint_groups(layout: &AxisLayout, budget: usize) -> Vec<Group> {
    vec![Group {
        axes: 0..layout.axes(),
        budget,
    }]
}

pub fn per_axis_groups(alloc: &[usize]) -> Vec<Group> {
    alloc
        .iter()
        .enumerate()
        .map(|(k, &m)| Group {
            axes: k..k + 1,
            budget: m,
        })
        .collect()
}

fn check_groups(groups: &[Group], layout: &AxisLayout) -> Result<()> {
    let mut next = 0;
    for g in groups {
        if g.axes.start != next || g.axes.end <= g.axes.start || g.axes.end > layout.axes() {
            return Err(Error::invalid("groups must tile the axes in order"));
        }
        let width = g.columns(layout).len();
        if g.budget == 0 || g.budget > width {
            return Err(Error::invalid(format!("group budget {} outside 1..={width}", g.budget)));
        }
        next = g.axes.end;
    }
    if next != layout.axes() {
        return Err(Error::invalid("groups must cover every axis"));
    }
    Ok(())
}

/// Loss value and its parts for one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    /// Batch-mean `Trace(J)`.
    pub fim_term: f64,
    /// `Trace(D Psi)` of the noiseless branch.
    pub reg_term: f64,
    /// Winners of the noisy draw, in joint logits positions.
    pub noisy_winners: Vec<usize>,
    /// Winners of the noiseless draw.
    pub winners: Vec<usize>,
}

struct Branch {
    cols: Range<usize>,
    order: Vec<usize>,
    soft: DMatrix<f64>,
}

fn branch(logits: &[f64], cols: Range<usize>, budget: usize, tau: f64) -> Result<Branch> {
    let seg = &logits[cols.clone()];
    let order = topk_order(seg, budget)?;
    let mask = build_mask(&order, seg.len())?;
    let soft = soft_aux(seg, &mask, tau)?;
    Ok(Branch { cols, order, soft })
}

/// Per-axis selector blocks from the row matrices of every group.
fn selector_blocks(rows: &[(&Group, &DMatrix<f64>)], layout: &AxisLayout) -> Vec<DMatrix<f64>> {
    let mut blocks = Vec::with_capacity(layout.axes());
    for (g, r) in rows {
        let psi = gram(r);
        let base = layout.offsets()[g.axes.start];
        for k in g.axes.clone() {
            let lo = layout.offsets()[k] - base;
            let n = layout.lengths()[k];
            blocks.push(psi.view((lo, lo), (n, n)).into_owned());
        }
    }
    blocks
}

/// `sum_other 2 Re(conj(v) * u)` contracted over every axis except `axis`.
fn contract(v: &[C64], u: &[C64], dims: &[usize], axis: usize) -> DMatrix<f64> {
    let n = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut g = DMatrix::zeros(n, n);
    for o in 0..outer {
        let base = o * n * inner;
        for a in 0..n {
            let va = &v[base + a * inner..base + (a + 1) * inner];
            for b in 0..n {
                let ub = &u[base + b * inner..base + (b + 1) * inner];
                let s: f64 = va.iter().zip(ub).map(|(x, y)| (x.conj() * y).re).sum();
                g[(a, b)] += 2.0 * s;
            }
        }
    }
    g
}

/// Batch-mean FIM trace under the Kronecker product of `blocks`, and
/// optionally its derivative with respect to each block.
fn fim_term(
    blocks: &[DMatrix<f64>],
    batch: &[&JacobianTensor],
    sigma: f64,
    want_grad: bool,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let dims: Vec<usize> = blocks.iter().map(|b| b.nrows()).collect();
    let n: usize = dims.iter().product();
    let scale = 2.0 / (sigma * sigma) / batch.len() as f64;
    let mut total = 0.0;
    let mut grads: Vec<DMatrix<f64>> = if want_grad {
        dims.iter().map(|&d| DMatrix::zeros(d, d)).collect()
    } else {
        Vec::new()
    };
    for jac in batch {
        if jac.rows() != n {
            return Err(Error::invalid("Jacobian rows do not match the selector"));
        }
        for col in jac.columns() {
            if !want_grad {
                let mut v = col.to_vec();
                for (k, b) in blocks.iter().enumerate() {
                    v = mode_product(&v, &dims, k, b);
                }
                total += v.iter().map(|x| x.norm_sqr()).sum::<f64>();
                continue;
            }
            // u[k] = col with every block but k applied
            let partial: Vec<Vec<C64>> = (0..blocks.len())
                .map(|k| {
                    let mut u = col.to_vec();
                    for (l, b) in blocks.iter().enumerate() {
                        if l != k {
                            u = mode_product(&u, &dims, l, b);
                        }
                    }
                    u
                })
                .collect();
            let v = mode_product(&partial[0], &dims, 0, &blocks[0]);
            total += v.iter().map(|x| x.norm_sqr()).sum::<f64>();
            for (k, u) in partial.iter().enumerate() {
                grads[k] += contract(&v, u, &dims, k);
            }
        }
    }
    grads.iter_mut().for_each(|g| *g *= scale);
    Ok((scale * total, grads))
}

/// Accumulate `dL/dlogits` for rows `r_i = softmax((logits + W_i) / tau)`
/// given `dL/dR`.
pub(crate) fn softmax_backward(soft: &DMatrix<f64>, d_rows: &DMatrix<f64>, tau: f64, out: &mut [f64]) {
    for i in 0..soft.nrows() {
        let dot: f64 = (0..soft.ncols()).map(|j| soft[(i, j)] * d_rows[(i, j)]).sum();
        for j in 0..soft.ncols() {
            let r = soft[(i, j)];
            if r != 0.0 {
                out[j] += r * (d_rows[(i, j)] - dot) / tau;
            }
        }
    }
}

/// The shared objective for any grouping of the axes.
pub fn evaluate_groups(
    phi: &[f64],
    batch: &[&JacobianTensor],
    layout: &AxisLayout,
    groups: &[Group],
    cfg: &TrainConfig,
    tau: f64,
    noise: &[f64],
    want_grad: bool,
) -> Result<(LossTerms, Option<Vec<f64>>)> {
    let n = layout.total();
    if phi.len() != n || noise.len() != n {
        return Err(Error::invalid("logits and noise must match the layout"));
    }
    if batch.is_empty() {
        return Err(Error::invalid("batch must be nonempty"));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(None, "non-finite logits"));
    }
    check_groups(groups, layout)?;
    let d = cfg.priority_or_ones(n);
    let perturbed: Vec<f64> = phi.iter().zip(noise).map(|(p, g)| p + g).collect();

    let noisy = groups
        .iter()
        .map(|g| branch(&perturbed, g.columns(layout), g.budget, tau))
        .collect::<Result<Vec<_>>>()?;
    let clean = groups
        .iter()
        .map(|g| branch(phi, g.columns(layout), g.budget, tau))
        .collect::<Result<Vec<_>>>()?;

    // forward value of the FIM term
    let hard_rows: Vec<DMatrix<f64>>;
    let forward_rows: Vec<(&Group, &DMatrix<f64>)> = match cfg.mode {
        Mode::Soft => groups.iter().zip(&noisy).map(|(g, b)| (g, &b.soft)).collect(),
        Mode::StraightThrough => {
            hard_rows = noisy.iter().map(|b| hard_aux(&b.order, b.cols.len())).collect();
            groups.iter().zip(&hard_rows).collect()
        }
    };
    let forward_blocks = selector_blocks(&forward_rows, layout);
    let soft_mode = cfg.mode == Mode::Soft;
    let (fim_value, fim_grads) = fim_term(&forward_blocks, batch, cfg.sigma, want_grad && soft_mode)?;

    let mut reg = 0.0;
    for b in &clean {
        let w = &d.as_slice()[b.cols.clone()];
        for i in 0..b.soft.nrows() {
            for (j, wj) in w.iter().enumerate() {
                let r = b.soft[(i, j)];
                reg += wj * r * r;
            }
        }
    }
    let total = -fim_value - cfg.reg_weight * reg;
    if !(total.is_finite() && fim_value.is_finite() && reg.is_finite()) {
        return Err(Error::numerical(None, format!("non-finite loss (fim {fim_value}, reg {reg})")));
    }
    let offset_winners = |branches: &[Branch]| -> Vec<usize> {
        branches
            .iter()
            .flat_map(|b| b.order.iter().map(move |k| b.cols.start + k))
            .collect()
    };
    let terms = LossTerms {
        total,
        fim_term: fim_value,
        reg_term: reg,
        noisy_winners: offset_winners(&noisy),
        winners: offset_winners(&clean),
    };
    if !want_grad {
        return Ok((terms, None));
    }

    let fim_grads = if soft_mode {
        fim_grads
    } else {
        let soft_rows: Vec<(&Group, &DMatrix<f64>)> =
            groups.iter().zip(&noisy).map(|(g, b)| (g, &b.soft)).collect();
        fim_term(&selector_blocks(&soft_rows, layout), batch, cfg.sigma, true)?.1
    };

    let mut grad = vec![0.0; n];
    for (g, b) in groups.iter().zip(&noisy) {
        // dL/dR from the loss' -fim_term through Psi blocks
        let base = b.cols.start;
        let mut d_rows = DMatrix::zeros(b.soft.nrows(), b.soft.ncols());
        for k in g.axes.clone() {
            let gk = &fim_grads[k];
            let sym = -(gk + gk.transpose());
            let lo = layout.offsets()[k] - base;
            let nk = layout.lengths()[k];
            let r_blk = b.soft.columns(lo, nk);
            let d_blk = r_blk * sym;
            d_rows.columns_mut(lo, nk).copy_from(&d_blk);
        }
        softmax_backward(&b.soft, &d_rows, tau, &mut grad[b.cols.clone()]);
    }
    for b in &clean {
        let w = &d.as_slice()[b.cols.clone()];
        let d_rows = DMatrix::from_fn(b.soft.nrows(), b.soft.ncols(), |i, j| {
            -cfg.reg_weight * 2.0 * w[j] * b.soft[(i, j)]
        });
        softmax_backward(&b.soft, &d_rows, tau, &mut grad[b.cols.clone()]);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(None, "non-finite gradient"));
    }
    Ok((terms, Some(grad)))
}

/// Loss of the joint sampler for a fixed noise realization `noise`.
pub fn loss(
    phi: &[f64],
    batch: &[&JacobianTensor],
    layout: &AxisLayout,
    cfg: &TrainConfig,
    tau: f64,
    noise: &[f64],
) -> Result<LossTerms> {
    let groups = joint_groups(layout, cfg.budget);
    Ok(evaluate_groups(phi, batch, layout, &groups, cfg, tau, noise, false)?.0)
}

/// Gradient of the soft loss for the same noise realization as [`loss`].
pub fn loss_gradient(
    phi: &[f64],
    batch: &[&JacobianTensor],
    layout: &AxisLayout,
    cfg: &TrainConfig,
    tau: f64,
    noise: &[f64],
) -> Result<(LossTerms, Vec<f64>)> {
    let groups = joint_groups(layout, cfg.budget);
    let (terms, grad) = evaluate_groups(phi, batch, layout, &groups, cfg, tau, noise, true)?;
    Ok((terms, grad.expect("gradient requested")))
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descent step on `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub fim_trace: f64,
    pub reg: f64,
    pub tau: f64,
    /// Per-axis counts of the noiseless top-`M_Sigma` draw at this step.
    pub allocation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub method: String,
    pub budget: usize,
    pub seed: u64,
    pub layout: AxisLayout,
    pub records: Vec<StepRecord>,
    pub logits: Logits,
    pub selection: HardSelection,
}

impl TrainReport {
    /// `key = value` header, a blank line, then a CSV body with one row per
    /// step.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "budget = {}", self.budget);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "steps = {}", self.records.len());
        let axes: Vec<String> = self
            .layout
            .names()
            .iter()
            .zip(self.layout.lengths())
            .map(|(n, l)| format!("{n}:{l}"))
            .collect();
        let _ = writeln!(s, "layout = {}", axes.join(" "));
        let alloc: Vec<String> = self.selection.counts().iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "allocation = {}", alloc.join(" "));
        let logits: Vec<String> = self.logits.as_slice().iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "logits = {}", logits.join(" "));
        s.push('\n');
        s.push_str("step,loss,fim_trace,reg,tau");
        for name in self.layout.names() {
            let _ = write!(s, ",M_{name}");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{:e},{:e},{:e},{:e}", r.step, r.loss, r.fim_trace, r.reg, r.tau);
            for m in &r.allocation {
                let _ = write!(s, ",{m}");
            }
            s.push('\n');
        }
        s
    }
}

/// Gradient-descent loop shared by the joint sampler and the per-axis
/// baseline; `finish` turns the final logits into a selection.
pub(crate) fn train_groups(
    cfg: &TrainConfig,
    layout: &AxisLayout,
    jacs: &[JacobianTensor],
    groups: &[Group],
    method: &str,
    finish: impl FnOnce(&[f64]) -> Result<HardSelection>,
) -> Result<TrainReport> {
    check_groups(groups, layout)?;
    if jacs.is_empty() {
        return Err(Error::invalid("training needs a nonempty dataset"));
    }
    let n = layout.total();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut phi = vec![0.0; n];
    let mut adam = Adam::new(n, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let tau = anneal(step, cfg);
        let batch: Vec<&JacobianTensor> = if cfg.batch_size >= jacs.len() {
            jacs.iter().collect()
        } else {
            index::sample(&mut rng, jacs.len(), cfg.batch_size)
                .into_iter()
                .map(|k| &jacs[k])
                .collect()
        };
        let noise = gumbel_noise(n, &mut rng);
        let (terms, grad) = evaluate_groups(&phi, &batch, layout, groups, cfg, tau, &noise, true)
            .map_err(|e| e.at_step(step))?;
        records.push(StepRecord {
            step,
            loss: terms.total,
            fim_trace: terms.fim_term,
            reg: terms.reg_term,
            tau,
            allocation: allocation(&terms.winners, layout),
        });
        adam.step(&mut phi, &grad.expect("gradient requested"));
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(Some(step), "non-finite logits after update"));
        }
    }
    let selection = finish(&phi)?;
    Ok(TrainReport {
        method: method.to_string(),
        budget: groups.iter().map(|g| g.budget).sum(),
        seed: cfg.seed,
        layout: layout.clone(),
        records,
        logits: Logits(phi),
        selection,
    })
}

pub fn dataset_jacobians(model: &ForwardModel, dataset: &Dataset) -> Result<Vec<JacobianTensor>> {
    dataset.scatterers.iter().map(|s| model.jacobian(s)).collect()
}

/// Train the joint logits over every axis and harden them with the
/// `min_per_axis` repair.
pub fn train(cfg: &TrainConfig, model: &ForwardModel, dataset: &Dataset) -> Result<TrainReport> {
    let layout = model.layout();
    let jacs = dataset_jacobians(model, dataset)?;
    train_with_jacobians(cfg, &layout, &jacs)
}

pub fn train_with_jacobians(cfg: &TrainConfig, layout: &AxisLayout, jacs: &[JacobianTensor]) -> Result<TrainReport> {
    cfg.validate(layout)?;
    let groups = joint_groups(layout, cfg.budget);
    train_groups(cfg, layout, jacs, &groups, "scosara", |phi| {
        harden(phi, layout, cfg.budget, cfg.min_per_axis)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anneal_schedule() {
        let cfg = TrainConfig {
            steps: 11,
            tau_start: 2.0,
            tau_end: 0.02,
            ..TrainConfig::default()
        };
        assert_eq!(anneal(0, &cfg), 2.0);
        assert!((anneal(10, &cfg) - 0.02).abs() < 1e-15);
        assert!((anneal(5, &cfg) - 0.2).abs() < 1e-12);
        let flat = TrainConfig {
            tau_start: 0.5,
            tau_end: 0.5,
            ..cfg.clone()
        };
        assert!((0..11).all(|s| anneal(s, &flat) == 0.5));
        let single = TrainConfig { steps: 1, ..cfg };
        assert_eq!(anneal(0, &single), 2.0);
    }

    #[test]
    fn config_validation() {
        let layout = AxisLayout::new(vec![4, 4, 4]).unwrap();
        assert!(TrainConfig::default().validate(&layout).is_ok());
        let bad = [
            TrainConfig { budget: 2, ..Default::default() },
            TrainConfig { budget: 13, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { tau_end: 2.0, ..Default::default() },
            TrainConfig { reg_weight: -1.0, ..Default::default() },
            TrainConfig { sigma: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate(&layout).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-7 && (p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn groups_must_tile_axes() {
        let layout = AxisLayout::new(vec![2, 3]).unwrap();
        assert!(check_groups(&joint_groups(&layout, 3), &layout).is_ok());
        assert!(check_groups(&per_axis_groups(&[1, 2]), &layout).is_ok());
        assert!(check_groups(&per_axis_groups(&[1]), &layout).is_err());
        assert!(check_groups(&per_axis_groups(&[3, 1]), &layout).is_err());
    }
}
