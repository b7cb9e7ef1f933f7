//! The four subcommands. Each writes its outputs through a [`RunManifest`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scosara_core::baselines::{
    dps_topk_train_with_jacobians, greedy_selection_with_allocation, jdps_train_with_jacobians, uniform_selection,
    FlatReport,
};
use scosara_core::fim::{crb_summary_from_jacobians, weight_tensor};
use scosara_core::model::{generate_dataset, JacobianTensor};
use scosara_core::recovery::{
    build_dictionary, correlation_peak, fista, fixed_point_residual, measurements, metrics, noisy_measurements,
    pair_scenario, truth_image, RoiGrid,
};
use scosara_core::train::{dataset_jacobians, train_with_jacobians};
use scosara_core::{AxisLayout, Error, ForwardModel, HardSelection, Result, Sampling, TrainReport, WeightTensor, C64};

use crate::config::{derive_seed, ExperimentConfig};
use crate::manifest::RunManifest;
use crate::output::{csv_bytes, heatmap, line_chart, num, Series};

/// Model, layout and the training and evaluation Jacobians for one config.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub model: ForwardModel,
    pub layout: AxisLayout,
    pub dims: Vec<usize>,
    pub train_jacs: Vec<JacobianTensor>,
    pub eval_jacs: Vec<JacobianTensor>,
    pub weights: WeightTensor,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model.build()?;
        let layout = model.layout();
        let dims = model.shape().to_vec();
        let roi = cfg.dataset.roi.roi()?;
        let amps = (cfg.dataset.amplitude_min, cfg.dataset.amplitude_max);
        let train_ds = generate_dataset(roi, cfg.dataset.train_size, amps, derive_seed(cfg.seed, "train-dataset", 0))?;
        let eval_ds = generate_dataset(roi, cfg.dataset.eval_size, amps, derive_seed(cfg.seed, "eval-dataset", 0))?;
        let train_jacs = dataset_jacobians(&model, &train_ds)?;
        let eval_jacs = dataset_jacobians(&model, &eval_ds)?;
        let weights = weight_tensor(&train_jacs, &dims)?;
        Ok(Self {
            cfg: cfg.clone(),
            model,
            layout,
            dims,
            train_jacs,
            eval_jacs,
            weights,
        })
    }

    pub fn feasible(&self, budget: usize) -> bool {
        budget >= self.layout.axes() * self.cfg.train.min_per_axis && budget <= self.layout.total()
    }

    pub fn scosara(&self, budget: usize) -> Result<TrainReport> {
        let seed = derive_seed(self.cfg.seed, "scosara", budget);
        let tc = self.cfg.train.to_train_config(&self.layout, budget, seed)?;
        train_with_jacobians(&tc, &self.layout, &self.train_jacs)
    }

    /// Selection of `method` at `budget`; the fixed-allocation baselines use
    /// the allocation learned by `joint`.
    pub fn select(&self, method: &str, budget: usize, joint: &TrainReport) -> Result<(Sampling, String)> {
        let alloc = joint.selection.counts();
        let structured = |s: HardSelection| {
            let text = s.to_text();
            (Sampling::Structured(s), text)
        };
        match method {
            "scosara" => Ok(structured(joint.selection.clone())),
            "uniform" => Ok(structured(uniform_selection(&alloc, &self.layout)?)),
            "greedy" => {
                let (s, _) = greedy_selection_with_allocation(&self.weights, &alloc, &self.layout, self.cfg.train.sigma)?;
                Ok(structured(s))
            }
            "jdps" => {
                let seed = derive_seed(self.cfg.seed, "jdps", budget);
                let tc = self.cfg.train.to_train_config(&self.layout, budget, seed)?;
                let rep = jdps_train_with_jacobians(&tc, &alloc, &self.layout, &self.train_jacs)?;
                Ok(structured(rep.selection))
            }
            "dps_topk" => {
                let seed = derive_seed(self.cfg.seed, "dps_topk", budget);
                let tc = self.cfg.train.to_train_config(&self.layout, budget, seed)?;
                let m_flat = self.cfg.flat_budget()?.resolve(&alloc);
                let rep = dps_topk_train_with_jacobians(&tc, m_flat, &self.train_jacs)?;
                let text = rep.selection_text();
                Ok((Sampling::Flat(rep.selection), text))
            }
            "full" => Ok((Sampling::Full, String::new())),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// Runs `body` between the manifest's begin and finish.
fn staged(command: &str, cfg: &ExperimentConfig, out: &Path, body: impl FnOnce(&mut RunManifest) -> Result<()>) -> Result<RunManifest> {
    let mut manifest = RunManifest::begin(command, cfg, out)?;
    match body(&mut manifest) {
        Ok(()) => manifest.finish(true),
        Err(e) => {
            let _ = manifest.finish(false);
            Err(e)
        }
    }
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    staged("train", cfg, out, |m| {
        let ctx = Context::new(cfg)?;
        let rep = ctx.scosara(cfg.train.budget)?;
        m.write("train_report.txt", rep.to_text())?;
        let mut header = vec!["step", "loss", "fim_trace", "reg", "tau"];
        let names: Vec<String> = ctx.layout.names().iter().map(|n| format!("M_{n}")).collect();
        header.extend(names.iter().map(String::as_str));
        let rows: Vec<Vec<String>> = rep
            .records
            .iter()
            .map(|r| {
                let mut row = vec![r.step.to_string(), num(r.loss), num(r.fim_trace), num(r.reg), num(r.tau)];
                row.extend(r.allocation.iter().map(usize::to_string));
                row
            })
            .collect();
        m.write("train_steps.csv", csv_bytes(&header, &rows)?)?;
        m.write("selection.txt", rep.selection.to_text())?;
        Ok(())
    })
}

pub const SWEEP_HEADER: [&str; 8] = [
    "method",
    "budget",
    "allocation",
    "compression_factor",
    "mean_trace_crb",
    "mean_position_crb",
    "excluded",
    "regularized",
];

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    staged("sweep", cfg, out, |m| {
        let ctx = Context::new(cfg)?;
        let mut rows = Vec::new();
        for &budget in &cfg.sweep.budgets {
            if !ctx.feasible(budget) {
                m.warn(format!("budget {budget} is infeasible for layout {:?}; skipped", ctx.dims));
                continue;
            }
            let joint = ctx.scosara(budget)?;
            let alloc = joint.selection.counts();
            let alloc_text = alloc.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            for method in &cfg.sweep.methods {
                let (sampling, text) = match ctx.select(method, budget, &joint) {
                    Err(Error::ResourceLimit(msg)) => {
                        m.warn(format!("{method} at budget {budget}: {msg}"));
                        continue;
                    }
                    r => r?,
                };
                m.write(&format!("selections/{method}_M{budget}.txt"), text)?;
                let summary =
                    match crb_summary_from_jacobians(&sampling, &ctx.eval_jacs, &ctx.dims, cfg.train.sigma, cfg.sweep.jitter) {
                        Err(Error::Evaluation(msg)) => {
                            m.warn(format!("{method} at budget {budget}: {msg}"));
                            continue;
                        }
                        r => r?,
                    };
                rows.push(vec![
                    method.clone(),
                    budget.to_string(),
                    alloc_text.clone(),
                    num(sampling.compression_factor(&ctx.dims)),
                    num(summary.mean_trace),
                    num(summary.mean_position),
                    summary.excluded.to_string(),
                    summary.regularized.to_string(),
                ]);
            }
        }
        m.write("sweep.csv", csv_bytes(&SWEEP_HEADER, &rows)?)?;
        Ok(())
    })
}

/// Reads a selection file written by `train` or `sweep`.
pub fn read_selection(path: &Path, layout: &AxisLayout) -> Result<Sampling> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with("flat ") {
        let (total, idx) = FlatReport::parse_selection(&text)?;
        if total != layout.product() {
            return Err(Error::InvalidArgument(format!("flat selection covers {total} samples, model has {}", layout.product())));
        }
        return Ok(Sampling::Flat(idx));
    }
    let sel = HardSelection::parse(&text)?;
    sel.validate(layout)?;
    Ok(Sampling::Structured(sel))
}

fn image_csv(grid: &RoiGrid, img: &[C64]) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = img
        .iter()
        .enumerate()
        .map(|(g, v)| {
            let (x, z) = grid.point(g);
            vec![num(x), num(z), num(v.re), num(v.im), num(v.norm())]
        })
        .collect();
    csv_bytes(&["x", "z", "re", "im", "magnitude"], &rows)
}

fn write_image(m: &mut RunManifest, stem: &str, grid: &RoiGrid, img: &[C64]) -> Result<()> {
    m.write(&format!("images/{stem}.csv"), image_csv(grid, img)?)?;
    let mags: Vec<f64> = img.iter().map(|v| v.norm()).collect();
    m.write(
        &format!("images/{stem}.svg"),
        heatmap(&mags, grid.xs().len(), grid.zs().len(), stem)?,
    )?;
    Ok(())
}

pub const RECOVERY_HEADER: [&str; 8] = [
    "method",
    "separation",
    "compression_factor",
    "epsilon",
    "l0",
    "lambda",
    "residual",
    "objective",
];

/// `selections` maps method names to selection files; when empty the
/// selections are computed at the configured recovery budget.
pub fn cmd_recover(cfg: &ExperimentConfig, out: &Path, selections: &[(String, PathBuf)]) -> Result<RunManifest> {
    staged("recover", cfg, out, |m| {
        let ctx = Context::new(cfg)?;
        let rc = &cfg.recover;
        let mut chosen: Vec<(String, Sampling)> = vec![("full".into(), Sampling::Full)];
        if selections.is_empty() {
            if !ctx.feasible(rc.budget) {
                return Err(Error::InvalidArgument(format!("recovery budget {} is infeasible", rc.budget)));
            }
            let joint = ctx.scosara(rc.budget)?;
            for method in rc.methods.iter().filter(|s| *s != "full") {
                match ctx.select(method, rc.budget, &joint) {
                    Err(Error::ResourceLimit(msg)) => m.warn(format!("{method}: {msg}")),
                    r => {
                        let (s, text) = r?;
                        m.write(&format!("selections/{method}_M{}.txt", rc.budget), text)?;
                        chosen.push((method.clone(), s));
                    }
                }
            }
        } else {
            for (name, path) in selections {
                chosen.retain(|(n, _)| n != name);
                chosen.push((name.clone(), read_selection(path, &ctx.layout)?));
            }
        }

        let grid = RoiGrid::half_wavelength(&rc.roi.roi()?, &ctx.model.pulse)?;
        let scenarios = rc
            .separations
            .iter()
            .map(|&sep| Ok((sep, pair_scenario(&grid, sep)?)))
            .collect::<Result<Vec<_>>>()?;
        for (sep, pair) in &scenarios {
            write_image(m, &format!("truth_sep{sep}"), &grid, &truth_image(&grid, pair))?;
        }
        let mut rows = Vec::new();
        for (method, sampling) in &chosen {
            let dict = build_dictionary(&grid, &ctx.model, sampling)?;
            for (sep, pair) in &scenarios {
                let y = if rc.noise_sigma > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "recover-noise", *sep));
                    noisy_measurements(&ctx.model, pair, sampling, rc.noise_sigma, &mut rng)?
                } else {
                    measurements(&ctx.model, pair, sampling)?
                };
                let lambda = rc.lambda_factor * correlation_peak(&dict, &y);
                let res = fista(&dict, &y, lambda, rc.iterations)?;
                let residual = fixed_point_residual(&dict, &y, &res.coeffs, lambda, res.lipschitz);
                let (eps, l0) = metrics(&res.coeffs, &truth_image(&grid, pair), rc.zero_threshold)?;
                write_image(m, &format!("{method}_sep{sep}"), &grid, &res.coeffs)?;
                rows.push(vec![
                    method.clone(),
                    sep.to_string(),
                    num(sampling.compression_factor(&ctx.dims)),
                    num(eps),
                    l0.to_string(),
                    num(lambda),
                    num(residual),
                    num(*res.objective.last().expect("at least one iteration")),
                ]);
            }
        }
        m.write("recovery.csv", csv_bytes(&RECOVERY_HEADER, &rows)?)?;
        Ok(())
    })
}

/// Per-method `(compression_factor, value)` series from a sweep CSV,
/// sorted by compression factor, methods in order of first appearance.
pub fn read_sweep(path: &Path, column: &str) -> Result<Vec<Series>> {
    let parse_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut rdr = csv::Reader::from_reader(std::fs::File::open(path)?);
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("sweep CSV lacks a `{name}` column")))
    };
    let (mi, xi, yi) = (col("method")?, col("compression_factor")?, col(column)?);
    let mut order: Vec<String> = Vec::new();
    let mut by_method: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad number in row {:?}", rec.position().map(|p| p.line()))))
        };
        let method = rec.get(mi).unwrap_or_default().to_string();
        if !by_method.contains_key(&method) {
            order.push(method.clone());
        }
        by_method.entry(method).or_default().push((field(xi)?, field(yi)?));
    }
    if order.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no rows", path.display())));
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let mut points = by_method.remove(&name).unwrap_or_default();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name, points }
        })
        .collect())
}

pub fn cmd_plot(cfg: &ExperimentConfig, out: &Path, input: Option<&Path>) -> Result<RunManifest> {
    let input = input.map_or_else(|| out.join("sweep.csv"), Path::to_path_buf);
    staged("plot", cfg, out, |m| {
        let trace = read_sweep(&input, "mean_trace_crb")?;
        m.write(
            "crb_trace.svg",
            line_chart("Mean Trace(CRB)", "compression factor", "mean Trace(CRB)", &trace)?,
        )?;
        let pos = read_sweep(&input, "mean_position_crb")?;
        m.write(
            "crb_position.svg",
            line_chart("Mean position CRB", "compression factor", "mean Trace(CRB_xz) [m^2]", &pos)?,
        )?;
        Ok(())
    })
}
