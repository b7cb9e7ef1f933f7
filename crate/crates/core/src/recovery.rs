//! Sparse localization over a pixel grid with complex FISTA.

use crate::error::{Error, Result};
use crate::fim::Sampling;
use crate::model::{add_noise, DataTensor, ForwardModel, PulseSpec, Roi, Scatterer};
use crate::C64;

pub const POWER_ITERATIONS: usize = 50;
pub const POWER_TOLERANCE: f64 = 1e-8;
/// Safety factor on the power-iteration estimate of `||A||^2`.
pub const LIPSCHITZ_MARGIN: f64 = 1.01;

/// Pixel grid; pixel `g = iz * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiGrid {
    xs: Vec<f64>,
    zs: Vec<f64>,
}

impl RoiGrid {
    pub fn new(xs: Vec<f64>, zs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || zs.is_empty() {
            return Err(Error::invalid("grid must be nonempty"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&xs) || !increasing(&zs) || zs[0] <= 0.0 {
            return Err(Error::invalid("grid coordinates must increase and lie in front of the array"));
        }
        Ok(Self { xs, zs })
    }

    /// Half-wavelength pixels covering `roi`, anchored at its lower corner.
    pub fn half_wavelength(roi: &Roi, pulse: &PulseSpec) -> Result<Self> {
        roi.validate()?;
        let pitch = pulse.wavelength() / 2.0;
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            let n = ((hi - lo) / pitch + 1e-9).floor() as usize + 1;
            (0..n).map(|k| lo + pitch * k as f64).collect()
        };
        Self::new(axis(roi.x_min, roi.x_max), axis(roi.z_min, roi.z_max))
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn zs(&self) -> &[f64] {
        &self.zs
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, g: usize) -> (f64, f64) {
        (self.xs[g % self.xs.len()], self.zs[g / self.xs.len()])
    }

    pub fn index(&self, ix: usize, iz: usize) -> usize {
        iz * self.xs.len() + ix
    }

    fn nearest_1d(v: &[f64], t: f64) -> usize {
        let mut best = 0;
        for (k, x) in v.iter().enumerate() {
            if (x - t).abs() < (v[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    pub fn nearest(&self, x: f64, z: f64) -> usize {
        self.index(Self::nearest_1d(&self.xs, x), Self::nearest_1d(&self.zs, z))
    }
}

/// Column-normalized measurement dictionary, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
    norms: Vec<f64>,
}

impl Dictionary {
    /// Normalizes each column to unit norm and keeps the factors.
    pub fn from_columns(columns: Vec<Vec<C64>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if rows == 0 || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::invalid("dictionary columns must be nonempty and equally long"));
        }
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        let mut norms = Vec::with_capacity(cols);
        for (g, c) in columns.into_iter().enumerate() {
            let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::invalid(format!("dictionary column {g} has zero norm")));
            }
            data.extend(c.into_iter().map(|v| v / norm));
            norms.push(norm);
        }
        Ok(Self {
            rows,
            cols,
            data,
            norms,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, g: usize) -> &[C64] {
        &self.data[g * self.rows..(g + 1) * self.rows]
    }

    /// Norms of the columns before normalization.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for (g, xg) in x.iter().enumerate() {
            if *xg == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(g)) {
                *o += a * xg;
            }
        }
        out
    }

    pub fn adjoint(&self, r: &[C64]) -> Vec<C64> {
        (0..self.cols)
            .map(|g| self.column(g).iter().zip(r).map(|(a, v)| a.conj() * v).sum())
            .collect()
    }
}

/// Unit-amplitude, zero-phase responses at every pixel, restricted to the
/// sampled rows and then normalized.
pub fn build_dictionary(grid: &RoiGrid, model: &ForwardModel, sampling: &Sampling) -> Result<Dictionary> {
    let dims = model.shape();
    let rows = sampling.rows(&dims);
    if rows.is_empty() || rows.iter().any(|&r| r >= model.len()) {
        return Err(Error::invalid("sampling selects no valid rows"));
    }
    let columns = (0..grid.len())
        .map(|g| {
            let (x, z) = grid.point(g);
            let b = model.forward(&Scatterer::new(x, z, 1.0, 0.0))?;
            Ok(rows.iter().map(|&r| b.as_slice()[r]).collect())
        })
        .collect::<Result<Vec<Vec<C64>>>>()?;
    Dictionary::from_columns(columns)
}

/// Noiseless sampled measurements of a set of scatterers.
pub fn measurements(model: &ForwardModel, scatterers: &[Scatterer], sampling: &Sampling) -> Result<Vec<C64>> {
    let rows = sampling.rows(&model.shape());
    let mut y = vec![C64::new(0.0, 0.0); rows.len()];
    for s in scatterers {
        let b = model.forward(s)?;
        for (yv, &r) in y.iter_mut().zip(&rows) {
            *yv += b.as_slice()[r];
        }
    }
    Ok(y)
}

/// Sampled measurements with circular complex Gaussian noise of variance
/// `sigma^2` added to the full data before subsampling.
pub fn noisy_measurements<R: rand::Rng + ?Sized>(
    model: &ForwardModel,
    scatterers: &[Scatterer],
    sampling: &Sampling,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let clean = measurements(model, scatterers, &Sampling::Full)?;
    let full = add_noise(&DataTensor::from_vec(model.shape(), clean)?, sigma, rng)?;
    Ok(sampling.rows(&model.shape()).iter().map(|&r| full.as_slice()[r]).collect())
}

/// Complex shrinkage `v * max(0, 1 - t/|v|)`.
pub fn soft_threshold(v: C64, t: f64) -> C64 {
    let mag = v.norm();
    if mag <= t {
        C64::new(0.0, 0.0)
    } else {
        v * (1.0 - t / mag)
    }
}

/// Power-iteration estimate of `||A^H A||`, inflated by [`LIPSCHITZ_MARGIN`].
pub fn lipschitz(dict: &Dictionary) -> f64 {
    let mut v = vec![C64::new(1.0, 0.0); dict.cols()];
    let mut norm = (dict.cols() as f64).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut est = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = dict.adjoint(&dict.apply(&v));
        norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let converged = (norm - est).abs() <= POWER_TOLERANCE * norm;
        est = norm;
        if converged {
            break;
        }
    }
    est * LIPSCHITZ_MARGIN
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub coeffs: Vec<C64>,
    /// Objective after each iteration.
    pub objective: Vec<f64>,
    pub lipschitz: f64,
    pub lambda: f64,
}

pub fn objective(dict: &Dictionary, y: &[C64], x: &[C64], lambda: f64) -> f64 {
    let r = dict.apply(x);
    let fit: f64 = r.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum();
    0.5 * fit + lambda * x.iter().map(|v| v.norm()).sum::<f64>()
}

fn prox_grad(dict: &Dictionary, y: &[C64], point: &[C64], lambda: f64, l: f64) -> Vec<C64> {
    let r: Vec<C64> = dict.apply(point).iter().zip(y).map(|(a, b)| a - b).collect();
    let g = dict.adjoint(&r);
    point
        .iter()
        .zip(&g)
        .map(|(p, gv)| soft_threshold(p - gv / l, lambda / l))
        .collect()
}

/// Minimizes `0.5 ||A x - y||^2 + lambda ||x||_1` from `x = 0`.
pub fn fista(dict: &Dictionary, y: &[C64], lambda: f64, iters: usize) -> Result<RecoveryResult> {
    if iters == 0 {
        return Err(Error::invalid("FISTA needs at least one iteration"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("regularization weight must be nonnegative"));
    }
    if y.len() != dict.rows() {
        return Err(Error::invalid("measurement length does not match the dictionary"));
    }
    let l = lipschitz(dict);
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::numerical(None, "dictionary has no usable Lipschitz constant"));
    }
    let zero = vec![C64::new(0.0, 0.0); dict.cols()];
    let mut x_prev = zero.clone();
    let mut point = zero;
    let mut t = 1.0f64;
    let mut trajectory = Vec::with_capacity(iters);
    for k in 0..iters {
        let x = prox_grad(dict, y, &point, lambda, l);
        if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::numerical(Some(k), "non-finite FISTA iterate"));
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        point = x.iter().zip(&x_prev).map(|(a, b)| a + (a - b) * beta).collect();
        t = t_next;
        trajectory.push(objective(dict, y, &x, lambda));
        x_prev = x;
    }
    Ok(RecoveryResult {
        coeffs: x_prev,
        objective: trajectory,
        lipschitz: l,
        lambda,
    })
}

/// `max |x - prox(x - A^H(Ax - y)/L, lambda/L)|`, zero at a minimizer.
pub fn fixed_point_residual(dict: &Dictionary, y: &[C64], x: &[C64], lambda: f64, l: f64) -> f64 {
    prox_grad(dict, y, x, lambda, l)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

pub const DEFAULT_LAMBDA_FACTOR: f64 = 0.05;

/// `||A^H y||_inf`.
pub fn correlation_peak(dict: &Dictionary, y: &[C64]) -> f64 {
    dict.adjoint(y).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `0.05 * ||A^H y||_inf`.
pub fn default_lambda(dict: &Dictionary, y: &[C64]) -> f64 {
    DEFAULT_LAMBDA_FACTOR * correlation_peak(dict, y)
}

/// Two scatterers on grid nodes, `separation` pixels apart along depth and
/// centered in the grid. Phases differ so the pair is not coherent.
pub fn pair_scenario(grid: &RoiGrid, separation: usize) -> Result<Vec<Scatterer>> {
    let (nx, nz) = (grid.xs().len(), grid.zs().len());
    if separation == 0 || separation >= nz {
        return Err(Error::invalid(format!("separation {separation} does not fit {nz} rows")));
    }
    let ix = (nx - 1) / 2;
    let top = (nz - 1 - separation) / 2;
    let node = |iz: usize, phi: f64| {
        let (x, z) = grid.point(grid.index(ix, iz));
        Scatterer::new(x, z, 1.0, phi)
    };
    Ok(vec![node(top, 0.0), node(top + separation, std::f64::consts::FRAC_PI_3)])
}

/// Ground-truth image: each scatterer's complex amplitude at its nearest pixel.
pub fn truth_image(grid: &RoiGrid, scatterers: &[Scatterer]) -> Vec<C64> {
    let mut img = vec![C64::new(0.0, 0.0); grid.len()];
    for s in scatterers {
        img[grid.nearest(s.x, s.z)] += C64::from_polar(s.a, s.phi);
    }
    img
}

fn max_normalized(img: &[C64]) -> Vec<f64> {
    let peak = img.iter().map(|v| v.norm()).fold(0.0, f64::max);
    img.iter()
        .map(|v| if peak > 0.0 { v.norm() / peak } else { 0.0 })
        .collect()
}

/// `(epsilon, l0)`: mean squared difference of the max-normalized magnitude
/// images, and the number of recovered pixels above `zero_threshold_rel`
/// times the recovered peak.
pub fn metrics(result: &[C64], truth: &[C64], zero_threshold_rel: f64) -> Result<(f64, usize)> {
    if result.len() != truth.len() || result.is_empty() {
        return Err(Error::invalid("images must be nonempty and the same size"));
    }
    let r = max_normalized(result);
    let t = max_normalized(truth);
    let eps = r.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / r.len() as f64;
    let l0 = r.iter().filter(|&&v| v > zero_threshold_rel).count();
    Ok((eps, l0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn soft_threshold_examples() {
        let v = soft_threshold(c(3.0, 4.0), 2.0);
        assert!((v - c(1.8, 2.4)).norm() < 1e-15);
        assert_eq!(soft_threshold(c(0.3, 0.4), 0.5), c(0.0, 0.0));
        assert_eq!(soft_threshold(c(0.3, -0.4), 0.0), c(0.3, -0.4));
        assert_eq!(soft_threshold(c(0.0, 0.0), 0.0), c(0.0, 0.0));
    }

    #[test]
    fn metrics_examples() {
        let truth: Vec<C64> = (0..10).map(|k| if k == 2 || k == 7 { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect();
        assert_eq!(metrics(&truth, &truth, 1e-3).unwrap(), (0.0, 2));
        let zeros = vec![c(0.0, 0.0); 10];
        let (eps, l0) = metrics(&zeros, &truth, 1e-3).unwrap();
        assert!((eps - 0.2).abs() < 1e-15);
        assert_eq!(l0, 0);
    }

    #[test]
    fn grid_pitch_is_half_wavelength() {
        let pulse = PulseSpec::new(5e6, 0.6, 1540.0).unwrap();
        let roi = Roi {
            x_min: -1e-3,
            x_max: 1e-3,
            z_min: 12e-3,
            z_max: 13e-3,
        };
        let grid = RoiGrid::half_wavelength(&roi, &pulse).unwrap();
        let pitch = grid.xs()[1] - grid.xs()[0];
        assert!((pitch - 1540.0 / 5e6 / 2.0).abs() < 1e-15);
        assert!(*grid.xs().last().unwrap() <= roi.x_max + 1e-12);
        let g = grid.index(3, 2);
        assert_eq!(grid.nearest(grid.point(g).0 + 0.1 * pitch, grid.point(g).1), g);
    }

    #[test]
    fn dictionary_columns_are_unit_norm() {
        let cols = vec![vec![c(3.0, 0.0), c(0.0, 4.0)], vec![c(1.0, 1.0), c(1.0, -1.0)]];
        let d = Dictionary::from_columns(cols).unwrap();
        for g in 0..2 {
            let n: f64 = d.column(g).iter().map(|v| v.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.norms()[0], 5.0);
        assert!(Dictionary::from_columns(vec![vec![c(0.0, 0.0)]]).is_err());
    }

    #[test]
    fn full_sampling_single_point_dictionary() {
        let model = ForwardModel::desk_default();
        let grid = RoiGrid::new(vec![0.5e-3], vec![12e-3]).unwrap();
        let d = build_dictionary(&grid, &model, &Sampling::Full).unwrap();
        assert_eq!((d.rows(), d.cols()), (1024, 1));
        let n: f64 = d.column(0).iter().map(|v| v.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
