//! Frequency-domain full-matrix-capture pulse-echo model.
//!
//! A point scatterer `(x, z, a, phi)` in front of a linear array produces, for
//! transmitter `t`, receiver `r` and frequency `f`,
//!
//! ```text
//! b[t, r, f] = a * exp(j*phi) * P(f) * exp(-j*2*pi*f*(tau_t + tau_r))
//! ```
//!
//! where `tau_e` is the one-way travel time between element `e` and the
//! scatterer and `P` is a Gaussian spectral envelope with unit peak at the
//! center frequency. Tensors are vectorized with the frequency index running
//! fastest: `n = (t * n_rx + r) * n_freq + f`.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sampling::AxisLayout;
use crate::C64;

/// Number of scatterer parameters `[x, z, a, phi]`.
pub const PARAM_COUNT: usize = 4;

/// Axis names in vectorization order.
pub const AXIS_NAMES: [&str; 3] = ["tx", "rx", "freq"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub tx_count: usize,
    pub rx_count: usize,
    /// Element spacing in meters.
    pub pitch: f64,
}

impl ArrayGeometry {
    pub fn new(tx_count: usize, rx_count: usize, pitch: f64) -> Result<Self> {
        let geom = Self {
            tx_count,
            rx_count,
            pitch,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx_count == 0 || self.rx_count == 0 {
            return Err(Error::invalid("array needs at least one transmitter and one receiver"));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::invalid(format!("pitch must be positive, got {}", self.pitch)));
        }
        Ok(())
    }

    /// Lateral position of element `e` of an aperture with `count` elements,
    /// centered on `x = 0`.
    pub fn element_x(&self, count: usize, e: usize) -> f64 {
        (e as f64 - (count as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn tx_positions(&self) -> Vec<f64> {
        (0..self.tx_count).map(|e| self.element_x(self.tx_count, e)).collect()
    }

    pub fn rx_positions(&self) -> Vec<f64> {
        (0..self.rx_count).map(|e| self.element_x(self.rx_count, e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub center_frequency: f64,
    /// Full width of the amplitude spectrum at half maximum, relative to the
    /// center frequency.
    pub fractional_bandwidth: f64,
    pub sound_speed: f64,
}

impl PulseSpec {
    pub fn new(center_frequency: f64, fractional_bandwidth: f64, sound_speed: f64) -> Result<Self> {
        let pulse = Self {
            center_frequency,
            fractional_bandwidth,
            sound_speed,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency > 0.0 && self.center_frequency.is_finite()) {
            return Err(Error::invalid("center frequency must be positive"));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0) {
            return Err(Error::invalid("fractional bandwidth must lie in (0, 2)"));
        }
        if !(self.sound_speed > 0.0 && self.sound_speed.is_finite()) {
            return Err(Error::invalid("sound speed must be positive"));
        }
        Ok(())
    }

    fn envelope_sigma(&self) -> f64 {
        let fwhm = self.fractional_bandwidth * self.center_frequency;
        fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }

    /// Gaussian spectral envelope, 1 at the center frequency.
    pub fn envelope(&self, f: f64) -> f64 {
        let s = self.envelope_sigma();
        let d = f - self.center_frequency;
        (-(d * d) / (2.0 * s * s)).exp()
    }

    pub fn wavelength(&self) -> f64 {
        self.sound_speed / self.center_frequency
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    values: Vec<f64>,
}

impl FrequencyGrid {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("frequency grid must be nonempty"));
        }
        if values.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::invalid("frequencies must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frequencies must be strictly increasing"));
        }
        Ok(Self { values })
    }

    /// `count` uniformly spaced bins spanning `fc * (1 +- bandwidth)`, so the
    /// band edges sit where the envelope has dropped to 1/16. A single bin sits
    /// on the center frequency.
    pub fn band(pulse: &PulseSpec, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("frequency grid must be nonempty"));
        }
        let fc = pulse.center_frequency;
        if count == 1 {
            return Self::from_values(vec![fc]);
        }
        let half = (pulse.fractional_bandwidth * fc).min(0.95 * fc);
        let lo = fc - half;
        let step = 2.0 * half / (count as f64 - 1.0);
        Self::from_values((0..count).map(|k| lo + step * k as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub x: f64,
    pub z: f64,
    pub a: f64,
    pub phi: f64,
}

impl Scatterer {
    pub fn new(x: f64, z: f64, a: f64, phi: f64) -> Self {
        Self { x, z, a, phi }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.z, self.a, self.phi].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("scatterer parameters must be finite"));
        }
        if self.z <= 0.0 {
            return Err(Error::invalid(format!("scatterer depth must be positive, got {}", self.z)));
        }
        if self.a < 0.0 {
            return Err(Error::invalid("reflectivity must be nonnegative"));
        }
        Ok(())
    }

    pub fn params(&self) -> [f64; PARAM_COUNT] {
        [self.x, self.z, self.a, self.phi]
    }

    pub fn from_params(p: [f64; PARAM_COUNT]) -> Self {
        Self::new(p[0], p[1], p[2], p[3])
    }
}

/// Complex `tx x rx x freq` data cube stored in vectorization order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    shape: [usize; 3],
    data: Vec<C64>,
}

impl DataTensor {
    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![C64::new(0.0, 0.0); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<C64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn flat_index(&self, t: usize, r: usize, f: usize) -> usize {
        (t * self.shape[1] + r) * self.shape[2] + f
    }

    pub fn get(&self, t: usize, r: usize, f: usize) -> C64 {
        self.data[self.flat_index(t, r, f)]
    }

    /// The vectorized data.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// Three little-endian `u64` dimensions followed by interleaved
    /// little-endian `f64` (re, im) pairs in vectorization order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for d in self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut shape = [0usize; 3];
        for d in shape.iter_mut() {
            r.read_exact(&mut word)?;
            *d = usize::try_from(u64::from_le_bytes(word))
                .map_err(|_| Error::Parse("tensor dimension overflows usize".into()))?;
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| Error::Parse("tensor size overflows usize".into()))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            let im = f64::from_le_bytes(word);
            data.push(C64::new(re, im));
        }
        Self::from_vec(shape, data)
    }
}

/// `N_Pi x 4` complex Jacobian, one contiguous column per parameter in the
/// order `[x, z, a, phi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianTensor {
    rows: usize,
    data: Vec<C64>,
}

impl JacobianTensor {
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::invalid("Jacobian columns must have equal length"));
        }
        Ok(Self {
            rows,
            data: columns.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn params(&self) -> usize {
        if self.rows == 0 {
            0
        } else {
            self.data.len() / self.rows
        }
    }

    pub fn column(&self, p: usize) -> &[C64] {
        &self.data[p * self.rows..(p + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks(self.rows.max(1))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// The model context shared by every operation that evaluates `b(xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub geometry: ArrayGeometry,
    pub pulse: PulseSpec,
    pub freqs: FrequencyGrid,
}

impl ForwardModel {
    pub fn new(geometry: ArrayGeometry, pulse: PulseSpec, freqs: FrequencyGrid) -> Result<Self> {
        geometry.validate()?;
        pulse.validate()?;
        Ok(Self {
            geometry,
            pulse,
            freqs,
        })
    }

    /// 8 x 8 x 16 at 5 MHz, 0.3 mm pitch, water-like sound speed.
    pub fn desk_default() -> Self {
        let pulse = PulseSpec::new(5.0e6, 0.6, 1540.0).expect("valid default pulse");
        let geometry = ArrayGeometry::new(8, 8, 0.3e-3).expect("valid default geometry");
        let freqs = FrequencyGrid::band(&pulse, 16).expect("valid default grid");
        Self {
            geometry,
            pulse,
            freqs,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.geometry.tx_count, self.geometry.rx_count, self.freqs.len()]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layout(&self) -> AxisLayout {
        AxisLayout::named(
            self.shape().to_vec(),
            AXIS_NAMES.iter().map(|s| s.to_string()).collect(),
        )
        .expect("model dimensions are nonzero")
    }

    fn distances(&self, positions: &[f64], s: &Scatterer) -> Vec<f64> {
        positions
            .iter()
            .map(|xe| ((s.x - xe).powi(2) + s.z * s.z).sqrt())
            .collect()
    }

    /// `exp(j*phi) * P(f) * exp(-j*w*(tau_t + tau_r))`, i.e. `db/da`.
    fn unit_response(&self, s: &Scatterer, d_tx: &[f64], d_rx: &[f64]) -> Vec<C64> {
        let c = self.pulse.sound_speed;
        let phase = C64::from_polar(1.0, s.phi);
        let mut out = Vec::with_capacity(self.len());
        for dt in d_tx {
            for dr in d_rx {
                let delay = (dt + dr) / c;
                for &f in self.freqs.values() {
                    let env = self.pulse.envelope(f);
                    out.push(phase * C64::from_polar(env, -TAU * f * delay));
                }
            }
        }
        out
    }

    pub fn forward(&self, s: &Scatterer) -> Result<DataTensor> {
        s.validate()?;
        let d_tx = self.distances(&self.geometry.tx_positions(), s);
        let d_rx = self.distances(&self.geometry.rx_positions(), s);
        let data = self
            .unit_response(s, &d_tx, &d_rx)
            .into_iter()
            .map(|u| u * s.a)
            .collect();
        DataTensor::from_vec(self.shape(), data)
    }

    /// Analytic derivatives of `vec(b)` with respect to `[x, z, a, phi]`.
    pub fn jacobian(&self, s: &Scatterer) -> Result<JacobianTensor> {
        let tx = self.geometry.tx_positions();
        let rx = self.geometry.rx_positions();
        let d_tx = self.distances(&tx, s);
        let d_rx = self.distances(&rx, s);
        if d_tx.iter().chain(&d_rx).any(|d| *d == 0.0) {
            return Err(Error::SingularGeometry(format!(
                "scatterer at ({}, {}) coincides with an array element",
                s.x, s.z
            )));
        }
        s.validate()?;
        let c = self.pulse.sound_speed;
        let unit = self.unit_response(s, &d_tx, &d_rx);
        let n_f = self.freqs.len();

        let mut dx = Vec::with_capacity(unit.len());
        let mut dz = Vec::with_capacity(unit.len());
        let mut da = Vec::with_capacity(unit.len());
        let mut dphi = Vec::with_capacity(unit.len());
        let mut n = 0;
        for (t, dt) in d_tx.iter().enumerate() {
            for (r, dr) in d_rx.iter().enumerate() {
                let dtau_dx = (s.x - tx[t]) / (c * dt) + (s.x - rx[r]) / (c * dr);
                let dtau_dz = s.z / (c * dt) + s.z / (c * dr);
                for &f in &self.freqs.values()[..n_f] {
                    let u = unit[n];
                    let b = u * s.a;
                    let k = C64::new(0.0, -2.0 * PI * f);
                    dx.push(b * k * dtau_dx);
                    dz.push(b * k * dtau_dz);
                    da.push(u);
                    dphi.push(b * C64::i());
                    n += 1;
                }
            }
        }
        JacobianTensor::from_columns(&[dx, dz, da, dphi])
    }
}

/// Adds circularly-symmetric complex Gaussian noise of variance `sigma^2`.
pub fn add_noise<R: Rng + ?Sized>(b: &DataTensor, sigma: f64, rng: &mut R) -> Result<DataTensor> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("noise standard deviation must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(b.clone());
    }
    let s = sigma / std::f64::consts::SQRT_2;
    let data = b
        .as_slice()
        .iter()
        .map(|v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v + C64::new(s * re, s * im)
        })
        .collect();
    DataTensor::from_vec(b.shape(), data)
}

/// Rectangular region of interest in the imaging plane (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Roi {
    /// 8 x 8 mm, centered laterally, starting 10 mm deep.
    pub fn desk_default() -> Self {
        Self {
            x_min: -4.0e-3,
            x_max: 4.0e-3,
            z_min: 10.0e-3,
            z_max: 18.0e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.z_min >= self.z_max {
            return Err(Error::invalid(format!("empty region of interest {self:?}")));
        }
        if self.z_min <= 0.0 {
            return Err(Error::invalid("region of interest must lie in front of the array"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.z_min..=self.z_max).contains(&z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scatterers: Vec<Scatterer>,
    pub roi: Roi,
    pub amplitude_range: (f64, f64),
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }
}

/// Uniformly placed scatterers. Scatterer `k` is drawn from its own ChaCha
/// stream `(seed, k)`, so the dataset does not depend on generation order.
pub fn generate_dataset(
    roi: Roi,
    count: usize,
    amplitude_range: (f64, f64),
    seed: u64,
) -> Result<Dataset> {
    roi.validate()?;
    if count == 0 {
        return Err(Error::invalid("dataset needs at least one scatterer"));
    }
    let (a_lo, a_hi) = amplitude_range;
    if !(a_lo >= 0.0 && a_hi >= a_lo && a_hi.is_finite()) {
        return Err(Error::invalid(format!("invalid amplitude range {amplitude_range:?}")));
    }
    let scatterers = (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let x = roi.x_min + (roi.x_max - roi.x_min) * rng.random::<f64>();
            let z = roi.z_min + (roi.z_max - roi.z_min) * rng.random::<f64>();
            let a = a_lo + (a_hi - a_lo) * rng.random::<f64>();
            let phi = TAU * rng.random::<f64>();
            Scatterer::new(x, z, a, phi)
        })
        .collect();
    Ok(Dataset {
        scatterers,
        roi,
        amplitude_range,
        seed,
    })
}
