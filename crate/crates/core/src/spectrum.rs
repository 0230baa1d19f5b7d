//! Range and angle transforms.
//!
//! Forward DFTs are unnormalized, `X[k] = sum x[n] e^{-j 2 pi k n / L}`, and
//! inverses carry the `1/L`. This is the one convention used everywhere.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::geometry::Point3;
use crate::model::{AntennaArray, RadarConfig, RadarCube};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        }
    }
}

/// Everything that must agree between templates and measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformDescriptor {
    pub window: Window,
    pub angle_bins: usize,
    /// Largest kept spatial frequency in cycles per element; 0.5 keeps all.
    pub max_spatial_freq: f64,
}

impl Default for TransformDescriptor {
    fn default() -> Self {
        Self { window: Window::Rectangular, angle_bins: 256, max_spatial_freq: 0.5 }
    }
}

impl TransformDescriptor {
    /// Keeps only the angle bins inside `±fov_deg` of boresight for a linear
    /// array with the given mean spacing, plus one bin of margin.
    pub fn with_fov(self, fov_deg: f64, array: &AntennaArray, config: &RadarConfig) -> Self {
        let cycles = config.phase_convention.factor() * array.mean_spacing_m() * fov_deg.to_radians().sin()
            / config.wavelength_m();
        let margin = 1.0 / self.angle_bins as f64;
        Self { max_spatial_freq: (cycles + margin).min(0.5), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angle_bins < 2 {
            return Err(Error::Config("angle_bins must be at least 2".into()));
        }
        if !(self.max_spatial_freq > 0.0 && self.max_spatial_freq <= 0.5) {
            return Err(Error::Config(format!("max_spatial_freq must lie in (0, 0.5], got {}", self.max_spatial_freq)));
        }
        Ok(())
    }

    /// Signed frequency of angle bin `k`, in cycles per element.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        let k = k as isize;
        let l = self.angle_bins as isize;
        let signed = if k < (l + 1) / 2 { k } else { k - l };
        signed as f64 / l as f64
    }

    /// Angle bins retained in spatial spectra, in natural FFT order.
    pub fn kept_bins(&self) -> Vec<usize> {
        (0..self.angle_bins)
            .filter(|&k| self.max_spatial_freq >= 0.5 || self.bin_frequency(k).abs() <= self.max_spatial_freq + 1e-12)
            .collect()
    }
}

/// Range spectra of every antenna, antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSpectra {
    pub num_antennas: usize,
    pub num_bins: usize,
    pub data: Vec<Complex64>,
}

impl RangeSpectra {
    pub fn row(&self, antenna: usize) -> &[Complex64] {
        &self.data[antenna * self.num_bins..(antenna + 1) * self.num_bins]
    }

    pub fn at(&self, antenna: usize, bin: usize) -> Complex64 {
        self.data[antenna * self.num_bins + bin]
    }

    /// Values of every antenna at one range bin.
    pub fn column(&self, bin: usize) -> Vec<Complex64> {
        (0..self.num_antennas).map(|n| self.at(n, bin)).collect()
    }
}

pub fn range_transform(cube: &RadarCube, window: Window) -> RangeSpectra {
    let s = cube.num_samples();
    let fft = FftPlanner::new().plan_fft_forward(s);
    let w = window.coefficients(s);
    let mut data: Vec<Complex64> = cube.data().to_vec();
    if window != Window::Rectangular {
        for row in data.chunks_mut(s) {
            row.iter_mut().zip(&w).for_each(|(z, c)| *z *= c);
        }
    }
    fft.process(&mut data);
    RangeSpectra { num_antennas: cube.num_antennas(), num_bins: s, data }
}

/// Inverse of [`range_transform`]; returns the windowed samples.
pub fn inverse_range_transform(spectra: &RangeSpectra) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_inverse(spectra.num_bins);
    let mut data = spectra.data.clone();
    fft.process(&mut data);
    let k = 1.0 / spectra.num_bins as f64;
    data.iter_mut().for_each(|z| *z *= k);
    data
}

/// Single range-bin DFT of every antenna, without computing the full FFT.
pub fn range_bin_values(cube: &RadarCube, window: Window, bin: usize) -> Result<Vec<Complex64>> {
    let s = cube.num_samples();
    if bin >= s {
        return Err(Error::Domain(format!("range bin {bin} out of bounds ({s} bins)")));
    }
    let w = window.coefficients(s);
    let kernel: Vec<Complex64> =
        (0..s).map(|i| Complex64::from_polar(w[i], -2.0 * PI * ((bin * i) % s) as f64 / s as f64)).collect();
    Ok((0..cube.num_antennas()).map(|n| cube.row(n).iter().zip(&kernel).map(|(x, k)| x * k).sum()).collect())
}

/// Zero-padded angle FFT reused across many columns.
#[derive(Clone)]
pub struct AngleFft {
    fft: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl AngleFft {
    pub fn new(bins: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(bins);
        let inverse = planner.plan_fft_inverse(bins);
        let scratch_len = fft.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self { fft, inverse, buf: vec![ZERO; bins], scratch: vec![ZERO; scratch_len] }
    }

    pub fn bins(&self) -> usize {
        self.buf.len()
    }

    /// Transforms one antenna column; the result borrows an internal buffer.
    pub fn forward(&mut self, column: &[Complex64]) -> Result<&[Complex64]> {
        if column.len() > self.buf.len() {
            return Err(Error::Shape { expected: self.buf.len(), got: column.len() });
        }
        self.buf.fill(ZERO);
        self.buf[..column.len()].copy_from_slice(column);
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        Ok(&self.buf)
    }

    /// Inverse of [`AngleFft::forward`], truncated to `antennas` elements.
    pub fn inverse(&mut self, spectrum: &[Complex64], antennas: usize) -> Result<Vec<Complex64>> {
        ensure_len(self.buf.len(), spectrum.len())?;
        self.buf.copy_from_slice(spectrum);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        let k = 1.0 / self.buf.len() as f64;
        Ok(self.buf[..antennas].iter().map(|z| z * k).collect())
    }
}

/// Range by angle grid, range-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleSpectrum {
    pub num_range_bins: usize,
    pub num_angle_bins: usize,
    pub num_antennas: usize,
    pub range_bin_width_m: f64,
    pub bins: Vec<Complex64>,
}

impl RangeAngleSpectrum {
    pub fn row(&self, range_bin: usize) -> &[Complex64] {
        &self.bins[range_bin * self.num_angle_bins..(range_bin + 1) * self.num_angle_bins]
    }

    pub fn row_power(&self, range_bin: usize) -> f64 {
        self.row(range_bin).iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn angle_transform(
    spectra: &RangeSpectra,
    angle_bins: usize,
    range_bin_width_m: f64,
) -> Result<RangeAngleSpectrum> {
    if spectra.num_antennas < 2 {
        return Err(Error::Domain("angle transform needs at least 2 antennas".into()));
    }
    let mut fft = AngleFft::new(angle_bins);
    let mut bins = Vec::with_capacity(spectra.num_bins * angle_bins);
    for r in 0..spectra.num_bins {
        bins.extend_from_slice(fft.forward(&spectra.column(r))?);
    }
    Ok(RangeAngleSpectrum {
        num_range_bins: spectra.num_bins,
        num_angle_bins: angle_bins,
        num_antennas: spectra.num_antennas,
        range_bin_width_m,
        bins,
    })
}

pub fn inverse_angle_transform(ra: &RangeAngleSpectrum) -> Result<RangeSpectra> {
    let mut fft = AngleFft::new(ra.num_angle_bins);
    let n = ra.num_antennas;
    let mut data = vec![ZERO; n * ra.num_range_bins];
    for r in 0..ra.num_range_bins {
        let col = fft.inverse(ra.row(r), n)?;
        for (a, v) in col.into_iter().enumerate() {
            data[a * ra.num_range_bins + r] = v;
        }
    }
    Ok(RangeSpectra { num_antennas: n, num_bins: ra.num_range_bins, data })
}

/// Both transforms under one descriptor.
pub fn range_angle(cube: &RadarCube, descriptor: &TransformDescriptor) -> Result<RangeAngleSpectrum> {
    let spectra = range_transform(cube, descriptor.window);
    angle_transform(&spectra, descriptor.angle_bins, cube.config().range_bin_width_m())
}

/// One range bin's angular spectrum restricted to the descriptor's kept bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub values: Vec<Complex64>,
    pub range_bin_index: usize,
    pub normalized: bool,
}

impl SpatialSpectrum {
    pub fn from_row(row: &[Complex64], kept: &[usize], range_bin_index: usize) -> Self {
        Self { values: kept.iter().map(|&k| row[k]).collect(), range_bin_index, normalized: false }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateBin(self.range_bin_index));
        }
        let inv = 1.0 / norm;
        self.values.iter_mut().for_each(|z| *z *= inv);
        self.normalized = true;
        Ok(self)
    }
}

pub fn slice_and_normalize(
    spec: &RangeAngleSpectrum,
    range_bin: usize,
    descriptor: &TransformDescriptor,
) -> Result<SpatialSpectrum> {
    if range_bin >= spec.num_range_bins {
        return Err(Error::Domain(format!("range bin {range_bin} out of bounds ({} bins)", spec.num_range_bins)));
    }
    ensure_len(descriptor.angle_bins, spec.num_angle_bins)?;
    SpatialSpectrum::from_row(spec.row(range_bin), &descriptor.kept_bins(), range_bin).normalize()
}

/// `sum_{s<len} e^{j theta s}`.
fn geometric_sum(theta: f64, len: usize) -> Complex64 {
    let half = 0.5 * theta;
    let denom = half.sin();
    if denom.abs() < 1e-6 {
        return (0..len).map(|s| Complex64::from_polar(1.0, theta * s as f64)).sum();
    }
    let mag = (len as f64 * half).sin() / denom;
    Complex64::from_polar(mag, half * (len as f64 - 1.0))
}

/// Closed form of the range spectrum at `bin` for a unit isotropic point at
/// `p`, for every antenna. Agrees with synthesizing and transforming the cube.
pub fn point_range_row(
    p: Point3,
    array: &AntennaArray,
    config: &RadarConfig,
    window: Window,
    bin: usize,
) -> Result<Vec<Complex64>> {
    let s = config.num_fast_time_samples;
    let bin_step = 2.0 * PI * bin as f64 / s as f64;
    let off = 2.0 * PI / s as f64;
    array
        .positions()
        .iter()
        .map(|&a| {
            let d = a.distance(p);
            let amp = crate::model::attenuation(d)?;
            let phi = crate::model::propagation_phase(d, config)?;
            let theta = config.beat_phase_step(d) - bin_step;
            let g = match window {
                Window::Rectangular => geometric_sum(theta, s),
                Window::Hann => {
                    geometric_sum(theta, s) * 0.5
                        - geometric_sum(theta + off, s) * 0.25
                        - geometric_sum(theta - off, s) * 0.25
                }
            };
            Ok(Complex64::from_polar(amp, phi) * g)
        })
        .collect()
}
