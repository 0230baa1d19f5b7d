//! Forward model: radar configuration, antenna geometry, scatterer scenes and
//! echo synthesis for a dechirped FMCW array.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::geometry::Point3;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Multiplier `k` in `k * 2 pi f_c d / c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseConvention {
    #[default]
    OneWay,
    RoundTrip,
}

impl PhaseConvention {
    pub fn factor(self) -> f64 {
        match self {
            PhaseConvention::OneWay => 1.0,
            PhaseConvention::RoundTrip => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    pub num_fast_time_samples: usize,
    pub sample_rate_hz: f64,
    pub propagation_speed_mps: f64,
    pub phase_convention: PhaseConvention,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 77e9,
            bandwidth_hz: 1e9,
            chirp_duration_s: 25.6e-6,
            num_fast_time_samples: 256,
            sample_rate_hz: 10e6,
            propagation_speed_mps: SPEED_OF_LIGHT,
            phase_convention: PhaseConvention::OneWay,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.carrier_freq_hz, "carrier_freq_hz")?;
        positive(self.bandwidth_hz, "bandwidth_hz")?;
        positive(self.chirp_duration_s, "chirp_duration_s")?;
        positive(self.sample_rate_hz, "sample_rate_hz")?;
        positive(self.propagation_speed_mps, "propagation_speed_mps")?;
        if self.num_fast_time_samples < 2 {
            return Err(Error::Config("num_fast_time_samples must be at least 2".into()));
        }
        // Relative slack so that 10 MHz * 25.6 us = 256 survives rounding.
        let captured = self.sample_rate_hz * self.chirp_duration_s;
        if captured < self.num_fast_time_samples as f64 * (1.0 - 1e-9) {
            return Err(Error::Config(format!(
                "chirp holds {captured} samples, fewer than num_fast_time_samples = {}",
                self.num_fast_time_samples
            )));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        self.propagation_speed_mps / self.carrier_freq_hz
    }

    /// Range spanned by one FFT bin. Equals `c / 2B` when the chirp is
    /// sampled for exactly its duration.
    pub fn range_bin_width_m(&self) -> f64 {
        self.propagation_speed_mps * self.sample_rate_hz * self.chirp_duration_s
            / (2.0 * self.bandwidth_hz * self.num_fast_time_samples as f64)
    }

    pub fn max_range_m(&self) -> f64 {
        self.range_bin_width_m() * self.num_fast_time_samples as f64
    }

    /// Nearest range bin for a distance measured from the array origin.
    pub fn range_bin(&self, distance_m: f64) -> usize {
        (distance_m / self.range_bin_width_m()).round() as usize
    }

    /// Beat phase advance per fast-time sample for a scatterer at `distance_m`.
    pub fn beat_phase_step(&self, distance_m: f64) -> f64 {
        2.0 * PI * (2.0 * self.bandwidth_hz * distance_m / (self.propagation_speed_mps * self.chirp_duration_s))
            / self.sample_rate_hz
    }

    pub fn beat_phase(&self, distance_m: f64, sample: usize) -> f64 {
        self.beat_phase_step(distance_m) * sample as f64
    }
}

pub fn propagation_phase(distance_m: f64, config: &RadarConfig) -> Result<f64> {
    if !(distance_m >= 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!("distance must be non-negative, got {distance_m}")));
    }
    Ok(config.phase_convention.factor() * 2.0 * PI * config.carrier_freq_hz * distance_m / config.propagation_speed_mps)
}

/// Two-way amplitude spreading, `1 / d^2`.
pub fn attenuation(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!(
            "attenuation needs a positive distance, got {distance_m} (scatterer on an antenna?)"
        )));
    }
    Ok(1.0 / (distance_m * distance_m))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct AntennaArray {
    positions: Vec<Point3>,
}

impl AntennaArray {
    pub fn new(positions: Vec<Point3>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::Domain(format!("array needs at least 2 elements, got {}", positions.len())));
        }
        if let Some(p) = positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("non-finite antenna position {p:?}")));
        }
        let mut sorted = positions.clone();
        sorted.sort_by(Point3::lex_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("duplicate antenna position {:?}", w[0])));
        }
        Ok(Self { positions })
    }

    /// Uniform linear array along x, centered on the origin.
    pub fn uniform_linear(n: usize, spacing_m: f64) -> Result<Self> {
        if !(spacing_m > 0.0) {
            return Err(Error::Domain(format!("spacing must be positive, got {spacing_m}")));
        }
        let center = (n as f64 - 1.0) / 2.0;
        Self::new((0..n).map(|i| Point3::new((i as f64 - center) * spacing_m, 0.0, 0.0)).collect())
    }

    pub fn half_wavelength(n: usize, config: &RadarConfig) -> Result<Self> {
        Self::uniform_linear(n, config.wavelength_m() / 2.0)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn reference(&self) -> Point3 {
        self.positions[0]
    }

    pub fn aperture_m(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                best = best.max(a.distance(*b));
            }
        }
        best
    }

    /// Mean spacing between consecutive elements.
    pub fn mean_spacing_m(&self) -> f64 {
        let total: f64 = self.positions.windows(2).map(|w| w[0].distance(w[1])).sum();
        total / (self.positions.len() - 1) as f64
    }
}

impl TryFrom<Vec<Point3>> for AntennaArray {
    type Error = Error;
    fn try_from(v: Vec<Point3>) -> Result<Self> {
        AntennaArray::new(v)
    }
}

impl From<AntennaArray> for Vec<Point3> {
    fn from(a: AntennaArray) -> Self {
        a.positions
    }
}

/// Scattering strength model. A view-dependent table maps the aspect angle
/// (radians between `normal` and the direction toward the antenna) to sigma,
/// interpolated linearly and clamped at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RcsModel {
    IsotropicPoint { sigma: f64 },
    ViewDependent { normal: Point3, table: Vec<[f64; 2]> },
}

impl RcsModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            RcsModel::IsotropicPoint { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::Domain(format!("sigma must be >= 0, got {sigma}")));
                }
            }
            RcsModel::ViewDependent { normal, table } => {
                if !(normal.is_finite() && normal.norm() > 0.0) {
                    return Err(Error::Domain("view-dependent normal must be nonzero".into()));
                }
                if table.is_empty() {
                    return Err(Error::Domain("view-dependent table is empty".into()));
                }
                for [aspect, sigma] in table {
                    if !(sigma.is_finite() && *sigma >= 0.0) || !(0.0..=PI).contains(aspect) {
                        return Err(Error::Domain(format!("bad rcs table entry ({aspect}, {sigma})")));
                    }
                }
                if table.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::Domain("rcs table aspects must increase".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sigma_toward(&self, scatterer: Point3, antenna: Point3) -> f64 {
        match self {
            RcsModel::IsotropicPoint { sigma } => *sigma,
            RcsModel::ViewDependent { normal, table } => {
                let view = antenna - scatterer;
                let cos = (view.dot(*normal) / (view.norm() * normal.norm())).clamp(-1.0, 1.0);
                interpolate(table, cos.acos())
            }
        }
    }
}

fn interpolate(table: &[[f64; 2]], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let i = table.partition_point(|e| e[0] <= x);
    let (a, b) = (table[i - 1], table[i]);
    a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Point3,
    pub rcs: RcsModel,
}

impl Scatterer {
    pub fn point(position: Point3, sigma: f64) -> Self {
        Self { position, rcs: RcsModel::IsotropicPoint { sigma } }
    }
}

/// A flat rectangular reflector approximated by a dense facet grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateSpec {
    pub center: Point3,
    pub width_m: f64,
    pub height_m: f64,
    /// Rotation about y; zero faces the array.
    pub yaw_deg: f64,
    /// Rotation about x.
    pub pitch_deg: f64,
    pub facet_pitch_m: f64,
    /// Total sigma, spread evenly over the facets.
    pub sigma: f64,
}

impl Default for PlateSpec {
    fn default() -> Self {
        Self {
            center: Point3::new(0.0, 0.0, 6.0),
            width_m: 0.1,
            height_m: 0.1,
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            facet_pitch_m: 0.005,
            sigma: 1.0,
        }
    }
}

impl PlateSpec {
    pub fn facets(&self) -> Result<Vec<Scatterer>> {
        if !(self.width_m > 0.0 && self.height_m > 0.0 && self.facet_pitch_m > 0.0) {
            return Err(Error::Domain("plate dimensions and facet pitch must be positive".into()));
        }
        let nu = ((self.width_m / self.facet_pitch_m).round() as usize).max(1);
        let nv = ((self.height_m / self.facet_pitch_m).round() as usize).max(1);
        let (sy, cy) = self.yaw_deg.to_radians().sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        // Rotate about x by pitch, then about y by yaw.
        let rotate = |v: Point3| {
            let v = Point3::new(v.x, v.y * cp - v.z * sp, v.y * sp + v.z * cp);
            Point3::new(v.x * cy + v.z * sy, v.y, -v.x * sy + v.z * cy)
        };
        let normal = rotate(Point3::new(0.0, 0.0, -1.0));
        let table = obliquity_table();
        let facet_sigma = self.sigma / (nu * nv) as f64;
        let mut out = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            let u = (i as f64 + 0.5) / nu as f64 - 0.5;
            for k in 0..nv {
                let v = (k as f64 + 0.5) / nv as f64 - 0.5;
                let offset = rotate(Point3::new(u * self.width_m, v * self.height_m, 0.0));
                let table = table.iter().map(|&[a, s]| [a, s * facet_sigma]).collect();
                out.push(Scatterer { position: self.center + offset, rcs: RcsModel::ViewDependent { normal, table } });
            }
        }
        Ok(out)
    }
}

/// Cosine obliquity for the lit side of a facet, dark behind it.
fn obliquity_table() -> Vec<[f64; 2]> {
    let mut t: Vec<[f64; 2]> = (0..=18)
        .map(|i| {
            let a = (i as f64 * 5.0).to_radians();
            [a, a.cos().max(0.0)]
        })
        .collect();
    t.push([PI, 0.0]);
    t
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
}

impl Scene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_point(mut self, position: Point3, sigma: f64) -> Self {
        self.scatterers.push(Scatterer::point(position, sigma));
        self
    }

    pub fn add_plate(&mut self, plate: &PlateSpec) -> Result<()> {
        self.scatterers.extend(plate.facets()?);
        Ok(())
    }

    pub fn union(&self, other: &Scene) -> Scene {
        let mut scatterers = self.scatterers.clone();
        scatterers.extend(other.scatterers.iter().cloned());
        Scene { scatterers }
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.scatterers {
            if !s.position.is_finite() {
                return Err(Error::Domain(format!("non-finite scatterer position {:?}", s.position)));
            }
            s.rcs.validate()?;
        }
        Ok(())
    }
}

/// Complex samples indexed by (antenna, fast-time sample), antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    config: RadarConfig,
    array: AntennaArray,
    data: Vec<Complex64>,
}

impl RadarCube {
    pub fn zeros(config: RadarConfig, array: AntennaArray) -> Self {
        let len = array.len() * config.num_fast_time_samples;
        Self { config, array, data: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn from_data(config: RadarConfig, array: AntennaArray, data: Vec<Complex64>) -> Result<Self> {
        ensure_len(array.len() * config.num_fast_time_samples, data.len())?;
        Ok(Self { config, array, data })
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    pub fn array(&self) -> &AntennaArray {
        &self.array
    }

    pub fn num_antennas(&self) -> usize {
        self.array.len()
    }

    pub fn num_samples(&self) -> usize {
        self.config.num_fast_time_samples
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, antenna: usize) -> &[Complex64] {
        let s = self.num_samples();
        &self.data[antenna * s..(antenna + 1) * s]
    }

    pub fn row_mut(&mut self, antenna: usize) -> &mut [Complex64] {
        let s = self.num_samples();
        &mut self.data[antenna * s..(antenna + 1) * s]
    }

    pub fn get(&self, antenna: usize, sample: usize) -> Complex64 {
        self.data[antenna * self.num_samples() + sample]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.data.iter_mut().for_each(|z| *z *= factor);
    }

    pub fn add_assign(&mut self, other: &RadarCube) -> Result<()> {
        ensure_len(self.data.len(), other.data.len())?;
        if self.config != other.config || self.array != other.array {
            return Err(Error::Domain("cannot add cubes from different setups".into()));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Multiplies every sample of antenna `n` by `exp(j * phases[n])`.
    pub fn rotate_antennas(&mut self, phases: &[f64]) -> Result<()> {
        ensure_len(self.num_antennas(), phases.len())?;
        let s = self.num_samples();
        self.data.par_chunks_mut(s).zip(phases.par_iter()).for_each(|(row, &phi)| {
            let rot = Complex64::from_polar(1.0, phi);
            row.iter_mut().for_each(|z| *z *= rot);
        });
        Ok(())
    }

    /// Rounds every sample through single precision, matching what the cube
    /// file format stores.
    pub fn quantize_f32(&mut self) {
        for z in &mut self.data {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
    }

    pub fn into_parts(self) -> (RadarConfig, AntennaArray, Vec<Complex64>) {
        (self.config, self.array, self.data)
    }
}

/// Noiseless echo of `scene`, summed coherently over scatterers in scene order.
pub fn synthesize_ideal(scene: &Scene, array: &AntennaArray, config: &RadarConfig) -> Result<RadarCube> {
    config.validate()?;
    scene.validate()?;
    for a in array.positions() {
        for sc in &scene.scatterers {
            if a.distance(sc.position) <= 0.0 {
                return Err(Error::Domain(format!("scatterer at {:?} coincides with an antenna", sc.position)));
            }
        }
    }
    let mut cube = RadarCube::zeros(config.clone(), array.clone());
    let s = config.num_fast_time_samples;
    cube.data.par_chunks_mut(s).zip(array.positions().par_iter()).for_each(|(row, &antenna)| {
        for sc in &scene.scatterers {
            accumulate_point(row, antenna, sc, config);
        }
    });
    Ok(cube)
}

fn accumulate_point(row: &mut [Complex64], antenna: Point3, sc: &Scatterer, config: &RadarConfig) {
    let d = antenna.distance(sc.position);
    let amp = sc.rcs.sigma_toward(sc.position, antenna) / (d * d);
    if amp == 0.0 {
        return;
    }
    let phase0 =
        config.phase_convention.factor() * 2.0 * PI * config.carrier_freq_hz * d / config.propagation_speed_mps;
    let step = Complex64::from_polar(1.0, config.beat_phase_step(d));
    let mut z = Complex64::from_polar(amp, phase0);
    for v in row.iter_mut() {
        *v += z;
        z *= step;
    }
}

pub fn synthesize_actual(
    scene: &Scene,
    array: &AntennaArray,
    config: &RadarConfig,
    errors: &PhaseErrorVector,
) -> Result<RadarCube> {
    ensure_len(array.len(), errors.len())?;
    let mut cube = synthesize_ideal(scene, array, config)?;
    cube.rotate_antennas(errors.as_slice())?;
    Ok(cube)
}

/// Per-antenna phase errors in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseErrorVector(Vec<f64>);

impl PhaseErrorVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("phase error must be finite, got {v}")));
        }
        Ok(Self(values))
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

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Relative to element 0, wrapped to `(-pi, pi]`.
    pub fn referenced(&self) -> PhaseErrorVector {
        let r = self.0.first().copied().unwrap_or(0.0);
        Self(self.0.iter().map(|v| wrap_phase(v - r)).collect())
    }

    pub fn negated(&self) -> PhaseErrorVector {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub fn add_constant(&self, c: f64) -> PhaseErrorVector {
        Self(self.0.iter().map(|v| v + c).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftModel {
    pub mean_abs_drift_rad_per_day: f64,
    pub per_antenna_independence: bool,
    pub rng_seed: u64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self { mean_abs_drift_rad_per_day: 0.0005, per_antenna_independence: true, rng_seed: 0 }
    }
}

impl DriftModel {
    /// Gaussian step whose mean magnitude is the configured daily drift.
    pub fn step_std(&self) -> f64 {
        self.mean_abs_drift_rad_per_day * (PI / 2.0).sqrt()
    }
}

/// Accumulated random-walk drift after `days` daily steps. When antennas are
/// not independent every element shares one common walk.
pub fn simulate_drift(model: &DriftModel, days: u32, n: usize) -> Result<PhaseErrorVector> {
    if !(model.mean_abs_drift_rad_per_day >= 0.0 && model.mean_abs_drift_rad_per_day.is_finite()) {
        return Err(Error::Domain("mean_abs_drift_rad_per_day must be >= 0".into()));
    }
    let mut out = vec![0.0; n];
    let std = model.step_std();
    if days == 0 || std == 0.0 {
        return Ok(PhaseErrorVector(out));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
    for _ in 0..days {
        if model.per_antenna_independence {
            out.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        } else {
            let step = normal.sample(&mut rng);
            out.iter_mut().for_each(|v| *v += step);
        }
    }
    Ok(PhaseErrorVector(out))
}

/// Adds circular complex Gaussian noise of total power `noise_power` per sample.
pub fn add_noise<R: Rng + ?Sized>(cube: &mut RadarCube, noise_power: f64, rng: &mut R) {
    if !(noise_power > 0.0) {
        return;
    }
    let std = (noise_power / 2.0).sqrt();
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    for z in cube.data_mut() {
        *z += Complex64::new(normal.sample(rng), normal.sample(rng));
    }
}

/// Adds noise at `snr_db` relative to the cube's mean sample power. Returns
/// the noise power used; a silent cube stays silent.
pub fn add_awgn<R: Rng + ?Sized>(cube: &mut RadarCube, snr_db: f64, rng: &mut R) -> f64 {
    let power = cube.energy() / cube.data().len() as f64;
    let noise = power / 10f64.powf(snr_db / 10.0);
    add_noise(cube, noise, rng);
    noise
}

/// Independent uniform errors in `[-amplitude, amplitude]`.
pub fn uniform_phase_errors<R: Rng + ?Sized>(n: usize, amplitude: f64, rng: &mut R) -> PhaseErrorVector {
    PhaseErrorVector((0..n).map(|_| rng.gen_range(-amplitude..=amplitude)).collect())
}
