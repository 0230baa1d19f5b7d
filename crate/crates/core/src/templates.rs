//! Offline library of ideal point-scatterer spatial spectra over a sensing
//! volume, grouped by range bin.

use std::collections::BTreeMap;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Box3, Point3};
use crate::model::{AntennaArray, PhaseConvention, RadarConfig};
use crate::spectrum::{point_range_row, AngleFft, SpatialSpectrum, TransformDescriptor, Window};

pub const DB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateGridSpec {
    pub volume: Box3,
    #[serde(default = "default_resolution")]
    pub resolution_m: f64,
    #[serde(default)]
    pub transform: TransformDescriptor,
    /// Keeps only points inside a square cone of this half-angle around
    /// boresight (applied to both azimuth and elevation).
    #[serde(default)]
    pub fov_deg: Option<f64>,
    #[serde(default)]
    pub memory_budget_bytes: Option<u64>,
}

fn default_resolution() -> f64 {
    0.05
}

impl TemplateGridSpec {
    pub fn new(volume: Box3, resolution_m: f64) -> Self {
        Self {
            volume,
            resolution_m,
            transform: TransformDescriptor::default(),
            fov_deg: None,
            memory_budget_bytes: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_m > 0.0 && self.resolution_m.is_finite()) {
            return Err(Error::Config(format!("resolution_m must be positive, got {}", self.resolution_m)));
        }
        let e = self.volume.extent();
        if !(self.volume.min.is_finite() && self.volume.max.is_finite()) || e.x < 0.0 || e.y < 0.0 || e.z < 0.0 {
            return Err(Error::Config("grid volume must have min <= max on every axis".into()));
        }
        if let Some(f) = self.fov_deg {
            if !(f > 0.0 && f < 90.0) {
                return Err(Error::Config(format!("fov_deg must lie in (0, 90), got {f}")));
            }
        }
        self.transform.validate()
    }

    /// Points per axis, counting both faces of the box.
    pub fn axis_counts(&self) -> [usize; 3] {
        let e = self.volume.extent();
        [e.x, e.y, e.z].map(|v| (v / self.resolution_m + 1e-9).floor() as usize + 1)
    }

    pub fn in_fov(&self, p: Point3) -> bool {
        match self.fov_deg {
            None => true,
            Some(f) => {
                let t = f.to_radians().tan();
                p.z > 0.0 && p.x.abs() <= p.z * t + 1e-12 && p.y.abs() <= p.z * t + 1e-12
            }
        }
    }

    /// Grid points in x-major, z-minor order.
    pub fn points(&self) -> Vec<Point3> {
        let [nx, ny, nz] = self.axis_counts();
        let d = self.resolution_m;
        let min = self.volume.min;
        let mut out = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let p = Point3::new(min.x + i as f64 * d, min.y + j as f64 * d, min.z + k as f64 * d);
                    if self.in_fov(p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

/// Hash of everything that makes templates and measurements comparable.
pub fn setup_hash(config: &RadarConfig, array: &AntennaArray, descriptor: &TransformDescriptor) -> u64 {
    let mut h = Sha256::new();
    h.update(b"ara-setup-v1");
    for v in [
        config.carrier_freq_hz,
        config.bandwidth_hz,
        config.chirp_duration_s,
        config.sample_rate_hz,
        config.propagation_speed_mps,
    ] {
        h.update(v.to_le_bytes());
    }
    h.update((config.num_fast_time_samples as u64).to_le_bytes());
    h.update([match config.phase_convention {
        PhaseConvention::OneWay => 1u8,
        PhaseConvention::RoundTrip => 2u8,
    }]);
    h.update((array.len() as u64).to_le_bytes());
    for p in array.positions() {
        for v in p.to_array() {
            h.update(v.to_le_bytes());
        }
    }
    h.update([match descriptor.window {
        Window::Rectangular => 0u8,
        Window::Hann => 1u8,
    }]);
    h.update((descriptor.angle_bins as u64).to_le_bytes());
    h.update(descriptor.max_spatial_freq.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub position: Point3,
    pub spectrum: SpatialSpectrum,
    pub range_bin_index: usize,
}

struct TemplateWork {
    fft: AngleFft,
}

fn template_into(
    p: Point3,
    array: &AntennaArray,
    config: &RadarConfig,
    descriptor: &TransformDescriptor,
    kept: &[usize],
    work: &mut TemplateWork,
) -> Result<(usize, SpatialSpectrum)> {
    let bin = config.range_bin(p.norm());
    if bin >= config.num_fast_time_samples {
        return Err(Error::Domain(format!("point {p:?} lies beyond the unambiguous range")));
    }
    let row = point_range_row(p, array, config, descriptor.window, bin)?;
    let angular = work.fft.forward(&row)?;
    let spectrum = SpatialSpectrum::from_row(angular, kept, bin).normalize()?;
    Ok((bin, spectrum))
}

/// Ideal normalized spatial spectrum of an isotropic point at `p`.
pub fn generate_template(
    p: Point3,
    array: &AntennaArray,
    config: &RadarConfig,
    descriptor: &TransformDescriptor,
) -> Result<Template> {
    config.validate()?;
    descriptor.validate()?;
    let mut work = TemplateWork { fft: AngleFft::new(descriptor.angle_bins) };
    let (bin, spectrum) = template_into(p, array, config, descriptor, &descriptor.kept_bins(), &mut work)?;
    Ok(Template { position: p, spectrum, range_bin_index: bin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbHeader {
    pub version: u32,
    pub setup_hash: u64,
    pub config: RadarConfig,
    pub array: AntennaArray,
    pub grid: TemplateGridSpec,
    /// Complex values per template.
    pub width: usize,
}

/// Templates of one range bin, stored in single precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinBlock {
    pub range_bin: usize,
    pub positions: Vec<Point3>,
    pub spectra: Vec<Complex32>,
    /// Reciprocal norm of each stored (quantized) spectrum.
    pub inv_norms: Vec<f64>,
    /// Full-resolution angle bin of each template's strongest component.
    pub peak_bins: Vec<u32>,
}

impl BinBlock {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spectrum(&self, i: usize, width: usize) -> &[Complex32] {
        &self.spectra[i * width..(i + 1) * width]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BinView<'a> {
    pub range_bin: usize,
    pub width: usize,
    block: Option<&'a BinBlock>,
}

impl<'a> BinView<'a> {
    pub fn len(&self) -> usize {
        self.block.map_or(0, BinBlock::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, i: usize) -> Point3 {
        self.block.expect("index into empty bin").positions[i]
    }

    pub fn spectrum(&self, i: usize) -> &'a [Complex32] {
        self.block.expect("index into empty bin").spectrum(i, self.width)
    }

    pub fn inv_norm(&self, i: usize) -> f64 {
        self.block.expect("index into empty bin").inv_norms[i]
    }

    pub fn peak_bin(&self, i: usize) -> usize {
        self.block.expect("index into empty bin").peak_bins[i] as usize
    }

    pub fn template(&self, i: usize) -> Template {
        let values =
            self.spectrum(i).iter().map(|z| Complex64::new(z.re as f64, z.im as f64) * self.inv_norm(i)).collect();
        Template {
            position: self.position(i),
            spectrum: SpatialSpectrum { values, range_bin_index: self.range_bin, normalized: true },
            range_bin_index: self.range_bin,
        }
    }

    pub fn templates(&self) -> impl Iterator<Item = Template> + '_ {
        (0..self.len()).map(|i| self.template(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDatabase {
    header: DbHeader,
    blocks: Vec<BinBlock>,
    index: BTreeMap<usize, usize>,
}

impl TemplateDatabase {
    pub fn from_parts(header: DbHeader, blocks: Vec<BinBlock>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, b) in blocks.iter().enumerate() {
            let w = header.width;
            if b.spectra.len() != b.len() * w || b.inv_norms.len() != b.len() || b.peak_bins.len() != b.len() {
                return Err(Error::Format(format!("inconsistent block for range bin {}", b.range_bin)));
            }
            if index.insert(b.range_bin, i).is_some() {
                return Err(Error::Format(format!("duplicate block for range bin {}", b.range_bin)));
            }
        }
        Ok(Self { header, blocks, index })
    }

    pub fn header(&self) -> &DbHeader {
        &self.header
    }

    pub fn descriptor(&self) -> &TransformDescriptor {
        &self.header.grid.transform
    }

    pub fn blocks(&self) -> &[BinBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(BinBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.index.keys().copied()
    }

    pub fn storage_bytes(&self) -> u64 {
        (self.len() * self.header.width * std::mem::size_of::<Complex32>()) as u64
    }

    /// Group for `range_bin`, possibly empty. Does not check the setup.
    pub fn lookup(&self, range_bin: usize) -> BinView<'_> {
        BinView { range_bin, width: self.header.width, block: self.index.get(&range_bin).map(|&i| &self.blocks[i]) }
    }

    pub fn check_hash(&self, found: u64) -> Result<()> {
        if found == self.header.setup_hash {
            Ok(())
        } else {
            Err(Error::StaleDatabase { expected: self.header.setup_hash, found })
        }
    }

    /// Rejects measurements taken under a different radar or array.
    pub fn check_compatible(&self, config: &RadarConfig, array: &AntennaArray) -> Result<()> {
        self.check_hash(setup_hash(config, array, self.descriptor()))
    }
}

pub fn lookup_by_range(db: &TemplateDatabase, range_bin: usize, setup_hash: u64) -> Result<BinView<'_>> {
    db.check_hash(setup_hash)?;
    Ok(db.lookup(range_bin))
}

pub fn build_database(spec: &TemplateGridSpec, array: &AntennaArray, config: &RadarConfig) -> Result<TemplateDatabase> {
    config.validate()?;
    spec.validate()?;
    let descriptor = spec.transform;
    if array.len() > descriptor.angle_bins {
        return Err(Error::Config(format!("{} antennas exceed {} angle bins", array.len(), descriptor.angle_bins)));
    }
    let kept = descriptor.kept_bins();
    let width = kept.len();
    let points = spec.points();
    let bytes = (points.len() * width * std::mem::size_of::<Complex32>()) as u64;
    if let Some(budget) = spec.memory_budget_bytes {
        if bytes > budget {
            return Err(Error::Capacity { templates: points.len(), bytes, budget });
        }
    }
    let bins: Vec<usize> = points.iter().map(|p| config.range_bin(p.norm())).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| bins[i]);

    let mut spectra = vec![Complex32::new(0.0, 0.0); points.len() * width];
    let mut inv_norms = vec![0.0; points.len()];
    let mut peaks = vec![0u32; points.len()];
    spectra
        .par_chunks_mut(width.max(1))
        .zip(inv_norms.par_iter_mut())
        .zip(peaks.par_iter_mut())
        .zip(order.par_iter())
        .try_for_each_init(
            || TemplateWork { fft: AngleFft::new(descriptor.angle_bins) },
            |work, (((out, inv), peak), &idx)| -> Result<()> {
                let (_, s) = template_into(points[idx], array, config, &descriptor, &kept, work)?;
                let mut best = (0usize, -1.0f64);
                let mut norm_sq = 0.0;
                for (k, (o, v)) in out.iter_mut().zip(&s.values).enumerate() {
                    *o = Complex32::new(v.re as f32, v.im as f32);
                    let q = Complex64::new(o.re as f64, o.im as f64).norm_sqr();
                    norm_sq += q;
                    if q > best.1 {
                        best = (k, q);
                    }
                }
                *inv = 1.0 / norm_sq.sqrt();
                *peak = kept[best.0] as u32;
                Ok(())
            },
        )?;

    let mut blocks: Vec<BinBlock> = Vec::new();
    for (slot, &idx) in order.iter().enumerate() {
        if blocks.last().is_none_or(|b| b.range_bin != bins[idx]) {
            blocks.push(BinBlock { range_bin: bins[idx], ..Default::default() });
        }
        let b = blocks.last_mut().expect("block pushed above");
        b.positions.push(points[idx]);
        b.spectra.extend_from_slice(&spectra[slot * width..(slot + 1) * width]);
        b.inv_norms.push(inv_norms[slot]);
        b.peak_bins.push(peaks[slot]);
    }
    let header = DbHeader {
        version: DB_VERSION,
        setup_hash: setup_hash(config, array, &descriptor),
        config: config.clone(),
        array: array.clone(),
        grid: spec.clone(),
        width,
    };
    TemplateDatabase::from_parts(header, blocks)
}
