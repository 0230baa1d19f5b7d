//! Versioned little-endian binary formats for cubes, template databases and
//! phase vectors, plus JSON-lines reports and spectrum CSV. Every write is atomic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::{Complex32, Complex64};
use serde::Serialize;

use crate::detector::Detection;
use crate::error::{ensure_len, Error, Result};
use crate::geometry::{Box3, Point3};
use crate::model::{AntennaArray, PhaseConvention, PhaseErrorVector, RadarConfig, RadarCube};
use crate::ranker::RankedARA;
use crate::spectrum::{SpatialSpectrum, TransformDescriptor, Window};
use crate::templates::{BinBlock, DbHeader, TemplateDatabase, TemplateGridSpec, DB_VERSION};

pub const CUBE_MAGIC: &[u8; 5] = b"ARAC1";
pub const CUBE_VERSION: u32 = 1;
pub const DB_MAGIC: &[u8; 6] = b"ARADB1";
pub const PHASE_MAGIC: &[u8; 6] = b"ARAPE1";
pub const PHASE_VERSION: u32 = 1;

/// Writes through a temporary file in the destination directory, then renames.
pub fn atomic_write<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Out<'a>(&'a mut dyn Write);

impl Out<'_> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f32(&mut self, v: f32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn point(&mut self, p: Point3) -> Result<()> {
        p.to_array().into_iter().try_for_each(|v| self.f64(v))
    }
    fn count(&mut self, n: usize) -> Result<()> {
        self.u32(u32::try_from(n).map_err(|_| Error::Format(format!("count {n} does not fit in u32")))?)
    }
}

struct In<'a>(&'a mut dyn Read);

impl In<'_> {
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn point(&mut self) -> Result<Point3> {
        Ok(Point3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn expect_end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.0.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn check_magic(r: &mut In<'_>, magic: &[u8], what: &str) -> Result<()> {
    let mut b = vec![0u8; magic.len()];
    r.0.read_exact(&mut b).map_err(truncated)?;
    if b != magic {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    Ok(())
}

fn check_version(found: u32, supported: u32, what: &str) -> Result<()> {
    if found != supported {
        return Err(Error::Format(format!("unsupported {what} version {found} (this build reads {supported})")));
    }
    Ok(())
}

fn write_config(w: &mut Out<'_>, c: &RadarConfig) -> Result<()> {
    for v in [c.carrier_freq_hz, c.bandwidth_hz, c.chirp_duration_s, c.sample_rate_hz, c.propagation_speed_mps] {
        w.f64(v)?;
    }
    w.u64(c.num_fast_time_samples as u64)?;
    w.u8(match c.phase_convention {
        PhaseConvention::OneWay => 1,
        PhaseConvention::RoundTrip => 2,
    })
}

fn read_config(r: &mut In<'_>) -> Result<RadarConfig> {
    let carrier_freq_hz = r.f64()?;
    let bandwidth_hz = r.f64()?;
    let chirp_duration_s = r.f64()?;
    let sample_rate_hz = r.f64()?;
    let propagation_speed_mps = r.f64()?;
    let num_fast_time_samples = usize::try_from(r.u64()?).map_err(|_| Error::Format("sample count overflow".into()))?;
    let phase_convention = match r.u8()? {
        1 => PhaseConvention::OneWay,
        2 => PhaseConvention::RoundTrip,
        v => return Err(Error::Format(format!("unknown phase convention tag {v}"))),
    };
    let c = RadarConfig {
        carrier_freq_hz,
        bandwidth_hz,
        chirp_duration_s,
        num_fast_time_samples,
        sample_rate_hz,
        propagation_speed_mps,
        phase_convention,
    };
    c.validate().map_err(|e| Error::Format(format!("stored radar config invalid: {e}")))?;
    Ok(c)
}

fn write_array(w: &mut Out<'_>, a: &AntennaArray) -> Result<()> {
    w.count(a.len())?;
    a.positions().iter().try_for_each(|p| w.point(*p))
}

fn read_array(r: &mut In<'_>) -> Result<AntennaArray> {
    let n = r.u32()? as usize;
    let positions = (0..n).map(|_| r.point()).collect::<Result<Vec<_>>>()?;
    AntennaArray::new(positions).map_err(|e| Error::Format(format!("stored array invalid: {e}")))
}

pub fn encode_cube(cube: &RadarCube, w: &mut dyn Write) -> Result<()> {
    let mut w = Out(w);
    w.bytes(CUBE_MAGIC)?;
    w.u32(CUBE_VERSION)?;
    w.count(cube.num_antennas())?;
    w.count(cube.num_samples())?;
    write_config(&mut w, cube.config())?;
    write_array(&mut w, cube.array())?;
    for z in cube.data() {
        w.f32(z.re as f32)?;
        w.f32(z.im as f32)?;
    }
    Ok(())
}

pub fn decode_cube(r: &mut dyn Read) -> Result<RadarCube> {
    let mut r = In(r);
    check_magic(&mut r, CUBE_MAGIC, "cube")?;
    check_version(r.u32()?, CUBE_VERSION, "cube")?;
    let n = r.u32()? as usize;
    let s = r.u32()? as usize;
    let config = read_config(&mut r)?;
    let array = read_array(&mut r)?;
    if array.len() != n || config.num_fast_time_samples != s {
        return Err(Error::Format("cube header dimensions disagree".into()));
    }
    let data = (0..n * s).map(|_| Ok(Complex64::new(r.f32()? as f64, r.f32()? as f64))).collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    RadarCube::from_data(config, array, data)
}

pub fn write_cube(path: &Path, cube: &RadarCube) -> Result<()> {
    atomic_write(path, |w| encode_cube(cube, w))
}

pub fn read_cube(path: &Path) -> Result<RadarCube> {
    decode_cube(&mut BufReader::new(File::open(path)?))
}

fn write_grid(w: &mut Out<'_>, g: &TemplateGridSpec) -> Result<()> {
    w.point(g.volume.min)?;
    w.point(g.volume.max)?;
    w.f64(g.resolution_m)?;
    w.u8(match g.transform.window {
        Window::Rectangular => 0,
        Window::Hann => 1,
    })?;
    w.count(g.transform.angle_bins)?;
    w.f64(g.transform.max_spatial_freq)?;
    match g.fov_deg {
        Some(f) => {
            w.u8(1)?;
            w.f64(f)?;
        }
        None => w.u8(0)?,
    }
    match g.memory_budget_bytes {
        Some(b) => {
            w.u8(1)?;
            w.u64(b)
        }
        None => w.u8(0),
    }
}

fn read_grid(r: &mut In<'_>) -> Result<TemplateGridSpec> {
    let volume = Box3::new(r.point()?, r.point()?);
    let resolution_m = r.f64()?;
    let window = match r.u8()? {
        0 => Window::Rectangular,
        1 => Window::Hann,
        v => return Err(Error::Format(format!("unknown window tag {v}"))),
    };
    let angle_bins = r.u32()? as usize;
    let max_spatial_freq = r.f64()?;
    let fov_deg = match r.u8()? {
        0 => None,
        _ => Some(r.f64()?),
    };
    let memory_budget_bytes = match r.u8()? {
        0 => None,
        _ => Some(r.u64()?),
    };
    Ok(TemplateGridSpec {
        volume,
        resolution_m,
        transform: TransformDescriptor { window, angle_bins, max_spatial_freq },
        fov_deg,
        memory_budget_bytes,
    })
}

pub fn encode_database(db: &TemplateDatabase, w: &mut dyn Write) -> Result<()> {
    let mut w = Out(w);
    let h = db.header();
    w.bytes(DB_MAGIC)?;
    w.u32(h.version)?;
    w.u64(h.setup_hash)?;
    write_config(&mut w, &h.config)?;
    write_array(&mut w, &h.array)?;
    write_grid(&mut w, &h.grid)?;
    w.count(h.width)?;
    w.count(db.blocks().len())?;
    w.u64(db.len() as u64)?;
    for b in db.blocks() {
        w.count(b.range_bin)?;
        w.count(b.len())?;
        for i in 0..b.len() {
            w.point(b.positions[i])?;
            w.f64(b.inv_norms[i])?;
            w.u32(b.peak_bins[i])?;
        }
        for z in &b.spectra {
            w.f32(z.re)?;
            w.f32(z.im)?;
        }
    }
    Ok(())
}

pub fn decode_database(r: &mut dyn Read) -> Result<TemplateDatabase> {
    let mut r = In(r);
    check_magic(&mut r, DB_MAGIC, "template database")?;
    let version = r.u32()?;
    check_version(version, DB_VERSION, "template database")?;
    let setup_hash = r.u64()?;
    let config = read_config(&mut r)?;
    let array = read_array(&mut r)?;
    let grid = read_grid(&mut r)?;
    let width = r.u32()? as usize;
    let nblocks = r.u32()? as usize;
    let total = r.u64()?;
    let mut blocks = Vec::with_capacity(nblocks);
    let mut seen = 0u64;
    for _ in 0..nblocks {
        let range_bin = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut b = BinBlock { range_bin, ..Default::default() };
        for _ in 0..count {
            b.positions.push(r.point()?);
            b.inv_norms.push(r.f64()?);
            b.peak_bins.push(r.u32()?);
        }
        b.spectra = (0..count * width).map(|_| Ok(Complex32::new(r.f32()?, r.f32()?))).collect::<Result<Vec<_>>>()?;
        seen += count as u64;
        blocks.push(b);
    }
    if seen != total {
        return Err(Error::Format(format!("database declares {total} templates but holds {seen}")));
    }
    r.expect_end()?;
    let header = DbHeader { version, setup_hash, config, array, grid, width };
    TemplateDatabase::from_parts(header, blocks)
}

pub fn write_database(path: &Path, db: &TemplateDatabase) -> Result<()> {
    atomic_write(path, |w| encode_database(db, w))
}

pub fn read_database(path: &Path) -> Result<TemplateDatabase> {
    decode_database(&mut BufReader::new(File::open(path)?))
}

pub fn encode_phase_vector(v: &PhaseErrorVector, w: &mut dyn Write) -> Result<()> {
    let mut w = Out(w);
    w.bytes(PHASE_MAGIC)?;
    w.u32(PHASE_VERSION)?;
    w.count(v.len())?;
    v.as_slice().iter().try_for_each(|x| w.f64(*x))
}

pub fn decode_phase_vector(r: &mut dyn Read) -> Result<PhaseErrorVector> {
    let mut r = In(r);
    check_magic(&mut r, PHASE_MAGIC, "phase vector")?;
    check_version(r.u32()?, PHASE_VERSION, "phase vector")?;
    let n = r.u32()? as usize;
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    PhaseErrorVector::new(values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_phase_vector(path: &Path, v: &PhaseErrorVector) -> Result<()> {
    atomic_write(path, |w| encode_phase_vector(v, w))
}

pub fn read_phase_vector(path: &Path) -> Result<PhaseErrorVector> {
    decode_phase_vector(&mut BufReader::new(File::open(path)?))
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum ReportLine {
    Detection { position: Point3, range_bin: usize, similarity: f64 },
    Ranked { rank: usize, position: Point3, range_bin: usize, similarity: f64, geometric_score: f64, final_score: f64 },
}

/// One JSON object per line: every detection, then the ranked list.
pub fn encode_detection_report(detections: &[Detection], ranked: &[RankedARA], w: &mut dyn Write) -> Result<()> {
    let json = |e: serde_json::Error| Error::Format(e.to_string());
    for d in detections {
        let line =
            ReportLine::Detection { position: d.position, range_bin: d.range_bin_index, similarity: d.similarity };
        serde_json::to_writer(&mut *w, &line).map_err(json)?;
        w.write_all(b"\n")?;
    }
    for (i, r) in ranked.iter().enumerate() {
        let line = ReportLine::Ranked {
            rank: i + 1,
            position: r.detection.position,
            range_bin: r.detection.range_bin_index,
            similarity: r.detection.similarity,
            geometric_score: r.geometric_score,
            final_score: r.final_score,
        };
        serde_json::to_writer(&mut *w, &line).map_err(json)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One row per kept angle bin, in the spectrum's own order.
pub fn encode_spectrum_csv(
    spectrum: &SpatialSpectrum,
    descriptor: &TransformDescriptor,
    w: &mut dyn Write,
) -> Result<()> {
    let kept = descriptor.kept_bins();
    ensure_len(kept.len(), spectrum.values.len())?;
    writeln!(w, "range_bin,angle_bin,spatial_freq,magnitude,phase_rad")?;
    for (&k, z) in kept.iter().zip(&spectrum.values) {
        writeln!(w, "{},{k},{},{},{}", spectrum.range_bin_index, descriptor.bin_frequency(k), z.norm(), z.arg())?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize_ideal, Scene};
    use crate::templates::build_database;

    fn cube() -> RadarCube {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(8, &cfg).unwrap();
        synthesize_ideal(&Scene::new().with_point(Point3::new(0.1, 0.0, 5.0), 1.0), &arr, &cfg).unwrap()
    }

    #[test]
    fn cube_round_trip_is_bit_exact() {
        let mut c = cube();
        let mut buf = Vec::new();
        encode_cube(&c, &mut buf).unwrap();
        assert_eq!(buf.len(), 5 + 4 * 3 + 5 * 8 + 8 + 1 + 4 + 8 * 24 + 8 * 256 * 8);
        let back = decode_cube(&mut buf.as_slice()).unwrap();
        c.quantize_f32();
        assert_eq!(back, c);
        let mut again = Vec::new();
        encode_cube(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn cube_reader_rejects_bad_input() {
        let mut buf = Vec::new();
        encode_cube(&cube(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[5] = 9;
        let err = decode_cube(&mut bad.as_slice()).unwrap_err().to_string();
        assert!(err.contains("unsupported cube version 9"), "{err}");
        assert!(decode_cube(&mut &buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(decode_cube(&mut extra.as_slice()).is_err());
        assert!(decode_cube(&mut &b"XXXXX"[..]).is_err());
    }

    #[test]
    fn database_round_trip() {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(8, &cfg).unwrap();
        let mut spec = TemplateGridSpec::new(Box3::new(Point3::new(-0.5, 0.0, 4.0), Point3::new(0.5, 0.0, 5.0)), 0.25);
        spec.fov_deg = Some(30.0);
        let db = build_database(&spec, &arr, &cfg).unwrap();
        let mut buf = Vec::new();
        encode_database(&db, &mut buf).unwrap();
        assert_eq!(&buf[..6], DB_MAGIC);
        let back = decode_database(&mut buf.as_slice()).unwrap();
        assert_eq!(back, db);
        buf[6] = 2;
        assert!(decode_database(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn spectrum_csv_has_one_row_per_kept_bin() {
        let c = cube();
        let d = TransformDescriptor { max_spatial_freq: 0.1, ..Default::default() };
        let ra = crate::spectrum::range_angle(&c, &d).unwrap();
        let bin = c.config().range_bin(5.0);
        let s = crate::spectrum::slice_and_normalize(&ra, bin, &d).unwrap();
        let mut out = Vec::new();
        encode_spectrum_csv(&s, &d, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("range_bin,angle_bin,spatial_freq,magnitude,phase_rad"));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), d.kept_bins().len());
        let energy: f64 = rows.iter().map(|r| r[3] * r[3]).sum();
        assert!((energy - 1.0).abs() < 1e-9);
        assert!(rows.iter().all(|r| r[0] == bin as f64 && r[2].abs() <= 0.1 + 1e-12));
        assert!(encode_spectrum_csv(&s, &TransformDescriptor::default(), &mut Vec::new()).is_err());
    }

    #[test]
    fn phase_vector_round_trip_and_atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pe.bin");
        let v = PhaseErrorVector::new(vec![0.0, -0.1, 3.0, 1e-300]).unwrap();
        write_phase_vector(&path, &v).unwrap();
        assert_eq!(read_phase_vector(&path).unwrap(), v);
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn report_lines_parse() {
        let d = Detection { position: Point3::new(0.0, 0.0, 6.0), similarity: 0.98, range_bin_index: 40 };
        let r = RankedARA { detection: d.clone(), geometric_score: 1.0, final_score: 1.58 };
        let mut buf = Vec::new();
        encode_detection_report(&[d], &[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["record"], "detection");
        assert_eq!(lines[1]["rank"], 1);
        assert_eq!(lines[1]["position"][2], 6.0);
    }
}
