//! Far-field beampattern of a phase-corrupted array.

use std::f64::consts::PI;

use ara_core::model::{AntennaArray, PhaseErrorVector, RadarConfig};
use ara_core::{Error, Result};
use num_complex::Complex64;

/// Beamformer output power toward azimuth `theta_rad` (in the x-z plane)
/// for a plane wave arriving from boresight.
pub fn pattern_power(array: &AntennaArray, errors: &PhaseErrorVector, config: &RadarConfig, theta_rad: f64) -> f64 {
    let k = config.phase_convention.factor() * 2.0 * PI / config.wavelength_m();
    let (s, c) = theta_rad.sin_cos();
    let sum: Complex64 = array
        .positions()
        .iter()
        .zip(errors.as_slice())
        .map(|(p, e)| Complex64::from_polar(1.0, e + k * (p.x * s + p.z * c - p.z)))
        .sum();
    sum.norm_sqr()
}

fn bisect(f: &dyn Fn(f64) -> f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (inside + outside);
        if f(mid) >= 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Half-power width of the main lobe, in degrees.
pub fn beamwidth_3db(array: &AntennaArray, errors: &PhaseErrorVector, config: &RadarConfig) -> Result<f64> {
    if errors.len() != array.len() {
        return Err(Error::Shape { expected: array.len(), got: errors.len() });
    }
    let aperture = array.aperture_m().max(config.wavelength_m() / 2.0);
    let nominal = (config.wavelength_m() / (config.phase_convention.factor() * aperture)).min(1.0).asin();
    let step = (nominal / 40.0).min(0.25f64.to_radians());
    let p = |t: f64| pattern_power(array, errors, config, t);

    let limit = PI / 2.0;
    let n_steps = (2.0 * limit / step).ceil() as usize;
    let (mut best_t, mut best_p) = (0.0, f64::MIN);
    for i in 0..=n_steps {
        let t = -limit + i as f64 * step;
        let v = p(t);
        if v > best_p {
            best_p = v;
            best_t = t;
        }
    }
    if best_t.abs() > 3.0 * nominal {
        return Err(Error::DegenerateBeam(format!(
            "pattern peak at {:.2} deg, far from boresight",
            best_t.to_degrees()
        )));
    }
    // Refine the peak by golden-section search within one coarse step.
    let (mut a, mut b) = (best_t - step, best_t + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if p(c) > p(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let peak_t = 0.5 * (a + b);
    let half = 0.5 * p(peak_t).max(best_p);
    let above = |t: f64| p(t) - half;

    let mut edges = [0.0; 2];
    for (slot, dir) in [(0usize, -1.0), (1, 1.0)] {
        let mut t = peak_t;
        loop {
            let next = t + dir * step;
            if next.abs() > limit {
                return Err(Error::DegenerateBeam("no half-power crossing inside the visible region".into()));
            }
            if above(next) < 0.0 {
                edges[slot] = bisect(&above, t, next);
                break;
            }
            t = next;
        }
    }
    Ok((edges[1] - edges[0]).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_error_width_matches_uniform_aperture() {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(86, &cfg).unwrap();
        let w = beamwidth_3db(&arr, &PhaseErrorVector::zeros(86), &cfg).unwrap();
        // 0.886 lambda / (N d) for a uniformly weighted line array.
        let approx = (0.886 * 2.0 / 86.0f64).to_degrees();
        assert!((w - 1.18).abs() < 0.01, "{w}");
        assert!((w - approx).abs() / approx < 0.01);
        let shifted = PhaseErrorVector::new(vec![0.7; 86]).unwrap();
        assert!((beamwidth_3db(&arr, &shifted, &cfg).unwrap() - w).abs() < 1e-9);
    }

    #[test]
    fn defocus_widens_the_beam() {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(32, &cfg).unwrap();
        let w0 = beamwidth_3db(&arr, &PhaseErrorVector::zeros(32), &cfg).unwrap();
        let half = arr.aperture_m() / 2.0;
        let mut last = w0;
        for peak in [0.5, 1.0, 2.0] {
            let widths = [1.0, -1.0].map(|sign| {
                let e = arr.positions().iter().map(|p| sign * peak * (p.x / half).powi(2)).collect();
                beamwidth_3db(&arr, &PhaseErrorVector::new(e).unwrap(), &cfg).unwrap()
            });
            assert!(widths.iter().all(|w| *w > last), "{peak}: {widths:?} vs {last}");
            last = widths[0].min(widths[1]);
        }
    }

    #[test]
    fn uncorrelated_errors_can_narrow_the_main_lobe() {
        // Width changes are second order in the errors and take either sign;
        // over 100 draws the mean change stays tiny while many draws narrow.
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(32, &cfg).unwrap();
        let w0 = beamwidth_3db(&arr, &PhaseErrorVector::zeros(32), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let changes: Vec<f64> = (0..100)
            .map(|_| {
                let e = PhaseErrorVector::new((0..32).map(|_| rng.gen_range(-0.4..0.4)).collect()).unwrap();
                (beamwidth_3db(&arr, &e, &cfg).unwrap() - w0) / w0
            })
            .collect();
        assert!(changes.iter().any(|c| *c < 0.0));
        assert!(changes.iter().any(|c| *c > 0.0));
        assert!((changes.iter().sum::<f64>() / 100.0).abs() < 0.01);
    }

    #[test]
    fn wild_errors_are_degenerate_or_wider() {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(16, &cfg).unwrap();
        // A full linear ramp steers the beam 30 degrees away.
        let ramp = PhaseErrorVector::new((0..16).map(|i| PI * 0.5 * i as f64).collect()).unwrap();
        assert!(matches!(beamwidth_3db(&arr, &ramp, &cfg), Err(Error::DegenerateBeam(_))));
    }
}
