//! Angle-of-arrival estimation for a four-element uniform circular array.
//!
//! Snapshots are turned into a spatial covariance, MUSIC scans the noise
//! subspace over an azimuth grid, and the strongest peaks become the
//! per-locator path estimates. [`AoaHistory`] implements the five-sample
//! consistency filter applied before triangulation.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Complex, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{angular_distance_deg, circular_mean_deg, wrap_deg};

pub type C64 = Complex<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// BLE advertising channel 37.
pub const BLE_CARRIER_HZ: f64 = 2.402e9;
/// Center of the BLE band; the array spacing is specified against it.
pub const BLE_BAND_CENTER_HZ: f64 = 2.44e9;
pub const ARRAY_ELEMENTS: usize = 4;
/// Samples kept per antenna stream from one constant-tone extension:
/// 152 symbols round-robin over 4 antennas, every second one discarded.
pub const SAMPLES_PER_STREAM: usize = 152 / 2 / ARRAY_ELEMENTS;

/// Geometry of a uniform circular array with [`ARRAY_ELEMENTS`] elements.
///
/// Element `m` sits at angle `m · 90°` in the array frame. The default
/// reads the 0.45λ element spacing as the chord between adjacent elements,
/// giving a radius of `0.45λ / √2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub radius_m: f64,
    /// Wavelength of the received carrier.
    pub wavelength_m: f64,
}

impl ArrayGeometry {
    pub fn from_chord_spacing(spacing_wavelengths: f64, spacing_ref_hz: f64, carrier_hz: f64) -> Self {
        let chord = spacing_wavelengths * SPEED_OF_LIGHT / spacing_ref_hz;
        let radius_m = chord / (2.0 * (PI / ARRAY_ELEMENTS as f64).sin());
        Self { radius_m, wavelength_m: SPEED_OF_LIGHT / carrier_hz }
    }

    /// Plane-wave response of the array to a source at `azimuth_deg`
    /// (array frame). Element phase leads by `k · (p_m · u)`.
    pub fn steering_vector(&self, azimuth_deg: f64) -> Vector4<C64> {
        let k = 2.0 * PI * self.radius_m / self.wavelength_m;
        let az = azimuth_deg.to_radians();
        Vector4::from_fn(|m, _| {
            let psi = 2.0 * PI * m as f64 / ARRAY_ELEMENTS as f64;
            C64::from_polar(1.0, k * (az - psi).cos())
        })
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::from_chord_spacing(0.45, BLE_BAND_CENTER_HZ, BLE_CARRIER_HZ)
    }
}

/// Per-antenna complex samples of one tone capture.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSnapshot {
    pub streams: [Vec<C64>; ARRAY_ELEMENTS],
}

impl IqSnapshot {
    pub fn samples(&self) -> usize {
        self.streams[0].len()
    }
}

/// Sample spatial covariance `R = (1/N) Σ x xᴴ`.
pub fn covariance(snapshot: &IqSnapshot) -> Result<Matrix4<C64>> {
    let n = snapshot.samples();
    if let Some(s) = snapshot.streams.iter().find(|s| s.len() != n) {
        return Err(Error::InvalidInput(format!(
            "antenna streams differ in length ({} vs {n})",
            s.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples per antenna, got {n}")));
    }
    let mut r = Matrix4::<C64>::zeros();
    for t in 0..n {
        let x = Vector4::from_fn(|m, _| snapshot.streams[m][t]);
        for i in 0..ARRAY_ELEMENTS {
            for j in i..ARRAY_ELEMENTS {
                r[(i, j)] += x[i] * x[j].conj();
            }
        }
    }
    let scale = 1.0 / n as f64;
    for i in 0..ARRAY_ELEMENTS {
        r[(i, i)] = C64::new(r[(i, i)].re * scale, 0.0);
        for j in i + 1..ARRAY_ELEMENTS {
            r[(i, j)] *= scale;
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    Ok(r)
}

/// MUSIC pseudo-spectrum over an azimuth grid covering `[-180, 180)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSpectrum {
    pub grid_deg: Vec<f64>,
    /// Normalized so that the maximum is 1.
    pub values: Vec<f64>,
    /// Set when the covariance had no distinguishable signal subspace.
    pub flat: bool,
}

impl AngularSpectrum {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Indices of local maxima, treating the grid as circular. A sample is
    /// a peak if it is `>=` its left neighbour and `>` its right one, so a
    /// two-sample plateau yields exactly one peak.
    pub fn local_maxima(&self) -> Vec<usize> {
        let n = self.values.len();
        if n < 3 {
            return Vec::new();
        }
        (0..n)
            .filter(|&i| {
                let v = self.values[i];
                v >= self.values[(i + n - 1) % n] && v > self.values[(i + 1) % n]
            })
            .collect()
    }
}

/// Azimuth grid `[-180, 180)` with the given step.
pub fn azimuth_grid(step_deg: f64) -> Vec<f64> {
    let n = (360.0 / step_deg).floor() as usize;
    (0..n).map(|i| -180.0 + i as f64 * step_deg).collect()
}

/// MUSIC pseudo-spectrum `1 / ‖Eₙᴴ a(θ)‖²` for the given model order.
pub fn music_spectrum(
    r: &Matrix4<C64>,
    geometry: &ArrayGeometry,
    num_sources: usize,
    grid_step_deg: f64,
) -> Result<AngularSpectrum> {
    if !(1..ARRAY_ELEMENTS).contains(&num_sources) {
        return Err(Error::InvalidInput(format!("num_sources must be 1..=3, got {num_sources}")));
    }
    if !(grid_step_deg > 0.0 && grid_step_deg <= 90.0) {
        return Err(Error::InvalidInput(format!("grid step {grid_step_deg} out of range")));
    }
    let eig = r.symmetric_eigen();
    let mut order: Vec<usize> = (0..ARRAY_ELEMENTS).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lo = eig.eigenvalues[order[0]];
    let hi = eig.eigenvalues[order[ARRAY_ELEMENTS - 1]];
    let flat = !(hi - lo > 1e-12 * hi.abs().max(f64::MIN_POSITIVE));

    let noise: Vec<Vector4<C64>> = order[..ARRAY_ELEMENTS - num_sources]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();

    let grid_deg = azimuth_grid(grid_step_deg);
    let mut values: Vec<f64> = grid_deg
        .iter()
        .map(|&az| {
            let a = geometry.steering_vector(az);
            let denom: f64 = noise.iter().map(|e| e.dotc(&a).norm_sqr()).sum();
            1.0 / denom.max(1e-300)
        })
        .collect();
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(AngularSpectrum { grid_deg, values, flat })
}

/// The `k` highest spectrum peaks, strongest first. When fewer than `k`
/// peaks exist, the global maximum fills the remaining slots.
pub fn extract_paths(spectrum: &AngularSpectrum, k: usize) -> Result<Vec<f64>> {
    if spectrum.flat {
        return Err(Error::FlatSpectrum);
    }
    let mut peaks = spectrum.local_maxima();
    peaks.sort_by(|&a, &b| spectrum.values[b].total_cmp(&spectrum.values[a]).then(a.cmp(&b)));
    let global = peaks.first().copied().unwrap_or_else(|| spectrum.argmax());
    Ok((0..k)
        .map(|i| spectrum.grid_deg[peaks.get(i).copied().unwrap_or(global)])
        .collect())
}

/// MUSIC estimator producing the two most likely paths per locator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusicEstimator {
    pub geometry: ArrayGeometry,
    pub grid_step_deg: f64,
    pub num_sources: usize,
}

impl Default for MusicEstimator {
    fn default() -> Self {
        Self { geometry: ArrayGeometry::default(), grid_step_deg: 1.0, num_sources: 2 }
    }
}

impl MusicEstimator {
    pub fn spectrum(&self, snapshot: &IqSnapshot) -> Result<AngularSpectrum> {
        music_spectrum(&covariance(snapshot)?, &self.geometry, self.num_sources, self.grid_step_deg)
    }

    /// Two strongest path azimuths in the array frame.
    ///
    /// A numerically rank-one covariance carries a single path; its noise
    /// subspace is then partly arbitrary and any secondary peak is an
    /// artefact, so both slots report the main peak.
    pub fn estimate_paths(&self, snapshot: &IqSnapshot) -> Result<[f64; 2]> {
        let r = covariance(snapshot)?;
        let spectrum = music_spectrum(&r, &self.geometry, self.num_sources, self.grid_step_deg)?;
        let p = extract_paths(&spectrum, 2)?;
        if signal_rank(&r) < 2 {
            return Ok([p[0], p[0]]);
        }
        Ok([p[0], p[1]])
    }
}

/// Eigenvalues below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Number of eigenvalues of `r` above [`RANK_TOLERANCE`] times the largest.
pub fn signal_rank(r: &Matrix4<C64>) -> usize {
    let ev = r.symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(0.0, f64::max);
    ev.iter().filter(|&&l| l > RANK_TOLERANCE * max).count()
}

/// Number of past estimates kept by [`AoaHistory`].
pub const HISTORY_LEN: usize = 5;

/// Last five AoA estimates of one (locator, path slot) stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AoaHistory {
    buf: VecDeque<f64>,
}

impl AoaHistory {
    pub fn new() -> Self {
        Self { buf: VecDeque::with_capacity(HISTORY_LEN) }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn contents(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }

    pub fn push(&mut self, azimuth_deg: f64) {
        if self.buf.len() == HISTORY_LEN {
            self.buf.pop_front();
        }
        self.buf.push_back(wrap_deg(azimuth_deg));
    }
}

/// Pushes `new` into the history and returns the two buffered estimates
/// closest (circularly) to the buffer's mean direction, closest first.
pub fn filter_aoa(history: &mut AoaHistory, new: f64) -> [f64; 2] {
    history.push(new);
    let entries: Vec<f64> = history.contents().collect();
    let newest = *entries.last().expect("history holds the pushed value");
    let center = circular_mean_deg(&entries).unwrap_or(newest);
    let mut ranked: Vec<(usize, f64)> = entries.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| {
        angular_distance_deg(a.1, center)
            .total_cmp(&angular_distance_deg(b.1, center))
            .then(b.0.cmp(&a.0))
    });
    let first = ranked[0].1;
    [first, ranked.get(1).map_or(first, |r| r.1)]
}
