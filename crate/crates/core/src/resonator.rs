//! Two-mode surrogate of the split-ring sensor's transmission response.
//!
//! Each harmonic is a Lorentzian notch in dB. An oil sample at standoff `z`
//! couples into mode `m` with filling factor `kappa0 * exp(-z / delta)`, which
//! pulls the resonance down through the perturbation relation
//! `f = f0 / sqrt(1 + kappa (eps'(f) - 1))` and adds dielectric loss
//! `1/Q = 1/Q0 + kappa tan(delta)`. Dips shallow in proportion to `Q/Q0`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dielectric::MaterialModel;
use crate::error::{domain, Error, Result};
use crate::seed::rng_from_seed;

/// Fixed-point stopping rule for the loaded resonance, in Hz.
pub const FIXED_POINT_TOLERANCE_HZ: f64 = 1e3;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 100;

/// Printed-circuit dimensions in millimetres.
///
/// Carried as metadata only; the surrogate does not derive resonances from
/// geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorGeometry {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub i: f64,
    pub j: f64,
    pub k: f64,
    pub l: f64,
    pub substrate_thickness: f64,
    pub copper_thickness: f64,
}

impl Default for ResonatorGeometry {
    fn default() -> Self {
        ResonatorGeometry {
            a: 110.0,
            b: 70.0,
            c: 18.35,
            d: 1.9,
            e: 38.1,
            f: 7.8,
            g: 15.7,
            h: 30.0,
            i: 0.5,
            j: 33.8,
            k: 23.0,
            l: 35.7,
            substrate_thickness: 1.6,
            copper_thickness: 0.035,
        }
    }
}

impl ResonatorGeometry {
    pub fn dimensions(&self) -> [f64; 14] {
        [
            self.a,
            self.b,
            self.c,
            self.d,
            self.e,
            self.f,
            self.g,
            self.h,
            self.i,
            self.j,
            self.k,
            self.l,
            self.substrate_thickness,
            self.copper_thickness,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(domain!("all resonator dimensions must be positive"))
        }
    }
}

/// One resonance of the unloaded sensor plus its coupling to the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeModel {
    /// Unloaded resonance in Hz.
    pub f0_hz: f64,
    pub q0: f64,
    /// Unloaded notch depth in dB, positive.
    pub depth0_db: f64,
    /// Filling factor with the sample in contact.
    pub kappa0: f64,
    /// Field decay length in mm.
    pub delta_mm: f64,
}

impl ModeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0_hz > 0.0 && self.f0_hz.is_finite()) {
            return Err(domain!("mode f0 must be positive"));
        }
        if !(self.q0 > 1.0 && self.q0.is_finite()) {
            return Err(domain!("mode q0 must exceed 1"));
        }
        if !(self.depth0_db > 0.0 && self.depth0_db.is_finite()) {
            return Err(domain!("mode depth0_db must be positive"));
        }
        if !(self.kappa0 > 0.0 && self.kappa0 < 1.0) {
            return Err(domain!("mode kappa0 must lie in (0, 1)"));
        }
        if !(self.delta_mm > 0.0 && self.delta_mm.is_finite()) {
            return Err(domain!("mode delta_mm must be positive"));
        }
        Ok(())
    }

    /// Filling factor at standoff `z_mm`.
    pub fn effective_coupling(&self, z_mm: f64) -> Result<f64> {
        if !(z_mm >= 0.0) || !z_mm.is_finite() {
            return Err(domain!("standoff must be a finite value >= 0, got {z_mm} mm"));
        }
        Ok(self.kappa0 * (-z_mm / self.delta_mm).exp())
    }
}

/// State of one mode under a given load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadedMode {
    pub f_res_hz: f64,
    pub q_loaded: f64,
    /// Notch depth in dB, positive.
    pub depth_db: f64,
    pub coupling: f64,
}

/// Resonant frequency and loaded Q of `mode` with `material` at `z_mm`.
pub fn loaded_resonance(mode: &ModeModel, material: &MaterialModel, z_mm: f64) -> Result<LoadedMode> {
    let kappa = mode.effective_coupling(z_mm)?;
    let mut f = mode.f0_hz;
    let mut step = f64::INFINITY;
    let mut converged = false;
    for _ in 0..FIXED_POINT_MAX_ITERATIONS {
        let eps = material.permittivity_at(f)?;
        let next = mode.f0_hz / (1.0 + kappa * (eps.eps_real - 1.0)).sqrt();
        step = (next - f).abs();
        f = next;
        if step < FIXED_POINT_TOLERANCE_HZ {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: FIXED_POINT_MAX_ITERATIONS,
            last_step_hz: step,
        });
    }
    let tan_delta = material.permittivity_at(f)?.loss_tangent();
    let q_loaded = 1.0 / (1.0 / mode.q0 + kappa * tan_delta);
    Ok(LoadedMode {
        f_res_hz: f,
        q_loaded,
        depth_db: mode.depth0_db * q_loaded / mode.q0,
        coupling: kappa,
    })
}

/// Lorentzian notch in dB: `-depth / (1 + 4 q^2 ((f - f_res)/f_res)^2)`.
pub fn lorentzian_notch_db(frequency_hz: f64, mode: &LoadedMode) -> f64 {
    let x = (frequency_hz - mode.f_res_hz) / mode.f_res_hz;
    -mode.depth_db / (1.0 + 4.0 * mode.q_loaded * mode.q_loaded * x * x)
}

/// The whole sensor: metadata geometry, two ordered modes and the sweep band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorModel {
    #[serde(default)]
    pub geometry: ResonatorGeometry,
    pub modes: [ModeModel; 2],
    /// Inclusive sweep band `[low, high]` in Hz.
    #[serde(default = "default_band")]
    pub band_hz: [f64; 2],
}

fn default_band() -> [f64; 2] {
    [1e9, 4e9]
}

impl Default for ResonatorModel {
    fn default() -> Self {
        ResonatorModel {
            geometry: ResonatorGeometry::default(),
            modes: [
                ModeModel {
                    f0_hz: 1.45e9,
                    q0: 120.0,
                    depth0_db: 22.0,
                    kappa0: 0.30,
                    delta_mm: 2.0,
                },
                ModeModel {
                    f0_hz: 2.80e9,
                    q0: 150.0,
                    depth0_db: 18.0,
                    kappa0: 0.26,
                    delta_mm: 1.6,
                },
            ],
            band_hz: default_band(),
        }
    }
}

impl ResonatorModel {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        for mode in &self.modes {
            mode.validate()?;
        }
        if self.modes[0].f0_hz >= self.modes[1].f0_hz {
            return Err(domain!("modes must be ordered by increasing f0"));
        }
        let [lo, hi] = self.band_hz;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(domain!("sweep band must satisfy 0 < low < high"));
        }
        Ok(())
    }

    pub fn unloaded_f0s(&self) -> [f64; 2] {
        [self.modes[0].f0_hz, self.modes[1].f0_hz]
    }

    pub fn loaded_modes(&self, material: &MaterialModel, z_mm: f64) -> Result<[LoadedMode; 2]> {
        Ok([
            loaded_resonance(&self.modes[0], material, z_mm)?,
            loaded_resonance(&self.modes[1], material, z_mm)?,
        ])
    }

    /// Swept |S21| in dB at each grid frequency, with optional Gaussian
    /// amplitude noise drawn from a stream seeded by `seed`.
    pub fn s21_response(
        &self,
        material: &MaterialModel,
        z_mm: f64,
        frequencies_hz: &[f64],
        noise_sigma_db: f64,
        seed: u64,
    ) -> Result<Vec<(f64, f64)>> {
        let modes = self.loaded_modes(material, z_mm)?;
        trace_from_modes(&modes, frequencies_hz, self.band_hz, noise_sigma_db, seed)
    }
}

/// Validates a frequency grid against a band: non-empty, finite, strictly
/// increasing and inside `[low, high]`.
pub fn check_frequency_grid(frequencies_hz: &[f64], band_hz: [f64; 2]) -> Result<()> {
    if frequencies_hz.is_empty() {
        return Err(domain!("frequency grid is empty"));
    }
    if frequencies_hz.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain!("frequency grid must be strictly increasing"));
    }
    let (first, last) = (frequencies_hz[0], frequencies_hz[frequencies_hz.len() - 1]);
    if !(first >= band_hz[0] && last <= band_hz[1]) {
        return Err(domain!(
            "frequency grid [{first}, {last}] Hz leaves the band [{}, {}] Hz",
            band_hz[0],
            band_hz[1]
        ));
    }
    Ok(())
}

/// Superposes the notches of `modes` (additive in dB) and adds noise.
pub fn trace_from_modes(
    modes: &[LoadedMode],
    frequencies_hz: &[f64],
    band_hz: [f64; 2],
    noise_sigma_db: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_frequency_grid(frequencies_hz, band_hz)?;
    if !(noise_sigma_db >= 0.0) || !noise_sigma_db.is_finite() {
        return Err(domain!("noise sigma must be >= 0, got {noise_sigma_db}"));
    }
    let mut trace: Vec<(f64, f64)> = frequencies_hz
        .iter()
        .map(|&f| (f, modes.iter().map(|m| lorentzian_notch_db(f, m)).sum()))
        .collect();
    if noise_sigma_db > 0.0 {
        let normal = Normal::new(0.0, noise_sigma_db)
            .map_err(|e| domain!("noise distribution: {e}"))?;
        let mut rng = rng_from_seed(seed);
        for point in &mut trace {
            point.1 += normal.sample(&mut rng);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dielectric::default_material_library;

    fn test_mode() -> ModeModel {
        ModeModel {
            f0_hz: 1.45e9,
            q0: 120.0,
            depth0_db: 22.0,
            kappa0: 0.3,
            delta_mm: 2.0,
        }
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn coupling_examples() {
        let m = test_mode();
        assert_eq!(m.effective_coupling(0.0).unwrap(), 0.3);
        assert!((m.effective_coupling(2.0).unwrap() - 0.110_363_832_351_432_7).abs() < 1e-15);
        assert!(m.effective_coupling(50.0).unwrap() < 1e-11);
        assert!(m.effective_coupling(-0.1).is_err());
    }

    #[test]
    fn geometry_defaults_match_table() {
        let g = ResonatorGeometry::default();
        assert_eq!(
            g.dimensions(),
            [110.0, 70.0, 18.35, 1.9, 38.1, 7.8, 15.7, 30.0, 0.5, 33.8, 23.0, 35.7, 1.6, 0.035]
        );
        ResonatorModel::default().validate().unwrap();
    }

    #[test]
    fn air_is_identity_load() {
        let m = test_mode();
        for z in [0.0, 0.5, 10.0] {
            let lm = loaded_resonance(&m, &MaterialModel::air(), z).unwrap();
            assert_eq!(lm.f_res_hz, m.f0_hz);
            assert_eq!(lm.q_loaded, m.q0);
            assert_eq!(lm.depth_db, m.depth0_db);
        }
    }

    #[test]
    fn dispersionless_closed_form() {
        let flat = MaterialModel::new("flat", 3.0, 3.0, 1e-11, 0.0).unwrap();
        let lm = loaded_resonance(&test_mode(), &flat, 0.0).unwrap();
        // 1.45 GHz / sqrt(1.6), evaluated to 30 digits
        assert!((lm.f_res_hz - 1_146_325_651.811_037_5).abs() < 1e-3);
        assert_eq!(lm.q_loaded, 120.0);
    }

    #[test]
    fn far_standoff_is_unloaded() {
        let r = ResonatorModel::default();
        for oil in default_material_library() {
            for (mode, lm) in r.modes.iter().zip(r.loaded_modes(&oil, 50.0).unwrap()) {
                assert!((lm.f_res_hz - mode.f0_hz).abs() < 1.0);
                assert!((lm.q_loaded / mode.q0 - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn default_oils_converge_everywhere() {
        let r = ResonatorModel::default();
        for oil in default_material_library() {
            for i in 0..200 {
                let z = 50.0 * i as f64 / 199.0;
                let modes = r.loaded_modes(&oil, z).unwrap();
                for (mode, lm) in r.modes.iter().zip(modes) {
                    assert!(lm.f_res_hz <= mode.f0_hz);
                    assert!(lm.q_loaded <= mode.q0);
                }
            }
        }
    }

    #[test]
    fn air_trace_minima_at_unloaded_resonances() {
        let r = ResonatorModel::default();
        let f = grid(1e9, 4e9, 301);
        let trace = r.s21_response(&MaterialModel::air(), 0.0, &f, 0.0, 0).unwrap();
        let argmin_in = |lo: f64, hi: f64| {
            trace
                .iter()
                .filter(|(f, _)| *f >= lo && *f <= hi)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        let step = 1e7;
        assert!((argmin_in(1e9, 2.1e9) - 1.45e9).abs() <= step);
        assert!((argmin_in(2.1e9, 4e9) - 2.80e9).abs() <= step);
    }

    #[test]
    fn notch_center_and_symmetry() {
        let r = ResonatorModel::default();
        let oil = &default_material_library()[1];
        let modes = r.loaded_modes(oil, 0.3).unwrap();
        for (m, other) in [(modes[0], modes[1]), (modes[1], modes[0])] {
            let at_center = lorentzian_notch_db(m.f_res_hz, &m) + lorentzian_notch_db(m.f_res_hz, &other);
            assert!((at_center + m.depth_db).abs() < 0.05);
        }
        let single = [modes[0]];
        for df in [1e5, 3.3e6, 2.5e7] {
            let f = [modes[0].f_res_hz - df, modes[0].f_res_hz + df];
            let t = trace_from_modes(&single, &f, [1e9, 4e9], 0.0, 0).unwrap();
            assert!((t[0].1 - t[1].1).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_errors() {
        let r = ResonatorModel::default();
        let air = MaterialModel::air();
        assert!(r.s21_response(&air, 0.0, &[], 0.0, 0).is_err());
        assert!(r.s21_response(&air, 0.0, &[2e9, 1.5e9], 0.0, 0).is_err());
        assert!(r.s21_response(&air, 0.0, &[0.5e9, 1.5e9], 0.0, 0).is_err());
        assert!(r.s21_response(&air, 0.0, &[1.5e9], -1.0, 0).is_err());
    }

    #[test]
    fn noisy_traces_are_seed_deterministic() {
        let r = ResonatorModel::default();
        let oil = &default_material_library()[0];
        let f = grid(1e9, 4e9, 301);
        let a = r.s21_response(oil, 1.0, &f, 0.05, 9).unwrap();
        let b = r.s21_response(oil, 1.0, &f, 0.05, 9).unwrap();
        let c = r.s21_response(oil, 1.0, &f, 0.05, 10).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.1.to_bits() == y.1.to_bits()));
        assert!(a.iter().zip(&c).any(|(x, y)| x.1 != y.1));
    }
}
