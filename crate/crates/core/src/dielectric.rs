//! Frequency-dependent complex permittivity of the oil samples.
//!
//! Each oil is described by a single-pole Debye relaxation plus an optional
//! DC conduction term:
//!
//! ```text
//! eps(w) = eps_inf + (eps_static - eps_inf) / (1 + j w tau) - j sigma_dc / (w eps0)
//! ```
//!
//! The imaginary part is reported with a positive-loss sign convention.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Vacuum permittivity in F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Debye parameters for one material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialModel {
    pub name: String,
    /// Relative permittivity at DC.
    pub eps_static: f64,
    /// High-frequency relative permittivity.
    pub eps_inf: f64,
    /// Relaxation time in seconds.
    pub tau: f64,
    /// DC conductivity in S/m.
    #[serde(default)]
    pub sigma_dc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPermittivity {
    pub eps_real: f64,
    /// Loss part, non-negative.
    pub eps_imag: f64,
}

impl ComplexPermittivity {
    pub fn loss_tangent(&self) -> f64 {
        self.eps_imag / self.eps_real
    }
}

impl MaterialModel {
    pub fn new(
        name: impl Into<String>,
        eps_static: f64,
        eps_inf: f64,
        tau: f64,
        sigma_dc: f64,
    ) -> Result<Self> {
        let model = MaterialModel {
            name: name.into(),
            eps_static,
            eps_inf,
            tau,
            sigma_dc,
        };
        model.validate()?;
        Ok(model)
    }

    /// Free space: unit permittivity, no loss. The relaxation time is
    /// irrelevant because the dispersion step is zero.
    pub fn air() -> Self {
        MaterialModel {
            name: "air".to_owned(),
            eps_static: 1.0,
            eps_inf: 1.0,
            tau: 1e-12,
            sigma_dc: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.eps_static, self.eps_inf, self.tau, self.sigma_dc]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(domain!("material `{}` has non-finite parameters", self.name));
        }
        if !(self.eps_static >= self.eps_inf && self.eps_inf >= 1.0) {
            return Err(domain!(
                "material `{}` must satisfy eps_static >= eps_inf >= 1 (got {} and {})",
                self.name,
                self.eps_static,
                self.eps_inf
            ));
        }
        if self.tau <= 0.0 {
            return Err(domain!("material `{}` needs tau > 0", self.name));
        }
        if self.sigma_dc < 0.0 {
            return Err(domain!("material `{}` needs sigma_dc >= 0", self.name));
        }
        Ok(())
    }

    /// Complex relative permittivity at `frequency_hz`.
    pub fn permittivity_at(&self, frequency_hz: f64) -> Result<ComplexPermittivity> {
        if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
            return Err(domain!(
                "permittivity requested at non-positive frequency {frequency_hz} Hz"
            ));
        }
        let omega = 2.0 * PI * frequency_hz;
        let wt = omega * self.tau;
        let denom = 1.0 + wt * wt;
        let step = self.eps_static - self.eps_inf;
        let eps_real = self.eps_inf + step / denom;
        let mut eps_imag = step * wt / denom;
        if self.sigma_dc > 0.0 {
            eps_imag += self.sigma_dc / (omega * VACUUM_PERMITTIVITY);
        }
        Ok(ComplexPermittivity { eps_real, eps_imag })
    }

    /// Frequency of peak Debye loss, `1 / (2 pi tau)`.
    pub fn relaxation_frequency(&self) -> f64 {
        1.0 / (2.0 * PI * self.tau)
    }
}

/// The four vegetable oils, sorted by name so that label assignment is
/// deterministic.
///
/// These are configuration defaults in the range reported for edible oils,
/// not measured values; each oil gets its own relaxation time so the two
/// resonator harmonics see different permittivities.
pub fn default_material_library() -> Vec<MaterialModel> {
    let mut oils = vec![
        MaterialModel::new("coconut", 2.95, 2.45, 55e-12, 0.0),
        MaterialModel::new("olive", 3.10, 2.50, 40e-12, 0.0),
        MaterialModel::new("peanut", 3.05, 2.50, 28e-12, 0.0),
        MaterialModel::new("soybean", 3.12, 2.55, 20e-12, 0.0),
    ]
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .expect("default oil parameters are valid");
    oils.sort_by(|a, b| a.name.cmp(&b.name));
    oils
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soybean() -> MaterialModel {
        default_material_library()
            .into_iter()
            .find(|m| m.name == "soybean")
            .unwrap()
    }

    #[test]
    fn dispersionless_material_is_lossless() {
        let m = MaterialModel::new("flat", 3.0, 3.0, 17e-12, 0.0).unwrap();
        let eps = m.permittivity_at(2e9).unwrap();
        assert_eq!(eps.eps_real, 3.0);
        assert_eq!(eps.eps_imag, 0.0);
    }

    #[test]
    fn relaxation_point_gives_half_step() {
        let m = MaterialModel::new("x", 3.1, 2.5, 30e-12, 0.0).unwrap();
        let eps = m.permittivity_at(m.relaxation_frequency()).unwrap();
        assert!((eps.eps_real - 2.8).abs() < 1e-12);
        assert!((eps.eps_imag - 0.3).abs() < 1e-12);
    }

    #[test]
    fn soybean_golden_value() {
        // 30-digit evaluation of the Debye formula at 1.45 GHz.
        let eps = soybean().permittivity_at(1.45e9).unwrap();
        assert!((eps.eps_real - 3.101_683_367_853_170).abs() < 1e-12);
        assert!((eps.eps_imag - 0.100_523_536_102_201).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_frequency() {
        let m = soybean();
        assert!(m.permittivity_at(0.0).is_err());
        assert!(m.permittivity_at(-1e9).is_err());
        assert!(m.permittivity_at(f64::NAN).is_err());
    }

    #[test]
    fn conduction_adds_low_frequency_loss() {
        let m = MaterialModel::new("salty", 3.0, 3.0, 1e-11, 1e-3).unwrap();
        let f = 1e6;
        let eps = m.permittivity_at(f).unwrap();
        let expected = 1e-3 / (2.0 * PI * f * VACUUM_PERMITTIVITY);
        assert!((eps.eps_imag - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(MaterialModel::new("a", 2.0, 2.5, 1e-11, 0.0).is_err());
        assert!(MaterialModel::new("b", 2.0, 0.5, 1e-11, 0.0).is_err());
        assert!(MaterialModel::new("c", 3.0, 2.5, 0.0, 0.0).is_err());
        assert!(MaterialModel::new("d", 3.0, 2.5, 1e-11, -1.0).is_err());
    }

    #[test]
    fn library_contract() {
        let lib = default_material_library();
        let names: Vec<_> = lib.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["coconut", "olive", "peanut", "soybean"]);
        for (i, a) in lib.iter().enumerate() {
            for b in &lib[i + 1..] {
                assert!(a.eps_static != b.eps_static || a.tau != b.tau);
            }
        }
    }

    #[test]
    fn in_band_loss_tangent_is_bounded() {
        for m in default_material_library() {
            for i in 0..=30 {
                let f = 1e9 + 1e8 * i as f64;
                let eps = m.permittivity_at(f).unwrap();
                assert!(eps.eps_real >= 1.0);
                let tan = eps.loss_tangent();
                assert!((0.0..1.0).contains(&tan), "{} at {f}: {tan}", m.name);
            }
        }
    }

    #[test]
    fn real_part_is_monotone_and_imag_peaks_at_relaxation() {
        for m in default_material_library() {
            let fr = m.relaxation_frequency();
            let grid: Vec<f64> = (0..4000).map(|i| fr * 10f64.powf(-2.0 + i as f64 / 1000.0)).collect();
            let eps: Vec<_> = grid.iter().map(|&f| m.permittivity_at(f).unwrap()).collect();
            for w in eps.windows(2) {
                assert!(w[1].eps_real <= w[0].eps_real);
            }
            let (peak, _) = eps
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.eps_imag.total_cmp(&b.1.eps_imag))
                .unwrap();
            assert!((grid[peak] / fr - 1.0).abs() < 0.005, "{}", m.name);
            // single maximum: rises then falls
            let rising = eps[..=peak].windows(2).all(|w| w[1].eps_imag >= w[0].eps_imag);
            let falling = eps[peak..].windows(2).all(|w| w[1].eps_imag <= w[0].eps_imag);
            assert!(rising && falling);
        }
    }

    #[test]
    fn static_and_optical_limits() {
        for m in default_material_library() {
            let low = m.permittivity_at(1e3).unwrap().eps_real;
            let high = m.permittivity_at(1e12).unwrap().eps_real;
            assert!((low / m.eps_static - 1.0).abs() < 0.01);
            assert!((high / m.eps_inf - 1.0).abs() < 0.01);
        }
    }
}
