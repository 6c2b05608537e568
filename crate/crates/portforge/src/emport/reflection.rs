//! Reflection coefficient from transient port waveforms.
//!
//! The incident and reflected waves against a reference impedance `Z0` are
//! `a = (v + Z0*i)/2` and `b = (v - Z0*i)/2`; their spectra give
//! `Gamma(f) = B(f)/A(f)`. Bins where the incident spectrum has no energy
//! are marked invalid instead of divided.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::{EmError, Result};
use crate::signals::{dft, TimeSignal};

/// Incident-spectrum floor below which a bin is invalid, relative to the
/// incident peak.
const INCIDENT_FLOOR: f64 = 1e-12;

/// Frequency-resolved reflection coefficient; invalid bins hold `None`.
#[derive(Debug, Clone)]
pub struct Reflection {
    gamma: Vec<Option<Complex64>>,
    df: f64,
    f0: f64,
}

impl Reflection {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn freq_at(&self, m: usize) -> f64 {
        self.f0 + m as f64 * self.df
    }

    pub fn gamma(&self, m: usize) -> Option<Complex64> {
        self.gamma.get(m).copied().flatten()
    }

    pub fn magnitude(&self, m: usize) -> Option<f64> {
        self.gamma(m).map(|g| g.norm())
    }

    /// Largest |Gamma| over valid bins with `f_lo <= f <= f_hi`; `None` when
    /// no valid bin falls in the band.
    pub fn band_max_magnitude(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (m, g) in self.gamma.iter().enumerate() {
            let f = self.freq_at(m);
            if f < f_lo || f > f_hi {
                continue;
            }
            if let Some(g) = g {
                let mag = g.norm();
                best = Some(best.map_or(mag, |b| b.max(mag)));
            }
        }
        best
    }

    /// Two-column CSV (`freq_hz,gamma_mag`) of the valid bins in a band.
    pub fn band_csv(&self, f_lo: f64, f_hi: f64) -> String {
        let mut out = String::from("freq_hz,gamma_mag\n");
        for (m, g) in self.gamma.iter().enumerate() {
            let f = self.freq_at(m);
            if f < f_lo || f > f_hi {
                continue;
            }
            if let Some(g) = g {
                let _ = writeln!(out, "{},{}", f, g.norm());
            }
        }
        out
    }
}

/// Compute `Gamma(f)` from a port's voltage and current waveforms against
/// reference impedance `z0`.
pub fn reflection_coefficient(
    v_port: &TimeSignal,
    i_port: &TimeSignal,
    z0: f64,
) -> Result<Reflection> {
    if !(z0 > 0.0) || !z0.is_finite() {
        return Err(EmError::InvalidArgument(format!("Z0 must be > 0, got {z0}")));
    }
    if v_port.len() != i_port.len() || v_port.dt() != i_port.dt() {
        return Err(EmError::InvalidArgument(format!(
            "voltage and current grids differ: len {} vs {}, dt {} vs {}",
            v_port.len(),
            i_port.len(),
            v_port.dt(),
            i_port.dt()
        )));
    }
    let n = v_port.len();
    let dt = v_port.dt();
    let incident: Vec<f64> = (0..n)
        .map(|k| 0.5 * (v_port.samples()[k] + z0 * i_port.samples()[k]))
        .collect();
    let reflected: Vec<f64> = (0..n)
        .map(|k| 0.5 * (v_port.samples()[k] - z0 * i_port.samples()[k]))
        .collect();
    let a = dft(&TimeSignal::new(incident, dt)?)?;
    let b = dft(&TimeSignal::new(reflected, dt)?)?;

    let peak = a.bins().iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let floor = INCIDENT_FLOOR * peak;
    let gamma = a
        .bins()
        .iter()
        .zip(b.bins())
        .map(|(ai, bi)| if ai.norm() > floor { Some(bi / ai) } else { None })
        .collect();
    Ok(Reflection { gamma, df: a.df(), f0: a.f0() })
}
