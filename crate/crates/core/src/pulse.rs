//! Phase-modulated pulses `φ(t) = u(t)·μ(t)` with a half-period Fourier
//! series `u` and a raised-cosine mask `μ`, plus constant-phase pulses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_C: usize = 50;

/// Pulse description; the JSON field names are the on-disk pulse format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub n_c: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_phase: Option<f64>,
    #[serde(default)]
    pub phase_offset: f64,
}

/// Raised-cosine regularization mask on `[0, T]`: rises over the first
/// tenth, flat in the middle, falls over the last tenth.
pub fn mask(t: f64, duration: f64) -> Result<f64> {
    if !(0.0..=duration).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {duration}]")));
    }
    Ok(mask_unchecked(t, duration))
}

pub(crate) fn mask_unchecked(t: f64, duration: f64) -> f64 {
    let x = t / duration;
    if (0.1..=0.9).contains(&x) {
        1.0
    } else {
        // Both ramps share the same expression: cos(10πx) = cos(10π(1−x)).
        (1.0 - (10.0 * PI * x).cos()) / 2.0
    }
}

impl PulseShape {
    /// Pulse with explicit Fourier coefficients.
    pub fn fourier(duration: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = Self { duration, n_c: a.len(), a, b, constant_phase: None, phase_offset: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// All-zero Fourier pulse with `n_c` harmonics.
    pub fn zeros(duration: f64, n_c: usize) -> Result<Self> {
        Self::fourier(duration, vec![0.0; n_c], vec![0.0; n_c])
    }

    /// Constant-phase (Mößbauer) pulse.
    pub fn constant(duration: f64, phase: f64) -> Result<Self> {
        let p = Self { duration, n_c: 0, a: Vec::new(), b: Vec::new(), constant_phase: Some(phase), phase_offset: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("pulse duration must be positive, got {}", self.duration)));
        }
        if self.a.len() != self.n_c || self.b.len() != self.n_c {
            return Err(Error::InvalidDimension(format!(
                "expected {} cosine and sine coefficients, got {} and {}",
                self.n_c,
                self.a.len(),
                self.b.len()
            )));
        }
        let finite = self.a.iter().chain(&self.b).chain(self.constant_phase.iter()).all(|v| v.is_finite());
        if !finite || !self.phase_offset.is_finite() {
            return Err(Error::InvalidParameter("pulse coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.constant_phase.is_some()
    }

    /// Phase at time `t ∈ [0, T]`.
    pub fn phase_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, {}]", self.duration)));
        }
        Ok(self.phase_unchecked(t))
    }

    pub(crate) fn phase_unchecked(&self, t: f64) -> f64 {
        if let Some(c) = self.constant_phase {
            return c + self.phase_offset;
        }
        let mu = mask_unchecked(t, self.duration);
        if mu == 0.0 {
            return self.phase_offset;
        }
        let w = PI * t / self.duration;
        let u: f64 = (0..self.n_c)
            .map(|k| {
                let (s, c) = ((k + 1) as f64 * w).sin_cos();
                self.a[k] * c + self.b[k] * s
            })
            .sum();
        u * mu + self.phase_offset
    }

    /// Same pulse with an additional constant phase applied after masking.
    pub fn shift_phase(&self, offset: f64) -> Self {
        let mut p = self.clone();
        p.phase_offset += offset;
        p
    }

    /// Coefficient vector `[a₁..a_N, b₁..b_N]`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn with_coefficients(&self, x: &[f64]) -> Self {
        assert_eq!(x.len(), 2 * self.n_c, "coefficient vector length");
        let mut p = self.clone();
        p.a = x[..self.n_c].to_vec();
        p.b = x[self.n_c..].to_vec();
        p
    }

    /// Phases at the midpoints of `n_steps` equal steps.
    pub fn midpoint_phases(&self, n_steps: usize) -> Vec<f64> {
        let dt = self.duration / n_steps as f64;
        (0..n_steps).map(|k| self.phase_unchecked((k as f64 + 0.5) * dt)).collect()
    }

    /// Rows of `∂φ(t_k)/∂[a, b]` at the step midpoints, flattened row-major
    /// (`n_steps × 2n_c`).
    pub fn midpoint_basis(&self, n_steps: usize) -> Vec<f64> {
        let nc = self.n_c;
        let dt = self.duration / n_steps as f64;
        let mut out = vec![0.0; n_steps * 2 * nc];
        if self.is_constant() {
            return out;
        }
        for k in 0..n_steps {
            let t = (k as f64 + 0.5) * dt;
            let mu = mask_unchecked(t, self.duration);
            let w = PI * t / self.duration;
            let row = &mut out[k * 2 * nc..(k + 1) * 2 * nc];
            for n in 0..nc {
                let (s, c) = ((n + 1) as f64 * w).sin_cos();
                row[n] = mu * c;
                row[nc + n] = mu * s;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pulse serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("pulse JSON: {e}")))?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mask_values() {
        let t = 3.0e-6;
        assert_eq!(mask(0.0, t).unwrap(), 0.0);
        assert!(mask(t, t).unwrap().abs() < 1e-15);
        assert_eq!(mask(t / 2.0, t).unwrap(), 1.0);
        assert!((mask(t / 20.0, t).unwrap() - 0.5).abs() < 1e-15);
        assert!((mask(t - t / 20.0, t).unwrap() - 0.5).abs() < 1e-12);
        assert!(mask(-1e-9, t).is_err());
        assert!(mask(t * 1.01, t).is_err());
    }

    #[test]
    fn mask_is_continuous_at_plateau_edges() {
        let t = 1.0;
        for edge in [0.1, 0.9] {
            let below = mask(edge - 1e-9, t).unwrap();
            let above = mask(edge + 1e-9, t).unwrap();
            assert!((below - above).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_evaluation() {
        let t = 10e-6;
        let zero = PulseShape::zeros(t, 4).unwrap();
        assert_eq!(zero.phase_at(0.3 * t).unwrap(), 0.0);
        let mut a = vec![0.0; 4];
        a[0] = 1.0;
        let p = PulseShape::fourier(t, a.clone(), vec![0.0; 4]).unwrap();
        assert!(p.phase_at(t / 2.0).unwrap().abs() < 1e-15);
        let p = PulseShape::fourier(t, vec![0.0; 4], a).unwrap();
        assert!((p.phase_at(t / 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(p.phase_at(1.5 * t).is_err());
    }

    #[test]
    fn shifted_constant_pulse() {
        let p = PulseShape::constant(1e-6, 0.0).unwrap().shift_phase(PI);
        assert_eq!(p.phase_at(0.0).unwrap(), PI);
        assert_eq!(p.phase_at(1e-6).unwrap(), PI);
    }

    #[test]
    fn offset_survives_mask_endpoints() {
        let p = PulseShape::zeros(1e-6, 3).unwrap().shift_phase(PI);
        assert_eq!(p.phase_at(0.0).unwrap(), PI);
        assert_eq!(p.phase_at(1e-6).unwrap(), PI);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PulseShape::fourier(0.0, vec![0.0], vec![0.0]).is_err());
        assert!(PulseShape::fourier(1.0, vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(PulseShape::fourier(1.0, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = PulseShape::fourier(15e-6, vec![0.1, -0.2], vec![1.0 / 3.0, 2e-17]).unwrap().shift_phase(PI);
        let text = p.to_json();
        assert!(text.contains("duration_s"));
        assert!(!text.contains("constant_phase"));
        assert_eq!(PulseShape::from_json(&text).unwrap(), p);
        let c = PulseShape::constant(1e-6, 0.25).unwrap();
        assert_eq!(PulseShape::from_json(&c.to_json()).unwrap(), c);
        assert!(PulseShape::from_json(r#"{"duration_s": 1.0, "n_c": 2, "a": [0], "b": [0, 0]}"#).is_err());
    }

    #[test]
    fn basis_reproduces_phase() {
        let p = PulseShape::fourier(2e-6, vec![0.3, -0.1, 0.05], vec![0.2, 0.4, -0.3]).unwrap();
        let n = 37;
        let basis = p.midpoint_basis(n);
        let x = p.coefficients();
        for (k, phi) in p.midpoint_phases(n).iter().enumerate() {
            let lin: f64 = basis[k * 6..(k + 1) * 6].iter().zip(&x).map(|(b, c)| b * c).sum();
            assert!((lin - phi).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn two_pi_offset_is_invisible(coeffs in proptest::collection::vec(-1.0f64..1.0, 6), frac in 0.0f64..1.0) {
            let p = PulseShape::fourier(5e-6, coeffs[..3].to_vec(), coeffs[3..].to_vec()).unwrap();
            let q = p.shift_phase(2.0 * PI);
            let t = frac * 5e-6;
            let d = q.phase_at(t).unwrap() - p.phase_at(t).unwrap() - 2.0 * PI;
            prop_assert!(d.abs() < 1e-12);
            let (s1, c1) = p.phase_at(t).unwrap().sin_cos();
            let (s2, c2) = q.phase_at(t).unwrap().sin_cos();
            prop_assert!((s1 - s2).abs() < 1e-12 && (c1 - c2).abs() < 1e-12);
        }

        #[test]
        fn phase_is_continuous(coeffs in proptest::collection::vec(-1.0f64..1.0, 10), frac in 0.0f64..0.999) {
            let p = PulseShape::fourier(1.0, coeffs[..5].to_vec(), coeffs[5..].to_vec()).unwrap();
            let h = 1e-7;
            let jump = (p.phase_at(frac + h).unwrap() - p.phase_at(frac).unwrap()).abs();
            // |dφ/dt| is bounded by Σ|c|·(nπ + 10π/2) for these coefficients.
            prop_assert!(jump < 200.0 * h);
        }
    }
}
