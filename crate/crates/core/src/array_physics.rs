//! Phased-array model used as a physics oracle for focal commands.
//!
//! Each transducer is a monopole of amplitude `A`; the field at `p` is
//! `U(p) = Σ (A / dᵢ) · exp(i (k dᵢ + ψᵢ))` with `dᵢ = ‖xᵢ - p‖`. Focusing sets
//! `ψᵢ = -k dᵢ(focus)` so every phasor arrives at the focus in phase.

use std::f64::consts::TAU;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum ArrayError {
    #[error("focus must lie in front of the array (z > 0), got z = {0}")]
    FocusBehindArray(f64),
    #[error("field evaluated on transducer {0}")]
    SingularEvaluationPoint(usize),
    #[error("phase count {phases} does not match {elements} transducers")]
    PhaseCountMismatch { phases: usize, elements: usize },
    #[error("invalid array config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing, meters.
    pub pitch: f64,
    /// Carrier frequency, Hz.
    pub carrier: f64,
    pub speed_of_sound: f64,
    pub amplitude: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            pitch: 0.0105,
            carrier: 40_000.0,
            speed_of_sound: 343.0,
            amplitude: 1.0,
        }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<(), ArrayError> {
        let bad = |m: String| Err(ArrayError::InvalidConfig(m));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!(
                "array.rows/cols must be positive ({}x{})",
                self.rows, self.cols
            ));
        }
        for (k, v) in [
            ("array.pitch", self.pitch),
            ("array.carrier", self.carrier),
            ("array.speed_of_sound", self.speed_of_sound),
            ("array.amplitude", self.amplitude),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_sound / self.carrier
    }

    pub fn wavenumber(&self) -> f64 {
        TAU * self.carrier / self.speed_of_sound
    }
}

/// Transducer positions plus the acoustic constants needed to evaluate the field.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub positions: Vec<Vec3>,
    pub wavenumber: f64,
    pub amplitude: f64,
}

impl ArrayLayout {
    /// Planar grid centered on the origin in `z = 0`:
    /// element `(i, j)` sits at `((i - (rows-1)/2)·pitch, (j - (cols-1)/2)·pitch, 0)`.
    /// Index `i · cols + j`.
    pub fn new(cfg: &ArrayConfig) -> Self {
        let ci = (cfg.rows as f64 - 1.0) / 2.0;
        let cj = (cfg.cols as f64 - 1.0) / 2.0;
        let positions = (0..cfg.rows)
            .flat_map(|i| {
                (0..cfg.cols).map(move |j| Vec3::new((i as f64 - ci) * cfg.pitch, (j as f64 - cj) * cfg.pitch, 0.0))
            })
            .collect();
        Self {
            positions,
            wavenumber: cfg.wavenumber(),
            amplitude: cfg.amplitude,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Focusing phases `ψᵢ = (-k ‖xᵢ - focus‖) mod 2π`.
    pub fn solve_phases(&self, focus: Vec3) -> Result<PhaseSolution, ArrayError> {
        if !(focus.z > 0.0) {
            return Err(ArrayError::FocusBehindArray(focus.z));
        }
        Ok(PhaseSolution(
            self.positions
                .iter()
                .map(|x| wrap_phase(-self.wavenumber * x.distance(focus)))
                .collect(),
        ))
    }

    /// Complex pressure at `p` by direct summation.
    pub fn field_at(&self, phases: &PhaseSolution, p: Vec3) -> Result<Complex64, ArrayError> {
        self.field_subset(phases, p, 0..self.len())
    }

    /// Contribution of the elements in `indices` only.
    pub fn field_subset(
        &self,
        phases: &PhaseSolution,
        p: Vec3,
        indices: impl IntoIterator<Item = usize>,
    ) -> Result<Complex64, ArrayError> {
        if phases.0.len() != self.len() {
            return Err(ArrayError::PhaseCountMismatch {
                phases: phases.0.len(),
                elements: self.len(),
            });
        }
        let mut u = Complex64::new(0.0, 0.0);
        for i in indices {
            let d = self.positions[i].distance(p);
            if d < 1e-12 {
                return Err(ArrayError::SingularEvaluationPoint(i));
            }
            u += Complex64::from_polar(self.amplitude / d, self.wavenumber * d + phases.0[i]);
        }
        Ok(u)
    }

    /// `Σ A / dᵢ`, the magnitude reached when all phasors align at `p`.
    pub fn aligned_magnitude(&self, p: Vec3) -> f64 {
        self.positions.iter().map(|x| self.amplitude / x.distance(p)).sum()
    }
}

fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One drive phase per transducer, radians in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSolution(pub Vec<f64>);

impl PhaseSolution {
    pub fn phases(&self) -> &[f64] {
        &self.0
    }
}

/// Plane through the sweep, perpendicular to one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPlane {
    X(f64),
    Y(f64),
    Z(f64),
}

impl std::str::FromStr for SweepPlane {
    type Err = String;
    /// `x=0.1`, `y=0`, `z=0.2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (axis, v) = s
            .split_once('=')
            .ok_or_else(|| format!("plane `{s}` must look like z=0.2"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("plane offset `{v}` is not a number"))?;
        match axis.trim() {
            "x" => Ok(SweepPlane::X(v)),
            "y" => Ok(SweepPlane::Y(v)),
            "z" => Ok(SweepPlane::Z(v)),
            a => Err(format!("plane axis `{a}` must be x, y or z")),
        }
    }
}

impl SweepPlane {
    fn point(&self, a: f64, b: f64) -> Vec3 {
        match *self {
            SweepPlane::X(x) => Vec3::new(x, a, b),
            SweepPlane::Y(y) => Vec3::new(a, y, b),
            SweepPlane::Z(z) => Vec3::new(a, b, z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub pos: Vec3,
    pub value: Complex64,
}

/// Square grid of half-width `extent` with spacing `step`, centered on the plane origin.
pub fn sweep_plane(
    layout: &ArrayLayout,
    phases: &PhaseSolution,
    plane: SweepPlane,
    extent: f64,
    step: f64,
) -> Result<Vec<FieldSample>, ArrayError> {
    if !(step > 0.0 && extent >= 0.0) {
        return Err(ArrayError::InvalidConfig(format!("step {step} / extent {extent}")));
    }
    let n = (2.0 * extent / step).round() as usize + 1;
    let coord = |i: usize| -extent + i as f64 * step;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let pos = plane.point(coord(i), coord(j));
            out.push(FieldSample {
                pos,
                value: layout.field_at(phases, pos)?,
            });
        }
    }
    Ok(out)
}

pub fn write_field_csv<W: Write>(mut w: W, samples: &[FieldSample]) -> io::Result<()> {
    writeln!(w, "x,y,z,re,im,abs")?;
    for s in samples {
        writeln!(
            w,
            "{:.6},{:.6},{:.6},{:.9e},{:.9e},{:.9e}",
            s.pos.x,
            s.pos.y,
            s.pos.z,
            s.value.re,
            s.value.im,
            s.value.norm()
        )?;
    }
    Ok(())
}
