use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Defined SI values used throughout the crate. Never fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T = f64> {
    /// Elementary charge (C).
    pub e_charge: T,
    /// Boltzmann constant (eV/K).
    pub k_b: T,
    /// Vacuum permittivity (F/m).
    pub eps0: T,
    /// Relative permittivity of SiO2.
    pub epsr_sio2: T,
}

impl<T: Real> PhysicalConstants<T> {
    pub fn si() -> Self {
        PhysicalConstants {
            e_charge: T::lit(1.602_176_634e-19),
            k_b: T::lit(8.617_333_262e-5),
            eps0: T::lit(8.854_187_812_8e-12),
            epsr_sio2: T::lit(3.9),
        }
    }

    /// Elementary charge expressed in attofarad·volt, so `e / C[aF]` is in volts.
    pub fn e_af_volts(&self) -> T {
        self.e_charge * T::lit(1e18)
    }
}

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        Self::si()
    }
}

/// Gate-oxide stack of the three gate layers (all in nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct OxideStack<T = f64> {
    /// Net oxide under gate layer 1.
    pub t1: T,
    /// Extra oxide between gate layers 1 and 2.
    pub delta2: T,
    /// Extra oxide between gate layers 2 and 3.
    pub delta3: T,
}

impl<T: Real> OxideStack<T> {
    pub fn new(t1: T, delta2: T, delta3: T) -> Result<Self> {
        let stack = OxideStack { t1, delta2, delta3 };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        effective_thicknesses(self.t1, self.delta2, self.delta3).map(|_| ())
    }

    pub fn t2(&self) -> T {
        self.t1 + self.delta2
    }

    pub fn t3(&self) -> T {
        self.t2() + self.delta3
    }
}

/// Net oxide thickness under each gate layer, `(t1, t2, t3)`.
pub fn effective_thicknesses<T: Real>(t1_nominal: T, delta2: T, delta3: T) -> Result<(T, T, T)> {
    if !(t1_nominal > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "t1 must be positive, got {t1_nominal} nm"
        )));
    }
    if !(delta2 >= T::zero()) || !(delta3 >= T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "inter-layer oxides must be non-negative, got delta2={delta2}, delta3={delta3}"
        )));
    }
    let t2 = t1_nominal + delta2;
    Ok((t1_nominal, t2, t2 + delta3))
}

/// Square N x N array layout (lengths in nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct ArrayGeometry<T = f64> {
    pub n: usize,
    pub pitch: T,
    pub dot_width: T,
    pub dot_length: T,
}

impl<T: Real> ArrayGeometry<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("array size n must be at least 1".into()));
        }
        for (name, v) in [
            ("pitch", self.pitch),
            ("dot_width", self.dot_width),
            ("dot_length", self.dot_length),
        ] {
            if !(v > T::zero()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Dot area in nm².
    pub fn dot_area(&self) -> T {
        self.dot_width * self.dot_length
    }
}

impl<T: Real> Default for ArrayGeometry<T> {
    fn default() -> Self {
        ArrayGeometry {
            n: 7,
            pitch: T::lit(110.0),
            dot_width: T::lit(50.0),
            dot_length: T::lit(70.0),
        }
    }
}

/// Parallel-plate plunger capacitance in aF for an area in nm² and oxide in nm.
pub fn plunger_capacitance<T: Real>(area: T, t2: T, constants: &PhysicalConstants<T>) -> Result<T> {
    if !(area > T::zero()) || !(t2 > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "plunger capacitance needs positive area and thickness, got {area} nm², {t2} nm"
        )));
    }
    // F/m * nm² / nm = 1e-9 F; 1e-9 F = 1e9 aF
    Ok(constants.eps0 * constants.epsr_sio2 * area / t2 * T::lit(1e9))
}
