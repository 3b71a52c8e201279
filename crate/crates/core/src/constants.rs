//! Physical constants (CODATA 2018 exact where applicable).

pub const BOLTZMANN: f64 = 1.380_649e-23; // J/K
pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-8; // W m^-2 K^-4
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27; // kg
pub const STANDARD_GRAVITY: f64 = 9.806_65; // m/s^2

/// Pressure conversion used at every boundary: pressures are given in mbar.
pub const PASCAL_PER_MBAR: f64 = 100.0;

/// Electron gyromagnetic ratio of the NV ground state, GHz/T.
pub const NV_GYROMAGNETIC_GHZ_PER_T: f64 = 28.024_951_4;

/// Mean molecular mass of dry air.
pub const AIR_MOLECULE_MASS: f64 = 28.9647 * ATOMIC_MASS_UNIT;
/// Kinetic diameter of an "air molecule".
pub const AIR_MOLECULE_DIAMETER: f64 = 3.7e-10;

pub const DIAMOND_DENSITY: f64 = 3500.0; // kg/m^3
