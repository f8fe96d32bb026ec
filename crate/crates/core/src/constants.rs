//! Exact SI constants (2019 redefinition).

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
