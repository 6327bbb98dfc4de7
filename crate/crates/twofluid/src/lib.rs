//! Verification toolkit and desk-scale simulator for the compressible
//! two-fluid model with equal pressures and capillarity.
//!
//! * [`model`]: parameters, equilibrium and linear coefficients.
//! * [`spectral`]: the 4x4 Fourier symbol, its spectrum, projectors and semigroup.
//! * [`greens`]: physical-space Green's function entries and decay envelopes.
//! * [`waveconv`]: space-time convolutions of diffusion and Huygens wave patterns.
//! * [`sim`]: exact linear evolution and a pseudo-spectral nonlinear solver.
//! * [`cli`]: command-line front end and the certification suite.

pub mod cli;
pub mod fft3;
pub mod greens;
pub mod model;
pub mod quad;
pub mod sim;
pub mod spectral;
pub mod waveconv;
