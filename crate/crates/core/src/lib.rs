//! Information rate of MIMO systems that use beamforming with a power
//! on/off strategy, where the transmitter learns the channel through a
//! finite-rate feedback link.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] – small dense complex matrices, Hermitian Jacobi
//!   eigensolver, Gram–Schmidt, Gaussian sampling.
//! * [`spectra`] – Marchenko–Pastur law, the angular reparameterisation
//!   used by every closed form, and adaptive Gauss–Kronrod quadrature.
//! * [`special_fn`] – dilogarithm, the two double series `Sr1`/`Sr2`,
//!   the Gamma function and the auxiliary constants shared by the
//!   closed forms.
//! * [`onoff`] – large-system on-beam fraction, information rate, its
//!   derivative and the optimal threshold.
//! * [`waterfill`] – large-system water-filling power and capacity.
//! * [`beam_design`] – turns large-system solutions into a strategy for
//!   a concrete antenna count.
//! * [`grassmann`] – chordal distance, codebook design, feedback
//!   selection, power efficiency factor and distortion bounds.
//! * [`simulate`] – seeded Monte Carlo evaluation of every strategy.
//!
//! Rates are in nats throughout. Quantities marked "normalized" are per
//! dimension, where the dimension is `m = min(tx, rx)`.

pub mod beam_design;
pub mod error;
pub mod grassmann;
pub mod linalg;
pub mod onoff;
pub mod simulate;
pub mod special_fn;
pub mod spectra;
pub mod waterfill;

pub use error::{Error, Result};
pub use spectra::SystemDims;
