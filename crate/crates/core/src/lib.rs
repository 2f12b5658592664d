//! Recurrent parameterized quantum circuits ("quantum sequence models") that
//! learn samplers of binary stochastic processes.
//!
//! The crate is organized bottom-up:
//!
//! * [`qsim`] is a dense pure-state simulator.
//! * [`ansatz`] holds circuit templates, recurrent models, Kraus extraction,
//!   exact distributions, sampling and the cosine-sine canonical form.
//! * [`stochproc`] provides the target processes (hidden Markov models,
//!   uniform renewal), trajectory sampling and conditional tables.
//! * [`metrics`] computes the finite-horizon KL-divergence rate and the
//!   co-emission distortion between conditional tables.
//! * [`gradtrain`] implements expected-cost functionals, recurrent
//!   parameter-shift gradients, ADAM and the training loop.
//!
//! Bit strings are written oldest symbol first; in basis indices the first
//! symbol (qubit 0) is the most significant bit.

pub mod ansatz;
pub mod error;
pub mod gradtrain;
pub mod metrics;
pub mod qsim;
pub mod rng;
pub mod stochproc;

pub use error::{QseqError, Result};

/// Parses a string of `'0'`/`'1'` characters into a basis index, first
/// character most significant.
pub fn bits_to_index(bits: &str) -> Result<usize> {
    if bits.len() >= usize::BITS as usize {
        return error::invalid(format!("bit string of length {} is too long", bits.len()));
    }
    bits.bytes().try_fold(0usize, |acc, b| match b {
        b'0' => Ok(acc << 1),
        b'1' => Ok((acc << 1) | 1),
        other => error::invalid(format!("unexpected symbol {:?} in bit string", other as char)),
    })
}

/// Formats `index` as a bit string of the given width, most significant bit first.
pub fn index_to_bits(index: usize, width: usize) -> String {
    (0..width)
        .map(|i| if (index >> (width - 1 - i)) & 1 == 1 { '1' } else { '0' })
        .collect()
}
