//! Fourier truncation to a retained low-frequency block and its inverse
//! embedding.
//!
//! [`truncate`] copies the modes selected by a [`RetainedSet`] out of a half
//! spectrum; [`embed`] places a block back into an otherwise-zero spectrum.
//! The two maps are mutual adjoints under the real pairing `Re Σ a·conj(b)`:
//! truncation is a coordinate selection and embedding is the corresponding
//! zero-padding, so reverse-mode differentiation through either one is just
//! the other. `embed ∘ truncate` is the spectral projection onto the retained
//! set.

use crate::error::{Error, Result};
use crate::field::{RetainedBlock, RetainedSet, SpectralField};

fn check_match(set: &RetainedSet, nx: usize, ny: usize) -> Result<()> {
    if set.nx() != nx || set.ny() != ny {
        return Err(Error::config(format!(
            "retained set built for {}x{} does not match spectrum resolution {nx}x{ny}",
            set.nx(),
            set.ny()
        )));
    }
    Ok(())
}

/// Copies the retained modes of `spec` into a compact `(frames, channels, m_x,
/// m_y)` block, frames being the leading axis of the spectrum.
pub fn truncate(spec: &SpectralField, set: &RetainedSet) -> Result<RetainedBlock> {
    check_match(set, spec.nx(), spec.ny())?;
    let (frames, channels) = (spec.batch(), spec.channels());
    let mut block = RetainedBlock::zeros(frames, channels, set.mx(), set.my())?;
    let src = spec.data();
    let dst = block.data_mut();
    for t in 0..frames {
        for c in 0..channels {
            for (j, row) in set.x_index_pairs() {
                for q in 0..set.my() {
                    dst[(t, c, j, q)] = src[(t, c, row, q)];
                }
            }
        }
    }
    Ok(block)
}

/// Places `block` into an otherwise-zero half spectrum at the indices the
/// retained set selects. Inverse of [`truncate`] on retained modes.
pub fn embed(block: &RetainedBlock, set: &RetainedSet) -> Result<SpectralField> {
    if block.mx() != set.mx() || block.my() != set.my() {
        return Err(Error::config(format!(
            "block of {}x{} modes does not match retained set {}x{}",
            block.mx(),
            block.my(),
            set.mx(),
            set.my()
        )));
    }
    let mut spec = SpectralField::zeros(block.frames(), block.channels(), set.nx(), set.ny())?;
    write_into(block, set, &mut spec)?;
    Ok(spec)
}

/// Overwrites the retained modes of an existing spectrum with `block`, leaving
/// every other mode untouched. This is how the propagator re-inserts an
/// updated block while passing non-retained modes through unchanged.
pub fn write_into(block: &RetainedBlock, set: &RetainedSet, spec: &mut SpectralField) -> Result<()> {
    check_match(set, spec.nx(), spec.ny())?;
    if block.frames() != spec.batch() || block.channels() != spec.channels() {
        return Err(Error::config(format!(
            "block frames/channels ({}, {}) do not match spectrum ({}, {})",
            block.frames(),
            block.channels(),
            spec.batch(),
            spec.channels()
        )));
    }
    if block.mx() != set.mx() || block.my() != set.my() {
        return Err(Error::config(format!(
            "block of {}x{} modes does not match retained set {}x{}",
            block.mx(),
            block.my(),
            set.mx(),
            set.my()
        )));
    }
    let src = block.data();
    let dst = spec.data_mut();
    for t in 0..block.frames() {
        for c in 0..block.channels() {
            for (j, row) in set.x_index_pairs() {
                for q in 0..set.my() {
                    dst[(t, c, row, q)] = src[(t, c, j, q)];
                }
            }
        }
    }
    Ok(())
}
