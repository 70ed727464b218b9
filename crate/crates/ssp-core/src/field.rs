//! Dense field containers and the retained-mode bookkeeping that connects them.
//!
//! Three array shapes circulate through the library:
//!
//! * [`GridField`] — real samples on a periodic grid, `(batch, channel, nx, ny)`.
//! * [`SpectralField`] — the half spectrum of a real field, `(batch, channel,
//!   nx, ny/2 + 1)`. Redundant negative-`ky` rows are dropped; they are implied
//!   by conjugate symmetry.
//! * [`RetainedBlock`] — a compact `(frames, channel, m_x, m_y)` block holding
//!   only the low-frequency modes kept by a [`RetainedSet`].
//!
//! [`RetainedSet`] owns the index arithmetic between block coordinates and
//! half-spectrum coordinates, so truncation/embedding and any code that needs
//! signed wavenumbers all agree on which modes are which.

use ndarray::Array4;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Checks that a grid resolution is usable: both extents even and at least 4.
/// Even sizes keep the Nyquist row/column unambiguous in the half spectrum.
pub fn validate_resolution(nx: usize, ny: usize) -> Result<()> {
    if nx < 4 || ny < 4 {
        return Err(Error::config(format!(
            "grid resolution {nx}x{ny} too small: both extents must be >= 4"
        )));
    }
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::config(format!(
            "grid resolution {nx}x{ny} invalid: both extents must be even"
        )));
    }
    Ok(())
}

/// Signed integer wavenumber for row/column `index` of an `n`-point transform:
/// `0, 1, ..., n/2, -(n/2 - 1), ..., -1`. The Nyquist index `n/2` is reported
/// as positive `n/2`.
pub fn signed_freq(index: usize, n: usize) -> i64 {
    debug_assert!(index < n, "index {index} out of range for n = {n}");
    if index <= n / 2 {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

/// Real-valued batch of fields on a periodic grid, laid out `(batch, channel,
/// nx, ny)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField(Array4<f64>);

impl GridField {
    /// Wraps an array after checking the grid resolution.
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (_, _, nx, ny) = data.dim();
        validate_resolution(nx, ny)?;
        Ok(GridField(data))
    }

    /// All-zero field of the given shape.
    pub fn zeros(batch: usize, channels: usize, nx: usize, ny: usize) -> Result<Self> {
        validate_resolution(nx, ny)?;
        Ok(GridField(Array4::zeros((batch, channels, nx, ny))))
    }

    pub fn batch(&self) -> usize {
        self.0.dim().0
    }

    pub fn channels(&self) -> usize {
        self.0.dim().1
    }

    pub fn nx(&self) -> usize {
        self.0.dim().2
    }

    pub fn ny(&self) -> usize {
        self.0.dim().3
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.0
    }

    pub fn data_mut(&mut self) -> &mut Array4<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array4<f64> {
        self.0
    }

    /// True when every sample is finite. Cheap enough to call at rollout
    /// boundaries; not checked on construction to keep hot paths lean.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Half spectrum of a real field, laid out `(batch, channel, nx, ny/2 + 1)`.
///
/// Entry `(.., kx, ky)` is the unnormalized Fourier coefficient at signed
/// wavenumbers `(signed_freq(kx, nx), ky)` with `ky` in `0..=ny/2`. The full
/// grid height is implied: `ny = 2 * (last_dim - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField(Array4<Complex64>);

impl SpectralField {
    /// Wraps an array after checking the implied grid resolution.
    pub fn new(data: Array4<Complex64>) -> Result<Self> {
        let (_, _, nx, nyh) = data.dim();
        if nyh < 3 {
            return Err(Error::config(format!(
                "spectral field needs at least 3 ky columns (ny >= 4), got {nyh}"
            )));
        }
        validate_resolution(nx, 2 * (nyh - 1))?;
        Ok(SpectralField(data))
    }

    /// All-zero spectrum for a `(batch, channels, nx, ny)` grid.
    pub fn zeros(batch: usize, channels: usize, nx: usize, ny: usize) -> Result<Self> {
        validate_resolution(nx, ny)?;
        Ok(SpectralField(Array4::zeros((
            batch,
            channels,
            nx,
            ny / 2 + 1,
        ))))
    }

    pub fn batch(&self) -> usize {
        self.0.dim().0
    }

    pub fn channels(&self) -> usize {
        self.0.dim().1
    }

    pub fn nx(&self) -> usize {
        self.0.dim().2
    }

    /// Full grid height of the originating real field.
    pub fn ny(&self) -> usize {
        2 * (self.0.dim().3 - 1)
    }

    /// Number of stored ky columns, `ny/2 + 1`.
    pub fn ny_half(&self) -> usize {
        self.0.dim().3
    }

    pub fn data(&self) -> &Array4<Complex64> {
        &self.0
    }

    pub fn data_mut(&mut self) -> &mut Array4<Complex64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array4<Complex64> {
        self.0
    }
}

/// Compact block of retained Fourier modes, laid out `(frames, channel, m_x,
/// m_y)`. Block coordinates are interpreted through the [`RetainedSet`] that
/// produced the block.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedBlock(Array4<Complex64>);

impl RetainedBlock {
    pub fn new(data: Array4<Complex64>) -> Result<Self> {
        let (t, c, mx, my) = data.dim();
        if t == 0 || c == 0 || mx == 0 || my == 0 {
            return Err(Error::config(format!(
                "retained block dimensions must all be nonzero, got ({t}, {c}, {mx}, {my})"
            )));
        }
        Ok(RetainedBlock(data))
    }

    pub fn zeros(frames: usize, channels: usize, mx: usize, my: usize) -> Result<Self> {
        if frames == 0 || channels == 0 || mx == 0 || my == 0 {
            return Err(Error::config(format!(
                "retained block dimensions must all be nonzero, got ({frames}, {channels}, {mx}, {my})"
            )));
        }
        Ok(RetainedBlock(Array4::zeros((frames, channels, mx, my))))
    }

    pub fn frames(&self) -> usize {
        self.0.dim().0
    }

    pub fn channels(&self) -> usize {
        self.0.dim().1
    }

    pub fn mx(&self) -> usize {
        self.0.dim().2
    }

    pub fn my(&self) -> usize {
        self.0.dim().3
    }

    pub fn data(&self) -> &Array4<Complex64> {
        &self.0
    }

    pub fn data_mut(&mut self) -> &mut Array4<Complex64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array4<Complex64> {
        self.0
    }
}

/// Selection of low-frequency modes kept when truncating an `nx x ny` half
/// spectrum down to `m_x x m_y` entries.
///
/// Along x the retained signed frequencies are the `ceil(m_x/2)` lowest
/// nonnegative ones followed by the `floor(m_x/2)` negative ones closest to
/// zero, stored in block order `0, 1, ..., -2, -1`. Along y the retained
/// frequencies are simply `0..m_y`, matching the half-spectrum layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetainedSet {
    nx: usize,
    ny: usize,
    mx: usize,
    my: usize,
}

impl RetainedSet {
    /// Builds the selection, checking that the retained counts fit inside the
    /// spectrum: `1 <= m_x <= nx` and `1 <= m_y <= ny/2 + 1`.
    pub fn new(nx: usize, ny: usize, mx: usize, my: usize) -> Result<Self> {
        validate_resolution(nx, ny)?;
        if mx == 0 || mx > nx {
            return Err(Error::config(format!(
                "retained x-mode count m_x = {mx} outside 1..={nx}"
            )));
        }
        if my == 0 || my > ny / 2 + 1 {
            return Err(Error::config(format!(
                "retained y-mode count m_y = {my} outside 1..={}",
                ny / 2 + 1
            )));
        }
        Ok(RetainedSet { nx, ny, mx, my })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn mx(&self) -> usize {
        self.mx
    }

    pub fn my(&self) -> usize {
        self.my
    }

    /// Number of retained nonnegative x frequencies, `ceil(m_x / 2)`.
    pub fn mx_pos(&self) -> usize {
        self.mx.div_ceil(2)
    }

    /// Number of retained negative x frequencies, `floor(m_x / 2)`.
    pub fn mx_neg(&self) -> usize {
        self.mx / 2
    }

    /// Half-spectrum row holding block row `j`.
    pub fn x_spectrum_index(&self, j: usize) -> usize {
        debug_assert!(j < self.mx, "block row {j} out of range for m_x = {}", self.mx);
        if j < self.mx_pos() {
            j
        } else {
            self.nx - self.mx + j
        }
    }

    /// Signed x wavenumber of block row `j`.
    pub fn x_freq(&self, j: usize) -> i64 {
        debug_assert!(j < self.mx, "block row {j} out of range for m_x = {}", self.mx);
        if j < self.mx_pos() {
            j as i64
        } else {
            j as i64 - self.mx as i64
        }
    }

    /// Signed y wavenumber of block column `j` (identical to the column index).
    pub fn y_freq(&self, j: usize) -> i64 {
        debug_assert!(j < self.my, "block column {j} out of range for m_y = {}", self.my);
        j as i64
    }

    /// Iterates `(block_row, spectrum_row)` pairs in block order.
    pub fn x_index_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.mx).map(move |j| (j, self.x_spectrum_index(j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_validation_rejects_small_and_odd_grids() {
        assert!(validate_resolution(2, 8).is_err(), "nx = 2 should be rejected");
        assert!(validate_resolution(8, 2).is_err(), "ny = 2 should be rejected");
        assert!(validate_resolution(7, 8).is_err(), "odd nx should be rejected");
        assert!(validate_resolution(8, 10).is_ok(), "8x10 is a valid grid");
    }

    #[test]
    fn signed_freq_matches_standard_fft_ordering() {
        let expected: Vec<i64> = vec![0, 1, 2, 3, 4, -3, -2, -1];
        let got: Vec<i64> = (0..8).map(|i| signed_freq(i, 8)).collect();
        assert_eq!(got, expected, "signed frequencies for n = 8");
    }

    #[test]
    fn spectral_field_reports_full_grid_height() {
        let s = SpectralField::zeros(1, 2, 8, 10).unwrap();
        assert_eq!(s.ny_half(), 6, "10/2 + 1 stored columns");
        assert_eq!(s.ny(), 10, "full height recovered from half spectrum");
    }

    #[test]
    fn retained_set_index_mapping_even_count() {
        // nx = 8, m_x = 4: keep signed freqs 0, 1, -2, -1 in that block order.
        let set = RetainedSet::new(8, 8, 4, 3).unwrap();
        assert_eq!(set.mx_pos(), 2);
        assert_eq!(set.mx_neg(), 2);
        let rows: Vec<usize> = (0..4).map(|j| set.x_spectrum_index(j)).collect();
        assert_eq!(rows, vec![0, 1, 6, 7], "block rows map to spectrum rows");
        let freqs: Vec<i64> = (0..4).map(|j| set.x_freq(j)).collect();
        assert_eq!(freqs, vec![0, 1, -2, -1], "block rows carry these signed freqs");
    }

    #[test]
    fn retained_set_index_mapping_odd_count() {
        // m_x = 5: keep 0, 1, 2, -2, -1.
        let set = RetainedSet::new(8, 8, 5, 3).unwrap();
        assert_eq!(set.mx_pos(), 3);
        assert_eq!(set.mx_neg(), 2);
        let rows: Vec<usize> = (0..5).map(|j| set.x_spectrum_index(j)).collect();
        assert_eq!(rows, vec![0, 1, 2, 6, 7]);
        let freqs: Vec<i64> = (0..5).map(|j| set.x_freq(j)).collect();
        assert_eq!(freqs, vec![0, 1, 2, -2, -1]);
    }

    #[test]
    fn retained_set_full_width_covers_every_row_once() {
        let set = RetainedSet::new(8, 8, 8, 5).unwrap();
        let mut rows: Vec<usize> = (0..8).map(|j| set.x_spectrum_index(j)).collect();
        rows.sort_unstable();
        assert_eq!(rows, (0..8).collect::<Vec<_>>(), "m_x = nx touches each row exactly once");
    }

    #[test]
    fn retained_set_rejects_oversized_requests() {
        assert!(RetainedSet::new(8, 8, 9, 3).is_err(), "m_x > nx must fail");
        assert!(RetainedSet::new(8, 8, 4, 6).is_err(), "m_y > ny/2 + 1 must fail");
        assert!(RetainedSet::new(8, 8, 0, 3).is_err(), "m_x = 0 must fail");
    }
}
