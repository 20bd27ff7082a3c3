//! Phase-only correlation (POC) between the separated LED-group frames.
//!
//! Pipeline per window:
//!
//! 1. 2-D DFT of both count frames (zero-padded identically).
//! 2. Normalised cross-power spectrum `J = F1·conj(F2) / |F1·conj(F2)|`,
//!    with a magnitude floor so empty bins yield 0 instead of NaN.
//! 3. Inverse DFT with `1/(MN)` scaling gives the correlation surface `G`.
//! 4. The argmax of `G` is the integer displacement (after unwrapping
//!    circular indices); a sinc-weighted centroid over the 5×5 neighbourhood
//!    of the peak refines it below one pixel.

use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::accumulation::CountFrame;
use crate::separation::SplitFrames;

/// Largest imaginary part tolerated in the inverse transform of `J`.
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;
/// Denominator below which the subpixel centroid is considered degenerate.
pub const DEGENERATE_DENOM: f64 = 1e-12;
/// Half-width of the refinement neighbourhood (5×5).
pub const REFINE_RADIUS: isize = 2;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum PocError {
    #[error("spectrum dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("inverse transform left imaginary residue {0:e}")]
    NumericalIntegrity(f64),
    #[error("correlation peak {peak:.4} below minimum {min_peak}")]
    LowPeak { peak: f64, min_peak: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PocConfig {
    /// Minimum accepted correlation peak value.
    pub min_peak: f64,
    /// Round each padded axis up to a power of two.
    pub pad_pow2: bool,
    /// Pad each axis to at least twice its length so the circular
    /// correlation equals the linear one and displacements up to the full
    /// frame size unwrap without ambiguity.
    pub pad_linear: bool,
    /// Magnitude floor for the cross-power normalisation.
    pub eps: f64,
}

impl Default for PocConfig {
    fn default() -> Self {
        Self {
            min_peak: 0.05,
            pad_pow2: true,
            pad_linear: true,
            eps: 1e-12,
        }
    }
}

impl PocConfig {
    pub fn padded_len(&self, len: usize) -> usize {
        let len = if self.pad_linear { 2 * len } else { len };
        if self.pad_pow2 {
            len.next_power_of_two()
        } else {
            len
        }
    }
}

/// Row-major complex 2-D array, `rows` = M, `cols` = N.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.cols + v]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Real correlation surface `G(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PocSurface {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl PocSurface {
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.cols + n]
    }

    /// Circular indexing.
    pub fn get_wrapped(&self, m: isize, n: isize) -> f64 {
        let m = m.rem_euclid(self.rows as isize) as usize;
        let n = n.rem_euclid(self.cols as isize) as usize;
        self.get(m, n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// First maximum in row-major order: `((m, n), value)`.
    pub fn argmax(&self) -> ((usize, usize), f64) {
        let (idx, value) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
        ((idx / self.cols, idx % self.cols), value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.values.chunks_exact(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// In-place 2-D FFT of a row-major buffer (unnormalised).
fn fft2_in_place(data: &mut [Complex64], rows: usize, cols: usize, direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    if cols > 1 {
        planner.plan_fft(cols, direction).process(data);
    }
    if rows > 1 {
        let mut t = vec![Complex64::default(); data.len()];
        transpose(data, &mut t, rows, cols);
        planner.plan_fft(rows, direction).process(&mut t);
        transpose(&t, data, cols, rows);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// DFT of the frame, zero-padded to `rows × cols` (frame at the top-left).
pub fn dft2_padded(frame: &CountFrame, rows: usize, cols: usize) -> Spectrum {
    assert!(rows >= frame.height() && cols >= frame.width());
    let mut data = vec![Complex64::default(); rows * cols];
    for (r, row) in frame.rows().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            data[r * cols + c] = Complex64::new(v as f64, 0.0);
        }
    }
    fft2_in_place(&mut data, rows, cols, FftDirection::Forward);
    Spectrum { rows, cols, data }
}

/// `F(u,v) = Σ_m Σ_n f(m,n) · exp(-j2π(mu/M + nv/N))`.
pub fn dft2(frame: &CountFrame) -> Spectrum {
    dft2_padded(frame, frame.height(), frame.width())
}

/// Inverse DFT with `1/(MN)` normalisation.
pub fn idft2(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut data = spectrum.data.clone();
    fft2_in_place(&mut data, spectrum.rows, spectrum.cols, FftDirection::Inverse);
    let scale = 1.0 / (spectrum.rows * spectrum.cols) as f64;
    data.iter_mut().for_each(|z| *z *= scale);
    data
}

/// Normalised cross-power spectrum `F1·conj(F2) / max(|F1·conj(F2)|, eps)`.
pub fn cross_power(f1: &Spectrum, f2: &Spectrum, eps: f64) -> Result<Spectrum, PocError> {
    if f1.dims() != f2.dims() {
        return Err(PocError::DimensionMismatch(f1.dims(), f2.dims()));
    }
    let data = f1
        .data
        .iter()
        .zip(&f2.data)
        .map(|(a, b)| {
            let p = a * b.conj();
            p / p.norm().max(eps)
        })
        .collect();
    Ok(Spectrum {
        rows: f1.rows,
        cols: f1.cols,
        data,
    })
}

pub fn poc_surface(j: &Spectrum) -> Result<PocSurface, PocError> {
    let g = idft2(j);
    let residue = g.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residue >= IMAG_RESIDUE_TOL {
        return Err(PocError::NumericalIntegrity(residue));
    }
    Ok(PocSurface {
        rows: j.rows,
        cols: j.cols,
        values: g.into_iter().map(|z| z.re).collect(),
    })
}

/// Unnormalised sinc, `sin(k)/k` with `sinc(0) = 1`.
pub fn sinc(k: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        k.sin() / k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpixelOffset {
    pub dx: f64,
    pub dy: f64,
    /// Set when the weighted mass vanished and `(0, 0)` was returned.
    pub degenerate: bool,
}

/// Sinc-weighted centroid of the 5×5 neighbourhood around `peak = (m, n)`.
///
/// Neighbourhood values are read with wrap-around and negative lobes are
/// clamped to zero before weighting.
pub fn refine_subpixel(g: &PocSurface, peak: (usize, usize)) -> SubpixelOffset {
    let (m, n) = (peak.0 as isize, peak.1 as isize);
    let (mut mass, mut sum_x, mut sum_y) = (0.0, 0.0, 0.0);
    for ky in -REFINE_RADIUS..=REFINE_RADIUS {
        let wy = sinc(ky as f64);
        for kx in -REFINE_RADIUS..=REFINE_RADIUS {
            let v = g.get_wrapped(m + ky, n + kx).max(0.0);
            let weighted = v * wy * sinc(kx as f64);
            mass += weighted;
            sum_x += weighted * kx as f64;
            sum_y += weighted * ky as f64;
        }
    }
    if mass <= DEGENERATE_DENOM {
        return SubpixelOffset {
            dx: 0.0,
            dy: 0.0,
            degenerate: true,
        };
    }
    SubpixelOffset {
        dx: sum_x / mass,
        dy: sum_y / mass,
        degenerate: false,
    }
}

/// Maps a circular index to a signed shift: `i > dim/2` becomes `i - dim`.
pub fn unwrap_index(i: usize, dim: usize) -> isize {
    if i > dim / 2 {
        i as isize - dim as isize
    } else {
        i as isize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PocResult {
    /// Argmax of the surface as `(m, n)` = (row, column).
    pub peak_int: (usize, usize),
    pub peak_value: f64,
    /// Subpixel refinement `(δx, δy)`.
    pub offset_sub: (f64, f64),
    /// Signed displacement `(Δx, Δy)` of the lower group relative to the upper.
    pub displacement: (f64, f64),
    /// Euclidean norm of `displacement`, in pixels.
    pub w_px: f64,
    pub degenerate_refinement: bool,
}

/// Correlation surface of `moving` against `reference`; its peak sits at
/// the displacement that carries `reference` onto `moving`.
pub fn correlate(
    moving: &CountFrame,
    reference: &CountFrame,
    cfg: &PocConfig,
) -> Result<PocSurface, PocError> {
    let dims = |f: &CountFrame| (f.height(), f.width());
    if dims(moving) != dims(reference) {
        return Err(PocError::DimensionMismatch(dims(moving), dims(reference)));
    }
    let rows = cfg.padded_len(moving.height());
    let cols = cfg.padded_len(moving.width());
    let f_moving = dft2_padded(moving, rows, cols);
    let f_reference = dft2_padded(reference, rows, cols);
    poc_surface(&cross_power(&f_moving, &f_reference, cfg.eps)?)
}

/// Peak search, unwrapping and refinement on an existing surface.
pub fn displacement_from_surface(g: &PocSurface, min_peak: f64) -> Result<PocResult, PocError> {
    let (peak_int, peak_value) = g.argmax();
    if peak_value.is_nan() || peak_value < min_peak {
        return Err(PocError::LowPeak {
            peak: peak_value,
            min_peak,
        });
    }
    let (rows, cols) = g.dims();
    let sub = refine_subpixel(g, peak_int);
    let dx = unwrap_index(peak_int.1, cols) as f64 + sub.dx;
    let dy = unwrap_index(peak_int.0, rows) as f64 + sub.dy;
    Ok(PocResult {
        peak_int,
        peak_value,
        offset_sub: (sub.dx, sub.dy),
        displacement: (dx, dy),
        w_px: dx.hypot(dy),
        degenerate_refinement: sub.degenerate,
    })
}

/// Displacement of the lower LED group relative to the upper one.
pub fn measure_displacement(split: &SplitFrames, cfg: &PocConfig) -> Result<PocResult, PocError> {
    let g = correlate(&split.lower, &split.upper, cfg)?;
    displacement_from_surface(&g, cfg.min_peak)
}
