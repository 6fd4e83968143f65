//! Zero-padded 2-D convolution on an `n x n` window.
//!
//! Every kernel is stored as a dense array plus the index of its origin, so
//! `values[[i, j]]` sits at offset `(i - origin[0], j - origin[1])`. A
//! convolution `out(i) = sum_m ker(m) x(i - m)` is evaluated only for `i`
//! inside the window, with `x` extended by zero. Circular FFTs of size
//! `pad >= 2n - 1` reproduce the linear result exactly on the window, since
//! only offsets in `[-(n-1), n-1]` can ever contribute there.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{IltError, Result};

/// A complex convolution kernel with an explicit origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub values: Array2<Complex64>,
    pub origin: [isize; 2],
}

impl Kernel {
    pub fn new(values: Array2<Complex64>, origin: [isize; 2]) -> Self {
        Self { values, origin }
    }

    pub fn from_real(values: &Array2<f64>, origin: [isize; 2]) -> Self {
        Self::new(values.mapv(|v| Complex64::new(v, 0.0)), origin)
    }

    /// Value at a signed offset, zero outside the stored block.
    pub fn at(&self, m: [isize; 2]) -> Complex64 {
        let i = m[0] + self.origin[0];
        let j = m[1] + self.origin[1];
        let (r, c) = self.values.dim();
        if i < 0 || j < 0 || i as usize >= r || j as usize >= c {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[[i as usize, j as usize]]
        }
    }

    /// `k(x) -> k(-x)`: flip both axes and move the origin accordingly.
    pub fn reflect(&self) -> Kernel {
        let (r, c) = self.values.dim();
        let values = Array2::from_shape_fn((r, c), |(i, j)| self.values[[r - 1 - i, c - 1 - j]]);
        Kernel::new(
            values,
            [r as isize - 1 - self.origin[0], c as isize - 1 - self.origin[1]],
        )
    }

    /// `k(x) -> conj(k(-x))`.
    pub fn reflect_conj(&self) -> Kernel {
        let mut k = self.reflect();
        k.values.mapv_inplace(|v| v.conj());
        k
    }

    /// Range of offsets covered by the stored block, per axis, inclusive.
    pub fn offset_range(&self) -> [(isize, isize); 2] {
        let (r, c) = self.values.dim();
        [
            (-self.origin[0], r as isize - 1 - self.origin[0]),
            (-self.origin[1], c as isize - 1 - self.origin[1]),
        ]
    }
}

/// FFT plans for one window size and padding.
#[derive(Clone)]
pub struct ConvPlan {
    n: usize,
    pad: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ConvPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvPlan")
            .field("n", &self.n)
            .field("pad", &self.pad)
            .finish()
    }
}

/// A spectrum on the padded `pad x pad` grid, row-major.
pub type Spectrum = Vec<Complex64>;

impl ConvPlan {
    pub fn new(n: usize, pad: usize) -> Result<Self> {
        if pad < 2 * n - 1 {
            return Err(IltError::InvalidParameter(format!(
                "padding {pad} too small for linear convolution on an {n}x{n} window"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            pad,
            fwd: planner.plan_fft_forward(pad),
            inv: planner.plan_fft_inverse(pad),
        })
    }

    /// Smallest power of two that is at least `2n - 1`.
    pub fn default_pad(n: usize) -> usize {
        (2 * n - 1).next_power_of_two()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let p = self.pad;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, p);
        fft.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, p);
    }

    /// Spectrum of a window field (zero-padded).
    pub fn forward<F>(&self, field: &Array2<F>) -> Spectrum
    where
        F: Copy + Into<Complex64>,
    {
        let p = self.pad;
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for ((i, j), v) in field.indexed_iter() {
            buf[i * p + j] = (*v).into();
        }
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Spectrum of a window field after complex conjugation.
    pub fn forward_conj(&self, field: &Array2<Complex64>) -> Spectrum {
        let p = self.pad;
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for ((i, j), v) in field.indexed_iter() {
            buf[i * p + j] = v.conj();
        }
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Spectrum of a kernel, wrapped modulo the padded size. Offsets that can
    /// never reach the window from inside it are dropped.
    pub fn kernel_spectrum(&self, kernel: &Kernel) -> Spectrum {
        let p = self.pad as isize;
        let reach = self.n as isize - 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.pad * self.pad];
        for ((i, j), v) in kernel.values.indexed_iter() {
            let m0 = i as isize - kernel.origin[0];
            let m1 = j as isize - kernel.origin[1];
            if m0.abs() > reach || m1.abs() > reach {
                continue;
            }
            let a = m0.rem_euclid(p) as usize;
            let b = m1.rem_euclid(p) as usize;
            buf[a * self.pad + b] += *v;
        }
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Inverse transform, cropped to the window.
    pub fn inverse_window(&self, mut spec: Spectrum) -> Array2<Complex64> {
        let p = self.pad;
        self.transform(&mut spec, &self.inv);
        let scale = 1.0 / (p * p) as f64;
        Array2::from_shape_fn((self.n, self.n), |(i, j)| spec[i * p + j] * scale)
    }

    /// `kernel * field` on the window.
    pub fn convolve<F>(&self, kernel: &Kernel, field: &Array2<F>) -> Array2<Complex64>
    where
        F: Copy + Into<Complex64>,
    {
        let ks = self.kernel_spectrum(kernel);
        let fs = self.forward(field);
        self.inverse_window(multiply(&ks, &fs))
    }
}

pub fn multiply(a: &[Complex64], b: &[Complex64]) -> Spectrum {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `acc += scale * a * b`, elementwise.
pub fn accumulate_product(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64], scale: f64) {
    for ((o, x), y) in acc.iter_mut().zip(a).zip(b) {
        *o += x * y * scale;
    }
}

fn transpose_square(buf: &mut [Complex64], p: usize) {
    for i in 0..p {
        for j in (i + 1)..p {
            buf.swap(i * p + j, j * p + i);
        }
    }
}

/// Direct evaluation of the windowed convolution, `O(n^4)`. Reference only.
pub fn convolve_direct(kernel: &Kernel, field: &Array2<Complex64>) -> Array2<Complex64> {
    let n = field.nrows();
    Array2::from_shape_fn((n, n), |(i0, i1)| {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((j0, j1), x) in field.indexed_iter() {
            let m = [i0 as isize - j0 as isize, i1 as isize - j1 as isize];
            acc += kernel.at(m) * x;
        }
        acc
    })
}
