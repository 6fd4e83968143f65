//! Finite-difference stencils shared by the forward model and the functionals.
//!
//! Axis 0 is `x1`, axis 1 is `x2`. Spatial derivatives are per pixel.
//! Fields are extended by zero outside the window.

use ndarray::Array2;
use num_complex::Complex64;

use crate::fft::Kernel;

/// Central difference `(f(i+1) - f(i-1)) / 2` along `axis`, zero extension,
/// output on the same window.
pub fn central_diff(field: &Array2<f64>, axis: usize) -> Array2<f64> {
    let (r, c) = field.dim();
    let get = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i as usize >= r || j as usize >= c {
            0.0
        } else {
            field[[i as usize, j as usize]]
        }
    };
    Array2::from_shape_fn((r, c), |(i, j)| {
        let (i, j) = (i as isize, j as isize);
        if axis == 0 {
            0.5 * (get(i + 1, j) - get(i - 1, j))
        } else {
            0.5 * (get(i, j + 1) - get(i, j - 1))
        }
    })
}

/// Central difference of a kernel. The block grows by one cell on each side
/// along `axis`, so no value of the zero-extended derivative is lost.
pub fn central_diff_kernel(kernel: &Kernel, axis: usize) -> Kernel {
    let (r, c) = kernel.values.dim();
    let (nr, nc) = if axis == 0 { (r + 2, c) } else { (r, c + 2) };
    let mut origin = kernel.origin;
    origin[axis] += 1;
    let values = Array2::from_shape_fn((nr, nc), |(i, j)| {
        let m = [i as isize - origin[0], j as isize - origin[1]];
        let (mut plus, mut minus) = (m, m);
        plus[axis] += 1;
        minus[axis] -= 1;
        (kernel.at(plus) - kernel.at(minus)) * 0.5
    });
    Kernel::new(values, origin)
}

/// Per-pixel forward-difference gradient with Neumann closure: the
/// difference across the window edge is taken as zero.
pub fn forward_grad(field: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (r, c) = field.dim();
    let g1 = Array2::from_shape_fn((r, c), |(i, j)| {
        if i + 1 < r {
            field[[i + 1, j]] - field[[i, j]]
        } else {
            0.0
        }
    });
    let g2 = Array2::from_shape_fn((r, c), |(i, j)| {
        if j + 1 < c {
            field[[i, j + 1]] - field[[i, j]]
        } else {
            0.0
        }
    });
    (g1, g2)
}

/// Adjoint of [`forward_grad`]: returns `D^T (p1, p2)`.
pub fn forward_grad_adjoint(p1: &Array2<f64>, p2: &Array2<f64>) -> Array2<f64> {
    let (r, c) = p1.dim();
    let mut out = Array2::zeros((r, c));
    for i in 0..r {
        for j in 0..c {
            if i + 1 < r {
                out[[i + 1, j]] += p1[[i, j]];
                out[[i, j]] -= p1[[i, j]];
            }
            if j + 1 < c {
                out[[i, j + 1]] += p2[[i, j]];
                out[[i, j]] -= p2[[i, j]];
            }
        }
    }
    out
}

/// Five-point Laplacian with Neumann closure, `-D^T D`.
pub fn neumann_laplacian(field: &Array2<f64>) -> Array2<f64> {
    let (g1, g2) = forward_grad(field);
    -forward_grad_adjoint(&g1, &g2)
}

/// Central difference for complex window fields (zero extension).
pub fn central_diff_complex(field: &Array2<Complex64>, axis: usize) -> Array2<Complex64> {
    let re = central_diff(&field.mapv(|v| v.re), axis);
    let im = central_diff(&field.mapv(|v| v.im), axis);
    Array2::from_shape_fn(field.dim(), |ix| Complex64::new(re[ix], im[ix]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn central_diff_of_ramp_is_one_inside() {
        let f = Array2::from_shape_fn((5, 5), |(i, _)| i as f64);
        let d = central_diff(&f, 0);
        for j in 0..5 {
            for i in 1..4 {
                assert_eq!(d[[i, j]], 1.0);
            }
            // zero extension at the edges
            assert_eq!(d[[0, j]], 0.5);
            assert_eq!(d[[4, j]], -1.5);
        }
    }

    #[test]
    fn kernel_derivative_keeps_edge_values() {
        let k = Kernel::from_real(&array![[1.0, 2.0], [3.0, 4.0]], [1, 1]);
        let d = central_diff_kernel(&k, 0);
        assert_eq!(d.values.dim(), (4, 2));
        // offset -2 along axis 0 sees only k(-1) with a minus sign
        assert_eq!(d.at([-2, -1]).re, 0.5);
        assert_eq!(d.at([1, 0]).re, -2.0);
    }

    #[test]
    fn forward_adjoint_identity() {
        let u = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.3);
        let p1 = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - j as f64) * 0.3);
        let p2 = Array2::from_shape_fn((4, 5), |(i, j)| (i * j) as f64 * 0.1);
        let (g1, g2) = forward_grad(&u);
        let lhs = (&g1 * &p1).sum() + (&g2 * &p2).sum();
        let rhs = (&u * &forward_grad_adjoint(&p1, &p2)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let u = Array2::from_elem((6, 6), 0.5);
        assert!(neumann_laplacian(&u).iter().all(|v| *v == 0.0));
    }
}
