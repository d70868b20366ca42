//! 3x3 "same" convolution via im2col.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Real;

/// Unfolds `input` (`channels x rows*cols`, row-major cells) into a
/// `9*channels x rows*cols` matrix. Row `ch*9 + ky*3 + kx` holds channel `ch`
/// shifted by `(ky-1, kx-1)`, zero outside the grid.
pub fn im2col<T: Real>(input: ArrayView2<T>, rows: usize, cols: usize) -> Array2<T> {
    let channels = input.nrows();
    let cells = rows * cols;
    debug_assert_eq!(input.ncols(), cells);
    let mut out = Array2::zeros((9 * channels, cells));
    for ch in 0..channels {
        let src = input.row(ch);
        let src = src.as_slice().expect("contiguous input");
        for ky in 0..3 {
            for kx in 0..3 {
                let mut dst = out.row_mut(ch * 9 + ky * 3 + kx);
                let dst = dst.as_slice_mut().unwrap();
                for y in 0..rows {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= rows as isize {
                        continue;
                    }
                    let (x0, x1) = match kx {
                        0 => (1, cols),
                        1 => (0, cols),
                        _ => (0, cols - 1),
                    };
                    let so = sy as usize * cols;
                    let d = &mut dst[y * cols + x0..y * cols + x1];
                    let s = &src[so + x0 + kx - 1..so + x1 + kx - 1];
                    d.copy_from_slice(s);
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: folds column gradients back onto the channels.
pub fn col2im<T: Real>(cols_grad: ArrayView2<T>, channels: usize, rows: usize, cols: usize) -> Array2<T> {
    let cells = rows * cols;
    let mut out = Array2::zeros((channels, cells));
    for ch in 0..channels {
        let mut dst = out.row_mut(ch);
        let dst = dst.as_slice_mut().unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                let src = cols_grad.row(ch * 9 + ky * 3 + kx);
                let src = src.as_slice().expect("contiguous gradient");
                for y in 0..rows {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= rows as isize {
                        continue;
                    }
                    let (x0, x1) = match kx {
                        0 => (1, cols),
                        1 => (0, cols),
                        _ => (0, cols - 1),
                    };
                    let so = sy as usize * cols;
                    let d = &mut dst[so + x0 + kx - 1..so + x1 + kx - 1];
                    let s = &src[y * cols + x0..y * cols + x1];
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    /// Direct 3x3 same-padded cross-correlation of one channel.
    fn direct(input: &Array2<f64>, k: &[f64; 9]) -> Array2<f64> {
        let (rows, cols) = input.dim();
        Array2::from_shape_fn((rows, cols), |(y, x)| {
            let mut s = 0.0;
            for ky in 0..3 {
                for kx in 0..3 {
                    let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                    if sy >= 0 && sx >= 0 && sy < rows as isize && sx < cols as isize {
                        s += k[ky * 3 + kx] * input[(sy as usize, sx as usize)];
                    }
                }
            }
            s
        })
    }

    #[test]
    fn matches_direct_convolution() {
        let (rows, cols) = (5, 7);
        let img = Array2::from_shape_fn((rows, cols), |(y, x)| ((y * 7 + x * 3) % 11) as f64 - 4.0);
        let k = [0.3, -1.0, 0.5, 2.0, 0.1, -0.7, 0.0, 1.5, -0.2];
        let flat = img.clone().into_shape_with_order((1, rows * cols)).unwrap();
        let c = im2col(flat.view(), rows, cols);
        let out = Array1::from(k.to_vec()).dot(&c).into_shape_with_order((rows, cols)).unwrap();
        let want = direct(&img, &k);
        for (a, b) in out.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), g> == <x, col2im(g)>
        let (ch, rows, cols) = (2, 4, 5);
        let x = Array2::from_shape_fn((ch, rows * cols), |(a, b)| ((a * 13 + b * 5) % 9) as f64 - 4.0);
        let g = Array2::from_shape_fn((9 * ch, rows * cols), |(a, b)| ((a * 7 + b * 3) % 5) as f64 - 2.0);
        let lhs: f64 = (&im2col(x.view(), rows, cols) * &g).sum();
        let rhs: f64 = (&x * &col2im(g.view(), ch, rows, cols)).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
