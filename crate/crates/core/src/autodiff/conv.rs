use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::layers::complex_matmul;

/// Shape of a complex hidden grid with `channels` feature maps of
/// `height × width` sites.
///
/// Site `(c, y, x)` is capsule `α = c·H·W + y·W + x` in the planar
/// `[Re | Im]` layout. Kernels are complex `C × 9C` matrices whose column
/// `c_in·9 + dy·3 + dx` multiplies the neighbour at offset `(dy−1, dx−1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGrid {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGrid {
    pub fn sites(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// `(batch·H·W) × (2·9C)` planar patch matrix.
fn im2col(x: ArrayView2<f64>, g: ConvGrid) -> Array2<f64> {
    let (c, h, w) = (g.channels, g.height, g.width);
    let sites = g.sites();
    let plane = g.plane();
    let batch = x.nrows();
    let m = 9 * c;
    let mut p = Array2::zeros((batch * plane, 2 * m));
    for b in 0..batch {
        for yy in 0..h {
            for xx in 0..w {
                let row = b * plane + yy * w + xx;
                for ci in 0..c {
                    for dy in 0..3 {
                        let sy = yy as isize + dy as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for dx in 0..3 {
                            let sx = xx as isize + dx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ci * plane + sy as usize * w + sx as usize;
                            let col = ci * 9 + dy * 3 + dx;
                            p[[row, col]] = x[[b, src]];
                            p[[row, m + col]] = x[[b, sites + src]];
                        }
                    }
                }
            }
        }
    }
    p
}

fn col2im(dp: ArrayView2<f64>, batch: usize, g: ConvGrid) -> Array2<f64> {
    let (c, h, w) = (g.channels, g.height, g.width);
    let sites = g.sites();
    let plane = g.plane();
    let m = 9 * c;
    let mut dx = Array2::zeros((batch, 2 * sites));
    for b in 0..batch {
        for yy in 0..h {
            for xx in 0..w {
                let row = b * plane + yy * w + xx;
                for ci in 0..c {
                    for dy in 0..3 {
                        let sy = yy as isize + dy as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for ddx in 0..3 {
                            let sx = xx as isize + ddx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ci * plane + sy as usize * w + sx as usize;
                            let col = ci * 9 + dy * 3 + ddx;
                            dx[[b, src]] += dp[[row, col]];
                            dx[[b, sites + src]] += dp[[row, m + col]];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Planar `(batch·H·W) × 2C` ↔ state layout `batch × 2·C·H·W`.
fn rows_to_state(yr: ArrayView2<f64>, batch: usize, g: ConvGrid) -> Array2<f64> {
    let (c, plane, sites) = (g.channels, g.plane(), g.sites());
    let mut out = Array2::zeros((batch, 2 * sites));
    for b in 0..batch {
        for p in 0..plane {
            for co in 0..c {
                out[[b, co * plane + p]] = yr[[b * plane + p, co]];
                out[[b, sites + co * plane + p]] = yr[[b * plane + p, c + co]];
            }
        }
    }
    out
}

fn state_to_rows(y: ArrayView2<f64>, g: ConvGrid) -> Array2<f64> {
    let (c, plane, sites) = (g.channels, g.plane(), g.sites());
    let batch = y.nrows();
    let mut out = Array2::zeros((batch * plane, 2 * c));
    for b in 0..batch {
        for p in 0..plane {
            for co in 0..c {
                out[[b * plane + p, co]] = y[[b, co * plane + p]];
                out[[b * plane + p, c + co]] = y[[b, sites + co * plane + p]];
            }
        }
    }
    out
}

pub(super) fn forward(
    x: ArrayView2<f64>,
    re: ArrayView2<f64>,
    im: ArrayView2<f64>,
    g: ConvGrid,
) -> Array2<f64> {
    let p = im2col(x, g);
    let y = complex_matmul(p.view(), re, im);
    rows_to_state(y.view(), x.nrows(), g)
}

pub(super) fn backward(
    x: ArrayView2<f64>,
    re: ArrayView2<f64>,
    im: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    g: ConvGrid,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let c = g.channels;
    let m = 9 * c;
    let p = im2col(x, g);
    let d = state_to_rows(dy, g);
    let dyr = d.slice(s![.., ..c]);
    let dyi = d.slice(s![.., c..]);
    let pr = p.slice(s![.., ..m]);
    let pi = p.slice(s![.., m..]);
    let mut dp = Array2::zeros(p.raw_dim());
    dp.slice_mut(s![.., ..m]).assign(&(dyr.dot(&re) + dyi.dot(&im)));
    dp.slice_mut(s![.., m..]).assign(&(dyi.dot(&re) - dyr.dot(&im)));
    let dre = dyr.t().dot(&pr) + dyi.t().dot(&pi);
    let dim = dyi.t().dot(&pr) - dyr.t().dot(&pi);
    (col2im(dp.view(), x.nrows(), g), dre, dim)
}
