//! Raw convolution loops on row-major slices.
//!
//! All convolutions use the cross-correlation convention: the kernel is not
//! flipped, so `out[t] = sum_j w[j] * in[t * stride + j * dilation - pad]`.

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Output length of a 1-D convolution, or `None` when a valid convolution
/// does not fit.
pub fn conv1d_output_len(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Option<usize> {
    if len == 0 || kernel == 0 || stride == 0 {
        return None;
    }
    match padding {
        Padding::Same => Some(len.div_ceil(stride)),
        Padding::Valid => (len >= kernel).then(|| (len - kernel) / stride + 1),
    }
}

/// Left padding for "same" output length `ceil(len / stride)` with an
/// effective kernel extent of `extent` samples. Any odd leftover goes right.
pub fn same_padding(len: usize, extent: usize, stride: usize) -> usize {
    let out = len.div_ceil(stride);
    let needed = ((out - 1) * stride + extent).saturating_sub(len);
    needed / 2
}

/// Output positions `t` in `[lo, hi)` for which `t * stride + offset` lies
/// inside `[0, len)`.
fn tap_range(out_len: usize, len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset < 0 {
        ((-offset) + s - 1) / s
    } else {
        0
    };
    let last = len as isize - 1 - offset;
    let hi = if last < 0 {
        0
    } else {
        (last / s + 1).min(out_len as isize)
    };
    let lo = lo.min(out_len as isize);
    (lo as usize, hi.max(lo) as usize)
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (ca, cb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv1dGeom {
    pub cin: usize,
    pub cout: usize,
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub out_len: usize,
}

impl Conv1dGeom {
    fn offset(&self, tap: usize) -> isize {
        tap as isize - self.pad_left as isize
    }

    pub fn forward<T: Real>(&self, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
        let (len, k, ol) = (self.len, self.kernel, self.out_len);
        for co in 0..self.cout {
            let orow = &mut out[co * ol..(co + 1) * ol];
            orow.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..self.cin {
                let irow = &input[ci * len..(ci + 1) * len];
                for j in 0..k {
                    let w = weight[(co * self.cin + ci) * k + j];
                    let off = self.offset(j);
                    let (lo, hi) = tap_range(ol, len, self.stride, off);
                    if lo == hi {
                        continue;
                    }
                    if self.stride == 1 {
                        let start = (lo as isize + off) as usize;
                        axpy(&mut orow[lo..hi], w, &irow[start..start + (hi - lo)]);
                    } else {
                        for t in lo..hi {
                            orow[t] += w * irow[(t as isize * self.stride as isize + off) as usize];
                        }
                    }
                }
            }
        }
    }

    pub fn backward<T: Real>(
        &self,
        input: &[T],
        weight: &[T],
        grad_out: &[T],
        grad_input: Option<&mut [T]>,
        grad_weight: Option<(&mut [T], &mut [T])>,
    ) {
        let (len, k, ol, s) = (self.len, self.kernel, self.out_len, self.stride);
        if let Some((gw, gb)) = grad_weight {
            for co in 0..self.cout {
                let grow = &grad_out[co * ol..(co + 1) * ol];
                gb[co] += grow.iter().copied().sum::<T>();
                for ci in 0..self.cin {
                    let irow = &input[ci * len..(ci + 1) * len];
                    for j in 0..k {
                        let off = self.offset(j);
                        let (lo, hi) = tap_range(ol, len, s, off);
                        if lo == hi {
                            continue;
                        }
                        let acc = if s == 1 {
                            let start = (lo as isize + off) as usize;
                            dot(&grow[lo..hi], &irow[start..start + (hi - lo)])
                        } else {
                            (lo..hi)
                                .map(|t| grow[t] * irow[(t as isize * s as isize + off) as usize])
                                .sum()
                        };
                        gw[(co * self.cin + ci) * k + j] += acc;
                    }
                }
            }
        }
        if let Some(gi) = grad_input {
            for co in 0..self.cout {
                let grow = &grad_out[co * ol..(co + 1) * ol];
                for ci in 0..self.cin {
                    let girow = &mut gi[ci * len..(ci + 1) * len];
                    for j in 0..k {
                        let w = weight[(co * self.cin + ci) * k + j];
                        let off = self.offset(j);
                        let (lo, hi) = tap_range(ol, len, s, off);
                        if lo == hi {
                            continue;
                        }
                        if s == 1 {
                            let start = (lo as isize + off) as usize;
                            axpy(&mut girow[start..start + (hi - lo)], w, &grow[lo..hi]);
                        } else {
                            for t in lo..hi {
                                girow[(t as isize * s as isize + off) as usize] += w * grow[t];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 "same" 2-D convolution over `[channels, rows, cols]` planes with
/// per-axis dilation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub cin: usize,
    pub cout: usize,
    pub rows: usize,
    pub cols: usize,
    pub k_rows: usize,
    pub k_cols: usize,
    pub dil_rows: usize,
    pub dil_cols: usize,
}

impl Conv2dGeom {
    fn pads(&self) -> (usize, usize) {
        (
            same_padding(self.rows, (self.k_rows - 1) * self.dil_rows + 1, 1),
            same_padding(self.cols, (self.k_cols - 1) * self.dil_cols + 1, 1),
        )
    }

    /// Iterates over every kernel tap with its weight index and the valid
    /// output row/col ranges and input offsets.
    fn taps(&self) -> Vec<Tap> {
        let (pr, pc) = self.pads();
        let mut taps = Vec::with_capacity(self.k_rows * self.k_cols);
        for a in 0..self.k_rows {
            let off_r = (a * self.dil_rows) as isize - pr as isize;
            let rows = tap_range(self.rows, self.rows, 1, off_r);
            for b in 0..self.k_cols {
                let off_c = (b * self.dil_cols) as isize - pc as isize;
                let cols = tap_range(self.cols, self.cols, 1, off_c);
                if rows.0 < rows.1 && cols.0 < cols.1 {
                    taps.push(Tap {
                        w_offset: a * self.k_cols + b,
                        rows,
                        cols,
                        off_r,
                        off_c,
                    });
                }
            }
        }
        taps
    }

    pub fn forward<T: Real>(&self, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
        let plane = self.rows * self.cols;
        let kk = self.k_rows * self.k_cols;
        let taps = self.taps();
        for co in 0..self.cout {
            let oplane = &mut out[co * plane..(co + 1) * plane];
            oplane.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..self.cin {
                let iplane = &input[ci * plane..(ci + 1) * plane];
                let wbase = (co * self.cin + ci) * kk;
                for tap in &taps {
                    let w = weight[wbase + tap.w_offset];
                    let n = tap.cols.1 - tap.cols.0;
                    for r in tap.rows.0..tap.rows.1 {
                        let ir = (r as isize + tap.off_r) as usize;
                        let ic = (tap.cols.0 as isize + tap.off_c) as usize;
                        let orow =
                            &mut oplane[r * self.cols + tap.cols.0..r * self.cols + tap.cols.1];
                        axpy(
                            orow,
                            w,
                            &iplane[ir * self.cols + ic..ir * self.cols + ic + n],
                        );
                    }
                }
            }
        }
    }

    pub fn backward<T: Real>(
        &self,
        input: &[T],
        weight: &[T],
        grad_out: &[T],
        grad_input: Option<&mut [T]>,
        grad_weight: Option<(&mut [T], &mut [T])>,
    ) {
        let plane = self.rows * self.cols;
        let kk = self.k_rows * self.k_cols;
        let taps = self.taps();
        if let Some((gw, gb)) = grad_weight {
            for co in 0..self.cout {
                let gplane = &grad_out[co * plane..(co + 1) * plane];
                gb[co] += gplane.iter().copied().sum::<T>();
                for ci in 0..self.cin {
                    let iplane = &input[ci * plane..(ci + 1) * plane];
                    let wbase = (co * self.cin + ci) * kk;
                    for tap in &taps {
                        let n = tap.cols.1 - tap.cols.0;
                        let mut acc = T::zero();
                        for r in tap.rows.0..tap.rows.1 {
                            let ir = (r as isize + tap.off_r) as usize;
                            let ic = (tap.cols.0 as isize + tap.off_c) as usize;
                            acc += dot(
                                &gplane[r * self.cols + tap.cols.0..r * self.cols + tap.cols.1],
                                &iplane[ir * self.cols + ic..ir * self.cols + ic + n],
                            );
                        }
                        gw[wbase + tap.w_offset] += acc;
                    }
                }
            }
        }
        if let Some(gi) = grad_input {
            for co in 0..self.cout {
                let gplane = &grad_out[co * plane..(co + 1) * plane];
                for ci in 0..self.cin {
                    let giplane = &mut gi[ci * plane..(ci + 1) * plane];
                    let wbase = (co * self.cin + ci) * kk;
                    for tap in &taps {
                        let w = weight[wbase + tap.w_offset];
                        let n = tap.cols.1 - tap.cols.0;
                        for r in tap.rows.0..tap.rows.1 {
                            let ir = (r as isize + tap.off_r) as usize;
                            let ic = (tap.cols.0 as isize + tap.off_c) as usize;
                            axpy(
                                &mut giplane[ir * self.cols + ic..ir * self.cols + ic + n],
                                w,
                                &gplane[r * self.cols + tap.cols.0..r * self.cols + tap.cols.1],
                            );
                        }
                    }
                }
            }
        }
    }
}

struct Tap {
    w_offset: usize,
    rows: (usize, usize),
    cols: (usize, usize),
    off_r: isize,
    off_c: isize,
}
