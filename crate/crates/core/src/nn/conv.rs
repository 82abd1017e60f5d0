//! 2-d cross-correlation and its transpose.
//!
//! Both ops are built from three plane kernels that walk one kernel tap
//! across a plane: `gather` (small plane reads the large one), `scatter`
//! (small plane writes into the large one) and `correlate` (their inner
//! product). For a tap `(ky, kx)` the small-plane position `(a, b)` lines up
//! with the large-plane position `(a*s + ky - ph, b*s + kx - pw)`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::par;
use crate::tensor::{Backward, Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvSpec {
    /// Stride 1, no padding.
    pub fn new(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride: 1,
            pad_h: 0,
            pad_w: 0,
        }
    }

    /// Stride 1 with padding `(kh/2, kw/2)`, which preserves spatial size
    /// for odd kernels (1×3 → (0,1), 3×1 → (1,0), 3×3 → (1,1)).
    pub fn same(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self::new(in_channels, out_channels, kernel_h, kernel_w).padding(kernel_h / 2, kernel_w / 2)
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, pad_h: usize, pad_w: usize) -> Self {
        self.pad_h = pad_h;
        self.pad_w = pad_w;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.stride == 0
        {
            return Err(shape_err!("conv spec has a zero extent: {self:?}"));
        }
        Ok(())
    }

    /// `floor((in + 2·pad − kernel)/stride) + 1` per axis.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let axis = |n: usize, k: usize, p: usize| -> Result<usize> {
            if n + 2 * p < k {
                return Err(shape_err!(
                    "conv output would be empty: input {n}, kernel {k}, pad {p}"
                ));
            }
            Ok((n + 2 * p - k) / self.stride + 1)
        };
        Ok((axis(h, self.kernel_h, self.pad_h)?, axis(w, self.kernel_w, self.pad_w)?))
    }

    /// `(in − 1)·stride − 2·pad + kernel` per axis.
    pub fn transposed_output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let axis = |n: usize, k: usize, p: usize| -> Result<usize> {
            let full = (n - 1) * self.stride + k;
            if full <= 2 * p {
                return Err(shape_err!(
                    "transposed conv output would be empty: input {n}, kernel {k}, pad {p}"
                ));
            }
            Ok(full - 2 * p)
        };
        Ok((axis(h, self.kernel_h, self.pad_h)?, axis(w, self.kernel_w, self.pad_w)?))
    }
}

/// Geometry shared by the plane kernels: the "small" plane is the strided
/// side (conv output, transposed-conv input).
#[derive(Debug, Clone, Copy)]
struct Planes {
    small_h: usize,
    small_w: usize,
    big_h: usize,
    big_w: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
}

/// Range of small-plane indices `a` with `a*s + k - p` inside `0..big`.
fn tap_range(small: usize, big: usize, s: usize, k: usize, p: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi = if big + p > k { ((big + p - k - 1) / s + 1).min(small) } else { 0 };
    (lo, hi.max(lo))
}

impl Planes {
    fn small_len(&self) -> usize {
        self.small_h * self.small_w
    }

    fn big_len(&self) -> usize {
        self.big_h * self.big_w
    }

    #[inline]
    fn ranges(&self, ky: usize, kx: usize) -> ((usize, usize), (usize, usize)) {
        (
            tap_range(self.small_h, self.big_h, self.stride, ky, self.pad_h),
            tap_range(self.small_w, self.big_w, self.stride, kx, self.pad_w),
        )
    }

    fn gather<T: Scalar>(&self, small: &mut [T], big: &[T], wv: T, ky: usize, kx: usize) {
        let ((a0, a1), (b0, b1)) = self.ranges(ky, kx);
        let s = self.stride;
        for a in a0..a1 {
            let by = a * s + ky - self.pad_h;
            let row = &mut small[a * self.small_w..(a + 1) * self.small_w];
            let brow = &big[by * self.big_w..(by + 1) * self.big_w];
            if s == 1 {
                let src = &brow[b0 + kx - self.pad_w..b1 + kx - self.pad_w];
                row[b0..b1]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(o, &v)| *o = *o + wv * v);
            } else {
                for b in b0..b1 {
                    row[b] = row[b] + wv * brow[b * s + kx - self.pad_w];
                }
            }
        }
    }

    fn scatter<T: Scalar>(&self, big: &mut [T], small: &[T], wv: T, ky: usize, kx: usize) {
        let ((a0, a1), (b0, b1)) = self.ranges(ky, kx);
        let s = self.stride;
        for a in a0..a1 {
            let by = a * s + ky - self.pad_h;
            let row = &small[a * self.small_w..(a + 1) * self.small_w];
            let brow = &mut big[by * self.big_w..(by + 1) * self.big_w];
            if s == 1 {
                let dst = &mut brow[b0 + kx - self.pad_w..b1 + kx - self.pad_w];
                dst.iter_mut()
                    .zip(&row[b0..b1])
                    .for_each(|(o, &v)| *o = *o + wv * v);
            } else {
                for b in b0..b1 {
                    let o = &mut brow[b * s + kx - self.pad_w];
                    *o = *o + wv * row[b];
                }
            }
        }
    }

    fn correlate<T: Scalar>(&self, small: &[T], big: &[T], ky: usize, kx: usize) -> T {
        let ((a0, a1), (b0, b1)) = self.ranges(ky, kx);
        let s = self.stride;
        let mut acc = T::zero();
        for a in a0..a1 {
            let by = a * s + ky - self.pad_h;
            let row = &small[a * self.small_w..(a + 1) * self.small_w];
            let brow = &big[by * self.big_w..(by + 1) * self.big_w];
            for b in b0..b1 {
                acc = acc + row[b] * brow[b * s + kx - self.pad_w];
            }
        }
        acc
    }
}

fn check_operands<T: Scalar>(
    tape: &Tape<T>,
    x: Var,
    w: Var,
    b: Var,
    spec: &ConvSpec,
    w_shape: [usize; 4],
    op: &str,
) -> Result<[usize; 4]> {
    spec.validate()?;
    let dims = tape.value(x).dims4()?;
    if dims[1] != spec.in_channels {
        return Err(shape_err!(
            "{op}: input has {} channels, spec expects {}",
            dims[1],
            spec.in_channels
        ));
    }
    if tape.shape(w) != w_shape {
        return Err(shape_err!(
            "{op}: weight shape {:?}, expected {w_shape:?}",
            tape.shape(w)
        ));
    }
    if tape.shape(b) != [spec.out_channels] {
        return Err(shape_err!(
            "{op}: bias shape {:?}, expected [{}]",
            tape.shape(b),
            spec.out_channels
        ));
    }
    Ok(dims)
}

fn bias_grad<T: Scalar>(g: &[T], n: usize, c: usize, plane: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); c];
    for ni in 0..n {
        for (ci, slot) in gb.iter_mut().enumerate() {
            let off = (ni * c + ci) * plane;
            *slot = g[off..off + plane].iter().fold(*slot, |acc, &v| acc + v);
        }
    }
    gb
}

struct Conv2dBack {
    spec: ConvSpec,
    n: usize,
    planes: Planes,
}

impl<T: Scalar> Backward<T> for Conv2dBack {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_h: kh,
            kernel_w: kw,
            ..
        } = self.spec;
        let p = self.planes;
        let (sl, bl) = (p.small_len(), p.big_len());
        let ksz = kh * kw;

        let gx = needs[0].then(|| {
            let mut gx = vec![T::zero(); self.n * cin * bl];
            par::for_each_chunk_mut(&mut gx, bl, |idx, plane| {
                let (ni, ic) = (idx / cin, idx % cin);
                for oc in 0..cout {
                    let gy = &g[(ni * cout + oc) * sl..][..sl];
                    let wk = &w[(oc * cin + ic) * ksz..][..ksz];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            p.scatter(plane, gy, wk[ky * kw + kx], ky, kx);
                        }
                    }
                }
            });
            gx
        });
        let gw = needs[1].then(|| {
            let mut gw = vec![T::zero(); cout * cin * ksz];
            par::for_each_chunk_mut(&mut gw, cin * ksz, |oc, chunk| {
                for ic in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let mut acc = T::zero();
                            for ni in 0..self.n {
                                let gy = &g[(ni * cout + oc) * sl..][..sl];
                                let xp = &x[(ni * cin + ic) * bl..][..bl];
                                acc = acc + p.correlate(gy, xp, ky, kx);
                            }
                            chunk[(ic * kh + ky) * kw + kx] = acc;
                        }
                    }
                }
            });
            gw
        });
        let gb = needs[2].then(|| bias_grad(g, self.n, cout, sl));
        vec![gx, gw, gb]
    }
}

struct ConvTranspose2dBack {
    spec: ConvSpec,
    n: usize,
    planes: Planes,
}

impl<T: Scalar> Backward<T> for ConvTranspose2dBack {
    fn backward(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (x, w) = (inputs[0].data(), inputs[1].data());
        let ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel_h: kh,
            kernel_w: kw,
            ..
        } = self.spec;
        let p = self.planes;
        let (sl, bl) = (p.small_len(), p.big_len());
        let ksz = kh * kw;

        let gx = needs[0].then(|| {
            let mut gx = vec![T::zero(); self.n * cin * sl];
            par::for_each_chunk_mut(&mut gx, sl, |idx, plane| {
                let (ni, ic) = (idx / cin, idx % cin);
                for oc in 0..cout {
                    let gy = &g[(ni * cout + oc) * bl..][..bl];
                    let wk = &w[(ic * cout + oc) * ksz..][..ksz];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            p.gather(plane, gy, wk[ky * kw + kx], ky, kx);
                        }
                    }
                }
            });
            gx
        });
        let gw = needs[1].then(|| {
            let mut gw = vec![T::zero(); cin * cout * ksz];
            par::for_each_chunk_mut(&mut gw, cout * ksz, |ic, chunk| {
                for oc in 0..cout {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let mut acc = T::zero();
                            for ni in 0..self.n {
                                let xp = &x[(ni * cin + ic) * sl..][..sl];
                                let gy = &g[(ni * cout + oc) * bl..][..bl];
                                acc = acc + p.correlate(xp, gy, ky, kx);
                            }
                            chunk[(oc * kh + ky) * kw + kx] = acc;
                        }
                    }
                }
            });
            gw
        });
        let gb = needs[2].then(|| bias_grad(g, self.n, cout, bl));
        vec![gx, gw, gb]
    }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of `x: [N, Cin, H, W]` with `w: [Cout, Cin, kh, kw]`
    /// plus per-channel bias `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: &ConvSpec) -> Result<Var> {
        let w_shape = [spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w];
        let [n, cin, h, wd] = check_operands(self, x, w, b, spec, w_shape, "conv2d")?;
        let (oh, ow) = spec.output_size(h, wd)?;
        let planes = Planes {
            small_h: oh,
            small_w: ow,
            big_h: h,
            big_w: wd,
            stride: spec.stride,
            pad_h: spec.pad_h,
            pad_w: spec.pad_w,
        };
        let cout = spec.out_channels;
        let (kh, kw) = (spec.kernel_h, spec.kernel_w);
        let ksz = kh * kw;
        let (sl, bl) = (planes.small_len(), planes.big_len());
        let (xd, wdat, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());

        let mut out = vec![T::zero(); n * cout * sl];
        par::for_each_chunk_mut(&mut out, sl, |idx, plane| {
            let (ni, oc) = (idx / cout, idx % cout);
            plane.fill(bd[oc]);
            for ic in 0..cin {
                let xp = &xd[(ni * cin + ic) * bl..][..bl];
                let wk = &wdat[(oc * cin + ic) * ksz..][..ksz];
                for ky in 0..kh {
                    for kx in 0..kw {
                        planes.gather(plane, xp, wk[ky * kw + kx], ky, kx);
                    }
                }
            }
        });
        let out = Tensor::from_vec(&[n, cout, oh, ow], out)?;
        Ok(self.push(
            "conv2d",
            &[x, w, b],
            out,
            Conv2dBack {
                spec: *spec,
                n,
                planes,
            },
        ))
    }

    /// Transposed convolution (the adjoint of [`Tape::conv2d`] in `x`).
    /// `w` has layout `[Cin, Cout, kh, kw]`, so the same weight tensor serves
    /// a conv2d mapping `Cout → Cin`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, spec: &ConvSpec) -> Result<Var> {
        let w_shape = [spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w];
        let [n, cin, h, wd] = check_operands(self, x, w, b, spec, w_shape, "conv_transpose2d")?;
        let (oh, ow) = spec.transposed_output_size(h, wd)?;
        let planes = Planes {
            small_h: h,
            small_w: wd,
            big_h: oh,
            big_w: ow,
            stride: spec.stride,
            pad_h: spec.pad_h,
            pad_w: spec.pad_w,
        };
        let cout = spec.out_channels;
        let (kh, kw) = (spec.kernel_h, spec.kernel_w);
        let ksz = kh * kw;
        let (sl, bl) = (planes.small_len(), planes.big_len());
        let (xd, wdat, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());

        let mut out = vec![T::zero(); n * cout * bl];
        par::for_each_chunk_mut(&mut out, bl, |idx, plane| {
            let (ni, oc) = (idx / cout, idx % cout);
            plane.fill(bd[oc]);
            for ic in 0..cin {
                let xp = &xd[(ni * cin + ic) * sl..][..sl];
                let wk = &wdat[(ic * cout + oc) * ksz..][..ksz];
                for ky in 0..kh {
                    for kx in 0..kw {
                        planes.scatter(plane, xp, wk[ky * kw + kx], ky, kx);
                    }
                }
            }
        });
        let out = Tensor::from_vec(&[n, cout, oh, ow], out)?;
        Ok(self.push(
            "conv_transpose2d",
            &[x, w, b],
            out,
            ConvTranspose2dBack {
                spec: *spec,
                n,
                planes,
            },
        ))
    }
}
