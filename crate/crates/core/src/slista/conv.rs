use crate::error::{invalid, Result};
use crate::linalg::{ravel, unravel, C64};

/// Precomputed tap list for a zero-padded "same" M-D convolution
/// `out[l] = Σ_j k[j] · x[l + c − j]` with `c = (k_len − 1)/2` per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvPlan {
    shape: Vec<usize>,
    kernel_len: usize,
    /// `(output index, input index, kernel index)` for every in-range tap.
    taps: Vec<(u32, u32, u32)>,
}

impl ConvPlan {
    pub fn new(shape: &[usize], kernel_len: usize) -> Result<Self> {
        if kernel_len % 2 == 0 {
            return invalid(format!("kernel length {kernel_len} must be odd"));
        }
        if shape.is_empty() || shape.contains(&0) {
            return invalid("convolution grid must be nonempty");
        }
        let dims = shape.len();
        let kshape = vec![kernel_len; dims];
        let ksize = kernel_len.pow(dims as u32);
        let len: usize = shape.iter().product();
        let center = (kernel_len / 2) as isize;
        let mut taps = Vec::new();
        let mut src = vec![0usize; dims];
        for out in 0..len {
            let l = unravel(out, shape);
            'kernel: for j in 0..ksize {
                let kj = unravel(j, &kshape);
                for m in 0..dims {
                    let s = l[m] as isize + center - kj[m] as isize;
                    if s < 0 || s >= shape[m] as isize {
                        continue 'kernel;
                    }
                    src[m] = s as usize;
                }
                taps.push((out as u32, ravel(&src, shape) as u32, j as u32));
            }
        }
        Ok(Self {
            shape: shape.to_vec(),
            kernel_len,
            taps,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_len.pow(self.shape.len() as u32)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out += conv(kernel, x)`.
    pub fn accumulate(&self, kernel: &[C64], x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(kernel.len(), self.kernel_size());
        for &(o, s, j) in &self.taps {
            out[o as usize] += kernel[j as usize] * x[s as usize];
        }
    }

    pub fn apply(&self, kernel: &[C64], x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        self.accumulate(kernel, x, &mut out);
        out
    }

    /// Adjoint w.r.t. the input: `g_x += convᴴ(kernel, g_out)`.
    pub fn accumulate_input_grad(&self, kernel: &[C64], g_out: &[C64], g_x: &mut [C64]) {
        for &(o, s, j) in &self.taps {
            g_x[s as usize] += kernel[j as usize].conj() * g_out[o as usize];
        }
    }

    /// `g_k[j] += Σ_l g_out[l] · conj(x[l + c − j])`.
    pub fn accumulate_kernel_grad(&self, x: &[C64], g_out: &[C64], g_k: &mut [C64]) {
        for &(o, s, j) in &self.taps {
            g_k[j as usize] += g_out[o as usize] * x[s as usize].conj();
        }
    }

    /// Dense matrix `W` with `conv(kernel, x) = W x`.
    pub fn to_dense(&self, kernel: &[C64]) -> crate::linalg::CMatrix {
        let n = self.len();
        let mut m = crate::linalg::CMatrix::zeros(n, n);
        for &(o, s, j) in &self.taps {
            m[(o as usize, s as usize)] += kernel[j as usize];
        }
        m
    }
}

/// 1-D zero-padded "same" convolution of odd-length `kernel` with `signal`.
pub fn complex_conv_same(signal: &[C64], kernel: &[C64]) -> Result<Vec<C64>> {
    let plan = ConvPlan::new(&[signal.len()], kernel.len())?;
    Ok(plan.apply(kernel, signal))
}
