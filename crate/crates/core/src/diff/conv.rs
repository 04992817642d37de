//! Valid 1-D cross-correlation kernels over the time axis.
//!
//! Inputs are `T × d_in`, filters `w × d_in × d_out`, outputs
//! `(T − w + 1) × d_out`.

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub width: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl ConvDims {
    fn f(&self, k: usize, i: usize, o: usize) -> usize {
        (k * self.d_in + i) * self.d_out + o
    }
}

pub(crate) fn forward(x: &[f64], t_in: usize, f: &[f64], dims: ConvDims) -> Vec<f64> {
    let t_out = t_in + 1 - dims.width;
    let mut y = vec![0.0; t_out * dims.d_out];
    for t in 0..t_out {
        let out = &mut y[t * dims.d_out..(t + 1) * dims.d_out];
        for k in 0..dims.width {
            let row = &x[(t + k) * dims.d_in..(t + k + 1) * dims.d_in];
            for (i, &xv) in row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let base = dims.f(k, i, 0);
                for (o, acc) in out.iter_mut().enumerate() {
                    *acc += xv * f[base + o];
                }
            }
        }
    }
    y
}

/// Gradient of the forward map with respect to its input: a full
/// (transposed) correlation of `dy` with the filters.
pub(crate) fn input_grad(dy: &[f64], t_out: usize, f: &[f64], dims: ConvDims) -> Vec<f64> {
    let t_in = t_out + dims.width - 1;
    let mut dx = vec![0.0; t_in * dims.d_in];
    for t in 0..t_out {
        let g = &dy[t * dims.d_out..(t + 1) * dims.d_out];
        for k in 0..dims.width {
            let row = &mut dx[(t + k) * dims.d_in..(t + k + 1) * dims.d_in];
            for (i, acc) in row.iter_mut().enumerate() {
                let base = dims.f(k, i, 0);
                *acc += g.iter().zip(&f[base..base + dims.d_out]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    dx
}

/// Gradient of the forward map with respect to the filters.
pub(crate) fn filter_grad(x: &[f64], dy: &[f64], t_out: usize, dims: ConvDims) -> Vec<f64> {
    let mut df = vec![0.0; dims.width * dims.d_in * dims.d_out];
    for t in 0..t_out {
        let g = &dy[t * dims.d_out..(t + 1) * dims.d_out];
        for k in 0..dims.width {
            let row = &x[(t + k) * dims.d_in..(t + k + 1) * dims.d_in];
            for (i, &xv) in row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let base = dims.f(k, i, 0);
                for (o, gv) in g.iter().enumerate() {
                    df[base + o] += xv * gv;
                }
            }
        }
    }
    df
}
