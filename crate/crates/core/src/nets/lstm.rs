use rand_chacha::ChaCha8Rng;

use super::params::{uniform, Bound, ParamStore};
use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM layer; gates are packed `[i | f | g | o]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmLayer {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Adds `{prefix}.wx`, `{prefix}.wh` and `{prefix}.b` to `store`. The
/// forget-gate bias starts at 1.
pub fn init_lstm(store: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize, rng: &mut ChaCha8Rng) {
    let a = 1.0 / (hidden as f64).sqrt();
    store.insert(format!("{prefix}.wx"), uniform(d_in, 4 * hidden, a, rng));
    store.insert(format!("{prefix}.wh"), uniform(hidden, 4 * hidden, a, rng));
    let mut b = Tensor::zeros(&[1, 4 * hidden]);
    b.data_mut()[hidden..2 * hidden].fill(1.0);
    store.insert(format!("{prefix}.b"), b);
}

impl LstmLayer {
    pub fn from_bound(g: &Graph, bound: &Bound, prefix: &str) -> Result<Self> {
        let wh = bound.var(&format!("{prefix}.wh"))?;
        let (hidden, four) = g.value(wh).dims2();
        if four != 4 * hidden {
            return Err(Error::dim("lstm recurrent weights", g.value(wh).shape(), &[hidden, 4 * hidden]));
        }
        Ok(LstmLayer {
            wx: bound.var(&format!("{prefix}.wx"))?,
            wh,
            b: bound.var(&format!("{prefix}.b"))?,
            hidden,
        })
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        let h = g.constant(Tensor::zeros(&[1, self.hidden]));
        let c = g.constant(Tensor::zeros(&[1, self.hidden]));
        LstmState { h, c }
    }

    /// One step on a `1 × d_in` input.
    pub fn step(&self, g: &mut Graph, x: Var, s: LstmState) -> Result<LstmState> {
        let xw = g.matmul(x, self.wx)?;
        self.step_projected(g, xw, s)
    }

    /// One step given the input projection `x · wx` (lets a caller compute
    /// it for a whole sequence at once).
    pub fn step_projected(&self, g: &mut Graph, xw: Var, s: LstmState) -> Result<LstmState> {
        let n = self.hidden;
        let hw = g.matmul(s.h, self.wh)?;
        let z = g.add(xw, hw)?;
        let z = g.add(z, self.b)?;
        let i = g.slice_cols(z, 0, n)?;
        let f = g.slice_cols(z, n, n)?;
        let u = g.slice_cols(z, 2 * n, n)?;
        let o = g.slice_cols(z, 3 * n, n)?;
        let (i, f, u, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(u), g.sigmoid(o));
        let keep = g.mul(f, s.c)?;
        let write = g.mul(i, u)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Layers applied bottom to top at every step.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub fn from_bound(g: &Graph, bound: &Bound, prefix: &str, depth: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|l| LstmLayer::from_bound(g, bound, &format!("{prefix}.l{l}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(LstmStack { layers })
    }

    /// Every layer's hidden state set to `h0`, cells at zero.
    pub fn init_state(&self, g: &mut Graph, h0: Var) -> Vec<LstmState> {
        self.layers
            .iter()
            .map(|l| {
                let c = g.constant(Tensor::zeros(&[1, l.hidden]));
                LstmState { h: h0, c }
            })
            .collect()
    }

    /// One step through every layer; returns the new states, the top one last.
    pub fn step(&self, g: &mut Graph, x: Var, states: &[LstmState]) -> Result<Vec<LstmState>> {
        let mut input = x;
        let mut out = Vec::with_capacity(self.layers.len());
        for (layer, &s) in self.layers.iter().zip(states) {
            let next = layer.step(g, input, s)?;
            input = next.h;
            out.push(next);
        }
        Ok(out)
    }
}

/// Runs one layer over a `T × d_in` sequence, optionally right to left.
/// Returns the hidden states in input order.
pub fn run_layer(g: &mut Graph, layer: &LstmLayer, xs: Var, reverse: bool) -> Result<Vec<Var>> {
    let t = g.value(xs).dims2().0;
    let proj = g.matmul(xs, layer.wx)?;
    let mut s = layer.zero_state(g);
    let mut hs = vec![None; t];
    let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
    for step in order {
        let xw = g.gather_rows(proj, &[step])?;
        s = layer.step_projected(g, xw, s)?;
        hs[step] = Some(s.h);
    }
    Ok(hs.into_iter().map(|h| h.expect("every step visited")).collect())
}
