//! Greedy sparse coding of hidden states over the embedding dictionary.
//!
//! Each round picks the atom with the largest inner product against the
//! current residual, refits the coefficients of every selected atom by least
//! squares and recomputes the residual. Because the refit covers the whole
//! support this is orthogonal matching pursuit.
//!
//! With the support held fixed the reconstruction is the linear projection
//! `s = P h`, `P = Mᵀ (M Mᵀ)⁻¹ M`, which is what the backward pass uses.

use serde::{Deserialize, Serialize};

use super::dictionary::Dictionary;
use super::linalg::{dot, norm, Cholesky};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::tol;

/// How the next atom is chosen from the residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Largest raw inner product.
    #[default]
    InnerProduct,
    /// Largest absolute inner product.
    AbsInnerProduct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PursuitConfig {
    /// Maximum number of selection rounds (`L`).
    pub iterations: usize,
    pub selection: Selection,
}

impl PursuitConfig {
    pub fn new(iterations: usize) -> Self {
        PursuitConfig {
            iterations,
            selection: Selection::InnerProduct,
        }
    }
}

/// Result of coding one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    /// Selected atoms in selection order.
    pub indices: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub residual: Vec<f64>,
    /// `‖r‖` before the first round and after every round.
    pub residual_norm_history: Vec<f64>,
    /// Ridge added to the Gram diagonal in the final refit (0 if none).
    pub ridge: f64,
    /// Number of refits that needed the ridge fallback.
    pub ridge_events: usize,
}

impl SparseCode {
    pub fn support_len(&self) -> usize {
        self.indices.len()
    }

    pub fn residual_norm(&self) -> f64 {
        *self.residual_norm_history.last().unwrap_or(&0.0)
    }
}

/// Least-squares coefficients plus the ridge that was applied, if any.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coeffs: Vec<f64>,
    pub ridge: f64,
}

/// Index of the non-excluded atom with the largest inner product against
/// `residual`. Ties go to the lowest index.
pub fn select_atom(
    residual: &[f64],
    dict: &Dictionary,
    excluded: &[usize],
    selection: Selection,
) -> Result<usize> {
    if residual.len() != dict.d() {
        return Err(Error::dim("select_atom", &[residual.len()], &[dict.d()]));
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..dict.n() {
        if dict.is_excluded(i) || excluded.contains(&i) {
            continue;
        }
        let mut score = dot(residual, dict.atom(i));
        if selection == Selection::AbsInnerProduct {
            score = score.abs();
        }
        match best {
            Some((_, b)) if score <= b => {}
            _ => best = Some((i, score)),
        }
    }
    best.map(|(i, _)| i).ok_or(Error::ExhaustedDictionary)
}

/// Factor of the (possibly ridged) Gram matrix of the rows of `m`.
struct GramFactor {
    chol: Cholesky,
    ridge: f64,
}

fn gram(m: &[f64], k: usize, d: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v = dot(&m[i * d..(i + 1) * d], &m[j * d..(j + 1) * d]);
            g[i * k + j] = v;
            g[j * k + i] = v;
        }
    }
    g
}

fn factor_gram(m: &[f64], k: usize, d: usize) -> Result<GramFactor> {
    let mut g = gram(m, k, d);
    if let Some(chol) = Cholesky::factor(&g, k) {
        if chol.condition_estimate() <= tol::GRAM_COND_LIMIT {
            return Ok(GramFactor { chol, ridge: 0.0 });
        }
    }
    let trace: f64 = (0..k).map(|i| g[i * k + i]).sum();
    let ridge = tol::GRAM_RIDGE_SCALE * trace / k as f64;
    for i in 0..k {
        g[i * k + i] += ridge;
    }
    let chol = Cholesky::factor(&g, k)
        .ok_or_else(|| Error::Config("Gram matrix is singular even after ridge".into()))?;
    Ok(GramFactor { chol, ridge })
}

fn factor_with_ridge(m: &[f64], k: usize, d: usize, ridge: f64) -> Result<GramFactor> {
    if ridge == 0.0 {
        return factor_gram(m, k, d);
    }
    let mut g = gram(m, k, d);
    for i in 0..k {
        g[i * k + i] += ridge;
    }
    let chol = Cholesky::factor(&g, k)
        .ok_or_else(|| Error::Config("Gram matrix is singular even after ridge".into()))?;
    Ok(GramFactor { chol, ridge })
}

fn mat_vec(m: &[f64], k: usize, d: usize, v: &[f64]) -> Vec<f64> {
    (0..k).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

fn mat_t_vec(m: &[f64], k: usize, d: usize, c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for i in 0..k {
        for (o, x) in out.iter_mut().zip(&m[i * d..(i + 1) * d]) {
            *o += c[i] * x;
        }
    }
    out
}

/// Solves `min_c ‖h − Mᵀc‖₂` through the `k × k` normal equations, where `m`
/// holds the `k` selected atoms as rows (`k × d`, row-major).
pub fn least_squares(m: &[f64], k: usize, h: &[f64]) -> Result<LeastSquares> {
    if k == 0 {
        return Err(Error::EmptySupport);
    }
    let d = h.len();
    if m.len() != k * d {
        return Err(Error::dim("least_squares", &[k, d], &[m.len()]));
    }
    let f = factor_gram(m, k, d)?;
    let coeffs = f.chol.solve(&mat_vec(m, k, d, h));
    Ok(LeastSquares {
        coeffs,
        ridge: f.ridge,
    })
}

fn gather_atoms(dict: &Dictionary, indices: &[usize]) -> Vec<f64> {
    let mut m = Vec::with_capacity(indices.len() * dict.d());
    for &i in indices {
        m.extend_from_slice(dict.atom(i));
    }
    m
}

/// Sparse code of one state `h` over `dict`.
pub fn sparse_encode(h: &[f64], dict: &Dictionary, config: &PursuitConfig) -> Result<SparseCode> {
    if config.iterations == 0 {
        return Err(Error::Config("pursuit needs at least one iteration".into()));
    }
    let d = dict.d();
    if h.len() != d {
        return Err(Error::dim("sparse_encode", &[h.len()], &[d]));
    }
    let mut code = SparseCode {
        indices: Vec::with_capacity(config.iterations),
        coeffs: Vec::new(),
        reconstruction: vec![0.0; d],
        residual: h.to_vec(),
        residual_norm_history: vec![norm(h)],
        ridge: 0.0,
        ridge_events: 0,
    };
    if code.residual_norm() < tol::RESIDUAL_STOP {
        return Ok(code);
    }
    let mut m = Vec::with_capacity(config.iterations * d);
    for _ in 0..config.iterations {
        let j = select_atom(&code.residual, dict, &code.indices, config.selection)?;
        code.indices.push(j);
        m.extend_from_slice(dict.atom(j));
        let k = code.indices.len();
        let ls = least_squares(&m, k, h)?;
        if ls.ridge > 0.0 {
            code.ridge_events += 1;
        }
        code.ridge = ls.ridge;
        code.reconstruction = mat_t_vec(&m, k, d, &ls.coeffs);
        code.coeffs = ls.coeffs;
        for ((r, x), s) in code.residual.iter_mut().zip(h).zip(&code.reconstruction) {
            *r = x - s;
        }
        code.residual_norm_history.push(norm(&code.residual));
        if code.residual_norm() < tol::RESIDUAL_STOP {
            break;
        }
    }
    Ok(code)
}

/// Codes every row of a `T × d` matrix independently. Row `t` of the
/// returned matrix is the reconstruction of `states[t]`.
pub fn sparse_encode_seq(
    states: &Tensor,
    dict: &Dictionary,
    config: &PursuitConfig,
) -> Result<(Tensor, Vec<SparseCode>)> {
    let (t, d) = states.dims2();
    if t == 0 {
        return Err(Error::EmptyInput("sparse_encode_seq"));
    }
    if d != dict.d() {
        return Err(Error::dim("sparse_encode_seq", states.shape(), &[dict.n(), dict.d()]));
    }
    let codes = (0..t)
        .map(|i| sparse_encode(states.row_slice(i), dict, config))
        .collect::<Result<Vec<_>>>()?;
    let data = codes.iter().flat_map(|c| c.reconstruction.iter().copied()).collect();
    Ok((Tensor::matrix(t, d, data)?, codes))
}

/// `B = L⁻¹ M`, so that the frozen-support projection is `P = BᵀB`.
fn whitened_support(code: &SparseCode, dict: &Dictionary) -> Result<(Vec<f64>, GramFactor)> {
    let k = code.indices.len();
    if k == 0 {
        return Err(Error::EmptySupport);
    }
    let d = dict.d();
    let m = gather_atoms(dict, &code.indices);
    let f = factor_with_ridge(&m, k, d, code.ridge)?;
    let mut b = m;
    let mut col = vec![0.0; k];
    for j in 0..d {
        for i in 0..k {
            col[i] = b[i * d + j];
        }
        f.chol.forward(&mut col);
        for i in 0..k {
            b[i * d + j] = col[i];
        }
    }
    Ok((b, f))
}

/// Projection onto the span of the selected atoms, `d × d` row-major.
pub fn projection_matrix(code: &SparseCode, dict: &Dictionary) -> Result<Vec<f64>> {
    let (b, _) = whitened_support(code, dict)?;
    let k = code.indices.len();
    let d = dict.d();
    let mut p = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            p[i * d + j] = (0..k).map(|r| b[r * d + i] * b[r * d + j]).sum();
        }
    }
    Ok(p)
}

/// Gradient of a loss with respect to the coded state, given the gradient
/// with respect to its reconstruction. The support is treated as constant,
/// so this is `P · grad_s`.
pub fn sparse_backward(grad_s: &[f64], code: &SparseCode, dict: &Dictionary) -> Result<Vec<f64>> {
    if grad_s.len() != dict.d() {
        return Err(Error::dim("sparse_backward", &[grad_s.len()], &[dict.d()]));
    }
    let (b, _) = whitened_support(code, dict)?;
    let k = code.indices.len();
    let bg = mat_vec(&b, k, dict.d(), grad_s);
    Ok(mat_t_vec(&b, k, dict.d(), &bg))
}

/// Gradients of a loss with respect to the state and to each selected atom.
///
/// With `G = MMᵀ`, `c = G⁻¹Mh` and `u = G⁻¹Mg`, the atom rows receive
/// `dM = c (g − Mᵀu)ᵀ + u rᵀ` and the state receives `Mᵀu`.
pub fn sparse_backward_full(
    grad_s: &[f64],
    code: &SparseCode,
    dict: &Dictionary,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = code.indices.len();
    if k == 0 {
        return Err(Error::EmptySupport);
    }
    let d = dict.d();
    if grad_s.len() != d {
        return Err(Error::dim("sparse_backward", &[grad_s.len()], &[d]));
    }
    let m = gather_atoms(dict, &code.indices);
    let f = factor_with_ridge(&m, k, d, code.ridge)?;
    let u = f.chol.solve(&mat_vec(&m, k, d, grad_s));
    let grad_h = mat_t_vec(&m, k, d, &u);
    let mut grad_m = vec![0.0; k * d];
    for i in 0..k {
        for j in 0..d {
            grad_m[i * d + j] =
                code.coeffs[i] * (grad_s[j] - grad_h[j]) + u[i] * code.residual[j];
        }
    }
    Ok((grad_h, grad_m))
}
