use log::warn;

use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Embedding matrix viewed as an overcomplete dictionary: row `i` is the
/// atom for word `i`. Excluded atoms (e.g. padding) are never selected.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: Vec<f64>,
    n: usize,
    d: usize,
    excluded: Vec<bool>,
}

impl Dictionary {
    pub fn new(atoms: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        Dictionary::with_excluded(atoms, n, d, &[])
    }

    pub fn with_excluded(atoms: Vec<f64>, n: usize, d: usize, excluded: &[usize]) -> Result<Self> {
        if atoms.len() != n * d {
            return Err(Error::dim("dictionary", &[n, d], &[atoms.len()]));
        }
        if n == 0 || d == 0 {
            return Err(Error::EmptyInput("dictionary"));
        }
        let mut mask = vec![false; n];
        for &i in excluded {
            if i >= n {
                return Err(Error::Config(format!("excluded atom {i} out of range {n}")));
            }
            mask[i] = true;
        }
        let dict = Dictionary {
            atoms,
            n,
            d,
            excluded: mask,
        };
        for i in 0..n {
            if !dict.excluded[i] && dict.atom(i).iter().all(|&x| x == 0.0) {
                return Err(Error::Config(format!("dictionary atom {i} is the zero vector")));
            }
        }
        if n < d {
            warn!("dictionary is not overcomplete: {n} atoms of width {d}");
        }
        Ok(dict)
    }

    /// Builds a dictionary from an `N × d` tensor.
    pub fn from_tensor(atoms: &Tensor, excluded: &[usize]) -> Result<Self> {
        let (n, d) = atoms.dims2();
        Dictionary::with_excluded(atoms.data().to_vec(), n, d, excluded)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.d..(i + 1) * self.d]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.excluded[i]
    }

    pub fn selectable(&self) -> usize {
        self.excluded.iter().filter(|&&e| !e).count()
    }
}
