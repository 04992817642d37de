use serde::{Deserialize, Serialize};

use super::pursuit::SparseCode;
use crate::error::Result;

/// One line of the sparse-code debug dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCodeRecord {
    pub step: usize,
    pub indices: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub residual_norm_history: Vec<f64>,
}

impl SparseCodeRecord {
    pub fn new(step: usize, code: &SparseCode) -> Self {
        SparseCodeRecord {
            step,
            indices: code.indices.clone(),
            coeffs: code.coeffs.clone(),
            residual_norm_history: code.residual_norm_history.clone(),
        }
    }
}

/// Renders one JSON object per state, newline separated.
pub fn to_json_lines(codes: &[SparseCode]) -> Result<String> {
    let mut out = String::new();
    for (step, code) in codes.iter().enumerate() {
        out.push_str(&serde_json::to_string(&SparseCodeRecord::new(step, code))?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{sparse_encode, Dictionary, PursuitConfig};

    #[test]
    fn dump_has_one_record_per_state() {
        let dict = Dictionary::new(vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 3, 2).unwrap();
        let codes: Vec<_> = [[1.0, 0.2], [0.1, 0.9]]
            .iter()
            .map(|h| sparse_encode(h, &dict, &PursuitConfig::new(2)).unwrap())
            .collect();
        let text = to_json_lines(&codes).unwrap();
        let records: Vec<SparseCodeRecord> =
            text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].step, 1);
        assert_eq!(records[0].indices, codes[0].indices);
    }
}
