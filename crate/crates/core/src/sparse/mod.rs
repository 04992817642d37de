//! Sparse representations of hidden states over the embedding dictionary.

mod dictionary;
mod dump;
mod linalg;
mod pursuit;

pub use dictionary::Dictionary;
pub use dump::{to_json_lines, SparseCodeRecord};
pub use pursuit::{
    least_squares, projection_matrix, select_atom, sparse_backward, sparse_backward_full,
    sparse_encode, sparse_encode_seq, LeastSquares, PursuitConfig, Selection, SparseCode,
};
