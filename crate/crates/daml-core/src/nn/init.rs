use std::io::BufRead;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Half-width of the uniform init interval.
pub const INIT_RANGE: f64 = 0.1;

pub fn uniform_tensor(rng: &mut impl Rng, shape: Vec<usize>, half_range: f64) -> Tensor {
    let elems: usize = shape.iter().product();
    let data = (0..elems)
        .map(|_| if half_range == 0.0 { 0.0 } else { rng.gen_range(-half_range..half_range) })
        .collect();
    Tensor::new(shape, data).expect("uniform_tensor shape")
}

/// Overwrite embedding rows from a whitespace-separated text file: one row
/// per line, token followed by `embed_dim` reals. Tokens missing from the
/// vocabulary are skipped and keep their random init. Returns the number of
/// rows applied.
pub fn apply_pretrained_embeddings<R: BufRead>(
    table: &mut Tensor,
    embed_dim: usize,
    lookup: impl Fn(&str) -> Option<usize>,
    reader: R,
) -> Result<usize> {
    if table.shape().len() != 2 || table.shape()[1] != embed_dim {
        return Err(Error::ShapeMismatch {
            op: "apply_pretrained_embeddings",
            detail: format!("table {:?} vs embed dim {embed_dim}", table.shape()),
        });
    }
    let rows = table.shape()[0];
    let mut applied = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a first field");
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad embedding value '{f}': {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != embed_dim {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected {embed_dim} values, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "non-finite embedding value".to_string(),
            });
        }
        if let Some(row) = lookup(token) {
            if row >= rows {
                return Err(Error::TokenOutOfRange { id: row as u32, vocab: rows });
            }
            table.data_mut()[row * embed_dim..(row + 1) * embed_dim].copy_from_slice(&values);
            applied += 1;
        }
    }
    Ok(applied)
}
