use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Word vectors indexed by vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: Tensor,
    pub trainable: bool,
    /// Fraction of non-special vocabulary tokens found in the embedding file.
    pub coverage: f64,
}

impl EmbeddingTable {
    /// Every row drawn uniformly from `[-0.5/dim, 0.5/dim]`, PAD row zero.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dim must be positive".into(),
            ));
        }
        let bound = 0.5 / dim as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<f64> = (0..vocab.len() * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        data[PAD * dim..(PAD + 1) * dim].fill(0.0);
        Ok(EmbeddingTable {
            dim,
            vectors: Tensor::new(vec![vocab.len(), dim], data)?,
            trainable: true,
            coverage: 0.0,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.rows()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }
}

/// Load GloVe text-format vectors (`token v1 ... vd` per line) for the tokens
/// in `vocab`. Tokens missing from the file keep their seeded random
/// initialization; the PAD row stays zero.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(
        BufReader::new(file),
        &path.display().to_string(),
        vocab,
        dim,
        seed,
    )
}

pub fn read_embeddings(
    reader: impl BufRead,
    source: &str,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::random(vocab, dim, seed)?;
    let mut filled = HashSet::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            path: source.to_owned(),
            line: lineno,
            message: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            if first {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: values.len(),
                    line: lineno,
                });
            }
            return Err(Error::Parse {
                path: source.to_owned(),
                line: lineno,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        first = false;
        let Some(id) = vocab.get(token) else { continue };
        if id == PAD || !filled.insert(id) {
            continue;
        }
        let row = table.vectors.row_mut(id);
        for (slot, v) in row.iter_mut().zip(&values) {
            *slot = v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: source.to_owned(),
                    line: lineno,
                    message: format!("invalid float {v:?}"),
                })?;
        }
    }
    let regular = vocab.len().saturating_sub(4);
    let found = filled
        .iter()
        .filter(|&&id| !Vocabulary::is_special(id))
        .count();
    table.coverage = if regular == 0 {
        0.0
    } else {
        found as f64 / regular as f64
    };
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn vocab() -> Vocabulary {
        let words = ["hello".to_string(), "world".to_string()];
        Vocabulary::build([&words[..]], 1).unwrap()
    }

    #[test]
    fn reads_matching_rows_exactly() {
        let v = vocab();
        let t = read_embeddings(Cursor::new("hello 0.1 0.2\n"), "g", &v, 2, 7).unwrap();
        assert_eq!(t.row(v.id("hello")), &[0.1, 0.2]);
        assert_eq!(t.row(PAD), &[0.0, 0.0]);
        assert!((t.coverage - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_rows_are_bounded_and_seeded() {
        let v = vocab();
        let a = read_embeddings(Cursor::new("hello 0.1 0.2\n"), "g", &v, 2, 7).unwrap();
        let b = read_embeddings(Cursor::new("hello 0.1 0.2\n"), "g", &v, 2, 7).unwrap();
        let world = a.row(v.id("world"));
        assert!(world.iter().all(|x| x.abs() <= 0.25));
        assert_eq!(world, b.row(v.id("world")));
        let bits = |t: &EmbeddingTable| {
            t.vectors
                .data()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn wrong_dimension_on_first_line() {
        let err =
            read_embeddings(Cursor::new("hello 0.1 0.2 0.3\n"), "g", &vocab(), 2, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::DimMismatch {
                expected: 2,
                found: 3,
                line: 1
            }
        ));
    }

    #[test]
    fn ragged_line_reports_line_number() {
        let text = "hello 0.1 0.2\nworld 0.3\n";
        match read_embeddings(Cursor::new(text), "g", &vocab(), 2, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_line_number() {
        let text = "other 1 2\nhello 0.1 abc\n";
        match read_embeddings(Cursor::new(text), "g", &vocab(), 2, 1) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
