//! Corpus preprocessing: cleaning, tokenization, vocabulary, padding,
//! embeddings and the train/validation/test split.

mod clean;
mod corpus;
mod embedding;
mod encode;
mod split;
pub mod vocab;

pub use clean::{clean_text, clean_tokens, tokenize};
pub use corpus::{corpus_fingerprint, load_corpus, parse_corpus, Category, QAPair};
pub use embedding::{load_embeddings, read_embeddings, EmbeddingTable};
pub use encode::{encode_example, encode_sequence, EncodedExample, EncodedSequence, Role};
pub use split::{split_dataset, split_indices, Split, SplitPart, SplitRatios};
pub use vocab::Vocabulary;

use crate::error::Result;

/// A corpus after cleaning, vocabulary construction and padding, in the
/// original record order.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub examples: Vec<EncodedExample>,
    pub fingerprint: u64,
}

/// Clean and tokenize every pair, build the vocabulary over all of them, and
/// encode each pair to fixed lengths.
pub fn prepare_corpus(
    pairs: &[QAPair],
    min_count: usize,
    question_len: usize,
    answer_len: usize,
) -> Result<PreparedCorpus> {
    let tokenized = pairs
        .iter()
        .map(QAPair::tokens)
        .collect::<Result<Vec<_>>>()?;
    let vocab = Vocabulary::build(
        tokenized
            .iter()
            .flat_map(|(q, a)| [q.as_slice(), a.as_slice()]),
        min_count,
    )?;
    let examples = tokenized
        .iter()
        .map(|(q, a)| encode_example(q, a, &vocab, question_len, answer_len))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedCorpus {
        vocab,
        examples,
        fingerprint: corpus_fingerprint(pairs),
    })
}
