use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, END, PAD, START};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Question,
    Answer,
}

/// One side of a padded training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    /// Question ids, or START-prefixed decoder inputs for answers.
    pub ids: Vec<usize>,
    /// END-suffixed decoder targets; `None` for questions.
    pub targets: Option<Vec<usize>>,
    pub mask: Vec<bool>,
}

/// A question/answer pair as fixed-length id sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub question_ids: Vec<usize>,
    pub question_mask: Vec<bool>,
    pub answer_input_ids: Vec<usize>,
    pub answer_target_ids: Vec<usize>,
    pub answer_mask: Vec<bool>,
}

impl EncodedExample {
    pub fn question_len(&self) -> usize {
        self.question_ids.len()
    }

    pub fn answer_len(&self) -> usize {
        self.answer_input_ids.len()
    }

    /// Target ids up to (not including) END: the reference answer.
    pub fn reference_ids(&self) -> Vec<usize> {
        self.answer_target_ids
            .iter()
            .zip(&self.answer_mask)
            .take_while(|&(&id, &m)| m && id != END)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Number of real (unmasked) target positions.
    pub fn target_count(&self) -> usize {
        self.answer_mask.iter().filter(|&&m| m).count()
    }
}

/// Map tokens to ids and pad or truncate to exactly `len` positions.
///
/// Answers reserve one slot for START on the input side and END on the
/// target side, so at most `len - 1` content tokens are kept.
pub fn encode_sequence(
    tokens: &[String],
    vocab: &Vocabulary,
    len: usize,
    role: Role,
) -> Result<EncodedSequence> {
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "sequence length must be at least 2, got {len}"
        )));
    }
    let ids = tokens.iter().map(|t| vocab.id(t));
    match role {
        Role::Question => {
            let mut out: Vec<usize> = ids.take(len).collect();
            let real = out.len();
            out.resize(len, PAD);
            Ok(EncodedSequence {
                ids: out,
                targets: None,
                mask: (0..len).map(|i| i < real).collect(),
            })
        }
        Role::Answer => {
            let content: Vec<usize> = ids.take(len - 1).collect();
            let real = content.len() + 1;
            let mut input = Vec::with_capacity(len);
            input.push(START);
            input.extend_from_slice(&content);
            input.resize(len, PAD);
            let mut target = content;
            target.push(END);
            target.resize(len, PAD);
            Ok(EncodedSequence {
                ids: input,
                targets: Some(target),
                mask: (0..len).map(|i| i < real).collect(),
            })
        }
    }
}

pub fn encode_example(
    question: &[String],
    answer: &[String],
    vocab: &Vocabulary,
    question_len: usize,
    answer_len: usize,
) -> Result<EncodedExample> {
    let q = encode_sequence(question, vocab, question_len, Role::Question)?;
    let a = encode_sequence(answer, vocab, answer_len, Role::Answer)?;
    Ok(EncodedExample {
        question_ids: q.ids,
        question_mask: q.mask,
        answer_input_ids: a.ids,
        answer_target_ids: a.targets.expect("answers carry targets"),
        answer_mask: a.mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::vocab::UNK;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        let words: Vec<String> = "hi ok one two three four five six seven eight nine ten"
            .split(' ')
            .map(str::to_owned)
            .collect();
        Vocabulary::build([words.as_slice()], 1).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn question_is_padded() {
        let v = vocab();
        let e = encode_sequence(&toks("hi"), &v, 4, Role::Question).unwrap();
        assert_eq!(e.ids, vec![v.id("hi"), PAD, PAD, PAD]);
        assert_eq!(e.mask, vec![true, false, false, false]);
        assert!(e.targets.is_none());
    }

    #[test]
    fn question_is_truncated() {
        let v = vocab();
        let t = toks("one two three four five six seven eight nine ten");
        let e = encode_sequence(&t, &v, 4, Role::Question).unwrap();
        assert_eq!(e.ids, t[..4].iter().map(|w| v.id(w)).collect::<Vec<_>>());
        assert!(e.mask.iter().all(|&m| m));
    }

    #[test]
    fn answer_is_shifted() {
        let v = vocab();
        let ok = v.id("ok");
        let e = encode_sequence(&toks("ok"), &v, 4, Role::Answer).unwrap();
        assert_eq!(e.ids, vec![START, ok, PAD, PAD]);
        assert_eq!(e.targets.unwrap(), vec![ok, END, PAD, PAD]);
        assert_eq!(e.mask, vec![true, true, false, false]);
    }

    #[test]
    fn long_answer_keeps_len_minus_one_tokens() {
        let v = vocab();
        let e = encode_sequence(&toks("one two three four five"), &v, 4, Role::Answer).unwrap();
        assert_eq!(e.ids[0], START);
        assert_eq!(e.targets.as_ref().unwrap()[3], END);
        assert_eq!(&e.ids[1..], &e.targets.unwrap()[..3]);
        assert!(e.mask.iter().all(|&m| m));
    }

    #[test]
    fn unknown_maps_to_unk() {
        let v = vocab();
        let e = encode_sequence(&toks("zebra"), &v, 3, Role::Question).unwrap();
        assert_eq!(e.ids[0], UNK);
        assert!(e.mask[0]);
    }

    #[test]
    fn rejects_len_below_two() {
        assert!(encode_sequence(&toks("hi"), &vocab(), 1, Role::Question).is_err());
    }

    #[test]
    fn reference_ids_stop_at_end() {
        let v = vocab();
        let e = encode_example(&toks("hi"), &toks("ok one"), &v, 3, 5).unwrap();
        assert_eq!(e.reference_ids(), vec![v.id("ok"), v.id("one")]);
        assert_eq!(e.target_count(), 3);
    }

    proptest! {
        #[test]
        fn output_length_is_exact(n in 0usize..30, len in 2usize..12, answer in any::<bool>()) {
            let v = vocab();
            let t: Vec<String> = (0..n).map(|i| if i % 2 == 0 { "hi".into() } else { "xyz".into() }).collect();
            let role = if answer { Role::Answer } else { Role::Question };
            let e = encode_sequence(&t, &v, len, role).unwrap();
            prop_assert_eq!(e.ids.len(), len);
            prop_assert_eq!(e.mask.len(), len);
            for (id, m) in e.ids.iter().zip(&e.mask) {
                prop_assert!(*id < v.len());
                if role == Role::Question {
                    prop_assert_eq!(*m, *id != PAD);
                }
            }
            if let Some(tg) = e.targets {
                prop_assert_eq!(tg.len(), len);
                for (t, m) in tg.iter().zip(&e.mask) {
                    prop_assert_eq!(*m, *t != PAD);
                }
                // targets are inputs shifted left by one
                let real = e.mask.iter().filter(|&&m| m).count();
                prop_assert_eq!(&tg[..real - 1], &e.ids[1..real]);
                prop_assert_eq!(tg[real - 1], END);
            }
        }
    }
}
