use crate::error::{Error, Result};
use crate::tensor::{argmax, log_sum_exp, Tensor};
use crate::text::vocab::{END_TOKEN, PAD_TOKEN, START_TOKEN};

fn check(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<usize> {
    if logits.rows() != targets.len() || targets.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "masked metric",
            left: logits.shape().to_vec(),
            right: vec![targets.len(), mask.len()],
        });
    }
    let real = mask.iter().filter(|&&m| m).count();
    if real == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(real)
}

/// Mean of `−log softmax(logits[t])[target[t]]` over unmasked positions.
pub fn masked_cross_entropy(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<f64> {
    let real = check(logits, targets, mask)?;
    let total: f64 = (0..targets.len())
        .filter(|&t| mask[t])
        .map(|t| {
            let row = logits.row(t);
            log_sum_exp(row) - row[targets[t]]
        })
        .sum();
    Ok(total / real as f64)
}

/// Fraction of unmasked positions whose argmax (lowest id on ties) is the target.
pub fn token_accuracy(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<f64> {
    let real = check(logits, targets, mask)?;
    let hits = (0..targets.len())
        .filter(|&t| mask[t] && argmax(logits.row(t)) == targets[t])
        .count();
    Ok(hits as f64 / real as f64)
}

/// Drop PAD, START and END. UNK is kept: it is a real prediction.
pub fn strip_specials<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| ![PAD_TOKEN, START_TOKEN, END_TOKEN].contains(t))
        .map(str::to_owned)
        .collect()
}

/// Fraction of pairs whose token sequences agree after special-stripping.
pub fn exact_match_accuracy<S: AsRef<str>>(
    predictions: &[Vec<S>],
    references: &[Vec<S>],
) -> Result<f64> {
    if predictions.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} references",
            predictions.len(),
            references.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| strip_specials(p) == strip_specials(r))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn logits(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let l = logits(&[vec![0.0; 4]]);
        let loss = masked_cross_entropy(&l, &[2], &[true]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn spike_on_target_gives_near_zero_loss() {
        let l = logits(&[vec![0.0, 1e4, 0.0]]);
        assert!(masked_cross_entropy(&l, &[1], &[true]).unwrap() < 1e-12);
    }

    #[test]
    fn masked_position_is_ignored() {
        let l = logits(&[vec![0.3, -1.0, 2.0], vec![5.0, 0.0, 0.0]]);
        let both = masked_cross_entropy(&l, &[2, 1], &[true, false]).unwrap();
        let single = masked_cross_entropy(&logits(&[vec![0.3, -1.0, 2.0]]), &[2], &[true]).unwrap();
        assert_eq!(both, single);
    }

    #[test]
    fn all_masked_is_error() {
        let l = logits(&[vec![0.0, 1.0]]);
        assert!(masked_cross_entropy(&l, &[0], &[false]).is_err());
        assert!(token_accuracy(&l, &[0], &[false]).is_err());
    }

    #[test]
    fn token_accuracy_cases() {
        let l = logits(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
        ]);
        assert_eq!(token_accuracy(&l, &[0, 1, 0, 0], &[true; 4]).unwrap(), 1.0);
        assert_eq!(token_accuracy(&l, &[1, 0, 1, 1], &[true; 4]).unwrap(), 0.0);
        let acc = token_accuracy(&l, &[0, 1, 1, 0], &[true, true, true, false]).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-15);
        // tie resolves to id 0
        assert_eq!(
            token_accuracy(&l, &[0, 0, 0, 0], &[false, false, false, true]).unwrap(),
            1.0
        );
    }

    #[test]
    fn exact_match_cases() {
        let r = vec![vec!["a", "b"], vec!["c"]];
        assert_eq!(exact_match_accuracy(&r, &r).unwrap(), 1.0);
        let p = vec![vec!["x"], vec!["y"]];
        assert_eq!(exact_match_accuracy(&p, &r).unwrap(), 0.0);
        let padded = vec![vec!["a", "b", "<PAD>"]];
        assert_eq!(
            exact_match_accuracy(&padded, &[vec!["a", "b"]]).unwrap(),
            1.0
        );
        assert!(exact_match_accuracy(&p, &r[..1]).is_err());
    }

    #[test]
    fn unk_is_not_stripped() {
        assert_eq!(
            strip_specials(&["<START>", "a", "<UNK>", "<END>", "<PAD>"]),
            vec!["a", "<UNK>"]
        );
    }

    proptest! {
        #[test]
        fn stripping_is_idempotent(tokens in proptest::collection::vec(prop_oneof!["<PAD>", "<START>", "<END>", "<UNK>", "[a-c]"], 0..12)) {
            let once = strip_specials(&tokens);
            prop_assert_eq!(strip_specials(&once), once);
        }

        #[test]
        fn metrics_are_bounded(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..6), seed in any::<u64>()) {
            let n = rows.len();
            let l = Tensor::from_rows(&rows).unwrap();
            let targets: Vec<usize> = (0..n).map(|i| ((seed >> i) % 3) as usize).collect();
            let mut mask: Vec<bool> = (0..n).map(|i| (seed >> (i + 8)) & 1 == 1).collect();
            mask[0] = true;
            let acc = token_accuracy(&l, &targets, &mask).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert!(masked_cross_entropy(&l, &targets, &mask).unwrap() >= 0.0);
        }
    }
}
