use crate::error::{Error, Result};

/// Normalize an utterance: lowercase, strip punctuation and special
/// characters, collapse whitespace.
///
/// Only `[a-z0-9]`, spaces, hyphens and apostrophes survive, and a hyphen or
/// apostrophe is kept only when both neighbours are alphanumeric, so
/// `"draa-tafilalet?"` becomes `"draa-tafilalet"` while `"rock - climbing"`
/// becomes `"rock climbing"`.
pub fn clean_text(raw: &str) -> Result<String> {
    let kept: Vec<char> = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '\'' {
                Some(c)
            } else {
                None
            }
        })
        .collect();

    let is_alnum = |c: Option<&char>| c.is_some_and(|c| c.is_ascii_alphanumeric());
    let mut out = String::with_capacity(kept.len());
    let mut pending_space = false;
    for (i, &c) in kept.iter().enumerate() {
        match c {
            ' ' => pending_space = !out.is_empty(),
            '-' | '\'' if !(i > 0 && is_alnum(kept.get(i - 1)) && is_alnum(kept.get(i + 1))) => {}
            _ => {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.push(c);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    Ok(out)
}

/// Split a cleaned utterance on spaces.
pub fn tokenize(clean: &str) -> Vec<String> {
    clean
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Clean and tokenize in one step.
pub fn clean_tokens(raw: &str) -> Result<Vec<String>> {
    clean_text(raw).map(|c| tokenize(&c))
}
