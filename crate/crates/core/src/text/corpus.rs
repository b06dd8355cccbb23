use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::clean::clean_tokens;
use crate::error::{Error, Result};

/// Topic of a question/answer pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Attractions,
    Amenities,
    Accessibility,
    Activities,
    Packages,
    Ancillary,
    #[default]
    Unspecified,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Attractions,
        Category::Amenities,
        Category::Accessibility,
        Category::Activities,
        Category::Packages,
        Category::Ancillary,
        Category::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Attractions => "attractions",
            Category::Amenities => "amenities",
            Category::Accessibility => "accessibility",
            Category::Activities => "activities",
            Category::Packages => "packages",
            Category::Ancillary => "ancillary",
            Category::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub category: Category,
}

impl QAPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        QAPair {
            question: question.into(),
            answer: answer.into(),
            category: Category::Unspecified,
        }
    }

    /// Cleaned question and answer tokens.
    pub fn tokens(&self) -> Result<(Vec<String>, Vec<String>)> {
        Ok((clean_tokens(&self.question)?, clean_tokens(&self.answer)?))
    }
}

#[derive(Deserialize)]
struct RawRecord {
    question: Option<String>,
    answer: Option<String>,
    category: Option<String>,
}

/// Load a JSON Lines corpus: one `{"question", "answer", "category"?}` object
/// per line. Blank lines are ignored; duplicate pairs are rejected.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<QAPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, &path.display().to_string())
}

pub fn parse_corpus(text: &str, source: &str) -> Result<Vec<QAPair>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_owned(),
        line,
        message,
    };
    let mut pairs = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let question = raw
            .question
            .ok_or_else(|| parse_err(lineno, "missing field `question`".into()))?;
        let answer = raw
            .answer
            .ok_or_else(|| parse_err(lineno, "missing field `answer`".into()))?;
        let category = match raw.category {
            Some(c) => c.parse().map_err(|m| parse_err(lineno, m))?,
            None => Category::Unspecified,
        };
        if let Some(&first_line) = seen.get(&(question.clone(), answer.clone())) {
            return Err(Error::DuplicateRecord {
                path: source.to_owned(),
                line: lineno,
                first_line,
            });
        }
        seen.insert((question.clone(), answer.clone()), lineno);
        pairs.push(QAPair {
            question,
            answer,
            category,
        });
    }
    Ok(pairs)
}

/// 64-bit fingerprint of the parsed corpus, independent of JSON formatting.
pub fn corpus_fingerprint(pairs: &[QAPair]) -> u64 {
    let mut hasher = Sha256::new();
    for p in pairs {
        hasher.update(p.question.as_bytes());
        hasher.update([0x1f]);
        hasher.update(p.answer.as_bytes());
        hasher.update([0x1f]);
        hasher.update(p.category.as_str().as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_records() {
        let text = r#"{"question": "Where is Erfoud?", "answer": "In the Tafilalet.", "category": "attractions"}
{"question": "Is there a bus?", "answer": "Yes, daily."}
"#;
        let pairs = parse_corpus(text, "mem").unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].category, Category::Attractions);
        assert_eq!(pairs[1].category, Category::Unspecified);
    }

    #[test]
    fn missing_answer_reports_line() {
        let text = "{\"question\": \"a\", \"answer\": \"b\"}\n\n{\"question\": \"c\"}\n";
        match parse_corpus(text, "mem") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("answer"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_corpus(
            "{\"question\": \"a\", \"answer\": \"b\"}\nnot json\n",
            "c.jsonl",
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("c.jsonl:2:"), "{err}");
    }

    #[test]
    fn unknown_category_is_rejected() {
        let err = parse_corpus(
            r#"{"question": "a", "answer": "b", "category": "food"}"#,
            "m",
        )
        .unwrap_err();
        assert!(err.to_string().contains("food"));
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let text = "{\"question\": \"a\", \"answer\": \"b\"}\n{\"question\": \"x\", \"answer\": \"y\"}\n{\"question\": \"a\", \"answer\": \"b\"}\n";
        match parse_corpus(text, "mem") {
            Err(Error::DuplicateRecord {
                line, first_line, ..
            }) => {
                assert_eq!((line, first_line), (3, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fingerprint_ignores_formatting_but_not_content() {
        let a = parse_corpus(r#"{"question": "a", "answer": "b"}"#, "m").unwrap();
        let b = parse_corpus(r#"{ "answer":"b","question":"a" }"#, "m").unwrap();
        let c = parse_corpus(r#"{"question": "a", "answer": "c"}"#, "m").unwrap();
        assert_eq!(corpus_fingerprint(&a), corpus_fingerprint(&b));
        assert_ne!(corpus_fingerprint(&a), corpus_fingerprint(&c));
    }
}
