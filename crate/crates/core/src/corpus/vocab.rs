use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use super::PostResponsePair;
use crate::error::{NrmError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Post,
    Response,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Post => "post",
            Side::Response => "response",
        })
    }
}

/// Token/id bijection for one side of the corpus. Ids 0..4 are the
/// reserved `<pad> <s> </s> <unk>` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(NrmError::InvalidArgument(format!("duplicate token {t:?} in vocabulary")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Reserved tokens followed by `content` in order.
    pub fn with_content<S: AsRef<str>>(content: &[S]) -> Result<Self> {
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(content.iter().map(|s| s.as_ref().to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, unknown tokens to `UNK`. With `add_bos_eos` the
    /// result is framed as `<s> ... </s>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], add_bos_eos: bool) -> Vec<usize> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        if add_bos_eos {
            ids.push(BOS);
        }
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)));
        if add_bos_eos {
            ids.push(EOS);
        }
        ids
    }

    /// Inverse of `encode`; `<s>`, `</s>` and `<pad>` are dropped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| !matches!(i, PAD | BOS | EOS))
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| NrmError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NrmError::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_owned).collect();
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(NrmError::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    msg: format!("expected reserved token {r}"),
                });
            }
        }
        Self::from_tokens(tokens).map_err(|e| NrmError::Parse {
            path: path.to_owned(),
            line: 0,
            msg: e.to_string(),
        })
    }
}

/// Keeps the `cap` most frequent tokens of one side, ties broken by first
/// occurrence. Returns the vocabulary and the fraction of token
/// occurrences it covers.
pub fn build_vocab(pairs: &[PostResponsePair], side: Side, cap: usize) -> Result<(Vocabulary, f64)> {
    if cap == 0 {
        return Err(NrmError::InvalidArgument("vocabulary cap must be at least 1".into()));
    }
    // token -> (count, first position)
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut total = 0usize;
    let stream = pairs.iter().flat_map(|p| match side {
        Side::Post => p.post.iter(),
        Side::Response => p.response.iter(),
    });
    for tok in stream {
        total += 1;
        let next = counts.len();
        counts.entry(tok.as_str()).or_insert((0, next)).0 += 1;
    }
    if total == 0 {
        return Err(NrmError::InvalidArgument(format!("no {side} tokens in corpus")));
    }

    let reserved_hits: usize = RESERVED.iter().filter_map(|r| counts.remove(r)).map(|c| c.0).sum();
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(cap);

    let covered = reserved_hits + ranked.iter().map(|r| r.1).sum::<usize>();
    let content: Vec<&str> = ranked.iter().map(|r| r.0).collect();
    Ok((Vocabulary::with_content(&content)?, covered as f64 / total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp_corpus(lines: &[&str]) -> Vec<PostResponsePair> {
        lines.iter().map(|r| PostResponsePair::new("p", r)).collect()
    }

    #[test]
    fn most_frequent_kept_with_coverage() {
        let (v, cov) = build_vocab(&resp_corpus(&["a a b"]), Side::Response, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<s>", "</s>", "<unk>", "a"]);
        assert!((cov - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_first_occurrence() {
        let (v, _) = build_vocab(&resp_corpus(&["x x b c"]), Side::Response, 2).unwrap();
        assert_eq!(v.id("b"), Some(5));
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn sides_are_separate() {
        let pairs = vec![PostResponsePair::new("only post", "only response")];
        let (vp, _) = build_vocab(&pairs, Side::Post, 10).unwrap();
        let (vr, _) = build_vocab(&pairs, Side::Response, 10).unwrap();
        assert!(vp.id("post").is_some() && vp.id("response").is_none());
        assert!(vr.id("response").is_some() && vr.id("post").is_none());
    }

    #[test]
    fn coverage_matches_brute_force_on_zipf_corpus() {
        // token k appears floor(60 / k) times
        let mut stream = Vec::new();
        for k in 1..=25usize {
            for _ in 0..(60 / k) {
                stream.push(format!("w{k}"));
            }
        }
        let pairs = resp_corpus(&[&stream.join(" ")]);
        for cap in [1, 3, 10, 25, 40] {
            let (v, cov) = build_vocab(&pairs, Side::Response, cap).unwrap();
            let kept = stream.iter().filter(|t| v.id(t).is_some()).count();
            assert!((cov - kept as f64 / stream.len() as f64).abs() < 1e-15, "cap {cap}");
            assert!(v.len() <= cap + 4);
        }
        let (_, full) = build_vocab(&pairs, Side::Response, 1000).unwrap();
        assert_eq!(full, 1.0);
    }

    #[test]
    fn encode_maps_unknown_and_frames() {
        let v = Vocabulary::with_content(&["hi", "there"]).unwrap();
        assert_eq!(v.encode(&["hi"], false), vec![4]);
        assert_eq!(v.encode(&["nope"], false), vec![UNK]);
        assert_eq!(v.encode(&["hi", "there"], true), vec![BOS, 4, 5, EOS]);
        let x = ["there", "hi", "there"];
        assert_eq!(v.decode(&v.encode(&x, true)), x);
    }

    #[test]
    fn empty_corpus_and_zero_cap_error() {
        assert!(build_vocab(&[], Side::Post, 10).is_err());
        assert!(build_vocab(&resp_corpus(&["a"]), Side::Response, 0).is_err());
    }

    #[test]
    fn file_round_trip_and_reserved_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = Vocabulary::with_content(&["a", "b"]).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);

        fs::write(&path, "<pad>\n<s>\n<unk>\n</s>\na\n").unwrap();
        assert!(matches!(Vocabulary::load(&path), Err(NrmError::Parse { line: 3, .. })));
    }
}
