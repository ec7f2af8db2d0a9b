use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{NrmError, Result};

/// One post and one of its responses, both already tokenized.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PostResponsePair {
    pub post: Vec<String>,
    pub response: Vec<String>,
}

impl PostResponsePair {
    pub fn new(post: &str, response: &str) -> Self {
        PostResponsePair {
            post: tokenize(post),
            response: tokenize(response),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub pairs: usize,
    pub blank_lines: usize,
}

fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Reads a `post<TAB>response` file. Blank lines are skipped and counted.
pub fn load_pairs(path: &Path) -> Result<(Vec<PostResponsePair>, LoadReport)> {
    let bytes = fs::read(path).map_err(|e| NrmError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        NrmError::Parse {
            path: path.to_owned(),
            line,
            msg: "invalid UTF-8".into(),
        }
    })?;
    parse_pairs(&text, path)
}

pub fn parse_pairs(text: &str, origin: &Path) -> Result<(Vec<PostResponsePair>, LoadReport)> {
    let mut pairs = Vec::new();
    let mut report = LoadReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            report.blank_lines += 1;
            continue;
        }
        let Some((post, response)) = line.split_once('\t') else {
            return Err(NrmError::Parse {
                path: origin.to_owned(),
                line: i + 1,
                msg: "missing TAB between post and response".into(),
            });
        };
        pairs.push(PostResponsePair::new(post, response));
    }
    report.pairs = pairs.len();
    Ok((pairs, report))
}

pub fn write_pairs(path: &Path, pairs: &[PostResponsePair]) -> Result<()> {
    let mut out = Vec::new();
    for p in pairs {
        writeln!(out, "{}\t{}", p.post.join(" "), p.response.join(" ")).expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| NrmError::io(path, e))
}
