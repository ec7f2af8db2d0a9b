use std::collections::{BTreeSet, HashMap, HashSet};

use super::PostResponsePair;

/// Filtering rules for raw crawled pairs.
///
/// A response is *trivial* when it has fewer than `min_response_tokens`
/// tokens or its space-joined text is in `stoplist`. Advertisement
/// filtering is a proxy: a post keeps at most `max_url_responses` responses
/// that carry a URL token, and a response string attached to more than
/// `max_fanout` distinct posts is dropped everywhere.
#[derive(Debug, Clone)]
pub struct CleanConfig {
    pub stoplist: BTreeSet<String>,
    pub min_response_tokens: usize,
    pub max_url_responses: usize,
    pub max_fanout: usize,
    pub per_post_cap: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        let stoplist = ["wow", "haha", "hahaha", "lol", "ok", "okay", "呵呵", "哈哈", "嗯", "好"]
            .into_iter()
            .map(String::from)
            .collect();
        CleanConfig {
            stoplist,
            min_response_tokens: 2,
            max_url_responses: 0,
            max_fanout: 10,
            per_post_cap: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub input: usize,
    pub kept: usize,
    pub empty: usize,
    pub trivial: usize,
    pub url: usize,
    pub fanout: usize,
    pub cap: usize,
}

fn has_url(tokens: &[String]) -> bool {
    tokens.iter().any(|t| {
        let t = t.to_ascii_lowercase();
        t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www.")
    })
}

/// Applies the rules in order: empty side, trivial response, URL cap per
/// post, duplicate fan-out, first-`per_post_cap` responses per post.
/// Input order is preserved among survivors.
pub fn clean_corpus(
    pairs: &[PostResponsePair],
    config: &CleanConfig,
) -> (Vec<PostResponsePair>, CleanReport) {
    let mut report = CleanReport {
        input: pairs.len(),
        ..Default::default()
    };

    let mut kept: Vec<&PostResponsePair> = Vec::with_capacity(pairs.len());
    for p in pairs {
        if p.post.is_empty() || p.response.is_empty() {
            report.empty += 1;
        } else if p.response.len() < config.min_response_tokens
            || config.stoplist.contains(&p.response.join(" "))
        {
            report.trivial += 1;
        } else {
            kept.push(p);
        }
    }

    let mut url_seen: HashMap<&[String], usize> = HashMap::new();
    kept.retain(|p| {
        if !has_url(&p.response) {
            return true;
        }
        let n = url_seen.entry(&p.post).or_default();
        *n += 1;
        if *n > config.max_url_responses {
            report.url += 1;
            false
        } else {
            true
        }
    });

    let mut fanout: HashMap<&[String], HashSet<&[String]>> = HashMap::new();
    for p in &kept {
        fanout.entry(&p.response).or_default().insert(&p.post);
    }
    kept.retain(|p| {
        if fanout[p.response.as_slice()].len() > config.max_fanout {
            report.fanout += 1;
            false
        } else {
            true
        }
    });

    let mut per_post: HashMap<&[String], usize> = HashMap::new();
    kept.retain(|p| {
        let n = per_post.entry(&p.post).or_default();
        *n += 1;
        if *n > config.per_post_cap {
            report.cap += 1;
            false
        } else {
            true
        }
    });

    let out: Vec<PostResponsePair> = kept.into_iter().cloned().collect();
    report.kept = out.len();
    (out, report)
}
