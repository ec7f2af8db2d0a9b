//! Human-evaluation statistics: annotation score summaries, Fleiss' kappa
//! and the Friedman rank test.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{NrmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub name: String,
    pub score: f64,
}

/// Unsuitable (0), Neutral (+1), Suitable (+2).
pub fn default_categories() -> Vec<Category> {
    [("Unsuitable", 0.0), ("Neutral", 1.0), ("Suitable", 2.0)]
        .into_iter()
        .map(|(name, score)| Category {
            name: name.to_string(),
            score,
        })
        .collect()
}

/// N items × k raters, each cell a category index.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    pub categories: Vec<Category>,
    pub items: Vec<String>,
    pub raters: Vec<String>,
    labels: Vec<Vec<usize>>,
}

impl AnnotationTable {
    pub fn new(categories: Vec<Category>, labels: Vec<Vec<usize>>) -> Result<Self> {
        let k = labels.first().map_or(0, Vec::len);
        let items = (0..labels.len()).map(|i| i.to_string()).collect();
        let raters = (0..k).map(|r| r.to_string()).collect();
        Self::validated(categories, items, raters, labels)
    }

    fn validated(
        categories: Vec<Category>,
        items: Vec<String>,
        raters: Vec<String>,
        labels: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if categories.is_empty() {
            return Err(NrmError::InvalidArgument("no categories".into()));
        }
        for (i, row) in labels.iter().enumerate() {
            if row.len() != raters.len() {
                return Err(NrmError::InvalidArgument(format!(
                    "item {} has {} labels, expected {}",
                    items[i],
                    row.len(),
                    raters.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&c| c >= categories.len()) {
                return Err(NrmError::InvalidArgument(format!("category index {bad} out of range")));
            }
        }
        Ok(AnnotationTable {
            categories,
            items,
            raters,
            labels,
        })
    }

    /// Reads `item,rater,label` CSV. A label is a category name
    /// (case-insensitive) or its score. Every item needs a label from
    /// every rater.
    pub fn from_csv<R: Read>(input: R, categories: Vec<Category>) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != ["item", "rater", "label"] {
            return Err(NrmError::InvalidArgument(format!(
                "annotation header must be item,rater,label, found {}",
                header.join(",")
            )));
        }
        let mut items: Vec<String> = Vec::new();
        let mut raters: Vec<String> = Vec::new();
        let mut item_ix = HashMap::new();
        let mut rater_ix = HashMap::new();
        let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
        for (n, record) in reader.records().enumerate() {
            let record = record?;
            let line = n + 2;
            let parse_err = |msg: String| NrmError::Parse {
                path: "annotations".into(),
                line,
                msg,
            };
            if record.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
            }
            let label = record[2].trim();
            let cat = lookup_category(&categories, label)
                .ok_or_else(|| parse_err(format!("unknown label {label:?}")))?;
            let i = *item_ix.entry(record[0].trim().to_string()).or_insert_with_key(|k| {
                items.push(k.clone());
                items.len() - 1
            });
            let r = *rater_ix.entry(record[1].trim().to_string()).or_insert_with_key(|k| {
                raters.push(k.clone());
                raters.len() - 1
            });
            if cells.insert((i, r), cat).is_some() {
                return Err(parse_err(format!("duplicate label for item {} rater {}", items[i], raters[r])));
            }
        }
        let mut labels = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let mut row = Vec::with_capacity(raters.len());
            for (r, rater) in raters.iter().enumerate() {
                let c = cells
                    .get(&(i, r))
                    .ok_or_else(|| NrmError::InvalidArgument(format!("item {item} has no label from rater {rater}")))?;
                row.push(*c);
            }
            labels.push(row);
        }
        Self::validated(categories, items, raters, labels)
    }

    pub fn load(path: &Path, categories: Vec<Category>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| NrmError::io(path, e))?;
        Self::from_csv(file, categories)
    }

    pub fn item_count(&self) -> usize {
        self.labels.len()
    }

    pub fn rater_count(&self) -> usize {
        self.raters.len()
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    /// Per item, how many raters chose each category.
    fn counts(&self) -> Vec<Vec<usize>> {
        self.labels
            .iter()
            .map(|row| {
                let mut c = vec![0; self.categories.len()];
                for &l in row {
                    c[l] += 1;
                }
                c
            })
            .collect()
    }
}

fn lookup_category(categories: &[Category], label: &str) -> Option<usize> {
    if let Some(i) = categories.iter().position(|c| c.name.eq_ignore_ascii_case(label)) {
        return Some(i);
    }
    let score: f64 = label.parse().ok()?;
    categories.iter().position(|c| c.score == score)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub mean: f64,
    /// Fraction of all annotations per category, in category order.
    pub fractions: Vec<(String, f64)>,
    pub annotations: usize,
}

/// Mean score over all annotations and the share of each category.
pub fn score_summary(table: &AnnotationTable) -> Result<ScoreSummary> {
    let total = table.item_count() * table.rater_count();
    if total == 0 {
        return Err(NrmError::InvalidArgument("empty annotation table".into()));
    }
    let mut per_cat = vec![0usize; table.categories.len()];
    let mut sum = 0.0;
    for row in &table.labels {
        for &l in row {
            per_cat[l] += 1;
            sum += table.categories[l].score;
        }
    }
    Ok(ScoreSummary {
        mean: sum / total as f64,
        fractions: table
            .categories
            .iter()
            .zip(per_cat)
            .map(|(c, n)| (c.name.clone(), n as f64 / total as f64))
            .collect(),
        annotations: total,
    })
}

/// Fleiss' kappa for a complete table with k ≥ 2 raters per item.
pub fn fleiss_kappa(table: &AnnotationTable) -> Result<f64> {
    let n = table.item_count();
    let k = table.rater_count();
    if n == 0 || k < 2 {
        return Err(NrmError::InvalidArgument(format!(
            "Fleiss' kappa needs at least one item and two raters, got {n} items and {k} raters"
        )));
    }
    let counts = table.counts();
    let pairs = (k * (k - 1)) as f64;
    let p_bar = counts
        .iter()
        .map(|c| c.iter().map(|&x| (x * x.saturating_sub(1)) as f64).sum::<f64>() / pairs)
        .sum::<f64>()
        / n as f64;
    let total = (n * k) as f64;
    let p_e: f64 = (0..table.categories.len())
        .map(|j| {
            let p = counts.iter().map(|c| c[j]).sum::<usize>() as f64 / total;
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(NrmError::Degenerate(
            "all annotations fall in one category; chance agreement is 1".into(),
        ));
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Subjects × treatments score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub treatments: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    /// Header row names the treatments; each further row is one subject.
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let treatments: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| NrmError::Parse {
                        path: "scores".into(),
                        line: n + 2,
                        msg: format!("not a finite number: {f:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(ScoreMatrix { treatments, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| NrmError::io(path, e))?;
        Self::from_csv(file)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Mean rank of each treatment; rank 1 is the highest score.
    pub average_ranks: Vec<f64>,
}

/// Ranks within one subject, highest score first; ties share the average
/// of the ranks they span. Also returns Σ (t³ − t) over tie groups.
fn rank_row(row: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = vec![0.0; row.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Friedman test with average ranks for ties and the usual tie correction.
pub fn friedman_test(scores: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = scores.len();
    let k = scores.first().map_or(0, Vec::len);
    if n == 0 || k < 2 {
        return Err(NrmError::InvalidArgument(format!(
            "Friedman test needs at least one subject and two treatments, got {n}x{k}"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(NrmError::shape("friedman_test", format!("{k} treatments"), format!("row {i} has {}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(NrmError::InvalidArgument(format!("row {i} has a non-finite score")));
        }
        let (ranks, t) = rank_row(row);
        for (s, r) in rank_sums.iter_mut().zip(ranks) {
            *s += r;
        }
        ties += t;
    }
    let (nf, kf) = (n as f64, k as f64);
    let correction = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    if correction.abs() < 1e-12 {
        return Err(NrmError::Degenerate("every subject ties all treatments".into()));
    }
    let average_ranks: Vec<f64> = rank_sums.iter().map(|s| s / nf).collect();
    let centre = (kf + 1.0) / 2.0;
    let spread: f64 = average_ranks.iter().map(|r| (r - centre).powi(2)).sum();
    let statistic = 12.0 * nf / (kf * (kf + 1.0)) * spread / correction;
    let dof = k - 1;
    Ok(FriedmanResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof)?,
        average_ranks,
    })
}

/// Upper tail of the chi-square distribution, `Q(dof/2, x/2)`.
pub fn chi_square_sf(x: f64, dof: usize) -> Result<f64> {
    if dof == 0 || !(x >= 0.0) {
        return Err(NrmError::InvalidArgument(format!(
            "chi-square survival needs x >= 0 and dof >= 1, got x = {x}, dof = {dof}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    statrs::function::gamma::checked_gamma_ur(dof as f64 / 2.0, x / 2.0)
        .map_err(|e| NrmError::InvalidArgument(format!("chi-square survival: {e}")))
}
