use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeTriple;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Tsv,
    Csv,
}

impl DatasetFormat {
    fn delimiter(self) -> u8 {
        match self {
            DatasetFormat::Tsv => b'\t',
            DatasetFormat::Csv => b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    /// Separator inside the `answers` column.
    pub answer_separator: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Tsv,
            answer_separator: "|".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalLoad {
    pub triples: Vec<KnowledgeTriple>,
    /// Rows skipped because they were malformed.
    pub malformed: usize,
    /// Rows dropped because their subject had more than one object in the
    /// same category.
    pub ambiguous: usize,
    /// Exact duplicates folded into an earlier row.
    pub duplicates: usize,
    /// Per-object popularity from an optional `popularity` column.
    pub popularity: BTreeMap<String, f64>,
}

/// Loads a delimited QA dump with a header row.
///
/// Required columns: `question`, `subject`, `category`, and `answers` (or
/// `answer`). Optional: `id`, `relation`, `popularity`. Subjects that map to
/// more than one object within a category are dropped entirely.
pub fn load_external_dataset(path: &Path, opts: &LoadOptions) -> Result<ExternalLoad> {
    let ds_err = |reason: String| Error::Dataset {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.format.delimiter())
        .flexible(true)
        .from_path(path)
        .map_err(|e| ds_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| ds_err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(q_col), Some(s_col), Some(c_col)) = (col("question"), col("subject"), col("category"))
    else {
        return Err(ds_err("header must name question, subject and category".into()));
    };
    let Some(a_col) = col("answers").or_else(|| col("answer")) else {
        return Err(ds_err("header must name answers or answer".into()));
    };
    let (id_col, rel_col, pop_col) = (col("id"), col("relation"), col("popularity"));

    let mut malformed = 0;
    let mut rows: Vec<(usize, KnowledgeTriple, Option<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}:{line}: {e}", path.display());
                malformed += 1;
                continue;
            }
        };
        let field = |c: usize| record.get(c).map(str::trim).filter(|s| !s.is_empty());
        let (Some(question), Some(subject), Some(category), Some(answers)) =
            (field(q_col), field(s_col), field(c_col), field(a_col))
        else {
            log::warn!("{}:{line}: missing required field", path.display());
            malformed += 1;
            continue;
        };
        let aliases: Vec<String> = answers
            .split(opts.answer_separator.as_str())
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_string)
            .collect();
        let popularity = match pop_col.and_then(field) {
            Some(p) => match p.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    log::warn!("{}:{line}: bad popularity {p:?}", path.display());
                    malformed += 1;
                    continue;
                }
            },
            None => None,
        };
        let Some(object) = aliases.first().cloned() else {
            malformed += 1;
            continue;
        };
        let id = id_col
            .and_then(field)
            .map(str::to_string)
            .unwrap_or_else(|| format!("row-{line:06}"));
        rows.push((
            line,
            KnowledgeTriple {
                id,
                subject: subject.to_string(),
                predicate: rel_col.and_then(field).unwrap_or(category).to_string(),
                object,
                object_aliases: aliases.into_iter().collect(),
                category: category.to_string(),
                frequency: 1,
                question: question.to_string(),
            },
            popularity,
        ));
    }

    // group by (category, subject) and keep only subjects with one object
    let mut objects: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for (_, t, _) in &rows {
        objects
            .entry((t.category.clone(), t.subject.clone()))
            .or_default()
            .insert(crate::normalize(&t.object));
    }
    let mut kept = Vec::new();
    let mut seen = BTreeSet::new();
    let mut ids = BTreeSet::new();
    let (mut ambiguous, mut duplicates) = (0, 0);
    let mut popularity = BTreeMap::new();
    for (line, t, pop) in rows {
        let key = (t.category.clone(), t.subject.clone());
        if objects[&key].len() > 1 {
            ambiguous += 1;
            continue;
        }
        if !seen.insert(key) {
            duplicates += 1;
            continue;
        }
        if !ids.insert(t.id.clone()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("duplicate id {:?}", t.id),
            });
        }
        if let Some(p) = pop {
            popularity.insert(t.object.clone(), p);
        }
        kept.push(t);
    }
    if ambiguous + duplicates > 0 {
        log::info!(
            "{}: dropped {ambiguous} ambiguous and {duplicates} duplicate rows",
            path.display()
        );
    }
    if kept.is_empty() {
        return Err(ds_err("no valid rows".into()));
    }
    Ok(ExternalLoad {
        triples: kept,
        malformed,
        ambiguous,
        duplicates,
        popularity,
    })
}
