use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::KnowledgeTriple;
use crate::{normalize, Error, Result};

/// Separator between the winner and loser halves of a serialized row.
pub const PAD_GLYPH: &str = "<pad>";

/// One `(prompt, winner, loser)` training unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub triple_id: String,
    pub prompt: String,
    pub winner: String,
    pub loser: String,
}

fn check_text(s: &str) -> Result<()> {
    if s.contains(PAD_GLYPH) || s.contains('\n') || s.contains('\r') {
        return Err(Error::PadInText(s.to_string()));
    }
    Ok(())
}

impl PreferencePair {
    /// `"{prompt} {winner}<pad>{prompt} {loser}"`.
    pub fn to_row(&self) -> String {
        format!(
            "{p} {w}{PAD_GLYPH}{p} {l}",
            p = self.prompt,
            w = self.winner,
            l = self.loser
        )
    }

    /// Recovers a pair from its row given the prompt it was built with.
    pub fn from_row(triple_id: &str, prompt: &str, row: &str) -> Result<Self> {
        let (left, right) = split_row(row)?;
        let strip = |side: &str| -> Result<String> {
            side.strip_prefix(prompt)
                .and_then(|s| s.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::InvalidConfig(format!("row side {side:?} does not start with its prompt")))
        };
        Ok(Self {
            triple_id: triple_id.to_string(),
            prompt: prompt.to_string(),
            winner: strip(left)?,
            loser: strip(right)?,
        })
    }
}

/// Splits a row on its first pad glyph.
pub fn split_row(row: &str) -> Result<(&str, &str)> {
    row.split_once(PAD_GLYPH)
        .ok_or_else(|| Error::InvalidConfig("row has no pad separator".into()))
}

/// One pair per loser, all with the triple's canonical object as winner.
pub fn build_pairs(triple: &KnowledgeTriple, losers: &[String]) -> Result<Vec<PreferencePair>> {
    check_text(&triple.question)?;
    check_text(&triple.object)?;
    let truths = triple.normalized_aliases();
    losers
        .iter()
        .map(|l| {
            check_text(l)?;
            if truths.contains(&normalize(l)) {
                return Err(Error::IdenticalPair(triple.id.clone()));
            }
            Ok(PreferencePair {
                triple_id: triple.id.clone(),
                prompt: triple.question.clone(),
                winner: triple.object.clone(),
                loser: l.clone(),
            })
        })
        .collect()
}

/// Writes the line-oriented rows and a JSONL sidecar with the structured
/// fields, one line each per pair.
pub fn write_pairs(rows_path: &Path, sidecar_path: &Path, pairs: &[PreferencePair]) -> Result<()> {
    for path in [rows_path, sidecar_path] {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut rows = BufWriter::new(std::fs::File::create(rows_path)?);
    let mut side = BufWriter::new(std::fs::File::create(sidecar_path)?);
    for p in pairs {
        for field in [&p.prompt, &p.winner, &p.loser] {
            check_text(field)?;
        }
        writeln!(rows, "{}", p.to_row())?;
        serde_json::to_writer(&mut side, p)?;
        side.write_all(b"\n")?;
    }
    rows.flush()?;
    side.flush()?;
    Ok(())
}

/// Reads pairs back, checking that every row matches its sidecar record.
pub fn read_pairs(rows_path: &Path, sidecar_path: &Path) -> Result<Vec<PreferencePair>> {
    let rows: Vec<String> = std::io::BufReader::new(std::fs::File::open(rows_path)?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let side = std::io::BufReader::new(std::fs::File::open(sidecar_path)?);
    let mut out = Vec::with_capacity(rows.len());
    for (i, line) in side.lines().enumerate() {
        let line = line?;
        let parse_err = |reason: String| Error::Parse {
            path: sidecar_path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let meta: PreferencePair = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let row = rows.get(i).ok_or_else(|| parse_err("no matching row".into()))?;
        let pair = PreferencePair::from_row(&meta.triple_id, &meta.prompt, row)?;
        if pair != meta {
            return Err(parse_err("row disagrees with sidecar".into()));
        }
        out.push(pair);
    }
    if out.len() != rows.len() {
        return Err(Error::Parse {
            path: rows_path.to_path_buf(),
            line: out.len() + 1,
            reason: "row without sidecar record".into(),
        });
    }
    Ok(out)
}
