//! Rating-log parsing.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Interaction;

/// Input text format; selects the field separator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Tsv,
    Csv,
}

impl FileFormat {
    fn separator(self) -> char {
        match self {
            FileFormat::Tsv => '\t',
            FileFormat::Csv => ',',
        }
    }
}

/// Parse a rating log from `path`. See [`parse_ratings`].
pub fn parse_ratings_file(
    path: impl AsRef<Path>,
    format: FileFormat,
    rating_threshold: f64,
) -> Result<Vec<Interaction>> {
    let file = File::open(path.as_ref()).map_err(|e| {
        std::io::Error::new(
            e.kind(),
            format!("{}: {}", path.as_ref().display(), e),
        )
    })?;
    parse_ratings(BufReader::new(file), format, rating_threshold)
}

/// Parse `user<sep>item<sep>rating[<sep>timestamp]` lines into interactions.
///
/// Raw ids may be arbitrary strings; they are mapped to dense 0-based ids in
/// first-appearance order over the retained rows. Rows with
/// `rating < rating_threshold` are dropped, converting explicit ratings to
/// implicit feedback. Duplicate `(user, item)` pairs collapse to the record
/// with the earliest timestamp (first occurrence when timestamps are absent).
pub fn parse_ratings(
    reader: impl BufRead,
    format: FileFormat,
    rating_threshold: f64,
) -> Result<Vec<Interaction>> {
    let sep = format.separator();
    let mut user_ids: HashMap<String, u32> = HashMap::new();
    let mut item_ids: HashMap<String, u32> = HashMap::new();
    // (user, item) -> index into `out`.
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    let mut out: Vec<Interaction> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad rating value {:?}", fields[2]),
        })?;
        let timestamp = match fields.get(3) {
            Some(raw) => Some(raw.trim().parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad timestamp value {raw:?}"),
            })?),
            None => None,
        };
        if rating < rating_threshold {
            continue;
        }

        let next_user = user_ids.len() as u32;
        let user = *user_ids
            .entry(fields[0].trim().to_owned())
            .or_insert(next_user);
        let next_item = item_ids.len() as u32;
        let item = *item_ids
            .entry(fields[1].trim().to_owned())
            .or_insert(next_item);

        match seen.get(&(user, item)) {
            Some(&pos) => {
                // Earliest timestamp wins; ties and missing stamps keep the
                // first occurrence.
                let old = out[pos].timestamp.unwrap_or(i64::MAX);
                let new = timestamp.unwrap_or(i64::MAX);
                if new < old {
                    out[pos].timestamp = timestamp;
                }
            }
            None => {
                seen.insert((user, item), out.len());
                out.push(Interaction {
                    user,
                    item,
                    timestamp,
                });
            }
        }
    }

    if out.is_empty() {
        return Err(Error::EmptyDataset(
            "no interactions at or above the rating threshold".into(),
        ));
    }
    Ok(out)
}
