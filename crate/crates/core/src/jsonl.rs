//! JSON Lines persistence of a [`SharedHistory`].
//!
//! One object per line with a `record_type` of `"post"` or `"vote"`; the
//! remaining fields are those of [`Post`] and [`VoteRecord`]. Records are
//! written in timestamp order, posts before votes on equal timestamps.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Post, SharedHistory, VoteRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record_type", rename_all = "snake_case")]
pub enum HistoryRecord {
    Post(Post),
    Vote(VoteRecord),
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Records of `history` in file order.
pub fn records(history: &SharedHistory) -> Vec<HistoryRecord> {
    let mut out = Vec::with_capacity(history.posts.len() + history.votes.len());
    let (mut posts, mut votes) = (history.posts.iter().peekable(), history.votes.iter().peekable());
    loop {
        let take_post = match (posts.peek(), votes.peek()) {
            (Some(p), Some(v)) => p.timestamp <= v.timestamp,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if take_post {
            out.push(HistoryRecord::Post(posts.next().cloned().unwrap()));
        } else {
            out.push(HistoryRecord::Vote(votes.next().cloned().unwrap()));
        }
    }
    out
}

pub fn write_jsonl<W: Write>(history: &SharedHistory, mut out: W) -> io::Result<()> {
    for record in records(history) {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl_string(history: &SharedHistory) -> String {
    let mut buf = Vec::new();
    write_jsonl(history, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<SharedHistory, JsonlError> {
    let mut history = SharedHistory::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| JsonlError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: HistoryRecord = serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match record {
            HistoryRecord::Post(p) => history.posts.push(p),
            HistoryRecord::Vote(v) => history.votes.push(v),
        }
    }
    history.posts.sort_by_key(|p| p.post_id);
    Ok(history)
}

pub fn save(history: &SharedHistory, path: &Path) -> Result<(), JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_jsonl(history, BufWriter::new(file)).map_err(io_err)
}

pub fn load(path: &Path) -> Result<SharedHistory, JsonlError> {
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_jsonl(BufReader::new(file))
}
