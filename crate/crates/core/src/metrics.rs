//! Activity series, per-actor tallies and report files.
//!
//! "Votes" here always means executed votes; an action event that executed
//! nothing contributes zero.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActorId, PostKind, SharedHistory};
use crate::runner::ACTIONS_DEFINITION;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteBin {
    pub minute: u64,
    pub posts: u64,
    pub votes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub bins: Vec<MinuteBin>,
}

impl ActivitySeries {
    pub fn total_posts(&self) -> u64 {
        self.bins.iter().map(|b| b.posts).sum()
    }

    pub fn total_votes(&self) -> u64 {
        self.bins.iter().map(|b| b.votes).sum()
    }

    /// Posts per bin averaged over all bins; zero without bins.
    pub fn mean_posts_per_minute(&self) -> f64 {
        mean(self.total_posts(), self.bins.len())
    }

    pub fn mean_votes_per_minute(&self) -> f64 {
        mean(self.total_votes(), self.bins.len())
    }
}

fn mean(total: u64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

/// `ceil(horizon)` one-minute bins; a record lands in bin `floor(timestamp)`.
/// A record stamped exactly at an integral horizon goes to the last bin.
pub fn per_minute_activity(history: &SharedHistory, horizon: f64) -> ActivitySeries {
    let n = horizon.max(0.0).ceil() as usize;
    let mut bins: Vec<MinuteBin> = (0..n as u64)
        .map(|minute| MinuteBin {
            minute,
            ..MinuteBin::default()
        })
        .collect();
    if n == 0 {
        return ActivitySeries { bins };
    }
    let slot = |t: f64| (t.max(0.0).floor() as usize).min(n - 1);
    for post in &history.posts {
        bins[slot(post.timestamp)].posts += 1;
    }
    for vote in &history.votes {
        bins[slot(vote.timestamp)].votes += 1;
    }
    ActivitySeries { bins }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorTally {
    pub actor: ActorId,
    pub posts: u64,
    pub votes: u64,
    pub new_comments: u64,
    pub replies: u64,
}

impl ActorTally {
    fn empty(actor: ActorId) -> Self {
        ActorTally {
            actor,
            posts: 0,
            votes: 0,
            new_comments: 0,
            replies: 0,
        }
    }
}

/// One row per roster actor in roster order, even when idle, followed by any
/// other author or voter in id order.
pub fn actor_breakdown(history: &SharedHistory, roster: &[ActorId]) -> Vec<ActorTally> {
    let mut tallies: BTreeMap<&ActorId, ActorTally> = roster.iter().map(|a| (a, ActorTally::empty(a.clone()))).collect();
    for post in &history.posts {
        let r = tallies
            .entry(&post.author)
            .or_insert_with(|| ActorTally::empty(post.author.clone()));
        r.posts += 1;
        match post.kind {
            PostKind::NewComment => r.new_comments += 1,
            PostKind::Reply => r.replies += 1,
        }
    }
    for vote in &history.votes {
        tallies
            .entry(&vote.voter)
            .or_insert_with(|| ActorTally::empty(vote.voter.clone()))
            .votes += 1;
    }
    let mut rows: Vec<ActorTally> = roster.iter().filter_map(|a| tallies.remove(a)).collect();
    rows.extend(tallies.into_values());
    rows
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub actions_definition: String,
    pub minutes: Vec<u64>,
    pub posts_per_minute: Vec<u64>,
    pub votes_per_minute: Vec<u64>,
    pub actors: Vec<ActorTally>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub activity: PathBuf,
    pub actors: PathBuf,
    pub plot_data: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ActorRow {
    actor: String,
    posts: u64,
    votes: u64,
    new: u64,
    replies: u64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, ReportError> {
    let file = File::create(path).map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> ReportError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => ReportError::Io {
            path: path.to_owned(),
            source,
        },
        other => ReportError::Format {
            path: path.to_owned(),
            message: format!("{other:?}"),
        },
    }
}

/// Writes `activity.csv`, `actors.csv` and `plot_data.json` into `dir`,
/// creating it if needed.
pub fn export_report(series: &ActivitySeries, breakdown: &[ActorTally], dir: &Path) -> Result<ReportPaths, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let paths = ReportPaths {
        activity: dir.join("activity.csv"),
        actors: dir.join("actors.csv"),
        plot_data: dir.join("plot_data.json"),
    };

    let mut w = csv_writer(&paths.activity)?;
    // An explicit header keeps the file well-formed with zero bins.
    w.write_record(["minute", "posts", "votes"]).map_err(|e| csv_error(&paths.activity, e))?;
    for b in &series.bins {
        w.write_record([b.minute.to_string(), b.posts.to_string(), b.votes.to_string()])
            .map_err(|e| csv_error(&paths.activity, e))?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: paths.activity.clone(),
        source,
    })?;

    let mut w = csv_writer(&paths.actors)?;
    w.write_record(["actor", "posts", "votes", "new", "replies"])
        .map_err(|e| csv_error(&paths.actors, e))?;
    for t in breakdown {
        w.write_record([
            t.actor.to_string(),
            t.posts.to_string(),
            t.votes.to_string(),
            t.new_comments.to_string(),
            t.replies.to_string(),
        ])
        .map_err(|e| csv_error(&paths.actors, e))?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: paths.actors.clone(),
        source,
    })?;

    let plot = PlotData {
        actions_definition: ACTIONS_DEFINITION.into(),
        minutes: series.bins.iter().map(|b| b.minute).collect(),
        posts_per_minute: series.bins.iter().map(|b| b.posts).collect(),
        votes_per_minute: series.bins.iter().map(|b| b.votes).collect(),
        actors: breakdown.to_vec(),
    };
    let io_err = |source| ReportError::Io {
        path: paths.plot_data.clone(),
        source,
    };
    let file = File::create(&paths.plot_data).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &plot).map_err(|e| ReportError::Format {
        path: paths.plot_data.clone(),
        message: e.to_string(),
    })?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_err)?;
    Ok(paths)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, ReportError> {
    csv::Reader::from_path(path).map_err(|e| csv_error(path, e))
}

pub fn read_activity_csv(path: &Path) -> Result<ActivitySeries, ReportError> {
    let bins = csv_reader(path)?
        .deserialize()
        .collect::<Result<Vec<MinuteBin>, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok(ActivitySeries { bins })
}

pub fn read_actors_csv(path: &Path) -> Result<Vec<ActorTally>, ReportError> {
    let rows = csv_reader(path)?
        .deserialize()
        .collect::<Result<Vec<ActorRow>, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok(rows
        .into_iter()
        .map(|r| ActorTally {
            actor: ActorId(r.actor),
            posts: r.posts,
            votes: r.votes,
            new_comments: r.new,
            replies: r.replies,
        })
        .collect())
}
