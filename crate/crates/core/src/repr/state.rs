use serde::{Deserialize, Serialize};

use super::action::Catalog;
use crate::envsim::FeedbackVector;
use crate::error::{check_dim, Result};

/// Widths of the short-term, long-term and context parts of a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    pub short_term: usize,
    pub long_term: usize,
    pub context: usize,
}

impl Default for StateDims {
    fn default() -> Self {
        StateDims {
            short_term: 10,
            long_term: 10,
            context: 3,
        }
    }
}

impl StateDims {
    pub fn total(&self) -> usize {
        self.short_term + self.long_term + self.context
    }
}

/// User state `concat(u_s, u_l, u_c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: StateDims,
    data: Vec<f64>,
}

impl StateVector {
    pub fn from_vec(dims: StateDims, data: Vec<f64>) -> Result<Self> {
        check_dim("state vector", dims.total(), data.len())?;
        Ok(StateVector { dims, data })
    }

    pub fn dims(&self) -> StateDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn short_term(&self) -> &[f64] {
        &self.data[..self.dims.short_term]
    }

    pub fn long_term(&self) -> &[f64] {
        let s = self.dims.short_term;
        &self.data[s..s + self.dims.long_term]
    }

    pub fn context(&self) -> &[f64] {
        &self.data[self.dims.short_term + self.dims.long_term..]
    }
}

pub fn build_state(u_s: &[f64], u_l: &[f64], u_c: &[f64], dims: StateDims) -> Result<StateVector> {
    check_dim("short-term interest", dims.short_term, u_s.len())?;
    check_dim("long-term interest", dims.long_term, u_l.len())?;
    check_dim("context", dims.context, u_c.len())?;
    let mut data = Vec::with_capacity(dims.total());
    data.extend_from_slice(u_s);
    data.extend_from_slice(u_l);
    data.extend_from_slice(u_c);
    Ok(StateVector { dims, data })
}

/// The raw inputs a network turns into a state: the last `T` interaction
/// inputs (oldest first) for the recurrent encoder plus the static
/// `concat(u_l, u_c)` features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub history: Vec<Vec<f64>>,
    pub features: Vec<f64>,
}

impl Observation {
    pub fn features_only(features: Vec<f64>) -> Self {
        Observation {
            history: Vec::new(),
            features,
        }
    }
}

/// One past recommendation outcome for a user.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub item: usize,
    pub feedback: FeedbackVector,
    pub ts: i64,
}

/// Encoder input `concat(a, r^(1), ..., r^(N_f))`.
pub fn interaction_input(action: &[f64], feedback: &FeedbackVector) -> Vec<f64> {
    let mut x = Vec::with_capacity(action.len() + feedback.n_tasks());
    x.extend_from_slice(action);
    x.extend(feedback.to_f64());
    x
}

/// The last `window` interactions as encoder inputs, left-padded with zero
/// rows when the history is shorter.
pub fn history_window(
    recent: &[Interaction],
    catalog: &Catalog,
    window: usize,
    n_tasks: usize,
) -> Vec<Vec<f64>> {
    let width = catalog.dims().total() + n_tasks;
    let take = recent.len().min(window);
    let mut rows = vec![vec![0.0; width]; window - take];
    rows.extend(
        recent[recent.len() - take..]
            .iter()
            .map(|i| interaction_input(catalog.item(i.item).action.as_slice(), &i.feedback)),
    );
    rows
}

pub fn long_term_dim(n_tasks: usize, n_genres: usize) -> usize {
    n_tasks + n_genres + 3
}

/// Running summary of a user's full history. Feature layout:
/// per-task positive rates, genre distribution of clicked items, normalized
/// interaction count `n/(n+100)`, mean relative recency of events within the
/// history span, and mean per-event feedback score. Every entry is in `[0,1]`
/// and an empty history maps to zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct LongTermStats {
    n_tasks: usize,
    n_genres: usize,
    count: u64,
    positives: Vec<u64>,
    clicked_genres: Vec<u64>,
    first_ts: i64,
    last_ts: i64,
    ts_offset_sum: i128,
    depth_sum: u64,
}

pub const COUNT_SCALE: f64 = 100.0;

impl LongTermStats {
    pub fn new(n_tasks: usize, n_genres: usize) -> Self {
        LongTermStats {
            n_tasks,
            n_genres,
            count: 0,
            positives: vec![0; n_tasks],
            clicked_genres: vec![0; n_genres],
            first_ts: 0,
            last_ts: 0,
            ts_offset_sum: 0,
            depth_sum: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, feedback: &FeedbackVector, genre: usize, ts: i64) {
        if self.count == 0 {
            self.first_ts = ts;
        }
        self.last_ts = self.last_ts.max(ts);
        self.count += 1;
        for (p, v) in self.positives.iter_mut().zip(feedback.as_slice()) {
            *p += u64::from(*v);
        }
        if feedback.n_tasks() > 0 && feedback.get(0) == 1 && genre < self.n_genres {
            self.clicked_genres[genre] += 1;
        }
        self.ts_offset_sum += i128::from(ts - self.first_ts);
        self.depth_sum += feedback.depth() as u64;
    }

    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(long_term_dim(self.n_tasks, self.n_genres));
        if self.count == 0 {
            out.resize(long_term_dim(self.n_tasks, self.n_genres), 0.0);
            return out;
        }
        let n = self.count as f64;
        out.extend(self.positives.iter().map(|&p| p as f64 / n));
        let clicks: u64 = self.clicked_genres.iter().sum();
        out.extend(self.clicked_genres.iter().map(|&c| {
            if clicks == 0 {
                0.0
            } else {
                c as f64 / clicks as f64
            }
        }));
        out.push(n / (n + COUNT_SCALE));
        let span = self.last_ts - self.first_ts;
        out.push(if span > 0 {
            self.ts_offset_sum as f64 / (n * span as f64)
        } else {
            0.0
        });
        out.push(if self.n_tasks == 0 {
            0.0
        } else {
            self.depth_sum as f64 / (n * self.n_tasks as f64)
        });
        out
    }
}

/// Long-term interest summary of a whole history (see [`LongTermStats`]).
pub fn build_long_term(history: &[Interaction], catalog: &Catalog, n_tasks: usize) -> Vec<f64> {
    let mut stats = LongTermStats::new(n_tasks, catalog.n_genres());
    for i in history {
        stats.push(&i.feedback, catalog.genre(i.item), i.ts);
    }
    stats.features()
}

pub const MS_PER_HOUR: i64 = 3_600_000;
pub const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;

/// `(hour-of-day/24, day-of-week/7, region/n_regions)`; day 0 is Monday.
pub fn context_vector(ts_ms: i64, region: usize, n_regions: usize) -> Vec<f64> {
    let (hour, dow) = hour_and_weekday(ts_ms);
    vec![
        hour as f64 / 24.0,
        dow as f64 / 7.0,
        region as f64 / n_regions.max(1) as f64,
    ]
}

pub fn hour_and_weekday(ts_ms: i64) -> (i64, i64) {
    let hour = ts_ms.div_euclid(MS_PER_HOUR).rem_euclid(24);
    // 1970-01-01 was a Thursday.
    let dow = (ts_ms.div_euclid(MS_PER_DAY) + 3).rem_euclid(7);
    (hour, dow)
}
