use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, ndcg_at_k, precision_at_k};
use super::policy::RankingPolicy;
use crate::envsim::{task_name, FeaturizedEnv};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stage_rng};

pub const AGGREGATION_NOTE: &str =
    "ranking metrics are computed once per (user, session) at session start and averaged over sessions";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub policy: String,
    pub task: usize,
    pub task_name: String,
    /// Mean per-step reward over every step of every session.
    pub avg_reward: f64,
    pub precision_at_k: f64,
    pub ndcg_at_k: f64,
    pub map: f64,
    /// `avg_reward` over the random policy's, when a random row exists.
    pub reward_vs_random: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sessions: usize,
    pub session_len: usize,
    pub k: usize,
    pub aggregation: String,
    pub results: Vec<TaskResult>,
}

#[derive(Clone, Copy, Default)]
struct SessionOutcome {
    reward: f64,
    precision: f64,
    ndcg: f64,
    ap: f64,
}

fn run_session(
    policy: &dyn RankingPolicy,
    env: &FeaturizedEnv,
    task: usize,
    session: usize,
    k: usize,
    seed: u64,
) -> Result<SessionOutcome> {
    let user = session % env.users().len();
    let mut fork = env.fork(user, derive_seed(seed, &format!("session/{session}")));
    let mut rng = stage_rng(seed, &format!("policy/{session}/{task}"));
    let mut obs = fork.begin_session(0)?;
    let relevant = fork.sample_relevance().swap_remove(task);
    let ranked = policy.rank(&obs, task, &mut rng)?;
    let mut out = SessionOutcome {
        precision: precision_at_k(&ranked, &relevant, k)?,
        ndcg: ndcg_at_k(&ranked, &relevant, k)?,
        ap: average_precision(&ranked, &relevant),
        reward: 0.0,
    };
    loop {
        let action = policy.choose(&obs, task, &mut rng)?;
        let (fb, next, over) = fork.step_feedback(action)?;
        out.reward += fb.reward(task);
        obs = next;
        if over {
            return Ok(out);
        }
    }
}

/// Plays `sessions` held-out sessions per (policy, task). Session `j` goes to
/// user `j mod n_users` on a private fork of `env`, seeded from `(seed, j)`,
/// so every policy meets the same users in the same starting states and the
/// result does not depend on the thread count.
pub fn evaluate_policies(
    policies: &[Box<dyn RankingPolicy>],
    env: &FeaturizedEnv,
    sessions: usize,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    if sessions == 0 {
        return Err(Error::Param("evaluation needs at least one session".into()));
    }
    let n_tasks = env.params().n_tasks;
    let session_len = env.params().session_len;
    let mut results = Vec::new();
    for policy in policies {
        for task in 0..n_tasks {
            let outcomes = (0..sessions)
                .into_par_iter()
                .map(|j| run_session(policy.as_ref(), env, task, j, k, seed))
                .collect::<Result<Vec<_>>>()?;
            let n = sessions as f64;
            let sum = outcomes.iter().fold(SessionOutcome::default(), |acc, o| SessionOutcome {
                reward: acc.reward + o.reward,
                precision: acc.precision + o.precision,
                ndcg: acc.ndcg + o.ndcg,
                ap: acc.ap + o.ap,
            });
            results.push(TaskResult {
                policy: policy.name().to_string(),
                task,
                task_name: task_name(task),
                avg_reward: sum.reward / (n * session_len as f64),
                precision_at_k: sum.precision / n,
                ndcg_at_k: sum.ndcg / n,
                map: sum.ap / n,
                reward_vs_random: None,
            });
        }
    }
    let baseline: Vec<Option<f64>> = (0..n_tasks)
        .map(|t| {
            results
                .iter()
                .find(|r| r.policy == "random" && r.task == t)
                .map(|r| r.avg_reward)
        })
        .collect();
    for r in &mut results {
        if let Some(b) = baseline[r.task] {
            r.reward_vs_random = Some(r.avg_reward / b);
        }
    }
    Ok(EvalReport {
        sessions,
        session_len,
        k,
        aggregation: AGGREGATION_NOTE.to_string(),
        results,
    })
}

impl EvalReport {
    pub fn result(&self, policy: &str, task: usize) -> Option<&TaskResult> {
        self.results.iter().find(|r| r.policy == policy && r.task == task)
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let k = self.k;
        let header = vec![
            "policy".to_string(),
            "task".to_string(),
            "avg_reward".to_string(),
            "vs_random".to_string(),
            format!("P@{k}"),
            format!("NDCG@{k}"),
            "MAP".to_string(),
        ];
        let rows: Vec<Vec<String>> = self
            .results
            .iter()
            .map(|r| {
                vec![
                    r.policy.clone(),
                    r.task_name.clone(),
                    format!("{:.4}", r.avg_reward),
                    r.reward_vs_random.map_or("-".into(), |v| format!("{v:.2}x")),
                    format!("{:.4}", r.precision_at_k),
                    format!("{:.4}", r.ndcg_at_k),
                    format!("{:.4}", r.map),
                ]
            })
            .collect();
        let mut out = format!(
            "# {} held-out sessions of {} steps; {}\n",
            self.sessions, self.session_len, self.aggregation
        );
        out.push_str(&render_table(&header, &rows));
        out
    }
}

/// Left-aligned first column, right-aligned numeric columns.
pub fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(out.len() - 1));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
