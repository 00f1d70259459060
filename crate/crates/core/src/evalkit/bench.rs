use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::evaluate::render_table;
use crate::distill::StudentModel;
use crate::error::{Error, Result};
use crate::nnkit::{EvalCounters, Matrix, Params};
use crate::repr::Observation;
use crate::teacher::TeacherNet;

pub const MIN_REPETITIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::Empty("latency samples"));
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        let p95 = s[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(LatencyStats {
            median_ms: median,
            p95_ms: p95,
            mean_ms: s.iter().sum::<f64>() / n as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub repetitions: usize,
    pub n_tasks: usize,
    pub n_actions: usize,
    /// One student pass answering every task.
    pub student: LatencyStats,
    /// Every teacher answering its task in turn.
    pub teachers: LatencyStats,
    /// Student median over teacher median.
    pub ratio: f64,
    pub student_params: usize,
    pub teacher_params: usize,
    pub student_trunk_evals_per_call: f64,
    pub teacher_head_evals_per_call: f64,
}

/// Times `repetitions` calls of each path on the calling thread, cycling
/// through `states` and alternating student and teacher calls.
pub fn bench_latency(
    student: &StudentModel,
    teachers: &[TeacherNet],
    states: &[Observation],
    actions: &Matrix,
    repetitions: usize,
) -> Result<LatencyReport> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::Param(format!(
            "benchmark needs at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    if states.is_empty() {
        return Err(Error::Empty("benchmark states"));
    }
    if teachers.is_empty() {
        return Err(Error::Empty("teachers"));
    }
    let sc = EvalCounters::default();
    let tc = EvalCounters::default();
    let mut s_ms = Vec::with_capacity(repetitions);
    let mut t_ms = Vec::with_capacity(repetitions);
    for i in 0..repetitions {
        let obs = &states[i % states.len()];
        let start = Instant::now();
        black_box(student.answer(black_box(obs), Some(&sc))?);
        s_ms.push(start.elapsed().as_secs_f64() * 1e3);

        let start = Instant::now();
        for t in teachers {
            black_box(t.answer(black_box(obs), actions, Some(&tc))?);
        }
        t_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let student_stats = LatencyStats::from_samples(&s_ms)?;
    let teacher_stats = LatencyStats::from_samples(&t_ms)?;
    let n = repetitions as f64;
    Ok(LatencyReport {
        repetitions,
        n_tasks: teachers.len(),
        n_actions: actions.rows(),
        ratio: student_stats.median_ms / teacher_stats.median_ms,
        student: student_stats,
        teachers: teacher_stats,
        student_params: student.net.param_count(),
        teacher_params: teachers.iter().map(Params::param_count).sum(),
        student_trunk_evals_per_call: EvalCounters::get(&sc.trunk_evals) as f64 / n,
        teacher_head_evals_per_call: EvalCounters::get(&tc.head_evals) as f64 / n,
    })
}

impl LatencyReport {
    pub fn to_table(&self) -> String {
        let header: Vec<String> = ["path", "median_ms", "p95_ms", "mean_ms", "params"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let row = |name: &str, s: &LatencyStats, params: usize| {
            vec![
                name.to_string(),
                format!("{:.4}", s.median_ms),
                format!("{:.4}", s.p95_ms),
                format!("{:.4}", s.mean_ms),
                params.to_string(),
            ]
        };
        let rows = vec![
            row("student (all tasks)", &self.student, self.student_params),
            row(&format!("{} teachers", self.n_tasks), &self.teachers, self.teacher_params),
        ];
        let mut out = format!("# {} timed calls, {} catalog items\n", self.repetitions, self.n_actions);
        out.push_str(&render_table(&header, &rows));
        out.push_str(&format!("median ratio student/teachers: {:.3}\n", self.ratio));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = LatencyStats::from_samples(&samples).unwrap();
        assert_eq!(s.median_ms, 50.5);
        assert_eq!(s.p95_ms, 95.0);
        assert_eq!(s.mean_ms, 50.5);
        assert!(LatencyStats::from_samples(&[]).is_err());
    }
}
