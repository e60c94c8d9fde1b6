use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Configuration, RobotModel};
use crate::planner::PlanResult;
use crate::renderer::{psnr, render, Camera, Image, RenderParams};

/// Mean absolute joint error (rad) at or below which a run succeeds.
pub const SUCCESS_THRESHOLD: f64 = 0.05;

/// Slack for the inclusive threshold comparison, so that an offset of
/// exactly the threshold still counts after floating-point subtraction.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub success: bool,
    pub joint_error: f64,
    pub joint_errors: Vec<f64>,
    pub path_length: f64,
    pub time_s: f64,
    pub psnr: f64,
    pub collision_free: bool,
}

pub fn is_success(joint_error: f64, collision_free: bool) -> bool {
    collision_free && joint_error <= SUCCESS_THRESHOLD + THRESHOLD_SLACK
}

/// Scores a planner result against the hidden goal configuration.
pub fn evaluate(
    result: &PlanResult,
    q_goal: &Configuration,
    model: &RobotModel,
    camera: &Camera,
    render_params: &RenderParams,
    goal_image: &Image,
) -> Result<Metrics> {
    let q = result.final_config();
    model.check_dim(q)?;
    model.check_dim(q_goal)?;
    let joint_errors: Vec<f64> = q.0.iter().zip(&q_goal.0).map(|(a, b)| (a - b).abs()).collect();
    let joint_error = joint_errors.iter().sum::<f64>() / joint_errors.len() as f64;
    let img = render(model, q, camera, render_params)?;
    let collision_free = result.collision_free && result.reached_goal != Some(false);
    Ok(Metrics {
        success: is_success(joint_error, collision_free),
        joint_error,
        joint_errors,
        path_length: result.path_length(),
        time_s: result.wall_time_s,
        psnr: psnr(&img, goal_image)?,
        collision_free,
    })
}

/// One line of the per-task log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub planner: String,
    pub bin: f64,
    pub seed: u64,
    pub success: bool,
    pub joint_error: f64,
    pub path_length: f64,
    pub time_s: f64,
    pub psnr: f64,
}

/// Aggregate over all tasks of one planner in one bin. Means are taken over
/// successful runs only and are `None` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub planner: String,
    pub bin: f64,
    /// Success rate in percent.
    pub sr: f64,
    pub time_mean: Option<f64>,
    pub pl_mean: Option<f64>,
    pub n_success: usize,
    pub n_total: usize,
}

/// Groups records by planner (in order of first appearance) and bin
/// (ascending).
pub fn aggregate(records: &[TaskRecord]) -> Vec<SummaryRow> {
    let mut planners: Vec<&str> = Vec::new();
    for r in records {
        if !planners.contains(&r.planner.as_str()) {
            planners.push(&r.planner);
        }
    }
    let mut rows = Vec::new();
    for p in planners {
        let mut bins: Vec<f64> = records.iter().filter(|r| r.planner == p).map(|r| r.bin).collect();
        bins.sort_by(f64::total_cmp);
        bins.dedup();
        for bin in bins {
            let group: Vec<&TaskRecord> =
                records.iter().filter(|r| r.planner == p && r.bin == bin).collect();
            let ok: Vec<&&TaskRecord> = group.iter().filter(|r| r.success).collect();
            let mean = |f: fn(&TaskRecord) -> f64| {
                (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            rows.push(SummaryRow {
                planner: p.to_string(),
                bin,
                sr: 100.0 * ok.len() as f64 / group.len() as f64,
                time_mean: mean(|r| r.time_s),
                pl_mean: mean(|r| r.path_length),
                n_success: ok.len(),
                n_total: group.len(),
            });
        }
    }
    rows
}

/// Success rate (percent) of `planner` over all its records.
pub fn success_rate(records: &[TaskRecord], planner: &str) -> f64 {
    let group: Vec<&TaskRecord> = records.iter().filter(|r| r.planner == planner).collect();
    if group.is_empty() {
        return 0.0;
    }
    100.0 * group.iter().filter(|r| r.success).count() as f64 / group.len() as f64
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SUMMARY_HEADER: &str = "planner,bin,sr,time_mean,pl_mean,n_success,n_total";
pub const LOG_HEADER: &str = "task_id,planner,bin,seed,success,joint_error,pl,time,psnr";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.planner,
            r.bin,
            r.sr,
            opt(r.time_mean),
            opt(r.pl_mean),
            r.n_success,
            r.n_total
        );
    }
    out
}

pub fn log_csv(records: &[TaskRecord]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.task_id, r.planner, r.bin, r.seed, r.success, r.joint_error, r.path_length, r.time_s, r.psnr
        );
    }
    out
}

/// Parses the output of [`log_csv`].
pub fn parse_log_csv(text: &str) -> Result<Vec<TaskRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == LOG_HEADER => {}
        other => {
            return Err(Error::InvalidParam(format!("unexpected log header {other:?}")));
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 9 {
                return Err(Error::InvalidParam(format!("log line {}: {} fields", i + 2, f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidParam(format!("log line {}: {s:?}: {e}", i + 2)))
            };
            Ok(TaskRecord {
                task_id: f[0].to_string(),
                planner: f[1].to_string(),
                bin: num(f[2])?,
                seed: f[3]
                    .parse()
                    .map_err(|e| Error::InvalidParam(format!("log line {}: seed: {e}", i + 2)))?,
                success: f[4]
                    .parse()
                    .map_err(|e| Error::InvalidParam(format!("log line {}: success: {e}", i + 2)))?,
                joint_error: num(f[5])?,
                path_length: num(f[6])?,
                time_s: num(f[7])?,
                psnr: num(f[8])?,
            })
        })
        .collect()
}
