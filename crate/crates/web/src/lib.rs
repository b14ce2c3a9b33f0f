//! Browser bindings. Each export takes plain strings and numbers and returns
//! a JSON document, or an error message.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dupcode::codes::{
    plan_degraded_read, plan_repair, tolerance, CodeScheme, ErasurePattern, RepairPlan,
    StripeLayout,
};
use dupcode::mapsched::{locality_sweep, summarize, SchedulerKind, SweepConfig};
use dupcode::reliability::{mttdl_analytic, FailureModel, RepairMode};

fn scheme(name: &str) -> Result<CodeScheme, String> {
    name.trim().parse().map_err(|e| format!("{e}"))
}

fn node_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad node id '{s}'")))
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PlanView {
    scheme: String,
    nodes: usize,
    tolerance: usize,
    overhead: f64,
    hosts: Vec<Vec<usize>>,
    plan: RepairPlan,
}

/// Repair plan for the failed nodes of one canonical stripe. With
/// `read_block >= 0` the plan is a degraded read of that block instead.
#[wasm_bindgen]
pub fn repair_plan(scheme_name: &str, failed: &str, read_block: i32) -> Result<String, String> {
    let s = scheme(scheme_name)?;
    let layout = StripeLayout::canonical(s);
    let pattern = ErasurePattern::new(node_list(failed)?);
    let plan = if read_block >= 0 {
        plan_degraded_read(&layout, read_block as usize, &pattern)
    } else {
        plan_repair(&layout, &pattern)
    }
    .map_err(|e| e.to_string())?;
    to_json(&PlanView {
        scheme: s.to_string(),
        nodes: s.code_length(),
        tolerance: tolerance(s),
        overhead: s.storage_overhead().value(),
        hosts: layout.hosts.clone(),
        plan,
    })
}

#[derive(Serialize)]
struct MttdlView {
    scheme: String,
    hours: f64,
    years: f64,
    truncated_hours: f64,
    states: usize,
}

/// Analytic MTTDL of one code group.
#[wasm_bindgen]
pub fn mttdl(
    scheme_name: &str,
    mttf_hours: f64,
    mttr_hours: f64,
    mode: &str,
) -> Result<String, String> {
    let s = scheme(scheme_name)?;
    let mode: RepairMode = mode.parse().map_err(|e| format!("{e}"))?;
    let model = FailureModel::from_mttf_mttr(mttf_hours, mttr_hours, mode)
        .map_err(|e| e.to_string())?;
    let a = mttdl_analytic(s, model).map_err(|e| e.to_string())?;
    to_json(&MttdlView {
        scheme: s.to_string(),
        hours: a.hours,
        years: a.years(),
        truncated_hours: a.truncated_hours,
        states: a.states,
    })
}

#[derive(Serialize)]
struct CurvePoint {
    load_pct: f64,
    mean_locality_pct: f64,
    std_locality_pct: f64,
}

/// Locality against load for one scheme and scheduler on a 25-node cluster.
#[wasm_bindgen]
pub fn locality_curve(
    scheme_name: &str,
    scheduler: &str,
    slots: u32,
    reps: u32,
    seed: u32,
) -> Result<String, String> {
    if slots == 0 || reps == 0 || reps > 50 {
        return Err("slots must be positive and reps in 1..=50".into());
    }
    let kind: SchedulerKind = scheduler.parse().map_err(|e| format!("{e}"))?;
    let mut cfg = SweepConfig::new(seed as u64);
    cfg.schemes = vec![scheme(scheme_name)?];
    cfg.schedulers = vec![kind];
    cfg.slots = vec![slots as usize];
    cfg.loads = (1..=10).map(|i| 10.0 * i as f64).collect();
    cfg.repetitions = reps as usize;
    let rows = locality_sweep(&cfg).map_err(|e| e.to_string())?;
    let points: Vec<CurvePoint> = summarize(&rows)
        .into_iter()
        .map(|s| CurvePoint {
            load_pct: s.load_pct,
            mean_locality_pct: s.mean_locality_pct,
            std_locality_pct: s.std_locality_pct,
        })
        .collect();
    to_json(&points)
}
