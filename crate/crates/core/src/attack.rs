//! Result and trace types shared by every attack.

use serde::Serialize;

/// Outcome of one attack run on one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    /// `‖y_final − r‖²`
    pub rho_star: f64,
    pub steps: usize,
    pub success: bool,
    pub clean_distortion: f64,
    pub final_distortion: f64,
    /// distortion after each step, starting with the clean value
    pub distortion_trace: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

impl AttackResult {
    /// Target met before any perturbation.
    pub fn already_met(clean_distortion: f64) -> Self {
        Self {
            rho_star: 0.0,
            steps: 0,
            success: true,
            clean_distortion,
            final_distortion: clean_distortion,
            distortion_trace: vec![clean_distortion],
            trace: Vec::new(),
        }
    }
}

/// One JSON-lines trace record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub step: usize,
    /// power of this step's increment
    pub added_power: f64,
    /// `‖y − r‖²` after the step
    pub cumulative_power: f64,
    pub distortion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoded: Option<bool>,
}

/// Serializes trace entries as JSON lines.
pub fn trace_jsonl(entries: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("trace entries serialize"));
        out.push('\n');
    }
    out
}
