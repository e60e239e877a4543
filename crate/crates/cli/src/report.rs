//! JSON views of analysis results.

use serde_json::{json, Map, Value};

use metron_core::fe_solver::SolutionSpace;
use metron_core::metricity::{GaugeIndex, IndDecision, IndexReport, MetricityCertificate, Verdict};
use metron_core::stat_models::AlphaScanReport;
use metron_core::tolerances::Tolerances;

use crate::json::{float, matrix12};

pub fn tolerances(t: &Tolerances) -> Value {
    json!({
        "kernel": float(t.kernel),
        "transport": float(t.transport),
        "rank": float(t.rank),
        "substitution": float(t.substitution),
        "witness": float(t.witness),
        "maxOrder": t.max_order,
        "grid": t.grid,
        "stepsPerEdge": t.steps_per_edge,
        "rankDraws": t.rank_draws,
    })
}

pub fn solution_space(s: &SolutionSpace) -> Value {
    json!({
        "dimension": s.dimension(),
        "basePoint": s.base_point.iter().map(|&v| float(v)).collect::<Vec<_>>(),
        "basis": s.basis.iter().map(matrix12).collect::<Vec<_>>(),
        "transportResidual": float(s.certified_residual),
        "substitutionResidual": float(s.substitution_residual),
        "constraintDimsByOrder": s.constraint.dims_by_order,
        "stabilizedAt": s.constraint.stabilized_at,
        "stabilized": s.is_exact(),
    })
}

/// Whether a solution space passes the stabilization and residual checks.
pub fn solution_certified(s: &SolutionSpace, t: &Tolerances) -> bool {
    s.is_exact() && s.certified_residual <= t.transport && s.substitution_residual <= t.substitution
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::RegularlyMetric => "RegularlyMetric",
        Verdict::SingularMetricOnly { .. } => "SingularMetricOnly",
        Verdict::NotMetric => "NotMetric",
    }
}

pub fn certificate(c: &MetricityCertificate) -> Value {
    let witness = c.witness.as_ref().map_or(Value::Null, |w| {
        json!({
            "value": matrix12(&w.value),
            "rank": w.rank,
            "rankConstant": w.rank_constant,
            "parallelResidual": float(w.parallel_residual),
            "minAbsDet": float(w.min_abs_det),
        })
    });
    json!({
        "verdict": verdict_name(&c.verdict),
        "verdictLabel": c.verdict.label(),
        "maxRank": match c.verdict {
            Verdict::RegularlyMetric => c.witness.as_ref().map_or(0, |w| w.rank),
            Verdict::SingularMetricOnly { max_rank } => max_rank,
            Verdict::NotMetric => 0,
        },
        "witness": witness,
        "dimS2": c.dim_s2,
        "dimOmega2": c.dim_omega2,
        "dimJ": c.dim_j,
        "exactSequenceHolds": c.exact_sequence_holds,
        "stabilized": c.stabilized,
        "certified": c.certified,
        "residuals": {
            "s2Transport": float(c.residuals.s2_transport),
            "omega2Transport": float(c.residuals.omega2_transport),
            "jTransport": float(c.residuals.j_transport),
            "s2Substitution": float(c.residuals.s2_substitution),
            "omega2Substitution": float(c.residuals.omega2_substitution),
            "jSubstitution": float(c.residuals.j_substitution),
            "witnessParallel": float(c.residuals.witness_parallel),
        },
        "toleranceProfile": tolerances(&c.tolerances),
        "s2": solution_space(&c.s2),
        "omega2": solution_space(&c.omega2),
        "j": solution_space(&c.j),
    })
}

fn gauge_index(g: &GaugeIndex) -> Value {
    json!({
        "value": g.value,
        "emptyJ": g.empty_j,
        "dimJ": g.dim_j,
        "stabilized": g.stabilized,
        "transportResidual": float(g.certified_residual),
    })
}

pub fn index(r: &IndexReport) -> Value {
    json!({
        "sb": r.sb,
        "sbGivenG": r.sb_given_g,
        "indDecision": match r.ind_decision {
            IndDecision::Zero => "Zero",
            IndDecision::AtLeastOne => "AtLeastOne",
        },
        "maxParallelMetricRank": r.max_parallel_metric_rank,
        "family": r
            .family
            .iter()
            .map(|m| json!({ "label": m.label, "metric": m.metric.to_strings(), "index": gauge_index(&m.index) }))
            .collect::<Vec<_>>(),
        "certificate": certificate(&r.certificate),
    })
}

pub fn index_certified(r: &IndexReport, t: &Tolerances) -> bool {
    r.certificate.certified
        && r.family.iter().all(|m| m.index.stabilized && m.index.certified_residual <= t.transport)
}

pub fn alpha_scan(r: &AlphaScanReport) -> Value {
    json!({
        "family": r.family.name(),
        "alphas": r.alphas.iter().map(|&a| float(a)).collect::<Vec<_>>(),
        "perAlpha": r
            .alphas
            .iter()
            .zip(&r.per_alpha)
            .map(|(&a, c)| json!({ "alpha": float(a), "certificate": certificate(c) }))
            .collect::<Vec<_>>(),
        "theorem4Consistent": r.theorem4_consistent,
        "counterSignal": r.counter_signal,
    })
}

/// Assembles the top-level report object.
pub fn envelope(command: &str, problem_echo: Value, seed: u64, t: &Tolerances, result: Value, certified: bool, timing_ms: Option<f64>) -> Value {
    let mut m = Map::new();
    m.insert("toolVersion".into(), json!(concat!("metron ", env!("CARGO_PKG_VERSION"))));
    m.insert("command".into(), json!(command));
    m.insert("problemEcho".into(), problem_echo);
    m.insert("seed".into(), json!(seed));
    m.insert("toleranceProfile".into(), tolerances(t));
    m.insert("certified".into(), json!(certified));
    m.insert("result".into(), result);
    m.insert("timingMs".into(), timing_ms.map_or(Value::Null, float));
    Value::Object(m)
}
