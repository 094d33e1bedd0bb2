//! Evaluation: coverage, occupied-class map IoU, coverage-curve AUC and
//! multi-trace aggregation.

use crate::explore::ExplorationTrace;
use crate::grid::{CellState, GridError, OccupancyGrid};

/// Fraction of cells no longer Unknown in the belief. Carved cells are Free
/// in the belief, so they count as observed.
pub fn coverage(belief: &OccupancyGrid, gt: &OccupancyGrid) -> Result<f64, GridError> {
    if !belief.same_lattice(gt) {
        return Err(GridError::LatticeMismatch(
            belief.width(),
            belief.height(),
            gt.width(),
            gt.height(),
        ));
    }
    let observed = belief.len() - belief.count(CellState::Unknown);
    Ok(observed as f64 / gt.len() as f64)
}

/// IoU over the Occupied class; two wall-free maps compare as identical.
pub fn map_iou(pred: &OccupancyGrid, gt: &OccupancyGrid) -> Result<f64, GridError> {
    if !pred.same_lattice(gt) {
        return Err(GridError::LatticeMismatch(
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height(),
        ));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for ((_, a), (_, b)) in pred.iter_cells().zip(gt.iter_cells()) {
        let a = a == CellState::Occupied;
        let b = b == CellState::Occupied;
        if a && b {
            inter += 1;
        }
        if a || b {
            union += 1;
        }
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Ordered (t, coverage) pairs.
#[derive(Debug, Clone)]
pub struct CoverageCurve {
    pub points: Vec<(f64, f64)>,
}

impl CoverageCurve {
    pub fn from_trace(trace: &ExplorationTrace) -> Self {
        CoverageCurve {
            points: trace
                .records
                .iter()
                .map(|r| (r.t as f64, r.coverage))
                .collect(),
        }
    }
}

/// Trapezoidal integral of the curve over [0, t_max], normalized by t_max.
/// The final value is extended to t_max when the curve ends early.
pub fn auc(curve: &CoverageCurve, t_max: f64) -> f64 {
    assert!(curve.points.len() >= 2, "AUC needs at least two points");
    assert!(t_max > 0.0);
    let mut area = 0.0;
    let pts = &curve.points;
    for w in pts.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        let t1c = t1.min(t_max);
        if t1c <= t0 {
            continue;
        }
        // linear interpolation when clipped at t_max
        let v1c = if t1c < t1 {
            v0 + (v1 - v0) * (t1c - t0) / (t1 - t0)
        } else {
            v1
        };
        area += 0.5 * (v0 + v1c) * (t1c - t0);
    }
    let (t_last, v_last) = *pts.last().unwrap();
    if t_last < t_max {
        area += v_last * (t_max - t_last);
    }
    area / t_max
}

/// One aggregate row: per-mode mean/std of a metric, optionally bucketed by
/// coverage decile.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: String,
    pub metric: String,
    /// "-" for whole-run metrics, "d0".."d9" for coverage deciles.
    pub bucket: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate traces: per-mode coverage AUC (mean/std) and per-mode IoU
/// bucketed by coverage deciles.
pub fn aggregate(traces: &[ExplorationTrace], t_max: f64) -> Vec<SummaryRow> {
    assert!(!traces.is_empty());
    let mut modes: Vec<String> = traces.iter().map(|t| t.mode.as_str().to_string()).collect();
    modes.sort();
    modes.dedup();
    let mut rows = Vec::new();
    for mode in &modes {
        let group: Vec<&ExplorationTrace> = traces
            .iter()
            .filter(|t| t.mode.as_str() == mode)
            .collect();
        let aucs: Vec<f64> = group
            .iter()
            .filter(|t| t.records.len() >= 2)
            .map(|t| auc(&CoverageCurve::from_trace(t), t_max))
            .collect();
        if !aucs.is_empty() {
            let (mean, std) = mean_std(&aucs);
            rows.push(SummaryRow {
                mode: mode.clone(),
                metric: "coverage_auc".into(),
                bucket: "-".into(),
                mean,
                std,
                n: aucs.len(),
            });
        }
        for d in 0..10usize {
            let lo = d as f64 / 10.0;
            let hi = (d + 1) as f64 / 10.0;
            let ious: Vec<f64> = group
                .iter()
                .flat_map(|t| t.records.iter())
                .filter(|r| r.coverage >= lo && r.coverage < hi)
                .map(|r| r.iou)
                .collect();
            if !ious.is_empty() {
                let (mean, std) = mean_std(&ious);
                rows.push(SummaryRow {
                    mode: mode.clone(),
                    metric: "iou".into(),
                    bucket: format!("d{d}"),
                    mean,
                    std,
                    n: ious.len(),
                });
            }
        }
    }
    rows
}

pub fn write_summary_csv(rows: &[SummaryRow], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "mode,metric,bucket,mean,std,n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{}",
            r.mode, r.metric, r.bucket, r.mean, r.std, r.n
        )?;
    }
    Ok(())
}
