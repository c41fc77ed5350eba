use serde::{Deserialize, Serialize};

use crate::alignment::Strategy;
use crate::error::{Error, Result};
use crate::geometry::Box2D;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Distance between box centers in pixels.
pub fn center_offset(a: &Box2D, b: &Box2D) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// One projected box compared with its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub vehicle: usize,
    pub scan_index: usize,
    pub object_id: u64,
    pub camera_id: String,
    pub frame_time: f64,
    /// `None` when the annotated box does not land in the image.
    pub projected: Option<Box2D>,
    pub ground_truth: Box2D,
    pub iou: f64,
    /// Undefined (`None`) for empty projections.
    pub center_offset: Option<f64>,
}

impl MatchRecord {
    pub fn new(
        vehicle: usize,
        scan_index: usize,
        object_id: u64,
        camera_id: impl Into<String>,
        frame_time: f64,
        projected: Option<Box2D>,
        ground_truth: Box2D,
    ) -> Self {
        let (iou, center_offset) = match &projected {
            Some(p) => (iou(p, &ground_truth), Some(center_offset(p, &ground_truth))),
            None => (0.0, None),
        };
        MatchRecord {
            vehicle,
            scan_index,
            object_id,
            camera_id: camera_id.into(),
            frame_time,
            projected,
            ground_truth,
            iou,
            center_offset,
        }
    }
}

/// Fraction of records with IoU at or above `threshold`.
pub fn recall_at(matches: &[MatchRecord], threshold: f64) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::EmptyMatches);
    }
    let hits = matches.iter().filter(|m| m.iou >= threshold).count();
    Ok(hits as f64 / matches.len() as f64)
}

pub fn average_iou(matches: &[MatchRecord]) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::EmptyMatches);
    }
    Ok(matches.iter().map(|m| m.iou).sum::<f64>() / matches.len() as f64)
}

/// Mean over records with a defined offset; `None` if there are none.
pub fn mean_center_offset(matches: &[MatchRecord]) -> Option<f64> {
    let offsets: Vec<f64> = matches.iter().filter_map(|m| m.center_offset).collect();
    (!offsets.is_empty()).then(|| offsets.iter().sum::<f64>() / offsets.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub threshold: f64,
    pub recall: f64,
}

/// Relative changes against the baseline row, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDeltas {
    pub average_iou: Option<f64>,
    pub recall_at: Vec<Option<f64>>,
    pub mean_center_offset_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: Strategy,
    pub matches: usize,
    pub average_iou: f64,
    pub recall_at: Vec<RecallPoint>,
    pub mean_center_offset_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<RowDeltas>,
}

impl MetricsRow {
    pub fn from_matches(strategy: Strategy, matches: &[MatchRecord], thresholds: &[f64]) -> Result<Self> {
        Ok(MetricsRow {
            strategy,
            matches: matches.len(),
            average_iou: average_iou(matches)?,
            recall_at: thresholds
                .iter()
                .map(|&threshold| {
                    Ok(RecallPoint {
                        threshold,
                        recall: recall_at(matches, threshold)?,
                    })
                })
                .collect::<Result<_>>()?,
            mean_center_offset_px: mean_center_offset(matches),
            deltas: None,
        })
    }

    pub fn recall(&self, threshold: f64) -> Option<f64> {
        self.recall_at
            .iter()
            .find(|r| r.threshold == threshold)
            .map(|r| r.recall)
    }
}

/// `(x − baseline) / baseline` in percent; `None` for a zero baseline.
pub fn relative_delta(x: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (x - baseline) / baseline)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub thresholds: Vec<f64>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    /// Fills in deltas of every row against the first (baseline) row.
    pub fn new(thresholds: Vec<f64>, mut rows: Vec<MetricsRow>) -> Self {
        if let Some(base) = rows.first().cloned() {
            for row in rows.iter_mut().skip(1) {
                row.deltas = Some(RowDeltas {
                    average_iou: relative_delta(row.average_iou, base.average_iou),
                    recall_at: row
                        .recall_at
                        .iter()
                        .zip(&base.recall_at)
                        .map(|(r, b)| relative_delta(r.recall, b.recall))
                        .collect(),
                    mean_center_offset_px: match (row.mean_center_offset_px, base.mean_center_offset_px) {
                        (Some(x), Some(b)) => relative_delta(x, b),
                        _ => None,
                    },
                });
            }
        }
        MetricsTable { thresholds, rows }
    }

    pub fn row(&self, strategy: Strategy) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}
