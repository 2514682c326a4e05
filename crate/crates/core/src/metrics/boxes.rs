use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::assignment::max_weight_assignment;
use crate::schema::{ElementClass, PixelBox, QuantBox};

/// IoU threshold used by every box metric unless overridden.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.1;

pub trait BoxGeometry {
    fn area(&self) -> f64;
    fn intersection(&self, other: &Self) -> f64;
}

impl BoxGeometry for QuantBox {
    fn area(&self) -> f64 {
        QuantBox::area(self) as f64
    }

    fn intersection(&self, other: &Self) -> f64 {
        self.intersection_area(other) as f64
    }
}

impl BoxGeometry for PixelBox {
    fn area(&self) -> f64 {
        PixelBox::area(self)
    }

    fn intersection(&self, other: &Self) -> f64 {
        self.intersection_area(other)
    }
}

/// Intersection over union. Zero-area boxes score 0 against everything.
pub fn iou<B: BoxGeometry>(a: &B, b: &B) -> f64 {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = a.intersection(b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// 1 when a prediction exists and overlaps the gold box at `threshold` or more.
pub fn acc_at_iou<B: BoxGeometry>(pred: Option<&B>, gold: &B, threshold: f64) -> f64 {
    match pred {
        Some(p) if iou(p, gold) >= threshold => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub class: ElementClass,
    pub pred_index: usize,
    pub gold_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> Self {
        let (precision, recall) = match (n_pred, n_gold) {
            (0, 0) => (1.0, 1.0),
            _ => (ratio(tp, n_pred), ratio(tp, n_gold)),
        };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { tp, fp: n_pred - tp, fn_: n_gold - tp, precision, recall, f1 }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_class: BTreeMap<ElementClass, ClassMetrics>,
    pub matches: Vec<MatchedPair>,
}

impl DetectionMetrics {
    pub fn total_iou(&self) -> f64 {
        self.matches.iter().map(|m| m.iou).sum()
    }
}

/// Per-class one-to-one matching of predicted and gold boxes.
///
/// Within each class the matching has the largest possible number of pairs
/// with IoU at or above `threshold`; among those, the largest total IoU.
/// Counts are then micro-averaged over classes.
pub fn match_detections<B: BoxGeometry>(
    pred: &[(ElementClass, B)],
    gold: &[(ElementClass, B)],
    threshold: f64,
) -> DetectionMetrics {
    let mut by_class: BTreeMap<&ElementClass, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, (c, _)) in pred.iter().enumerate() {
        by_class.entry(c).or_default().0.push(i);
    }
    for (j, (c, _)) in gold.iter().enumerate() {
        by_class.entry(c).or_default().1.push(j);
    }

    let mut per_class = BTreeMap::new();
    let mut matches = Vec::new();
    for (class, (pi, gi)) in by_class {
        let ious: Vec<Vec<f64>> =
            pi.iter().map(|&i| gi.iter().map(|&j| iou(&pred[i].1, &gold[j].1)).collect()).collect();
        // an extra pair must outweigh any IoU total over fewer pairs
        let bonus = (pi.len().min(gi.len()) + 1) as f64;
        let weights: Vec<Vec<f64>> = ious
            .iter()
            .map(|row| row.iter().map(|&v| if v >= threshold && v > 0.0 { bonus + v } else { 0.0 }).collect())
            .collect();
        let assignment = max_weight_assignment(&weights);
        let mut tp = 0;
        for (r, col) in assignment.into_iter().enumerate() {
            let Some(c) = col else { continue };
            if weights[r][c] > 0.0 {
                tp += 1;
                matches.push(MatchedPair {
                    class: class.clone(),
                    pred_index: pi[r],
                    gold_index: gi[c],
                    iou: ious[r][c],
                });
            }
        }
        per_class.insert(class.clone(), ClassMetrics::from_counts(tp, pi.len(), gi.len()));
    }
    matches.sort_by_key(|m| (m.pred_index, m.gold_index));

    let overall = ClassMetrics::from_counts(matches.len(), pred.len(), gold.len());
    DetectionMetrics {
        precision: overall.precision,
        recall: overall.recall,
        f1: overall.f1,
        tp: overall.tp,
        fp: overall.fp,
        fn_: overall.fn_,
        per_class,
        matches,
    }
}
