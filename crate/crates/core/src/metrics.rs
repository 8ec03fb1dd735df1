//! Confusion matrices and the per-class / averaged segmentation scores.
//!
//! Metrics are always derived from integer confusion counts accumulated over
//! every evaluated pixel; per-tile scores are never averaged. A score whose
//! denominator is zero is `None` ("undefined") rather than 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{validate_labels, LabelMap, CLASS_NAMES, NUM_CLASSES};

/// 4x4 pixel counts: rows are true classes, columns predicted classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    /// Adds one count per pixel pair. Labels are validated before any count
    /// changes.
    pub fn add_pixels(&mut self, truth: &[u8], pred: &[u8]) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::shape(format!(
                "truth has {} pixels, prediction {}",
                truth.len(),
                pred.len()
            )));
        }
        validate_labels(truth)?;
        validate_labels(pred)?;
        for (&t, &p) in truth.iter().zip(pred) {
            self.counts[t as usize][p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    /// Pixels predicted as `c` whose true class differs.
    pub fn false_positives(&self, c: usize) -> u64 {
        self.predicted(c) - self.counts[c][c]
    }

    /// Pixels of true class `c` predicted as anything else.
    pub fn false_negatives(&self, c: usize) -> u64 {
        self.support(c) - self.counts[c][c]
    }

    /// Ground-truth pixels of class `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Accumulates a batch of label maps into `cm`.
pub fn accumulate(mut cm: ConfusionMatrix, truth: &LabelMap, pred: &LabelMap) -> Result<ConfusionMatrix> {
    if (truth.batch, truth.height, truth.width) != (pred.batch, pred.height, pred.width) {
        return Err(Error::shape("truth and prediction label maps differ in shape"));
    }
    cm.add_pixels(&truth.data, &pred.data)?;
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
    pub support: u64,
    pub predicted: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)`, F1 and IoU `TP/(TP+FP+FN)`.
///
/// F1 is evaluated as `2TP/(2TP+FP+FN)`, equal to `2PR/(P+R)` whenever both
/// are defined, and still defined (zero) for a class that is predicted but
/// absent from the truth.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> [ClassMetrics; NUM_CLASSES] {
    std::array::from_fn(|c| {
        let tp = cm.true_positives(c);
        let fp = cm.false_positives(c);
        let fn_ = cm.false_negatives(c);
        ClassMetrics {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            iou: ratio(tp, tp + fp + fn_),
            support: tp + fn_,
            predicted: tp + fp,
        }
    })
}

/// `2PR/(P+R)`; `None` when both are zero.
pub fn f1_from_precision_recall(p: f64, r: f64) -> Option<f64> {
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

/// `PR/(P+R-PR)`, the IoU implied by a precision/recall pair.
pub fn iou_from_precision_recall(p: f64, r: f64) -> Option<f64> {
    let den = p + r - p * r;
    (den > 0.0).then(|| p * r / den)
}

/// What averaging does with undefined per-class values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UndefinedPolicy {
    /// Leave undefined classes out (weights renormalized over the rest).
    #[default]
    Skip,
    /// Refuse to average when any class is undefined.
    Fail,
}

/// Unweighted mean over classes.
pub fn macro_average(values: &[Option<f64>], policy: UndefinedPolicy) -> Result<Option<f64>> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if policy == UndefinedPolicy::Fail && defined.len() != values.len() {
        return Err(Error::UndefinedMetric(
            "macro average over a class with an undefined value".into(),
        ));
    }
    if defined.is_empty() {
        return Ok(None);
    }
    Ok(Some(defined.iter().sum::<f64>() / defined.len() as f64))
}

/// `sum_c p_c M_c` with pixel proportions `p_c`.
pub fn weighted_average(
    values: &[Option<f64>],
    proportions: &[f64],
    policy: UndefinedPolicy,
) -> Result<Option<f64>> {
    if values.len() != proportions.len() {
        return Err(Error::shape("one proportion per class value is required"));
    }
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (v, &p) in values.iter().zip(proportions) {
        match v {
            Some(v) => {
                acc += p * v;
                mass += p;
            }
            None if p > 0.0 && policy == UndefinedPolicy::Fail => {
                return Err(Error::UndefinedMetric(
                    "weighted average over a supported class with an undefined value".into(),
                ))
            }
            None => {}
        }
    }
    if mass <= 0.0 {
        return Ok(None);
    }
    Ok(Some(acc / mass))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
    pub proportion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassReport>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total_pixels: u64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix, policy: UndefinedPolicy) -> Result<Self> {
        let per = per_class_metrics(cm);
        let total = cm.total();
        let proportions: Vec<f64> = per
            .iter()
            .map(|m| if total > 0 { m.support as f64 / total as f64 } else { 0.0 })
            .collect();
        let pick = |f: fn(&ClassMetrics) -> Option<f64>| per.iter().map(f).collect::<Vec<_>>();
        let columns = [
            pick(|m| m.precision),
            pick(|m| m.recall),
            pick(|m| m.f1),
            pick(|m| m.iou),
        ];
        let mut macro_vals = [None; 4];
        let mut weighted_vals = [None; 4];
        for (i, col) in columns.iter().enumerate() {
            macro_vals[i] = macro_average(col, policy)?;
            weighted_vals[i] = weighted_average(col, &proportions, policy)?;
        }
        let to_avg = |v: [Option<f64>; 4]| Averages {
            precision: v[0],
            recall: v[1],
            f1: v[2],
            iou: v[3],
        };
        Ok(MetricsReport {
            classes: per
                .iter()
                .zip(&proportions)
                .enumerate()
                .map(|(c, (m, &p))| ClassReport {
                    class: CLASS_NAMES[c].to_string(),
                    metrics: *m,
                    proportion: p,
                })
                .collect(),
            macro_avg: to_avg(macro_vals),
            weighted_avg: to_avg(weighted_vals),
            total_pixels: total,
            confusion: *cm,
        })
    }
}

/// Macro-average IoU of a confusion matrix under [`UndefinedPolicy::Skip`]
/// (0 when nothing is defined).
pub fn macro_iou(cm: &ConfusionMatrix) -> f64 {
    let ious: Vec<Option<f64>> = per_class_metrics(cm).iter().map(|m| m.iou).collect();
    macro_average(&ious, UndefinedPolicy::Skip)
        .expect("skip policy never fails")
        .unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Rows,
    Columns,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMatrix {
    pub axis: Axis,
    pub values: [[f64; NUM_CLASSES]; NUM_CLASSES],
    /// Rows (or columns) with no counts, left as zeros.
    pub undefined: [bool; NUM_CLASSES],
}

/// Divides each row (recall view) or column (precision view) by its sum.
pub fn normalize(cm: &ConfusionMatrix, axis: Axis) -> NormalizedMatrix {
    let mut values = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    let mut undefined = [false; NUM_CLASSES];
    for i in 0..NUM_CLASSES {
        let sum = match axis {
            Axis::Rows => cm.support(i),
            Axis::Columns => cm.predicted(i),
        };
        if sum == 0 {
            undefined[i] = true;
            continue;
        }
        for j in 0..NUM_CLASSES {
            let (r, c) = match axis {
                Axis::Rows => (i, j),
                Axis::Columns => (j, i),
            };
            values[r][c] = cm.counts[r][c] as f64 / sum as f64;
        }
    }
    NormalizedMatrix {
        axis,
        values,
        undefined,
    }
}

/// CSV with a header row of predicted classes and one row per true class.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("true\\pred");
    for name in CLASS_NAMES {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (t, row) in cm.counts.iter().enumerate() {
        s.push_str(CLASS_NAMES[t]);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn normalized_csv(m: &NormalizedMatrix) -> String {
    let mut s = String::from("true\\pred");
    for name in CLASS_NAMES {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (t, row) in m.values.iter().enumerate() {
        s.push_str(CLASS_NAMES[t]);
        for v in row {
            let _ = write!(s, ",{v:.6}");
        }
        s.push('\n');
    }
    s
}

/// World-coordinate extent of the study area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// One evaluated tile: its top-left world coordinate and its pixel counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileEvaluation {
    pub origin_x: f64,
    pub origin_y: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub row: usize,
    pub col: usize,
    pub tiles: usize,
    pub confusion: ConfusionMatrix,
    pub iou: [Option<f64>; NUM_CLASSES],
    pub macro_iou: Option<f64>,
    /// Classes with no ground-truth pixels in this region.
    pub no_support: [bool; NUM_CLASSES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub bounds: BoundingBox,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row 0 at the northern edge.
    pub regions: Vec<RegionMetrics>,
}

impl SpatialGrid {
    pub fn region(&self, row: usize, col: usize) -> &RegionMetrics {
        &self.regions[row * self.cols + col]
    }
}

/// `(row, col)` of the sub-region holding a point; row 0 is the top (max y).
pub fn region_of(bounds: &BoundingBox, rows: usize, cols: usize, x: f64, y: f64) -> Option<(usize, usize)> {
    if !bounds.contains(x, y) {
        return None;
    }
    let fx = (x - bounds.min_x) / (bounds.max_x - bounds.min_x);
    let fy = (bounds.max_y - y) / (bounds.max_y - bounds.min_y);
    let col = ((fx * cols as f64).floor() as usize).min(cols - 1);
    let row = ((fy * rows as f64).floor() as usize).min(rows - 1);
    Some((row, col))
}

/// Per-sub-region IoU over a `rows x cols` partition of `bounds`; each tile
/// is assigned by its origin.
pub fn spatial_miou(
    tiles: &[TileEvaluation],
    bounds: BoundingBox,
    rows: usize,
    cols: usize,
) -> Result<SpatialGrid> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid needs at least one row and one column"));
    }
    if !(bounds.max_x > bounds.min_x && bounds.max_y > bounds.min_y) {
        return Err(Error::invalid("bounding box is empty"));
    }
    let mut cms = vec![ConfusionMatrix::new(); rows * cols];
    let mut counts = vec![0usize; rows * cols];
    for (i, t) in tiles.iter().enumerate() {
        let (r, c) = region_of(&bounds, rows, cols, t.origin_x, t.origin_y).ok_or_else(|| {
            Error::invalid(format!(
                "tile {i} at ({}, {}) lies outside the bounding box",
                t.origin_x, t.origin_y
            ))
        })?;
        cms[r * cols + c].merge(&t.confusion);
        counts[r * cols + c] += 1;
    }
    let regions = cms
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (cm, &n))| {
            let per = per_class_metrics(cm);
            let iou = per.map(|m| m.iou);
            RegionMetrics {
                row: i / cols,
                col: i % cols,
                tiles: n,
                confusion: *cm,
                iou,
                macro_iou: macro_average(&iou, UndefinedPolicy::Skip).expect("skip never fails"),
                no_support: per.map(|m| m.support == 0),
            }
        })
        .collect();
    Ok(SpatialGrid {
        bounds,
        rows,
        cols,
        regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cm_of(truth: &[u8], pred: &[u8]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new();
        cm.add_pixels(truth, pred).unwrap();
        cm
    }

    #[test]
    fn hand_enumerated_accumulation() {
        let truth = LabelMap::new(1, 2, 2, vec![0, 1, 2, 3]).unwrap();
        let pred = LabelMap::new(1, 2, 2, vec![0, 2, 2, 3]).unwrap();
        let cm = accumulate(ConfusionMatrix::new(), &truth, &pred).unwrap();
        let mut expected = [[0u64; 4]; 4];
        expected[0][0] = 1;
        expected[1][2] = 1;
        expected[2][2] = 1;
        expected[3][3] = 1;
        assert_eq!(cm.counts, expected);
    }

    #[test]
    fn perfect_prediction_is_diagonal_and_scores_one() {
        let labels = [0, 1, 2, 3, 3, 2, 0, 0];
        let cm = cm_of(&labels, &labels);
        for t in 0..4 {
            for p in 0..4 {
                if t != p {
                    assert_eq!(cm.counts[t][p], 0);
                }
            }
        }
        for m in per_class_metrics(&cm) {
            assert_eq!(
                (m.precision, m.recall, m.f1, m.iou),
                (Some(1.0), Some(1.0), Some(1.0), Some(1.0))
            );
        }
    }

    #[test]
    fn out_of_range_labels_rejected_without_side_effects() {
        let mut cm = ConfusionMatrix::new();
        assert!(matches!(
            cm.add_pixels(&[0, 4], &[0, 0]),
            Err(Error::LabelOutOfRange { value: 4, index: 1 })
        ));
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn table_rows_satisfy_identities() {
        // (precision, recall, reported F1, reported IoU)
        let rows = [
            (0.966, 0.972, 0.969, 0.940),
            (0.789, 0.764, 0.776, 0.635),
        ];
        for (p, r, f1, iou) in rows {
            assert!((f1_from_precision_recall(p, r).unwrap() - f1).abs() <= 0.001);
            assert!((iou_from_precision_recall(p, r).unwrap() - iou).abs() <= 0.001);
        }
    }

    #[test]
    fn averages_of_table_columns() {
        let iou = [Some(0.940), Some(0.354), Some(0.635), Some(0.331)];
        let f1 = [Some(0.969), Some(0.523), Some(0.776), Some(0.497)];
        let m = macro_average(&iou, UndefinedPolicy::Skip).unwrap().unwrap();
        assert!((m - 0.565).abs() <= 0.001);
        let m = macro_average(&f1, UndefinedPolicy::Skip).unwrap().unwrap();
        assert!((m - 0.692).abs() <= 0.002);

        let support = [3.5e8, 4.3e6, 6.4e6, 1.5e7];
        let total: f64 = support.iter().sum();
        let p: Vec<f64> = support.iter().map(|s| s / total).collect();
        let w = weighted_average(&iou, &p, UndefinedPolicy::Skip).unwrap().unwrap();
        assert!((w - 0.903).abs() <= 0.003);
        let w = weighted_average(&f1, &p, UndefinedPolicy::Skip).unwrap().unwrap();
        assert!((w - 0.942).abs() <= 0.003);
        let one_hot = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(
            weighted_average(&iou, &one_hot, UndefinedPolicy::Skip).unwrap(),
            Some(0.940)
        );
        let same = [Some(0.4); 4];
        assert!((macro_average(&same, UndefinedPolicy::Skip).unwrap().unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn undefined_policy() {
        let vals = [Some(1.0), None, Some(0.5), Some(0.0)];
        assert_eq!(macro_average(&vals, UndefinedPolicy::Skip).unwrap(), Some(0.5));
        assert!(macro_average(&vals, UndefinedPolicy::Fail).is_err());
        // class predicted but absent from truth: IoU 0, not undefined
        let cm = cm_of(&[0, 0, 0], &[0, 0, 1]);
        let per = per_class_metrics(&cm);
        assert_eq!(per[1].iou, Some(0.0));
        assert_eq!(per[1].recall, None);
        assert_eq!(per[2].iou, None);
        // background IoU 2/3, pipeline 0, road/cutline excluded
        assert!((macro_iou(&cm) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_matches_recall_and_precision() {
        let cm = ConfusionMatrix::from_counts([[50, 3, 1, 0], [4, 10, 0, 2], [2, 0, 20, 1], [0, 0, 0, 0]]);
        let per = per_class_metrics(&cm);
        let rows = normalize(&cm, Axis::Rows);
        let cols = normalize(&cm, Axis::Columns);
        assert!(rows.undefined[3]);
        for c in 0..3 {
            assert!((rows.values[c][c] - per[c].recall.unwrap()).abs() < 1e-12);
            assert!((cols.values[c][c] - per[c].precision.unwrap()).abs() < 1e-12);
            assert!((rows.values[c].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let diag = ConfusionMatrix::from_counts([[5, 0, 0, 0], [0, 2, 0, 0], [0, 0, 1, 0], [0, 0, 0, 9]]);
        for axis in [Axis::Rows, Axis::Columns] {
            let n = normalize(&diag, axis);
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(n.values[i][j], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn csv_layout() {
        let cm = ConfusionMatrix::from_counts([[1, 2, 3, 4], [0; 4], [0; 4], [0, 0, 0, 7]]);
        let csv = confusion_csv(&cm);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "true\\pred,background,pipeline,road,cutline");
        assert_eq!(lines[1], "background,1,2,3,4");
        assert_eq!(lines[4], "cutline,0,0,0,7");
    }

    fn bounds() -> BoundingBox {
        BoundingBox {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 100.0,
            max_y: 100.0,
        }
    }

    #[test]
    fn spatial_single_region_equals_global() {
        let tiles: Vec<TileEvaluation> = (0..5)
            .map(|i| TileEvaluation {
                origin_x: i as f64 * 10.0,
                origin_y: 90.0 - i as f64 * 5.0,
                confusion: cm_of(&[0, 1, 2, (i % 4) as u8], &[0, 2, 2, 3]),
            })
            .collect();
        let grid = spatial_miou(&tiles, bounds(), 1, 1).unwrap();
        let mut global = ConfusionMatrix::new();
        tiles.iter().for_each(|t| global.merge(&t.confusion));
        assert_eq!(grid.region(0, 0).confusion, global);
        assert_eq!(grid.region(0, 0).macro_iou, Some(macro_iou(&global)));
    }

    #[test]
    fn spatial_flags_unsupported_false_positives() {
        let tiles = [TileEvaluation {
            origin_x: 10.0,
            origin_y: 90.0,
            confusion: cm_of(&[0, 0, 2, 2], &[1, 0, 2, 2]),
        }];
        let grid = spatial_miou(&tiles, bounds(), 2, 2).unwrap();
        let r = grid.region(0, 0);
        assert_eq!(r.iou[1], Some(0.0));
        assert!(r.no_support[1]);
        assert!(!r.no_support[2]);
        assert!(grid.region(1, 1).no_support.iter().all(|&f| f));
        assert_eq!(grid.region(1, 1).macro_iou, None);
    }

    #[test]
    fn spatial_partition_matches_recomputation() {
        let placed = [(5.0, 95.0), (60.0, 95.0), (5.0, 20.0), (70.0, 10.0), (49.0, 51.0), (100.0, 0.0)];
        let tiles: Vec<TileEvaluation> = placed
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TileEvaluation {
                origin_x: x,
                origin_y: y,
                confusion: cm_of(&[(i % 4) as u8, 0], &[((i + 1) % 4) as u8, 0]),
            })
            .collect();
        let grid = spatial_miou(&tiles, bounds(), 2, 2).unwrap();
        // hand assignment: (row, col) with row 0 at the top
        let expected_cell = [(0, 0), (0, 1), (1, 0), (1, 1), (0, 0), (1, 1)];
        for r in 0..2 {
            for c in 0..2 {
                let mut oracle = ConfusionMatrix::new();
                for (t, &cell) in tiles.iter().zip(&expected_cell) {
                    if cell == (r, c) {
                        oracle.merge(&t.confusion);
                    }
                }
                assert_eq!(grid.region(r, c).confusion, oracle);
            }
        }
        let outside = [TileEvaluation {
            origin_x: 150.0,
            origin_y: 10.0,
            confusion: ConfusionMatrix::new(),
        }];
        assert!(spatial_miou(&outside, bounds(), 2, 2).is_err());
    }

    fn arb_cm() -> impl Strategy<Value = ConfusionMatrix> {
        proptest::array::uniform4(proptest::array::uniform4(0u64..500))
            .prop_map(ConfusionMatrix::from_counts)
    }

    proptest! {
        #[test]
        fn f1_iou_identity(cm in arb_cm()) {
            for m in per_class_metrics(&cm) {
                if let (Some(f1), Some(iou)) = (m.f1, m.iou) {
                    prop_assert!((f1 - 2.0 * iou / (1.0 + iou)).abs() < 1e-12);
                }
                if let (Some(p), Some(r), Some(iou)) = (m.precision, m.recall, m.iou) {
                    if p + r > 0.0 {
                        prop_assert!((iou - iou_from_precision_recall(p, r).unwrap()).abs() < 1e-12);
                        prop_assert!((m.f1.unwrap() - f1_from_precision_recall(p, r).unwrap()).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn micro_consistency_and_merge(a in arb_cm(), b in arb_cm()) {
            let per = per_class_metrics(&a);
            prop_assert_eq!((0..4).map(|c| a.true_positives(c)).sum::<u64>(), a.trace());
            prop_assert_eq!(per.iter().map(|m| m.support).sum::<u64>(), a.total());
            let mut ab = a;
            ab.merge(&b);
            let mut ba = b;
            ba.merge(&a);
            prop_assert_eq!(ab, ba);
            let report = MetricsReport::from_confusion(&ab, UndefinedPolicy::Skip).unwrap();
            if ab.total() > 0 {
                let s: f64 = report.classes.iter().map(|c| c.proportion).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
