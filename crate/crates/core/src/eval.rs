//! Unsupervised segmentation evaluation.
//!
//! Predicted groups carry no class identity, so they are matched to ground
//! truth classes first: either many-to-one by relative majority, or one-to-one
//! by maximum-agreement (Hungarian) assignment. Metrics are computed on the
//! relabeled predictions.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::{LabelMap, IGNORE};

/// Pixel counts indexed `[predicted group][ground-truth class]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    p: usize,
    g: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(p: usize, g: usize) -> Self {
        Self {
            p,
            g,
            counts: vec![0; p * g],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let g = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != g) {
            return Err(Error::DimensionMismatch("ragged confusion rows".into()));
        }
        Ok(Self {
            p: rows.len(),
            g,
            counts: rows.concat(),
        })
    }

    pub fn groups(&self) -> usize {
        self.p
    }

    pub fn classes(&self) -> usize {
        self.g
    }

    #[inline]
    pub fn get(&self, p: usize, g: usize) -> u64 {
        self.counts[p * self.g + g]
    }

    pub fn row(&self, p: usize) -> &[u64] {
        &self.counts[p * self.g..(p + 1) * self.g]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one prediction/ground-truth pair; ignore pixels in `gt` are
    /// skipped.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::DimensionMismatch(format!(
                "prediction {:?} vs ground truth {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g == IGNORE {
                continue;
            }
            if p as usize >= self.p {
                return Err(Error::LabelOutOfRange {
                    label: p,
                    count: self.p,
                });
            }
            if g as usize >= self.g {
                return Err(Error::LabelOutOfRange {
                    label: g,
                    count: self.g,
                });
            }
            self.counts[p as usize * self.g + g as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(mut self, other: &Self) -> Self {
        assert_eq!((self.p, self.g), (other.p, other.g), "confusion shapes differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }
}

pub fn confusion(pred: &LabelMap, gt: &LabelMap, p: usize, g: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(p, g);
    cm.accumulate(pred, gt)?;
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchKind {
    Majority,
    Hungarian,
}

impl MatchKind {
    pub fn name(self) -> &'static str {
        match self {
            MatchKind::Majority => "majority",
            MatchKind::Hungarian => "hungarian",
        }
    }
}

impl std::str::FromStr for MatchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(MatchKind::Majority),
            "hungarian" => Ok(MatchKind::Hungarian),
            _ => Err(Error::InvalidParameter(format!("unknown matching `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    pub kind: MatchKind,
    /// Class per predicted group; `None` for groups left unmatched by a
    /// one-to-one assignment.
    pub map: Vec<Option<u32>>,
    /// Empty groups that majority matching mapped to class 0 by default.
    pub empty_groups: Vec<usize>,
}

impl Matching {
    /// Agreed pixels under this matching.
    pub fn objective(&self, cm: &ConfusionMatrix) -> u64 {
        self.map
            .iter()
            .enumerate()
            .filter_map(|(p, m)| m.map(|g| cm.get(p, g as usize)))
            .sum()
    }
}

/// Index of the largest entry, lowest index on ties.
fn argmax(row: &[u64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn majority_match(cm: &ConfusionMatrix) -> Matching {
    let mut empty_groups = Vec::new();
    let map = (0..cm.p)
        .map(|p| {
            let row = cm.row(p);
            if row.iter().all(|&v| v == 0) {
                empty_groups.push(p);
            }
            Some(argmax(row) as u32)
        })
        .collect();
    Matching {
        kind: MatchKind::Majority,
        map,
        empty_groups,
    }
}

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// paths with potentials). Returns the column of each row and the dual
/// potentials, which satisfy `u[i] + v[j] <= cost[i][j]` with equality on the
/// returned assignment.
fn min_cost_assignment(cost: &[Vec<i64>]) -> (Vec<usize>, Vec<i64>, Vec<i64>) {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based with a sentinel column 0.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    (col_of, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites a perfect matching into the lexicographically smallest perfect
/// matching of the same bipartite graph (`allowed[i][j]`), fixing rows in
/// order and moving each to its smallest feasible column via an alternating
/// cycle.
fn lexicographic_min_matching(allowed: &[Vec<bool>], mut col_of: Vec<usize>) -> Vec<usize> {
    let n = allowed.len();
    let mut row_of = vec![0usize; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    let mut fixed = vec![false; n];
    for i in 0..n {
        for j in (0..n).filter(|&j| allowed[i][j]) {
            if col_of[i] == j {
                break;
            }
            let holder = row_of[j];
            if fixed[holder] {
                continue;
            }
            // Alternating path from `holder` to the column `i` gives up.
            let freed = col_of[i];
            let mut prev_row = vec![usize::MAX; n];
            let mut seen_col = vec![false; n];
            seen_col[j] = true;
            let mut stack = vec![holder];
            let mut reached = false;
            'search: while let Some(r) = stack.pop() {
                for x in 0..n {
                    if !allowed[r][x] || seen_col[x] {
                        continue;
                    }
                    if x == freed {
                        prev_row[x] = r;
                        reached = true;
                        break 'search;
                    }
                    let next = row_of[x];
                    if fixed[next] || next == i {
                        continue;
                    }
                    seen_col[x] = true;
                    prev_row[x] = r;
                    stack.push(next);
                }
            }
            if !reached {
                continue;
            }
            // Walk back from `freed`: each row on the path takes the column
            // that led to it.
            let mut x = freed;
            loop {
                let r = prev_row[x];
                let old = col_of[r];
                col_of[r] = x;
                row_of[x] = r;
                if r == holder {
                    break;
                }
                x = old;
            }
            col_of[i] = j;
            row_of[j] = i;
            break;
        }
        fixed[i] = true;
    }
    col_of
}

/// One-to-one matching maximizing agreed pixels. Rectangular matrices are
/// zero-padded to square; among optimal assignments the lexicographically
/// smallest (by class index per group, padding after real classes) is chosen.
pub fn hungarian_match(cm: &ConfusionMatrix) -> Matching {
    let n = cm.p.max(cm.g);
    let value = |p: usize, g: usize| if p < cm.p && g < cm.g { cm.get(p, g) as i64 } else { 0 };
    let max = (0..cm.p)
        .flat_map(|p| (0..cm.g).map(move |g| (p, g)))
        .map(|(p, g)| value(p, g))
        .max()
        .unwrap_or(0);
    let cost: Vec<Vec<i64>> = (0..n).map(|p| (0..n).map(|g| max - value(p, g)).collect()).collect();
    let (col_of, u, v) = if n == 0 {
        (vec![], vec![], vec![])
    } else {
        min_cost_assignment(&cost)
    };
    let allowed: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| u[i] + v[j] == cost[i][j]).collect())
        .collect();
    let col_of = lexicographic_min_matching(&allowed, col_of);
    let map = (0..cm.p)
        .map(|p| (col_of[p] < cm.g).then_some(col_of[p] as u32))
        .collect();
    Matching {
        kind: MatchKind::Hungarian,
        map,
        empty_groups: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassIou {
    pub class: usize,
    pub gt_pixels: u64,
    pub pred_pixels: u64,
    pub intersection: u64,
    /// `None` when the class is absent from both ground truth and prediction.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub miou: f64,
    pub wiou: f64,
    pub pacc: f64,
    pub per_class: Vec<ClassIou>,
    pub matching: Matching,
    pub groups: usize,
    pub classes: usize,
    pub evaluated_pixels: u64,
}

/// Relabels predictions through `matching` and computes per-class IoU,
/// mIoU over classes present in ground truth or prediction, ground-truth
/// frequency weighted IoU, and pixel accuracy.
pub fn metrics(cm: &ConfusionMatrix, matching: &Matching) -> Result<MetricsReport> {
    if matching.map.len() != cm.p {
        return Err(Error::DimensionMismatch(format!(
            "matching covers {} groups, confusion has {}",
            matching.map.len(),
            cm.p
        )));
    }
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let g = cm.g;
    let mut gt_pixels = vec![0u64; g];
    let mut pred_pixels = vec![0u64; g];
    let mut inter = vec![0u64; g];
    for p in 0..cm.p {
        for (class, &count) in cm.row(p).iter().enumerate() {
            gt_pixels[class] += count;
            if let Some(m) = matching.map[p] {
                pred_pixels[m as usize] += count;
                if m as usize == class {
                    inter[class] += count;
                }
            }
        }
    }
    let per_class: Vec<ClassIou> = (0..g)
        .map(|class| {
            let union = gt_pixels[class] + pred_pixels[class] - inter[class];
            ClassIou {
                class,
                gt_pixels: gt_pixels[class],
                pred_pixels: pred_pixels[class],
                intersection: inter[class],
                iou: (union > 0).then(|| inter[class] as f64 / union as f64),
            }
        })
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    let wiou = per_class
        .iter()
        .filter(|c| c.gt_pixels > 0)
        .map(|c| c.gt_pixels as f64 / total as f64 * c.iou.unwrap_or(0.0))
        .sum();
    let pacc = inter.iter().sum::<u64>() as f64 / total as f64;
    Ok(MetricsReport {
        miou,
        wiou,
        pacc,
        per_class,
        matching: matching.clone(),
        groups: cm.p,
        classes: g,
        evaluated_pixels: total,
    })
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "mIoU,{:.6}", self.miou);
        let _ = writeln!(out, "wIoU,{:.6}", self.wiou);
        let _ = writeln!(out, "pAcc,{:.6}", self.pacc);
        let _ = writeln!(out, "matching,{}", self.matching.kind.name());
        let _ = writeln!(out, "predicted_groups,{}", self.groups);
        let _ = writeln!(out, "classes,{}", self.classes);
        let _ = writeln!(out, "evaluated_pixels,{}", self.evaluated_pixels);
        for c in &self.per_class {
            match c.iou {
                Some(v) => {
                    let _ = writeln!(out, "iou_class_{},{v:.6}", c.class);
                }
                None => {
                    let _ = writeln!(out, "iou_class_{},undefined", c.class);
                }
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "matching: {}  predicted groups: {}  classes: {}  pixels: {}",
            self.matching.kind.name(),
            self.groups,
            self.classes,
            self.evaluated_pixels
        );
        let _ = writeln!(out, "mIoU  {:>8.4}", self.miou);
        let _ = writeln!(out, "wIoU  {:>8.4}", self.wiou);
        let _ = writeln!(out, "pAcc  {:>8.4}", self.pacc);
        let _ = writeln!(
            out,
            "{:>6} {:>10} {:>10} {:>10} {:>8}",
            "class", "gt", "pred", "inter", "IoU"
        );
        for c in &self.per_class {
            let iou = c.iou.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{:>6} {:>10} {:>10} {:>10} {:>8}",
                c.class, c.gt_pixels, c.pred_pixels, c.intersection, iou
            );
        }
        for (p, m) in self.matching.map.iter().enumerate() {
            let target = m.map_or("-".to_string(), |g| g.to_string());
            let _ = writeln!(out, "group {p} -> class {target}");
        }
        out
    }
}

/// A Hungarian assignment whose class does not hold a strict relative
/// majority of the group's pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MajorityViolation {
    pub group: usize,
    pub assigned: u32,
    pub majority: u32,
    /// Share of the group's pixels carrying the assigned class.
    pub fraction: f64,
}

pub fn majority_diagnostic(cm: &ConfusionMatrix, hungarian: &Matching) -> Vec<MajorityViolation> {
    let mut out = Vec::new();
    for (p, m) in hungarian.map.iter().enumerate() {
        let Some(assigned) = *m else { continue };
        let row = cm.row(p);
        let size: u64 = row.iter().sum();
        if size == 0 {
            continue;
        }
        let mine = row[assigned as usize];
        let strict = row.iter().enumerate().all(|(g, &v)| g == assigned as usize || v < mine);
        if !strict {
            out.push(MajorityViolation {
                group: p,
                assigned,
                majority: argmax(row) as u32,
                fraction: mine as f64 / size as f64,
            });
        }
    }
    out
}

pub fn diagnostic_text(violations: &[MajorityViolation]) -> String {
    let mut out = String::new();
    if violations.is_empty() {
        out.push_str("all Hungarian assignments hold a strict relative majority\n");
    }
    for v in violations {
        let _ = writeln!(
            out,
            "group {} assigned class {} ({:.4} of pixels) but majority class is {}",
            v.group, v.assigned, v.fraction, v.majority
        );
    }
    out
}
