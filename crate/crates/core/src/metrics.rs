//! Ensemble aggregation and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{anchored_mean, DenseMatrix};

/// Probabilities are floored at this value before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_ECE_BINS: usize = 15;

/// One learner's predictive distributions, row `i` for example `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    pub learner: usize,
    pub probs: DenseMatrix,
}

impl PredictionMatrix {
    pub fn new(learner: usize, probs: DenseMatrix) -> Result<Self> {
        for (i, row) in probs.iter_rows().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Malformed(format!("learner {learner} row {i} is not a probability vector (sum {s})")));
            }
        }
        Ok(Self { learner, probs })
    }

    pub fn rows(&self) -> usize {
        self.probs.rows()
    }
}

fn check_aligned(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Misaligned(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_labels(p: &DenseMatrix, labels: &[usize]) -> Result<()> {
    if p.rows() != labels.len() {
        return Err(Error::Misaligned(format!("{} rows vs {} labels", p.rows(), labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= p.cols()) {
        return Err(Error::LabelOutOfRange { label, classes: p.cols() });
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Elementwise mean of aligned matrices. Uses [`anchored_mean`], so
/// identical learners average to exactly their common value.
pub fn ensemble_average(preds: &[&DenseMatrix]) -> Result<DenseMatrix> {
    let first = preds.first().ok_or(Error::EmptyInput("ensemble_average"))?;
    for p in &preds[1..] {
        check_aligned(first, p)?;
    }
    let mut out = DenseMatrix::zeros(first.rows(), first.cols());
    let mut buf = vec![0.0; preds.len()];
    for (k, o) in out.data_mut().iter_mut().enumerate() {
        for (b, p) in buf.iter_mut().zip(preds) {
            *b = p.data()[k];
        }
        *o = anchored_mean(&buf);
    }
    Ok(out)
}

pub fn accuracy(p: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    check_labels(p, labels)?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let hits = p.iter_rows().zip(labels).filter(|(r, &y)| argmax(r) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Per-example `−ln max(p(label), 1e-12)`.
pub fn nll_terms(p: &DenseMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(p, labels)?;
    Ok(p.iter_rows().zip(labels).map(|(r, &y)| -r[y].max(PROB_FLOOR).ln()).collect())
}

pub fn nll(p: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let t = nll_terms(p, labels)?;
    if t.is_empty() {
        return Err(Error::EmptyInput("nll"));
    }
    Ok(t.iter().sum::<f64>() / t.len() as f64)
}

/// Expected calibration error over `bins` equal-width confidence bins.
/// Bin `b` holds confidences in `(b/B, (b+1)/B]`; the first bin also takes
/// zero.
pub fn ece(p: &DenseMatrix, labels: &[usize], bins: usize) -> Result<f64> {
    check_labels(p, labels)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("ece needs at least one bin".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("ece"));
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut hits = vec![0.0; bins];
    for (row, &y) in p.iter_rows().zip(labels) {
        let k = argmax(row);
        let c = row[k];
        let b = ((c * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[b] += 1;
        conf[b] += c;
        if k == y {
            hits[b] += 1.0;
        }
    }
    let n = labels.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (hits[b] / nb - conf[b] / nb).abs()
        })
        .sum())
}

/// Max-probability confidence per row.
pub fn max_prob(p: &DenseMatrix) -> Vec<f64> {
    p.iter_rows().map(|r| r[argmax(r)]).collect()
}

/// Mann–Whitney AUROC that a random in-distribution score exceeds a random
/// out-of-distribution score, ties counting one half. Exact: computed from
/// integer counts over sorted scores.
pub fn auroc_scores(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::EmptyInput("auroc"));
    }
    if in_scores.iter().chain(ood_scores).any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auroc scores".into()));
    }
    let mut all: Vec<(f64, bool)> = in_scores.iter().map(|&s| (s, true)).chain(ood_scores.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the number of (in, ood) pairs won, counting ties as 1
    let mut twice: u128 = 0;
    let mut ood_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let n_in = all[i..j].iter().filter(|x| x.1).count() as u128;
        let n_ood = (j - i) as u128 - n_in;
        twice += n_in * (2 * ood_below + n_ood);
        ood_below += n_ood;
        i = j;
    }
    Ok(twice as f64 / (2 * in_scores.len() as u128 * ood_scores.len() as u128) as f64)
}

/// AUROC of max-probability scores, in-distribution as positives.
pub fn auroc_ood(in_dist: &DenseMatrix, ood: &DenseMatrix) -> Result<f64> {
    auroc_scores(&max_prob(in_dist), &max_prob(ood))
}

/// Fraction of examples whose argmax differs.
pub fn disagreement(p1: &DenseMatrix, p2: &DenseMatrix) -> Result<f64> {
    check_aligned(p1, p2)?;
    if p1.rows() == 0 {
        return Err(Error::EmptyInput("disagreement"));
    }
    let d = p1.iter_rows().zip(p2.iter_rows()).filter(|(a, b)| argmax(a) != argmax(b)).count();
    Ok(d as f64 / p1.rows() as f64)
}

/// Mean over examples of `KL(p1 ‖ p2)`, both floored at 1e-12.
pub fn pairwise_kl(p1: &DenseMatrix, p2: &DenseMatrix) -> Result<f64> {
    check_aligned(p1, p2)?;
    if p1.rows() == 0 {
        return Err(Error::EmptyInput("pairwise_kl"));
    }
    let mut total = 0.0;
    for (a, b) in p1.iter_rows().zip(p2.iter_rows()) {
        let mut row = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            let (x, y) = (x.max(PROB_FLOOR), y.max(PROB_FLOOR));
            if x != y {
                row += x * (x.ln() - y.ln());
            }
        }
        total += row;
    }
    Ok(total / p1.rows() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub d_dis: f64,
    pub d_kl: f64,
}

/// Means of [`disagreement`] and [`pairwise_kl`] over ordered learner pairs.
///
/// `d_dis` is computed from the integer disagreement count, so it is the
/// correctly rounded value of the rational mean. `d_kl` sums pairs in
/// `(i, j)` lexicographic order.
pub fn ensemble_diversity(preds: &[&DenseMatrix]) -> Result<Diversity> {
    if preds.len() < 2 {
        return Err(Error::InvalidArgument(format!("diversity needs at least 2 learners, got {}", preds.len())));
    }
    let rows = preds[0].rows();
    let (mut dis, mut kl, mut pairs) = (0usize, 0.0, 0usize);
    for (i, a) in preds.iter().enumerate() {
        for (j, b) in preds.iter().enumerate() {
            if i != j {
                check_aligned(a, b)?;
                dis += a.iter_rows().zip(b.iter_rows()).filter(|(x, y)| argmax(x) != argmax(y)).count();
                kl += pairwise_kl(a, b)?;
                pairs += 1;
            }
        }
    }
    Ok(Diversity {
        d_dis: dis as f64 / (rows * pairs) as f64,
        d_kl: kl / pairs as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub ensemble_acc: f64,
    pub ensemble_nll: f64,
    pub individual_acc_mean: f64,
    pub individual_acc_std: f64,
    pub individual_nll_mean: f64,
}

/// Metrics of every prefix ensemble `1..=M`.
pub fn ensemble_size_sweep(preds: &[&DenseMatrix], labels: &[usize]) -> Result<Vec<SweepRow>> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("ensemble_size_sweep"));
    }
    let accs = preds.iter().map(|p| accuracy(p, labels)).collect::<Result<Vec<_>>>()?;
    let nlls = preds.iter().map(|p| nll(p, labels)).collect::<Result<Vec<_>>>()?;
    (1..=preds.len())
        .map(|m| {
            let ens = ensemble_average(&preds[..m])?;
            let a = &accs[..m];
            let mean = a.iter().sum::<f64>() / m as f64;
            let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
            Ok(SweepRow {
                m,
                ensemble_acc: accuracy(&ens, labels)?,
                ensemble_nll: nll(&ens, labels)?,
                individual_acc_mean: mean,
                individual_acc_std: var.sqrt(),
                individual_nll_mean: nlls[..m].iter().sum::<f64>() / m as f64,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JensenCheck {
    pub ensemble_nll: f64,
    pub mean_individual_nll: f64,
    /// Whether any two learners assign different probabilities anywhere.
    pub learners_differ: bool,
    /// Examples where the per-example inequality is inverted by floating
    /// point rounding (only possible when learners agree to within ulps).
    pub rounding_inversions: usize,
}

/// Ensemble NLL against the mean of the learners' NLLs. Fails unless
/// `ensemble_nll <= mean_individual_nll`, compared exactly.
pub fn check_jensen(preds: &[&DenseMatrix], labels: &[usize]) -> Result<JensenCheck> {
    let ens = ensemble_average(preds)?;
    let ens_terms = nll_terms(&ens, labels)?;
    let ind: Vec<Vec<f64>> = preds.iter().map(|p| nll_terms(p, labels)).collect::<Result<_>>()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyInput("check_jensen"));
    }
    let ensemble_nll = ens_terms.iter().sum::<f64>() / n as f64;
    let per_learner: Vec<f64> = ind.iter().map(|t| t.iter().sum::<f64>() / n as f64).collect();
    let mean_individual_nll = anchored_mean(&per_learner);
    let mut rounding_inversions = 0;
    for (i, e) in ens_terms.iter().enumerate() {
        let col: Vec<f64> = ind.iter().map(|t| t[i]).collect();
        if *e > anchored_mean(&col) {
            rounding_inversions += 1;
        }
    }
    let learners_differ = preds.iter().any(|p| p.data() != preds[0].data());
    if ensemble_nll > mean_individual_nll {
        return Err(Error::InvalidArgument(format!(
            "ensemble NLL {ensemble_nll} exceeds mean individual NLL {mean_individual_nll}"
        )));
    }
    Ok(JensenCheck {
        ensemble_nll,
        mean_individual_nll,
        learners_differ,
        rounding_inversions,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionMetrics {
    pub kind: String,
    pub severity: u8,
    pub c_acc: f64,
    pub c_nll: f64,
    pub c_ece: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `ensemble` or `learner-<m>`.
    pub model: String,
    pub mc: usize,
    pub acc: f64,
    pub nll: f64,
    pub ece: f64,
    pub corruptions: Vec<CorruptionMetrics>,
    pub auroc: Option<f64>,
    pub d_dis: Option<f64>,
    pub d_kl: Option<f64>,
}

impl MetricsReport {
    pub fn clean(model: impl Into<String>, mc: usize, p: &DenseMatrix, labels: &[usize], bins: usize) -> Result<Self> {
        Ok(Self {
            model: model.into(),
            mc,
            acc: accuracy(p, labels)?,
            nll: nll(p, labels)?,
            ece: ece(p, labels, bins)?,
            ..Self::default()
        })
    }

    pub fn add_corruption(&mut self, kind: &str, severity: u8, p: &DenseMatrix, labels: &[usize], bins: usize) -> Result<()> {
        self.corruptions.push(CorruptionMetrics {
            kind: kind.to_string(),
            severity,
            c_acc: accuracy(p, labels)?,
            c_nll: nll(p, labels)?,
            c_ece: ece(p, labels, bins)?,
        });
        Ok(())
    }

    /// Flat `(field, value)` pairs. Corruption fields are named
    /// `<kind>.<severity>.c_acc` and so on.
    pub fn flat_fields(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        let mut out = vec![
            ("model".to_string(), self.model.clone()),
            ("mc".to_string(), self.mc.to_string()),
            ("acc".to_string(), format!("{:e}", self.acc)),
            ("nll".to_string(), format!("{:e}", self.nll)),
            ("ece".to_string(), format!("{:e}", self.ece)),
            ("auroc".to_string(), opt(self.auroc)),
            ("d_dis".to_string(), opt(self.d_dis)),
            ("d_kl".to_string(), opt(self.d_kl)),
        ];
        for c in &self.corruptions {
            for (k, v) in [("c_acc", c.c_acc), ("c_nll", c.c_nll), ("c_ece", c.c_ece)] {
                out.push((format!("{}.{}.{k}", c.kind, c.severity), format!("{v:e}")));
            }
        }
        out
    }
}

/// Reports as CSV: one row per report, columns from the first report.
pub fn reports_csv(reports: &[MetricsReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Ok(String::new());
    };
    let cols: Vec<String> = first.flat_fields().into_iter().map(|(k, _)| k).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Malformed(format!("csv: {e}"));
    w.write_record(&cols).map_err(io)?;
    for r in reports {
        let f = r.flat_fields();
        if f.iter().map(|(k, _)| k).ne(cols.iter()) {
            return Err(Error::Misaligned("metric reports have different fields".into()));
        }
        w.write_record(f.iter().map(|(_, v)| v)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
}
