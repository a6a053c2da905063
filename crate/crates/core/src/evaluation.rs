//! Consistency criteria between predicted scores and subjective labels,
//! nonlinear score mapping, and content-disjoint cross-validation splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SeededRng;

fn check_pair(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < min {
        return Err(Error::invalid(format!("need at least {min} samples, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input contains a non-finite value".into()));
    }
    Ok(())
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 3)?;
    pearson_unchecked(&average_ranks(a), &average_ranks(b))
}

/// Pearson linear correlation.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 3)?;
    pearson_unchecked(a, b)
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 1)?;
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Number of tied pairs within runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for x in sorted {
        if prev.as_ref() == Some(&x) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(x);
    }
    total + run * (run + 1) / 2
}

/// Merge sort that counts inversions (strictly decreasing pairs).
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b, computed in O(n log n) (Knight's algorithm).
pub fn krcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 3)?;
    let n = a.len() as u64;
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let ties_a = tied_pairs(idx.iter().map(|&i| a[i].to_bits()));
    let ties_ab = tied_pairs(idx.iter().map(|&i| (a[i].to_bits(), b[i].to_bits())));
    let mut bs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = Vec::with_capacity(bs.len());
    let swaps = count_inversions(&mut bs, &mut buf);
    let ties_b = tied_pairs(bs.iter().map(|v| v.to_bits()));

    let n0 = n * (n - 1) / 2;
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::ConstantInput);
    }
    let numer = n0 as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    Ok((numer / denom).clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// Five-parameter logistic mapping
// ---------------------------------------------------------------------------

/// `b1 * (1/2 - 1/(1 + exp(b2 (q - b3)))) + b4 q + b5`
pub fn logistic5(beta: &[f64; 5], q: f64) -> f64 {
    beta[0] * (0.5 - sigmoid_neg(beta[1] * (q - beta[2]))) + beta[3] * q + beta[4]
}

/// `1 / (1 + exp(t))`, stable for large |t|.
#[inline]
fn sigmoid_neg(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: [f64; 5],
    pub mapped: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `params` are the best found.
    pub converged: bool,
    /// True when the predictions are constant and no mapping can be fitted.
    pub degenerate: bool,
}

pub const LOGISTIC_MAX_ITER: usize = 500;
pub const LOGISTIC_STEP_TOL: f64 = 1e-10;

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn range(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

fn sse(beta: &[f64; 5], pred: &[f64], mos: &[f64]) -> f64 {
    pred.iter().zip(mos).map(|(&q, &y)| (logistic5(beta, q) - y).powi(2)).sum()
}

/// Starting point: b1 = range(mos), b2 = 4 / range(pred), b3 = median(pred),
/// b4 = 0, b5 = mean(mos).
pub fn logistic_init(pred: &[f64], mos: &[f64]) -> [f64; 5] {
    let mean = mos.iter().sum::<f64>() / mos.len() as f64;
    [range(mos), 4.0 / range(pred), median(pred), 0.0, mean]
}

/// Least-squares solution of `columns * x = y`; `None` if singular.
fn linear_lsq(columns: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let k = columns.len();
    let a = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let svd = a.svd(true, true);
    let x = svd.solve(&DVector::from_column_slice(y), 1e-12).ok()?;
    x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
}

/// Re-solves the linear coefficients (b1, b4, b5) exactly for fixed (b2, b3).
fn refit_linear_part(beta: &[f64; 5], pred: &[f64], mos: &[f64]) -> Option<[f64; 5]> {
    let g: Vec<f64> = pred.iter().map(|&q| 0.5 - sigmoid_neg(beta[1] * (q - beta[2]))).collect();
    let x = linear_lsq(&[g, pred.to_vec(), vec![1.0; pred.len()]], mos)?;
    Some([x[0], beta[1], beta[2], x[1], x[2]])
}

/// Fits the five-parameter logistic by damped least squares
/// (Levenberg-Marquardt), starting from [`logistic_init`].
///
/// The result never has a larger squared error than the best straight-line
/// map (`b1 = 0`), which lies inside the model family.
pub fn logistic_fit(pred: &[f64], mos: &[f64]) -> Result<LogisticFit> {
    check_pair(pred, mos, 5)?;
    let n = pred.len();
    let init = logistic_init(pred, mos);

    if range(pred) == 0.0 {
        let mean = init[4];
        let params = [0.0, 0.0, init[2], 0.0, mean];
        return Ok(LogisticFit {
            params,
            mapped: vec![mean; n],
            sse: sse(&params, pred, mos),
            iterations: 0,
            converged: false,
            degenerate: true,
        });
    }

    let mut beta = init;
    let mut cost = sse(&beta, pred, mos);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = DMatrix::<f64>::zeros(n, 5);
    let mut resid = DVector::<f64>::zeros(n);

    while iterations < LOGISTIC_MAX_ITER {
        iterations += 1;
        for (i, (&q, &y)) in pred.iter().zip(mos).enumerate() {
            let t = beta[1] * (q - beta[2]);
            let s = sigmoid_neg(t);
            let ds = s * (1.0 - s);
            resid[i] = beta[0] * (0.5 - s) + beta[3] * q + beta[4] - y;
            jac[(i, 0)] = 0.5 - s;
            jac[(i, 1)] = beta[0] * ds * (q - beta[2]);
            jac[(i, 2)] = -beta[0] * ds * beta[1];
            jac[(i, 3)] = q;
            jac[(i, 4)] = 1.0;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &resid;

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..5 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [
                beta[0] + step[0],
                beta[1] + step[1],
                beta[2] + step[2],
                beta[3] + step[3],
                beta[4] + step[4],
            ];
            let trial_cost = sse(&trial, pred, mos);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step_norm = step.norm();
                let beta_norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
                beta = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if step_norm <= LOGISTIC_STEP_TOL * (beta_norm + LOGISTIC_STEP_TOL) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if let Some(refit) = refit_linear_part(&beta, pred, mos) {
        let c = sse(&refit, pred, mos);
        if c <= cost {
            beta = refit;
            cost = c;
        }
    }
    if let Some(x) = linear_lsq(&[pred.to_vec(), vec![1.0; n]], mos) {
        let line = [0.0, init[1], init[2], x[0], x[1]];
        let c = sse(&line, pred, mos);
        if c < cost {
            beta = line;
            cost = c;
        }
    }

    Ok(LogisticFit {
        mapped: pred.iter().map(|&q| logistic5(&beta, q)).collect(),
        params: beta,
        sse: cost,
        iterations,
        converged,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    /// Fitted mapping for a single run; absent on cross-fold aggregates.
    pub logistic: Option<[f64; 5]>,
    pub n: usize,
    pub folds: usize,
    #[serde(default)]
    pub fit_converged: bool,
    /// Fold-assignment seed, when the report comes from cross-validation.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// SRCC/KRCC on raw predictions, PLCC/RMSE after the logistic mapping.
pub fn evaluate_run(pred: &[f64], mos: &[f64]) -> Result<EvalReport> {
    check_pair(pred, mos, 5)?;
    let srcc_v = srcc(pred, mos)?;
    let krcc_v = krcc(pred, mos)?;
    let fit = logistic_fit(pred, mos)?;
    if fit.degenerate {
        return Err(Error::ConstantInput);
    }
    if !fit.converged {
        log::warn!("logistic fit stopped after {} iterations without converging", fit.iterations);
    }
    Ok(EvalReport {
        srcc: srcc_v,
        plcc: plcc(&fit.mapped, mos)?,
        krcc: krcc_v,
        rmse: rmse(&fit.mapped, mos)?,
        logistic: Some(fit.params),
        n: pred.len(),
        folds: 1,
        fit_converged: fit.converged,
        seed: None,
    })
}

/// Arithmetic mean of each criterion across folds.
pub fn aggregate_folds(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::invalid("no fold reports to aggregate"));
    }
    let k = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    Ok(EvalReport {
        srcc: mean(|r| r.srcc),
        plcc: mean(|r| r.plcc),
        krcc: mean(|r| r.krcc),
        rmse: mean(|r| r.rmse),
        logistic: None,
        n: reports.iter().map(|r| r.n).sum(),
        folds: reports.iter().map(|r| r.folds).sum(),
        fit_converged: reports.iter().all(|r| r.fit_converged),
        seed: reports[0].seed,
    })
}

/// Aligned text table with columns SRCC, PLCC, KRCC, RMSE.
pub fn report_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}  {:>8}", "label", "SRCC", "PLCC", "KRCC", "RMSE");
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>8.4}",
            label, r.srcc, r.plcc, r.krcc, r.rmse
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
    pub group_key: BTreeMap<String, String>,
}

impl FoldPlan {
    pub fn fold_of(&self, item: &str) -> Option<usize> {
        self.assignments.get(item).copied()
    }

    /// Items held out in `fold`, in ascending id order.
    pub fn test_items(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn groups_in(&self, fold: usize) -> Vec<&str> {
        let mut g: Vec<&str> = self
            .test_items(fold)
            .into_iter()
            .map(|i| self.group_key[i].as_str())
            .collect();
        g.sort_unstable();
        g.dedup();
        g
    }
}

/// Content-disjoint k-fold split: groups are shuffled by `seed` and dealt to
/// folds round-robin, so every item of a group shares one fold.
pub fn kfold_split(items: &[(String, String)], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut groups: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    let mut ids = HashSet::new();
    for (id, g) in items {
        if !ids.insert(id.as_str()) {
            return Err(Error::invalid(format!("duplicate item id `{id}`")));
        }
        if seen.insert(g.as_str()) {
            groups.push(g);
        }
    }
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if k > groups.len() {
        return Err(Error::invalid(format!("k = {k} exceeds the {} distinct groups", groups.len())));
    }
    // Shuffle from a canonical order so the plan depends only on the set.
    groups.sort_unstable();
    groups.shuffle(&mut SeededRng::new(seed));
    let fold_of_group: BTreeMap<&str, usize> = groups.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    Ok(FoldPlan {
        k,
        seed,
        assignments: items
            .iter()
            .map(|(id, g)| (id.clone(), fold_of_group[g.as_str()]))
            .collect(),
        group_key: items.iter().map(|(id, g)| (id.clone(), g.clone())).collect(),
    })
}

/// One row of the dataset CSV (`model_path,group_id,mos`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub model_path: PathBuf,
    pub group_id: String,
    pub mos: f64,
}

/// Reads a dataset CSV; relative model paths resolve against the CSV's
/// directory.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let mut e: DatasetEntry = row?;
        if e.model_path.is_relative() {
            e.model_path = base.join(&e.model_path);
        }
        if !e.mos.is_finite() {
            return Err(Error::NonFinite(format!("mos of {}", e.model_path.display())));
        }
        out.push(e);
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("dataset {} has no rows", path.display())));
    }
    Ok(out)
}

pub fn write_dataset(entries: &[DatasetEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srcc_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((srcc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = a.iter().rev().cloned().collect();
        assert!((srcc(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
        // d = (0, 1, 1, 1, 1): 1 - 6 * 4 / (5 * 24) = 0.8
        assert!((srcc(&a, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(srcc(&a, &[2.0; 5]).unwrap_err(), Error::ConstantInput));
        assert!(srcc(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(srcc(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn krcc_examples() {
        assert!((krcc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let a = [0.3, 0.1, 0.9, 0.5];
        assert_eq!(krcc(&a, &a).unwrap(), 1.0);
        assert!(matches!(krcc(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap_err(), Error::ConstantInput));
    }

    #[test]
    fn plcc_rmse_examples() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
        assert!((plcc(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(plcc(&a, &[1.0; 4]).unwrap_err(), Error::ConstantInput));
    }

    #[test]
    fn logistic_identity() {
        let pred: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 2.0 + i as f64 * 0.1).collect();
        let fit = logistic_fit(&pred, &pred).unwrap();
        assert!(rmse(&fit.mapped, &pred).unwrap() <= 1e-6);
    }

    #[test]
    fn logistic_constant_pred_is_degenerate() {
        let fit = logistic_fit(&[2.0; 8], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        assert!(fit.degenerate);
        assert!(plcc(&fit.mapped, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).is_err());
        assert!(evaluate_run(&[2.0; 8], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).is_err());
    }

    #[test]
    fn logistic_jacobian_matches_differences() {
        let beta = [3.0, 5.0, 0.4, 0.7, 2.0];
        for q in [-0.5, 0.1, 0.4, 0.9, 2.0] {
            let t = beta[1] * (q - beta[2]);
            let s = sigmoid_neg(t);
            let ds = s * (1.0 - s);
            let analytic = [0.5 - s, beta[0] * ds * (q - beta[2]), -beta[0] * ds * beta[1], q, 1.0];
            for k in 0..5 {
                let h = 1e-6;
                let mut up = beta;
                let mut dn = beta;
                up[k] += h;
                dn[k] -= h;
                let fd = (logistic5(&up, q) - logistic5(&dn, q)) / (2.0 * h);
                assert!((fd - analytic[k]).abs() < 1e-6, "k={k} q={q}: {fd} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn fold_examples() {
        let items: Vec<(String, String)> = (0..9)
            .flat_map(|g| (0..42).map(move |i| (format!("r{g}_d{i}"), format!("ref{g}"))))
            .collect();
        let plan = kfold_split(&items, 9, 1).unwrap();
        for f in 0..9 {
            assert_eq!(plan.groups_in(f).len(), 1);
            assert_eq!(plan.test_items(f).len(), 42);
        }
        let items: Vec<(String, String)> = (0..20)
            .flat_map(|g| (0..3).map(move |i| (format!("{g}-{i}"), format!("g{g}"))))
            .collect();
        let plan = kfold_split(&items, 5, 77).unwrap();
        for f in 0..5 {
            assert_eq!(plan.groups_in(f).len(), 4);
        }
        assert_eq!(plan, kfold_split(&items, 5, 77).unwrap());
        assert!(kfold_split(&items, 21, 0).is_err());
    }

    #[test]
    fn aggregate_means() {
        let base = EvalReport {
            srcc: 0.8,
            plcc: 0.7,
            krcc: 0.6,
            rmse: 1.0,
            logistic: Some([0.0; 5]),
            n: 10,
            folds: 1,
            fit_converged: true,
            seed: None,
        };
        let other = EvalReport {
            srcc: 0.9,
            ..base.clone()
        };
        let agg = aggregate_folds(&[base, other]).unwrap();
        assert!((agg.srcc - 0.85).abs() < 1e-12);
        assert_eq!(agg.n, 20);
        assert_eq!(agg.folds, 2);
        assert!(aggregate_folds(&[]).is_err());
        assert!(report_table(&[("x".into(), agg)]).contains("0.8500"));
    }

    #[test]
    fn dataset_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "model_path,group_id,mos\na.ply, g1, 3.5\n/abs/b.obj,g2,1\n").unwrap();
        let d = read_dataset(&p).unwrap();
        assert_eq!(d[0].model_path, dir.path().join("a.ply"));
        assert_eq!(d[0].group_id, "g1");
        assert_eq!(d[1].model_path, PathBuf::from("/abs/b.obj"));
        assert_eq!(d[1].mos, 1.0);
    }
}
