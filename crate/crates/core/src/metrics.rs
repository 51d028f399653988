//! Treatment-effect evaluation metrics and the kNN baseline.
//!
//! `eps_ate` is `|mean(ite_true) - mean(ite_pred)|`, the usual definition in
//! the counterfactual-regression literature.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{IdrlError, Result};
use crate::nn::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLabel {
    InSample,
    OutSample,
}

impl SplitLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::InSample => "in_sample",
            SplitLabel::OutSample => "out_sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split_label: SplitLabel,
    pub sqrt_pehe: Option<f64>,
    pub eps_ate: Option<f64>,
    pub r_pol: Option<f64>,
    pub eps_att: Option<f64>,
    pub factual_rmse: f64,
    /// Set when a policy-risk cell was empty and contributed zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn check_lengths(a: &Vector, b: &Vector, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(IdrlError::InvalidArgument(format!(
            "{what}: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(IdrlError::InvalidArgument(format!("{what}: empty input")));
    }
    Ok(())
}

/// Returns `(eps_pehe, sqrt(eps_pehe))`.
pub fn pehe(ite_true: &Vector, ite_pred: &Vector) -> Result<(f64, f64)> {
    check_lengths(ite_true, ite_pred, "pehe")?;
    let n = ite_true.len() as f64;
    let eps = ite_true
        .iter()
        .zip(ite_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok((eps, eps.sqrt()))
}

pub fn ate_error(ite_true: &Vector, ite_pred: &Vector) -> Result<f64> {
    check_lengths(ite_true, ite_pred, "ate_error")?;
    let n = ite_true.len() as f64;
    Ok((ite_true.sum() / n - ite_pred.sum() / n).abs())
}

/// Outcome of [`policy_risk`]: the risk plus whether any conditional mean was
/// taken over an empty cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyRisk {
    pub value: f64,
    pub empty_treated_cell: bool,
    pub empty_control_cell: bool,
}

/// Policy risk of treating when `y1_hat - y0_hat > 0`, evaluated on units
/// with `e_flag = 1`.
pub fn policy_risk(
    y1_hat: &Vector,
    y0_hat: &Vector,
    y_f: &Vector,
    t: &[u8],
    e_flag: &[u8],
) -> Result<PolicyRisk> {
    let n = y_f.len();
    if y1_hat.len() != n || y0_hat.len() != n || t.len() != n || e_flag.len() != n {
        return Err(IdrlError::InvalidArgument("policy_risk: length mismatch".into()));
    }
    let units: Vec<usize> = (0..n).filter(|&i| e_flag[i] == 1).collect();
    if units.is_empty() {
        return Err(IdrlError::UnsupportedMetric(
            "policy risk needs randomized units (e = 1)".into(),
        ));
    }
    let mut treat_count = 0usize;
    let (mut y1_sum, mut y1_n) = (0.0, 0usize);
    let (mut y0_sum, mut y0_n) = (0.0, 0usize);
    for &i in &units {
        let treat = y1_hat[i] - y0_hat[i] > 0.0;
        if treat {
            treat_count += 1;
            if t[i] == 1 {
                y1_sum += y_f[i];
                y1_n += 1;
            }
        } else if t[i] == 0 {
            y0_sum += y_f[i];
            y0_n += 1;
        }
    }
    let p_treat = treat_count as f64 / units.len() as f64;
    let mean_or_zero = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    let value = 1.0
        - (mean_or_zero(y1_sum, y1_n) * p_treat + mean_or_zero(y0_sum, y0_n) * (1.0 - p_treat));
    Ok(PolicyRisk {
        value,
        empty_treated_cell: y1_n == 0 && p_treat > 0.0,
        empty_control_cell: y0_n == 0 && p_treat < 1.0,
    })
}

/// `|ATT - mean over treated of (y1_hat - y0_hat)|` where
/// `ATT = mean(y | T) - mean(y | C ∩ E)`.
pub fn att_error(
    y1_hat: &Vector,
    y0_hat: &Vector,
    y_f: &Vector,
    t: &[u8],
    e_flag: &[u8],
) -> Result<f64> {
    let n = y_f.len();
    if y1_hat.len() != n || y0_hat.len() != n || t.len() != n || e_flag.len() != n {
        return Err(IdrlError::InvalidArgument("att_error: length mismatch".into()));
    }
    let treated: Vec<usize> = (0..n).filter(|&i| t[i] == 1).collect();
    let control_rct: Vec<usize> = (0..n).filter(|&i| t[i] == 0 && e_flag[i] == 1).collect();
    if treated.is_empty() {
        return Err(IdrlError::UnsupportedMetric("ATT needs treated units".into()));
    }
    if control_rct.is_empty() {
        return Err(IdrlError::UnsupportedMetric(
            "ATT needs randomized control units (t = 0, e = 1)".into(),
        ));
    }
    let mean = |idx: &[usize], f: &dyn Fn(usize) -> f64| {
        idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64
    };
    let att = mean(&treated, &|i| y_f[i]) - mean(&control_rct, &|i| y_f[i]);
    let att_hat = mean(&treated, &|i| y1_hat[i] - y0_hat[i]);
    Ok((att - att_hat).abs())
}

pub fn factual_rmse(y0_hat: &Vector, y1_hat: &Vector, y_f: &Vector, t: &[u8]) -> f64 {
    let n = y_f.len().max(1) as f64;
    let sse: f64 = (0..y_f.len())
        .map(|i| {
            let pred = if t[i] == 1 { y1_hat[i] } else { y0_hat[i] };
            (pred - y_f[i]).powi(2)
        })
        .sum();
    (sse / n).sqrt()
}

/// Computes every metric the dataset supports. Metrics whose ground truth is
/// absent are left as `None`.
pub fn evaluate(
    ds: &Dataset,
    y0_hat: &Vector,
    y1_hat: &Vector,
    split_label: SplitLabel,
) -> Result<MetricsReport> {
    if y0_hat.len() != ds.n() || y1_hat.len() != ds.n() {
        return Err(IdrlError::InvalidArgument(
            "predictions do not match dataset".into(),
        ));
    }
    let ite_pred = y1_hat - y0_hat;
    let (sqrt_pehe, eps_ate) = match ds.true_ite() {
        Some(ite_true) => (
            Some(pehe(&ite_true, &ite_pred)?.1),
            Some(ate_error(&ite_true, &ite_pred)?),
        ),
        None => (None, None),
    };
    let mut warnings = Vec::new();
    let (r_pol, eps_att) = match &ds.e_flag {
        Some(e) if e.iter().any(|&v| v == 1) => {
            let pr = policy_risk(y1_hat, y0_hat, &ds.y_f, &ds.t, e)?;
            if pr.empty_treated_cell {
                warnings.push("policy risk: no treated units where policy treats".into());
            }
            if pr.empty_control_cell {
                warnings.push("policy risk: no control units where policy withholds".into());
            }
            let att = att_error(y1_hat, y0_hat, &ds.y_f, &ds.t, e).ok();
            (Some(pr.value), att)
        }
        _ => (None, None),
    };
    Ok(MetricsReport {
        split_label,
        sqrt_pehe,
        eps_ate,
        r_pol,
        eps_att,
        factual_rmse: factual_rmse(y0_hat, y1_hat, &ds.y_f, &ds.t),
        warnings,
    })
}

/// k-nearest-neighbour outcome regression per arm, Euclidean distance in the
/// covariate space the caller provides (standardize first).
pub fn knn_estimator(train: &Dataset, query: &Matrix, k: usize) -> Result<(Vector, Vector)> {
    if k == 0 {
        return Err(IdrlError::InvalidArgument("k must be at least 1".into()));
    }
    if query.ncols() != train.d() {
        return Err(IdrlError::InvalidArgument(format!(
            "query has {} columns, training data {}",
            query.ncols(),
            train.d()
        )));
    }
    let arms: [Vec<usize>; 2] = [
        (0..train.n()).filter(|&i| train.t[i] == 0).collect(),
        (0..train.n()).filter(|&i| train.t[i] == 1).collect(),
    ];
    for (arm, idx) in arms.iter().enumerate() {
        if idx.len() < k {
            return Err(IdrlError::InvalidArgument(format!(
                "arm t={arm} has {} units, fewer than k={k}",
                idx.len()
            )));
        }
    }
    let mut out = [Vector::zeros(query.nrows()), Vector::zeros(query.nrows())];
    let mut dist: Vec<(f64, usize)> = Vec::new();
    for (qi, qrow) in query.rows().into_iter().enumerate() {
        for (arm, idx) in arms.iter().enumerate() {
            dist.clear();
            dist.extend(idx.iter().map(|&i| {
                let d2: f64 = train
                    .x
                    .row(i)
                    .iter()
                    .zip(qrow.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            }));
            dist.select_nth_unstable_by(k - 1, |a, b| {
                a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
            });
            let mean = dist[..k].iter().map(|&(_, i)| train.y_f[i]).sum::<f64>() / k as f64;
            out[arm][qi] = mean;
        }
    }
    let [y0, y1] = out;
    Ok((y0, y1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn pehe_and_ate_identities() {
        let truth = array![1.0, -0.5, 2.0, 0.25];
        assert_eq!(pehe(&truth, &truth).unwrap(), (0.0, 0.0));
        assert_eq!(ate_error(&truth, &truth).unwrap(), 0.0);
        let shifted = truth.mapv(|v| v + 0.5);
        let (eps, root) = pehe(&truth, &shifted).unwrap();
        assert_eq!(eps, 0.25);
        assert_eq!(root, 0.5);
        assert_eq!(ate_error(&truth, &shifted).unwrap(), 0.5);
    }

    #[test]
    fn pehe_matches_direct_summation() {
        let truth = array![0.3, 1.7, -0.4, 2.2, 0.9];
        let pred = array![0.1, 1.5, 0.0, 2.0, 1.4];
        let expected = (0.04 + 0.04 + 0.16 + 0.04 + 0.25) / 5.0;
        let (eps, root) = pehe(&truth, &pred).unwrap();
        assert!((eps - expected).abs() < 1e-15);
        assert!((root - expected.sqrt()).abs() < 1e-15);
        let ate = ((0.3 + 1.7 - 0.4 + 2.2 + 0.9) - (0.1 + 1.5 + 0.0 + 2.0 + 1.4)) / 5.0;
        assert!((ate_error(&truth, &pred).unwrap() - f64::abs(ate)).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(pehe(&array![1.0], &array![1.0, 2.0]).is_err());
    }

    #[test]
    fn policy_risk_all_ones_is_zero() {
        let y = Vector::ones(6);
        let t = [1, 0, 1, 0, 1, 0];
        let e = [1; 6];
        let y1 = array![0.3, -1.0, 2.0, 0.5, -0.2, 0.0];
        let y0 = Vector::zeros(6);
        assert_eq!(policy_risk(&y1, &y0, &y, &t, &e).unwrap().value, 0.0);
    }

    #[test]
    fn policy_risk_treat_everyone() {
        let y = array![1.0, 0.0, 0.0, 1.0, 1.0];
        let t = [1, 0, 1, 1, 0];
        let e = [1; 5];
        let y1 = Vector::ones(5);
        let y0 = Vector::zeros(5);
        let pr = policy_risk(&y1, &y0, &y, &t, &e).unwrap();
        assert!((pr.value - (1.0 - 2.0 / 3.0)).abs() < 1e-15);
        assert!(!pr.empty_control_cell);
    }

    // 8-unit table; policy treats units 0..4.
    #[test]
    fn policy_risk_hand_table() {
        let y = array![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let t = [1, 1, 0, 0, 1, 0, 0, 1];
        let e = [1, 1, 1, 1, 1, 1, 1, 0];
        let ite = array![0.5, 0.2, 0.1, 0.3, -0.1, -0.4, -0.2, 0.9];
        let y0 = Vector::zeros(8);
        // randomized units 0..7: pi=1 for {0,1,2,3}, pi=0 for {4,5,6}
        // E[y1 | pi=1] over t=1: units 0,1 -> 0.5; E[y0 | pi=0] over t=0: units 5,6 -> 0.5
        let expected = 1.0 - (0.5 * 4.0 / 7.0 + 0.5 * 3.0 / 7.0);
        let pr = policy_risk(&ite, &y0, &y, &t, &e).unwrap();
        assert!((pr.value - expected).abs() < 1e-15);
    }

    #[test]
    fn policy_risk_without_randomized_units_is_unsupported() {
        let v = Vector::zeros(3);
        assert!(matches!(
            policy_risk(&v, &v, &v, &[0, 1, 0], &[0, 0, 0]),
            Err(IdrlError::UnsupportedMetric(_))
        ));
    }

    #[test]
    fn policy_risk_flags_empty_cells() {
        let y = array![1.0, 0.0];
        let t = [0, 0];
        let e = [1, 1];
        let pr = policy_risk(&Vector::ones(2), &Vector::zeros(2), &y, &t, &e).unwrap();
        assert!(pr.empty_treated_cell);
        assert_eq!(pr.value, 1.0);
    }

    proptest! {
        #[test]
        fn policy_risk_ignores_positive_rescaling(
            ite in proptest::collection::vec(-2.0f64..2.0, 12),
            scale in 0.01f64..100.0,
        ) {
            let y = array![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.5, 0.2];
            let t = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
            let e = [1; 12];
            let ite = Vector::from(ite);
            let zeros = Vector::zeros(12);
            let a = policy_risk(&ite, &zeros, &y, &t, &e).unwrap().value;
            let b = policy_risk(&ite.mapv(|v| v * scale), &zeros, &y, &t, &e).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pehe_and_ate_are_permutation_invariant(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30),
            rot in 0usize..30,
        ) {
            let truth: Vector = pairs.iter().map(|p| p.0).collect();
            let pred: Vector = pairs.iter().map(|p| p.1).collect();
            let n = pairs.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
            let mut seen = perm.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assume!(seen.len() == n);
            let pt: Vector = perm.iter().map(|&i| truth[i]).collect();
            let pp: Vector = perm.iter().map(|&i| pred[i]).collect();
            prop_assert!((pehe(&truth, &pred).unwrap().0 - pehe(&pt, &pp).unwrap().0).abs() < 1e-12);
            prop_assert!((ate_error(&truth, &pred).unwrap() - ate_error(&pt, &pp).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn att_exact_prediction_gives_zero() {
        let y = array![3.0, 2.0, 1.0, 0.5, 1.5];
        let t = [1, 1, 0, 0, 0];
        let e = [1, 1, 1, 1, 0];
        // ATT = 2.5 - 0.75 = 1.75
        let y1 = Vector::from_elem(5, 1.75);
        let y0 = Vector::zeros(5);
        assert_eq!(att_error(&y1, &y0, &y, &t, &e).unwrap(), 0.0);
    }

    #[test]
    fn att_equal_outcomes() {
        let y = Vector::from_elem(4, 2.0);
        let t = [1, 1, 0, 0];
        let e = [1, 1, 1, 1];
        let y1 = array![0.5, 1.5, 9.0, 9.0];
        let y0 = Vector::zeros(4);
        assert_eq!(att_error(&y1, &y0, &y, &t, &e).unwrap(), 1.0);
    }

    #[test]
    fn att_hand_table() {
        let y = array![5.0, 3.0, 4.0, 2.0, 1.0, 2.0, 7.0, 0.0, 3.0, 1.0];
        let t = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let e = [1, 1, 1, 1, 1, 0, 0, 1, 1, 0];
        let y1 = array![6.0, 3.5, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y0 = array![3.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        // treated mean 4; C∩E = {3,4,7,8} mean 1.5; ATT 2.5
        // predicted ATT over treated = (3 + 2.5 + 2) / 3 = 2.5
        assert!((att_error(&y1, &y0, &y, &t, &e).unwrap() - 0.0).abs() < 1e-15);
        let y1b = y1.mapv(|v| v + 0.3);
        assert!((att_error(&y1b, &y0, &y, &t, &e).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn att_requires_randomized_controls() {
        let v = Vector::zeros(3);
        assert!(matches!(
            att_error(&v, &v, &v, &[1, 0, 0], &[1, 0, 0]),
            Err(IdrlError::UnsupportedMetric(_))
        ));
    }

    fn knn_fixture() -> Dataset {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [-1.0, -1.0]];
        Dataset::new(x, vec![0, 1, 0, 1, 0], array![1.0, 10.0, 2.0, 20.0, 3.0]).unwrap()
    }

    #[test]
    fn knn_full_arm_is_arm_mean() {
        let mut ds = knn_fixture();
        ds = ds
            .concat(&Dataset::new(array![[2.0, -2.0]], vec![1], array![30.0]).unwrap())
            .unwrap();
        let q = array![[5.0, 5.0], [0.0, 0.0], [-3.0, 1.0]];
        let (y0, y1) = knn_estimator(&ds, &q, 3).unwrap();
        assert_eq!(y0, Vector::from_elem(3, 2.0));
        assert_eq!(y1, Vector::from_elem(3, 20.0));
    }

    #[test]
    fn knn_self_query_returns_own_outcome() {
        let ds = knn_fixture();
        let (y0, y1) = knn_estimator(&ds, &ds.x, 1).unwrap();
        for i in 0..ds.n() {
            let own = if ds.t[i] == 1 { y1[i] } else { y0[i] };
            assert_eq!(own, ds.y_f[i]);
        }
    }

    #[test]
    fn knn_matches_exhaustive_enumeration() {
        let ds = knn_fixture();
        let q = array![[0.5, 0.5]];
        // control distances^2: (0,0)->0.5, (0,2)->2.5, (-1,-1)->4.5 ; k=2 -> units 0,2 -> (1+2)/2
        // treated distances^2: (1,0)->0.5, (3,3)->12.5 ; k=2 -> (10+20)/2
        let (y0, y1) = knn_estimator(&ds, &q, 2).unwrap();
        assert_eq!(y0[0], 1.5);
        assert_eq!(y1[0], 15.0);
        let (y0, y1) = knn_estimator(&ds, &q, 1).unwrap();
        assert_eq!((y0[0], y1[0]), (1.0, 10.0));
    }

    #[test]
    fn knn_small_arm_is_rejected() {
        assert!(knn_estimator(&knn_fixture(), &array![[0.0, 0.0]], 3).is_err());
    }

    #[test]
    fn evaluate_without_ground_truth_leaves_metrics_empty() {
        let ds = knn_fixture();
        let r = evaluate(&ds, &Vector::zeros(5), &Vector::zeros(5), SplitLabel::InSample).unwrap();
        assert!(r.sqrt_pehe.is_none() && r.r_pol.is_none());
        assert!(r.factual_rmse > 0.0);
    }
}
