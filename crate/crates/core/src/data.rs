//! Dataset representation, stratified splits and covariate standardization.

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IdrlError, Result};
use crate::nn::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableRole {
    Confounder,
    Instrumental,
    Adjustment,
    Irrelevant,
}

/// Observational data: covariates, binary treatment and factual outcome, plus
/// whatever ground truth the source provides.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub t: Vec<u8>,
    pub y_f: Vector,
    pub y_cf: Option<Vector>,
    pub mu0: Option<Vector>,
    pub mu1: Option<Vector>,
    /// Membership in the randomized subset.
    pub e_flag: Option<Vec<u8>>,
    pub roles: Option<Vec<VariableRole>>,
}

impl Dataset {
    pub fn new(x: Matrix, t: Vec<u8>, y_f: Vector) -> Result<Self> {
        let ds = Self {
            x,
            t,
            y_f,
            y_cf: None,
            mu0: None,
            mu1: None,
            e_flag: None,
            roles: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let check = |name: &str, len: usize| {
            if len != n {
                Err(IdrlError::InvalidArgument(format!(
                    "`{name}` has length {len}, expected {n}"
                )))
            } else {
                Ok(())
            }
        };
        check("t", self.t.len())?;
        check("y_f", self.y_f.len())?;
        if let Some(v) = &self.y_cf {
            check("y_cf", v.len())?;
        }
        if let Some(v) = &self.mu0 {
            check("mu0", v.len())?;
        }
        if let Some(v) = &self.mu1 {
            check("mu1", v.len())?;
        }
        if let Some(v) = &self.e_flag {
            check("e", v.len())?;
            if v.iter().any(|&e| e > 1) {
                return Err(IdrlError::InvalidArgument("`e` must be 0/1".into()));
            }
        }
        if let Some(r) = &self.roles {
            if r.len() != self.d() {
                return Err(IdrlError::InvalidArgument(format!(
                    "{} roles for {} columns",
                    r.len(),
                    self.d()
                )));
            }
        }
        if self.t.iter().any(|&t| t > 1) {
            return Err(IdrlError::InvalidArgument("`t` must be 0/1".into()));
        }
        Ok(())
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&t| t == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Fails unless both arms have at least one unit.
    pub fn require_both_arms(&self) -> Result<()> {
        if self.n_treated() == 0 || self.n_control() == 0 {
            return Err(IdrlError::InvalidArgument(format!(
                "both treatment arms must be nonempty (treated {}, control {})",
                self.n_treated(),
                self.n_control()
            )));
        }
        Ok(())
    }

    pub fn t_float(&self) -> Vector {
        self.t.iter().map(|&t| t as f64).collect()
    }

    /// Noiseless individual effects `mu1 - mu0`, when both are present.
    pub fn true_ite(&self) -> Option<Vector> {
        match (&self.mu0, &self.mu1) {
            (Some(m0), Some(m1)) => Some(m1 - m0),
            _ => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &Vector| -> Vector { idx.iter().map(|&i| v[i]).collect() };
        Dataset {
            x: self.x.select(Axis(0), idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            y_f: pick(&self.y_f),
            y_cf: self.y_cf.as_ref().map(pick),
            mu0: self.mu0.as_ref().map(pick),
            mu1: self.mu1.as_ref().map(pick),
            e_flag: self
                .e_flag
                .as_ref()
                .map(|e| idx.iter().map(|&i| e[i]).collect()),
            roles: self.roles.clone(),
        }
    }

    /// Row-wise concatenation; optional fields survive only if both sides have them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.d() != other.d() {
            return Err(IdrlError::InvalidArgument(format!(
                "cannot concatenate {} and {} columns",
                self.d(),
                other.d()
            )));
        }
        let join = |a: &Option<Vector>, b: &Option<Vector>| match (a, b) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
            _ => None,
        };
        let x = ndarray::concatenate(Axis(0), &[self.x.view(), other.x.view()])
            .expect("column counts checked");
        Ok(Dataset {
            x,
            t: self.t.iter().chain(&other.t).copied().collect(),
            y_f: self.y_f.iter().chain(other.y_f.iter()).copied().collect(),
            y_cf: join(&self.y_cf, &other.y_cf),
            mu0: join(&self.mu0, &other.mu0),
            mu1: join(&self.mu1, &other.mu1),
            e_flag: match (&self.e_flag, &other.e_flag) {
                (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
                _ => None,
            },
            roles: self.roles.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.63,
            valid: 0.27,
            test: 0.10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.valid, self.test];
        if fr.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(IdrlError::InvalidArgument(
                "split fractions must be positive".into(),
            ));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(IdrlError::InvalidArgument(
                "split fractions must sum to 1".into(),
            ));
        }
        Ok(())
    }
}

/// Index sets of a three-way partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

// Largest-remainder apportionment of `total` into parts proportional to `weights`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Stratified partition of `0..n` by treatment arm.
pub fn split_indices(t: &[u8], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = t.len();
    if n < 10 {
        return Err(IdrlError::InvalidArgument(format!(
            "need at least 10 units to split, got {n}"
        )));
    }
    let fractions = [spec.train, spec.valid, spec.test];
    let sizes = apportion(n, &fractions);
    let mut treated: Vec<usize> = (0..n).filter(|&i| t[i] == 1).collect();
    let mut control: Vec<usize> = (0..n).filter(|&i| t[i] != 1).collect();
    let size_weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let treated_counts = apportion(treated.len(), &size_weights);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    treated.shuffle(&mut rng);
    control.shuffle(&mut rng);

    let names = ["train", "valid", "test"];
    let mut parts: Vec<Vec<usize>> = Vec::with_capacity(3);
    let (mut ti, mut ci) = (0, 0);
    for k in 0..3 {
        let nt = treated_counts[k];
        let nc = sizes[k] - nt;
        if nt == 0 || nc == 0 {
            return Err(IdrlError::InvalidArgument(format!(
                "{} split would have an empty treatment arm (treated {nt}, control {nc})",
                names[k]
            )));
        }
        let mut part: Vec<usize> = treated[ti..ti + nt]
            .iter()
            .chain(&control[ci..ci + nc])
            .copied()
            .collect();
        part.sort_unstable();
        ti += nt;
        ci += nc;
        parts.push(part);
    }
    let test = parts.pop().unwrap();
    let valid = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(SplitIndices { train, valid, test })
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(&ds.t, spec)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.valid), ds.subset(&idx.test)))
}

/// Per-column affine map fitted on a training set. Zero-variance columns keep
/// offset 0 and scale 1 so they pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(IdrlError::InvalidArgument(
                "cannot fit a scaler on zero rows".into(),
            ));
        }
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.mean().unwrap();
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64;
            if var > 0.0 && var.is_finite() {
                mean.push(m);
                scale.push(var.sqrt());
            } else {
                mean.push(0.0);
                scale.push(1.0);
            }
        }
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        (x - &mean) / &scale
    }

    pub fn inverse(&self, z: &Matrix) -> Matrix {
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        z * &scale + &mean
    }
}

/// Scalar standardization for outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaler {
    pub mean: f64,
    pub scale: f64,
}

impl OutcomeScaler {
    pub fn fit(y: &Vector) -> Self {
        let n = y.len().max(1) as f64;
        let mean = y.sum() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 && var.is_finite() {
            Self {
                mean,
                scale: var.sqrt(),
            }
        } else {
            Self {
                mean: 0.0,
                scale: 1.0,
            }
        }
    }

    pub fn transform(&self, y: &Vector) -> Vector {
        y.mapv(|v| (v - self.mean) / self.scale)
    }

    pub fn inverse(&self, z: &Vector) -> Vector {
        z.mapv(|v| v * self.scale + self.mean)
    }
}

/// Fits a scaler on `train` and applies it to `train` and every other dataset.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Scaler, Dataset, Vec<Dataset>)> {
    let scaler = Scaler::fit(&train.x)?;
    let apply = |ds: &Dataset| {
        let mut out = ds.clone();
        out.x = scaler.transform(&ds.x);
        out
    };
    let train_out = apply(train);
    let others_out = others.iter().map(|d| apply(d)).collect();
    Ok((scaler, train_out, others_out))
}
