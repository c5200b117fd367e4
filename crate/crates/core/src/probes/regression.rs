use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{dim_err, Error, Result};

pub const RIDGE_ALPHA: f64 = 1.0;
/// Inverse regularization strength of the logistic probe.
pub const LOGISTIC_C: f64 = 1.0;

fn to_matrix(rows: &[Vec<f64>], op: &'static str) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(dim_err(op, &[d], &[bad.len()]));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault {
            location: format!("{op} features"),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |j, _| x.column(j).mean())
}

/// `1 − SSE/SST`, with 0 when the targets have no variance.
pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return 0.0;
    }
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - sse / sst
}

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub predictions: Vec<f64>,
    /// R² of the predictions against `y_test`, when given.
    pub r2: Option<f64>,
}

/// Ridge regression with an unpenalized intercept, solved in closed form
/// on centered data.
pub fn ridge_fit_predict(
    x_train: &[Vec<f64>],
    y_train: &[f64],
    x_test: &[Vec<f64>],
    y_test: Option<&[f64]>,
    alpha: f64,
) -> Result<RidgeFit> {
    if x_train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ridge regression needs at least 2 training rows, got {}",
            x_train.len()
        )));
    }
    if y_train.len() != x_train.len() {
        return Err(dim_err("ridge targets", &[x_train.len()], &[y_train.len()]));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Config(format!("ridge penalty must be positive, got {alpha}")));
    }
    let x = to_matrix(x_train, "ridge")?;
    let xt = to_matrix(x_test, "ridge")?;
    if !x_test.is_empty() && xt.ncols() != x.ncols() {
        return Err(dim_err("ridge test features", &[x.ncols()], &[xt.ncols()]));
    }
    let mu = column_means(&x);
    let y = DVector::from_column_slice(y_train);
    let y_mean = y.mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= mu.transpose();
    }
    let yc = y.add_scalar(-y_mean);
    let (n, d) = xc.shape();
    let w = if d <= n {
        let gram = xc.tr_mul(&xc) + DMatrix::identity(d, d) * alpha;
        let chol = gram.cholesky().ok_or(Error::NumericFault {
            location: "ridge normal equations".into(),
        })?;
        chol.solve(&xc.tr_mul(&yc))
    } else {
        // Dual form: w = Xᵀ (X Xᵀ + αI)⁻¹ y
        let gram = &xc * xc.transpose() + DMatrix::identity(n, n) * alpha;
        let chol = gram.cholesky().ok_or(Error::NumericFault {
            location: "ridge normal equations".into(),
        })?;
        xc.tr_mul(&chol.solve(&yc))
    };
    let intercept = y_mean - mu.dot(&w);
    let predictions: Vec<f64> = if x_test.is_empty() {
        Vec::new()
    } else {
        (&xt * &w).add_scalar(intercept).iter().copied().collect()
    };
    let r2 = match y_test {
        Some(yt) if yt.len() != predictions.len() => {
            return Err(dim_err("ridge test targets", &[predictions.len()], &[yt.len()]))
        }
        Some(yt) => Some(r_squared(yt, &predictions)),
        None => None,
    };
    Ok(RidgeFit {
        weights: w.iter().copied().collect(),
        intercept,
        predictions,
        r2,
    })
}

/// L2-regularized binary logistic regression with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }
}

/// Minimizes `½‖w‖² + C Σ logloss` by Newton's method (IRLS).
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], c: f64) -> Result<LogisticModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(dim_err("logistic regression", &[x.len()], &[y.len()]));
    }
    if c.is_nan() || c <= 0.0 {
        return Err(Error::Config(format!("logistic C must be positive, got {c}")));
    }
    let xm = to_matrix(x, "logistic regression")?;
    let (n, d) = xm.shape();
    // Design matrix with a trailing column of ones for the intercept.
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { xm[(i, j)] } else { 1.0 });
    let t = DVector::from_fn(n, |i, _| if y[i] { 1.0 } else { 0.0 });
    let mut beta = DVector::zeros(d + 1);
    let reg = DVector::from_fn(d + 1, |j, _| if j < d { 1.0 / c } else { 0.0 });
    for _ in 0..100 {
        let z = &a * &beta;
        let p = z.map(crate::numcore::sigmoid::<f64>);
        let wts = p.map(|v| (v * (1.0 - v)).max(1e-12));
        let mut grad = a.tr_mul(&(&p - &t));
        grad += reg.component_mul(&beta);
        let mut hess = a.transpose() * DMatrix::from_diagonal(&wts) * &a;
        for j in 0..=d {
            // Tiny ridge on the intercept keeps separable folds solvable.
            hess[(j, j)] += reg[j].max(1e-10);
        }
        let step = hess
            .cholesky()
            .ok_or(Error::NumericFault {
                location: "logistic regression Hessian".into(),
            })?
            .solve(&grad);
        beta -= &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault {
            location: "logistic regression weights".into(),
        });
    }
    Ok(LogisticModel {
        weights: beta.rows(0, d).iter().copied().collect(),
        intercept: beta[d],
    })
}

/// Assigns each item a fold so that every fold gets a near-equal share of
/// each class. Class members are shuffled, then dealt round-robin.
pub fn stratified_folds<R: Rng>(labels: &[bool], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    for class in [false, true] {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count < k {
            return Err(Error::InsufficientData(format!(
                "class {class} has {count} items, fewer than {k} folds"
            )));
        }
    }
    let mut fold = vec![0; labels.len()];
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for (j, &i) in idx.iter().enumerate() {
            fold[i] = (offset + j) % k;
        }
        offset += idx.len();
    }
    Ok(fold)
}

/// Cross-validated error rates of logistic regression and of the training
/// fold majority class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvErrors {
    pub model: f64,
    pub majority: f64,
}

impl CvErrors {
    /// Relative error reduction over the majority baseline. Not clamped.
    pub fn rer(&self) -> f64 {
        (self.majority - self.model) / self.majority
    }
}

pub fn cross_validate_logistic<R: Rng>(x: &[Vec<f64>], y: &[bool], k: usize, c: f64, rng: &mut R) -> Result<CvErrors> {
    let folds = stratified_folds(y, k, rng)?;
    let (mut wrong_model, mut wrong_majority) = (0usize, 0usize);
    for f in 0..k {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let xs: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let positives = ys.iter().filter(|&&v| v).count();
        let majority = 2 * positives > ys.len();
        let model = fit_logistic(&xs, &ys, c)?;
        for i in (0..y.len()).filter(|&i| folds[i] == f) {
            wrong_model += usize::from(model.predict(&x[i]) != y[i]);
            wrong_majority += usize::from(majority != y[i]);
        }
    }
    let n = y.len() as f64;
    Ok(CvErrors {
        model: wrong_model as f64 / n,
        majority: wrong_majority as f64 / n,
    })
}
