use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EmbedderError;

/// A fitted linear projection onto the top principal directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-major, one orthonormal component per row.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing.
    pub explained_variance: Vec<f64>,
    pub fitted_on: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn component_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(self.k(), d, |i, j| self.components[i][j])
    }

    /// Project rows of `x` (n×d) to n×k.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, EmbedderError> {
        if x.ncols() != self.dim() {
            return Err(EmbedderError::Shape(format!(
                "model expects {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let centered = center_with(x, &self.mean);
        Ok(centered * self.component_matrix().transpose())
    }

    /// Map n×k scores back to n×d.
    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>, EmbedderError> {
        if z.ncols() != self.k() {
            return Err(EmbedderError::Shape(format!(
                "model has {} components, got {} columns",
                self.k(),
                z.ncols()
            )));
        }
        let mut back = z * self.component_matrix();
        for mut row in back.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(back)
    }

    pub fn transform_f32(&self, rows: &[Vec<f32>]) -> Result<Vec<Vec<f32>>, EmbedderError> {
        let z = self.transform(&to_matrix(rows, self.dim())?)?;
        Ok(from_matrix(&z))
    }

    /// Sum of squared reconstruction residuals.
    pub fn reconstruction_error(&self, x: &DMatrix<f64>) -> Result<f64, EmbedderError> {
        let back = self.inverse_transform(&self.transform(x)?)?;
        Ok((x - back).norm_squared())
    }
}

pub fn to_matrix(rows: &[Vec<f32>], d: usize) -> Result<DMatrix<f64>, EmbedderError> {
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(EmbedderError::Shape(format!(
            "row of length {} in a {d}-column matrix",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| f64::from(rows[i][j])))
}

pub fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f32>> {
    m.row_iter()
        .map(|r| r.iter().map(|v| *v as f32).collect())
        .collect()
}

fn column_mean(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

fn center_with(x: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

/// Flip each component so its largest-magnitude entry is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Batch PCA from the thin SVD of the centered data. Equivalent to the
/// eigendecomposition of the n-1 sample covariance, but stays stable when
/// many columns are constant.
pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<PcaModel, EmbedderError> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(EmbedderError::Degenerate(format!("need at least 2 rows, got {n}")));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(EmbedderError::ComponentRange { k, max: (n - 1).min(d) });
    }
    let mean = column_mean(x);
    let svd = center_with(x, &mean).svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| EmbedderError::Degenerate("svd failed".into()))?;
    let s = &svd.singular_values;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(EmbedderError::Degenerate("svd did not converge".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|a, b| s[*b].total_cmp(&s[*a]));
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
        fix_sign(&mut v);
        components.push(v);
        explained_variance.push(s[i] * s[i] / (n as f64 - 1.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        fitted_on: n,
    })
}

/// Streaming PCA that folds one batch at a time into a rank-k summary
/// (singular values times components) plus running mean and count.
#[derive(Debug, Clone)]
pub struct IncrementalPca {
    k: usize,
    d: Option<usize>,
    seen: usize,
    mean: DVector<f64>,
    /// k×d, rows scaled by their singular values.
    summary: DMatrix<f64>,
    singular: Vec<f64>,
}

impl IncrementalPca {
    pub fn new(k: usize) -> Self {
        IncrementalPca {
            k,
            d: None,
            seen: 0,
            mean: DVector::zeros(0),
            summary: DMatrix::zeros(0, 0),
            singular: Vec::new(),
        }
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn partial_fit(&mut self, batch: &DMatrix<f64>) -> Result<(), EmbedderError> {
        let (b, d) = batch.shape();
        if b == 0 {
            return Ok(());
        }
        match self.d {
            Some(expected) if expected != d => {
                return Err(EmbedderError::Shape(format!(
                    "batch has {d} columns, earlier batches had {expected}"
                )))
            }
            None => {
                if self.k == 0 || self.k > d || self.k > b {
                    return Err(EmbedderError::ComponentRange {
                        k: self.k,
                        max: d.min(b),
                    });
                }
                self.d = Some(d);
                self.mean = DVector::zeros(d);
            }
            _ => {}
        }
        let total = self.seen + b;
        let batch_mean = DVector::from_vec(column_mean(batch));
        let centered = center_with(batch, batch_mean.as_slice());

        let extra = if self.seen == 0 { 0 } else { self.summary.nrows() + 1 };
        let mut stacked = DMatrix::zeros(extra + b, d);
        if self.seen > 0 {
            let r = self.summary.nrows();
            stacked.rows_mut(0, r).copy_from(&self.summary);
            let scale = ((self.seen as f64 / total as f64) * b as f64).sqrt();
            let correction = (&self.mean - &batch_mean) * scale;
            stacked.row_mut(r).copy_from(&correction.transpose());
        }
        stacked.rows_mut(extra, b).copy_from(&centered);

        let svd = stacked.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| EmbedderError::Degenerate("svd failed".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
        let keep = self.k.min(order.len());
        let mut summary = DMatrix::zeros(keep, d);
        let mut singular = Vec::with_capacity(keep);
        for (row, &i) in order.iter().take(keep).enumerate() {
            let s = svd.singular_values[i];
            summary.row_mut(row).copy_from(&(v_t.row(i) * s));
            singular.push(s);
        }

        self.mean = (&self.mean * self.seen as f64 + batch_mean * b as f64) / total as f64;
        self.seen = total;
        self.summary = summary;
        self.singular = singular;
        Ok(())
    }

    pub fn finish(&self) -> Result<PcaModel, EmbedderError> {
        if self.seen < self.k + 1 {
            return Err(EmbedderError::Degenerate(format!(
                "incremental PCA saw {} rows, needs at least {}",
                self.seen,
                self.k + 1
            )));
        }
        let denom = self.seen as f64 - 1.0;
        let mut components = Vec::with_capacity(self.k);
        let mut explained_variance = Vec::with_capacity(self.k);
        for (row, s) in self.summary.row_iter().zip(&self.singular) {
            let mut v: Vec<f64> = if *s > 0.0 {
                row.iter().map(|x| x / s).collect()
            } else {
                row.iter().copied().collect()
            };
            fix_sign(&mut v);
            components.push(v);
            explained_variance.push(s * s / denom);
        }
        Ok(PcaModel {
            mean: self.mean.iter().copied().collect(),
            components,
            explained_variance,
            fitted_on: self.seen,
        })
    }
}

/// Fit by streaming `batches` through [`IncrementalPca`].
pub fn fit_incremental_pca<'a, I>(batches: I, k: usize) -> Result<PcaModel, EmbedderError>
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    let mut ipca = IncrementalPca::new(k);
    for batch in batches {
        ipca.partial_fit(batch)?;
    }
    ipca.finish()
}

/// Fit incrementally over `rows` in chunks of `batch_size`. A short tail is
/// folded into the previous chunk so no chunk is smaller than `k`.
pub fn fit_incremental_rows(
    rows: &[Vec<f32>],
    d: usize,
    k: usize,
    batch_size: usize,
) -> Result<PcaModel, EmbedderError> {
    if rows.len() < k + 1 {
        return Err(EmbedderError::Degenerate(format!(
            "{} rows cannot support {k} components",
            rows.len()
        )));
    }
    let size = batch_size.max(k).max(1);
    let mut bounds = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = (start + size).min(rows.len());
        if rows.len() - end < k && end < rows.len() {
            end = rows.len();
        }
        bounds.push((start, end));
        start = end;
    }
    let mut ipca = IncrementalPca::new(k);
    for (s, e) in bounds {
        ipca.partial_fit(&to_matrix(&rows[s..e], d)?)?;
    }
    ipca.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_two_data_reconstructs_exactly() {
        let basis = [[1.0, 2.0, 0.0, -1.0], [0.5, -1.0, 3.0, 0.0]];
        let x = DMatrix::from_fn(12, 4, |i, j| {
            let a = (i as f64 * 0.7).sin();
            let b = (i as f64 * 1.3).cos();
            a * basis[0][j] + b * basis[1][j] + 5.0
        });
        let m = fit_pca(&x, 2).unwrap();
        assert!(m.reconstruction_error(&x).unwrap() <= 1e-8);
    }

    #[test]
    fn range_checks() {
        let x = DMatrix::from_element(5, 3, 1.0);
        assert!(matches!(fit_pca(&x, 0), Err(EmbedderError::ComponentRange { .. })));
        assert!(matches!(fit_pca(&x, 4), Err(EmbedderError::ComponentRange { .. })));
        assert!(fit_pca(&DMatrix::from_element(1, 3, 1.0), 1).is_err());
    }

    #[test]
    fn mismatched_batches_rejected() {
        let mut ipca = IncrementalPca::new(1);
        ipca.partial_fit(&DMatrix::from_element(3, 3, 1.0)).unwrap();
        assert!(ipca.partial_fit(&DMatrix::from_element(3, 4, 1.0)).is_err());
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn model_serde() {
        let x = DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 * if j == 1 { 0.5 } else { 1.0 });
        let m = fit_pca(&x, 1).unwrap();
        let back: PcaModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
