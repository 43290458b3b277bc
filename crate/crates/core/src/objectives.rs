//! Regularized finite-sum objectives `F(x) = (1/N) Σ ℓ(y_i θ_iᵀx) + (a/2)‖x‖²`
//! together with exact second-order oracles used for testing and baselines.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, DenseMatrix};

/// Largest dimension for which a dense Hessian may be formed.
pub const DENSE_HESSIAN_CAP: usize = 512;

/// Labeled instances stored densely, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    normalized: bool,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                found: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidConfig(format!("label {bad} is not ±1")));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteResult("dataset features"));
        }
        Ok(Self {
            dim,
            features,
            labels,
            normalized: false,
        })
    }

    /// A dataset with no samples, used by sample-free objectives.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
            normalized: false,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        self.features.chunks_mut(self.dim.max(1))
    }

    pub(crate) fn set_normalized(&mut self, flag: bool) {
        self.normalized = flag;
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&c) = columns.iter().find(|&&c| c >= self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: c,
            });
        }
        let mut features = Vec::with_capacity(columns.len() * self.n_samples());
        for i in 0..self.n_samples() {
            let row = self.row(i);
            features.extend(columns.iter().map(|&c| row[c]));
        }
        Ok(Self {
            dim: columns.len(),
            features,
            labels: self.labels.clone(),
            normalized: false,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    HuberSvm,
    Quadratic,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "huber_svm" | "huber" => Ok(Self::HuberSvm),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(Error::InvalidConfig(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConfig {
    pub loss: LossKind,
    pub reg_a: f64,
    /// Diagonal Hessian of the quadratic test objective.
    pub spectrum: Option<Vec<f64>>,
}

impl ObjectiveConfig {
    pub fn logistic(reg_a: f64) -> Self {
        Self {
            loss: LossKind::Logistic,
            reg_a,
            spectrum: None,
        }
    }

    pub fn huber_svm(reg_a: f64) -> Self {
        Self {
            loss: LossKind::HuberSvm,
            reg_a,
            spectrum: None,
        }
    }

    pub fn quadratic(spectrum: Vec<f64>) -> Self {
        Self {
            loss: LossKind::Quadratic,
            reg_a: 0.0,
            spectrum: Some(spectrum),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reg_a >= 0.0 && self.reg_a.is_finite()) {
            return Err(Error::InvalidConfig(format!("reg_a = {}", self.reg_a)));
        }
        match (&self.loss, &self.spectrum) {
            (LossKind::Quadratic, Some(s)) if !s.is_empty() && s.iter().all(|&v| v > 0.0) => Ok(()),
            (LossKind::Quadratic, _) => Err(Error::InvalidConfig(
                "quadratic objective needs a nonempty positive spectrum".into(),
            )),
            (_, Some(_)) => Err(Error::InvalidConfig(
                "spectrum is only meaningful for the quadratic objective".into(),
            )),
            (_, None) => Ok(()),
        }
    }
}

/// Sorted, duplicate-free subset of sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
}

impl Batch {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "batch indices must be strictly increasing".into(),
            ));
        }
        if let Some(&i) = indices.last() {
            if i >= n {
                return Err(Error::BatchTooLarge { b: i + 1, n });
            }
        }
        Ok(Self { indices })
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Draws `b` distinct indices from `0..n` uniformly without replacement.
pub fn sample_batch(n: usize, b: usize, rng: &mut impl Rng) -> Result<Batch> {
    if b == 0 || b > n {
        return Err(Error::BatchTooLarge { b, n });
    }
    if b == n {
        return Ok(Batch::full(n));
    }
    let mut indices = rand::seq::index::sample(rng, n, b).into_vec();
    indices.sort_unstable();
    Ok(Batch { indices })
}

// Numerically stable log(1 + exp(z)).
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss as a function of the margin `y θᵀx`: value, first and
/// second derivative with respect to the margin.
fn margin_loss(kind: LossKind, m: f64) -> (f64, f64, f64) {
    match kind {
        LossKind::Logistic => {
            let s = sigmoid(-m);
            (softplus(-m), -s, s * (1.0 - s))
        }
        LossKind::HuberSvm => {
            if m >= 1.5 {
                (0.0, 0.0, 0.0)
            } else if m >= 0.5 {
                let r = 1.5 - m;
                (0.5 * r * r, -r, 1.0)
            } else {
                (1.0 - m, -1.0, 0.0)
            }
        }
        LossKind::Quadratic => unreachable!("quadratic objective has no samples"),
    }
}

/// An objective bound to its data.
#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    cfg: &'a ObjectiveConfig,
    data: &'a Dataset,
}

impl<'a> Objective<'a> {
    pub fn new(cfg: &'a ObjectiveConfig, data: &'a Dataset) -> Result<Self> {
        cfg.validate()?;
        if let Some(s) = &cfg.spectrum {
            if data.n_samples() > 0 && data.dim() != s.len() {
                return Err(Error::DimensionMismatch {
                    expected: s.len(),
                    found: data.dim(),
                });
            }
        } else if data.n_samples() == 0 {
            return Err(Error::InvalidConfig("dataset has no samples".into()));
        }
        Ok(Self { cfg, data })
    }

    pub fn config(&self) -> &'a ObjectiveConfig {
        self.cfg
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn dim(&self) -> usize {
        match &self.cfg.spectrum {
            Some(s) => s.len(),
            None => self.data.dim(),
        }
    }

    /// Number of finite-sum terms; the quadratic test bed counts as one.
    pub fn n_samples(&self) -> usize {
        match self.cfg.loss {
            LossKind::Quadratic => 1,
            _ => self.data.n_samples(),
        }
    }

    pub fn full_batch(&self) -> Batch {
        Batch::full(self.n_samples())
    }

    fn check(&self, batch: &Batch, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if self.cfg.loss != LossKind::Quadratic {
            if batch.is_empty() {
                return Err(Error::InvalidConfig("empty batch".into()));
            }
            if let Some(&i) = batch.indices().last() {
                if i >= self.n_samples() {
                    return Err(Error::BatchTooLarge {
                        b: i + 1,
                        n: self.n_samples(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn loss(&self, batch: &Batch, x: &[f64]) -> Result<f64> {
        self.check(batch, x)?;
        let reg = 0.5 * self.cfg.reg_a * dot(x, x);
        let value = match &self.cfg.spectrum {
            Some(s) => 0.5 * s.iter().zip(x).map(|(d, v)| d * v * v).sum::<f64>(),
            None => {
                let total: f64 = batch
                    .indices()
                    .iter()
                    .map(|&i| {
                        let m = self.data.label(i) * dot(self.data.row(i), x);
                        margin_loss(self.cfg.loss, m).0
                    })
                    .sum();
                total / batch.len() as f64
            }
        };
        Ok(value + reg)
    }

    pub fn gradient(&self, batch: &Batch, x: &[f64]) -> Result<Vec<f64>> {
        self.check(batch, x)?;
        let a = self.cfg.reg_a;
        let mut g: Vec<f64> = x.iter().map(|v| a * v).collect();
        match &self.cfg.spectrum {
            Some(s) => g.iter_mut().zip(s.iter().zip(x)).for_each(|(gi, (d, v))| *gi += d * v),
            None => {
                let inv_b = 1.0 / batch.len() as f64;
                for &i in batch.indices() {
                    let row = self.data.row(i);
                    let y = self.data.label(i);
                    let (_, d1, _) = margin_loss(self.cfg.loss, y * dot(row, x));
                    if d1 != 0.0 {
                        axpy(inv_b * y * d1, row, &mut g);
                    }
                }
            }
        }
        Ok(g)
    }

    /// Exact batch Hessian-vector product `H_B(x) v`.
    pub fn hvp_exact(&self, batch: &Batch, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(batch, x)?;
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: v.len(),
            });
        }
        let a = self.cfg.reg_a;
        let mut out: Vec<f64> = v.iter().map(|vi| a * vi).collect();
        match &self.cfg.spectrum {
            Some(s) => out.iter_mut().zip(s.iter().zip(v)).for_each(|(o, (d, vi))| *o += d * vi),
            None => {
                let inv_b = 1.0 / batch.len() as f64;
                for &i in batch.indices() {
                    let row = self.data.row(i);
                    let m = self.data.label(i) * dot(row, x);
                    let (_, _, d2) = margin_loss(self.cfg.loss, m);
                    if d2 != 0.0 {
                        axpy(inv_b * d2 * dot(row, v), row, &mut out);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `H_B(x) V` for all columns of `V` at once, sharing the curvature
    /// weights across columns.
    pub fn hvp_exact_block(&self, batch: &Batch, x: &[f64], v: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(batch, x)?;
        let (d, l) = (v.rows(), v.cols());
        if d != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: d });
        }
        let mut out = v.scale(self.cfg.reg_a).into_data();
        let vd = v.data();
        match &self.cfg.spectrum {
            Some(s) => {
                for (p, sp) in s.iter().enumerate() {
                    axpy(*sp, &vd[p * l..(p + 1) * l], &mut out[p * l..(p + 1) * l]);
                }
            }
            None => {
                // gather the weighted batch rows once, then two GEMMs
                let inv_b = 1.0 / batch.len() as f64;
                let mut rows = Vec::with_capacity(batch.len() * d);
                let mut weights = Vec::with_capacity(batch.len());
                for &i in batch.indices() {
                    let row = self.data.row(i);
                    let (_, _, d2) = margin_loss(self.cfg.loss, self.data.label(i) * dot(row, x));
                    if d2 != 0.0 {
                        rows.extend_from_slice(row);
                        weights.push(inv_b * d2);
                    }
                }
                if !weights.is_empty() {
                    let xb = nalgebra::DMatrix::from_row_slice(weights.len(), d, &rows);
                    // row-major d×l is column-major l×d
                    let vt = nalgebra::DMatrix::from_column_slice(l, d, vd);
                    let mut c = &xb * vt.transpose();
                    for (k, w) in weights.iter().enumerate() {
                        c.row_mut(k).scale_mut(*w);
                    }
                    let hv_t = c.transpose() * &xb;
                    for (o, h) in out.iter_mut().zip(hv_t.as_slice()) {
                        *o += h;
                    }
                }
            }
        }
        DenseMatrix::new(d, l, out)
    }

    /// Dense batch Hessian; only for `dim ≤ DENSE_HESSIAN_CAP`.
    pub fn dense_hessian(&self, batch: &Batch, x: &[f64]) -> Result<DenseMatrix> {
        let d = self.dim();
        if d > DENSE_HESSIAN_CAP {
            return Err(Error::DimensionTooLarge {
                dim: d,
                cap: DENSE_HESSIAN_CAP,
            });
        }
        self.check(batch, x)?;
        let mut h = DenseMatrix::identity(d).scale(self.cfg.reg_a);
        match &self.cfg.spectrum {
            Some(s) => {
                for (i, &v) in s.iter().enumerate() {
                    h.set(i, i, h.get(i, i) + v);
                }
            }
            None => {
                let inv_b = 1.0 / batch.len() as f64;
                let mut rows = Vec::with_capacity(batch.len() * d);
                for &i in batch.indices() {
                    let row = self.data.row(i);
                    let (_, _, d2) = margin_loss(self.cfg.loss, self.data.label(i) * dot(row, x));
                    if d2 != 0.0 {
                        let w = (inv_b * d2).sqrt();
                        rows.extend(row.iter().map(|r| w * r));
                    }
                }
                let k = rows.len() / d.max(1);
                if k > 0 {
                    // Σ w_i θ_i θ_iᵀ as one GEMM of the √w-scaled rows
                    let xb = nalgebra::DMatrix::from_row_slice(k, d, &rows);
                    let gram = xb.transpose() * &xb;
                    for p in 0..d {
                        for q in 0..d {
                            h.set(p, q, h.get(p, q) + 0.5 * (gram[(p, q)] + gram[(q, p)]));
                        }
                    }
                }
            }
        }
        Ok(h)
    }

    pub fn full_loss(&self, x: &[f64]) -> Result<f64> {
        self.loss(&self.full_batch(), x)
    }

    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradient(&self.full_batch(), x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, norm, sym_eig_small};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let feats = gaussian_matrix(n, d, seed).into_data();
        let labels = gaussian_matrix(n, 1, seed ^ 0xabc)
            .into_data()
            .into_iter()
            .map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        Dataset::new(d, feats, labels).unwrap()
    }

    #[test]
    fn logistic_at_origin_is_log_two() {
        let data = random_dataset(7, 3, 1);
        let cfg = ObjectiveConfig::logistic(0.0);
        let obj = Objective::new(&cfg, &data).unwrap();
        let l = obj.loss(&Batch::new(vec![1, 4, 5], 7).unwrap(), &[0.0; 3]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn huber_branches() {
        // single-feature samples with margins 2, 1 and 0 at x = 1
        let data = Dataset::new(1, vec![2.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]).unwrap();
        let cfg = ObjectiveConfig::huber_svm(0.0);
        let obj = Objective::new(&cfg, &data).unwrap();
        let per_sample: Vec<f64> = (0..3)
            .map(|i| obj.loss(&Batch::new(vec![i], 3).unwrap(), &[1.0]).unwrap())
            .collect();
        assert_eq!(per_sample, vec![0.0, 0.125, 1.0]);
    }

    #[test]
    fn huber_boundaries_take_the_smooth_branch() {
        assert_eq!(margin_loss(LossKind::HuberSvm, 1.5), (0.0, 0.0, 0.0));
        let (v, d1, d2) = margin_loss(LossKind::HuberSvm, 0.5);
        assert_eq!((v, d1, d2), (0.5, -1.0, 1.0));
    }

    #[test]
    fn logistic_stable_for_large_margins() {
        let (v, d1, d2) = margin_loss(LossKind::Logistic, -800.0);
        assert!((v - 800.0).abs() < 1e-12 && (d1 + 1.0).abs() < 1e-15 && d2 == 0.0);
        let (v, _, _) = margin_loss(LossKind::Logistic, 800.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn quadratic_values() {
        let cfg = ObjectiveConfig::quadratic(vec![1.0, 2.0, 3.0]);
        let data = Dataset::empty(3);
        let obj = Objective::new(&cfg, &data).unwrap();
        let b = obj.full_batch();
        let x = [1.0, 1.0, 1.0];
        assert_eq!(obj.loss(&b, &x).unwrap(), 3.0);
        assert_eq!(obj.gradient(&b, &x).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(obj.hvp_exact(&b, &x, &x).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            obj.dense_hessian(&b, &x).unwrap(),
            DenseMatrix::from_diag(&[1.0, 2.0, 3.0])
        );
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let data = random_dataset(5, 4, 2);
        let cfg = ObjectiveConfig::logistic(0.0);
        let obj = Objective::new(&cfg, &data).unwrap();
        let b = obj.full_batch();
        let g = obj.gradient(&b, &[0.0; 4]).unwrap();
        let mut expect = vec![0.0; 4];
        for i in 0..5 {
            axpy(-0.5 * data.label(i) / 5.0, data.row(i), &mut expect);
        }
        for (a, e) in g.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_single_sample_hvp_and_hessian() {
        let data = Dataset::new(2, vec![1.0, 0.0], vec![1.0]).unwrap();
        let cfg = ObjectiveConfig::logistic(0.0);
        let obj = Objective::new(&cfg, &data).unwrap();
        let b = obj.full_batch();
        let hv = obj.hvp_exact(&b, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(hv, vec![0.25, 0.0]);

        let cfg = ObjectiveConfig::logistic(0.5);
        let obj = Objective::new(&cfg, &data).unwrap();
        let h = obj.dense_hessian(&b, &[0.0, 0.0]).unwrap();
        assert_eq!(h, DenseMatrix::from_rows(&[vec![0.75, 0.0], vec![0.0, 0.5]]).unwrap());
        // finite-difference oracle on the gradient
        let eps = 1e-6;
        for j in 0..2 {
            let mut xp = [0.0, 0.0];
            let mut xm = [0.0, 0.0];
            xp[j] = eps;
            xm[j] = -eps;
            let gp = obj.gradient(&b, &xp).unwrap();
            let gm = obj.gradient(&b, &xm).unwrap();
            for i in 0..2 {
                assert!(((gp[i] - gm[i]) / (2.0 * eps) - h.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dense_hessian_cap() {
        let cfg = ObjectiveConfig::quadratic(vec![1.0; 513]);
        let data = Dataset::empty(513);
        let obj = Objective::new(&cfg, &data).unwrap();
        assert!(matches!(
            obj.dense_hessian(&obj.full_batch(), &vec![0.0; 513]),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let data = random_dataset(3, 2, 0);
        let cfg = ObjectiveConfig::logistic(0.1);
        let obj = Objective::new(&cfg, &data).unwrap();
        assert!(matches!(
            obj.loss(&obj.full_batch(), &[0.0; 3]),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn sample_batch_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_batch(5, 5, &mut rng).unwrap(), Batch::full(5));
        assert_eq!(sample_batch(1, 1, &mut rng).unwrap().indices(), &[0]);
        assert!(matches!(sample_batch(3, 4, &mut rng), Err(Error::BatchTooLarge { .. })));
        assert!(matches!(sample_batch(3, 0, &mut rng), Err(Error::BatchTooLarge { .. })));
    }

    #[test]
    fn sample_batch_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 10];
        let draws = 10_000;
        for _ in 0..draws {
            let b = sample_batch(10, 3, &mut rng).unwrap();
            assert_eq!(b.len(), 3);
            for &i in b.indices() {
                counts[i] += 1;
            }
        }
        // each index appears in a draw with probability 0.3
        let sd = (draws as f64 * 0.3 * 0.7).sqrt();
        for c in counts {
            assert!((c as f64 - 0.3 * draws as f64).abs() <= 4.0 * sd, "count {c}");
        }
    }

    fn random_batch(n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = 1 + (seed as usize % n);
        sample_batch(n, b, &mut rng).unwrap()
    }

    fn kinds() -> [LossKind; 3] {
        [LossKind::Logistic, LossKind::HuberSvm, LossKind::Quadratic]
    }

    fn config_for(kind: LossKind, d: usize, a: f64) -> ObjectiveConfig {
        match kind {
            LossKind::Logistic => ObjectiveConfig::logistic(a),
            LossKind::HuberSvm => ObjectiveConfig::huber_svm(a),
            LossKind::Quadratic => {
                ObjectiveConfig::quadratic((1..=d).map(|i| 0.5 + i as f64).collect())
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (n, d) = (30, 6);
        let data = random_dataset(n, d, 5);
        for kind in kinds() {
            let cfg = config_for(kind, d, 0.05);
            let obj = Objective::new(&cfg, &data).unwrap();
            for trial in 0..50u64 {
                let x = gaussian_matrix(d, 1, 1000 + trial).into_data();
                let batch = random_batch(n, trial);
                let g = obj.gradient(&batch, &x).unwrap();
                let h = 1e-6;
                let fd: Vec<f64> = (0..d)
                    .map(|j| {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[j] += h;
                        xm[j] -= h;
                        (obj.loss(&batch, &xp).unwrap() - obj.loss(&batch, &xm).unwrap()) / (2.0 * h)
                    })
                    .collect();
                let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
                assert!(
                    norm(&diff) <= 1e-5 * norm(&g).max(1e-3),
                    "{kind:?} trial {trial}: {} vs {}",
                    norm(&diff),
                    norm(&g)
                );
            }
        }
    }

    #[test]
    fn convexity_witness() {
        let (n, d) = (40, 8);
        let data = random_dataset(n, d, 9);
        let a = 0.1;
        for kind in [LossKind::Logistic, LossKind::HuberSvm] {
            let cfg = config_for(kind, d, a);
            let obj = Objective::new(&cfg, &data).unwrap();
            for s in 0..10 {
                let x = gaussian_matrix(d, 1, s).into_data();
                let h = obj.dense_hessian(&random_batch(n, s), &x).unwrap();
                let e = sym_eig_small(&h).unwrap();
                assert!(*e.values.last().unwrap() >= a - 1e-10);
            }
        }
    }

    #[test]
    fn batch_additivity() {
        let data = random_dataset(20, 4, 3);
        let cfg = ObjectiveConfig::logistic(0.3);
        let obj = Objective::new(&cfg, &data).unwrap();
        let x = gaussian_matrix(4, 1, 4).into_data();
        let b1 = Batch::new(vec![0, 3, 5, 9], 20).unwrap();
        let b2 = Batch::new(vec![1, 2, 11, 19], 20).unwrap();
        let union = Batch::new(vec![0, 1, 2, 3, 5, 9, 11, 19], 20).unwrap();
        let l1 = obj.loss(&b1, &x).unwrap();
        let l2 = obj.loss(&b2, &x).unwrap();
        let lu = obj.loss(&union, &x).unwrap();
        assert!((lu - 0.5 * (l1 + l2)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hvp_matches_dense_hessian(d in 1usize..=20, seed in any::<u64>(), kind_ix in 0usize..3) {
            let kind = kinds()[kind_ix];
            let data = random_dataset(25, d, seed);
            let cfg = config_for(kind, d, 0.01);
            let obj = Objective::new(&cfg, &data).unwrap();
            let x = gaussian_matrix(d, 1, seed ^ 7).into_data();
            let v = gaussian_matrix(d, 1, seed ^ 8).into_data();
            let batch = random_batch(25, seed);
            let hv = obj.hvp_exact(&batch, &x, &v).unwrap();
            let dense = obj.dense_hessian(&batch, &x).unwrap().mul_vec(&v).unwrap();
            let diff: Vec<f64> = hv.iter().zip(&dense).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&diff) <= 1e-10 * norm(&dense).max(1e-300));
        }
    }
}
