use serde::{Deserialize, Serialize};

use super::ProbeError;

/// Smallest standard deviation used when z-scoring.
pub const STD_FLOOR: f64 = 1e-6;
pub const DEFAULT_KNN_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Per-feature mean and floored population stddev.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self, ProbeError> {
        let dim = check_matrix(features)?;
        let n = features.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|j| features.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let var = features.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, ProbeError> {
        if x.len() != self.dim() {
            return Err(ProbeError::Shape(format!("feature has {} entries, expected {}", x.len(), self.dim())));
        }
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight on `|w|^2`.
    pub l2: f64,
    /// Stop once the loss changes by less than this between epochs.
    pub tolerance: f64,
}

impl Default for ProbeHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 2000,
            l2: 1e-4,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub w: Vec<f64>,
    pub b: f64,
    pub feature_stats: FeatureStats,
    /// Epochs actually run.
    pub epochs_run: usize,
}

fn check_matrix(features: &[Vec<f64>]) -> Result<usize, ProbeError> {
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| ProbeError::InvalidArgument("no examples".into()))?;
    if dim == 0 || features.iter().any(|x| x.len() != dim) {
        return Err(ProbeError::Shape("features must share a positive dimension".into()));
    }
    Ok(dim)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean cross-entropy plus `l2 * |w|^2`, with its gradient in `w` and `b`.
pub fn logistic_loss_and_gradient(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[u8], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        loss += if y == 1 { softplus(-z) } else { softplus(z) };
        let r = sigmoid(z) - f64::from(y);
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
        gb += r;
    }
    loss /= n;
    loss += l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + 2.0 * l2 * wi;
    }
    (loss, gw, gb / n)
}

/// Full-batch gradient descent from zero on z-scored features.
pub fn train_linear_probe(
    features: &[Vec<f64>],
    labels: &[u8],
    hp: &ProbeHyperparams,
) -> Result<LinearProbe, ProbeError> {
    if features.len() != labels.len() {
        return Err(ProbeError::Shape("features and labels differ in length".into()));
    }
    let stats = FeatureStats::fit(features)?;
    if labels.iter().any(|&y| y > 1) {
        return Err(ProbeError::InvalidArgument("labels must be 0 or 1".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(ProbeError::SingleClass);
    }
    let xs: Vec<Vec<f64>> = features.iter().map(|x| stats.transform(x)).collect::<Result<_, _>>()?;
    let mut w = vec![0.0; stats.dim()];
    let mut b = 0.0;
    let mut previous = f64::INFINITY;
    let mut epochs_run = 0;
    for _ in 0..hp.epochs {
        let (loss, gw, gb) = logistic_loss_and_gradient(&w, b, &xs, labels, hp.l2);
        if (previous - loss).abs() < hp.tolerance {
            break;
        }
        previous = loss;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= hp.learning_rate * g;
        }
        b -= hp.learning_rate * gb;
        epochs_run += 1;
    }
    Ok(LinearProbe {
        w,
        b,
        feature_stats: stats,
        epochs_run,
    })
}

/// Probability of relevance and the bit `p > 0.5`.
pub fn predict(probe: &LinearProbe, feature: &[f64]) -> Result<(f64, u8), ProbeError> {
    let x = probe.feature_stats.transform(feature)?;
    let z = x.iter().zip(&probe.w).map(|(a, b)| a * b).sum::<f64>() + probe.b;
    let p = sigmoid(z);
    Ok((p, u8::from(p > 0.5)))
}

/// Majority label of the `k` nearest training points (Euclidean, ties in
/// distance broken by training index); a split vote gives 0.
pub fn knn_probe(
    train_features: &[Vec<f64>],
    train_labels: &[u8],
    k: usize,
    feature: &[f64],
) -> Result<u8, ProbeError> {
    if k == 0 || k > train_features.len() {
        return Err(ProbeError::InvalidArgument(format!(
            "k = {k} with {} training examples",
            train_features.len()
        )));
    }
    if train_labels.len() != train_features.len() {
        return Err(ProbeError::Shape("features and labels differ in length".into()));
    }
    let mut dist: Vec<(f64, usize)> = train_features
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if x.len() != feature.len() {
                return Err(ProbeError::Shape(format!("feature has {} entries, expected {}", feature.len(), x.len())));
            }
            Ok((x.iter().zip(feature).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
        })
        .collect::<Result<_, _>>()?;
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ones = dist[..k].iter().filter(|(_, i)| train_labels[*i] == 1).count();
    Ok(u8::from(2 * ones > k))
}

/// Mean of the per-class F1 scores for classes 0 and 1.
pub fn f1_macro(labels: &[u8], predictions: &[u8]) -> Result<f64, ProbeError> {
    if labels.is_empty() || labels.len() != predictions.len() {
        return Err(ProbeError::Shape("labels and predictions must be equal and nonempty".into()));
    }
    let f1 = |class: u8| {
        let tp = labels.iter().zip(predictions).filter(|&(&l, &p)| l == class && p == class).count() as f64;
        let fp = labels.iter().zip(predictions).filter(|&(&l, &p)| l != class && p == class).count() as f64;
        let fneg = labels.iter().zip(predictions).filter(|&(&l, &p)| l == class && p != class).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        }
    };
    Ok((f1(0) + f1(1)) / 2.0)
}
