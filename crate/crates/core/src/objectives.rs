//! Training objectives: per-level in-batch bidirectional contrastive loss,
//! its sum over levels, the matching scorer, and analytic gradients for all
//! of them. Everything here is f64 and pure.
//!
//! Gradients are closed-form; `finite_diff_grad` is the independent check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine early-output projection for one level of one tower:
/// maps a raw hidden vector of width `d_in` to an embedding of width `d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EolProjection {
    pub level: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out x d_in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EolProjection {
    pub fn new(
        level: usize,
        d_in: usize,
        d_out: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weight.len() != d_out * d_in || bias.len() != d_out {
            return Err(Error::DimMismatch {
                level,
                expected: d_out * d_in + d_out,
                got: weight.len() + bias.len(),
            });
        }
        if weight.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { id: 0, level });
        }
        Ok(Self {
            level,
            d_in,
            d_out,
            weight,
            bias,
        })
    }

    pub fn zeros(level: usize, d_in: usize, d_out: usize) -> Self {
        Self {
            level,
            d_in,
            d_out,
            weight: vec![0.0; d_out * d_in],
            bias: vec![0.0; d_out],
        }
    }

    pub fn identity(level: usize, d: usize) -> Self {
        let mut weight = vec![0.0; d * d];
        for i in 0..d {
            weight[i * d + i] = 1.0;
        }
        Self {
            level,
            d_in: d,
            d_out: d,
            weight,
            bias: vec![0.0; d],
        }
    }

    /// `weight * raw + bias`.
    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.d_in {
            return Err(Error::DimMismatch {
                level: self.level,
                expected: self.d_in,
                got: raw.len(),
            });
        }
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.d_in)) {
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(raw) {
                acc += w * x;
            }
            *o += acc;
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Flatten as `[weight row-major.., bias..]`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.weight.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn from_flat(level: usize, d_in: usize, d_out: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != d_out * d_in + d_out {
            return Err(Error::DimMismatch {
                level,
                expected: d_out * d_in + d_out,
                got: flat.len(),
            });
        }
        Self::new(
            level,
            d_in,
            d_out,
            flat[..d_out * d_in].to_vec(),
            flat[d_out * d_in..].to_vec(),
        )
    }

    /// In-place gradient step `p -= lr * g`.
    pub fn step(&mut self, grad: &ProjGrad, lr: f64) {
        for (w, g) in self.weight.iter_mut().zip(&grad.weight) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }
}

/// Gradient w.r.t. one projection's weight and bias, same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProjGrad {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: vec![0.0; d_out * d_in],
            bias: vec![0.0; d_out],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut p = self.weight.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn add_assign(&mut self, other: &ProjGrad) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

/// A batch of n aligned (query, gallery) raw-vector pairs; pair i matches
/// item i, everything off-diagonal is a negative.
#[derive(Debug, Clone)]
pub struct PairBatch {
    queries: Vec<Vec<f64>>,
    galleries: Vec<Vec<f64>>,
}

impl PairBatch {
    pub fn new(queries: Vec<Vec<f64>>, galleries: Vec<Vec<f64>>) -> Result<Self> {
        if queries.len() != galleries.len() {
            return Err(Error::ScheduleMismatch(format!(
                "{} queries vs {} galleries",
                queries.len(),
                galleries.len()
            )));
        }
        if queries.len() < 2 {
            return Err(Error::DegenerateBatch(queries.len()));
        }
        for side in [&queries, &galleries] {
            let d = side[0].len();
            for v in side.iter() {
                if v.len() != d {
                    return Err(Error::DimMismatch {
                        level: 0,
                        expected: d,
                        got: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite { id: 0, level: 0 });
                }
            }
        }
        Ok(Self { queries, galleries })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction enforces n >= 2
    }

    pub fn queries(&self) -> &[Vec<f64>] {
        &self.queries
    }

    pub fn galleries(&self) -> &[Vec<f64>] {
        &self.galleries
    }
}

/// Plain inner product; no normalization, no temperature.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            level: 0,
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Max-subtracted softmax over a similarity row.
pub fn softmax(sims: &[f64]) -> Vec<f64> {
    let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Probability of `target` under the in-batch softmax of `sims`.
pub fn in_batch_softmax(sims: &[f64], target: usize) -> Result<f64> {
    if sims.is_empty() {
        return Err(Error::EmptyInput);
    }
    if target >= sims.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: sims.len(),
        });
    }
    Ok(softmax(sims)[target])
}

/// log(sum(exp(row))) with max subtraction.
fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + row.iter().map(|&s| (s - max).exp()).sum::<f64>().ln()
}

/// Gradients of a per-level retrieval loss w.r.t. both towers' projections.
#[derive(Debug, Clone)]
pub struct LevelGrads {
    pub query: ProjGrad,
    pub gallery: ProjGrad,
}

/// Bidirectional in-batch contrastive loss for one level:
/// mean over the batch of half the query->gallery and gallery->query
/// cross-entropies, with the diagonal as ground truth. Returns the loss and
/// analytic gradients for both projections.
pub fn retrieval_loss_level(
    batch: &PairBatch,
    query_proj: &EolProjection,
    gallery_proj: &EolProjection,
) -> Result<(f64, LevelGrads)> {
    let n = batch.len();
    let projected_q: Vec<Vec<f64>> = batch
        .queries()
        .iter()
        .map(|q| query_proj.project(q))
        .collect::<Result<_>>()?;
    let projected_g: Vec<Vec<f64>> = batch
        .galleries()
        .iter()
        .map(|g| gallery_proj.project(g))
        .collect::<Result<_>>()?;

    // Full similarity matrix S[i][j] = q_i . g_j.
    let mut sims = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sims[i][j] = similarity(&projected_q[i], &projected_g[j])?;
        }
    }

    // loss = (1/2n) sum_i [ lse(row_i) - S_ii + lse(col_i) - S_ii ]
    let mut loss = 0.0;
    for i in 0..n {
        let col: Vec<f64> = (0..n).map(|k| sims[k][i]).collect();
        loss += log_sum_exp(&sims[i]) - sims[i][i];
        loss += log_sum_exp(&col) - sims[i][i];
    }
    loss /= 2.0 * n as f64;

    // dL/dS = ((row softmax - I) + (col softmax - I)) / 2n
    let mut grad_s = vec![vec![0.0; n]; n];
    for i in 0..n {
        let p_row = softmax(&sims[i]);
        for j in 0..n {
            grad_s[i][j] += p_row[j];
        }
        grad_s[i][i] -= 1.0;
    }
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|k| sims[k][j]).collect();
        let p_col = softmax(&col);
        for i in 0..n {
            grad_s[i][j] += p_col[i];
        }
        grad_s[j][j] -= 1.0;
    }
    let scale = 1.0 / (2.0 * n as f64);

    // Chain through the affine maps.
    let mut gq = ProjGrad::zeros(query_proj.d_in, query_proj.d_out);
    let mut gg = ProjGrad::zeros(gallery_proj.d_in, gallery_proj.d_out);
    let d_out = query_proj.d_out;
    for i in 0..n {
        // dL/dt_i = sum_j G_ij v_j
        let mut dt = vec![0.0; d_out];
        for j in 0..n {
            let g = grad_s[i][j] * scale;
            for (a, v) in dt.iter_mut().zip(&projected_g[j]) {
                *a += g * v;
            }
        }
        for (r, &d) in dt.iter().enumerate() {
            let row = &mut gq.weight[r * query_proj.d_in..(r + 1) * query_proj.d_in];
            for (w, x) in row.iter_mut().zip(&batch.queries()[i]) {
                *w += d * x;
            }
            gq.bias[r] += d;
        }
    }
    for j in 0..n {
        // dL/dv_j = sum_i G_ij t_i
        let mut dv = vec![0.0; d_out];
        for i in 0..n {
            let g = grad_s[i][j] * scale;
            for (a, t) in dv.iter_mut().zip(&projected_q[i]) {
                *a += g * t;
            }
        }
        for (r, &d) in dv.iter().enumerate() {
            let row = &mut gg.weight[r * gallery_proj.d_in..(r + 1) * gallery_proj.d_in];
            for (w, x) in row.iter_mut().zip(&batch.galleries()[j]) {
                *w += d * x;
            }
            gg.bias[r] += d;
        }
    }

    Ok((
        loss,
        LevelGrads {
            query: gq,
            gallery: gg,
        },
    ))
}

/// Sum of per-level retrieval losses over all levels; gradients per level.
pub fn hrl_loss(
    batch: &PairBatch,
    projections: &[(EolProjection, EolProjection)],
) -> Result<(f64, Vec<LevelGrads>)> {
    if projections.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(projections.len());
    for (q, g) in projections {
        let (loss, grad) = retrieval_loss_level(batch, q, g)?;
        total += loss;
        grads.push(grad);
    }
    Ok((total, grads))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bilinear matching scorer over final-level embeddings:
/// `p = sigmoid(q^T W g + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmScorer {
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl VlmScorer {
    pub fn new(dim: usize, weight: Vec<f64>, bias: f64) -> Result<Self> {
        if weight.len() != dim * dim {
            return Err(Error::DimMismatch {
                level: 0,
                expected: dim * dim,
                got: weight.len(),
            });
        }
        if weight.iter().any(|x| !x.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite { id: 0, level: 0 });
        }
        Ok(Self { dim, weight, bias })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weight: vec![0.0; dim * dim],
            bias: 0.0,
        }
    }

    pub fn logit(&self, q: &[f64], g: &[f64]) -> Result<f64> {
        if q.len() != self.dim || g.len() != self.dim {
            return Err(Error::DimMismatch {
                level: 0,
                expected: self.dim,
                got: if q.len() != self.dim { q.len() } else { g.len() },
            });
        }
        let mut acc = self.bias;
        for (i, qi) in q.iter().enumerate() {
            let row = &self.weight[i * self.dim..(i + 1) * self.dim];
            let mut s = 0.0;
            for (w, gj) in row.iter().zip(g) {
                s += w * gj;
            }
            acc += qi * s;
        }
        Ok(acc)
    }

    /// Matching probability in the open interval (0, 1).
    pub fn score(&self, q: &[f64], g: &[f64]) -> Result<f64> {
        let p = sigmoid(self.logit(q, g)?);
        // sigmoid underflows to 0.0 for very negative logits; clamp into the
        // open interval so downstream logs stay finite
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
    }
}

/// Gradient of the matching loss w.r.t. scorer parameters.
#[derive(Debug, Clone)]
pub struct VlmGrads {
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// A labeled matching example: (query embedding, gallery embedding, label).
pub type LabeledPair = (Vec<f64>, Vec<f64>, f64);

/// Mean binary cross-entropy of the scorer over labeled pairs, computed in
/// log-space from the logit, with analytic gradients.
pub fn vlm_loss(scorer: &VlmScorer, pairs: &[LabeledPair]) -> Result<(f64, VlmGrads)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut loss = 0.0;
    let mut gw = vec![0.0; scorer.weight.len()];
    let mut gb = 0.0;
    let scale = 1.0 / pairs.len() as f64;
    for (q, g, y) in pairs {
        let z = scorer.logit(q, g)?;
        // bce(z, y) = max(z, 0) - y z + ln(1 + e^-|z|)
        loss += z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
        let dz = (sigmoid(z) - y) * scale;
        for (i, qi) in q.iter().enumerate() {
            let row = &mut gw[i * scorer.dim..(i + 1) * scorer.dim];
            for (w, gj) in row.iter_mut().zip(g) {
                *w += dz * qi * gj;
            }
        }
        gb += dz;
    }
    loss *= scale;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok((loss, VlmGrads { weight: gw, bias: gb }))
}

/// Central-difference gradient estimate of `f` at `point`:
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
pub fn finite_diff_grad<F>(f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference step must be > 0".into()));
    }
    let mut grad = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let plus = f(&x)?;
        x[i] = point[i] - step;
        let minus = f(&x)?;
        x[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Relative-error metric used by all gradient checks:
/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_identity_and_affine() {
        let p = EolProjection::identity(0, 2);
        assert_eq!(p.project(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);

        let p = EolProjection::new(0, 2, 1, vec![1.0, 1.0], vec![0.5]).unwrap();
        assert_eq!(p.project(&[1.0, 2.0]).unwrap(), vec![3.5]);

        assert!(p.project(&[1.0]).is_err());
    }

    #[test]
    fn similarity_basics() {
        assert_eq!(similarity(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(similarity(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        assert!(similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(in_batch_softmax(&[0.0; 4], 0).unwrap(), 0.25);
        let p = in_batch_softmax(&[2.0, 0.0, 0.0], 0).unwrap();
        let expected = 2.0_f64.exp() / (2.0_f64.exp() + 2.0);
        assert!((p - expected).abs() < 1e-15);
        assert!((expected - 0.786986).abs() < 1e-6);
        // no overflow under max subtraction
        let p = in_batch_softmax(&[1000.0, 0.0], 0).unwrap();
        assert!(p.is_finite() && (p - 1.0).abs() < 1e-12);
        assert!(in_batch_softmax(&[0.0], 3).is_err());
    }

    fn uniform_batch(n: usize, d: usize) -> PairBatch {
        PairBatch::new(vec![vec![1.0; d]; n], vec![vec![1.0; d]; n]).unwrap()
    }

    #[test]
    fn uniform_similarities_give_ln_n() {
        // zero weights make every similarity equal -> CE = ln n each way
        let batch = uniform_batch(8, 3);
        let q = EolProjection::zeros(0, 3, 2);
        let g = EolProjection::zeros(0, 3, 2);
        let (loss, _) = retrieval_loss_level(&batch, &q, &g).unwrap();
        assert!((loss - (8.0_f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_alignment_drives_loss_to_zero() {
        // scale up an identity projection: diagonal dominates, loss -> 0
        let n = 3;
        let queries: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let batch = PairBatch::new(queries.clone(), queries).unwrap();
        let q = EolProjection::identity(0, n);
        let mut g = EolProjection::identity(0, n);
        for w in g.weight.iter_mut() {
            *w *= 50.0;
        }
        let (loss, _) = retrieval_loss_level(&batch, &q, &g).unwrap();
        assert!(loss < 1e-10);
    }

    #[test]
    fn degenerate_batch_rejected() {
        assert!(matches!(
            PairBatch::new(vec![vec![1.0]], vec![vec![1.0]]).unwrap_err(),
            Error::DegenerateBatch(1)
        ));
    }

    #[test]
    fn hrl_is_sum_of_levels() {
        let batch = uniform_batch(4, 3);
        let pair = (
            EolProjection::new(0, 3, 2, vec![0.1, -0.2, 0.3, 0.4, 0.0, -0.1], vec![0.0, 0.1])
                .unwrap(),
            EolProjection::new(0, 3, 2, vec![0.2, 0.1, -0.3, 0.0, 0.5, 0.2], vec![-0.1, 0.0])
                .unwrap(),
        );
        let (single, _) = retrieval_loss_level(&batch, &pair.0, &pair.1).unwrap();
        let three = vec![pair.clone(), pair.clone(), pair.clone()];
        let (total, grads) = hrl_loss(&batch, &three).unwrap();
        assert!((total - 3.0 * single).abs() < 1e-12);
        assert_eq!(grads.len(), 3);
        // L = 1 degenerates to the single-level loss
        let (one, _) = hrl_loss(&batch, &three[..1].to_vec()).unwrap();
        assert!((one - single).abs() < 1e-15);
    }

    #[test]
    fn vlm_score_cases() {
        let s = VlmScorer::zeros(3);
        assert_eq!(s.score(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 4.0]).unwrap(), 0.5);

        let mut s = VlmScorer::zeros(2);
        s.weight = vec![1.0, 0.0, 0.0, 1.0];
        let p = s.score(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((p - 0.731058).abs() < 1e-6);

        // deep negative logit stays strictly positive
        let s = VlmScorer::new(1, vec![-50.0], 0.0).unwrap();
        let p = s.score(&[1.0], &[1.0]).unwrap();
        assert!(p > 0.0 && p < 1e-20);
    }

    #[test]
    fn vlm_loss_cases() {
        let s = VlmScorer::zeros(2);
        let pairs = vec![(vec![1.0, 0.0], vec![0.0, 1.0], 1.0)];
        let (loss, _) = vlm_loss(&s, &pairs).unwrap();
        assert!((loss - 2.0_f64.ln()).abs() < 1e-12);

        // perfectly separated pairs: loss -> 0
        let s = VlmScorer::new(1, vec![100.0], 0.0).unwrap();
        let pairs = vec![(vec![1.0], vec![1.0], 1.0), (vec![1.0], vec![-1.0], 0.0)];
        let (loss, _) = vlm_loss(&s, &pairs).unwrap();
        assert!(loss < 1e-12);

        assert!(matches!(
            vlm_loss(&s, &[]).unwrap_err(),
            Error::EmptyInput
        ));
    }

    #[test]
    fn finite_diff_known_gradients() {
        // f(x) = 0.5 ||x||^2 -> grad = x
        let g = finite_diff_grad(
            |x| Ok(0.5 * x.iter().map(|v| v * v).sum::<f64>()),
            &[1.0, -2.0],
            1e-5,
        )
        .unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] + 2.0).abs() < 1e-8);

        let g = finite_diff_grad(|_| Ok(7.0), &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-12));

        // f(x) = x1 * x2 at [3, 5] -> [5, 3]
        let g = finite_diff_grad(|x| Ok(x[0] * x[1]), &[3.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);

        assert!(finite_diff_grad(|x| Ok(x[0]), &[1.0], 0.0).is_err());
        assert!(finite_diff_grad(|_| Ok(f64::NAN), &[1.0], 1e-5).is_err());
    }
}
