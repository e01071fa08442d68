//! Forward pass, loss, and exact reverse-mode gradients.
//!
//! Per graph with N nodes, m feature steps, hidden width h and readout
//! width r:
//!
//! ```text
//! Â = D^{-1/2} A D^{-1/2}          D = diag(row sums of A)
//! H = relu(Â X W)                   (N, h)
//! α = softmax(H u)                  (N)        attention weights
//! c = Σ_i α_i H_i                   (h)        graph context
//! Z = relu([H | 1cᵀ] W_d + 1 b_dᵀ)  (N, r)     per-node readout
//! ŷ = Z w_o + b_o                   (N)
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GcnError;
use crate::graph::CycleGraph;

/// All trainable weights. Also used as the container for gradients, which
/// share the shapes exactly.
///
/// `input_shift`/`input_scale` are fixed conditioning constants, not
/// trainable parameters: raw discharge voltages are a large common offset
/// with a small informative variation on top, and centering them once at
/// training time is what makes the optimization converge within a desk-
/// scale epoch budget. They are frozen into the persisted model.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// Graph-convolution weights, (m, h).
    pub w_gcn: Array2<f64>,
    /// Attention scoring vector, (h).
    pub attn_u: Array1<f64>,
    /// Dense readout weights on [node embedding | context], (2h, r).
    pub w_dense: Array2<f64>,
    /// Dense readout bias, (r).
    pub b_dense: Array1<f64>,
    /// Output weights, (r).
    pub w_out: Array1<f64>,
    /// Output bias.
    pub b_out: f64,
    /// Per-column offsets subtracted from the features before the
    /// convolution, (m).
    pub input_shift: Array1<f64>,
    /// Per-column scale dividing the centered features, (m); positive.
    pub input_scale: Array1<f64>,
}

/// Gradients with respect to every parameter; shaped like [`GcnParams`].
pub type GcnGrads = GcnParams;

impl GcnParams {
    /// Seeded uniform initialization in ±sqrt(6 / (fan_in + fan_out)) per
    /// weight group; biases start at zero.
    pub fn init(m: usize, hidden: usize, readout: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let w_gcn = uniform(m, hidden, &mut rng);
        let attn_u = uniform(hidden, 1, &mut rng).column(0).to_owned();
        let w_dense = uniform(2 * hidden, readout, &mut rng);
        let w_out = uniform(readout, 1, &mut rng).column(0).to_owned();
        Self {
            w_gcn,
            attn_u,
            w_dense,
            b_dense: Array1::zeros(readout),
            w_out,
            b_out: 0.0,
            input_shift: Array1::zeros(m),
            input_scale: Array1::ones(m),
        }
    }

    /// Freezes the per-column input conditioning constants.
    pub fn with_conditioning(mut self, shift: Array1<f64>, scale: Array1<f64>) -> Self {
        assert_eq!(shift.len(), self.feature_dim());
        assert_eq!(scale.len(), self.feature_dim());
        self.input_shift = shift;
        self.input_scale = scale.mapv(|s| if s > 0.0 { s } else { 1.0 });
        self
    }

    fn conditioning_is_identity(&self) -> bool {
        self.input_shift.iter().all(|&v| v == 0.0)
            && self.input_scale.iter().all(|&v| v == 1.0)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_gcn: Array2::zeros(self.w_gcn.raw_dim()),
            attn_u: Array1::zeros(self.attn_u.raw_dim()),
            w_dense: Array2::zeros(self.w_dense.raw_dim()),
            b_dense: Array1::zeros(self.b_dense.raw_dim()),
            w_out: Array1::zeros(self.w_out.raw_dim()),
            b_out: 0.0,
            input_shift: self.input_shift.clone(),
            input_scale: self.input_scale.clone(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w_gcn.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_gcn.ncols()
    }

    pub fn readout_dim(&self) -> usize {
        self.w_out.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w_gcn.raw_dim() == other.w_gcn.raw_dim()
            && self.attn_u.raw_dim() == other.attn_u.raw_dim()
            && self.w_dense.raw_dim() == other.w_dense.raw_dim()
            && self.b_dense.raw_dim() == other.b_dense.raw_dim()
            && self.w_out.raw_dim() == other.w_out.raw_dim()
    }

    pub fn all_finite(&self) -> bool {
        self.as_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Parameter groups as flat slices, in a fixed order shared with
    /// [`Self::as_mut_slices`]; the basis for Adam and persistence.
    pub fn as_slices(&self) -> [&[f64]; 6] {
        [
            self.w_gcn.as_slice().expect("standard layout"),
            self.attn_u.as_slice().expect("standard layout"),
            self.w_dense.as_slice().expect("standard layout"),
            self.b_dense.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b_out),
        ]
    }

    pub fn as_mut_slices(&mut self) -> [&mut [f64]; 6] {
        [
            self.w_gcn.as_slice_mut().expect("standard layout"),
            self.attn_u.as_slice_mut().expect("standard layout"),
            self.w_dense.as_slice_mut().expect("standard layout"),
            self.b_dense.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b_out),
        ]
    }

    /// Elementwise accumulation, used for summing gradients over a batch.
    pub fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.as_mut_slices().into_iter().zip(other.as_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Symmetric degree normalization Â = D^{-1/2} A D^{-1/2}, with D the
/// diagonal of row sums. The unit diagonal of cycle-graph adjacencies
/// guarantees positive degrees; a non-positive degree is still rejected
/// rather than propagated as NaN.
pub fn normalize_adjacency(a: &ArrayView2<f64>) -> Result<Array2<f64>, GcnError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(GcnError::ShapeMismatch {
            context: format!("adjacency is {}x{}", a.nrows(), a.ncols()),
        });
    }
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, row) in a.rows().into_iter().enumerate() {
        let degree = row.sum();
        if degree <= 0.0 {
            return Err(GcnError::NonPositiveDegree { node: i, degree });
        }
        inv_sqrt.push(1.0 / degree.sqrt());
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = a[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// Per-graph quantities that depend only on the graph, not the parameters.
/// Training reuses these across epochs.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub a_hat: Array2<f64>,
    /// Â·X over the raw features.
    pub mx: Array2<f64>,
    /// Row sums of Â, needed to aggregate conditioned features without
    /// rebuilding the product: Â(X - c)/s = (ÂX - c·rowsums)/s.
    pub a_hat_rowsums: Array1<f64>,
    /// Dense label vector; `None` when any node is unlabeled.
    pub labels: Option<Array1<f64>>,
    /// Cycle index of the appended (last) node.
    pub appended_cycle: usize,
}

pub fn prepare(graph: &CycleGraph) -> Result<PreparedGraph, GcnError> {
    let a_hat = normalize_adjacency(&graph.a.view())?;
    let mx = a_hat.dot(&graph.x);
    let a_hat_rowsums = a_hat.sum_axis(Axis(1));
    let labels = graph.labels().ok();
    Ok(PreparedGraph {
        a_hat,
        mx,
        a_hat_rowsums,
        labels,
        appended_cycle: *graph.node_cycles.last().expect("graphs are non-empty"),
    })
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub a_hat: Array2<f64>,
    /// Â·X after input conditioning; the GCN layer's actual input.
    pub mx: Array2<f64>,
    /// Pre-activation of the GCN layer, (N, h).
    pub pre_gcn: Array2<f64>,
    /// Node embeddings after relu, (N, h).
    pub hidden: Array2<f64>,
    /// Attention weights; non-negative, sum to 1.
    pub alpha: Array1<f64>,
    /// Pooled graph context, (h).
    pub context: Array1<f64>,
    /// Pre-activation of the dense layer, (N, r).
    pub pre_dense: Array2<f64>,
    /// Dense activations, (N, r).
    pub dense: Array2<f64>,
    pub predictions: Array1<f64>,
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// relu'(0) is taken as 0 for determinism.
fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = scores.mapv(|s| (s - max).exp());
    let total = out.sum();
    out.mapv_inplace(|v| v / total);
    out
}

/// Forward pass over an already-prepared graph.
pub fn forward_prepared(
    prepared: &PreparedGraph,
    params: &GcnParams,
) -> Result<(Array1<f64>, ForwardCache), GcnError> {
    if prepared.mx.ncols() != params.feature_dim() {
        return Err(GcnError::ShapeMismatch {
            context: format!(
                "graph width {} vs parameter feature dim {}",
                prepared.mx.ncols(),
                params.feature_dim()
            ),
        });
    }
    let h_dim = params.hidden_dim();

    // Conditioned aggregated features: Â(X - shift)/scale expanded as
    // (ÂX - rowsums ⊗ shift)/scale.
    let mut mx = prepared.mx.clone();
    if !params.conditioning_is_identity() {
        for (i, mut row) in mx.rows_mut().into_iter().enumerate() {
            let rowsum = prepared.a_hat_rowsums[i];
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - rowsum * params.input_shift[j]) / params.input_scale[j];
            }
        }
    }
    let pre_gcn = mx.dot(&params.w_gcn);
    let hidden = pre_gcn.mapv(relu);
    let scores = hidden.dot(&params.attn_u);
    let alpha = softmax(&scores);
    let context = hidden.t().dot(&alpha);

    let dense_top = params.w_dense.slice(ndarray::s![..h_dim, ..]);
    let dense_bot = params.w_dense.slice(ndarray::s![h_dim.., ..]);
    let context_term = context.dot(&dense_bot);
    let mut pre_dense = hidden.dot(&dense_top);
    for mut row in pre_dense.rows_mut() {
        row += &context_term;
        row += &params.b_dense;
    }
    let dense = pre_dense.mapv(relu);
    let predictions = dense.dot(&params.w_out) + params.b_out;

    let cache = ForwardCache {
        a_hat: prepared.a_hat.clone(),
        mx,
        pre_gcn,
        hidden,
        alpha,
        context,
        pre_dense,
        dense,
        predictions: predictions.clone(),
    };
    Ok((predictions, cache))
}

/// Full forward pass: normalization, convolution, attention pooling, and
/// the dense readout. Returns one SOH prediction per node.
pub fn forward(
    graph: &CycleGraph,
    params: &GcnParams,
) -> Result<(Array1<f64>, ForwardCache), GcnError> {
    let prepared = prepare(graph)?;
    forward_prepared(&prepared, params)
}

/// Sum of squared per-node errors.
pub fn loss(predictions: &Array1<f64>, labels: &Array1<f64>) -> Result<f64, GcnError> {
    if predictions.len() != labels.len() {
        return Err(GcnError::LengthMismatch {
            a: predictions.len(),
            b: labels.len(),
        });
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (y - p) * (y - p))
        .sum())
}

/// Exact gradients of the squared-error loss with respect to every
/// parameter group.
pub fn backward(
    cache: &ForwardCache,
    params: &GcnParams,
    labels: &Array1<f64>,
) -> Result<GcnGrads, GcnError> {
    let n = cache.predictions.len();
    let h_dim = params.hidden_dim();
    let r_dim = params.readout_dim();
    if labels.len() != n {
        return Err(GcnError::LengthMismatch {
            a: n,
            b: labels.len(),
        });
    }
    if cache.hidden.ncols() != h_dim
        || cache.dense.ncols() != r_dim
        || cache.mx.ncols() != params.feature_dim()
    {
        return Err(GcnError::StaleCache);
    }

    // d(loss)/d(prediction)
    let d_pred = (&cache.predictions - labels) * 2.0;

    // Output layer.
    let d_b_out = d_pred.sum();
    let d_w_out = cache.dense.t().dot(&d_pred);

    // Dense layer through relu.
    let mut d_pre_dense = Array2::zeros((n, r_dim));
    for i in 0..n {
        for k in 0..r_dim {
            d_pre_dense[[i, k]] =
                d_pred[i] * params.w_out[k] * relu_grad(cache.pre_dense[[i, k]]);
        }
    }
    let d_b_dense = d_pre_dense.sum_axis(Axis(0));
    let dense_top = params.w_dense.slice(ndarray::s![..h_dim, ..]);
    let dense_bot = params.w_dense.slice(ndarray::s![h_dim.., ..]);
    // Top block sees each node's own embedding, bottom block the shared
    // context, so its gradient collapses onto the column sums.
    let d_dense_top = cache.hidden.t().dot(&d_pre_dense);
    let col_sums = d_pre_dense.sum_axis(Axis(0));
    let mut d_w_dense = Array2::zeros((2 * h_dim, r_dim));
    d_w_dense
        .slice_mut(ndarray::s![..h_dim, ..])
        .assign(&d_dense_top);
    for a in 0..h_dim {
        for b in 0..r_dim {
            d_w_dense[[h_dim + a, b]] = cache.context[a] * col_sums[b];
        }
    }

    // Into the embeddings: direct path plus the context path.
    let d_hidden_direct = d_pre_dense.dot(&dense_top.t());
    let d_context = dense_bot.dot(&col_sums);

    // context = Hᵀ α
    let d_alpha = cache.hidden.dot(&d_context);
    let mut d_hidden = d_hidden_direct;
    for i in 0..n {
        let ai = cache.alpha[i];
        for a in 0..h_dim {
            d_hidden[[i, a]] += ai * d_context[a];
        }
    }

    // Softmax Jacobian: ds = α ⊙ (dα − ⟨α, dα⟩)
    let inner = cache.alpha.dot(&d_alpha);
    let d_scores = &cache.alpha * &(&d_alpha - inner);

    // scores = H u
    let d_attn_u = cache.hidden.t().dot(&d_scores);
    for i in 0..n {
        let dsi = d_scores[i];
        for a in 0..h_dim {
            d_hidden[[i, a]] += dsi * params.attn_u[a];
        }
    }

    // Through the GCN relu into the layer weights.
    let mut d_pre_gcn = d_hidden;
    for i in 0..n {
        for a in 0..h_dim {
            d_pre_gcn[[i, a]] *= relu_grad(cache.pre_gcn[[i, a]]);
        }
    }
    let d_w_gcn = cache.mx.t().dot(&d_pre_gcn);

    Ok(GcnGrads {
        w_gcn: d_w_gcn,
        attn_u: d_attn_u,
        w_dense: d_w_dense,
        b_dense: d_b_dense,
        w_out: d_w_out,
        b_out: d_b_out,
        input_shift: params.input_shift.clone(),
        input_scale: params.input_scale.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn graph_from(x: Array2<f64>, a: Array2<f64>, y: Vec<Option<f64>>) -> CycleGraph {
        let nodes = x.nrows();
        CycleGraph {
            x,
            a,
            y,
            node_cycles: (1..=nodes).collect(),
            appended_padded: false,
        }
    }

    #[test]
    fn normalize_identity_is_identity() {
        for n in [1, 3, 7] {
            let eye = Array2::eye(n);
            let norm = normalize_adjacency(&eye.view()).unwrap();
            assert_eq!(norm, eye);
        }
    }

    #[test]
    fn normalize_two_node_chain() {
        let a = array![[1.0, 1.0], [0.0, 1.0]];
        let norm = normalize_adjacency(&a.view()).unwrap();
        let expected = array![
            [0.5, 1.0 / 2.0f64.sqrt()],
            [0.0, 1.0]
        ];
        for (got, want) in norm.iter().zip(expected.iter()) {
            assert!((got - want).abs() <= 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn normalize_row_of_ones() {
        let a = array![[1.0, 1.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let norm = normalize_adjacency(&a.view()).unwrap();
        let third = 1.0 / 3.0;
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        assert!((norm[[0, 0]] - third).abs() <= 1e-15);
        assert!((norm[[0, 1]] - inv_sqrt3).abs() <= 1e-15);
        assert!((norm[[0, 2]] - inv_sqrt3).abs() <= 1e-15);
    }

    #[test]
    fn normalize_explicit_matches_fused() {
        let a = array![
            [1.0, 0.8, 0.3, 0.9],
            [0.0, 1.0, 0.7, 0.2],
            [0.0, 0.0, 1.0, 0.5],
            [0.0, 0.0, 0.0, 1.0]
        ];
        let fused = normalize_adjacency(&a.view()).unwrap();
        // Explicit route: build D^{-1/2} and multiply through.
        let n = a.nrows();
        let mut d_inv_sqrt = Array2::zeros((n, n));
        for i in 0..n {
            d_inv_sqrt[[i, i]] = 1.0 / a.row(i).sum().sqrt();
        }
        let explicit = d_inv_sqrt.dot(&a).dot(&d_inv_sqrt);
        for (got, want) in fused.iter().zip(explicit.iter()) {
            assert!((got - want).abs() <= 1e-14);
        }
    }

    #[test]
    fn normalize_rejects_non_positive_degree() {
        let a = array![[0.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            normalize_adjacency(&a.view()),
            Err(GcnError::NonPositiveDegree { node: 0, .. })
        ));
    }

    #[test]
    fn zero_params_predict_output_bias() {
        let x = Array2::from_shape_fn((4, 6), |(i, j)| 3.0 + 0.01 * (i + j) as f64);
        let mut a = Array2::eye(4);
        a[[0, 1]] = 0.9;
        a[[1, 2]] = 0.8;
        let graph = graph_from(x, a, vec![Some(1.0); 4]);
        let mut params = GcnParams::init(6, 5, 3, 7);
        for slice in params.as_mut_slices() {
            for v in slice.iter_mut() {
                *v = 0.0;
            }
        }
        params.b_out = 0.125;
        let (preds, _) = forward(&graph, &params).unwrap();
        assert!(preds.iter().all(|&p| p == 0.125));
    }

    /// Hand-evaluated single-node forward pass, frozen as a regression
    /// anchor. With one node: Â = [[1]], attention is a softmax over one
    /// score (α = 1), so the context equals the node embedding.
    #[test]
    fn single_node_forward_by_hand() {
        let x = array![[0.5, -1.0]];
        let a = array![[1.0]];
        let graph = graph_from(x, a, vec![Some(1.0)]);
        let params = GcnParams {
            // H = relu([0.5, -1.0] · I) = [0.5, 0]
            w_gcn: array![[1.0, 0.0], [0.0, 1.0]],
            attn_u: array![0.3, -0.2],
            // q = [H | c] = [0.5, 0, 0.5, 0]
            // pre_dense = [0.5·1 + 0.5·(-0.5) + 0.1, 0.5·(-2) + 0.5·0.25 - 0.3]
            //           = [0.35, -1.175] -> relu -> [0.35, 0]
            w_dense: array![
                [1.0, -2.0],
                [0.5, 1.5],
                [-0.5, 0.25],
                [2.0, -1.0]
            ],
            b_dense: array![0.1, -0.3],
            // ŷ = 0.35·0.4 + 0·7 + 0.05 = 0.19
            w_out: array![0.4, 7.0],
            b_out: 0.05,
            input_shift: Array1::zeros(2),
            input_scale: Array1::ones(2),
        };
        let (preds, cache) = forward(&graph, &params).unwrap();
        assert!((preds[0] - 0.19).abs() <= 1e-15, "got {}", preds[0]);
        assert_eq!(cache.alpha[0], 1.0);
        assert_eq!(cache.context, array![0.5, 0.0]);
    }

    #[test]
    fn attention_weights_are_a_distribution() {
        let x = Array2::from_shape_fn((6, 8), |(i, j)| ((i * 31 + j * 17) as f64 * 0.37).sin());
        let a = Array2::eye(6);
        let graph = graph_from(x, a, vec![None; 6]);
        let params = GcnParams::init(8, 5, 4, 3);
        let (_, cache) = forward(&graph, &params).unwrap();
        assert!(cache.alpha.iter().all(|&v| v >= 0.0));
        assert!((cache.alpha.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn permuting_base_nodes_leaves_appended_prediction_unchanged() {
        let n = 5;
        let m = 7;
        let x = Array2::from_shape_fn((n, m), |(i, j)| ((i * 13 + j * 7) as f64 * 0.59).sin());
        let mut a = Array2::eye(n);
        for i in 0..n - 1 {
            for j in i + 1..n {
                a[[i, j]] = 0.3 + 0.1 * ((i * n + j) as f64 * 0.7).sin().abs();
            }
        }
        let params = GcnParams::init(m, 6, 4, 11);
        let graph = graph_from(x.clone(), a.clone(), vec![None; n]);
        let (base_preds, _) = forward(&graph, &params).unwrap();

        // Swap base nodes 1 and 2 (keeping the appended node last).
        let perm = [0usize, 2, 1, 3, 4];
        let mut xp = Array2::zeros((n, m));
        let mut ap = Array2::zeros((n, n));
        for i in 0..n {
            xp.row_mut(i).assign(&x.row(perm[i]));
            for j in 0..n {
                ap[[i, j]] = a[[perm[i], perm[j]]];
            }
        }
        let permuted = graph_from(xp, ap, vec![None; n]);
        let (perm_preds, _) = forward(&permuted, &params).unwrap();
        assert!(
            (base_preds[n - 1] - perm_preds[n - 1]).abs() <= 1e-12,
            "{} vs {}",
            base_preds[n - 1],
            perm_preds[n - 1]
        );
    }

    #[test]
    fn loss_trivial_cases() {
        let y = array![1.0, 0.9, 0.8];
        assert_eq!(loss(&y, &y).unwrap(), 0.0);
        let preds = array![1.1, 0.7];
        let labels = array![1.0, 0.9];
        assert!((loss(&preds, &labels).unwrap() - 0.05).abs() <= 1e-15);
        assert!(matches!(
            loss(&array![1.0], &array![1.0, 2.0]),
            Err(GcnError::LengthMismatch { a: 1, b: 2 })
        ));
    }

    #[test]
    fn loss_matches_fold_oracle() {
        let preds = Array1::from_shape_fn(11, |i| (i as f64 * 0.77).sin());
        let labels = Array1::from_shape_fn(11, |i| (i as f64 * 1.31).cos());
        let mut expected = 0.0;
        for i in 0..11 {
            let e: f64 = labels[i] - preds[i];
            expected += e * e;
        }
        assert!((loss(&preds, &labels).unwrap() - expected).abs() <= 1e-12);
    }

    fn random_graph(n: usize, m: usize, seed: u64) -> CycleGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0));
        let mut a = Array2::eye(n);
        for i in 0..n {
            for j in i + 1..n {
                a[[i, j]] = rng.random_range(0.0..1.0);
            }
        }
        let y = (0..n).map(|_| Some(rng.random_range(0.7..1.0))).collect();
        graph_from(x, a, y)
    }

    #[test]
    fn zero_residual_zeroes_output_layer_gradients() {
        let graph = random_graph(4, 6, 5);
        let params = GcnParams::init(6, 5, 3, 5);
        let (preds, cache) = forward(&graph, &params).unwrap();
        let grads = backward(&cache, &params, &preds).unwrap();
        assert!(grads.w_out.iter().all(|&g| g == 0.0));
        assert_eq!(grads.b_out, 0.0);
    }

    #[test]
    fn duplicated_graph_doubles_gradients() {
        let graph = random_graph(5, 8, 9);
        let params = GcnParams::init(8, 6, 4, 9);
        let labels = graph.labels().unwrap();
        let (_, cache) = forward(&graph, &params).unwrap();
        let single = backward(&cache, &params, &labels).unwrap();
        let mut doubled = single.clone();
        doubled.add_assign(&single);
        for (two, one) in doubled.as_slices().iter().zip(single.as_slices()) {
            for (&a, &b) in two.iter().zip(one.iter()) {
                assert_eq!(a, 2.0 * b);
            }
        }
    }

    /// Central finite differences over every parameter entry.
    fn finite_difference_check(n: usize, m: usize, h: usize, r: usize, seed: u64) -> f64 {
        let graph = random_graph(n, m, seed);
        let labels = graph.labels().unwrap();
        let mut params = GcnParams::init(m, h, r, seed ^ 0xABCD);
        let (_, cache) = forward(&graph, &params).unwrap();
        let analytic = backward(&cache, &params, &labels).unwrap();

        let step = 1e-5;
        let mut max_rel = 0.0f64;
        for group in 0..6 {
            let len = analytic.as_slices()[group].len();
            for idx in 0..len {
                let original = params.as_slices()[group][idx];
                params.as_mut_slices()[group][idx] = original + step;
                let (p_plus, _) = forward(&graph, &params).unwrap();
                let l_plus = loss(&p_plus, &labels).unwrap();
                params.as_mut_slices()[group][idx] = original - step;
                let (p_minus, _) = forward(&graph, &params).unwrap();
                let l_minus = loss(&p_minus, &labels).unwrap();
                params.as_mut_slices()[group][idx] = original;

                let fd = (l_plus - l_minus) / (2.0 * step);
                let an = analytic.as_slices()[group][idx];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [1u64, 2, 3] {
            let max_rel = finite_difference_check(5, 12, 8, 6, seed);
            assert!(max_rel <= 1e-4, "seed {seed}: max rel err {max_rel}");
        }
    }

    #[test]
    fn backward_rejects_mismatched_labels() {
        let graph = random_graph(4, 6, 2);
        let params = GcnParams::init(6, 5, 3, 2);
        let (_, cache) = forward(&graph, &params).unwrap();
        let labels = Array1::zeros(3);
        assert!(matches!(
            backward(&cache, &params, &labels),
            Err(GcnError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let graph = random_graph(4, 6, 2);
        let params = GcnParams::init(7, 5, 3, 2);
        assert!(matches!(
            forward(&graph, &params),
            Err(GcnError::ShapeMismatch { .. })
        ));
    }
}
