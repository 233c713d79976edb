use super::{NumericsError, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    AddBias { x: TensorId, bias: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { x: TensorId, factor: f64 },
    LeakyRelu { x: TensorId, slope: f64 },
    Elu { x: TensorId },
    Sum { x: TensorId },
    MseLoss { pred: TensorId, target: TensorId },
    MeanRows { x: TensorId, groups: Vec<Vec<usize>> },
    SegmentSoftmax { scores: TensorId, segments: Vec<usize> },
    SegmentWeightedSum { weights: TensorId, values: TensorId, segments: Vec<usize> },
    ConcatCols { parts: Vec<TensorId> },
    GatherRows { x: TensorId, indices: Vec<usize> },
    StackScalars { parts: Vec<TensorId> },
    Reshape { x: TensorId },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Records tensor operations in execution order and replays them in reverse
/// to accumulate gradients. Node inputs always precede the node, so a single
/// reverse sweep visits every node exactly once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

// a[m x k] * b[k x n]
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

// a[m x n] * b[k x n]^T
fn mm_abt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// a[m x k]^T * c[m x n]
fn mm_atb(a: &[f64], c: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let crow = &c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes, keeping allocated capacity.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    /// Registers a tensor as a leaf. Its `requires_grad` flag decides whether
    /// `backward` will populate a gradient for it.
    pub fn leaf(&mut self, tensor: Tensor) -> TensorId {
        self.push(tensor, Op::Leaf)
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    /// Gradient of the most recent `backward` pass, if the node required one.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].tensor.numel(), 1);
        self.nodes[id.0].tensor.data[0]
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> TensorId {
        self.nodes.push(Node { tensor, op });
        TensorId(self.nodes.len() - 1)
    }

    fn any_requires_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].tensor.requires_grad)
    }

    fn result(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[TensorId]) -> TensorId {
        let mut t = Tensor::from_vec(shape, data);
        t.requires_grad = self.any_requires_grad(inputs);
        self.push(t, op)
    }

    /// Matrix product `a[m x k] * b[k x n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NumericsError::ShapeMismatch { op: "matmul", left: sa, right: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = mm(self.data(a), self.data(b), m, k, n);
        Ok(self.result(vec![m, n], data, Op::Matmul { a, b }, &[a, b]))
    }

    /// Elementwise sum of two tensors of identical shape.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(NumericsError::ShapeMismatch { op: "add", left: sa, right: sb });
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        Ok(self.result(sa, data, Op::Add { a, b }, &[a, b]))
    }

    /// Adds a length-`f` bias vector to every row of an `[n x f]` matrix.
    pub fn add_bias(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId, NumericsError> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(bias).to_vec());
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(NumericsError::ShapeMismatch { op: "add_bias", left: sx, right: sb });
        }
        let cols = sx[1];
        let bias_data = self.data(bias).to_vec();
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias_data[i % cols])
            .collect();
        Ok(self.result(sx, data, Op::AddBias { x, bias }, &[x, bias]))
    }

    /// Elementwise product of two tensors of identical shape.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(NumericsError::ShapeMismatch { op: "mul", left: sa, right: sb });
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        Ok(self.result(sa, data, Op::Mul { a, b }, &[a, b]))
    }

    /// Multiplies every element by a constant factor.
    pub fn scale(&mut self, x: TensorId, factor: f64) -> TensorId {
        let shape = self.shape(x).to_vec();
        let data = self.data(x).iter().map(|v| v * factor).collect();
        self.result(shape, data, Op::Scale { x, factor }, &[x])
    }

    /// Elementwise `max(x, slope * x)`.
    pub fn leaky_relu(&mut self, x: TensorId, slope: f64) -> TensorId {
        let shape = self.shape(x).to_vec();
        let data = self
            .data(x)
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        self.result(shape, data, Op::LeakyRelu { x, slope }, &[x])
    }

    /// Elementwise ELU: `x` for positive inputs, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, x: TensorId) -> TensorId {
        let shape = self.shape(x).to_vec();
        let data = self
            .data(x)
            .iter()
            .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
            .collect();
        self.result(shape, data, Op::Elu { x }, &[x])
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let total: f64 = self.data(x).iter().sum();
        self.result(vec![1], vec![total], Op::Sum { x }, &[x])
    }

    /// Mean squared error between two tensors of identical shape, as a scalar.
    pub fn mse_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId, NumericsError> {
        let (sp, st) = (self.shape(pred).to_vec(), self.shape(target).to_vec());
        if sp != st {
            return Err(NumericsError::ShapeMismatch { op: "mse_loss", left: sp, right: st });
        }
        let n = self.data(pred).len();
        if n == 0 {
            return Err(NumericsError::Contract { op: "mse_loss", msg: "empty input".into() });
        }
        let sse: f64 = self
            .data(pred)
            .iter()
            .zip(self.data(target))
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let data = vec![sse / n as f64];
        Ok(self.result(vec![1], data, Op::MseLoss { pred, target }, &[pred, target]))
    }

    /// Row means over index groups: output row `g` is the mean of `x`'s rows
    /// listed in `groups[g]`.
    pub fn mean_rows(&mut self, x: TensorId, groups: &[Vec<usize>]) -> Result<TensorId, NumericsError> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(NumericsError::Contract {
                op: "mean_rows",
                msg: format!("expected matrix, got shape {sx:?}"),
            });
        }
        if groups.is_empty() {
            return Err(NumericsError::Contract { op: "mean_rows", msg: "no groups".into() });
        }
        let (rows, cols) = (sx[0], sx[1]);
        let mut data = vec![0.0; groups.len() * cols];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(NumericsError::Contract {
                    op: "mean_rows",
                    msg: format!("group {g} is empty"),
                });
            }
            for &row in group {
                if row >= rows {
                    return Err(NumericsError::IndexOutOfRange { op: "mean_rows", index: row, len: rows });
                }
                for c in 0..cols {
                    data[g * cols + c] += self.data(x)[row * cols + c];
                }
            }
            let inv = 1.0 / group.len() as f64;
            data[g * cols..(g + 1) * cols].iter_mut().for_each(|v| *v *= inv);
        }
        let op = Op::MeanRows { x, groups: groups.to_vec() };
        Ok(self.result(vec![groups.len(), cols], data, op, &[x]))
    }

    /// Softmax normalization within each segment of a score vector. Scores
    /// sharing a segment id are normalized together; segment ids may appear
    /// in any order. Max-subtraction keeps the exponentials bounded.
    pub fn segment_softmax(
        &mut self,
        scores: TensorId,
        segments: &[usize],
    ) -> Result<TensorId, NumericsError> {
        let s = self.shape(scores).to_vec();
        if s.len() != 1 || s[0] != segments.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "segment_softmax",
                left: s,
                right: vec![segments.len()],
            });
        }
        let values = self.data(scores);
        let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut seg_max = vec![f64::NEG_INFINITY; n_seg];
        for (&v, &seg) in values.iter().zip(segments) {
            if v > seg_max[seg] {
                seg_max[seg] = v;
            }
        }
        let exps: Vec<f64> = values
            .iter()
            .zip(segments)
            .map(|(&v, &seg)| (v - seg_max[seg]).exp())
            .collect();
        let mut seg_sum = vec![0.0; n_seg];
        for (&e, &seg) in exps.iter().zip(segments) {
            seg_sum[seg] += e;
        }
        let data: Vec<f64> = exps
            .iter()
            .zip(segments)
            .map(|(&e, &seg)| e / seg_sum[seg])
            .collect();
        let op = Op::SegmentSoftmax { scores, segments: segments.to_vec() };
        Ok(self.result(s, data, op, &[scores]))
    }

    /// Scatter-sum of weighted value rows: output row `i` is the sum of
    /// `weights[e] * values[e]` over edges `e` with `segments[e] == i`.
    /// Rows of nodes with no incident edge stay zero.
    pub fn segment_weighted_sum(
        &mut self,
        weights: TensorId,
        values: TensorId,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<TensorId, NumericsError> {
        let (sw, sv) = (self.shape(weights).to_vec(), self.shape(values).to_vec());
        if sw.len() != 1 || sv.len() != 2 || sw[0] != sv[0] || sw[0] != segments.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "segment_weighted_sum",
                left: sw,
                right: sv,
            });
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= num_segments) {
            return Err(NumericsError::IndexOutOfRange {
                op: "segment_weighted_sum",
                index: bad,
                len: num_segments,
            });
        }
        let cols = sv[1];
        let mut data = vec![0.0; num_segments * cols];
        for (e, &seg) in segments.iter().enumerate() {
            let w = self.data(weights)[e];
            let vrow = &self.nodes[values.0].tensor.data[e * cols..(e + 1) * cols];
            let orow = &mut data[seg * cols..(seg + 1) * cols];
            for (o, v) in orow.iter_mut().zip(vrow) {
                *o += w * v;
            }
        }
        let op = Op::SegmentWeightedSum { weights, values, segments: segments.to_vec() };
        Ok(self.result(vec![num_segments, cols], data, op, &[weights, values]))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::Contract { op: "concat_cols", msg: "no parts".into() });
        }
        let rows = self.shape(parts[0]).first().copied().unwrap_or(0);
        let mut total_cols = 0;
        for &p in parts {
            let sp = self.shape(p);
            if sp.len() != 2 || sp[0] != rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(parts[0]).to_vec(),
                    right: sp.to_vec(),
                });
            }
            total_cols += sp[1];
        }
        let mut data = vec![0.0; rows * total_cols];
        let mut offset = 0;
        for &p in parts {
            let cols = self.shape(p)[1];
            for r in 0..rows {
                let src = &self.nodes[p.0].tensor.data[r * cols..(r + 1) * cols];
                data[r * total_cols + offset..r * total_cols + offset + cols].copy_from_slice(src);
            }
            offset += cols;
        }
        let op = Op::ConcatCols { parts: parts.to_vec() };
        Ok(self.result(vec![rows, total_cols], data, op, parts))
    }

    /// Selects rows of `x` by index (rows may repeat). Backward scatter-adds.
    pub fn gather_rows(&mut self, x: TensorId, indices: &[usize]) -> Result<TensorId, NumericsError> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(NumericsError::Contract {
                op: "gather_rows",
                msg: format!("expected matrix, got shape {sx:?}"),
            });
        }
        let (rows, cols) = (sx[0], sx[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(NumericsError::IndexOutOfRange { op: "gather_rows", index: bad, len: rows });
        }
        let mut data = vec![0.0; indices.len() * cols];
        for (k, &row) in indices.iter().enumerate() {
            data[k * cols..(k + 1) * cols]
                .copy_from_slice(&self.nodes[x.0].tensor.data[row * cols..(row + 1) * cols]);
        }
        let op = Op::GatherRows { x, indices: indices.to_vec() };
        Ok(self.result(vec![indices.len(), cols], data, op, &[x]))
    }

    /// Packs scalar tensors into one vector, preserving order.
    pub fn stack_scalars(&mut self, parts: &[TensorId]) -> Result<TensorId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::Contract { op: "stack_scalars", msg: "no parts".into() });
        }
        let mut data = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.tensor(p).numel() != 1 {
                return Err(NumericsError::Contract {
                    op: "stack_scalars",
                    msg: format!("part has shape {:?}, expected scalar", self.shape(p)),
                });
            }
            data.push(self.data(p)[0]);
        }
        let op = Op::StackScalars { parts: parts.to_vec() };
        Ok(self.result(vec![parts.len()], data, op, parts))
    }

    /// Reinterprets the data with a new shape of identical element count.
    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId, NumericsError> {
        let numel: usize = shape.iter().product();
        if numel != self.tensor(x).numel() {
            return Err(NumericsError::ShapeMismatch {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape,
            });
        }
        let data = self.data(x).to_vec();
        Ok(self.result(shape, data, Op::Reshape { x }, &[x]))
    }

    /// Reverse sweep from a scalar loss. Every node with `requires_grad`
    /// reachable from `loss` ends up with `d loss / d node` in its grad
    /// buffer; repeated calls accumulate additively.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), NumericsError> {
        if self.tensor(loss).numel() != 1 {
            return Err(NumericsError::Contract {
                op: "backward",
                msg: format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(grad) = adj[id].take() else { continue };
            if !self.nodes[id].tensor.requires_grad {
                continue;
            }
            self.propagate(id, &grad, &mut adj);
            self.nodes[id].tensor.accumulate_grad(&grad);
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Vec<f64>>], id: TensorId, delta: &[f64]) {
        if !self.nodes[id.0].tensor.requires_grad {
            return;
        }
        let slot = adj[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].tensor.numel()]);
        for (a, d) in slot.iter_mut().zip(delta) {
            *a += d;
        }
    }

    fn propagate(&self, id: usize, grad: &[f64], adj: &mut [Option<Vec<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let da = mm_abt(grad, self.data(*b), m, n, k);
                let db = mm_atb(self.data(*a), grad, m, k, n);
                self.accumulate(adj, *a, &da);
                self.accumulate(adj, *b, &db);
            }
            Op::Add { a, b } => {
                self.accumulate(adj, *a, grad);
                self.accumulate(adj, *b, grad);
            }
            Op::AddBias { x, bias } => {
                self.accumulate(adj, *x, grad);
                let cols = self.shape(*bias)[0];
                let mut db = vec![0.0; cols];
                for (i, g) in grad.iter().enumerate() {
                    db[i % cols] += g;
                }
                self.accumulate(adj, *bias, &db);
            }
            Op::Mul { a, b } => {
                let da: Vec<f64> = grad.iter().zip(self.data(*b)).map(|(g, v)| g * v).collect();
                let db: Vec<f64> = grad.iter().zip(self.data(*a)).map(|(g, v)| g * v).collect();
                self.accumulate(adj, *a, &da);
                self.accumulate(adj, *b, &db);
            }
            Op::Scale { x, factor } => {
                let dx: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                self.accumulate(adj, *x, &dx);
            }
            Op::LeakyRelu { x, slope } => {
                let dx: Vec<f64> = grad
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else { g * slope })
                    .collect();
                self.accumulate(adj, *x, &dx);
            }
            Op::Elu { x } => {
                let dx: Vec<f64> = grad
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else { g * v.exp() })
                    .collect();
                self.accumulate(adj, *x, &dx);
            }
            Op::Sum { x } => {
                let dx = vec![grad[0]; self.tensor(*x).numel()];
                self.accumulate(adj, *x, &dx);
            }
            Op::MseLoss { pred, target } => {
                let n = self.tensor(*pred).numel() as f64;
                let scale = 2.0 * grad[0] / n;
                let dp: Vec<f64> = self
                    .data(*pred)
                    .iter()
                    .zip(self.data(*target))
                    .map(|(p, t)| scale * (p - t))
                    .collect();
                let dt: Vec<f64> = dp.iter().map(|v| -v).collect();
                self.accumulate(adj, *pred, &dp);
                self.accumulate(adj, *target, &dt);
            }
            Op::MeanRows { x, groups } => {
                let cols = self.shape(*x)[1];
                let mut dx = vec![0.0; self.tensor(*x).numel()];
                for (g, group) in groups.iter().enumerate() {
                    let inv = 1.0 / group.len() as f64;
                    for &row in group {
                        for c in 0..cols {
                            dx[row * cols + c] += grad[g * cols + c] * inv;
                        }
                    }
                }
                self.accumulate(adj, *x, &dx);
            }
            Op::SegmentSoftmax { scores, segments } => {
                // d s_e = alpha_e * (d alpha_e - sum over segment of alpha * d alpha)
                let alpha = &self.nodes[id].tensor.data;
                let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut seg_dot = vec![0.0; n_seg];
                for (e, &seg) in segments.iter().enumerate() {
                    seg_dot[seg] += alpha[e] * grad[e];
                }
                let dx: Vec<f64> = segments
                    .iter()
                    .enumerate()
                    .map(|(e, &seg)| alpha[e] * (grad[e] - seg_dot[seg]))
                    .collect();
                self.accumulate(adj, *scores, &dx);
            }
            Op::SegmentWeightedSum { weights, values, segments } => {
                let cols = self.shape(*values)[1];
                let w = self.data(*weights);
                let v = self.data(*values);
                let mut dw = vec![0.0; w.len()];
                let mut dv = vec![0.0; v.len()];
                for (e, &seg) in segments.iter().enumerate() {
                    let grow = &grad[seg * cols..(seg + 1) * cols];
                    let vrow = &v[e * cols..(e + 1) * cols];
                    dw[e] = grow.iter().zip(vrow).map(|(g, x)| g * x).sum();
                    for (d, g) in dv[e * cols..(e + 1) * cols].iter_mut().zip(grow) {
                        *d = w[e] * g;
                    }
                }
                self.accumulate(adj, *weights, &dw);
                self.accumulate(adj, *values, &dv);
            }
            Op::ConcatCols { parts } => {
                let rows = self.shape(parts[0])[0];
                let total_cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
                let mut offset = 0;
                for &p in parts {
                    let cols = self.shape(p)[1];
                    let mut dp = vec![0.0; rows * cols];
                    for r in 0..rows {
                        dp[r * cols..(r + 1) * cols].copy_from_slice(
                            &grad[r * total_cols + offset..r * total_cols + offset + cols],
                        );
                    }
                    self.accumulate(adj, p, &dp);
                    offset += cols;
                }
            }
            Op::GatherRows { x, indices } => {
                let cols = self.shape(*x)[1];
                let mut dx = vec![0.0; self.tensor(*x).numel()];
                for (k, &row) in indices.iter().enumerate() {
                    for c in 0..cols {
                        dx[row * cols + c] += grad[k * cols + c];
                    }
                }
                self.accumulate(adj, *x, &dx);
            }
            Op::StackScalars { parts } => {
                for (k, &p) in parts.iter().enumerate() {
                    self.accumulate(adj, p, &grad[k..k + 1]);
                }
            }
            Op::Reshape { x } => {
                self.accumulate(adj, *x, grad);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> TensorId {
        tape.leaf(Tensor::from_vec(shape, data).with_grad())
    }

    fn constant(tape: &mut Tape, shape: Vec<usize>, data: Vec<f64>) -> TensorId {
        tape.leaf(Tensor::from_vec(shape, data))
    }

    /// Central finite differences of a scalar function of a flat buffer.
    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        grad
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let eye = constant(&mut tape, vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let m = constant(&mut tape, vec![3, 3], vec![2., -1., 0.5, 3., 7., -2., 0., 4., 9.]);
        let prod = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.data(prod), tape.data(m));
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = constant(&mut tape, vec![2, 2], vec![1., 2., 3., 4.]);
        let b = constant(&mut tape, vec![2, 1], vec![1., 1.]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.data(c), &[3., 7.]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = constant(&mut tape, vec![2, 3], vec![0.0; 6]);
        let b = constant(&mut tape, vec![2, 2], vec![0.0; 4]);
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn matmul_backward_matches_finite_differences() {
        let a_data = vec![0.3, -1.2, 0.7, 2.1, -0.4, 0.9];
        let b_data = vec![1.5, -0.2, 0.8, 0.1, -1.1, 0.6];
        let loss_of = |a_buf: &[f64], b_buf: &[f64]| {
            let mut tape = Tape::new();
            let a = constant(&mut tape, vec![2, 3], a_buf.to_vec());
            let b = constant(&mut tape, vec![3, 2], b_buf.to_vec());
            let c = tape.matmul(a, b).unwrap();
            let l = tape.sum(c);
            tape.scalar_value(l)
        };

        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 3], a_data.clone());
        let b = leaf(&mut tape, vec![3, 2], b_data.clone());
        let c = tape.matmul(a, b).unwrap();
        let l = tape.sum(c);
        tape.backward(l).unwrap();

        let fd_a = finite_diff(|x| loss_of(x, &b_data), &a_data, 1e-5);
        let fd_b = finite_diff(|x| loss_of(&a_data, x), &b_data, 1e-5);
        assert!(max_rel_err(tape.grad(a).unwrap(), &fd_a) < 1e-6);
        assert!(max_rel_err(tape.grad(b).unwrap(), &fd_b) < 1e-6);
    }

    #[test]
    fn leaky_relu_values() {
        let mut tape = Tape::new();
        let x = constant(&mut tape, vec![3], vec![0.0, -2.0, 3.0]);
        let y = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.data(y), &[0.0, -0.4, 3.0]);
    }

    #[test]
    fn elu_and_mse_fixed_points() {
        let mut tape = Tape::new();
        let zero = constant(&mut tape, vec![1], vec![0.0]);
        let e = tape.elu(zero);
        assert_eq!(tape.data(e), &[0.0]);

        let p = constant(&mut tape, vec![2], vec![1.0, 2.0]);
        let t = constant(&mut tape, vec![2], vec![1.0, 2.0]);
        let loss = tape.mse_loss(p, t).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.0);
    }

    #[test]
    fn mean_rows_of_identical_rows() {
        let mut tape = Tape::new();
        let x = constant(&mut tape, vec![2, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let m = tape.mean_rows(x, &[vec![0, 1]]).unwrap();
        assert_eq!(tape.data(m), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_rows_empty_group_is_contract_violation() {
        let mut tape = Tape::new();
        let x = constant(&mut tape, vec![2, 2], vec![0.0; 4]);
        assert!(matches!(
            tape.mean_rows(x, &[vec![]]),
            Err(NumericsError::Contract { .. })
        ));
    }

    #[test]
    fn segment_softmax_singleton_and_symmetry() {
        let mut tape = Tape::new();
        let s = constant(&mut tape, vec![3], vec![4.2, 1.0, 1.0]);
        let a = tape.segment_softmax(s, &[0, 1, 1]).unwrap();
        let out = tape.data(a);
        assert_eq!(out[0], 1.0);
        assert!((out[1] - 0.5).abs() < 1e-15);
        assert!((out[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn segment_softmax_closed_form() {
        let mut tape = Tape::new();
        let s = constant(&mut tape, vec![2], vec![0.0, 3.0_f64.ln()]);
        let a = tape.segment_softmax(s, &[0, 0]).unwrap();
        let out = tape.data(a);
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn segment_softmax_empty_input() {
        let mut tape = Tape::new();
        let s = constant(&mut tape, vec![0], vec![]);
        let a = tape.segment_softmax(s, &[]).unwrap();
        assert!(tape.data(a).is_empty());
    }

    #[test]
    fn segment_softmax_shift_invariance_and_normalization() {
        let mut rng = 1234567u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        let segments: Vec<usize> = vec![0, 2, 0, 1, 2, 2, 1, 0];
        let scores: Vec<f64> = (0..segments.len()).map(|_| next()).collect();
        let shifted: Vec<f64> = scores.iter().map(|v| v + 7.5).collect();

        let mut tape = Tape::new();
        let s0 = constant(&mut tape, vec![8], scores);
        let s1 = constant(&mut tape, vec![8], shifted);
        let a0 = tape.segment_softmax(s0, &segments).unwrap();
        let a1 = tape.segment_softmax(s1, &segments).unwrap();

        let mut sums = [0.0; 3];
        for (e, &seg) in segments.iter().enumerate() {
            sums[seg] += tape.data(a0)[e];
            assert!((tape.data(a0)[e] - tape.data(a1)[e]).abs() < 1e-9);
        }
        for s in sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_softmax_backward_matches_finite_differences() {
        let segments = vec![0, 1, 0, 0, 1];
        let scores = vec![0.3, -0.7, 1.1, 0.2, 0.5];
        let coeffs = vec![0.9, -0.3, 0.4, 1.2, -0.8];

        let loss_of = |buf: &[f64]| {
            let mut tape = Tape::new();
            let s = constant(&mut tape, vec![5], buf.to_vec());
            let a = tape.segment_softmax(s, &segments).unwrap();
            let c = constant(&mut tape, vec![5], coeffs.clone());
            let prod = tape.mul(a, c).unwrap();
            let l = tape.sum(prod);
            tape.scalar_value(l)
        };

        let mut tape = Tape::new();
        let s = leaf(&mut tape, vec![5], scores.clone());
        let a = tape.segment_softmax(s, &segments).unwrap();
        let c = constant(&mut tape, vec![5], coeffs.clone());
        let prod = tape.mul(a, c).unwrap();
        let l = tape.sum(prod);
        tape.backward(l).unwrap();

        let fd = finite_diff(loss_of, &scores, 1e-5);
        assert!(max_rel_err(tape.grad(s).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn segment_weighted_sum_identity_and_average() {
        let mut tape = Tape::new();
        let w = constant(&mut tape, vec![1], vec![1.0]);
        let v = constant(&mut tape, vec![1, 2], vec![3.0, -1.0]);
        let out = tape.segment_weighted_sum(w, v, &[0], 1).unwrap();
        assert_eq!(tape.data(out), &[3.0, -1.0]);

        let w2 = constant(&mut tape, vec![2], vec![0.5, 0.5]);
        let v2 = constant(&mut tape, vec![2, 2], vec![2.0, 4.0, 6.0, 8.0]);
        let out2 = tape.segment_weighted_sum(w2, v2, &[0, 0], 1).unwrap();
        assert_eq!(tape.data(out2), &[4.0, 6.0]);
    }

    #[test]
    fn segment_weighted_sum_matches_naive_loop() {
        // naive per-node double loop as the oracle
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let n_nodes = 5;
        let segments = vec![0, 3, 3, 1, 0, 4, 3];
        let e = segments.len();
        let cols = 3;
        let weights: Vec<f64> = (0..e).map(|_| next()).collect();
        let values: Vec<f64> = (0..e * cols).map(|_| next()).collect();

        let mut expected = vec![0.0; n_nodes * cols];
        for node in 0..n_nodes {
            for (edge, &seg) in segments.iter().enumerate() {
                if seg == node {
                    for c in 0..cols {
                        expected[node * cols + c] += weights[edge] * values[edge * cols + c];
                    }
                }
            }
        }

        let mut tape = Tape::new();
        let w = constant(&mut tape, vec![e], weights);
        let v = constant(&mut tape, vec![e, cols], values);
        let out = tape.segment_weighted_sum(w, v, &segments, n_nodes).unwrap();
        assert_eq!(tape.data(out), expected.as_slice());
    }

    #[test]
    fn segment_weighted_sum_rejects_out_of_range() {
        let mut tape = Tape::new();
        let w = constant(&mut tape, vec![1], vec![1.0]);
        let v = constant(&mut tape, vec![1, 1], vec![1.0]);
        assert!(matches!(
            tape.segment_weighted_sum(w, v, &[3], 2),
            Err(NumericsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn concat_cols_layout() {
        let mut tape = Tape::new();
        let a = constant(&mut tape, vec![2, 2], vec![1., 2., 3., 4.]);
        let single = tape.concat_cols(&[a]).unwrap();
        assert_eq!(tape.data(single), tape.data(a));

        let b = constant(&mut tape, vec![2, 1], vec![9., 10.]);
        let joined = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.shape(joined), &[2, 3]);
        assert_eq!(tape.data(joined), &[1., 2., 9., 3., 4., 10.]);
    }

    #[test]
    fn concat_cols_row_mismatch() {
        let mut tape = Tape::new();
        let a = constant(&mut tape, vec![2, 2], vec![0.0; 4]);
        let b = constant(&mut tape, vec![3, 1], vec![0.0; 3]);
        assert!(matches!(
            tape.concat_cols(&[a, b]),
            Err(NumericsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn concat_cols_backward_splits_gradient() {
        let a_data = vec![0.1, -0.4, 0.7, 1.3];
        let b_data = vec![2.0, -1.5];
        let coeffs: Vec<f64> = vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
        let loss_of = |a_buf: &[f64], b_buf: &[f64]| {
            let mut tape = Tape::new();
            let a = constant(&mut tape, vec![2, 2], a_buf.to_vec());
            let b = constant(&mut tape, vec![2, 1], b_buf.to_vec());
            let j = tape.concat_cols(&[a, b]).unwrap();
            let c = constant(&mut tape, vec![2, 3], coeffs.clone());
            let p = tape.mul(j, c).unwrap();
            let l = tape.sum(p);
            tape.scalar_value(l)
        };

        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![2, 2], a_data.clone());
        let b = leaf(&mut tape, vec![2, 1], b_data.clone());
        let j = tape.concat_cols(&[a, b]).unwrap();
        let c = constant(&mut tape, vec![2, 3], coeffs.clone());
        let p = tape.mul(j, c).unwrap();
        let l = tape.sum(p);
        tape.backward(l).unwrap();

        let fd_a = finite_diff(|x| loss_of(x, &b_data), &a_data, 1e-5);
        let fd_b = finite_diff(|x| loss_of(&a_data, x), &b_data, 1e-5);
        assert!(max_rel_err(tape.grad(a).unwrap(), &fd_a) < 1e-6);
        assert!(max_rel_err(tape.grad(b).unwrap(), &fd_b) < 1e-6);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let w = leaf(&mut tape, vec![4], vec![1.0, -2.0, 3.0, 0.5]);
        let l = tape.sum(w);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_sum_of_squares_is_two_w() {
        let mut tape = Tape::new();
        let data = vec![1.0, -2.0, 3.0, 0.5];
        let w = leaf(&mut tape, vec![4], data.clone());
        let sq = tape.mul(w, w).unwrap();
        let l = tape.sum(sq);
        tape.backward(l).unwrap();
        let expected: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(tape.grad(w).unwrap(), expected.as_slice());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = leaf(&mut tape, vec![2], vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(w),
            Err(NumericsError::Contract { .. })
        ));
    }

    #[test]
    fn shared_subexpression_gradients_match_finite_differences() {
        // loss = sum(y ⊙ y) + sum(y) with y = leaky_relu(w); w feeds two paths
        let data = vec![0.4, -1.1, 2.3];
        let loss_of = |buf: &[f64]| {
            let mut tape = Tape::new();
            let w = constant(&mut tape, vec![3], buf.to_vec());
            let y = tape.leaky_relu(w, 0.2);
            let sq = tape.mul(y, y).unwrap();
            let l1 = tape.sum(sq);
            let l2 = tape.sum(y);
            let l = tape.add(l1, l2).unwrap();
            tape.scalar_value(l)
        };

        let mut tape = Tape::new();
        let w = leaf(&mut tape, vec![3], data.clone());
        let y = tape.leaky_relu(w, 0.2);
        let sq = tape.mul(y, y).unwrap();
        let l1 = tape.sum(sq);
        let l2 = tape.sum(y);
        let l = tape.add(l1, l2).unwrap();
        tape.backward(l).unwrap();

        let fd = finite_diff(loss_of, &data, 1e-5);
        assert!(max_rel_err(tape.grad(w).unwrap(), &fd) < 1e-6);
    }

    #[test]
    fn ops_are_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = constant(&mut tape, vec![2, 2], vec![0.3, 0.7, -0.2, 1.9]);
            let b = constant(&mut tape, vec![2, 2], vec![1.1, -0.6, 0.4, 0.8]);
            let c = tape.matmul(a, b).unwrap();
            let d = tape.elu(c);
            let s = tape.sum(d);
            tape.scalar_value(s).to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stack_scalars_and_reshape() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![1], vec![2.0]);
        let b = leaf(&mut tape, vec![1], vec![-3.0]);
        let v = tape.stack_scalars(&[a, b]).unwrap();
        assert_eq!(tape.data(v), &[2.0, -3.0]);

        let m = tape.reshape(v, vec![2, 1]).unwrap();
        assert_eq!(tape.shape(m), &[2, 1]);

        let l = tape.sum(m);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0]);
        assert_eq!(tape.grad(b).unwrap(), &[1.0]);
    }
}
