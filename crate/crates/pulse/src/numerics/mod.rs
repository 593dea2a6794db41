//! Dense-tensor arithmetic with reverse-mode gradient accumulation.
//!
//! Everything learnable or differentiable in the crate lives in a
//! [`DiffTensor`]: a row-major flat `f64` buffer plus shape, with an
//! optional gradient buffer of the same length. A [`Tape`] owns the
//! tensors of one forward pass as an arena and records every primitive
//! with enough metadata to replay it backwards. Replaying in reverse
//! order accumulates gradients additively; a fresh backward pass starts
//! from zeroed buffers. All passes are single-threaded, so gradient
//! accumulation order is fixed and two runs from the same seed are
//! bitwise identical.
//!
//! 64-bit floats throughout: the finite-difference checks and the
//! near-cancellation regimes exercised by the verification suites need
//! the precision headroom. Checkpoints may narrow to 32-bit on export.

pub mod dft;
pub mod gradcheck;
pub mod rng;

pub use rng::Rng;

/// Handle to a tensor in a tape arena.
pub type TensorId = usize;

/// Variance guard added inside every standard-deviation square root.
pub const EPS_VAR: f64 = 1e-8;

/// Guard inside the complex-modulus square root of the frequency loss.
pub const EPS_MODULUS: f64 = 1e-12;

/// Dense real tensor with an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct DiffTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl DiffTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            shape.iter().product::<usize>(),
            "value buffer length {} does not match shape {:?}",
            values.len(),
            shape
        );
        DiffTensor { shape, values, grad: None, requires_grad: false }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DiffTensor::new(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        DiffTensor::new(vec![1], vec![v])
    }

    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Self {
        let mut t = DiffTensor::new(shape, values);
        t.requires_grad = true;
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// Shape helper: (outer, len, inner) decomposition around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} out of range for shape {shape:?}");
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Broadcast-compatible output shape for two same-rank operands.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    assert_eq!(a.len(), b.len(), "broadcast requires equal rank: {a:?} vs {b:?}");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            assert!(
                x == y || x == 1 || y == 1,
                "incompatible broadcast shapes {a:?} vs {b:?}"
            );
            x.max(y)
        })
        .collect()
}

/// Row-major strides, with stride 0 on axes being broadcast.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i] = if shape[i] == 1 && out[i] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visit every output position of a broadcast binary op, yielding
/// (out_index, a_offset, b_offset) in row-major order.
fn for_each_broadcast(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = out_shape.len();
    let total: usize = out_shape.iter().product();
    if total == 0 {
        return;
    }
    let stride_a = broadcast_strides(sa, out_shape);
    let stride_b = broadcast_strides(sb, out_shape);
    let mut idx = vec![0usize; rank];
    let mut off_a = 0usize;
    let mut off_b = 0usize;
    for out_i in 0..total {
        f(out_i, off_a, off_b);
        // Odometer increment from the last axis.
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off_a += stride_a[ax];
            off_b += stride_b[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off_a -= stride_a[ax] * out_shape[ax];
            off_b -= stride_b[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// One recorded primitive. Holds tensor handles plus whatever metadata the
/// backward rule needs.
#[derive(Debug)]
enum Op {
    Binary { kind: BinaryKind, a: TensorId, b: TensorId, out: TensorId },
    Scale { a: TensorId, c: f64, out: TensorId },
    AddScalar { a: TensorId, out: TensorId },
    Neg { a: TensorId, out: TensorId },
    Gelu { a: TensorId, out: TensorId },
    Reshape { a: TensorId, out: TensorId },
    SwapLast2 { a: TensorId, out: TensorId },
    PadFrontLast { a: TensorId, out: TensorId, pad: usize },
    SliceLast { a: TensorId, out: TensorId, offset: usize },
    PermuteAxis0 { a: TensorId, out: TensorId, perm: Vec<usize> },
    GatherRows { table: TensorId, out: TensorId, indices: Vec<usize> },
    MatMul { a: TensorId, b: TensorId, out: TensorId },
    Bmm { a: TensorId, b: TensorId, out: TensorId, transpose_b: bool },
    Conv1dSame { x: TensorId, w: TensorId, bias: TensorId, out: TensorId },
    MeanStd { a: TensorId, mean: TensorId, std: TensorId, axis: usize },
    Softmax { a: TensorId, out: TensorId, axis: usize },
    Rdft { a: TensorId, re: TensorId, im: TensorId, axis: usize },
    ComplexModulus { re: TensorId, im: TensorId, out: TensorId },
    MeanAll { a: TensorId, out: TensorId },
    Dropout { a: TensorId, out: TensorId, mask: Vec<f64> },
}

/// Arena of tensors plus the ordered op record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<DiffTensor>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    // ── Arena ────────────────────────────────────────────────────────

    /// Register a non-learnable tensor (inputs, targets, fixed anchors).
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> TensorId {
        self.push(DiffTensor::new(shape, values))
    }

    /// Register a copy of a parameter; gradients will be available for it
    /// after [`Tape::backward`].
    pub fn param(&mut self, t: &DiffTensor) -> TensorId {
        let mut copy = DiffTensor::new(t.shape.clone(), t.values.clone());
        copy.requires_grad = true;
        self.push(copy)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> TensorId {
        self.push(DiffTensor::zeros(shape))
    }

    fn push(&mut self, t: DiffTensor) -> TensorId {
        let id = self.nodes.len();
        self.nodes.push(t);
        id
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.nodes[id].values
    }

    pub fn tensor(&self, id: TensorId) -> &DiffTensor {
        &self.nodes[id]
    }

    /// Gradient buffer of a tensor; all zeros until a backward pass ran.
    pub fn grad(&self, id: TensorId) -> &[f64] {
        self.nodes[id]
            .grad
            .as_deref()
            .expect("gradient read before Tape::backward")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    fn out_of(&mut self, shape: Vec<usize>, values: Vec<f64>, op: impl FnOnce(TensorId) -> Op) -> TensorId {
        let out = self.push(DiffTensor::new(shape, values));
        let op = op(out);
        self.ops.push(op);
        out
    }

    /// Contract check: finite inputs must yield finite values. Divergent
    /// training trips this at the loss, where the caller reports context.
    pub fn is_finite(&self, id: TensorId) -> bool {
        self.nodes[id].values.iter().all(|v| v.is_finite())
    }

    // ── Elementwise / broadcast ──────────────────────────────────────

    fn binary(&mut self, kind: BinaryKind, a: TensorId, b: TensorId) -> TensorId {
        let out_shape = broadcast_shape(&self.nodes[a].shape, &self.nodes[b].shape);
        let mut values = vec![0.0; out_shape.iter().product()];
        {
            let va = &self.nodes[a].values;
            let vb = &self.nodes[b].values;
            for_each_broadcast(&out_shape, &self.nodes[a].shape, &self.nodes[b].shape, |o, ia, ib| {
                values[o] = match kind {
                    BinaryKind::Add => va[ia] + vb[ib],
                    BinaryKind::Sub => va[ia] - vb[ib],
                    BinaryKind::Mul => va[ia] * vb[ib],
                    BinaryKind::Div => va[ia] / vb[ib],
                };
            });
        }
        self.out_of(out_shape, values, |out| Op::Binary { kind, a, b, out })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let values = self.nodes[a].values.iter().map(|v| v * c).collect();
        let shape = self.nodes[a].shape.clone();
        self.out_of(shape, values, |out| Op::Scale { a, c, out })
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let values = self.nodes[a].values.iter().map(|v| v + c).collect();
        let shape = self.nodes[a].shape.clone();
        self.out_of(shape, values, |out| Op::AddScalar { a, out })
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a].values.iter().map(|v| -v).collect();
        let shape = self.nodes[a].shape.clone();
        self.out_of(shape, values, |out| Op::Neg { a, out })
    }

    /// Smooth GELU (tanh approximation). Chosen over exact erf or ReLU so
    /// finite-difference gradient checks stay clean everywhere.
    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a].values.iter().map(|&x| gelu_value(x)).collect();
        let shape = self.nodes[a].shape.clone();
        self.out_of(shape, values, |out| Op::Gelu { a, out })
    }

    // ── Shape plumbing ───────────────────────────────────────────────

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> TensorId {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.nodes[a].numel(),
            "reshape {:?} -> {:?} changes element count",
            self.nodes[a].shape,
            shape
        );
        let values = self.nodes[a].values.clone();
        self.out_of(shape, values, |out| Op::Reshape { a, out })
    }

    /// Swap the last two axes of a tensor of rank >= 2.
    pub fn swap_last2(&mut self, a: TensorId) -> TensorId {
        let shape = &self.nodes[a].shape;
        assert!(shape.len() >= 2, "swap_last2 needs rank >= 2, got {shape:?}");
        let rank = shape.len();
        let (m, n) = (shape[rank - 2], shape[rank - 1]);
        let outer: usize = shape[..rank - 2].iter().product();
        let mut out_shape = shape.clone();
        out_shape[rank - 2] = n;
        out_shape[rank - 1] = m;
        let va = &self.nodes[a].values;
        let mut values = vec![0.0; va.len()];
        for o in 0..outer {
            let base = o * m * n;
            for i in 0..m {
                for j in 0..n {
                    values[base + j * m + i] = va[base + i * n + j];
                }
            }
        }
        self.out_of(out_shape, values, |out| Op::SwapLast2 { a, out })
    }

    /// Zero-pad the front of the last axis to length `new_len`.
    pub fn pad_front_last(&mut self, a: TensorId, new_len: usize) -> TensorId {
        let shape = &self.nodes[a].shape;
        let rank = shape.len();
        let n = shape[rank - 1];
        assert!(new_len >= n, "pad_front_last shrinks axis: {n} -> {new_len}");
        let pad = new_len - n;
        let rows: usize = shape[..rank - 1].iter().product();
        let mut out_shape = shape.clone();
        out_shape[rank - 1] = new_len;
        let va = &self.nodes[a].values;
        let mut values = vec![0.0; rows * new_len];
        for r in 0..rows {
            values[r * new_len + pad..(r + 1) * new_len].copy_from_slice(&va[r * n..(r + 1) * n]);
        }
        self.out_of(out_shape, values, |out| Op::PadFrontLast { a, out, pad })
    }

    /// Contiguous slice of the last axis.
    pub fn slice_last(&mut self, a: TensorId, offset: usize, len: usize) -> TensorId {
        let shape = &self.nodes[a].shape;
        let rank = shape.len();
        let n = shape[rank - 1];
        assert!(offset + len <= n, "slice [{offset}, {offset}+{len}) out of axis length {n}");
        let rows: usize = shape[..rank - 1].iter().product();
        let mut out_shape = shape.clone();
        out_shape[rank - 1] = len;
        let va = &self.nodes[a].values;
        let mut values = vec![0.0; rows * len];
        for r in 0..rows {
            values[r * len..(r + 1) * len].copy_from_slice(&va[r * n + offset..r * n + offset + len]);
        }
        self.out_of(out_shape, values, |out| Op::SliceLast { a, out, offset })
    }

    /// Permute along axis 0: `out[i] = a[perm[i]]`.
    pub fn permute_axis0(&mut self, a: TensorId, perm: &[usize]) -> TensorId {
        let shape = self.nodes[a].shape.clone();
        assert_eq!(perm.len(), shape[0], "permutation length must equal axis-0 size");
        let row: usize = shape[1..].iter().product();
        let va = &self.nodes[a].values;
        let mut values = vec![0.0; va.len()];
        for (i, &src) in perm.iter().enumerate() {
            values[i * row..(i + 1) * row].copy_from_slice(&va[src * row..(src + 1) * row]);
        }
        self.out_of(shape, values, |out| Op::PermuteAxis0 { a, out, perm: perm.to_vec() })
    }

    /// Row lookup into a 2-D table; backward scatter-adds into the rows, so
    /// repeated indices accumulate.
    pub fn gather_rows(&mut self, table: TensorId, indices: &[usize]) -> TensorId {
        let shape = &self.nodes[table].shape;
        assert_eq!(shape.len(), 2, "gather_rows table must be 2-D, got {shape:?}");
        let (rows, cols) = (shape[0], shape[1]);
        let vt = &self.nodes[table].values;
        let mut values = vec![0.0; indices.len() * cols];
        for (r, &idx) in indices.iter().enumerate() {
            assert!(idx < rows, "gather index {idx} out of range {rows}");
            values[r * cols..(r + 1) * cols].copy_from_slice(&vt[idx * cols..(idx + 1) * cols]);
        }
        let out_shape = vec![indices.len(), cols];
        self.out_of(out_shape, values, |out| Op::GatherRows {
            table,
            out,
            indices: indices.to_vec(),
        })
    }

    // ── Linear algebra ───────────────────────────────────────────────

    /// 2-D product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (sa, sb) = (&self.nodes[a].shape, &self.nodes[b].shape);
        assert!(sa.len() == 2 && sb.len() == 2, "matmul needs 2-D operands: {sa:?} x {sb:?}");
        assert_eq!(sa[1], sb[0], "matmul inner dimensions disagree: {sa:?} x {sb:?}");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let va = &self.nodes[a].values;
        let vb = &self.nodes[b].values;
        let mut values = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = va[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &vb[kk * n..(kk + 1) * n];
                let orow = &mut values[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        self.out_of(vec![m, n], values, |out| Op::MatMul { a, b, out })
    }

    /// Batched product over matching leading axes:
    /// `[g,m,k] x [g,k,n] -> [g,m,n]`, or with `transpose_b`,
    /// `[g,m,k] x [g,n,k] -> [g,m,n]`.
    pub fn bmm(&mut self, a: TensorId, b: TensorId, transpose_b: bool) -> TensorId {
        let (sa, sb) = (&self.nodes[a].shape, &self.nodes[b].shape);
        assert!(sa.len() == 3 && sb.len() == 3, "bmm needs 3-D operands: {sa:?} x {sb:?}");
        assert_eq!(sa[0], sb[0], "bmm batch sizes disagree: {sa:?} x {sb:?}");
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let k_b = if transpose_b { sb[2] } else { sb[1] };
        assert_eq!(k, k_b, "bmm inner dimensions disagree: {sa:?} x {sb:?} (transpose_b={transpose_b})");
        let va = &self.nodes[a].values;
        let vb = &self.nodes[b].values;
        let mut values = vec![0.0; g * m * n];
        for gi in 0..g {
            let abase = gi * m * k;
            let bbase = if transpose_b { gi * n * k } else { gi * k * n };
            let obase = gi * m * n;
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0;
                    for kk in 0..k {
                        let bv = if transpose_b {
                            vb[bbase + j * k + kk]
                        } else {
                            vb[bbase + kk * n + j]
                        };
                        acc += va[abase + i * k + kk] * bv;
                    }
                    values[obase + i * n + j] = acc;
                }
            }
        }
        self.out_of(vec![g, m, n], values, |out| Op::Bmm { a, b, out, transpose_b })
    }

    /// 1-D convolution over the middle (time) axis with zero same-padding.
    /// `x: [B, L, c_in]`, `w: [c_out, c_in, K]` (K odd), `bias: [c_out]`.
    pub fn conv1d_same(&mut self, x: TensorId, w: TensorId, bias: TensorId) -> TensorId {
        let (sx, sw, sb) = (
            self.nodes[x].shape.clone(),
            self.nodes[w].shape.clone(),
            self.nodes[bias].shape.clone(),
        );
        assert!(sx.len() == 3 && sw.len() == 3, "conv1d_same shapes: x {sx:?}, w {sw:?}");
        let (bsz, len, c_in) = (sx[0], sx[1], sx[2]);
        let (c_out, w_cin, ksz) = (sw[0], sw[1], sw[2]);
        assert_eq!(c_in, w_cin, "conv1d_same channel mismatch");
        assert!(ksz % 2 == 1, "conv1d_same kernel must be odd, got {ksz}");
        assert_eq!(sb, vec![c_out], "conv1d_same bias shape");
        let pad = ksz / 2;
        let vx = &self.nodes[x].values;
        let vw = &self.nodes[w].values;
        let vb = &self.nodes[bias].values;
        let mut values = vec![0.0; bsz * len * c_out];
        for b in 0..bsz {
            for t in 0..len {
                for o in 0..c_out {
                    let mut acc = vb[o];
                    for dk in 0..ksz {
                        let s = t as isize + dk as isize - pad as isize;
                        if s < 0 || s >= len as isize {
                            continue;
                        }
                        let s = s as usize;
                        for c in 0..c_in {
                            acc += vx[(b * len + s) * c_in + c] * vw[(o * c_in + c) * ksz + dk];
                        }
                    }
                    values[(b * len + t) * c_out + o] = acc;
                }
            }
        }
        self.out_of(vec![bsz, len, c_out], values, |out| Op::Conv1dSame { x, w, bias, out })
    }

    // ── Reductions and fused rules ───────────────────────────────────

    /// Mean and guarded population standard deviation along `axis`
    /// (keeping the axis with size 1): `std = sqrt(mean((x-mu)^2) + 1e-8)`.
    pub fn mean_std(&mut self, a: TensorId, axis: usize) -> (TensorId, TensorId) {
        let shape = self.nodes[a].shape.clone();
        let (outer, len, inner) = axis_split(&shape, axis);
        assert!(len >= 1, "mean_std axis length must be >= 1");
        let mut out_shape = shape.clone();
        out_shape[axis] = 1;
        let va = &self.nodes[a].values;
        let mut mean = vec![0.0; outer * inner];
        let mut std = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut sum = 0.0;
                for j in 0..len {
                    sum += va[(o * len + j) * inner + i];
                }
                let mu = sum / len as f64;
                let mut var = 0.0;
                for j in 0..len {
                    let d = va[(o * len + j) * inner + i] - mu;
                    var += d * d;
                }
                mean[o * inner + i] = mu;
                std[o * inner + i] = (var / len as f64 + EPS_VAR).sqrt();
            }
        }
        let mean_id = self.push(DiffTensor::new(out_shape.clone(), mean));
        let std_id = self.push(DiffTensor::new(out_shape, std));
        self.ops.push(Op::MeanStd { a, mean: mean_id, std: std_id, axis });
        (mean_id, std_id)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: TensorId, axis: usize) -> TensorId {
        let shape = self.nodes[a].shape.clone();
        let (outer, len, inner) = axis_split(&shape, axis);
        let va = &self.nodes[a].values;
        let mut values = vec![0.0; va.len()];
        for o in 0..outer {
            for i in 0..inner {
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(va[(o * len + j) * inner + i]);
                }
                let mut denom = 0.0;
                for j in 0..len {
                    let e = (va[(o * len + j) * inner + i] - max).exp();
                    values[(o * len + j) * inner + i] = e;
                    denom += e;
                }
                for j in 0..len {
                    values[(o * len + j) * inner + i] /= denom;
                }
            }
        }
        self.out_of(shape, values, |out| Op::Softmax { a, out, axis })
    }

    /// One-sided real DFT along `axis` (unnormalized; see [`dft`]).
    /// Returns (real, imaginary) parts with the axis shrunk to N/2+1 bins.
    pub fn rdft(&mut self, a: TensorId, axis: usize) -> (TensorId, TensorId) {
        let shape = self.nodes[a].shape.clone();
        let (outer, n, inner) = axis_split(&shape, axis);
        let tw = dft::Twiddle::new(n);
        let k = tw.k;
        let mut out_shape = shape.clone();
        out_shape[axis] = k;
        let va = &self.nodes[a].values;
        let mut re = vec![0.0; outer * k * inner];
        let mut im = vec![0.0; outer * k * inner];
        let mut row = vec![0.0; n];
        let mut row_re = vec![0.0; k];
        let mut row_im = vec![0.0; k];
        for o in 0..outer {
            for i in 0..inner {
                for j in 0..n {
                    row[j] = va[(o * n + j) * inner + i];
                }
                tw.forward(&row, &mut row_re, &mut row_im);
                for j in 0..k {
                    re[(o * k + j) * inner + i] = row_re[j];
                    im[(o * k + j) * inner + i] = row_im[j];
                }
            }
        }
        let re_id = self.push(DiffTensor::new(out_shape.clone(), re));
        let im_id = self.push(DiffTensor::new(out_shape, im));
        self.ops.push(Op::Rdft { a, re: re_id, im: im_id, axis });
        (re_id, im_id)
    }

    /// Elementwise `sqrt(re^2 + im^2 + 1e-12)`.
    pub fn complex_modulus(&mut self, re: TensorId, im: TensorId) -> TensorId {
        assert_eq!(self.nodes[re].shape, self.nodes[im].shape, "modulus operands differ in shape");
        let shape = self.nodes[re].shape.clone();
        let vr = &self.nodes[re].values;
        let vi = &self.nodes[im].values;
        let values = vr
            .iter()
            .zip(vi)
            .map(|(r, i)| (r * r + i * i + EPS_MODULUS).sqrt())
            .collect();
        self.out_of(shape, values, |out| Op::ComplexModulus { re, im, out })
    }

    /// Mean over every element, producing a scalar of shape `[1]`.
    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.nodes[a].numel();
        assert!(n > 0, "mean_all of an empty tensor");
        let mean = self.nodes[a].values.iter().sum::<f64>() / n as f64;
        self.out_of(vec![1], vec![mean], |out| Op::MeanAll { a, out })
    }

    /// Inverted dropout: keeps each element with probability `1 - rate`,
    /// scaling survivors by `1/(1 - rate)`. The mask is drawn once here and
    /// replayed in backward. Call only in training mode.
    pub fn dropout(&mut self, a: TensorId, rate: f64, rng: &mut Rng) -> TensorId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if rate == 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.nodes[a].numel())
            .map(|_| if rng.next_f64() < rate { 0.0 } else { 1.0 / keep })
            .collect();
        let values = self.nodes[a]
            .values
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.nodes[a].shape.clone();
        self.out_of(shape, values, |out| Op::Dropout { a, out, mask })
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse pass from a scalar `loss`. Gradient buffers of every node are
    /// zeroed first, then rules accumulate additively in reverse recording
    /// order, so a single-threaded pass is bitwise reproducible.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(self.nodes[loss].numel(), 1, "backward requires a scalar loss");
        for node in &mut self.nodes {
            node.grad = Some(vec![0.0; node.values.len()]);
        }
        self.nodes[loss].grad.as_mut().unwrap()[0] = 1.0;

        for oi in (0..self.ops.len()).rev() {
            self.backward_op(oi);
        }
    }

    fn take_grad(&self, id: TensorId) -> Vec<f64> {
        self.nodes[id].grad.as_ref().unwrap().clone()
    }

    fn backward_op(&mut self, oi: usize) {
        // Ops are read immutably while gradients of their inputs are
        // updated; cloning the (small) output grad keeps the borrow simple.
        match &self.ops[oi] {
            Op::Binary { kind, a, b, out } => {
                let (kind, a, b, out) = (*kind, *a, *b, *out);
                let g = self.take_grad(out);
                let out_shape = self.nodes[out].shape.clone();
                let sa = self.nodes[a].shape.clone();
                let sb = self.nodes[b].shape.clone();
                let va = self.nodes[a].values.clone();
                let vb = self.nodes[b].values.clone();
                let mut ga = vec![0.0; va.len()];
                let mut gb = vec![0.0; vb.len()];
                for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| match kind {
                    BinaryKind::Add => {
                        ga[ia] += g[o];
                        gb[ib] += g[o];
                    }
                    BinaryKind::Sub => {
                        ga[ia] += g[o];
                        gb[ib] -= g[o];
                    }
                    BinaryKind::Mul => {
                        ga[ia] += g[o] * vb[ib];
                        gb[ib] += g[o] * va[ia];
                    }
                    BinaryKind::Div => {
                        ga[ia] += g[o] / vb[ib];
                        gb[ib] -= g[o] * va[ia] / (vb[ib] * vb[ib]);
                    }
                });
                self.accumulate(a, &ga);
                self.accumulate(b, &gb);
            }
            Op::Scale { a, c, out } => {
                let (a, c, out) = (*a, *c, *out);
                let g: Vec<f64> = self.take_grad(out).iter().map(|v| v * c).collect();
                self.accumulate(a, &g);
            }
            Op::AddScalar { a, out } => {
                let (a, out) = (*a, *out);
                let g = self.take_grad(out);
                self.accumulate(a, &g);
            }
            Op::Neg { a, out } => {
                let (a, out) = (*a, *out);
                let g: Vec<f64> = self.take_grad(out).iter().map(|v| -v).collect();
                self.accumulate(a, &g);
            }
            Op::Gelu { a, out } => {
                let (a, out) = (*a, *out);
                let g = self.take_grad(out);
                let ga: Vec<f64> = self.nodes[a]
                    .values
                    .iter()
                    .zip(&g)
                    .map(|(&x, gi)| gi * gelu_derivative(x))
                    .collect();
                self.accumulate(a, &ga);
            }
            Op::Reshape { a, out } => {
                let (a, out) = (*a, *out);
                let g = self.take_grad(out);
                self.accumulate(a, &g);
            }
            Op::SwapLast2 { a, out } => {
                let (a, out) = (*a, *out);
                let g = self.take_grad(out);
                let sa = self.nodes[a].shape.clone();
                let rank = sa.len();
                let (m, n) = (sa[rank - 2], sa[rank - 1]);
                let outer: usize = sa[..rank - 2].iter().product();
                let mut ga = vec![0.0; self.nodes[a].numel()];
                for o in 0..outer {
                    let base = o * m * n;
                    for i in 0..m {
                        for j in 0..n {
                            ga[base + i * n + j] += g[base + j * m + i];
                        }
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::PadFrontLast { a, out, pad } => {
                let (a, out, pad) = (*a, *out, *pad);
                let g = self.take_grad(out);
                let n = *self.nodes[a].shape.last().unwrap();
                let new_len = n + pad;
                let rows = self.nodes[a].numel() / n;
                let mut ga = vec![0.0; self.nodes[a].numel()];
                for r in 0..rows {
                    ga[r * n..(r + 1) * n]
                        .copy_from_slice(&g[r * new_len + pad..(r + 1) * new_len]);
                }
                self.accumulate(a, &ga);
            }
            Op::SliceLast { a, out, offset } => {
                let (a, out, offset) = (*a, *out, *offset);
                let g = self.take_grad(out);
                let n = *self.nodes[a].shape.last().unwrap();
                let len = *self.nodes[out].shape.last().unwrap();
                let rows = self.nodes[a].numel() / n;
                let mut ga = vec![0.0; self.nodes[a].numel()];
                for r in 0..rows {
                    for j in 0..len {
                        ga[r * n + offset + j] += g[r * len + j];
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::PermuteAxis0 { a, out, perm } => {
                let (a, out) = (*a, *out);
                let perm = perm.clone();
                let g = self.take_grad(out);
                let row = self.nodes[a].numel() / self.nodes[a].shape[0];
                let mut ga = vec![0.0; self.nodes[a].numel()];
                for (i, &src) in perm.iter().enumerate() {
                    for j in 0..row {
                        ga[src * row + j] += g[i * row + j];
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::GatherRows { table, out, indices } => {
                let (table, out) = (*table, *out);
                let indices = indices.clone();
                let g = self.take_grad(out);
                let cols = self.nodes[table].shape[1];
                let mut gt = vec![0.0; self.nodes[table].numel()];
                // Scatter-add in ascending gather order; repeated rows
                // accumulate deterministically.
                for (r, &idx) in indices.iter().enumerate() {
                    for c in 0..cols {
                        gt[idx * cols + c] += g[r * cols + c];
                    }
                }
                self.accumulate(table, &gt);
            }
            Op::MatMul { a, b, out } => {
                let (a, b, out) = (*a, *b, *out);
                let g = self.take_grad(out);
                let (m, k) = (self.nodes[a].shape[0], self.nodes[a].shape[1]);
                let n = self.nodes[b].shape[1];
                let va = self.nodes[a].values.clone();
                let vb = self.nodes[b].values.clone();
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * vb[kk * n + j];
                        }
                        ga[i * k + kk] = acc;
                    }
                }
                for kk in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += va[i * k + kk] * g[i * n + j];
                        }
                        gb[kk * n + j] = acc;
                    }
                }
                self.accumulate(a, &ga);
                self.accumulate(b, &gb);
            }
            Op::Bmm { a, b, out, transpose_b } => {
                let (a, b, out, tb) = (*a, *b, *out, *transpose_b);
                let g = self.take_grad(out);
                let (gn, m, k) = (
                    self.nodes[a].shape[0],
                    self.nodes[a].shape[1],
                    self.nodes[a].shape[2],
                );
                let n = self.nodes[out].shape[2];
                let va = self.nodes[a].values.clone();
                let vb = self.nodes[b].values.clone();
                let mut ga = vec![0.0; va.len()];
                let mut gb = vec![0.0; vb.len()];
                for gi in 0..gn {
                    let abase = gi * m * k;
                    let bbase = if tb { gi * n * k } else { gi * k * n };
                    let obase = gi * m * n;
                    for i in 0..m {
                        for j in 0..n {
                            let go = g[obase + i * n + j];
                            if go == 0.0 {
                                continue;
                            }
                            for kk in 0..k {
                                if tb {
                                    ga[abase + i * k + kk] += go * vb[bbase + j * k + kk];
                                    gb[bbase + j * k + kk] += go * va[abase + i * k + kk];
                                } else {
                                    ga[abase + i * k + kk] += go * vb[bbase + kk * n + j];
                                    gb[bbase + kk * n + j] += go * va[abase + i * k + kk];
                                }
                            }
                        }
                    }
                }
                self.accumulate(a, &ga);
                self.accumulate(b, &gb);
            }
            Op::Conv1dSame { x, w, bias, out } => {
                let (x, w, bias, out) = (*x, *w, *bias, *out);
                let g = self.take_grad(out);
                let sx = self.nodes[x].shape.clone();
                let sw = self.nodes[w].shape.clone();
                let (bsz, len, c_in) = (sx[0], sx[1], sx[2]);
                let (c_out, _, ksz) = (sw[0], sw[1], sw[2]);
                let pad = ksz / 2;
                let vx = self.nodes[x].values.clone();
                let vw = self.nodes[w].values.clone();
                let mut gx = vec![0.0; vx.len()];
                let mut gw = vec![0.0; vw.len()];
                let mut gbias = vec![0.0; c_out];
                for b in 0..bsz {
                    for t in 0..len {
                        for o in 0..c_out {
                            let go = g[(b * len + t) * c_out + o];
                            if go == 0.0 {
                                continue;
                            }
                            gbias[o] += go;
                            for dk in 0..ksz {
                                let s = t as isize + dk as isize - pad as isize;
                                if s < 0 || s >= len as isize {
                                    continue;
                                }
                                let s = s as usize;
                                for c in 0..c_in {
                                    gx[(b * len + s) * c_in + c] += go * vw[(o * c_in + c) * ksz + dk];
                                    gw[(o * c_in + c) * ksz + dk] += go * vx[(b * len + s) * c_in + c];
                                }
                            }
                        }
                    }
                }
                self.accumulate(x, &gx);
                self.accumulate(w, &gw);
                self.accumulate(bias, &gbias);
            }
            Op::MeanStd { a, mean, std, axis } => {
                let (a, mean, std, axis) = (*a, *mean, *std, *axis);
                let g_mu = self.take_grad(mean);
                let g_sd = self.take_grad(std);
                let shape = self.nodes[a].shape.clone();
                let (outer, len, inner) = axis_split(&shape, axis);
                let va = self.nodes[a].values.clone();
                let vmu = self.nodes[mean].values.clone();
                let vsd = self.nodes[std].values.clone();
                let mut ga = vec![0.0; va.len()];
                let inv_len = 1.0 / len as f64;
                for o in 0..outer {
                    for i in 0..inner {
                        let mu = vmu[o * inner + i];
                        let sd = vsd[o * inner + i];
                        let gm = g_mu[o * inner + i];
                        let gs = g_sd[o * inner + i];
                        for j in 0..len {
                            let x = va[(o * len + j) * inner + i];
                            ga[(o * len + j) * inner + i] +=
                                gm * inv_len + gs * (x - mu) * inv_len / sd;
                        }
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::Softmax { a, out, axis } => {
                let (a, out, axis) = (*a, *out, *axis);
                let g = self.take_grad(out);
                let shape = self.nodes[a].shape.clone();
                let (outer, len, inner) = axis_split(&shape, axis);
                let y = self.nodes[out].values.clone();
                let mut ga = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut dot = 0.0;
                        for j in 0..len {
                            let p = (o * len + j) * inner + i;
                            dot += g[p] * y[p];
                        }
                        for j in 0..len {
                            let p = (o * len + j) * inner + i;
                            ga[p] += y[p] * (g[p] - dot);
                        }
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::Rdft { a, re, im, axis } => {
                let (a, re, im, axis) = (*a, *re, *im, *axis);
                let g_re = self.take_grad(re);
                let g_im = self.take_grad(im);
                let shape = self.nodes[a].shape.clone();
                let (outer, n, inner) = axis_split(&shape, axis);
                let tw = dft::Twiddle::new(n);
                let k = tw.k;
                let mut ga = vec![0.0; self.nodes[a].numel()];
                let mut row_re = vec![0.0; k];
                let mut row_im = vec![0.0; k];
                let mut row_out = vec![0.0; n];
                for o in 0..outer {
                    for i in 0..inner {
                        for j in 0..k {
                            row_re[j] = g_re[(o * k + j) * inner + i];
                            row_im[j] = g_im[(o * k + j) * inner + i];
                        }
                        row_out.iter_mut().for_each(|v| *v = 0.0);
                        tw.adjoint(&row_re, &row_im, &mut row_out);
                        for j in 0..n {
                            ga[(o * n + j) * inner + i] += row_out[j];
                        }
                    }
                }
                self.accumulate(a, &ga);
            }
            Op::ComplexModulus { re, im, out } => {
                let (re, im, out) = (*re, *im, *out);
                let g = self.take_grad(out);
                let vm = self.nodes[out].values.clone();
                let vr = self.nodes[re].values.clone();
                let vi = self.nodes[im].values.clone();
                let gr: Vec<f64> = (0..vm.len()).map(|p| g[p] * vr[p] / vm[p]).collect();
                let gi: Vec<f64> = (0..vm.len()).map(|p| g[p] * vi[p] / vm[p]).collect();
                self.accumulate(re, &gr);
                self.accumulate(im, &gi);
            }
            Op::MeanAll { a, out } => {
                let (a, out) = (*a, *out);
                let g = self.take_grad(out)[0];
                let n = self.nodes[a].numel() as f64;
                let ga = vec![g / n; self.nodes[a].numel()];
                self.accumulate(a, &ga);
            }
            Op::Dropout { a, out, mask } => {
                let (a, out) = (*a, *out);
                let mask = mask.clone();
                let g = self.take_grad(out);
                let ga: Vec<f64> = g.iter().zip(&mask).map(|(gi, m)| gi * m).collect();
                self.accumulate(a, &ga);
            }
        }
    }

    fn accumulate(&mut self, id: TensorId, delta: &[f64]) {
        let grad = self.nodes[id].grad.as_mut().unwrap();
        debug_assert_eq!(grad.len(), delta.len());
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }
}

fn gelu_value(x: f64) -> f64 {
    const C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const C1: f64 = 0.044715;
    0.5 * x * (1.0 + (C0 * (x + C1 * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    const C0: f64 = 0.797_884_560_802_865_4;
    const C1: f64 = 0.044715;
    let u = C0 * (x + C1 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C0 * (1.0 + 3.0 * C1 * x * x)
}
