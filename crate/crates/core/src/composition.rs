//! Composition cells that fold word vectors into phrase or sentence
//! vectors: a plain recurrent step, a binary recursive step, and an
//! LSTM step. Each cell ships with an analytic backward pass, and the
//! tests verify every gradient against central finite differences —
//! that check is the module's correctness case, since no downstream
//! task training happens here.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use thiserror::Error;

use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Error)]
pub enum CompositionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("parameters contain non-finite values")]
    NonFinite,
}

/// Dense row-major matrix, just large enough for the cells here.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(S::of(-scale), S::of(scale));
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `out = self · x`; `x` must have `cols` entries, `out` `rows`.
    fn matvec_into(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = S::zero();
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            *o = acc;
        }
    }
}

/// Parameters shared by all three cells: `w` and `v` are the K×K maps
/// of the recurrent/recursive steps; `lstm` is the single 4K×2K block
/// that produces all four LSTM gate pre-activations from the
/// concatenated `[h_prev; e_t]`, with gate rows ordered
/// (input, forget, output, candidate). There are no bias terms.
/// `h0`/`c0` seed sequence encoders and default to zeros.
#[derive(Debug, Clone)]
pub struct CompositionParams<S> {
    pub dim: usize,
    pub w: Matrix<S>,
    pub v: Matrix<S>,
    pub lstm: Matrix<S>,
    pub h0: Vec<S>,
    pub c0: Vec<S>,
}

impl<S: Scalar> CompositionParams<S> {
    /// Build from explicit matrices, enforcing the shape contract:
    /// `w`, `v` must be K×K and `lstm` exactly 4K×2K.
    pub fn new(
        dim: usize,
        w: Matrix<S>,
        v: Matrix<S>,
        lstm: Matrix<S>,
    ) -> Result<Self, CompositionError> {
        let p = CompositionParams {
            dim,
            w,
            v,
            lstm,
            h0: vec![S::zero(); dim],
            c0: vec![S::zero(); dim],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(dim: usize) -> Self {
        CompositionParams {
            dim,
            w: Matrix::zeros(dim, dim),
            v: Matrix::zeros(dim, dim),
            lstm: Matrix::zeros(4 * dim, 2 * dim),
            h0: vec![S::zero(); dim],
            c0: vec![S::zero(); dim],
        }
    }

    /// All matrices drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Self {
        CompositionParams {
            dim,
            w: Matrix::random(dim, dim, scale, rng),
            v: Matrix::random(dim, dim, scale, rng),
            lstm: Matrix::random(4 * dim, 2 * dim, scale, rng),
            h0: vec![S::zero(); dim],
            c0: vec![S::zero(); dim],
        }
    }

    pub fn validate(&self) -> Result<(), CompositionError> {
        let k = self.dim;
        for (name, m, r, c) in [
            ("w", &self.w, k, k),
            ("v", &self.v, k, k),
            ("lstm", &self.lstm, 4 * k, 2 * k),
        ] {
            if m.rows() != r || m.cols() != c {
                return Err(CompositionError::ShapeMismatch(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(CompositionError::NonFinite);
            }
        }
        for (name, v) in [("h0", &self.h0), ("c0", &self.c0)] {
            if v.len() != k {
                return Err(CompositionError::ShapeMismatch(format!(
                    "{name} has {} entries, expected {k}",
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

/// Strictly binary tree whose leaves carry K-dim vectors; the enum
/// makes anything other than a leaf or a two-child node unrepresentable.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryTree<S> {
    Leaf(Vec<S>),
    Node(Box<BinaryTree<S>>, Box<BinaryTree<S>>),
}

impl<S: Scalar> BinaryTree<S> {
    pub fn leaf(v: Vec<S>) -> Self {
        BinaryTree::Leaf(v)
    }

    pub fn node(left: BinaryTree<S>, right: BinaryTree<S>) -> Self {
        BinaryTree::Node(Box::new(left), Box::new(right))
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            BinaryTree::Leaf(_) => 1,
            BinaryTree::Node(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }
}

fn check_dim<S>(name: &str, v: &[S], k: usize) -> Result<(), CompositionError> {
    if v.len() != k {
        return Err(CompositionError::ShapeMismatch(format!(
            "{name} has {} entries, expected {k}",
            v.len()
        )));
    }
    Ok(())
}

/// Shared kernel of the recurrent and recursive steps:
/// `tanh(W·a + V·b)`, elementwise tanh.
fn tanh_affine<S: Scalar>(
    a: &[S],
    b: &[S],
    p: &CompositionParams<S>,
) -> Result<Vec<S>, CompositionError> {
    p.validate()?;
    check_dim("first input", a, p.dim)?;
    check_dim("second input", b, p.dim)?;
    let mut pre = vec![S::zero(); p.dim];
    let mut vb = vec![S::zero(); p.dim];
    p.w.matvec_into(a, &mut pre);
    p.v.matvec_into(b, &mut vb);
    for (x, y) in pre.iter_mut().zip(&vb) {
        *x = (*x + *y).tanh();
    }
    Ok(pre)
}

/// Gradients of a scalar loss through [`tanh_affine`], given the loss
/// gradient wrt the output.
fn tanh_affine_backward<S: Scalar>(
    a: &[S],
    b: &[S],
    p: &CompositionParams<S>,
    grad_out: &[S],
) -> Result<(Matrix<S>, Matrix<S>, Vec<S>, Vec<S>), CompositionError> {
    check_dim("output gradient", grad_out, p.dim)?;
    let h = tanh_affine(a, b, p)?;
    let k = p.dim;
    // d/d(pre-activation): tanh' = 1 - h^2
    let dpre: Vec<S> = h
        .iter()
        .zip(grad_out)
        .map(|(hi, gi)| *gi * (S::one() - *hi * *hi))
        .collect();
    let mut gw = Matrix::zeros(k, k);
    let mut gv = Matrix::zeros(k, k);
    let mut ga = vec![S::zero(); k];
    let mut gb = vec![S::zero(); k];
    for i in 0..k {
        for j in 0..k {
            gw.set(i, j, dpre[i] * a[j]);
            gv.set(i, j, dpre[i] * b[j]);
            ga[j] += dpre[i] * p.w.get(i, j);
            gb[j] += dpre[i] * p.v.get(i, j);
        }
    }
    Ok((gw, gv, ga, gb))
}

/// One recurrent step: the new hidden state is the elementwise tanh of
/// a linear map of the previous hidden state plus a linear map of the
/// current input vector. Every output coordinate lies strictly inside
/// (-1, 1).
pub fn rnn_step<S: Scalar>(
    h_prev: &[S],
    e_t: &[S],
    p: &CompositionParams<S>,
) -> Result<Vec<S>, CompositionError> {
    tanh_affine(h_prev, e_t, p)
}

#[derive(Debug, Clone)]
pub struct RnnStepGradients<S> {
    pub w: Matrix<S>,
    pub v: Matrix<S>,
    pub h_prev: Vec<S>,
    pub e: Vec<S>,
}

/// Gradients of a scalar loss through one recurrent step, given the
/// loss gradient wrt the step's output.
pub fn rnn_step_backward<S: Scalar>(
    h_prev: &[S],
    e_t: &[S],
    p: &CompositionParams<S>,
    grad_h: &[S],
) -> Result<RnnStepGradients<S>, CompositionError> {
    let (w, v, h_prev, e) = tanh_affine_backward(h_prev, e_t, p, grad_h)?;
    Ok(RnnStepGradients { w, v, h_prev, e })
}

/// Fold [`rnn_step`] over a sequence starting from `h0`; the final
/// hidden state represents the whole sequence.
pub fn rnn_encode<S: Scalar>(
    sequence: &[Vec<S>],
    p: &CompositionParams<S>,
) -> Result<Vec<S>, CompositionError> {
    if sequence.is_empty() {
        return Err(CompositionError::EmptySequence);
    }
    let mut h = p.h0.clone();
    for e_t in sequence {
        h = rnn_step(&h, e_t, p)?;
    }
    Ok(h)
}

/// One recursive step: a parent vector is the elementwise tanh of a
/// linear map of the left child plus a linear map of the right child.
pub fn recursive_compose<S: Scalar>(
    left: &[S],
    right: &[S],
    p: &CompositionParams<S>,
) -> Result<Vec<S>, CompositionError> {
    tanh_affine(left, right, p)
}

#[derive(Debug, Clone)]
pub struct ComposeGradients<S> {
    pub w: Matrix<S>,
    pub v: Matrix<S>,
    pub left: Vec<S>,
    pub right: Vec<S>,
}

/// Gradients of a scalar loss through one recursive step.
pub fn recursive_compose_backward<S: Scalar>(
    left: &[S],
    right: &[S],
    p: &CompositionParams<S>,
    grad_out: &[S],
) -> Result<ComposeGradients<S>, CompositionError> {
    let (w, v, left, right) = tanh_affine_backward(left, right, p, grad_out)?;
    Ok(ComposeGradients { w, v, left, right })
}

/// Evaluate a binary tree bottom-up with [`recursive_compose`] and
/// return the root vector. A single leaf is returned unchanged — no
/// composition is applied.
pub fn tree_encode<S: Scalar>(
    tree: &BinaryTree<S>,
    p: &CompositionParams<S>,
) -> Result<Vec<S>, CompositionError> {
    match tree {
        BinaryTree::Leaf(v) => {
            check_dim("leaf", v, p.dim)?;
            Ok(v.clone())
        }
        BinaryTree::Node(l, r) => {
            let lv = tree_encode(l, p)?;
            let rv = tree_encode(r, p)?;
            recursive_compose(&lv, &rv, p)
        }
    }
}

/// Hidden and cell state after an LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
}

/// Gate activations of one LSTM step, exposed for the backward pass
/// and for range checks.
#[derive(Debug, Clone)]
pub struct LstmGates<S> {
    pub input: Vec<S>,
    pub forget: Vec<S>,
    pub output: Vec<S>,
    pub candidate: Vec<S>,
}

fn lstm_forward<S: Scalar>(
    h_prev: &[S],
    c_prev: &[S],
    e_t: &[S],
    p: &CompositionParams<S>,
) -> Result<(LstmState<S>, LstmGates<S>), CompositionError> {
    p.validate()?;
    let k = p.dim;
    check_dim("h_prev", h_prev, k)?;
    check_dim("c_prev", c_prev, k)?;
    check_dim("e_t", e_t, k)?;
    let mut z = Vec::with_capacity(2 * k);
    z.extend_from_slice(h_prev);
    z.extend_from_slice(e_t);
    let mut pre = vec![S::zero(); 4 * k];
    p.lstm.matvec_into(&z, &mut pre);
    let gates = LstmGates {
        input: pre[..k].iter().map(|&x| sigmoid(x)).collect(),
        forget: pre[k..2 * k].iter().map(|&x| sigmoid(x)).collect(),
        output: pre[2 * k..3 * k].iter().map(|&x| sigmoid(x)).collect(),
        candidate: pre[3 * k..].iter().map(|&x| x.tanh()).collect(),
    };
    let c: Vec<S> = (0..k)
        .map(|j| gates.forget[j] * c_prev[j] + gates.input[j] * gates.candidate[j])
        .collect();
    let h: Vec<S> = (0..k).map(|j| gates.output[j] * c[j]).collect();
    Ok((LstmState { h, c }, gates))
}

/// One LSTM step. A single block matrix maps the concatenated
/// `[h_prev; e_t]` to the four gate pre-activations in the row order
/// (input, forget, output, candidate); input/forget/output pass through
/// a sigmoid, the candidate through tanh. The new cell state is
/// `forget·c_prev + input·candidate`, and the hidden state multiplies
/// the output gate by the raw cell state — there is deliberately no
/// tanh over the cell when emitting the hidden state.
pub fn lstm_step<S: Scalar>(
    h_prev: &[S],
    c_prev: &[S],
    e_t: &[S],
    p: &CompositionParams<S>,
) -> Result<LstmState<S>, CompositionError> {
    lstm_forward(h_prev, c_prev, e_t, p).map(|(s, _)| s)
}

/// [`lstm_step`] plus the gate activations, for callers that want to
/// inspect them.
pub fn lstm_step_with_gates<S: Scalar>(
    h_prev: &[S],
    c_prev: &[S],
    e_t: &[S],
    p: &CompositionParams<S>,
) -> Result<(LstmState<S>, LstmGates<S>), CompositionError> {
    lstm_forward(h_prev, c_prev, e_t, p)
}

/// Fold [`lstm_step`] over a sequence starting from `(h0, c0)`.
pub fn lstm_encode<S: Scalar>(
    sequence: &[Vec<S>],
    p: &CompositionParams<S>,
) -> Result<LstmState<S>, CompositionError> {
    if sequence.is_empty() {
        return Err(CompositionError::EmptySequence);
    }
    let mut state = LstmState {
        h: p.h0.clone(),
        c: p.c0.clone(),
    };
    for e_t in sequence {
        state = lstm_step(&state.h, &state.c, e_t, p)?;
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct LstmGradients<S> {
    pub block: Matrix<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub e: Vec<S>,
}

/// Gradients of a scalar loss through one LSTM step, given the loss
/// gradients wrt both outputs (`grad_h` for the hidden state, `grad_c`
/// for the cell state as seen downstream).
pub fn lstm_step_backward<S: Scalar>(
    h_prev: &[S],
    c_prev: &[S],
    e_t: &[S],
    p: &CompositionParams<S>,
    grad_h: &[S],
    grad_c: &[S],
) -> Result<LstmGradients<S>, CompositionError> {
    let k = p.dim;
    check_dim("grad_h", grad_h, k)?;
    check_dim("grad_c", grad_c, k)?;
    let (state, gates) = lstm_forward(h_prev, c_prev, e_t, p)?;
    let one = S::one();
    // dL/dc with both the direct path and the h = o·c path folded in
    let dc: Vec<S> = (0..k)
        .map(|j| grad_c[j] + grad_h[j] * gates.output[j])
        .collect();
    // gate-space gradients, then back through sigma/tanh to pre-activations
    let mut dpre = vec![S::zero(); 4 * k];
    for j in 0..k {
        let di = dc[j] * gates.candidate[j];
        let df = dc[j] * c_prev[j];
        let do_ = grad_h[j] * state.c[j];
        let dl = dc[j] * gates.input[j];
        dpre[j] = di * gates.input[j] * (one - gates.input[j]);
        dpre[k + j] = df * gates.forget[j] * (one - gates.forget[j]);
        dpre[2 * k + j] = do_ * gates.output[j] * (one - gates.output[j]);
        dpre[3 * k + j] = dl * (one - gates.candidate[j] * gates.candidate[j]);
    }
    let mut z = Vec::with_capacity(2 * k);
    z.extend_from_slice(h_prev);
    z.extend_from_slice(e_t);
    let mut block = Matrix::zeros(4 * k, 2 * k);
    let mut dz = vec![S::zero(); 2 * k];
    for r in 0..4 * k {
        for c in 0..2 * k {
            block.set(r, c, dpre[r] * z[c]);
            dz[c] += dpre[r] * p.lstm.get(r, c);
        }
    }
    let dc_prev: Vec<S> = (0..k).map(|j| dc[j] * gates.forget[j]).collect();
    Ok(LstmGradients {
        block,
        h_prev: dz[..k].to_vec(),
        c_prev: dc_prev,
        e: dz[k..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn relative_error(n: f64, a: f64) -> f64 {
        (n - a).abs() / (n.abs() + a.abs()).max(1e-8)
    }

    fn rand_vec(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let dist = Uniform::new_inclusive(-1.0, 1.0);
        (0..k).map(|_| dist.sample(rng)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn rnn_zero_params_fixed_point() {
        let p = CompositionParams::<f64>::zeros(3);
        let h = rnn_step(&[0.9, -0.2, 0.4], &[1.0, 1.0, 1.0], &p).unwrap();
        assert_eq!(h, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rnn_identity_v_gives_scalar_tanh() {
        let k = 3;
        let p = CompositionParams::new(
            k,
            Matrix::zeros(k, k),
            Matrix::identity(k),
            Matrix::zeros(4 * k, 2 * k),
        )
        .unwrap();
        let zero = rnn_step(&[0.3; 3], &[0.0; 3], &p).unwrap();
        assert_eq!(zero, vec![0.0; 3]);
        let h = rnn_step(&[0.3; 3], &[0.5; 3], &p).unwrap();
        for v in &h {
            assert!((v - 0.5f64.tanh()).abs() < 1e-15);
            assert!((v - 0.46212).abs() < 5e-6);
        }
    }

    #[test]
    fn rnn_output_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = CompositionParams::<f64>::random(4, 2.0, &mut rng);
            let h = rnn_step(&rand_vec(4, &mut rng), &rand_vec(4, &mut rng), &p).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn rnn_shape_mismatch_errors() {
        let p = CompositionParams::<f64>::zeros(3);
        assert!(matches!(
            rnn_step(&[0.0; 2], &[0.0; 3], &p),
            Err(CompositionError::ShapeMismatch(_))
        ));
        assert!(matches!(
            rnn_step(&[0.0; 3], &[0.0; 4], &p),
            Err(CompositionError::ShapeMismatch(_))
        ));
        assert!(CompositionParams::new(
            3,
            Matrix::<f64>::zeros(3, 3),
            Matrix::zeros(3, 3),
            Matrix::zeros(12, 7),
        )
        .is_err());
    }

    #[test]
    fn rnn_encode_matches_manual_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 4;
        let p = CompositionParams::<f64>::random(k, 0.5, &mut rng);
        let seq: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(k, &mut rng)).collect();
        let h1 = rnn_step(&p.h0, &seq[0], &p).unwrap();
        let h2 = rnn_step(&h1, &seq[1], &p).unwrap();
        let h3 = rnn_step(&h2, &seq[2], &p).unwrap();
        assert_eq!(rnn_encode(&seq, &p).unwrap(), h3);
        assert_eq!(rnn_encode(&seq[..1], &p).unwrap(), h1);
        assert!(matches!(
            rnn_encode(&[], &p),
            Err(CompositionError::EmptySequence)
        ));
        let zero = CompositionParams::<f64>::zeros(k);
        assert_eq!(rnn_encode(&seq, &zero).unwrap(), vec![0.0; k]);
    }

    #[test]
    fn rnn_gradients_match_finite_differences() {
        let k = 4;
        let mut worst = 0.0f64;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = CompositionParams::<f64>::random(k, 0.8, &mut rng);
            let h_prev = rand_vec(k, &mut rng);
            let e = rand_vec(k, &mut rng);
            let g = rand_vec(k, &mut rng);
            let loss = |p: &CompositionParams<f64>, h_prev: &[f64], e: &[f64]| {
                dot(&g, &rnn_step(h_prev, e, p).unwrap())
            };
            let analytic = rnn_step_backward(&h_prev, &e, &p, &g).unwrap();
            for i in 0..k {
                for j in 0..k {
                    for (which, a) in [(0, analytic.w.get(i, j)), (1, analytic.v.get(i, j))] {
                        let mut plus = p.clone();
                        let mut minus = p.clone();
                        let (mp, mm) = if which == 0 {
                            (&mut plus.w, &mut minus.w)
                        } else {
                            (&mut plus.v, &mut minus.v)
                        };
                        mp.set(i, j, mp.get(i, j) + EPS);
                        mm.set(i, j, mm.get(i, j) - EPS);
                        let n = (loss(&plus, &h_prev, &e) - loss(&minus, &h_prev, &e))
                            / (2.0 * EPS);
                        worst = worst.max(relative_error(n, a));
                    }
                }
            }
            for j in 0..k {
                let mut hp = h_prev.clone();
                let mut hm = h_prev.clone();
                hp[j] += EPS;
                hm[j] -= EPS;
                let n = (loss(&p, &hp, &e) - loss(&p, &hm, &e)) / (2.0 * EPS);
                worst = worst.max(relative_error(n, analytic.h_prev[j]));
                let mut ep = e.clone();
                let mut em = e.clone();
                ep[j] += EPS;
                em[j] -= EPS;
                let n = (loss(&p, &h_prev, &ep) - loss(&p, &h_prev, &em)) / (2.0 * EPS);
                worst = worst.max(relative_error(n, analytic.e[j]));
            }
        }
        assert!(worst < TOL, "max relative error {worst}");
    }

    #[test]
    fn single_leaf_passes_through() {
        let p = CompositionParams::<f64>::zeros(2);
        let t = BinaryTree::leaf(vec![0.7, -0.3]);
        assert_eq!(tree_encode(&t, &p).unwrap(), vec![0.7, -0.3]);
    }

    #[test]
    fn two_leaf_tree_is_one_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 3;
        let p = CompositionParams::<f64>::random(k, 0.5, &mut rng);
        let a = rand_vec(k, &mut rng);
        let b = rand_vec(k, &mut rng);
        let t = BinaryTree::node(BinaryTree::leaf(a.clone()), BinaryTree::leaf(b.clone()));
        assert_eq!(
            tree_encode(&t, &p).unwrap(),
            recursive_compose(&a, &b, &p).unwrap()
        );
        assert_eq!(t.leaf_count(), 2);
    }

    #[test]
    fn branching_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 3;
        let p = CompositionParams::<f64>::random(k, 0.5, &mut rng);
        let a = rand_vec(k, &mut rng);
        let b = rand_vec(k, &mut rng);
        let c = rand_vec(k, &mut rng);
        let leaf = |v: &Vec<f64>| BinaryTree::leaf(v.clone());
        let left = BinaryTree::node(
            BinaryTree::node(leaf(&a), leaf(&b)),
            leaf(&c),
        );
        let right = BinaryTree::node(
            leaf(&a),
            BinaryTree::node(leaf(&b), leaf(&c)),
        );
        let lv = tree_encode(&left, &p).unwrap();
        let rv = tree_encode(&right, &p).unwrap();
        let diff: f64 = lv
            .iter()
            .zip(&rv)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-6, "trees unexpectedly agree: {diff}");
    }

    #[test]
    fn malformed_leaf_dimension_errors() {
        let p = CompositionParams::<f64>::zeros(3);
        let t = BinaryTree::node(
            BinaryTree::leaf(vec![0.0; 3]),
            BinaryTree::leaf(vec![0.0; 2]),
        );
        assert!(matches!(
            tree_encode(&t, &p),
            Err(CompositionError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn recursive_gradients_match_finite_differences() {
        let k = 3;
        let mut worst = 0.0f64;
        for seed in 100..150 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = CompositionParams::<f64>::random(k, 0.8, &mut rng);
            let left = rand_vec(k, &mut rng);
            let right = rand_vec(k, &mut rng);
            let g = rand_vec(k, &mut rng);
            let loss = |p: &CompositionParams<f64>, l: &[f64], r: &[f64]| {
                dot(&g, &recursive_compose(l, r, p).unwrap())
            };
            let analytic = recursive_compose_backward(&left, &right, &p, &g).unwrap();
            for j in 0..k {
                let mut lp = left.clone();
                let mut lm = left.clone();
                lp[j] += EPS;
                lm[j] -= EPS;
                let n = (loss(&p, &lp, &right) - loss(&p, &lm, &right)) / (2.0 * EPS);
                worst = worst.max(relative_error(n, analytic.left[j]));
                let mut rp = right.clone();
                let mut rm = right.clone();
                rp[j] += EPS;
                rm[j] -= EPS;
                let n = (loss(&p, &left, &rp) - loss(&p, &left, &rm)) / (2.0 * EPS);
                worst = worst.max(relative_error(n, analytic.right[j]));
            }
            for i in 0..k {
                for j in 0..k {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    plus.w.set(i, j, plus.w.get(i, j) + EPS);
                    minus.w.set(i, j, minus.w.get(i, j) - EPS);
                    let n = (loss(&plus, &left, &right) - loss(&minus, &left, &right))
                        / (2.0 * EPS);
                    worst = worst.max(relative_error(n, analytic.w.get(i, j)));
                }
            }
        }
        assert!(worst < TOL, "max relative error {worst}");
    }

    #[test]
    fn lstm_zero_params_halves_the_cell() {
        // sigmoid(0) = 1/2 and tanh(0) = 0 exactly, so with zero
        // parameters: c = 0.5*c_prev and h = 0.25*c_prev, exactly.
        let k = 3;
        let p = CompositionParams::<f64>::zeros(k);
        let c_prev = vec![0.8, -0.4, 2.0];
        let (state, gates) =
            lstm_step_with_gates(&[0.3; 3], &c_prev, &[0.9; 3], &p).unwrap();
        assert_eq!(gates.input, vec![0.5; 3]);
        assert_eq!(gates.forget, vec![0.5; 3]);
        assert_eq!(gates.output, vec![0.5; 3]);
        assert_eq!(gates.candidate, vec![0.0; 3]);
        for j in 0..k {
            assert_eq!(state.c[j], 0.5 * c_prev[j]);
            assert_eq!(state.h[j], 0.25 * c_prev[j]);
        }
    }

    #[test]
    fn lstm_zero_cell_and_params_is_zero() {
        let p = CompositionParams::<f64>::zeros(2);
        let state = lstm_step(&[0.5, -0.5], &[0.0, 0.0], &[1.0, 1.0], &p).unwrap();
        assert_eq!(state.h, vec![0.0, 0.0]);
        assert_eq!(state.c, vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_gates_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let p = CompositionParams::<f64>::random(3, 2.0, &mut rng);
            let (_, gates) = lstm_step_with_gates(
                &rand_vec(3, &mut rng),
                &rand_vec(3, &mut rng),
                &rand_vec(3, &mut rng),
                &p,
            )
            .unwrap();
            for g in [&gates.input, &gates.forget, &gates.output] {
                assert!(g.iter().all(|v| *v > 0.0 && *v < 1.0));
            }
        }
    }

    #[test]
    fn lstm_encode_matches_manual_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = 3;
        let p = CompositionParams::<f64>::random(k, 0.5, &mut rng);
        let seq: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(k, &mut rng)).collect();
        let s1 = lstm_step(&p.h0, &p.c0, &seq[0], &p).unwrap();
        let s2 = lstm_step(&s1.h, &s1.c, &seq[1], &p).unwrap();
        let s3 = lstm_step(&s2.h, &s2.c, &seq[2], &p).unwrap();
        assert_eq!(lstm_encode(&seq, &p).unwrap(), s3);
        assert!(matches!(
            lstm_encode(&[], &p),
            Err(CompositionError::EmptySequence)
        ));
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let k = 3;
        let mut worst = 0.0f64;
        for seed in 200..250 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = CompositionParams::<f64>::random(k, 0.8, &mut rng);
            let h_prev = rand_vec(k, &mut rng);
            let c_prev = rand_vec(k, &mut rng);
            let e = rand_vec(k, &mut rng);
            let gh = rand_vec(k, &mut rng);
            let gc = rand_vec(k, &mut rng);
            let loss = |p: &CompositionParams<f64>, h: &[f64], c: &[f64], e: &[f64]| {
                let s = lstm_step(h, c, e, p).unwrap();
                dot(&gh, &s.h) + dot(&gc, &s.c)
            };
            let analytic = lstm_step_backward(&h_prev, &c_prev, &e, &p, &gh, &gc).unwrap();
            for r in 0..4 * k {
                for c in 0..2 * k {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    plus.lstm.set(r, c, plus.lstm.get(r, c) + EPS);
                    minus.lstm.set(r, c, minus.lstm.get(r, c) - EPS);
                    let n = (loss(&plus, &h_prev, &c_prev, &e)
                        - loss(&minus, &h_prev, &c_prev, &e))
                        / (2.0 * EPS);
                    worst = worst.max(relative_error(n, analytic.block.get(r, c)));
                }
            }
            for j in 0..k {
                for (which, a) in [
                    (0, analytic.h_prev[j]),
                    (1, analytic.c_prev[j]),
                    (2, analytic.e[j]),
                ] {
                    let mut hp = h_prev.clone();
                    let mut cp = c_prev.clone();
                    let mut ep = e.clone();
                    let mut hm = h_prev.clone();
                    let mut cm = c_prev.clone();
                    let mut em = e.clone();
                    match which {
                        0 => {
                            hp[j] += EPS;
                            hm[j] -= EPS;
                        }
                        1 => {
                            cp[j] += EPS;
                            cm[j] -= EPS;
                        }
                        _ => {
                            ep[j] += EPS;
                            em[j] -= EPS;
                        }
                    }
                    let n = (loss(&p, &hp, &cp, &ep) - loss(&p, &hm, &cm, &em)) / (2.0 * EPS);
                    worst = worst.max(relative_error(n, a));
                }
            }
        }
        assert!(worst < TOL, "max relative error {worst}");
    }
}
