//! Two-layer GCN encoder with L2-normalised output embeddings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FggcdError, Result};
use crate::numeric::{DenseMatrix, Parameter, Tape, Var, EPS};

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` over a client's local edges, stored dense.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(DenseMatrix);

impl NormalizedAdjacency {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DenseMatrix::identity(n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(FggcdError::InvalidArgument(format!(
                    "edge ({u}, {v}) outside local range 0..{n}"
                )));
            }
            if u != v {
                a.set(u, v, 1.0);
                a.set(v, u, 1.0);
            }
        }
        let inv_sqrt: Vec<f64> = a.row_iter().map(|r| 1.0 / r.iter().sum::<f64>().sqrt()).collect();
        for r in 0..n {
            for c in 0..n {
                let v = a.get(r, c);
                if v != 0.0 {
                    a.set(r, c, v * inv_sqrt[r] * inv_sqrt[c]);
                }
            }
        }
        Ok(Self(a))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w1: Parameter,
    pub w2: Parameter,
}

impl GcnModel {
    /// Glorot-uniform initialisation.
    pub fn new(in_dim: usize, hidden: usize, embed: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: Parameter::new(glorot(in_dim, hidden, rng)),
            w2: Parameter::new(glorot(hidden, embed, rng)),
        }
    }

    pub fn from_weights(w1: DenseMatrix, w2: DenseMatrix) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(FggcdError::Shape {
                op: "GcnModel::from_weights",
                lhs: w1.shape(),
                rhs: w2.shape(),
            });
        }
        Ok(Self {
            w1: Parameter::new(w1),
            w2: Parameter::new(w2),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w1.value.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.value.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w2.value.cols()
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.w1, &mut self.w2]
    }

    pub fn zero_grad(&mut self) {
        self.w1.zero_grad();
        self.w2.zero_grad();
    }

    /// Records the forward pass on `tape` given the propagated features `Â·X`.
    /// Returns the trainable leaves and the embedding node.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        adj: &NormalizedAdjacency,
        propagated: &DenseMatrix,
    ) -> Result<(Var, Var, Var)> {
        let w1 = tape.param(&self.w1);
        let w2 = tape.param(&self.w2);
        let ax = tape.constant(propagated.clone());
        let a = tape.constant(adj.matrix().clone());
        let h = tape.matmul(ax, w1)?;
        let h = tape.relu(h);
        let hw = tape.matmul(h, w2)?;
        let out = tape.matmul(a, hw)?;
        let z = tape.l2_normalize_rows(out, EPS);
        Ok((w1, w2, z))
    }

    /// `l2_normalize_rows(Â · relu(Â · X · W1) · W2)`, where `propagated = Â · X`.
    pub fn embed(&self, adj: &NormalizedAdjacency, propagated: &DenseMatrix) -> Result<DenseMatrix> {
        let h = propagated.matmul(&self.w1.value)?.map(|v| v.max(0.0));
        let out = adj.matrix().matmul(&h.matmul(&self.w2.value)?)?;
        Ok(out.l2_normalize_rows(EPS))
    }

    /// Convenience forward from raw features.
    pub fn forward(&self, adj: &NormalizedAdjacency, features: &DenseMatrix) -> Result<DenseMatrix> {
        self.embed(adj, &adj.matrix().matmul(features)?)
    }
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

/// Prototype logits `(z · Pᵀ) / temperature`.
pub fn logits(embeddings: &DenseMatrix, prototypes: &DenseMatrix, temperature: f64) -> Result<DenseMatrix> {
    if prototypes.rows() == 0 {
        return Err(FggcdError::EmptyPrototypes);
    }
    if !(temperature > 0.0) {
        return Err(FggcdError::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(embeddings.matmul_t(prototypes)?.scale(1.0 / temperature))
}
