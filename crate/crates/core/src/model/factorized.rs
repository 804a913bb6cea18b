use crate::numkit::{sample_normal, Matrix, NumError, RngState};

/// Low-rank factorization M ~= A * B^T of an (m x n) weight matrix.
///
/// Stores (m + n) * r parameters instead of m * n; gradients flow to the
/// factors only, never to the materialized product.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedMatrix {
    /// m x r.
    pub a: Matrix,
    /// n x r.
    pub b: Matrix,
}

impl FactorizedMatrix {
    pub fn init(m: usize, n: usize, rank: usize, std: f64, rng: &mut RngState) -> Result<Self, NumError> {
        if rank == 0 || rank > m.min(n) {
            return Err(NumError::InvalidParameter(format!(
                "rank {rank} invalid for a {m}x{n} matrix"
            )));
        }
        Ok(Self {
            a: sample_normal(rng, m, rank, 0.0, std)?,
            b: sample_normal(rng, n, rank, 0.0, std)?,
        })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.a.rows(), self.b.rows())
    }

    pub fn param_count(&self) -> usize {
        self.a.len() + self.b.len()
    }

    /// Materialize the dense A * B^T.
    pub fn effective(&self) -> Matrix {
        self.a.matmul_nt(&self.b).expect("factor ranks agree")
    }

    /// Factor gradients from the gradient on the effective matrix.
    pub fn grads(&self, d_eff: &Matrix) -> (Matrix, Matrix) {
        let da = d_eff.matmul(&self.b).expect("shapes agree");
        let db = d_eff.matmul_tn(&self.a).expect("shapes agree");
        (da, db)
    }
}

/// A projection weight that is either dense or low-rank factorized.
#[derive(Clone, Debug, PartialEq)]
pub enum Projection {
    Dense(Matrix),
    Factorized(FactorizedMatrix),
}

impl Projection {
    pub fn init(
        m: usize,
        n: usize,
        rank: Option<usize>,
        std: f64,
        rng: &mut RngState,
    ) -> Result<Self, NumError> {
        match rank {
            None => Ok(Projection::Dense(sample_normal(rng, m, n, 0.0, std)?)),
            Some(r) => Ok(Projection::Factorized(FactorizedMatrix::init(m, n, r, std, rng)?)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Projection::Dense(m) => m.shape(),
            Projection::Factorized(f) => f.shape(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Projection::Dense(m) => m.len(),
            Projection::Factorized(f) => f.param_count(),
        }
    }

    pub fn effective(&self) -> Matrix {
        match self {
            Projection::Dense(m) => m.clone(),
            Projection::Factorized(f) => f.effective(),
        }
    }
}
