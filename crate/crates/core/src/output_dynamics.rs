//! Structured linear output dynamics `η̇ = Fη + Gμ` obtained after feedback
//! linearization, and the η coordinate layout `(y1, y2, ẏ2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numbers of relative-degree-one (`k1`) and relative-degree-two (`k2`) outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDims {
    pub k1: usize,
    pub k2: usize,
}

impl OutputDims {
    pub fn new(k1: usize, k2: usize) -> Result<Self> {
        if k1 + k2 == 0 {
            return Err(Error::InvalidDims { k1, k2 });
        }
        Ok(Self { k1, k2 })
    }

    /// Dimension of η.
    pub fn eta_dim(&self) -> usize {
        self.k1 + 2 * self.k2
    }

    /// Number of auxiliary inputs (columns of G).
    pub fn input_dim(&self) -> usize {
        self.k1 + self.k2
    }
}

/// The pair (F, G).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDynamics {
    pub dims: OutputDims,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl OutputDynamics {
    pub fn n(&self) -> usize {
        self.dims.eta_dim()
    }

    pub fn m(&self) -> usize {
        self.dims.input_dim()
    }

    /// `Fη + Gv`
    pub fn rhs(&self, eta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.f * eta + &self.g * v
    }
}

/// Builds F and G with the block layout
///
/// ```text
///     [0 0 0]        [I 0]
/// F = [0 0 I]    G = [0 0]
///     [0 0 0]        [0 I]
/// ```
///
/// over the row blocks `(y1, y2, ẏ2)` of sizes `(k1, k2, k2)`.
pub fn build_fg(dims: OutputDims) -> Result<OutputDynamics> {
    let OutputDims { k1, k2 } = OutputDims::new(dims.k1, dims.k2)?;
    let n = k1 + 2 * k2;
    let m = k1 + k2;
    let mut f = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(n, m);
    for i in 0..k1 {
        g[(i, i)] = 1.0;
    }
    for j in 0..k2 {
        f[(k1 + j, k1 + k2 + j)] = 1.0;
        g[(k1 + k2 + j, k1 + j)] = 1.0;
    }
    Ok(OutputDynamics { dims, f, g })
}

/// η split into the velocity-output block and `η₂ = (y2, ẏ2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaState {
    pub y1: DVector<f64>,
    pub eta2: DVector<f64>,
}

impl EtaState {
    pub fn y2(&self) -> DVector<f64> {
        let k2 = self.eta2.len() / 2;
        self.eta2.rows(0, k2).into_owned()
    }

    pub fn y2_dot(&self) -> DVector<f64> {
        let k2 = self.eta2.len() / 2;
        self.eta2.rows(k2, k2).into_owned()
    }
}

pub fn split_eta(eta: &DVector<f64>, dims: OutputDims) -> Result<EtaState> {
    if eta.len() != dims.eta_dim() {
        return Err(Error::DimensionMismatch {
            expected: dims.eta_dim(),
            got: eta.len(),
        });
    }
    Ok(EtaState {
        y1: eta.rows(0, dims.k1).into_owned(),
        eta2: eta.rows(dims.k1, 2 * dims.k2).into_owned(),
    })
}

pub fn merge_eta(state: &EtaState) -> Result<DVector<f64>> {
    if state.eta2.len() % 2 != 0 {
        return Err(Error::DimensionMismatch {
            expected: state.eta2.len() + 1,
            got: state.eta2.len(),
        });
    }
    let mut out = DVector::zeros(state.y1.len() + state.eta2.len());
    out.rows_mut(0, state.y1.len()).copy_from(&state.y1);
    out.rows_mut(state.y1.len(), state.eta2.len())
        .copy_from(&state.eta2);
    Ok(out)
}

/// Canonical embedding `Π₀(y1, z) = (y1, 0, z)`.
pub fn canonical_embed(
    y1: &DVector<f64>,
    z: &DVector<f64>,
    dims: OutputDims,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if y1.len() != dims.k1 {
        return Err(Error::DimensionMismatch {
            expected: dims.k1,
            got: y1.len(),
        });
    }
    let eta = merge_eta(&EtaState {
        y1: y1.clone(),
        eta2: DVector::zeros(2 * dims.k2),
    })?;
    Ok((eta, z.clone()))
}

/// Rank of the controllability matrix `[G, FG, ..., F^{n-1}G]`, computed
/// from the singular values with a relative cutoff.
pub fn controllability_rank(dyn_: &OutputDynamics) -> usize {
    let n = dyn_.n();
    let m = dyn_.m();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = dyn_.g.clone();
    for k in 0..n {
        ctrb.columns_mut(k * m, m).copy_from(&block);
        block = &dyn_.f * block;
    }
    ctrb.rank(1e-10)
}
