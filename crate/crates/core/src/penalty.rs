//! Penalty operators for the functional coefficients.
//!
//! The decomposition penalty `L_Q = φ_b P_Q + φ_a (I − P_Q)` shrinks lightly
//! inside the span of a prior basis `Q` and strongly outside it.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    Ridge,
    SecondDifference,
    Decomposition {
        q: DMatrix<f64>,
        phi_a: f64,
        phi_b: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
}

impl PenaltySpec {
    pub fn ridge() -> Self {
        Self {
            kind: PenaltyKind::Ridge,
        }
    }

    pub fn second_difference() -> Self {
        Self {
            kind: PenaltyKind::SecondDifference,
        }
    }

    pub fn decomposition(q: DMatrix<f64>, phi_a: f64, phi_b: f64) -> Self {
        Self {
            kind: PenaltyKind::Decomposition { q, phi_a, phi_b },
        }
    }

    /// Builds the operator for a grid with `p` points.
    pub fn build(&self, p: usize) -> Result<PenaltyMatrix> {
        match &self.kind {
            PenaltyKind::Ridge => Ok(make_ridge(p)),
            PenaltyKind::SecondDifference => make_second_difference(p),
            PenaltyKind::Decomposition { q, phi_a, phi_b } => {
                if q.nrows() != p {
                    return Err(Error::GridMismatch {
                        expected: p,
                        found: q.nrows(),
                        context: "rows of the Q basis".into(),
                    });
                }
                make_decomposition(q, *phi_a, *phi_b)
            }
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            PenaltyKind::Ridge => "ridge".into(),
            PenaltyKind::SecondDifference => "second-difference".into(),
            PenaltyKind::Decomposition { phi_a, phi_b, .. } => {
                format!("decomposition(phi_a={phi_a}, phi_b={phi_b})")
            }
        }
    }
}

/// An `m × p` operator with `c = dim Null(L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub l: DMatrix<f64>,
    pub null_dim: usize,
}

impl PenaltyMatrix {
    pub fn is_invertible(&self) -> bool {
        self.null_dim == 0 && self.l.is_square()
    }

    pub fn p(&self) -> usize {
        self.l.ncols()
    }
}

/// Orthogonal projection `P_Q = Q Q⁺` onto `Range(Q)`.
pub fn projection_from_basis(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.ncols() == 0 || q.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroBasis);
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("Q basis".into()));
    }
    let smax = linalg::singular_values(q)[0];
    // Columns negligible relative to the largest singular value carry no direction.
    let col_tol = q.nrows() as f64 * f64::EPSILON * smax;
    if q.column_iter().all(|c| c.norm() <= col_tol) {
        return Err(Error::ZeroBasis);
    }
    let mut proj = q * linalg::pseudoinverse(q);
    linalg::symmetrize(&mut proj);
    Ok(proj)
}

/// `L_Q = φ_b P_Q + φ_a (I − P_Q)`.
pub fn make_decomposition(q: &DMatrix<f64>, phi_a: f64, phi_b: f64) -> Result<PenaltyMatrix> {
    if !(phi_a > 0.0 && phi_b > 0.0 && phi_a.is_finite() && phi_b.is_finite()) {
        return Err(Error::NonPositivePhi { phi_a, phi_b });
    }
    let proj = projection_from_basis(q)?;
    let p = proj.nrows();
    // Written as φ_a I + (φ_b − φ_a) P_Q so that equal weights give φ I exactly.
    let mut l = DMatrix::identity(p, p) * phi_a + &proj * (phi_b - phi_a);
    linalg::symmetrize(&mut l);
    Ok(PenaltyMatrix { l, null_dim: 0 })
}

pub fn make_ridge(p: usize) -> PenaltyMatrix {
    PenaltyMatrix {
        l: DMatrix::identity(p, p),
        null_dim: 0,
    }
}

/// `(p−2) × p` stencil with rows `[1, −2, 1]`, unscaled by grid spacing.
pub fn make_second_difference(p: usize) -> Result<PenaltyMatrix> {
    if p < 3 {
        return Err(Error::GridTooSmall(p));
    }
    let mut l = DMatrix::zeros(p - 2, p);
    for i in 0..p - 2 {
        l[(i, i)] = 1.0;
        l[(i, i + 1)] = -2.0;
        l[(i, i + 2)] = 1.0;
    }
    Ok(PenaltyMatrix { l, null_dim: 2 })
}

/// `L = blockdiag{λ_0 L_0, …, λ_D L_D}` with its Gram matrix `L'L`.
#[derive(Debug, Clone)]
pub struct BlockPenalty {
    pub blocks: Vec<(f64, PenaltyMatrix)>,
    pub assembled: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    /// `(L'L)⁻¹`, present when every block is invertible.
    pub gram_inverse: Option<DMatrix<f64>>,
}

impl BlockPenalty {
    pub fn assemble(blocks: &[PenaltyMatrix], lambda: &[f64]) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != lambda.len() {
            return Err(Error::InvalidInput(format!(
                "{} penalty blocks but {} tuning values",
                blocks.len(),
                lambda.len()
            )));
        }
        if let Some(bad) = lambda.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "tuning value {bad} is not positive"
            )));
        }
        let rows: usize = blocks.iter().map(|b| b.l.nrows()).sum();
        let cols: usize = blocks.iter().map(|b| b.l.ncols()).sum();
        let mut assembled = DMatrix::zeros(rows, cols);
        let mut gram = DMatrix::zeros(cols, cols);
        let (mut r0, mut c0) = (0, 0);
        for (b, &lam) in blocks.iter().zip(lambda) {
            let (m, p) = b.l.shape();
            assembled
                .view_mut((r0, c0), (m, p))
                .copy_from(&(&b.l * lam));
            let g = b.l.transpose() * &b.l * (lam * lam);
            gram.view_mut((c0, c0), (p, p)).copy_from(&g);
            r0 += m;
            c0 += p;
        }
        linalg::symmetrize(&mut gram);
        let gram_inverse = if blocks.iter().all(PenaltyMatrix::is_invertible) {
            Some(linalg::spd_inverse(&gram)?)
        } else {
            None
        };
        Ok(Self {
            blocks: blocks
                .iter()
                .cloned()
                .zip(lambda.iter().copied())
                .map(|(b, l)| (l, b))
                .collect(),
            assembled,
            gram,
            gram_inverse,
        })
    }

    /// Builds every block from its spec on a grid of `p` points.
    pub fn from_specs(specs: &[PenaltySpec], p: usize, lambda: &[f64]) -> Result<Self> {
        let blocks = specs
            .iter()
            .map(|s| s.build(p))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(&blocks, lambda)
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.blocks.iter().map(|(l, _)| *l).collect()
    }

    /// `(L'L)⁻¹` or the error the mixed-model route reports for a singular block.
    pub fn require_gram_inverse(&self) -> Result<&DMatrix<f64>> {
        match &self.gram_inverse {
            Some(g) => Ok(g),
            None => {
                let d = self
                    .blocks
                    .iter()
                    .position(|(_, b)| !b.is_invertible())
                    .unwrap_or(0);
                Err(Error::SingularBlockForMixedModel(d))
            }
        }
    }

    /// Same blocks with new tuning values.
    pub fn with_lambda(&self, lambda: &[f64]) -> Result<Self> {
        let blocks: Vec<PenaltyMatrix> = self.blocks.iter().map(|(_, b)| b.clone()).collect();
        Self::assemble(&blocks, lambda)
    }
}

/// Parses a headerless CSV of `p` rows by `J` columns.
pub fn parse_q_basis<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("Q basis: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| {
                let v: f64 = f.parse().map_err(|_| {
                    Error::Parse(format!("Q basis line {line}: `{f}` is not a number"))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteValue(format!("Q basis line {line}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "Q basis line {line}: {} columns, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let p = rows.len();
    let j = rows.first().map_or(0, Vec::len);
    if p == 0 || j == 0 {
        return Err(Error::Parse("Q basis is empty".into()));
    }
    Ok(DMatrix::from_fn(p, j, |r, c| rows[r][c]))
}

pub fn read_q_basis(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::QBasisNotFound(path.display().to_string())
        } else {
            Error::io(path.display().to_string(), e)
        }
    })?;
    parse_q_basis(file)
}

pub fn write_q_basis<W: std::io::Write>(q: &DMatrix<f64>, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for r in 0..q.nrows() {
        let row: Vec<String> = q.row(r).iter().map(f64::to_string).collect();
        wtr.write_record(&row)
            .map_err(|e| Error::Parse(format!("csv write: {e}")))?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))
}
