use crate::error::{Error, Result};
use crate::jacobian::dense::DenseMatrix;
use crate::ops::BnParams;
use crate::tensor::Real;

/// A matrix-free linear map `R^N -> R^K` with access to its transpose.
///
/// Vectors cross the interface as flat `f64` slices laid out row-major in the
/// operator's `in_shape` / `out_shape`. Implementations may compute internally
/// in lower precision.
pub trait LinearOperator: Sync {
    fn in_shape(&self) -> &[usize];
    fn out_shape(&self) -> &[usize];

    /// `v -> J v`
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
    /// `u -> J^T u`
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>>;

    fn in_dim(&self) -> usize {
        self.in_shape().iter().product()
    }

    fn out_dim(&self) -> usize {
        self.out_shape().iter().product()
    }

    fn describe(&self) -> String {
        format!("linear operator {:?} -> {:?}", self.in_shape(), self.out_shape())
    }
}

pub(crate) fn check_len(v: &[f64], shape: &[usize]) -> Result<()> {
    let n: usize = shape.iter().product();
    if v.len() != n {
        return Err(Error::shape(shape, &[v.len()]));
    }
    Ok(())
}

impl<O: LinearOperator + ?Sized> LinearOperator for &O {
    fn in_shape(&self) -> &[usize] {
        (**self).in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        (**self).out_shape()
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(v)
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).apply_transpose(u)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for Box<O> {
    fn in_shape(&self) -> &[usize] {
        (**self).in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        (**self).out_shape()
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(v)
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        (**self).apply_transpose(u)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Debug, Clone)]
pub struct IdentityOperator {
    shape: Vec<usize>,
}

impl IdentityOperator {
    pub fn new(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec() }
    }
}

impl LinearOperator for IdentityOperator {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v, &self.shape)?;
        Ok(v.to_vec())
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.apply(u)
    }
    fn describe(&self) -> String {
        format!("identity {:?}", self.shape)
    }
}

#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    shape: Vec<usize>,
    diag: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(shape: &[usize], diag: Vec<f64>) -> Result<Self> {
        check_len(&diag, shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            diag,
        })
    }

    /// Linearized batch norm on a `(C, H, W)` map: channel `c` is scaled by
    /// `gamma_c / sqrt(var_c + eps)`.
    pub fn batch_norm<T: Real>(bn: &BnParams<T>, map_shape: &[usize]) -> Result<Self> {
        let c = map_shape[0];
        if c != bn.channels() {
            return Err(Error::shape(&[bn.channels()], &[c]));
        }
        let plane: usize = map_shape[1..].iter().product();
        let diag = bn
            .scale()
            .iter()
            .flat_map(|s| std::iter::repeat(s.as_f64()).take(plane))
            .collect();
        Self::new(map_shape, diag)
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

impl LinearOperator for DiagonalOperator {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v, &self.shape)?;
        Ok(v.iter().zip(&self.diag).map(|(a, d)| a * d).collect())
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.apply(u)
    }
    fn describe(&self) -> String {
        format!("diagonal {:?}", self.shape)
    }
}

/// Explicit matrix viewed as an operator `R^cols -> R^rows`.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    matrix: DenseMatrix,
    in_shape: [usize; 1],
    out_shape: [usize; 1],
}

impl MatrixOperator {
    pub fn new(matrix: DenseMatrix) -> Self {
        let (in_shape, out_shape) = ([matrix.cols()], [matrix.rows()]);
        Self {
            matrix,
            in_shape,
            out_shape,
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl LinearOperator for MatrixOperator {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }
    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v, &self.in_shape)?;
        Ok(self.matrix.matvec(v))
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(u, &self.out_shape)?;
        Ok(self.matrix.matvec_transpose(u))
    }
    fn describe(&self) -> String {
        format!("matrix {}x{}", self.matrix.rows(), self.matrix.cols())
    }
}

/// Composition of operators in forward order: `apply` runs first-to-last,
/// `apply_transpose` last-to-first.
pub struct ChainOperator<'a> {
    ops: Vec<Box<dyn LinearOperator + 'a>>,
    label: String,
}

impl<'a> ChainOperator<'a> {
    pub fn new(ops: Vec<Box<dyn LinearOperator + 'a>>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::IncompatibleChain("empty chain".into()));
        }
        for (i, w) in ops.windows(2).enumerate() {
            if w[0].out_shape() != w[1].in_shape() {
                return Err(Error::IncompatibleChain(format!(
                    "link {i} outputs {:?} but link {} expects {:?}",
                    w[0].out_shape(),
                    i + 1,
                    w[1].in_shape()
                )));
            }
        }
        Ok(Self {
            ops,
            label: "chain".into(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn links(&self) -> &[Box<dyn LinearOperator + 'a>] {
        &self.ops
    }
}

impl LinearOperator for ChainOperator<'_> {
    fn in_shape(&self) -> &[usize] {
        self.ops[0].in_shape()
    }
    fn out_shape(&self) -> &[usize] {
        self.ops[self.ops.len() - 1].out_shape()
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.ops[0].apply(v)?;
        for op in &self.ops[1..] {
            x = op.apply(&x)?;
        }
        Ok(x)
    }
    fn apply_transpose(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut x = u.to_vec();
        for op in self.ops.iter().rev() {
            x = op.apply_transpose(&x)?;
        }
        Ok(x)
    }
    fn describe(&self) -> String {
        format!(
            "{} of {} links {:?} -> {:?}",
            self.label,
            self.ops.len(),
            self.in_shape(),
            self.out_shape()
        )
    }
}

/// Chains unit operators into a stage operator.
pub fn stage_operator<'a>(units: Vec<Box<dyn LinearOperator + 'a>>) -> Result<ChainOperator<'a>> {
    Ok(ChainOperator::new(units)?.with_label("stage"))
}
