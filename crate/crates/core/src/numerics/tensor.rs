use crate::error::{Error, Result};

/// Dense row-major `f64` array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Dimension {
                op: "tensor",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![0.0; n]).expect("zero dimension in Tensor::zeros")
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![values.len()], values)
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    /// Builds a matrix from nested rows, all of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Tensor::matrix(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.values[i * n + i] = 1.0;
        }
        t
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, grad: Vec<f64>) {
        debug_assert_eq!(grad.len(), self.values.len());
        self.grad = Some(grad);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidArgument(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap();
        &self.values[i * cols..(i + 1) * cols]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.values.len() {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Dimension { .. })
        ));
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn rows_and_identity() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(t.dims2().unwrap(), (2, 2));
        assert_eq!(t.row(1), &[3.0, 4.0]);
        assert_eq!(Tensor::identity(2).values(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
