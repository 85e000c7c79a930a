use super::DiffError;

/// Dense row-major array of `f64` values.
///
/// A shape of `[]` denotes a scalar holding exactly one value.
#[derive(Clone, Debug, PartialEq)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealArray {
    /// Builds an array, rejecting a length/shape mismatch or any non-finite value.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(DiffError::InvalidArray(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiffError::InvalidArray(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Builds an array without the finiteness check. Length is still asserted.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![0.0; len] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, DiffError> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(size: usize) -> Self {
        let mut out = Self::zeros(vec![size, size]);
        for i in 0..size {
            out.data[i * size + i] = 1.0;
        }
        out
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True for shape `[]` and for any single-element shape such as `[1]` or `[1, 1]`.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar array; `None` otherwise.
    pub fn item(&self) -> Option<f64> {
        self.is_scalar().then(|| self.data[0])
    }

    /// `(rows, cols)` of a 2-D array.
    pub fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, DiffError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(DiffError::InvalidArray(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self { shape, data: self.data })
    }
}
