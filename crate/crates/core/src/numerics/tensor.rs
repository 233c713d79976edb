use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Dense row-major tensor of 64-bit floats.
///
/// `grad` is allocated lazily by [`super::Tape::backward`] (or by the caller
/// when accumulating across steps) and always matches `data` in length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor { shape, data, grad: None, requires_grad: false }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], grad: None, requires_grad: false }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(vec![1], vec![value])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::from_vec(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    /// Adds `delta` into the persistent grad buffer, allocating zeros first
    /// if the buffer does not exist yet.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.data.len(), "grad length mismatch");
        let grad = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(grad) = self.grad.as_mut() {
            grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)
    }
}

/// Nested-array view used for (de)serialization: matrices serialize as an
/// array of row arrays, vectors as a flat array.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Nested {
    Leaf(f64),
    List(Vec<Nested>),
}

fn to_nested(shape: &[usize], data: &[f64]) -> Nested {
    match shape {
        [] => Nested::Leaf(data[0]),
        [_] => Nested::List(data.iter().map(|&v| Nested::Leaf(v)).collect()),
        [rows, rest @ ..] => {
            let chunk: usize = rest.iter().product();
            Nested::List(
                (0..*rows)
                    .map(|r| to_nested(rest, &data[r * chunk..(r + 1) * chunk]))
                    .collect(),
            )
        }
    }
}

fn flatten(nested: &Nested, out: &mut Vec<f64>) {
    match nested {
        Nested::Leaf(v) => out.push(*v),
        Nested::List(items) => items.iter().for_each(|n| flatten(n, out)),
    }
}

impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Tensor", 2)?;
        s.serialize_field("shape", &self.shape)?;
        s.serialize_field("data", &to_nested(&self.shape, &self.data))?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            shape: Vec<usize>,
            data: Nested,
        }
        let repr = Repr::deserialize(deserializer)?;
        let mut data = Vec::new();
        flatten(&repr.data, &mut data);
        let numel: usize = repr.shape.iter().product();
        if data.len() != numel {
            return Err(D::Error::custom(format!(
                "tensor data has {} elements, shape {:?} expects {}",
                data.len(),
                repr.shape,
                numel
            )));
        }
        Ok(Tensor::from_vec(repr.shape, data))
    }
}
