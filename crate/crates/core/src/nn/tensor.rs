//! Dense row-major `f64` tensors and the named parameter store.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// A dense tensor: a shape and a row-major `f64` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::Dim(format!(
                "shape {shape:?} wants {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Fill with draws from Normal(0, std^2).
    pub fn fill_normal(&mut self, rng: &mut SplitMix64, std: f64) {
        for x in &mut self.data {
            *x = rng.next_normal() * std;
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Reinterpret with a new shape of the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dim(format!(
                "add: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// Error out if any entry is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite value in {context}")))
        }
    }

    /// `self [m x k] * other [k x n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::Dim(format!("matmul: [{m}x{k}] * [{k2}x{n}]")));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * other` where `self` is `[k x m]` -> `[m x n]`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::Dim(format!("matmul_tn: [{k}x{m}]^T * [{k2}x{n}]")));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for p in 0..k {
            for i in 0..m {
                let a = self.data[p * m + i];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T` where `other` is `[n x k]` -> `[m x n]`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::Dim(format!("matmul_nt: [{m}x{k}] * [{n}x{k2}]^T")));
        }
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for (a, b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                out.data[i * n + j] = acc;
            }
        }
        Ok(out)
    }
}

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters with per-parameter gradient slots.
///
/// Backed by a BTreeMap so iteration (and therefore serialization and
/// optimizer sweeps) is always in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.insert(name.to_string(), Param { value, grad });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    /// Panics if the name is absent; model code only asks for names it
    /// created at init.
    pub fn value(&self, name: &str) -> &Tensor {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .value
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .grad
    }

    pub fn grad_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .grad
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn element_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_len() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn matmul_small_case() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_matmuls_agree_with_plain() {
        let mut rng = SplitMix64::new(3);
        let mut a = Tensor::zeros(&[4, 3]);
        let mut b = Tensor::zeros(&[4, 5]);
        a.fill_normal(&mut rng, 1.0);
        b.fill_normal(&mut rng, 1.0);

        let mut at = Tensor::zeros(&[3, 4]);
        for i in 0..4 {
            for j in 0..3 {
                at.data_mut()[j * 4 + i] = a.data()[i * 3 + j];
            }
        }
        let want = at.matmul(&b).unwrap();
        let got = a.matmul_tn(&b).unwrap();
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut b2 = Tensor::zeros(&[5, 3]);
        b2.fill_normal(&mut rng, 1.0);
        let mut b2t = Tensor::zeros(&[3, 5]);
        for i in 0..5 {
            for j in 0..3 {
                b2t.data_mut()[j * 5 + i] = b2.data()[i * 3 + j];
            }
        }
        let want = a.matmul(&b2t).unwrap();
        let got = a.matmul_nt(&b2).unwrap();
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        assert!(matches!(a.matmul(&b), Err(Error::Dim(_))));
    }

    #[test]
    fn check_finite_flags_nan() {
        let mut t = Tensor::zeros(&[2]);
        assert!(t.check_finite("ok").is_ok());
        t.data_mut()[1] = f64::NAN;
        assert!(matches!(t.check_finite("bad"), Err(Error::Numeric(_))));
    }

    #[test]
    fn param_store_rejects_duplicates_and_iterates_sorted() {
        let mut ps = ParamStore::new();
        ps.insert("b", Tensor::zeros(&[2])).unwrap();
        ps.insert("a", Tensor::zeros(&[3])).unwrap();
        assert!(ps.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(ps.names(), vec!["a".to_string(), "b".to_string()]);
        assert_eq!(ps.element_count(), 5);
    }

    #[test]
    fn zero_grads_clears_accumulators() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        ps.grad_mut("w").data_mut()[0] = 5.0;
        ps.zero_grads();
        assert_eq!(ps.grad("w").data(), &[0.0; 4]);
    }
}
