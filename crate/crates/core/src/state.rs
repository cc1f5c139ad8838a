use num_complex::Complex64;

use crate::basis::BasisTag;
use crate::error::{Error, Result};

/// Complex amplitudes over a constrained basis or a symmetry sector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    tag: BasisTag,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(tag: BasisTag, amps: Vec<Complex64>) -> Self {
        Self { tag, amps }
    }

    pub fn from_real(tag: BasisTag, amps: &[f64]) -> Self {
        Self::new(tag, amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub(crate) fn check_same_space(&self, other: &StateVector) -> Result<()> {
        if self.tag != other.tag || self.dim() != other.dim() {
            return Err(Error::Basis(format!(
                "states live in different spaces ({:?}, dim {}) vs ({:?}, dim {})",
                self.tag,
                self.dim(),
                other.tag,
                other.dim()
            )));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &StateVector) -> Result<Complex64> {
        self.check_same_space(other)?;
        Ok(dot(&self.amps, &other.amps))
    }
}

/// `sum conj(a_i) b_i`.
#[inline]
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
