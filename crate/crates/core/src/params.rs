//! Flat parameter vectors.
//!
//! Every quantity the simulator moves around (model weights, client deltas,
//! control variates, server moments) is a [`ParamVector`]. All public
//! operations check lengths and reject non-finite results.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

/// Element-wise operation selector for [`ParamVector::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementwiseOp {
    /// `a * b`
    Mul,
    /// `a / (b + eps)`
    DivEps(f64),
    /// `sqrt(a)`; `b` is ignored.
    SqrtA,
    /// `sign(a)` with `sign(0) = 0`; `b` is ignored.
    SignA,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = Self(values);
        v.ensure_finite("new")?;
        Ok(v)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch { left: self.len(), right: other.len() })
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: f64) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled_in_place(other, s)?;
        Ok(out)
    }

    /// In-place `self += s * other`. On error `self` may hold non-finite values.
    pub fn add_scaled_in_place(&mut self, other: &Self, s: f64) -> Result<()> {
        self.check_len(other)?;
        if !s.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be finite, got {s}")));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
        self.ensure_finite("add_scaled")
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        let out = Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect());
        out.ensure_finite("sub")?;
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        let out = Self(self.0.iter().map(|a| a * s).collect());
        out.ensure_finite("scale")?;
        Ok(out)
    }

    pub fn elementwise(&self, other: &Self, op: ElementwiseOp) -> Result<Self> {
        let values: Vec<f64> = match op {
            ElementwiseOp::Mul => {
                self.check_len(other)?;
                self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect()
            }
            ElementwiseOp::DivEps(eps) => {
                self.check_len(other)?;
                if !(eps > 0.0) {
                    return Err(Error::InvalidArgument(format!("div_eps requires eps > 0, got {eps}")));
                }
                self.0.iter().zip(&other.0).map(|(a, b)| a / (b + eps)).collect()
            }
            ElementwiseOp::SqrtA => self.0.iter().map(|a| a.sqrt()).collect(),
            ElementwiseOp::SignA => self.0.iter().copied().map(sign).collect(),
        };
        let out = Self(values);
        out.ensure_finite("elementwise")?;
        Ok(out)
    }

    /// Sum of squares, accumulated left to right.
    pub fn l2_norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
