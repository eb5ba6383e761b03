use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::Grid;

/// Source-term control `c`: one constant, or one value per space-time node.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ControlField {
    Scalar { value: f64 },
    /// Row-major `M x N` values.
    Grid { values: Vec<f64> },
}

impl ControlField {
    pub fn scalar(value: f64) -> Self {
        ControlField::Scalar { value }
    }

    pub fn zeros(grid: &Grid) -> Self {
        ControlField::Grid {
            values: vec![0.0; grid.len()],
        }
    }

    /// Degrees of freedom.
    pub fn dofs(&self) -> usize {
        match self {
            ControlField::Scalar { .. } => 1,
            ControlField::Grid { values } => values.len(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            ControlField::Scalar { value } => core::slice::from_ref(value),
            ControlField::Grid { values } => values,
        }
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.dofs() {
            return Err(Error::shape(
                format!("{} control values", self.dofs()),
                format!("{}", values.len()),
            ));
        }
        Ok(match self {
            ControlField::Scalar { .. } => ControlField::Scalar { value: values[0] },
            ControlField::Grid { .. } => ControlField::Grid {
                values: values.to_vec(),
            },
        })
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            ControlField::Scalar { value } if value.is_finite() => Ok(()),
            ControlField::Scalar { .. } => Err(Error::NonFinite {
                location: "scalar control".into(),
            }),
            ControlField::Grid { values } => {
                if values.len() != grid.len() {
                    return Err(Error::shape(
                        format!("{}x{} control grid", grid.m(), grid.n()),
                        format!("{} values", values.len()),
                    ));
                }
                if let Some(p) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        location: format!("control node {p}"),
                    });
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn at(&self, grid_n: usize, i: usize, j: usize) -> f64 {
        match self {
            ControlField::Scalar { value } => *value,
            ControlField::Grid { values } => values[i * grid_n + j],
        }
    }

    /// Largest `|c|`.
    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
