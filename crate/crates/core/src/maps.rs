//! Finite families of Lipschitz self-maps of `R^d`.
//!
//! Affine maps `x -> A x + b` get their Lipschitz constant (the operator
//! 2-norm of `A`) computed once at construction. Arbitrary maps can join a
//! family through [`LipschitzMap`] with a caller-supplied constant.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A map on `R^d` with a known Lipschitz constant in the Euclidean norm.
pub trait LipschitzMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Writes `f(x)` into `out`. Both slices have length [`dim`](Self::dim).
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn lipschitz(&self) -> f64;
}

/// `f(x) = A x + b` with `A` stored row-major.
#[derive(Clone, PartialEq)]
pub struct AffineMap {
    matrix: Vec<f64>,
    offset: Vec<f64>,
    lipschitz: f64,
}

impl AffineMap {
    /// Builds the map from a row-major `d x d` matrix and a length-`d` offset.
    pub fn new(matrix: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let d = offset.len();
        if d == 0 {
            return Err(Error::invalid("affine map needs dimension >= 1"));
        }
        if matrix.len() != d * d {
            return Err(Error::invalid(format!(
                "matrix has {} entries, expected {} for dimension {d}",
                matrix.len(),
                d * d
            )));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("offset has non-finite entries"));
        }
        let lipschitz = lipschitz_constant(&matrix, d)?;
        Ok(Self {
            matrix,
            offset,
            lipschitz,
        })
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Checked application returning a fresh vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.offset.len() {
            return Err(Error::invalid(format!(
                "point has dimension {}, map has dimension {}",
                x.len(),
                self.offset.len()
            )));
        }
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }
}

impl LipschitzMap for AffineMap {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    #[inline]
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.offset.len();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        if d == 2 {
            let m = &self.matrix;
            out[0] = m[0] * x[0] + m[1] * x[1] + self.offset[0];
            out[1] = m[2] * x[0] + m[3] * x[1] + self.offset[1];
            return;
        }
        for (row, o) in self.matrix.chunks_exact(d).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        for (o, b) in out.iter_mut().zip(&self.offset) {
            *o += b;
        }
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl fmt::Debug for AffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineMap")
            .field("matrix", &self.matrix)
            .field("offset", &self.offset)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Operator 2-norm (largest singular value) of a row-major `d x d` matrix.
///
/// Uses the closed form for `d <= 2` and an SVD otherwise.
pub fn lipschitz_constant(matrix: &[f64], d: usize) -> Result<f64> {
    if matrix.len() != d * d {
        return Err(Error::invalid("matrix is not square"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(match d {
        1 => matrix[0].abs(),
        2 => {
            let (a, b, c, e) = (matrix[0], matrix[1], matrix[2], matrix[3]);
            0.5 * ((a + e).hypot(c - b) + (a - e).hypot(b + c))
        }
        _ => {
            let m = DMatrix::from_row_slice(d, d, matrix);
            m.singular_values().max()
        }
    })
}

type PointFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A map given as a closure together with a caller-certified Lipschitz constant.
#[derive(Clone)]
pub struct FnMap {
    dim: usize,
    lipschitz: f64,
    f: Arc<PointFn>,
}

impl FnMap {
    pub fn new(
        dim: usize,
        lipschitz: f64,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("map needs dimension >= 1"));
        }
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::invalid("Lipschitz constant must be finite and >= 0"));
        }
        Ok(Self {
            dim,
            lipschitz,
            f: Arc::new(f),
        })
    }
}

impl LipschitzMap for FnMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl fmt::Debug for FnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMap")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

/// The family `f_1, ..., f_m`. Public indices are 1-based.
#[derive(Clone, Debug)]
pub struct MapFamily {
    maps: Vec<Arc<dyn LipschitzMap>>,
    dimension: usize,
}

impl MapFamily {
    pub fn new(maps: Vec<Arc<dyn LipschitzMap>>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("map family must contain at least one map"))?;
        let dimension = first.dim();
        if let Some(bad) = maps.iter().position(|m| m.dim() != dimension) {
            return Err(Error::invalid(format!(
                "map {} has dimension {}, family dimension is {dimension}",
                bad + 1,
                maps[bad].dim()
            )));
        }
        Ok(Self { maps, dimension })
    }

    pub fn from_affine(maps: Vec<AffineMap>) -> Result<Self> {
        Self::new(
            maps.into_iter()
                .map(|m| Arc::new(m) as Arc<dyn LipschitzMap>)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Map `f_j` for `j` in `1..=m`.
    pub fn get(&self, j: usize) -> Option<&dyn LipschitzMap> {
        j.checked_sub(1)
            .and_then(|i| self.maps.get(i))
            .map(|m| m.as_ref())
    }

    /// Zero-based iteration over the maps.
    pub fn iter(&self) -> impl Iterator<Item = &dyn LipschitzMap> {
        self.maps.iter().map(|m| m.as_ref())
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.iter().map(|m| m.lipschitz()).collect()
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.iter().map(|m| m.lipschitz()).fold(0.0, f64::max)
    }

    /// Radius `R` of an origin-centred ball that every map sends into itself,
    /// `R = max_j |f_j(0)| / (1 - L_max)`, or `None` when some `L_j >= 1`.
    pub fn absorbing_radius(&self) -> Option<f64> {
        let l_max = self.max_lipschitz();
        if l_max >= 1.0 {
            return None;
        }
        let origin = vec![0.0; self.dimension];
        let mut image = vec![0.0; self.dimension];
        let reach = self
            .iter()
            .map(|m| {
                m.apply_into(&origin, &mut image);
                norm(&image)
            })
            .fold(0.0, f64::max);
        Some(reach / (1.0 - l_max))
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    if x.len() == 2 {
        return x[0].hypot(x[1]);
    }
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == 2 {
        return (x[0] - y[0]).hypot(x[1] - y[1]);
    }
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// The four-map maple-leaf family used throughout the examples and tests.
pub fn maple_leaf() -> MapFamily {
    let spec: [([f64; 4], [f64; 2]); 4] = [
        ([0.8, 0.0, 0.0, 0.8], [0.1, 0.04]),
        ([0.5, 0.0, 0.0, 0.5], [0.25, 0.4]),
        ([0.355, 0.355, 0.355, -0.355], [0.266, 0.078]),
        ([0.355, -0.355, -0.355, -0.355], [0.378, 0.434]),
    ];
    MapFamily::from_affine(
        spec.iter()
            .map(|(a, b)| AffineMap::new(a.to_vec(), b.to_vec()).expect("valid map"))
            .collect(),
    )
    .expect("valid family")
}
