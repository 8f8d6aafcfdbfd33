//! Hilbert projective metric on the positive orthant.
//!
//! For `x, y` in the interior of the cone, `d_H(x, y) = log(M / m)` with
//! `M = max_i x_i / y_i` and `m = min_i x_i / y_i`. The metric only sees rays,
//! so `d_H(a x, b y) = d_H(x, y)` for every `a, b > 0`.
//!
//! A nonnegative matrix acts as a positive linear map. Its projective
//! diameter is the largest distance between two images, attained on pairs of
//! columns, and its Birkhoff contraction ratio is `tanh(diameter / 4)`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Strictly positive finite vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveVector(DVector<f64>);

impl PositiveVector {
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("positive vector must have dimension >= 1"));
        }
        if let Some((i, v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::domain(format!(
                "entry {i} = {v} is not strictly positive and finite"
            )));
        }
        Ok(Self(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(entries))
    }

    pub fn ones(n: usize) -> Self {
        Self(DVector::from_element(n.max(1), 1.0))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Nonnegative matrix, viewed as a linear map on the cone.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveMatrix {
    entries: DMatrix<f64>,
    strict: bool,
}

impl PositiveMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::domain("empty matrix"));
        }
        if entries.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("matrix entries must be finite and nonnegative"));
        }
        let strict = entries.iter().all(|v| *v > 0.0);
        Ok(Self { entries, strict })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::dims("ragged rows"));
        }
        Self::new(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// True iff every entry is strictly positive.
    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `E x`.
    pub fn apply(&self, x: &PositiveVector) -> Result<PositiveVector> {
        if x.len() != self.entries.ncols() {
            return Err(Error::dims(format!(
                "matrix has {} columns, vector has {} entries",
                self.entries.ncols(),
                x.len()
            )));
        }
        PositiveVector::new(&self.entries * x.as_vector())
    }

    /// `Eᵀ x`.
    pub fn apply_adjoint(&self, x: &PositiveVector) -> Result<PositiveVector> {
        if x.len() != self.entries.nrows() {
            return Err(Error::dims(format!(
                "matrix has {} rows, vector has {} entries",
                self.entries.nrows(),
                x.len()
            )));
        }
        PositiveVector::new(self.entries.tr_mul(x.as_vector()))
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
            strict: self.strict,
        }
    }
}

/// Projective diameter: finite, or the sentinel for maps whose image touches the cone boundary.
#[derive(Clone, Copy, Debug)]
pub enum Diameter {
    Finite(f64),
    Infinite,
}

impl Diameter {
    pub fn is_finite(&self) -> bool {
        matches!(self, Diameter::Finite(_))
    }

    /// The finite value, or `f64::INFINITY` for the sentinel.
    pub fn value(&self) -> f64 {
        match self {
            Diameter::Finite(d) => *d,
            Diameter::Infinite => f64::INFINITY,
        }
    }
}

impl PartialEq for Diameter {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Diameter {}

impl PartialOrd for Diameter {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Diameter {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Diameter::Finite(a), Diameter::Finite(b)) => a.total_cmp(b),
            (Diameter::Finite(_), Diameter::Infinite) => Ordering::Less,
            (Diameter::Infinite, Diameter::Finite(_)) => Ordering::Greater,
            (Diameter::Infinite, Diameter::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Diameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diameter::Finite(d) => write!(f, "{d}"),
            Diameter::Infinite => f.write_str("inf"),
        }
    }
}

/// Hilbert projective distance between two strictly positive vectors.
pub fn hilbert_distance(x: &PositiveVector, y: &PositiveVector) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(log_ratio_spread(
        x.as_vector()
            .iter()
            .zip(y.as_vector().iter())
            .map(|(a, b)| a.ln() - b.ln()),
    ))
}

/// Hilbert distance between two vectors given by their entrywise logarithms.
///
/// Only the entries where both logs are finite take part, which is how
/// potentials restricted to a marginal's support are compared.
pub fn hilbert_distance_log(log_x: &[f64], log_y: &[f64]) -> f64 {
    log_ratio_spread(
        log_x
            .iter()
            .zip(log_y)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| a - b),
    )
}

fn log_ratio_spread(diffs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = diffs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    });
    if hi < lo {
        0.0
    } else {
        hi - lo
    }
}

/// Projective diameter of a nonnegative matrix.
///
/// Rows that are identically zero are dropped: the image then lives in the
/// face spanned by the remaining coordinates. Any other zero entry makes the
/// diameter infinite, since some image can be pushed onto the boundary of
/// that face while another stays in its interior.
pub fn projective_diameter(e: &PositiveMatrix) -> Result<Diameter> {
    let m = e.matrix();
    if let Some(j) = (0..m.ncols()).find(|&j| m.column(j).iter().all(|v| *v == 0.0)) {
        return Err(Error::domain(format!("column {j} is identically zero")));
    }
    let rows: Vec<usize> = (0..m.nrows())
        .filter(|&i| m.row(i).iter().any(|v| *v > 0.0))
        .collect();
    if rows
        .iter()
        .any(|&i| m.row(i).iter().any(|v| *v == 0.0))
    {
        return Ok(Diameter::Infinite);
    }

    let logs = DMatrix::from_fn(rows.len(), m.ncols(), |r, j| m[(rows[r], j)].ln());
    let mut diameter = 0.0f64;
    for j in 0..logs.ncols() {
        for k in (j + 1)..logs.ncols() {
            let spread = log_ratio_spread(
                logs.column(j)
                    .iter()
                    .zip(logs.column(k).iter())
                    .map(|(a, b)| a - b),
            );
            diameter = diameter.max(spread);
        }
    }
    Ok(Diameter::Finite(diameter))
}

/// Birkhoff contraction ratio `tanh(Δ/4)`; equal to 1 for an infinite diameter.
pub fn birkhoff_ratio(e: &PositiveMatrix) -> Result<f64> {
    Ok(ratio_from_diameter(projective_diameter(e)?))
}

pub fn ratio_from_diameter(d: Diameter) -> f64 {
    match d {
        Diameter::Finite(d) => (d / 4.0).tanh(),
        Diameter::Infinite => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pv(x: &[f64]) -> PositiveVector {
        PositiveVector::from_slice(x).unwrap()
    }

    fn pm(rows: &[&[f64]]) -> PositiveMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        PositiveMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_abs_diff_eq!(hilbert_distance(&pv(&[1., 1.]), &pv(&[3., 3.])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            hilbert_distance(&pv(&[1., 2.]), &pv(&[2., 1.])).unwrap(),
            4f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            hilbert_distance(&pv(&[2., 2.]), &pv(&[1., 2.])).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(
            hilbert_distance(&pv(&[1., 2.]), &pv(&[1., 2., 3.])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(PositiveVector::from_slice(&[1., 0.]).is_err());
        assert!(PositiveVector::from_slice(&[1., -2.]).is_err());
        assert!(PositiveVector::from_slice(&[]).is_err());
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(projective_diameter(&pm(&[&[1., 1.], &[1., 1.]])).unwrap(), Diameter::Finite(0.0));
        let d = projective_diameter(&pm(&[&[2., 1.], &[1., 2.]])).unwrap();
        assert_abs_diff_eq!(d.value(), 4f64.ln(), epsilon = 1e-15);
        assert_eq!(projective_diameter(&pm(&[&[1., 0.], &[1., 1.]])).unwrap(), Diameter::Infinite);
    }

    #[test]
    fn zero_column_is_rejected() {
        let e = pm(&[&[1., 0.], &[1., 0.]]);
        assert!(matches!(projective_diameter(&e), Err(Error::Domain(_))));
        assert!(birkhoff_ratio(&e).is_err());
    }

    #[test]
    fn zero_rows_are_dropped() {
        let e = pm(&[&[2., 1.], &[0., 0.], &[1., 2.]]);
        assert_abs_diff_eq!(projective_diameter(&e).unwrap().value(), 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(birkhoff_ratio(&pm(&[&[1., 1.], &[1., 1.]])).unwrap(), 0.0);
        assert_abs_diff_eq!(
            birkhoff_ratio(&pm(&[&[2., 1.], &[1., 2.]])).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(birkhoff_ratio(&pm(&[&[1., 0.], &[1., 1.]])).unwrap(), 1.0);
    }

    #[test]
    fn sentinel_ordering_is_total() {
        let mut v = vec![Diameter::Infinite, Diameter::Finite(3.0), Diameter::Finite(0.5)];
        v.sort();
        assert_eq!(v, vec![Diameter::Finite(0.5), Diameter::Finite(3.0), Diameter::Infinite]);
        assert!(Diameter::Finite(f64::MAX) < Diameter::Infinite);
    }

    #[test]
    fn log_distance_ignores_masked_entries() {
        let a = [0.0, f64::NEG_INFINITY, 2f64.ln()];
        let b = [0.0, f64::NEG_INFINITY, 0.0];
        assert_abs_diff_eq!(hilbert_distance_log(&a, &b), 2f64.ln(), epsilon = 1e-15);
    }
}
