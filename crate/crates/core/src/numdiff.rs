//! Central finite differences used across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Step `base * max(1, |v|)`.
#[inline]
pub fn scaled_step(base: f64, v: f64) -> f64 {
    base * v.abs().max(1.0)
}

/// Central-difference gradient of a scalar map, step `base * max(1, |x_i|)` per coordinate.
pub fn gradient<F>(f: F, x: &DVector<f64>, base: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    let mut xs = x.clone();
    for i in 0..x.len() {
        let h = scaled_step(base, x[i]);
        xs[i] = x[i] + h;
        let fp = f(&xs)?;
        xs[i] = x[i] - h;
        let fm = f(&xs)?;
        xs[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Jacobian of a vector map, step `base * max(1, ‖x‖∞)` for every column.
pub fn jacobian<F>(f: F, x: &DVector<f64>, base: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let h = scaled_step(base, x.amax());
    let mut cols = Vec::with_capacity(x.len());
    let mut xs = x.clone();
    for i in 0..x.len() {
        xs[i] = x[i] + h;
        let fp = f(&xs)?;
        xs[i] = x[i] - h;
        let fm = f(&xs)?;
        xs[i] = x[i];
        cols.push((fp - fm) / (2.0 * h));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    let mut jac = DMatrix::zeros(rows, x.len());
    for (j, c) in cols.into_iter().enumerate() {
        jac.set_column(j, &c);
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_quadratic() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let g = gradient(|v| Ok(v[0] * v[0] + 3.0 * v[0] * v[1]), &x, 1e-6).unwrap();
        assert!((g[0] - (2.0 - 6.0)).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn jacobian_of_affine_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let x = DVector::from_vec(vec![0.3, 0.2, -0.7]);
        let j = jacobian(|v| Ok(&a * v), &x, 1e-6).unwrap();
        assert!((j - a).amax() < 1e-9);
    }
}
