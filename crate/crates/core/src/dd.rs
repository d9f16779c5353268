//! Double-description conversion from a halfspace description `{y : a_i · y >= 0}`
//! of a pointed cone to its extremal rays.

use crate::cone::ConeError;
use crate::linalg::{normalized, rank, same_ray, RMat, RVec};

/// Extremal rays (unit norm) of `{y in R^n : a_i · y >= 0 for all rows a_i}`.
///
/// The rows must span `R^n`, i.e. the resulting cone must be pointed. Rays are returned
/// in the deterministic order produced by the incremental insertion.
pub fn rays_of_halfspaces(
    rows: &[RVec],
    n: usize,
    tol: f64,
    budget: usize,
) -> Result<Vec<RVec>, ConeError> {
    let rows: Vec<RVec> = rows
        .iter()
        .filter(|r| r.norm() > 0.0)
        .map(normalized)
        .collect();
    let zero_tol = tol.max(1e-10) * 10.0;

    // Initial simplicial cone from the first rows that raise the rank.
    let mut basis: Vec<usize> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut cand: Vec<RVec> = basis.iter().map(|&b| rows[b].clone()).collect();
        cand.push(r.clone());
        if rank(
            &RMat::from_rows(&cand.iter().map(|v| v.transpose()).collect::<Vec<_>>()),
            1e-10,
        ) == cand.len()
        {
            basis.push(i);
            if basis.len() == n {
                break;
            }
        }
    }
    if basis.len() < n {
        return Err(ConeError::NotFullDimensional);
    }
    let a_b = RMat::from_rows(
        &basis
            .iter()
            .map(|&b| rows[b].transpose())
            .collect::<Vec<_>>(),
    );
    let inv = a_b.try_inverse().ok_or(ConeError::NotFullDimensional)?;
    let mut rays: Vec<RVec> = (0..n)
        .map(|k| normalized(&inv.column(k).into_owned()))
        .collect();
    let mut processed: Vec<usize> = basis.clone();

    for i in 0..rows.len() {
        if basis.contains(&i) {
            continue;
        }
        let a = &rows[i];
        let s: Vec<f64> = rays.iter().map(|r| a.dot(r)).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&k| s[k] < -zero_tol).collect();
        if neg.is_empty() {
            processed.push(i);
            continue;
        }
        let pos: Vec<usize> = (0..rays.len()).filter(|&k| s[k] > zero_tol).collect();
        let mut next: Vec<RVec> = (0..rays.len())
            .filter(|&k| s[k] >= -zero_tol)
            .map(|k| rays[k].clone())
            .collect();
        let zero_sets: Vec<Vec<usize>> = rays
            .iter()
            .map(|r| {
                processed
                    .iter()
                    .copied()
                    .filter(|&j| rows[j].dot(r).abs() <= zero_tol)
                    .collect()
            })
            .collect();
        for &p in &pos {
            for &q in &neg {
                let common: Vec<usize> = zero_sets[p]
                    .iter()
                    .copied()
                    .filter(|j| zero_sets[q].contains(j))
                    .collect();
                if n >= 2 && common.len() + 2 < n {
                    continue;
                }
                let adjacent = if n <= 2 {
                    true
                } else {
                    let m = RMat::from_rows(
                        &common
                            .iter()
                            .map(|&j| rows[j].transpose())
                            .collect::<Vec<_>>(),
                    );
                    rank(&m, 1e-9) == n - 2
                };
                if adjacent {
                    let new = &rays[q] * s[p] - &rays[p] * s[q];
                    if new.norm() > 1e-14 {
                        let new = normalized(&new);
                        if !next.iter().any(|r| same_ray(r, &new, tol)) {
                            next.push(new);
                        }
                    }
                }
            }
        }
        if next.len() > budget {
            return Err(ConeError::GeneratorBudget { limit: budget });
        }
        rays = next;
        processed.push(i);
    }
    Ok(rays)
}
