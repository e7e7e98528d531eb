use std::sync::atomic::{AtomicU64, Ordering};

use super::ElectrodeLayout;
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

static NEGATIVE_DEGREE_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of rows so far whose degree was negative and got routed through the
/// isolated-node path during normalization.
pub fn negative_degree_events() -> u64 {
    NEGATIVE_DEGREE_EVENTS.load(Ordering::Relaxed)
}

/// 0/1 matrix with `A[i][j] = 1` iff `i != j` and the electrodes are strictly
/// closer than `radius_mm`. The diagonal is zero.
pub fn build_prior_adjacency(layout: &ElectrodeLayout, radius_mm: f64) -> Result<Tensor> {
    if !(radius_mm > 0.0) {
        return Err(Error::param(format!("radius must be positive, got {radius_mm}")));
    }
    let c = layout.len();
    let mut a = Tensor::zeros(&[c, c]);
    for i in 0..c {
        for j in 0..c {
            if i == j {
                continue;
            }
            let d = layout.distance(i, j);
            if d == 0.0 && i < j {
                log::warn!(
                    "electrodes {} and {} share a position",
                    layout.names()[i],
                    layout.names()[j]
                );
            }
            if d < radius_mm {
                a.set(&[i, j], 1.0);
            }
        }
    }
    Ok(a)
}

/// `ReLU(A + Aᵀ) + I`.
pub fn preprocess_prior(a: &Tensor) -> Result<Tensor> {
    let c = square_extent(a)?;
    Ok(Tensor::from_fn(&[c, c], |k| {
        let (i, j) = (k / c, k % c);
        let s = (a.data()[i * c + j] + a.data()[j * c + i]).max(0.0);
        s + if i == j { 1.0 } else { 0.0 }
    }))
}

fn square_extent(a: &Tensor) -> Result<usize> {
    match a.shape() {
        [r, c] if r == c => Ok(*r),
        s => Err(Error::dim(format!("adjacency must be square, got {s:?}"))),
    }
}

/// Degree used for normalization: the row sum when positive, otherwise 1
/// (zero rows are the isolated-node mask; negative rows are clamped onto the
/// same path).
fn degrees(a: &Tensor, c: usize) -> (Vec<f64>, Vec<bool>, usize) {
    let mut d = Vec::with_capacity(c);
    let mut live = Vec::with_capacity(c);
    let mut negative = 0;
    for row in a.data().chunks_exact(c) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            d.push(s);
            live.push(true);
        } else {
            if s < 0.0 {
                negative += 1;
            }
            d.push(1.0);
            live.push(false);
        }
    }
    (d, live, negative)
}

/// Symmetric normalization `D^{-1/2} A D^{-1/2}` with the isolated-node mask.
/// Returns the normalized matrix and the number of negative-degree rows.
pub fn normalize_adjacency(a: &Tensor) -> Result<(Tensor, usize)> {
    let c = square_extent(a)?;
    a.check_finite("adjacency")?;
    let (d, _, negative) = degrees(a, c);
    let r: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let out = Tensor::from_fn(&[c, c], |k| a.data()[k] * r[k / c] * r[k % c]);
    Ok((out, negative))
}

impl<'t> Var<'t> {
    /// Differentiable [`normalize_adjacency`]; recomputed on every forward
    /// pass so gradients reach the raw learnable matrix.
    pub fn normalize_adjacency(self) -> Result<Var<'t>> {
        let a = self.value();
        let (out, negative) = normalize_adjacency(&a)?;
        if negative > 0 {
            NEGATIVE_DEGREE_EVENTS.fetch_add(negative as u64, Ordering::Relaxed);
            log::debug!("{negative} adjacency rows with negative degree clamped");
        }
        let c = a.shape()[0];
        self.tape().push(
            "normalize_adjacency",
            out,
            &[self],
            Box::new(move |ctx| {
                let a = ctx.inputs[0].data();
                let g = ctx.grad.data();
                let (d, live, _) = degrees(&ctx.inputs[0], c);
                let r: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
                // dL/dr_i = Σ_j G_ij A_ij r_j + Σ_j G_ji A_ji r_j
                let mut dr = vec![0.0; c];
                for i in 0..c {
                    for j in 0..c {
                        let v = g[i * c + j] * a[i * c + j];
                        dr[i] += v * r[j];
                        dr[j] += v * r[i];
                    }
                }
                // dr_i/dA_ik = -r_i³/2 for rows on the degree path
                let row_term: Vec<f64> = (0..c)
                    .map(|i| if live[i] { -0.5 * r[i].powi(3) * dr[i] } else { 0.0 })
                    .collect();
                let grad = Tensor::from_fn(&[c, c], |k| {
                    let (i, j) = (k / c, k % c);
                    g[k] * r[i] * r[j] + row_term[i]
                });
                vec![Some(grad)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_layout(xs: &[f64]) -> ElectrodeLayout {
        ElectrodeLayout::new(
            (0..xs.len()).map(|i| format!("E{i}")).collect(),
            xs.iter().map(|&x| [x, 0.0, 0.0]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn prior_radius_rule() {
        let a = build_prior_adjacency(&line_layout(&[0.0, 10.0]), 30.0).unwrap();
        assert_eq!(a.data(), &[0.0, 1.0, 1.0, 0.0]);
        let a = build_prior_adjacency(&line_layout(&[0.0, 50.0]), 30.0).unwrap();
        assert_eq!(a.data(), &[0.0; 4]);
        let a = build_prior_adjacency(&line_layout(&[0.0, 25.0, 50.0]), 30.0).unwrap();
        assert_eq!(a.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        // strict inequality
        let a = build_prior_adjacency(&line_layout(&[0.0, 30.0]), 30.0).unwrap();
        assert_eq!(a.sum(), 0.0);
        assert!(build_prior_adjacency(&line_layout(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn preprocess_cases() {
        assert_eq!(preprocess_prior(&Tensor::zeros(&[3, 3])).unwrap(), Tensor::eye(3));
        let sym = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(preprocess_prior(&sym).unwrap().data(), &[1.0, 2.0, 2.0, 1.0]);
        let asym = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(preprocess_prior(&asym).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(preprocess_prior(&Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn normalize_identity_and_path() {
        let (n, _) = normalize_adjacency(&Tensor::eye(4)).unwrap();
        assert_eq!(n, Tensor::eye(4));

        // path 0-1-2 with self-loops: degrees 2, 3, 2
        let path = Tensor::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ])
        .unwrap();
        let (n, _) = normalize_adjacency(&path).unwrap();
        assert!((n.at(&[0, 1]) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((n.at(&[0, 1]) - 0.40825).abs() < 1e-5);
    }

    #[test]
    fn isolated_node_has_zero_row() {
        let a = Tensor::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let (n, neg) = normalize_adjacency(&a).unwrap();
        assert!(n.is_finite());
        assert_eq!(neg, 0);
        for k in 0..3 {
            assert_eq!(n.at(&[2, k]), 0.0);
            assert_eq!(n.at(&[k, 2]), 0.0);
        }
    }

    #[test]
    fn negative_rows_are_clamped_and_counted() {
        let a = Tensor::from_rows(&[vec![-2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let (n, neg) = normalize_adjacency(&a).unwrap();
        assert_eq!(neg, 1);
        assert!(n.is_finite());
    }
}
