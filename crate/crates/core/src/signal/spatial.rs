use super::filter::matrix_dims;
use crate::error::{Error, Result};
use crate::graph::ElectrodeLayout;
use crate::tensor::Tensor;

/// Subtracts the across-channel mean at every time point.
pub fn common_average_reference(x: &Tensor) -> Result<Tensor> {
    let [c, t] = matrix_dims(x)?;
    if c < 2 {
        return Err(Error::param(format!("common average needs at least 2 channels, got {c}")));
    }
    let mut mean = vec![0.0; t];
    for row in x.data().chunks_exact(t) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= c as f64;
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(t) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok(out)
}

/// Neighbour lists among `channels`, looked up in `layout`.
pub fn laplacian_neighbors(
    channels: &[String],
    layout: &ElectrodeLayout,
    radius_mm: f64,
) -> Result<Vec<Vec<usize>>> {
    let sub = layout.subset(channels)?;
    Ok((0..sub.len()).map(|i| sub.neighbors(i, radius_mm)).collect())
}

/// Each channel minus the mean of its neighbours within `radius_mm`;
/// channels without neighbours are left as they are.
pub fn laplacian_filter(
    x: &Tensor,
    channels: &[String],
    layout: &ElectrodeLayout,
    radius_mm: f64,
) -> Result<Tensor> {
    let [c, t] = matrix_dims(x)?;
    if channels.len() != c {
        return Err(Error::config(format!("{} channel names for {c} rows", channels.len())));
    }
    let neighbors = laplacian_neighbors(channels, layout, radius_mm)?;
    let src = x.data();
    let mut out = x.clone();
    for (k, nb) in neighbors.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let n = nb.len() as f64;
        let own = &src[k * t..(k + 1) * t];
        let dst = &mut out.data_mut()[k * t..(k + 1) * t];
        dst.fill(0.0);
        for &l in nb {
            for ((d, v), o) in dst.iter_mut().zip(&src[l * t..(l + 1) * t]).zip(own) {
                *d += o - v;
            }
        }
        dst.iter_mut().for_each(|d| *d /= n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn car_cases() {
        let x = Tensor::full(&[3, 4], 2.0);
        assert!(common_average_reference(&x).unwrap().data().iter().all(|&v| v == 0.0));
        let x = Tensor::from_rows(&[vec![1.0, -2.0], vec![-1.0, 2.0]]).unwrap();
        assert_eq!(common_average_reference(&x).unwrap(), x);
        assert!(common_average_reference(&Tensor::zeros(&[1, 4])).is_err());
    }

    fn line_layout() -> ElectrodeLayout {
        // 1 and 2 flank 0 at 20 mm; 3 is isolated
        ElectrodeLayout::new(
            names(&["T", "A", "B", "Far"]),
            vec![[0.0, 0.0, 0.0], [20.0, 0.0, 0.0], [-20.0, 0.0, 0.0], [0.0, 100.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn laplacian_hand_values() {
        let ch = names(&["T", "A", "B", "Far"]);
        let x = Tensor::from_rows(&[vec![3.0], vec![1.0], vec![1.0], vec![7.0]]).unwrap();
        let y = laplacian_filter(&x, &ch, &line_layout(), 30.0).unwrap();
        assert_eq!(y.at(&[0, 0]), 2.0);
        assert_eq!(y.at(&[3, 0]), 7.0);
    }

    #[test]
    fn laplacian_constant_field_vanishes() {
        let layout = ElectrodeLayout::standard_10_10();
        let x = Tensor::full(&[59, 3], 5.0);
        let y = laplacian_filter(&x, layout.names(), &layout, 30.0).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_unknown_channel() {
        let x = Tensor::zeros(&[2, 3]);
        let r = laplacian_filter(&x, &names(&["T", "Nope"]), &line_layout(), 30.0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
