use std::io::Write;

use crate::error::{Error, Result};
use crate::net::Model;
use crate::tensor::{Mode, Tape, Tensor};

/// Gradient-magnitude attribution of the model output to its input.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub channels: Vec<String>,
    /// `[C, T]` mean over windows of `|∂(Σ outputs)/∂X|`.
    pub raw: Tensor,
    /// Temporal mean of `raw` per channel.
    pub scores: Vec<f64>,
    /// `scores` divided by their sum; all zero when every score is zero.
    pub normalized: Vec<f64>,
    pub windows: usize,
}

/// Saliency over `[C, T]` windows, processed `chunk` windows at a time.
/// The joint outputs are summed before differentiating.
pub fn saliency_map(model: &Model, windows: &[Tensor], channels: &[String], chunk: usize) -> Result<SaliencyMap> {
    let first = windows
        .first()
        .ok_or_else(|| Error::param("saliency needs at least one window"))?;
    let s = first.shape().to_vec();
    if s.len() != 2 || windows.iter().any(|w| w.shape() != s.as_slice()) {
        return Err(Error::dim(format!("saliency windows must share one [C, T] shape, first is {s:?}")));
    }
    if channels.len() != s[0] {
        return Err(Error::dim(format!("{} channel names for {} channels", channels.len(), s[0])));
    }
    let (b, c, t) = (windows.len(), s[0], s[1]);
    let per = c * t;
    let mut acc = vec![0.0; per];
    for part in windows.chunks(chunk.max(1)) {
        let n = part.len();
        let data: Vec<f64> = part.iter().flat_map(|w| w.data().iter().copied()).collect();
        let tape = Tape::new();
        let bound = model.bind(&tape, false);
        let x = tape.leaf(Tensor::new(&[n, c, t], data)?);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let y = model.forward(&bound, x, Mode::Eval, &mut rng)?.output;
        let total = y.sum()?;
        let g = tape.backward(total)?.wrt(x);
        for win in g.data().chunks_exact(per) {
            acc.iter_mut().zip(win).for_each(|(a, v)| *a += v.abs());
        }
    }
    acc.iter_mut().for_each(|a| *a /= b as f64);
    let scores: Vec<f64> = acc.chunks_exact(t).map(|row| row.iter().sum::<f64>() / t as f64).collect();
    let total: f64 = scores.iter().sum();
    let normalized = if total > 0.0 {
        scores.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; c]
    };
    Ok(SaliencyMap {
        channels: channels.to_vec(),
        raw: Tensor::new(&[c, t], acc)?,
        scores,
        normalized,
        windows: b,
    })
}

impl SaliencyMap {
    /// Mean of per-session maps, each rescaled to unit total first so every
    /// session weighs the same.
    pub fn average(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
        let first = maps.first().ok_or_else(|| Error::param("nothing to average"))?;
        if maps.iter().any(|m| m.channels != first.channels || m.raw.shape() != first.raw.shape()) {
            return Err(Error::dim("saliency maps disagree on channels or window shape"));
        }
        let n = maps.len() as f64;
        let mut raw = vec![0.0; first.raw.len()];
        let mut scores = vec![0.0; first.scores.len()];
        for m in maps {
            let total: f64 = m.scores.iter().sum();
            if total > 0.0 {
                raw.iter_mut().zip(m.raw.data()).for_each(|(a, v)| *a += v / total / n);
            }
            scores.iter_mut().zip(&m.normalized).for_each(|(a, v)| *a += v / n);
        }
        let total: f64 = scores.iter().sum();
        let normalized = scores.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
        Ok(SaliencyMap {
            channels: first.channels.clone(),
            raw: Tensor::new(first.raw.shape(), raw)?,
            scores,
            normalized,
            windows: maps.iter().map(|m| m.windows).sum(),
        })
    }

    /// Channel indices by decreasing score; ties keep channel order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    pub fn top_channels(&self, k: usize) -> Vec<&str> {
        self.ranking().into_iter().take(k).map(|i| self.channels[i].as_str()).collect()
    }

    /// `channel,score,normalized_score`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["channel", "score", "normalized_score"])?;
        for ((ch, s), n) in self.channels.iter().zip(&self.scores).zip(&self.normalized) {
            w.write_record([ch.clone(), s.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::preprocess_prior;
    use crate::net::{ModelConfig, OUTPUT_WEIGHT};

    fn model(seed: u64) -> Model {
        let cfg = ModelConfig::reduced();
        let prior = preprocess_prior(&Tensor::zeros(&[cfg.channels, cfg.channels])).unwrap();
        Model::new(cfg, &prior, seed).unwrap()
    }

    fn names() -> Vec<String> {
        (0..8).map(|i| format!("ch{i}")).collect()
    }

    fn batch() -> Vec<Tensor> {
        (0..3)
            .map(|w| Tensor::from_fn(&[8, 81], |i| (((i + 648 * w) * 7919) % 1000) as f64 / 500.0 - 1.0))
            .collect()
    }

    #[test]
    fn single_channel_model_ranks_that_channel_first() {
        let mut m = model(4);
        let mut w = m.params.get("gsl.depthwise").unwrap().clone();
        let c = 8;
        let k = 5;
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            if i % c != k {
                *v = 0.0;
            }
        }
        m.params.set("gsl.depthwise", w).unwrap();
        let s = saliency_map(&m, &batch(), &names(), 2).unwrap();
        assert_eq!(s.ranking()[0], k);
        assert!(s.scores.iter().enumerate().all(|(i, &v)| i == k || v < s.scores[k]));
        assert!((s.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_output_layer_gives_zero_map() {
        let mut m = model(4);
        let shape = m.params.get(OUTPUT_WEIGHT).unwrap().shape().to_vec();
        m.params.set(OUTPUT_WEIGHT, Tensor::zeros(&shape)).unwrap();
        let s = saliency_map(&m, &batch(), &names(), 3).unwrap();
        assert!(s.scores.iter().all(|&v| v == 0.0));
        assert!(s.normalized.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_does_not_change_saliency() {
        let m = model(6);
        let mut shifted = m.clone();
        let bias = shifted.params.get("output.bias").unwrap().map(|v| v + 3.0);
        shifted.params.set("output.bias", bias).unwrap();
        let a = saliency_map(&m, &batch(), &names(), 3).unwrap();
        let b = saliency_map(&shifted, &batch(), &names(), 1).unwrap();
        assert!(a.raw.max_abs_diff(&b.raw) < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(saliency_map(&model(0), &[], &names(), 1).is_err());
    }

    #[test]
    fn average_weighs_sessions_equally() {
        let m = model(2);
        let a = saliency_map(&m, &batch(), &names(), 2).unwrap();
        let mut loud = m.clone();
        let w = loud.params.get(OUTPUT_WEIGHT).unwrap().map(|v| v * 50.0);
        loud.params.set(OUTPUT_WEIGHT, w).unwrap();
        let b = saliency_map(&loud, &batch(), &names(), 2).unwrap();
        let avg = SaliencyMap::average(&[a.clone(), b]).unwrap();
        for (x, y) in avg.normalized.iter().zip(&a.normalized) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(avg.windows, 2 * a.windows);
        assert!(SaliencyMap::average(&[]).is_err());
    }
}
