//! Finite-difference verification of every differentiable operation and of
//! the whole network on a small configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{AdjacencySpec, ElectrodeLayout, GcnBranch};
use crate::loss::{htsr_total, LossConfig, LossKind};
use crate::net::{Model, ModelConfig};
use crate::tensor::gradcheck::{check_function, finite_difference_check, GradCheckReport};
use crate::tensor::ops::{BatchNormSettings, PoolKind, RunningStats};
use crate::tensor::{Mode, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub model: ModelConfig,
    /// Windows in the end-to-end batch.
    pub batch: usize,
    /// Coordinates probed per parameter tensor in the end-to-end check.
    pub coords_per_param: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            step: 1e-6,
            tolerance: 1e-4,
            seed: 17,
            model: ModelConfig::reduced(),
            batch: 4,
            coords_per_param: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<GradCheckReport>,
    pub all_passed: bool,
}

struct Gen(ChaCha8Rng);

impl Gen {
    fn uniform(&mut self, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| self.0.gen_range(-1.0..1.0))
    }

    /// Values bounded away from zero, for kinked functions.
    fn away(&mut self, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| {
            let m = self.0.gen_range(0.1..1.0);
            if self.0.gen_bool(0.5) { m } else { -m }
        })
    }

    fn positive(&mut self, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| self.0.gen_range(0.2..1.5))
    }
}

type Build = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>>;

/// Weighted sum against fixed pseudo-random weights, so every output
/// element influences the objective differently.
fn project<'t>(y: Var<'t>) -> Result<Var<'t>> {
    let n = y.value().len();
    let w = Tensor::from_fn(&y.shape(), |i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.45 + 0.01 * (n % 3) as f64);
    y.weighted_sum(w)
}

fn op_cases(g: &mut Gen) -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut cases: Vec<(&'static str, Vec<Tensor>, Build)> = Vec::new();
    macro_rules! case {
        ($name:expr, [$($input:expr),*], |$tape:ident, $v:ident| $body:expr) => {
            cases.push(($name, vec![$($input),*], Box::new(move |$tape: &Tape, $v: &[Var]| { let _ = $tape; $body })));
        };
    }
    case!("relu", [g.away(&[3, 5])], |t, v| project(v[0].relu()?));
    case!("elu", [g.away(&[3, 5])], |t, v| project(v[0].elu()?));
    case!("softmax_last", [g.uniform(&[2, 3, 4])], |t, v| project(v[0].softmax_last()?));
    case!("add", [g.uniform(&[2, 3]), g.uniform(&[2, 3])], |t, v| project(v[0].add(v[1])?));
    case!("sub", [g.uniform(&[2, 3]), g.uniform(&[2, 3])], |t, v| project(v[0].sub(v[1])?));
    case!("mul", [g.uniform(&[2, 3]), g.uniform(&[2, 3])], |t, v| project(v[0].mul(v[1])?));
    case!("scale", [g.uniform(&[4])], |t, v| project(v[0].scale(-1.7)?));
    let c = g.uniform(&[2, 3]);
    case!("mul_const", [g.uniform(&[2, 3])], |t, v| project(v[0].mul_const(c.clone())?));
    case!("square", [g.uniform(&[5])], |t, v| project(v[0].square()?));
    case!("sum", [g.uniform(&[2, 2])], |t, v| v[0].square()?.sum());
    case!("mean", [g.uniform(&[2, 2])], |t, v| v[0].square()?.mean());
    case!("lincomb", [g.uniform(&[1]), g.uniform(&[1])], |t, v| {
        Var::lincomb(&[(v[0].square()?, 0.3), (v[1], -2.0)])
    });
    case!("reshape", [g.uniform(&[2, 6])], |t, v| project(v[0].reshape(&[3, 4])?.square()?));
    case!("permute", [g.uniform(&[2, 3, 4])], |t, v| project(v[0].permute(&[2, 0, 1])?.square()?));
    case!("transpose2d", [g.uniform(&[3, 4])], |t, v| project(v[0].transpose2d()?.square()?));
    case!("concat_last", [g.uniform(&[2, 3]), g.uniform(&[2, 2])], |t, v| {
        project(Var::concat_last(&[v[0], v[1]])?.square()?)
    });
    case!("add_feature_bias", [g.uniform(&[2, 3, 2, 4]), g.uniform(&[3])], |t, v| {
        project(v[0].add_feature_bias(v[1])?)
    });
    case!("conv_time_same", [g.uniform(&[2, 2, 3, 9]), g.uniform(&[3, 2, 1, 4])], |t, v| {
        project(v[0].conv_time_same(v[1])?)
    });
    case!("depthwise_spatial", [g.uniform(&[2, 3, 4, 5]), g.uniform(&[3, 1, 4, 1])], |t, v| {
        project(v[0].depthwise_spatial(v[1])?)
    });
    case!("dft", [g.uniform(&[7])], |t, v| project(v[0].dft()?));
    case!("dropout", [g.uniform(&[4, 6])], |t, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        project(v[0].dropout(0.5, Mode::Train, &mut rng)?)
    });
    case!("matmul", [g.uniform(&[3, 4]), g.uniform(&[4, 2])], |t, v| project(v[0].matmul(v[1])?));
    case!("bmm", [g.uniform(&[2, 3, 4]), g.uniform(&[2, 4, 2])], |t, v| project(v[0].bmm(v[1], false)?));
    case!("bmm_transposed", [g.uniform(&[2, 3, 4]), g.uniform(&[2, 5, 4])], |t, v| {
        project(v[0].bmm(v[1], true)?)
    });
    case!("linear", [g.uniform(&[2, 3, 4]), g.uniform(&[4, 5]), g.uniform(&[5])], |t, v| {
        project(v[0].linear(v[1], v[2])?)
    });
    case!("batch_norm_train", [g.uniform(&[4, 3, 1, 5]), g.positive(&[3]), g.uniform(&[3])], |t, v| {
        let mut stats = RunningStats::new(3);
        project(v[0].batch_norm(v[1], v[2], &mut stats, Mode::Train, BatchNormSettings::default())?)
    });
    case!("batch_norm_eval", [g.uniform(&[4, 3, 1, 5]), g.positive(&[3]), g.uniform(&[3])], |t, v| {
        let mut stats = RunningStats { mean: vec![0.1, -0.2, 0.3], var: vec![0.5, 1.5, 2.0] };
        project(v[0].batch_norm(v[1], v[2], &mut stats, Mode::Eval, BatchNormSettings::default())?)
    });
    case!("avg_pool", [g.uniform(&[2, 3, 1, 9])], |t, v| project(v[0].pool_last(PoolKind::Avg, 3)?));
    case!("max_pool", [g.uniform(&[2, 3, 1, 9])], |t, v| project(v[0].pool_last(PoolKind::Max, 3)?));
    case!("normalize_adjacency", [g.uniform(&[5, 5])], |t, v| project(v[0].normalize_adjacency()?));
    case!("gcn_layer", [g.uniform(&[3, 4, 2]), g.uniform(&[4, 4]), g.uniform(&[2, 2]), g.uniform(&[2])], |t, v| {
        project(v[0].gcn_layer(v[1], v[2], v[3])?)
    });
    case!("gcn_maps", [g.uniform(&[2, 2, 4, 3]), g.uniform(&[4, 4]), g.uniform(&[2, 2]), g.uniform(&[2])], |t, v| {
        project(v[0].gcn_maps(v[1], v[2], v[3])?)
    });
    case!("graph_relayout", [g.uniform(&[2, 3, 4, 5])], |t, v| {
        project(v[0].to_graphs()?.square()?.from_graphs(2)?)
    });
    case!(
        "hgp_pyramid",
        [g.uniform(&[2, 2, 4, 3]), g.uniform(&[4, 4]), g.uniform(&[2, 2]), g.uniform(&[2]), g.uniform(&[4, 4]), g.uniform(&[2, 2]), g.uniform(&[2]), g.uniform(&[2, 2]), g.uniform(&[2])],
        |t, v| {
            let branches = [
                GcnBranch { adjacency: v[1], layers: vec![(v[2], v[3])] },
                GcnBranch { adjacency: v[4], layers: vec![(v[5], v[6]), (v[7], v[8])] },
            ];
            project(crate::graph::hgp_forward(v[0], &branches)?)
        }
    );
    let target = g.uniform(&[6, 3]);
    let tg = target.clone();
    case!("mse_loss", [g.uniform(&[6, 3])], |t, v| v[0].mse_loss(&tg));
    let tg = target.clone();
    case!("dft_l1_loss", [g.uniform(&[6, 3])], |t, v| v[0].dft_l1_loss(&tg));
    case!("reward_transform", [g.positive(&[1])], |t, v| v[0].reward_transform(0.1, 1e-6));
    for kind in LossKind::ALL {
        let tg = target.clone();
        let name = match kind {
            LossKind::Htsr => "loss_htsr",
            LossKind::Mse => "loss_mse",
            LossKind::TimeReward => "loss_time_reward",
            LossKind::TimeFreq => "loss_time_freq",
        };
        case!(name, [g.uniform(&[6, 3])], |t, v| Ok(htsr_total(v[0], &tg, &LossConfig::for_kind(kind))?.0));
    }
    cases
}

/// Largest relative error of the full network loss over sampled
/// coordinates of every trainable tensor and of the input batch.
pub fn check_model(cfg: &SuiteConfig) -> Result<f64> {
    let mut g = Gen(ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xE2E));
    let mc = cfg.model.clone();
    let montage = ElectrodeLayout::standard_10_10();
    let names: Vec<&str> = ["FC1", "FCz", "FC2", "C1", "Cz", "C2", "CP1", "CPz", "CP2", "Fz", "Pz", "C3"]
        .into_iter()
        .take(mc.channels)
        .collect();
    let prior = if names.len() == mc.channels {
        AdjacencySpec::from_layout(&montage.subset(&names)?, crate::graph::NEIGHBOR_RADIUS_MM)?.prior
    } else {
        crate::graph::preprocess_prior(&g.uniform(&[mc.channels, mc.channels]).map(f64::abs))?
    };
    let mut model = Model::new(mc.clone(), &prior, cfg.seed)?;
    // perturb so that every tensor, including zero-initialized biases and
    // the batch-norm affine terms, sits at a generic point
    let names_all: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in &names_all {
        let p = model.params.get(name)?.clone();
        let trainable = model.params.iter().any(|(n, q)| n == name && q.trainable);
        if trainable {
            let jitter = g.uniform(p.shape()).map(|v| 0.05 * v);
            model.params.set(name, p.zip_map(&jitter, |a, b| a + b))?;
        }
    }
    let x = g.uniform(&[cfg.batch, mc.channels, mc.window]);
    let y = g.uniform(&[cfg.batch, mc.joints]);
    let loss_cfg = LossConfig::default();
    let objective = |m: &Model, x: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let b = m.bind(&tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let out = m.forward(&b, tape.constant(x.clone()), Mode::Train, &mut rng)?;
        Ok(htsr_total(out.output, &y, &loss_cfg)?.0.item())
    };

    let tape = Tape::new();
    let bound = model.bind(&tape, true);
    let xv = tape.leaf(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let out = model.forward(&bound, xv, Mode::Train, &mut rng)?;
    let (loss, _) = htsr_total(out.output, &y, &loss_cfg)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<(String, Tensor)> = bound
        .iter()
        .filter(|(_, v)| v.requires_grad())
        .map(|(n, v)| (n.to_string(), grads.wrt(v)))
        .collect();
    let gx = grads.wrt(xv);
    drop(grads);

    let pick = |len: usize| -> Vec<usize> {
        let k = cfg.coords_per_param.min(len);
        (0..k).map(|i| (i * len) / k + (i * 7919) % (len / k).max(1)).collect()
    };
    let mut worst: f64 = 0.0;
    for (name, grad) in &analytic {
        let theta = model.params.get(name)?.clone();
        let coords = pick(theta.len());
        let mut probe_model = model.clone();
        let err = finite_difference_check(
            |t| {
                probe_model.params.set(name, t.clone())?;
                objective(&probe_model, &x)
            },
            &theta,
            grad,
            cfg.step,
            Some(&coords),
        )?;
        log::debug!("{name}: {err:.2e}");
        worst = worst.max(err);
    }
    let err = finite_difference_check(|t| objective(&model, t), &x, &gx, cfg.step, Some(&pick(x.len())))?;
    Ok(worst.max(err))
}

/// Every operation plus the end-to-end network, one row each.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut g = Gen(ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut rows = Vec::new();
    for (name, inputs, build) in op_cases(&mut g) {
        let err = check_function(&inputs, cfg.step, |t, v| build(t, v))?;
        rows.push(GradCheckReport::new(name, err, cfg.tolerance));
    }
    let name = format!(
        "model_end_to_end_C{}_F{}_T{}",
        cfg.model.channels, cfg.model.temporal_filters, cfg.model.window
    );
    rows.push(GradCheckReport::new(name, check_model(cfg)?, cfg.tolerance));
    let all_passed = rows.iter().all(|r| r.passed);
    Ok(SuiteReport { rows, all_passed })
}
