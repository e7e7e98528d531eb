use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Checkpoint, ModelConfig, ParamStore};
use crate::error::{Error, Result};
use crate::graph::{hgp_forward, GcnBranch};
use crate::tensor::ops::{BatchNormSettings, PoolKind, RunningStats};
use crate::tensor::optim::apply_max_norm;
use crate::tensor::{Mode, Tape, Tensor, Var};

pub const OUTPUT_WEIGHT: &str = "output.weight";

/// The decoding network: configuration plus all of its tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Parameters recorded on a tape.
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t>)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Result of one forward pass.
pub struct ForwardOutput<'t> {
    /// `[B, d_J]` predictions.
    pub output: Var<'t>,
    /// `(stage, shape)` for every stage boundary.
    pub trace: Vec<(&'static str, Vec<usize>)>,
    /// Running statistics produced in train mode, to be committed with
    /// [`Model::apply_bn_updates`].
    pub bn_updates: Vec<(String, RunningStats)>,
}

fn uniform_fan_in<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

fn bn_names(prefix: &str) -> [String; 4] {
    ["gamma", "beta", "running_mean", "running_var"].map(|s| format!("{prefix}.bn.{s}"))
}

impl Model {
    /// Fresh model with fan-in uniform weights, zero biases, identity
    /// batch-norm and every pyramid adjacency set to `prior`.
    pub fn new(config: ModelConfig, prior: &Tensor, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        if prior.shape() != [c, c] {
            return Err(Error::Config(format!(
                "adjacency prior {:?} does not match {c} channels",
                prior.shape()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let (f, k, d, dk) = (
            config.temporal_filters,
            config.ltl_kernel,
            config.embed_dim(),
            config.attn_dim,
        );

        p.insert("ltl.kernels", uniform_fan_in(&[f, 1, 1, k], k, &mut rng), true)?;
        p.insert("ltl.bias", Tensor::zeros(&[f]), true)?;

        for (bi, &depth) in config.hgp_depths.iter().enumerate() {
            p.insert(format!("hgp.branch{bi}.adjacency"), prior.clone(), true)?;
            for l in 0..depth {
                let pre = format!("hgp.branch{bi}.layer{l}");
                p.insert(format!("{pre}.weight"), uniform_fan_in(&[f, f], f, &mut rng), true)?;
                p.insert(format!("{pre}.bias"), Tensor::zeros(&[f]), true)?;
            }
        }

        p.insert("gsl.depthwise", uniform_fan_in(&[f, 1, c, 1], c, &mut rng), true)?;
        insert_bn(&mut p, "gsl", f)?;

        let mut f_in = f;
        for (i, &f_out) in config.fusion_filters.iter().enumerate() {
            let pre = format!("fusion.block{i}");
            let w = uniform_fan_in(&[f_out, f_in, 1, config.fusion_kernel], f_in * config.fusion_kernel, &mut rng);
            p.insert(format!("{pre}.conv"), w, true)?;
            insert_bn(&mut p, &pre, f_out)?;
            f_in = f_out;
        }

        for h in 0..config.attn_heads {
            for proj in ["q", "k", "v"] {
                let pre = format!("gtl.head{h}.{proj}");
                p.insert(format!("{pre}.weight"), uniform_fan_in(&[d, dk], d, &mut rng), true)?;
                p.insert(format!("{pre}.bias"), Tensor::zeros(&[dk]), true)?;
            }
        }
        p.insert("gtl.out.weight", uniform_fan_in(&[d, d], d, &mut rng), true)?;
        p.insert("gtl.out.bias", Tensor::zeros(&[d]), true)?;

        let span = 2 * config.tokens();
        let mut w = uniform_fan_in(&[config.joints, d, 1, span], d * span, &mut rng);
        apply_max_norm(&mut w, config.max_norm)?;
        p.insert(OUTPUT_WEIGHT, w, true)?;
        p.insert("output.bias", Tensor::zeros(&[config.joints]), true)?;

        Ok(Model { config, params: p })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        Ok(Model {
            config: ck.config,
            params: ck.params,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }

    /// Records every parameter on `tape`; trainable ones become
    /// differentiable leaves when `differentiable` is set.
    pub fn bind<'t>(&self, tape: &'t Tape, differentiable: bool) -> Bound<'t> {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let v = if differentiable && p.trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                };
                (name.to_string(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn apply_bn_updates(&mut self, updates: Vec<(String, RunningStats)>) -> Result<()> {
        for (prefix, stats) in updates {
            let [_, _, mean, var] = bn_names(&prefix);
            self.params.set(&mean, Tensor::from_vec(stats.mean))?;
            self.params.set(&var, Tensor::from_vec(stats.var))?;
        }
        Ok(())
    }

    /// Projects the output kernels back onto the max-norm ball.
    pub fn apply_constraints(&mut self) -> Result<()> {
        let c = self.config.max_norm;
        apply_max_norm(self.params.get_mut(OUTPUT_WEIGHT)?, c)
    }

    fn bn<'t>(
        &self,
        b: &Bound<'t>,
        prefix: &str,
        x: Var<'t>,
        mode: Mode,
        updates: &mut Vec<(String, RunningStats)>,
    ) -> Result<Var<'t>> {
        let [gamma, beta, mean, var] = bn_names(prefix);
        let mut stats = RunningStats {
            mean: self.params.get(&mean)?.data().to_vec(),
            var: self.params.get(&var)?.data().to_vec(),
        };
        let y = x.batch_norm(b.get(&gamma)?, b.get(&beta)?, &mut stats, mode, BatchNormSettings::default())?;
        if mode == Mode::Train {
            updates.push((prefix.to_string(), stats));
        }
        Ok(y)
    }

    /// `[B, C, T]` → `[B, F, C, T]` temporal feature maps.
    pub fn ltl_forward<'t>(&self, b: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let s = x.shape();
        let cfg = &self.config;
        if s.len() != 3 || s[1] != cfg.channels || s[2] != cfg.window {
            return Err(Error::dim(format!(
                "input {s:?} does not match [B, {}, {}]",
                cfg.channels, cfg.window
            )));
        }
        x.reshape(&[s[0], 1, s[1], s[2]])?
            .conv_time_same(b.get("ltl.kernels")?)?
            .add_feature_bias(b.get("ltl.bias")?)
    }

    /// Pyramid over the per-time-step electrode graphs, residual included.
    pub fn hgp_forward<'t>(&self, b: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        if self.config.hgp_depths.is_empty() {
            return Ok(x);
        }
        let branches = self
            .config
            .hgp_depths
            .iter()
            .enumerate()
            .map(|(bi, &depth)| {
                let layers = (0..depth)
                    .map(|l| {
                        let pre = format!("hgp.branch{bi}.layer{l}");
                        Ok((b.get(&format!("{pre}.weight"))?, b.get(&format!("{pre}.bias"))?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GcnBranch {
                    adjacency: b.get(&format!("hgp.branch{bi}.adjacency"))?,
                    layers,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        hgp_forward(x, &branches)
    }

    /// `[B, F, C, T]` → `[B, F, 1, T / gsl_pool]`.
    pub fn gsl_forward<'t, R: Rng + ?Sized>(
        &self,
        b: &Bound<'t>,
        x: Var<'t>,
        mode: Mode,
        rng: &mut R,
        updates: &mut Vec<(String, RunningStats)>,
    ) -> Result<Var<'t>> {
        let y = x.depthwise_spatial(b.get("gsl.depthwise")?)?;
        self.bn(b, "gsl", y, mode, updates)?
            .elu()?
            .dropout(self.config.dropout, mode, rng)?
            .pool_last(PoolKind::Avg, self.config.gsl_pool)
    }

    /// `[B, F, 1, T']` → `[B, D, 1, T' / pool^blocks]`.
    pub fn fusion_forward<'t, R: Rng + ?Sized>(
        &self,
        b: &Bound<'t>,
        mut x: Var<'t>,
        mode: Mode,
        rng: &mut R,
        updates: &mut Vec<(String, RunningStats)>,
    ) -> Result<Var<'t>> {
        let cfg = &self.config;
        for i in 0..cfg.fusion_filters.len() {
            let pre = format!("fusion.block{i}");
            let y = x
                .dropout(cfg.dropout, mode, rng)?
                .conv_time_same(b.get(&format!("{pre}.conv"))?)?;
            x = self
                .bn(b, &pre, y, mode, updates)?
                .elu()?
                .pool_last(PoolKind::Max, cfg.fusion_pool)?;
        }
        x.dropout(cfg.dropout, mode, rng)
    }

    /// Multi-head self-attention over the time tokens of `[B, D, n]`, with a
    /// residual connection; output shape equals input shape.
    pub fn gtl_forward<'t>(&self, b: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let cfg = &self.config;
        let tokens = x.permute(&[0, 2, 1])?;
        let scale = 1.0 / (cfg.attn_dim as f64).sqrt();
        let mut heads = Vec::with_capacity(cfg.attn_heads);
        for h in 0..cfg.attn_heads {
            let proj = |name: &str| -> Result<Var<'t>> {
                let pre = format!("gtl.head{h}.{name}");
                tokens.linear(b.get(&format!("{pre}.weight"))?, b.get(&format!("{pre}.bias"))?)
            };
            let (q, k, v) = (proj("q")?, proj("k")?, proj("v")?);
            let attn = q.bmm(k, true)?.scale(scale)?.softmax_last()?;
            heads.push(attn.bmm(v, false)?);
        }
        let mixed = Var::concat_last(&heads)?.linear(b.get("gtl.out.weight")?, b.get("gtl.out.bias")?)?;
        tokens.add(mixed)?.permute(&[0, 2, 1])
    }

    /// Concatenates attention output and its input along time and applies
    /// the full-span output kernels: two `[B, D, n]` → `[B, d_J]`.
    pub fn output_forward<'t>(&self, b: &Bound<'t>, attended: Var<'t>, fused: Var<'t>) -> Result<Var<'t>> {
        let (sa, sf) = (attended.shape(), fused.shape());
        if sa != sf || sa.len() != 3 {
            return Err(Error::dim(format!("output layer inputs {sa:?} and {sf:?}")));
        }
        let cat = Var::concat_last(&[attended, fused])?;
        let flat = sa[1] * sa[2] * 2;
        let w = b.get(OUTPUT_WEIGHT)?;
        let joints = w.shape()[0];
        let w = w.reshape(&[joints, flat])?.transpose2d()?;
        cat.reshape(&[sa[0], flat])?.linear(w, b.get("output.bias")?)
    }

    /// Full network on a `[B, C, T]` batch.
    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        b: &Bound<'t>,
        x: Var<'t>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardOutput<'t>> {
        let mut trace = vec![("input", x.shape())];
        let mut updates = Vec::new();
        let feats = self.ltl_forward(b, x).map_err(|e| e.in_stage("ltl"))?;
        trace.push(("ltl", feats.shape()));
        let feats = self.hgp_forward(b, feats).map_err(|e| e.in_stage("hgp"))?;
        trace.push(("hgp", feats.shape()));
        let spatial = self
            .gsl_forward(b, feats, mode, rng, &mut updates)
            .map_err(|e| e.in_stage("gsl"))?;
        trace.push(("gsl", spatial.shape()));
        let fused = self
            .fusion_forward(b, spatial, mode, rng, &mut updates)
            .map_err(|e| e.in_stage("fusion"))?;
        trace.push(("fusion", fused.shape()));
        let s = fused.shape();
        let fused = fused.reshape(&[s[0], s[1], s[3]]).map_err(|e| e.in_stage("fusion"))?;
        let attended = self.gtl_forward(b, fused).map_err(|e| e.in_stage("gtl"))?;
        trace.push(("gtl", attended.shape()));
        trace.push(("concat", vec![s[0], s[1], 2 * s[3]]));
        let output = self
            .output_forward(b, attended, fused)
            .map_err(|e| e.in_stage("output"))?;
        trace.push(("output", output.shape()));
        debug_assert_eq!(trace, self.expected_trace(x.shape()[0]));
        Ok(ForwardOutput {
            output,
            trace,
            bn_updates: updates,
        })
    }

    /// The stage shapes a batch of `batch` windows must produce.
    pub fn expected_trace(&self, batch: usize) -> Vec<(&'static str, Vec<usize>)> {
        let c = &self.config;
        let (f, t, d, n) = (c.temporal_filters, c.window, c.embed_dim(), c.tokens());
        vec![
            ("input", vec![batch, c.channels, t]),
            ("ltl", vec![batch, f, c.channels, t]),
            ("hgp", vec![batch, f, c.channels, t]),
            ("gsl", vec![batch, f, 1, t / c.gsl_pool]),
            ("fusion", vec![batch, d, 1, n]),
            ("gtl", vec![batch, d, n]),
            ("concat", vec![batch, d, 2 * n]),
            ("output", vec![batch, c.joints]),
        ]
    }

    /// Eval-mode predictions for `[B, C, T]` windows, processed in chunks of
    /// at most `chunk` windows.
    pub fn predict(&self, x: &Tensor, chunk: usize) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 {
            return Err(Error::dim(format!("predict expects [B, C, T], got {s:?}")));
        }
        let per = s[1] * s[2];
        let mut out = Vec::with_capacity(s[0] * self.config.joints);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for part in x.data().chunks(per * chunk.max(1)) {
            let bsz = part.len() / per;
            let tape = Tape::new();
            let b = self.bind(&tape, false);
            let xin = tape.constant(Tensor::new(&[bsz, s[1], s[2]], part.to_vec())?);
            let y = self.forward(&b, xin, Mode::Eval, &mut rng)?;
            out.extend_from_slice(y.output.value().data());
        }
        Tensor::new(&[s[0], self.config.joints], out)
    }
}

fn insert_bn(p: &mut ParamStore, prefix: &str, f: usize) -> Result<()> {
    let [gamma, beta, mean, var] = bn_names(prefix);
    p.insert(gamma, Tensor::full(&[f], 1.0), true)?;
    p.insert(beta, Tensor::zeros(&[f]), true)?;
    p.insert(mean, Tensor::zeros(&[f]), false)?;
    p.insert(var, Tensor::full(&[f], 1.0), false)?;
    Ok(())
}
