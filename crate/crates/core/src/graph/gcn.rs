use std::io::Write;

use super::{build_prior_adjacency, preprocess_prior, ElectrodeLayout};
use crate::error::{Error, Result};
use crate::tensor::ops::gemm;
use crate::tensor::{Tensor, Var};

/// Fixed prior plus the learnable matrix it initializes.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencySpec {
    pub prior: Tensor,
    pub learnable: Tensor,
}

impl AdjacencySpec {
    pub fn from_layout(layout: &ElectrodeLayout, radius_mm: f64) -> Result<Self> {
        let prior = preprocess_prior(&build_prior_adjacency(layout, radius_mm)?)?;
        Ok(AdjacencySpec {
            learnable: prior.clone(),
            prior,
        })
    }
}

/// One pyramid branch: its own raw adjacency and `depth` stacked layers of
/// `(W: [F, F], b: [F])`.
#[derive(Clone, Debug)]
pub struct GcnBranch<'t> {
    pub adjacency: Var<'t>,
    pub layers: Vec<(Var<'t>, Var<'t>)>,
}

impl GcnBranch<'_> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// `[N, C, F]` → node-major `[C, N·F]`.
fn node_major(h: &[f64], n: usize, c: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    for g in 0..n {
        for node in 0..c {
            let src = &h[(g * c + node) * f..(g * c + node + 1) * f];
            out[(node * n + g) * f..(node * n + g + 1) * f].copy_from_slice(src);
        }
    }
    out
}

/// Inverse of [`node_major`].
fn graph_major(h: &[f64], n: usize, c: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    for node in 0..c {
        for g in 0..n {
            let src = &h[(node * n + g) * f..(node * n + g + 1) * f];
            out[(g * c + node) * f..(g * c + node + 1) * f].copy_from_slice(src);
        }
    }
    out
}

impl<'t> Var<'t> {
    /// Graph convolution `ReLU(Â·H·W + b)` applied to every graph of a
    /// `[N, C, F]` stack with shared `Â: [C, C]`, `W: [F, F]`, `b: [F]`.
    pub fn gcn_layer(self, adj: Var<'t>, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        let (h, a, w, b) = (self.value(), adj.value(), weight.value(), bias.value());
        let sh = h.shape().to_vec();
        if sh.len() != 3
            || a.shape() != [sh[1], sh[1]]
            || w.shape() != [sh[2], sh[2]]
            || b.shape() != [sh[2]]
        {
            return Err(Error::dim(format!(
                "gcn_layer: H {sh:?}, Â {:?}, W {:?}, b {:?}",
                a.shape(),
                w.shape(),
                b.shape()
            )));
        }
        let (n, c, f) = (sh[0], sh[1], sh[2]);
        let nf = n * f;
        let hn = node_major(h.data(), n, c, f);
        let mut p = vec![0.0; c * nf];
        gemm(c, c, nf, a.data(), (c, 1), &hn, (nf, 1), 0.0, &mut p, (nf, 1));
        drop(hn);
        let rows = c * n;
        let mut z = Vec::with_capacity(rows * f);
        for _ in 0..rows {
            z.extend_from_slice(b.data());
        }
        gemm(rows, f, f, &p, (f, 1), w.data(), (f, 1), 1.0, &mut z, (f, 1));
        for v in &mut z {
            *v = v.max(0.0);
        }
        let out = Tensor::new(&sh, graph_major(&z, n, c, f))?;
        self.tape().push(
            "gcn_layer",
            out,
            &[self, adj, weight, bias],
            Box::new(move |ctx| {
                let (h, a, w) = (&ctx.inputs[0], &ctx.inputs[1], &ctx.inputs[2]);
                let y = node_major(ctx.out.data(), n, c, f);
                let mut gz = node_major(ctx.grad.data(), n, c, f);
                for (g, yv) in gz.iter_mut().zip(&y) {
                    if *yv <= 0.0 {
                        *g = 0.0;
                    }
                }
                drop(y);
                let gw = ctx.needs[2].then(|| {
                    let mut d = vec![0.0; f * f];
                    gemm(f, rows, f, &p, (1, f), &gz, (f, 1), 0.0, &mut d, (f, 1));
                    Tensor::new(&[f, f], d).unwrap()
                });
                let gb = ctx.needs[3].then(|| {
                    let mut d = vec![0.0; f];
                    for row in gz.chunks_exact(f) {
                        for (acc, v) in d.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    Tensor::from_vec(d)
                });
                if !ctx.needs[0] && !ctx.needs[1] {
                    return vec![None, None, gw, gb];
                }
                let mut gp = vec![0.0; rows * f];
                gemm(rows, f, f, &gz, (f, 1), w.data(), (1, f), 0.0, &mut gp, (f, 1));
                drop(gz);
                let ga = ctx.needs[1].then(|| {
                    let hn = node_major(h.data(), n, c, f);
                    let mut d = vec![0.0; c * c];
                    gemm(c, nf, c, &gp, (nf, 1), &hn, (1, nf), 0.0, &mut d, (c, 1));
                    Tensor::new(&[c, c], d).unwrap()
                });
                let gh = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; c * nf];
                    gemm(c, c, nf, a.data(), (1, c), &gp, (nf, 1), 0.0, &mut d, (nf, 1));
                    Tensor::new(&[n, c, f], graph_major(&d, n, c, f)).unwrap()
                });
                vec![gh, ga, gw, gb]
            }),
        )
    }

    /// Same layer on `[B, F, C, T]` feature maps, where every `(b, t)` slice
    /// is one graph; equivalent to `to_graphs → gcn_layer → from_graphs`
    /// without the relayout.
    pub fn gcn_maps(self, adj: Var<'t>, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        let (h, a, w, b) = (self.value(), adj.value(), weight.value(), bias.value());
        let sh = h.shape().to_vec();
        if sh.len() != 4
            || a.shape() != [sh[2], sh[2]]
            || w.shape() != [sh[1], sh[1]]
            || b.shape() != [sh[1]]
        {
            return Err(Error::dim(format!(
                "gcn_maps: H {sh:?}, Â {:?}, W {:?}, b {:?}",
                a.shape(),
                w.shape(),
                b.shape()
            )));
        }
        let (f, c, t) = (sh[1], sh[2], sh[3]);
        let ct = c * t;
        let per = f * ct;
        let mut out = vec![0.0; h.len()];
        {
            let (hs, as_, ws, bs) = (h.data(), a.data(), w.data(), b.data());
            crate::exec::for_each_chunk(&mut out, per, |bi, y| {
                let hb = &hs[bi * per..(bi + 1) * per];
                let mut p = vec![0.0; per];
                for k in 0..f {
                    gemm(c, c, t, as_, (c, 1), &hb[k * ct..], (t, 1), 0.0, &mut p[k * ct..], (t, 1));
                }
                for (k, row) in y.chunks_exact_mut(ct).enumerate() {
                    row.iter_mut().for_each(|v| *v = bs[k]);
                }
                gemm(f, f, ct, ws, (1, f), &p, (ct, 1), 1.0, y, (ct, 1));
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            });
        }
        let out = Tensor::new(&sh, out)?;
        self.tape().push(
            "gcn_maps",
            out,
            &[self, adj, weight, bias],
            Box::new(move |ctx| {
                let (hs, as_, ws) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.inputs[2].data());
                let (ys, gs) = (ctx.out.data(), ctx.grad.data());
                let batch = ys.len() / per;
                let needs = ctx.needs.to_vec();
                // per sample: masked grad G, P = Â·H, dW = P·Gᵀ, db, dP = W·G,
                // dÂ = Σ_f dP·Hᵀ, dH = Âᵀ·dP
                let parts = crate::exec::map_indexed(batch, |bi| {
                    let range = bi * per..(bi + 1) * per;
                    let hb = &hs[range.clone()];
                    let g: Vec<f64> = gs[range.clone()]
                        .iter()
                        .zip(&ys[range])
                        .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                        .collect();
                    let mut dw = Vec::new();
                    if needs[2] {
                        let mut p = vec![0.0; per];
                        for k in 0..f {
                            gemm(c, c, t, as_, (c, 1), &hb[k * ct..], (t, 1), 0.0, &mut p[k * ct..], (t, 1));
                        }
                        dw = vec![0.0; f * f];
                        gemm(f, ct, f, &p, (ct, 1), &g, (1, ct), 0.0, &mut dw, (f, 1));
                    }
                    let db: Vec<f64> = if needs[3] {
                        g.chunks_exact(ct).map(|r| r.iter().sum()).collect()
                    } else {
                        Vec::new()
                    };
                    let (mut da, mut dh) = (Vec::new(), Vec::new());
                    if needs[0] || needs[1] {
                        let mut dp = vec![0.0; per];
                        gemm(f, f, ct, ws, (f, 1), &g, (ct, 1), 0.0, &mut dp, (ct, 1));
                        if needs[1] {
                            da = vec![0.0; c * c];
                            for k in 0..f {
                                gemm(c, t, c, &dp[k * ct..], (t, 1), &hb[k * ct..], (1, t), 1.0, &mut da, (c, 1));
                            }
                        }
                        if needs[0] {
                            dh = vec![0.0; per];
                            for k in 0..f {
                                gemm(c, c, t, as_, (1, c), &dp[k * ct..], (t, 1), 0.0, &mut dh[k * ct..], (t, 1));
                            }
                        }
                    }
                    (dh, da, dw, db)
                });
                let mut gh = needs[0].then(|| Vec::with_capacity(batch * per));
                let (mut ga, mut gw, mut gb) = (vec![0.0; c * c], vec![0.0; f * f], vec![0.0; f]);
                for (dh, da, dw, db) in parts {
                    if let Some(v) = gh.as_mut() {
                        v.extend_from_slice(&dh);
                    }
                    ga.iter_mut().zip(&da).for_each(|(x, y)| *x += y);
                    gw.iter_mut().zip(&dw).for_each(|(x, y)| *x += y);
                    gb.iter_mut().zip(&db).for_each(|(x, y)| *x += y);
                }
                vec![
                    gh.map(|v| Tensor::new(&[batch, f, c, t], v).unwrap()),
                    needs[1].then(|| Tensor::new(&[c, c], ga).unwrap()),
                    needs[2].then(|| Tensor::new(&[f, f], gw).unwrap()),
                    needs[3].then(|| Tensor::from_vec(gb)),
                ]
            }),
        )
    }

    /// `[B, F, C, T]` feature maps → `[B·T, C, F]` graphs: element
    /// `(b, f, c, t)` becomes node `c`, feature `f` of graph `b·T + t`.
    pub fn to_graphs(self) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::dim(format!("to_graphs expects [B, F, C, T], got {s:?}")));
        }
        self.permute(&[0, 3, 2, 1])?.reshape(&[s[0] * s[3], s[2], s[1]])
    }

    /// Inverse of [`Var::to_graphs`] for a batch of `batch` samples.
    pub fn from_graphs(self, batch: usize) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 3 || batch == 0 || s[0] % batch != 0 {
            return Err(Error::dim(format!("from_graphs: {s:?} with batch {batch}")));
        }
        self.reshape(&[batch, s[0] / batch, s[1], s[2]])?
            .permute(&[0, 3, 2, 1])
    }
}

/// Hierarchical pyramid: every branch normalizes its own adjacency, runs its
/// stacked layers on all graphs, and the branch outputs are summed onto the
/// input. Accepts `[N, C, F]` graph stacks or `[B, F, C, T]` feature maps.
pub fn hgp_forward<'t>(graphs: Var<'t>, branches: &[GcnBranch<'t>]) -> Result<Var<'t>> {
    let s = graphs.shape();
    let f = match s.len() {
        3 => s[2],
        4 => s[1],
        _ => return Err(Error::dim(format!("hgp_forward expects [N, C, F] or [B, F, C, T], got {s:?}"))),
    };
    for pair in branches.windows(2) {
        if pair[1].depth() <= pair[0].depth() {
            return Err(Error::config("pyramid branch depths must be strictly increasing"));
        }
    }
    let mut out = graphs;
    for (k, br) in branches.iter().enumerate() {
        if br.depth() == 0 {
            return Err(Error::config(format!("branch {k} has no layers")));
        }
        if br.layers.iter().any(|(w, _)| w.shape() != [f, f]) {
            return Err(Error::config(format!("branch {k} weights do not match feature width {f}")));
        }
        let adj = br.adjacency.normalize_adjacency()?;
        let mut h = graphs;
        for (w, b) in &br.layers {
            h = if s.len() == 3 { h.gcn_layer(adj, *w, *b)? } else { h.gcn_maps(adj, *w, *b)? };
        }
        out = out.add(h)?;
    }
    Ok(out)
}

/// Dense matrix as CSV with a header row of labels and a leading label column.
pub fn write_matrix_csv<W: Write>(m: &Tensor, labels: &[String], writer: W) -> Result<()> {
    let c = labels.len();
    if m.shape() != [c, c] {
        return Err(Error::dim(format!("{} labels for matrix {:?}", c, m.shape())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in m.data().chunks_exact(c).enumerate() {
        let mut rec = vec![labels[i].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
