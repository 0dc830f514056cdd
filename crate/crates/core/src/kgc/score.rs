//! Triple scoring, on the tape for training and on precomputed tables for
//! evaluation.

use ndarray::{Array1, Array2, ArrayView1};

use super::{MultiModalKgcModel, ScorerKind};
use crate::data::Triple;
use crate::error::{Error, Result};
use crate::eval::LinkScorer;
use crate::nn::{Tape, Var};

impl MultiModalKgcModel {
    fn check_ids(&self, triples: &[Triple]) -> Result<()> {
        let (n, r) = (self.num_entities(), self.num_relations());
        match triples.iter().find(|t| t.head >= n || t.tail >= n || t.relation >= r) {
            Some(t) => Err(Error::shape(format!(
                "triple ({}, {}, {}) out of range for {n} entities / {r} relations",
                t.head, t.relation, t.tail
            ))),
            None => Ok(()),
        }
    }

    /// Scores of `triples` as an `n × 1` node. Parameters are tracked when
    /// `track` is set; the raw visual table only if it is being fine-tuned.
    pub fn score_tape(&self, tape: &mut Tape, triples: &[Triple], track: bool) -> Result<Var> {
        self.check_ids(triples)?;
        let heads: Vec<usize> = triples.iter().map(|t| t.head).collect();
        let rels: Vec<usize> = triples.iter().map(|t| t.relation).collect();
        let tails: Vec<usize> = triples.iter().map(|t| t.tail).collect();

        let ent = tape.bind(&self.struct_emb, track);
        let rel = tape.bind(&self.rel_emb, track);
        let raw = tape.bind(&self.visual_raw, track && self.finetune_visual);
        let proj = self.visual_proj.bind(tape, track);

        let h_s = tape.gather_rows(ent, &heads);
        let t_s = tape.gather_rows(ent, &tails);
        let r = tape.gather_rows(rel, &rels);
        let h_raw = tape.gather_rows(raw, &heads);
        let t_raw = tape.gather_rows(raw, &tails);
        let h_v = proj.apply(tape, h_raw);
        let t_v = proj.apply(tape, t_raw);

        let energy = |tape: &mut Tape, h: Var, t: Var| {
            let hr = tape.add(h, r);
            let diff = tape.sub(hr, t);
            tape.row_norm(diff)
        };

        Ok(match self.scorer {
            ScorerKind::IkrlLike => {
                let e1 = energy(tape, h_s, t_s);
                let e2 = energy(tape, h_s, t_v);
                let e3 = energy(tape, h_v, t_s);
                let e4 = energy(tape, h_v, t_v);
                let a = tape.add(e1, e2);
                let b = tape.add(e3, e4);
                let total = tape.add(a, b);
                tape.neg(total)
            }
            ScorerKind::TbkgcLike => {
                let e1 = energy(tape, h_s, t_s);
                let e2 = energy(tape, h_v, t_v);
                let h_sum = tape.add(h_s, h_v);
                let t_sum = tape.add(t_s, t_v);
                let e3 = energy(tape, h_sum, t_sum);
                let a = tape.add(e1, e2);
                let total = tape.add(a, e3);
                tape.neg(total)
            }
            ScorerKind::RsmeGated => {
                let gates = self.gate_emb.as_ref().expect("rsme_gated model has gates");
                let gate_table = tape.bind(gates, track);
                let g_logit = tape.gather_rows(gate_table, &rels);
                let g = tape.sigmoid(g_logit);
                let fuse = |tape: &mut Tape, e_s: Var, e_v: Var| {
                    let delta = tape.sub(e_v, e_s);
                    let gated = tape.mul(g, delta);
                    tape.add(e_s, gated)
                };
                let h = fuse(tape, h_s, h_v);
                let t = fuse(tape, t_s, t_v);
                complex_trilinear(tape, h, r, t, self.dim() / 2)
            }
        })
    }
}

/// `Re(<h, r, conj(t)>)` with the first `half` columns holding real parts.
fn complex_trilinear(tape: &mut Tape, h: Var, r: Var, t: Var, half: usize) -> Var {
    let d = 2 * half;
    let (h_re, h_im) = (tape.slice_cols(h, 0, half), tape.slice_cols(h, half, d));
    let (r_re, r_im) = (tape.slice_cols(r, 0, half), tape.slice_cols(r, half, d));
    let (t_re, t_im) = (tape.slice_cols(t, 0, half), tape.slice_cols(t, half, d));
    let mut term = |a: Var, b: Var, c: Var| {
        let ab = tape.mul(a, b);
        let abc = tape.mul(ab, c);
        tape.row_sum(abc)
    };
    let p1 = term(h_re, r_re, t_re);
    let p2 = term(h_im, r_re, t_im);
    let p3 = term(h_re, r_im, t_im);
    let p4 = term(h_im, r_im, t_re);
    let a = tape.add(p1, p2);
    let b = tape.add(a, p3);
    tape.sub(b, p4)
}

/// A trained model with visual projections and gates precomputed, scoring
/// by direct array arithmetic.
#[derive(Debug, Clone)]
pub struct FrozenModel {
    scorer: ScorerKind,
    ent_s: Array2<f64>,
    ent_v: Array2<f64>,
    rel: Array2<f64>,
    gates: Option<Array2<f64>>,
}

fn l2(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum::<f64>().sqrt()
}

impl FrozenModel {
    pub fn new(model: &MultiModalKgcModel) -> Self {
        Self {
            scorer: model.scorer,
            ent_s: model.struct_emb.value().clone(),
            ent_v: model.visual_proj.forward(model.visual_raw.value()),
            rel: model.rel_emb.value().clone(),
            gates: model
                .gate_emb
                .as_ref()
                .map(|g| g.value().mapv(crate::nn::tape::sigmoid)),
        }
    }

    pub fn scorer(&self) -> ScorerKind {
        self.scorer
    }

    fn fused(&self, e: usize, r: usize) -> Array1<f64> {
        let g = self.gates.as_ref().expect("gates").row(r);
        let (s, v) = (self.ent_s.row(e), self.ent_v.row(e));
        let mut out = s.to_owned();
        for k in 0..out.len() {
            out[k] = g[k] * v[k] + (1.0 - g[k]) * s[k];
        }
        out
    }

    fn energy(h: ArrayView1<f64>, r: ArrayView1<f64>, t: ArrayView1<f64>) -> f64 {
        l2((0..h.len()).map(|k| h[k] + r[k] - t[k]))
    }

    fn trilinear(h: &Array1<f64>, r: ArrayView1<f64>, t: &Array1<f64>) -> f64 {
        let half = h.len() / 2;
        (0..half)
            .map(|k| {
                let (hr, hi) = (h[k], h[k + half]);
                let (rr, ri) = (r[k], r[k + half]);
                let (tr, ti) = (t[k], t[k + half]);
                hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr
            })
            .sum()
    }

    pub fn score(&self, h: usize, r: usize, t: usize) -> f64 {
        let rv = self.rel.row(r);
        match self.scorer {
            ScorerKind::IkrlLike => {
                let (hs, hv, ts, tv) = (self.ent_s.row(h), self.ent_v.row(h), self.ent_s.row(t), self.ent_v.row(t));
                -(Self::energy(hs, rv, ts) + Self::energy(hs, rv, tv) + Self::energy(hv, rv, ts) + Self::energy(hv, rv, tv))
            }
            ScorerKind::TbkgcLike => {
                let (hs, hv, ts, tv) = (self.ent_s.row(h), self.ent_v.row(h), self.ent_s.row(t), self.ent_v.row(t));
                let hsum = &hs + &hv;
                let tsum = &ts + &tv;
                -(Self::energy(hs, rv, ts) + Self::energy(hv, rv, tv) + Self::energy(hsum.view(), rv, tsum.view()))
            }
            ScorerKind::RsmeGated => Self::trilinear(&self.fused(h, r), rv, &self.fused(t, r)),
        }
    }
}

impl LinkScorer for FrozenModel {
    fn num_entities(&self) -> usize {
        self.ent_s.nrows()
    }

    fn score_tails(&self, h: usize, r: usize) -> Vec<f64> {
        (0..self.num_entities()).map(|t| self.score(h, r, t)).collect()
    }

    fn score_heads(&self, r: usize, t: usize) -> Vec<f64> {
        (0..self.num_entities()).map(|h| self.score(h, r, t)).collect()
    }
}
