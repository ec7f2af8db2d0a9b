//! Straight-line re-implementation of the training loss, generic over the
//! scalar type. Evaluated in double-double it gives central differences
//! whose round-off is far below the size of the smallest gradients, which
//! f64 finite differences cannot resolve.

use std::collections::BTreeMap;

use crate::corpus::Batch;
use crate::model::{ModelParams, Scheme};
use crate::numerics::Real;

#[derive(Debug, Clone)]
struct RMat<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> RMat<R> {
    fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn matvec(&self, x: &[R]) -> Vec<R> {
        assert_eq!(x.len(), self.cols, "reference matvec");
        (0..self.rows)
            .map(|i| {
                let mut acc = R::zero();
                for (w, v) in self.row(i).iter().zip(x) {
                    acc = acc + *w * *v;
                }
                acc
            })
            .collect()
    }
}

fn add<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

/// Model parameters converted to `R`, addressed by tensor name.
#[derive(Debug, Clone)]
pub struct ReferenceModel<R> {
    scheme: Scheme,
    tensors: BTreeMap<String, RMat<R>>,
}

impl<R: Real> ReferenceModel<R> {
    pub fn new(params: &ModelParams) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                let m = RMat {
                    rows: t.rows(),
                    cols: t.cols(),
                    data: t.data().iter().map(|&v| R::from_f64(v)).collect(),
                };
                (name, m)
            })
            .collect();
        ReferenceModel {
            scheme: params.scheme,
            tensors,
        }
    }

    /// Adds `delta` to one element, in `R` arithmetic (exact for
    /// double-double).
    pub fn nudge(&mut self, name: &str, index: usize, delta: f64) {
        let t = self.tensors.get_mut(name).expect("known tensor");
        t.data[index] = t.data[index] + R::from_f64(delta);
    }

    /// Restores one element to `value`.
    pub fn set(&mut self, name: &str, index: usize, value: f64) {
        self.tensors.get_mut(name).expect("known tensor").data[index] = R::from_f64(value);
    }

    fn t(&self, name: &str) -> &RMat<R> {
        &self.tensors[name]
    }

    fn gru(&self, prefix: &str, x: &[R], h: &[R]) -> Vec<R> {
        let gate = |w: &str, u: &str, b: &str, hh: &[R]| {
            let wx = self.t(&format!("{prefix}.{w}")).matvec(x);
            let uh = self.t(&format!("{prefix}.{u}")).matvec(hh);
            add(&add(&wx, &uh), &self.t(&format!("{prefix}.{b}")).data)
        };
        let z: Vec<R> = gate("w_z", "u_z", "b_z", h).into_iter().map(R::sigmoid).collect();
        let r: Vec<R> = gate("w_r", "u_r", "b_r", h).into_iter().map(R::sigmoid).collect();
        let rh: Vec<R> = r.iter().zip(h).map(|(a, b)| *a * *b).collect();
        let cand: Vec<R> = gate("w_h", "u_h", "b_h", &rh).into_iter().map(R::tanh).collect();
        (0..h.len())
            .map(|i| (R::one() - z[i]) * h[i] + z[i] * cand[i])
            .collect()
    }

    fn encoder(&self, embedding: &str, prefix: &str, post: &[usize]) -> Vec<Vec<R>> {
        let hidden = self.t(&format!("{prefix}.u_z")).rows;
        let mut h = vec![R::zero(); hidden];
        let mut states = Vec::with_capacity(post.len());
        for &id in post {
            h = self.gru(prefix, self.t(embedding).row(id), &h);
            states.push(h.clone());
        }
        states
    }

    fn log_softmax(v: &[R]) -> Vec<R> {
        let m = v.iter().map(|x| x.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let m = R::from_f64(m);
        let mut sum = R::zero();
        for x in v {
            sum = sum + (*x - m).exp();
        }
        let norm = m + sum.ln();
        v.iter().map(|x| *x - norm).collect()
    }

    /// Negative log-likelihood of a framed response (`<s> … </s>`).
    pub fn row_nll(&self, post: &[usize], response: &[usize]) -> R {
        let local = self.encoder("post_embedding", "encoder", post);
        let last = local.last().expect("non-empty post").clone();
        let (memory, summary): (Vec<Vec<R>>, Vec<R>) = match self.scheme {
            Scheme::Global => (Vec::new(), last),
            Scheme::Local => (local.clone(), last),
            Scheme::Hybrid => {
                let global = self.encoder("global_post_embedding", "global_encoder", post);
                let g = global.last().unwrap().clone();
                let mem = local.iter().map(|h| [h.as_slice(), &g].concat()).collect();
                (mem, [last.as_slice(), &g].concat())
            }
        };
        let mut s: Vec<R> = self.t("init").matvec(&summary).into_iter().map(R::tanh).collect();

        let mut nll = R::zero();
        for w in response.windows(2) {
            let c = if self.scheme == Scheme::Global {
                summary.clone()
            } else {
                let query = add(&self.t("attention.w_a").matvec(&s), &self.t("attention.b_a").data);
                let v = &self.t("attention.v_a").data;
                let scores: Vec<R> = memory
                    .iter()
                    .map(|m| {
                        let pre = add(&self.t("attention.u_a").matvec(m), &query);
                        let mut e = R::zero();
                        for (a, b) in pre.into_iter().zip(v) {
                            e = e + a.tanh() * *b;
                        }
                        e
                    })
                    .collect();
                let alpha: Vec<R> = Self::log_softmax(&scores).into_iter().map(R::exp).collect();
                let mut c = vec![R::zero(); memory[0].len()];
                for (a, m) in alpha.iter().zip(&memory) {
                    for (ci, mi) in c.iter_mut().zip(m) {
                        *ci = *ci + *a * *mi;
                    }
                }
                c
            };
            let word = self.t("response_embedding").row(w[0]);
            let input = [word, &self.t("stimulus").matvec(&c)].concat();
            s = self.gru("decoder", &input, &s);

            let pre = add(
                &add(&self.t("readout.w_s").matvec(&s), &self.t("readout.w_y").matvec(word)),
                &add(&self.t("readout.w_c").matvec(&c), &self.t("readout.b").data),
            );
            let readout: Vec<R> = pre.into_iter().map(R::tanh).collect();
            let logits = add(&self.t("output.w").matvec(&readout), &self.t("output.b").data);
            nll = nll - Self::log_softmax(&logits)[w[1]];
        }
        nll
    }

    /// Mean per-token negative log-likelihood over the batch.
    pub fn batch_loss(&self, batch: &Batch) -> R {
        let mut total = R::zero();
        for i in 0..batch.len() {
            let (post, response) = batch.row(i);
            total = total + self.row_nll(post, response);
        }
        total / R::from_f64(batch.token_count() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;
    use crate::numerics::{DoubleDouble, Rng};
    use crate::training::{batch_loss, random_batch};

    #[test]
    fn agrees_with_the_model_loss() {
        let dims = Dims {
            hidden: 5,
            embed: 4,
            attention: 6,
            stimulus: 3,
            post_vocab: 10,
            response_vocab: 9,
        };
        for scheme in Scheme::ALL {
            let mut rng = Rng::new(11);
            let params = ModelParams::random(scheme, dims, &mut rng, -0.5, 0.5).unwrap();
            let batch = random_batch(&mut rng, &dims, 4, 6);
            let (want, _) = batch_loss(&params, &batch).unwrap();
            let f = ReferenceModel::<f64>::new(&params).batch_loss(&batch);
            let dd = ReferenceModel::<DoubleDouble>::new(&params).batch_loss(&batch).to_f64();
            assert!((f - want).abs() < 1e-12 * want, "{scheme}: {f} vs {want}");
            assert!((dd - want).abs() < 1e-12 * want, "{scheme}: {dd} vs {want}");
        }
    }
}
