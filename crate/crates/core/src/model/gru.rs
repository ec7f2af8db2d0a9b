use super::GruParams;
use crate::error::{NrmError, Result};
use crate::numerics::{sigmoid, Matrix};

/// Activations of one GRU step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

fn affine(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &Matrix) -> Vec<f64> {
    let mut a = b.data().to_vec();
    w.matvec_acc(x, &mut a);
    u.matvec_acc(h, &mut a);
    a
}

pub(crate) fn gru_forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruCache {
    let z: Vec<f64> = affine(&p.w_z, x, &p.u_z, h_prev, &p.b_z).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine(&p.w_r, x, &p.u_r, h_prev, &p.b_r).into_iter().map(sigmoid).collect();
    let gated: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let candidate: Vec<f64> = affine(&p.w_h, x, &p.u_h, &gated, &p.b_h)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let h = (0..h_prev.len())
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i])
        .collect();
    GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        candidate,
        h,
    }
}

/// One GRU update:
/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h̃`.
pub fn gru_step(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(NrmError::shape("gru_step input", format!("{}", p.input_dim()), format!("{}", x.len())));
    }
    if h_prev.len() != p.hidden_dim() {
        return Err(NrmError::shape(
            "gru_step state",
            format!("{}", p.hidden_dim()),
            format!("{}", h_prev.len()),
        ));
    }
    Ok(gru_forward(p, x, h_prev).h)
}

/// Accumulates parameter gradients into `g` and input/state gradients into
/// `dx` / `dh_prev`, given `dh` = ∂loss/∂h'.
pub(crate) fn gru_backward(
    p: &GruParams,
    c: &GruCache,
    dh: &[f64],
    g: &mut GruParams,
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let n = dh.len();
    let mut da_z = vec![0.0; n];
    let mut da_h = vec![0.0; n];
    for i in 0..n {
        let dz = dh[i] * (c.candidate[i] - c.h_prev[i]);
        let dcand = dh[i] * c.z[i];
        dh_prev[i] += dh[i] * (1.0 - c.z[i]);
        da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
        da_h[i] = dcand * (1.0 - c.candidate[i] * c.candidate[i]);
    }

    // candidate branch
    let gated: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
    g.w_h.add_outer(&da_h, &c.x);
    g.u_h.add_outer(&da_h, &gated);
    g.b_h.add_outer(&da_h, &[1.0]);
    p.w_h.matvec_t_acc(&da_h, dx);
    let mut dgated = vec![0.0; n];
    p.u_h.matvec_t_acc(&da_h, &mut dgated);

    let mut da_r = vec![0.0; n];
    for i in 0..n {
        dh_prev[i] += dgated[i] * c.r[i];
        let dr = dgated[i] * c.h_prev[i];
        da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
    }

    gate_backward(&p.w_r, &p.u_r, &mut g.w_r, &mut g.u_r, &mut g.b_r, &da_r, c, dx, dh_prev);
    gate_backward(&p.w_z, &p.u_z, &mut g.w_z, &mut g.u_z, &mut g.b_z, &da_z, c, dx, dh_prev);
}

#[allow(clippy::too_many_arguments)]
fn gate_backward(
    w: &Matrix,
    u: &Matrix,
    gw: &mut Matrix,
    gu: &mut Matrix,
    gb: &mut Matrix,
    da: &[f64],
    c: &GruCache,
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    gw.add_outer(da, &c.x);
    gu.add_outer(da, &c.h_prev);
    gb.add_outer(da, &[1.0]);
    w.matvec_t_acc(da, dx);
    u.matvec_t_acc(da, dh_prev);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{uniform_init, Rng};

    fn random_gru(rng: &mut Rng, input: usize, hidden: usize) -> GruParams {
        let mut p = GruParams::zeros(input, hidden);
        for m in [
            &mut p.w_z, &mut p.u_z, &mut p.b_z, &mut p.w_r, &mut p.u_r, &mut p.b_r, &mut p.w_h, &mut p.u_h,
            &mut p.b_h,
        ] {
            *m = uniform_init(rng, m.rows(), m.cols(), -0.8, 0.8).unwrap();
        }
        p
    }

    /// Scalar-loop restatement of the cell, independent of the matvec helpers.
    fn scalar_gru(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut z = vec![0.0; n];
        let mut r = vec![0.0; n];
        for i in 0..n {
            let mut az = p.b_z.get(i, 0);
            let mut ar = p.b_r.get(i, 0);
            for k in 0..x.len() {
                az += p.w_z.get(i, k) * x[k];
                ar += p.w_r.get(i, k) * x[k];
            }
            for k in 0..n {
                az += p.u_z.get(i, k) * h[k];
                ar += p.u_r.get(i, k) * h[k];
            }
            z[i] = sig(az);
            r[i] = sig(ar);
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut a = p.b_h.get(i, 0);
            for k in 0..x.len() {
                a += p.w_h.get(i, k) * x[k];
            }
            for k in 0..n {
                a += p.u_h.get(i, k) * r[k] * h[k];
            }
            out[i] = (1.0 - z[i]) * h[i] + z[i] * a.tanh();
        }
        out
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(2, 3);
        let h = gru_step(&p, &[0.3, -0.2], &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(h, vec![0.5, -1.0, 0.25]);
        let h = gru_step(&p, &[0.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = Rng::new(21);
        for _ in 0..20 {
            let p = random_gru(&mut rng, 3, 4);
            let x = uniform_init(&mut rng, 3, 1, -1.0, 1.0).unwrap().into_data();
            let h = uniform_init(&mut rng, 4, 1, -1.0, 1.0).unwrap().into_data();
            let fast = gru_step(&p, &x, &h).unwrap();
            for (a, b) in fast.iter().zip(scalar_gru(&p, &x, &h)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_update_gate_copies_state() {
        let mut rng = Rng::new(4);
        let mut p = random_gru(&mut rng, 2, 3);
        p.b_z.fill(-40.0);
        let h = [0.4, -0.7, 0.1];
        let out = gru_step(&p, &[0.5, 0.5], &h).unwrap();
        for (a, b) in out.iter().zip(h) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_errors() {
        let p = GruParams::zeros(2, 3);
        assert!(gru_step(&p, &[0.0], &[0.0; 3]).is_err());
        assert!(gru_step(&p, &[0.0; 2], &[0.0; 2]).is_err());
    }
}
