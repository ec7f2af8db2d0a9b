use std::fmt;
use std::str::FromStr;

use crate::error::{NrmError, Result};
use crate::numerics::{uniform_init, Matrix, Rng};

/// How the decoder's context vector is produced from the encoder states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Final encoder state, same at every step.
    Global,
    /// Attention-weighted sum of encoder states.
    Local,
    /// Attention over `[local state; final global state]`.
    Hybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Global, Scheme::Local, Scheme::Hybrid];

    pub fn tag(self) -> u8 {
        match self {
            Scheme::Global => 0,
            Scheme::Local => 1,
            Scheme::Hybrid => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Scheme::Global),
            1 => Some(Scheme::Local),
            2 => Some(Scheme::Hybrid),
            _ => None,
        }
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, Scheme::Global)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Global => "glo",
            Scheme::Local => "loc",
            Scheme::Hybrid => "hyb",
        })
    }
}

impl FromStr for Scheme {
    type Err = NrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glo" | "global" => Ok(Scheme::Global),
            "loc" | "local" => Ok(Scheme::Local),
            "hyb" | "hybrid" => Ok(Scheme::Hybrid),
            _ => Err(NrmError::InvalidArgument(format!(
                "unknown scheme {s:?} (expected glo, loc or hyb)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub hidden: usize,
    pub embed: usize,
    pub attention: usize,
    /// Output size of the context transform `L`.
    pub stimulus: usize,
    pub post_vocab: usize,
    pub response_vocab: usize,
}

impl Dims {
    /// Desk-scale defaults for the given vocabulary sizes.
    pub fn small(post_vocab: usize, response_vocab: usize) -> Self {
        Dims {
            hidden: 64,
            embed: 32,
            attention: 64,
            stimulus: 32,
            post_vocab,
            response_vocab,
        }
    }

    pub fn context(&self, scheme: Scheme) -> usize {
        match scheme {
            Scheme::Hybrid => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("hidden", self.hidden),
            ("embed", self.embed),
            ("attention", self.attention),
            ("stimulus", self.stimulus),
            ("post_vocab", self.post_vocab),
            ("response_vocab", self.response_vocab),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(NrmError::InvalidArgument(format!("dimension {name} must be positive")));
            }
        }
        if self.response_vocab < 4 || self.post_vocab < 4 {
            return Err(NrmError::InvalidArgument(
                "vocabularies must at least hold the 4 reserved tokens".into(),
            ));
        }
        Ok(())
    }
}

/// One GRU cell. `w_*` act on the input, `u_*` on the previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            b_z: Matrix::zeros(hidden, 1),
            w_r: Matrix::zeros(hidden, input),
            u_r: Matrix::zeros(hidden, hidden),
            b_r: Matrix::zeros(hidden, 1),
            w_h: Matrix::zeros(hidden, input),
            u_h: Matrix::zeros(hidden, hidden),
            b_h: Matrix::zeros(hidden, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_z.rows()
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        let GruParams { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h } = self;
        for (n, t) in [
            ("w_z", w_z),
            ("u_z", u_z),
            ("b_z", b_z),
            ("w_r", w_r),
            ("u_r", u_r),
            ("b_r", b_r),
            ("w_h", w_h),
            ("u_h", u_h),
            ("b_h", b_h),
        ] {
            out.push((format!("{prefix}.{n}"), t));
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        let GruParams { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h } = self;
        for (n, t) in [
            ("w_z", w_z),
            ("u_z", u_z),
            ("b_z", b_z),
            ("w_r", w_r),
            ("u_r", u_r),
            ("b_r", b_r),
            ("w_h", w_h),
            ("u_h", u_h),
            ("b_h", b_h),
        ] {
            out.push((format!("{prefix}.{n}"), t));
        }
    }
}

/// Additive scoring `v^T tanh(W s + U h + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_a: Matrix,
    pub u_a: Matrix,
    pub v_a: Matrix,
    pub b_a: Matrix,
}

impl AttentionParams {
    pub fn zeros(attention: usize, hidden: usize, memory: usize) -> Self {
        AttentionParams {
            w_a: Matrix::zeros(attention, hidden),
            u_a: Matrix::zeros(attention, memory),
            v_a: Matrix::zeros(attention, 1),
            b_a: Matrix::zeros(attention, 1),
        }
    }
}

/// Every learnable tensor of the network.
///
/// The hybrid scheme carries a second encoder (and its own post embedding)
/// for the global role; the global scheme has no attention tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub scheme: Scheme,
    pub dims: Dims,
    pub post_embedding: Matrix,
    pub global_post_embedding: Option<Matrix>,
    pub response_embedding: Matrix,
    pub encoder: GruParams,
    pub global_encoder: Option<GruParams>,
    pub decoder: GruParams,
    /// `L`: context -> decoder input stimulus.
    pub stimulus: Matrix,
    pub attention: Option<AttentionParams>,
    /// `W_0`: initial decoder state from the post summary.
    pub init: Matrix,
    pub readout_state: Matrix,
    pub readout_word: Matrix,
    pub readout_context: Matrix,
    pub readout_bias: Matrix,
    pub output: Matrix,
    pub output_bias: Matrix,
}

impl ModelParams {
    pub fn zeros(scheme: Scheme, dims: Dims) -> Result<Self> {
        dims.validate()?;
        let h = dims.hidden;
        let ctx = dims.context(scheme);
        let hybrid = scheme == Scheme::Hybrid;
        Ok(ModelParams {
            scheme,
            dims,
            post_embedding: Matrix::zeros(dims.post_vocab, dims.embed),
            global_post_embedding: hybrid.then(|| Matrix::zeros(dims.post_vocab, dims.embed)),
            response_embedding: Matrix::zeros(dims.response_vocab, dims.embed),
            encoder: GruParams::zeros(dims.embed, h),
            global_encoder: hybrid.then(|| GruParams::zeros(dims.embed, h)),
            decoder: GruParams::zeros(dims.embed + dims.stimulus, h),
            stimulus: Matrix::zeros(dims.stimulus, ctx),
            attention: scheme
                .has_attention()
                .then(|| AttentionParams::zeros(dims.attention, h, ctx)),
            init: Matrix::zeros(h, ctx),
            readout_state: Matrix::zeros(h, h),
            readout_word: Matrix::zeros(h, dims.embed),
            readout_context: Matrix::zeros(h, ctx),
            readout_bias: Matrix::zeros(h, 1),
            output: Matrix::zeros(dims.response_vocab, h),
            output_bias: Matrix::zeros(dims.response_vocab, 1),
        })
    }

    /// Fills every tensor, in `tensors()` order, with i.i.d. draws from
    /// `[lo, hi)`.
    pub fn random(scheme: Scheme, dims: Dims, rng: &mut Rng, lo: f64, hi: f64) -> Result<Self> {
        let mut p = Self::zeros(scheme, dims)?;
        for (_, t) in p.tensors_mut() {
            *t = uniform_init(rng, t.rows(), t.cols(), lo, hi)?;
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn context_dim(&self) -> usize {
        self.dims.context(self.scheme)
    }

    /// All tensors with their stable names, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(48);
        out.push(("post_embedding".to_string(), &self.post_embedding));
        if let Some(e) = &self.global_post_embedding {
            out.push(("global_post_embedding".to_string(), e));
        }
        out.push(("response_embedding".to_string(), &self.response_embedding));
        self.encoder.tensors("encoder", &mut out);
        if let Some(g) = &self.global_encoder {
            g.tensors("global_encoder", &mut out);
        }
        self.decoder.tensors("decoder", &mut out);
        out.push(("stimulus".to_string(), &self.stimulus));
        if let Some(a) = &self.attention {
            out.push(("attention.w_a".to_string(), &a.w_a));
            out.push(("attention.u_a".to_string(), &a.u_a));
            out.push(("attention.v_a".to_string(), &a.v_a));
            out.push(("attention.b_a".to_string(), &a.b_a));
        }
        out.push(("init".to_string(), &self.init));
        out.push(("readout.w_s".to_string(), &self.readout_state));
        out.push(("readout.w_y".to_string(), &self.readout_word));
        out.push(("readout.w_c".to_string(), &self.readout_context));
        out.push(("readout.b".to_string(), &self.readout_bias));
        out.push(("output.w".to_string(), &self.output));
        out.push(("output.b".to_string(), &self.output_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::with_capacity(48);
        out.push(("post_embedding".to_string(), &mut self.post_embedding));
        if let Some(e) = &mut self.global_post_embedding {
            out.push(("global_post_embedding".to_string(), e));
        }
        out.push(("response_embedding".to_string(), &mut self.response_embedding));
        self.encoder.tensors_mut("encoder", &mut out);
        if let Some(g) = &mut self.global_encoder {
            g.tensors_mut("global_encoder", &mut out);
        }
        self.decoder.tensors_mut("decoder", &mut out);
        out.push(("stimulus".to_string(), &mut self.stimulus));
        if let Some(a) = &mut self.attention {
            out.push(("attention.w_a".to_string(), &mut a.w_a));
            out.push(("attention.u_a".to_string(), &mut a.u_a));
            out.push(("attention.v_a".to_string(), &mut a.v_a));
            out.push(("attention.b_a".to_string(), &mut a.b_a));
        }
        out.push(("init".to_string(), &mut self.init));
        out.push(("readout.w_s".to_string(), &mut self.readout_state));
        out.push(("readout.w_y".to_string(), &mut self.readout_word));
        out.push(("readout.w_c".to_string(), &mut self.readout_context));
        out.push(("readout.b".to_string(), &mut self.readout_bias));
        out.push(("output.w".to_string(), &mut self.output));
        out.push(("output.b".to_string(), &mut self.output_bias));
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors_mut().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}

/// Bias and scoring vectors are stored as one-dimensional tensors.
pub fn is_vector_tensor(name: &str) -> bool {
    [".b_z", ".b_r", ".b_h", ".v_a", ".b_a", "readout.b", "output.b"]
        .iter()
        .any(|s| name.ends_with(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            hidden: 3,
            embed: 2,
            attention: 4,
            stimulus: 2,
            post_vocab: 6,
            response_vocab: 7,
        }
    }

    #[test]
    fn scheme_tensor_sets() {
        let g = ModelParams::zeros(Scheme::Global, dims()).unwrap();
        assert!(g.attention.is_none() && g.global_encoder.is_none());
        assert!(g.tensors().iter().all(|(n, _)| !n.starts_with("attention")));

        let h = ModelParams::zeros(Scheme::Hybrid, dims()).unwrap();
        assert_eq!(h.stimulus.shape(), (2, 6));
        assert_eq!(h.attention.as_ref().unwrap().u_a.shape(), (4, 6));
        assert_eq!(h.init.shape(), (3, 6));
        assert_eq!(h.decoder.input_dim(), 4);

        let names: Vec<String> = h.tensors().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn random_init_is_seeded_and_bounded() {
        let a = ModelParams::random(Scheme::Local, dims(), &mut Rng::new(9), -0.1, 0.1).unwrap();
        let b = ModelParams::random(Scheme::Local, dims(), &mut Rng::new(9), -0.1, 0.1).unwrap();
        assert_eq!(a, b);
        for (_, t) in a.tensors() {
            assert!(t.data().iter().all(|&v| (-0.1..0.1).contains(&v)));
        }
    }

    #[test]
    fn scheme_parsing() {
        for s in Scheme::ALL {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
            assert_eq!(Scheme::from_tag(s.tag()), Some(s));
        }
        assert!("bidi".parse::<Scheme>().is_err());
    }
}
