//! Structure-conditioned generator and structure/visual pair discriminator.

use ndarray::{concatenate, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{leaky_relu, prefixed, prefixed_mut, Parameterized, LEAKY_SLOPE};
use crate::nn::tape::sigmoid;
use crate::nn::{DenseLayer, Tape, Tensor, Var};

/// `g = W_2 · LeakyReLU(W_1 [s; z] + b_1) + b_2`.
///
/// With `conditional = false` the input is the noise `z` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
    pub d_s: usize,
    pub d_z: usize,
    pub conditional: bool,
    pub slope: f64,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        d_s: usize,
        d_z: usize,
        hidden: usize,
        d_v: usize,
        conditional: bool,
        rng: &mut R,
    ) -> Self {
        let d_in = if conditional { d_s + d_z } else { d_z };
        Self {
            hidden: DenseLayer::new(d_in, hidden, rng),
            output: DenseLayer::new(hidden, d_v, rng),
            d_s,
            d_z,
            conditional,
            slope: LEAKY_SLOPE,
        }
    }

    pub fn from_layers(hidden: DenseLayer, output: DenseLayer, d_s: usize, d_z: usize, conditional: bool) -> Result<Self> {
        let d_in = if conditional { d_s + d_z } else { d_z };
        if hidden.d_in() != d_in || output.d_in() != hidden.d_out() {
            return Err(Error::shape(format!(
                "generator layers {}→{} / {}→{} do not fit input width {d_in}",
                hidden.d_in(),
                hidden.d_out(),
                output.d_in(),
                output.d_out()
            )));
        }
        Ok(Self {
            hidden,
            output,
            d_s,
            d_z,
            conditional,
            slope: LEAKY_SLOPE,
        })
    }

    pub fn d_v(&self) -> usize {
        self.output.d_out()
    }

    fn check(&self, s_cols: usize, z_cols: usize) -> Result<()> {
        if z_cols != self.d_z || (self.conditional && s_cols != self.d_s) {
            return Err(Error::shape(format!(
                "generator expects s: {}, z: {}; got s: {s_cols}, z: {z_cols}",
                self.d_s, self.d_z
            )));
        }
        Ok(())
    }

    /// Batched forward pass, rows of `s` paired with rows of `z`.
    pub fn generate_batch(&self, s: &Array2<f64>, z: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(s.ncols(), z.ncols())?;
        if self.conditional && s.nrows() != z.nrows() {
            return Err(Error::shape("s and z batch sizes differ"));
        }
        let input = if self.conditional {
            concatenate(Axis(1), &[s.view(), z.view()]).expect("same row count")
        } else {
            z.clone()
        };
        let h = leaky_relu(&self.hidden.forward(&input), self.slope);
        Ok(self.output.forward(&h))
    }

    pub fn generate(&self, s: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<Vec<f64>> {
        let s = s.to_owned().insert_axis(Axis(0));
        let z = z.to_owned().insert_axis(Axis(0));
        Ok(self.generate_batch(&s, &z)?.row(0).to_vec())
    }

    /// Record the forward pass on `tape`.
    pub fn forward(&self, tape: &mut Tape, s: Var, z: Var, track: bool) -> Result<Var> {
        self.check(tape.shape(s).1, tape.shape(z).1)?;
        let hidden = self.hidden.bind(tape, track);
        let output = self.output.bind(tape, track);
        let input = if self.conditional { tape.concat_cols(s, z) } else { z };
        let h = hidden.apply(tape, input);
        let h = tape.leaky_relu(h, self.slope);
        Ok(output.apply(tape, h))
    }
}

impl Parameterized for Generator {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("hidden", self.hidden.params());
        out.extend(prefixed("output", self.output.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed_mut("hidden", self.hidden.params_mut());
        out.extend(prefixed_mut("output", self.output.params_mut()));
        out
    }
}

/// `D(s, v) = sigmoid(W_4 [h; v] + b_4)` with `h = LeakyReLU(W_3 s + b_3)`.
///
/// With `interaction` set to `U` the logit gains a projection term `vᵀ U h`,
/// which lets the score depend on how `v` fits `s` rather than on each
/// separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub struct_branch: DenseLayer,
    pub head: DenseLayer,
    /// `d_v × hidden`.
    pub interaction: Option<Tensor>,
    /// Hidden layer over `[h; v]` placed before `head`.
    pub joint: Option<DenseLayer>,
    pub slope: f64,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(d_s: usize, d_v: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            struct_branch: DenseLayer::new(d_s, hidden, rng),
            head: DenseLayer::new(hidden + d_v, 1, rng),
            interaction: None,
            joint: None,
            slope: LEAKY_SLOPE,
        }
    }

    /// `sigmoid(W_4 LeakyReLU(W_j [h; v] + b_j) + b_4)`: nonlinear in `v`.
    pub fn new_joint<R: Rng + ?Sized>(d_s: usize, d_v: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            struct_branch: DenseLayer::new(d_s, hidden, rng),
            joint: Some(DenseLayer::new(hidden + d_v, hidden, rng)),
            head: DenseLayer::new(hidden, 1, rng),
            interaction: None,
            slope: LEAKY_SLOPE,
        }
    }

    /// Add a zero-initialised projection term.
    pub fn with_interaction(mut self) -> Self {
        let hidden = self.struct_branch.d_out();
        self.interaction = Some(Tensor::zeros(self.d_v(), hidden));
        self
    }

    pub fn from_layers(struct_branch: DenseLayer, head: DenseLayer) -> Result<Self> {
        if head.d_out() != 1 || head.d_in() <= struct_branch.d_out() {
            return Err(Error::shape("discriminator head must map hidden + d_v to one logit"));
        }
        Ok(Self {
            struct_branch,
            head,
            interaction: None,
            joint: None,
            slope: LEAKY_SLOPE,
        })
    }

    /// All weights and biases zero: outputs ½ everywhere.
    pub fn zeros(d_s: usize, d_v: usize, hidden: usize) -> Self {
        Self {
            struct_branch: DenseLayer::zeros(d_s, hidden),
            head: DenseLayer::zeros(hidden + d_v, 1),
            interaction: None,
            joint: None,
            slope: LEAKY_SLOPE,
        }
    }

    pub fn d_s(&self) -> usize {
        self.struct_branch.d_in()
    }

    pub fn d_v(&self) -> usize {
        let d_in = self.joint.as_ref().map_or(self.head.d_in(), DenseLayer::d_in);
        d_in - self.struct_branch.d_out()
    }

    fn check(&self, s_cols: usize, v_cols: usize) -> Result<()> {
        if s_cols != self.d_s() || v_cols != self.d_v() {
            return Err(Error::shape(format!(
                "discriminator expects s: {}, v: {}; got s: {s_cols}, v: {v_cols}",
                self.d_s(),
                self.d_v()
            )));
        }
        Ok(())
    }

    /// Pre-sigmoid scores for paired rows.
    pub fn logits(&self, s: &Array2<f64>, v: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(s.ncols(), v.ncols())?;
        if s.nrows() != v.nrows() {
            return Err(Error::shape("s and v batch sizes differ"));
        }
        let h = leaky_relu(&self.struct_branch.forward(s), self.slope);
        let x = concatenate(Axis(1), &[h.view(), v.view()]).expect("same row count");
        let mut logit = match &self.joint {
            Some(j) => self.head.forward(&leaky_relu(&j.forward(&x), self.slope)),
            None => self.head.forward(&x),
        };
        if let Some(u) = &self.interaction {
            let hu = h.dot(&u.value().t());
            let extra = (&hu * v).sum_axis(Axis(1)).insert_axis(Axis(1));
            logit += &extra;
        }
        Ok(logit)
    }

    /// Probabilities in (0, 1), one per row.
    pub fn discriminate_batch(&self, s: &Array2<f64>, v: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self.logits(s, v)?.iter().map(|&x| sigmoid(x)).collect())
    }

    pub fn discriminate(&self, s: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
        let s = s.to_owned().insert_axis(Axis(0));
        let v = v.to_owned().insert_axis(Axis(0));
        Ok(self.discriminate_batch(&s, &v)?[0])
    }

    /// Record the forward pass on `tape`; returns an `n × 1` probability node.
    pub fn forward(&self, tape: &mut Tape, s: Var, v: Var, track: bool) -> Result<Var> {
        self.check(tape.shape(s).1, tape.shape(v).1)?;
        let branch = self.struct_branch.bind(tape, track);
        let head = self.head.bind(tape, track);
        let h = branch.apply(tape, s);
        let h = tape.leaky_relu(h, self.slope);
        let x = tape.concat_cols(h, v);
        let mut logit = match &self.joint {
            Some(j) => {
                let j = j.bind(tape, track);
                let hj = j.apply(tape, x);
                let hj = tape.leaky_relu(hj, self.slope);
                head.apply(tape, hj)
            }
            None => head.apply(tape, x),
        };
        if let Some(u) = &self.interaction {
            let u = tape.bind(u, track);
            let hu = tape.matmul_t(h, u);
            let prod = tape.mul(hu, v);
            let extra = tape.row_sum(prod);
            logit = tape.add(logit, extra);
        }
        Ok(tape.sigmoid(logit))
    }
}

impl Parameterized for Discriminator {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("struct_branch", self.struct_branch.params());
        if let Some(j) = &self.joint {
            out.extend(prefixed("joint", j.params()));
        }
        out.extend(prefixed("head", self.head.params()));
        if let Some(u) = &self.interaction {
            out.push(("interaction".to_string(), u));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = prefixed_mut("struct_branch", self.struct_branch.params_mut());
        if let Some(j) = &mut self.joint {
            out.extend(prefixed_mut("joint", j.params_mut()));
        }
        out.extend(prefixed_mut("head", self.head.params_mut()));
        if let Some(u) = &mut self.interaction {
            out.push(("interaction".to_string(), u));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_head() {
        let mut rng = crate::rng::rng_from_seed(0);
        let mut g = Generator::new(2, 3, 4, 2, true, &mut rng);
        g.output.weight = Tensor::zeros(2, 4);
        g.output.bias = Tensor::new(array![[0.5, -1.5]]);
        for seed in 0..3 {
            let mut r = crate::rng::rng_from_seed(seed);
            let s = crate::nn::layers::normal_matrix(1, 2, 1.0, &mut r);
            let z = crate::nn::layers::normal_matrix(1, 3, 1.0, &mut r);
            assert_eq!(g.generate(s.row(0), z.row(0)).unwrap(), vec![0.5, -1.5]);
        }
    }

    #[test]
    fn one_dimensional_hand_evaluation() {
        let hidden = DenseLayer::from_parts(array![[1.0, 1.0]], array![[0.0]]).unwrap();
        let output = DenseLayer::from_parts(array![[2.0]], array![[1.0]]).unwrap();
        let g = Generator::from_layers(hidden, output, 1, 1, true).unwrap();
        let out = g.generate(array![1.0].view(), array![2.0].view()).unwrap();
        assert_eq!(out, vec![7.0]);
        // deterministic
        assert_eq!(out, g.generate(array![1.0].view(), array![2.0].view()).unwrap());
    }

    #[test]
    fn unconditional_ignores_structure() {
        let mut rng = crate::rng::rng_from_seed(1);
        let g = Generator::new(3, 2, 5, 3, false, &mut rng);
        let z = array![0.3, -0.7];
        let a = g.generate(array![1.0, 2.0, 3.0].view(), z.view()).unwrap();
        let b = g.generate(array![-9.0, 0.0, 4.0].view(), z.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_dim_mismatch() {
        let mut rng = crate::rng::rng_from_seed(1);
        let g = Generator::new(3, 2, 5, 3, true, &mut rng);
        assert!(g.generate(array![1.0].view(), array![0.0, 0.0].view()).is_err());
    }

    #[test]
    fn zero_discriminator_is_half() {
        let d = Discriminator::zeros(3, 2, 4);
        let p = d
            .discriminate(array![1.0, -2.0, 3.0].view(), array![5.0, 6.0].view())
            .unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn saturating_bias() {
        let mut d = Discriminator::zeros(1, 1, 1);
        d.head.bias = Tensor::new(array![[50.0]]);
        let p = d.discriminate(array![0.0].view(), array![0.0].view()).unwrap();
        assert!(p > 1.0 - 1e-12 && p <= 1.0);
    }

    #[test]
    fn visual_weight_hand_evaluation() {
        let mut d = Discriminator::zeros(1, 1, 1);
        d.head.weight = Tensor::new(array![[0.0, 1.0]]);
        let p = d.discriminate(array![0.7].view(), array![3f64.ln()].view()).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn tape_forward_agrees_with_arrays() {
        let mut rng = crate::rng::rng_from_seed(6);
        let g = Generator::new(3, 2, 4, 3, true, &mut rng);
        let mut d = Discriminator::new(3, 3, 4, &mut rng).with_interaction();
        d.interaction = Some(Tensor::new(crate::nn::layers::normal_matrix(3, 4, 1.0, &mut rng)));
        let joint = Discriminator::new_joint(3, 3, 4, &mut rng);
        assert_eq!(joint.d_v(), 3);
        let s = crate::nn::layers::normal_matrix(5, 3, 1.0, &mut rng);
        let z = crate::nn::layers::normal_matrix(5, 2, 1.0, &mut rng);
        let direct_g = g.generate_batch(&s, &z).unwrap();
        let direct_p = d.discriminate_batch(&s, &direct_g).unwrap();
        let direct_j = joint.discriminate_batch(&s, &direct_g).unwrap();

        let mut tape = Tape::new();
        let sv = tape.constant(s);
        let zv = tape.constant(z);
        let gv = g.forward(&mut tape, sv, zv, false).unwrap();
        let pv = d.forward(&mut tape, sv, gv, false).unwrap();
        let jv = joint.forward(&mut tape, sv, gv, false).unwrap();
        for (a, b) in tape.value(jv).iter().zip(&direct_j) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((tape.value(gv) - &direct_g).mapv(f64::abs).sum() < 1e-12);
        for (a, b) in tape.value(pv).iter().zip(&direct_p) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
