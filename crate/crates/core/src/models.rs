//! The four trainable networks: conditional generator, Wasserstein critic,
//! visual→semantic mapper (V2SM) and prototype evolver (VOPE).
//!
//! Parameters live in plain [`Tensor`]s owned by each network. A forward pass
//! first binds the parameters into a [`Graph`] (`bind`), which yields a
//! `*Vars` handle whose `forward` records the computation. `*Vars::all`
//! returns the parameter handles in the same order as
//! [`Network::parameters`], which is the order optimizers and checkpoints use.

use rand::Rng;

use crate::autodiff::{Graph, Var, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const INIT_STD: f32 = 0.02;

pub trait Network {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Dense layer `y = x·W + b` with `W: in×out` and `b: 1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Tensor::randn(inputs, outputs, INIT_STD, rng),
            bias: Tensor::zeros(1, outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(inputs, outputs),
            bias: Tensor::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, g: &mut Graph) -> LinearVars {
        self.bind_as(g, true)
    }

    /// Binds as trainable parameters or, with `trainable = false`, as
    /// constants that receive no gradient.
    pub fn bind_as(&self, g: &mut Graph, trainable: bool) -> LinearVars {
        let leaf = |g: &mut Graph, t: &Tensor| if trainable { g.param(t) } else { g.constant(t) };
        LinearVars {
            weight: leaf(g, &self.weight),
            bias: leaf(g, &self.bias),
        }
    }
}

impl LinearVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let xw = g.matmul(x, self.weight)?;
        g.add_row(xw, self.bias)
    }
}

fn check_cols(what: &str, t: &Tensor, expected: usize) -> Result<()> {
    if t.cols() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {expected} columns, got {}",
            t.cols()
        )));
    }
    Ok(())
}

fn check_rows_aligned(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "batch sizes differ: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    Ok(())
}

/// Network sizes. Input/output sizes come from the data; hidden widths from
/// configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub attr_dim: usize,
    pub feature_dim: usize,
    pub g_hidden: usize,
    pub d_hidden: usize,
    pub v2sm_hidden: (usize, usize),
    /// Width of the VOPE main path; `0` selects `2·attr_dim`.
    pub vope_hidden: usize,
}

impl ModelDims {
    pub fn vope_width(&self) -> usize {
        if self.vope_hidden == 0 {
            2 * self.attr_dim
        } else {
            self.vope_hidden
        }
    }
}

/// `G(o, z)`: noise and condition are concatenated at the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet {
    pub attr_dim: usize,
    pub hidden: Linear,
    pub out: Linear,
}

pub struct GeneratorVars {
    attr_dim: usize,
    hidden: LinearVars,
    out: LinearVars,
}

impl GeneratorNet {
    pub fn new<R: Rng + ?Sized>(
        attr_dim: usize,
        hidden: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            attr_dim,
            hidden: Linear::new(2 * attr_dim, hidden, rng),
            out: Linear::new(hidden, feature_dim, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.out.outputs()
    }

    pub fn bind(&self, g: &mut Graph) -> GeneratorVars {
        self.bind_as(g, true)
    }

    /// Binds the parameters as constants (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> GeneratorVars {
        self.bind_as(g, false)
    }

    fn bind_as(&self, g: &mut Graph, trainable: bool) -> GeneratorVars {
        GeneratorVars {
            attr_dim: self.attr_dim,
            hidden: self.hidden.bind_as(g, trainable),
            out: self.out.bind_as(g, trainable),
        }
    }

    /// Synthesizes a feature batch without recording gradients.
    pub fn generate(&self, noise: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind_frozen(&mut g);
        let (o, z) = (g.constant(noise), g.constant(cond));
        let x = vars.forward(&mut g, o, z)?;
        Ok(g.value(x).clone())
    }
}

impl GeneratorVars {
    pub fn forward(&self, g: &mut Graph, noise: Var, cond: Var) -> Result<Var> {
        check_cols("generator noise", g.value(noise), self.attr_dim)?;
        check_cols("generator condition", g.value(cond), self.attr_dim)?;
        check_rows_aligned(g.value(noise), g.value(cond))?;
        let input = g.concat_cols(noise, cond)?;
        let h = self.hidden.forward(g, input)?;
        let h = g.leaky_relu(h)?;
        let x = self.out.forward(g, h)?;
        g.relu(x)
    }

    pub fn all(&self) -> Vec<Var> {
        vec![
            self.hidden.weight,
            self.hidden.bias,
            self.out.weight,
            self.out.bias,
        ]
    }
}

impl Network for GeneratorNet {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![
            &self.hidden.weight,
            &self.hidden.bias,
            &self.out.weight,
            &self.out.bias,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.out.weight,
            &mut self.out.bias,
        ]
    }
}

/// Conditional Wasserstein critic `D(x, z)` with one hidden layer and an
/// unbounded scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNet {
    pub feature_dim: usize,
    pub attr_dim: usize,
    pub hidden: Linear,
    pub out: Linear,
}

pub struct CriticVars {
    feature_dim: usize,
    attr_dim: usize,
    hidden: LinearVars,
    out: LinearVars,
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        attr_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            feature_dim,
            attr_dim,
            hidden: Linear::new(feature_dim + attr_dim, hidden, rng),
            out: Linear::new(hidden, 1, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> CriticVars {
        self.bind_as(g, true)
    }

    /// Binds the parameters as constants (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> CriticVars {
        self.bind_as(g, false)
    }

    fn bind_as(&self, g: &mut Graph, trainable: bool) -> CriticVars {
        CriticVars {
            feature_dim: self.feature_dim,
            attr_dim: self.attr_dim,
            hidden: self.hidden.bind_as(g, trainable),
            out: self.out.bind_as(g, trainable),
        }
    }

    /// Scores a batch without recording gradients.
    pub fn criticize(&self, x: &Tensor, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind_frozen(&mut g);
        let (vx, vz) = (g.constant(x), g.constant(z));
        let s = vars.forward(&mut g, vx, vz)?;
        Ok(g.value(s).clone())
    }
}

impl CriticVars {
    fn pre_activation(&self, g: &mut Graph, x: Var, z: Var) -> Result<Var> {
        check_cols("critic features", g.value(x), self.feature_dim)?;
        check_cols("critic condition", g.value(z), self.attr_dim)?;
        check_rows_aligned(g.value(x), g.value(z))?;
        let input = g.concat_cols(x, z)?;
        self.hidden.forward(g, input)
    }

    pub fn forward(&self, g: &mut Graph, x: Var, z: Var) -> Result<Var> {
        let h = self.pre_activation(g, x, z)?;
        let h = g.leaky_relu(h)?;
        self.out.forward(g, h)
    }

    /// `∂D/∂x` for every row, recorded as a differentiable expression of the
    /// critic parameters. The leaky-ReLU derivative is piecewise constant, so
    /// it enters as a constant mask.
    pub fn input_gradient(&self, g: &mut Graph, x: Var, z: Var) -> Result<Var> {
        let pre = self.pre_activation(g, x, z)?;
        let mask = g
            .value(pre)
            .map(|v| if v > 0.0 { 1.0 } else { LEAKY_SLOPE });
        let rows = mask.rows();
        let mask = g.constant(&mask);
        let w_out = g.transpose(self.out.weight)?;
        let w_out = g.broadcast_rows(w_out, rows)?;
        let upstream = g.hadamard(mask, w_out)?;
        let w_in = g.transpose(self.hidden.weight)?;
        let w_x = g.slice_cols(w_in, 0, self.feature_dim)?;
        g.matmul(upstream, w_x)
    }

    pub fn all(&self) -> Vec<Var> {
        vec![
            self.hidden.weight,
            self.hidden.bias,
            self.out.weight,
            self.out.bias,
        ]
    }
}

impl Network for CriticNet {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![
            &self.hidden.weight,
            &self.hidden.bias,
            &self.out.weight,
            &self.out.bias,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.out.weight,
            &mut self.out.bias,
        ]
    }
}

/// Visual→semantic mapper: two hidden layers with one residual block whose
/// skip path carries the first-layer projection (through a linear map) past
/// the second layer, then a ReLU projection to attribute space.
#[derive(Clone, Debug, PartialEq)]
pub struct V2smNet {
    pub input: Linear,
    pub inner: Linear,
    pub skip: Linear,
    pub out: Linear,
    /// When false the skip path is left out of the forward pass.
    pub residual: bool,
}

pub struct V2smVars {
    input: LinearVars,
    inner: LinearVars,
    skip: LinearVars,
    out: LinearVars,
    residual: bool,
}

impl V2smNet {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        hidden: (usize, usize),
        attr_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            input: Linear::new(feature_dim, hidden.0, rng),
            inner: Linear::new(hidden.0, hidden.1, rng),
            skip: Linear::new(hidden.0, hidden.1, rng),
            out: Linear::new(hidden.1, attr_dim, rng),
            residual: true,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> V2smVars {
        self.bind_as(g, true)
    }

    /// Binds the parameters as constants (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> V2smVars {
        self.bind_as(g, false)
    }

    fn bind_as(&self, g: &mut Graph, trainable: bool) -> V2smVars {
        V2smVars {
            input: self.input.bind_as(g, trainable),
            inner: self.inner.bind_as(g, trainable),
            skip: self.skip.bind_as(g, trainable),
            out: self.out.bind_as(g, trainable),
            residual: self.residual,
        }
    }

    /// Maps features to prototypes without recording gradients.
    pub fn map(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind_frozen(&mut g);
        let vx = g.constant(x);
        let z = vars.forward(&mut g, vx)?;
        Ok(g.value(z).clone())
    }
}

impl V2smVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        check_cols("v2sm input", g.value(x), self.input.weight_rows(g))?;
        let h1 = self.input.forward(g, x)?;
        let h1 = g.leaky_relu(h1)?;
        let h2 = self.inner.forward(g, h1)?;
        let mut h2 = g.leaky_relu(h2)?;
        if self.residual {
            let s = self.skip.forward(g, h1)?;
            h2 = g.add(h2, s)?;
        }
        let z = self.out.forward(g, h2)?;
        g.relu(z)
    }

    pub fn all(&self) -> Vec<Var> {
        vec![
            self.input.weight,
            self.input.bias,
            self.inner.weight,
            self.inner.bias,
            self.skip.weight,
            self.skip.bias,
            self.out.weight,
            self.out.bias,
        ]
    }
}

impl LinearVars {
    fn weight_rows(&self, g: &Graph) -> usize {
        g.value(self.weight).rows()
    }
}

impl Network for V2smNet {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![
            &self.input.weight,
            &self.input.bias,
            &self.inner.weight,
            &self.inner.bias,
            &self.skip.weight,
            &self.skip.bias,
            &self.out.weight,
            &self.out.bias,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.input.weight,
            &mut self.input.bias,
            &mut self.inner.weight,
            &mut self.inner.bias,
            &mut self.skip.weight,
            &mut self.skip.bias,
            &mut self.out.weight,
            &mut self.out.bias,
        ]
    }
}

/// Prototype evolver: `VOPE(z) = main(z) + sigmoid(gate(z)) ⊙ z`, where
/// `main` is a two-layer MLP and the sigmoid gate acts as channel attention
/// on the identity skip.
#[derive(Clone, Debug, PartialEq)]
pub struct VopeNet {
    pub attr_dim: usize,
    pub hidden: Linear,
    pub out: Linear,
    pub gate: Linear,
}

pub struct VopeVars {
    attr_dim: usize,
    hidden: LinearVars,
    out: LinearVars,
    gate: LinearVars,
}

impl VopeNet {
    pub fn new<R: Rng + ?Sized>(attr_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            attr_dim,
            hidden: Linear::new(attr_dim, hidden, rng),
            out: Linear::new(hidden, attr_dim, rng),
            gate: Linear::new(attr_dim, attr_dim, rng),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> VopeVars {
        self.bind_as(g, true)
    }

    /// Binds the parameters as constants (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> VopeVars {
        self.bind_as(g, false)
    }

    fn bind_as(&self, g: &mut Graph, trainable: bool) -> VopeVars {
        VopeVars {
            attr_dim: self.attr_dim,
            hidden: self.hidden.bind_as(g, trainable),
            out: self.out.bind_as(g, trainable),
            gate: self.gate.bind_as(g, trainable),
        }
    }

    /// Evolves prototypes without recording gradients.
    pub fn evolve(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind_frozen(&mut g);
        let vz = g.constant(z);
        let out = vars.forward(&mut g, vz)?;
        Ok(g.value(out).clone())
    }

    /// Gate activations `sigmoid(gate(z))`.
    pub fn gate_values(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind_frozen(&mut g);
        let vz = g.constant(z);
        let out = vars.gate_activation(&mut g, vz)?;
        Ok(g.value(out).clone())
    }
}

impl VopeVars {
    fn gate_activation(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let a = self.gate.forward(g, z)?;
        g.sigmoid(a)
    }

    pub fn forward(&self, g: &mut Graph, z: Var) -> Result<Var> {
        check_cols("vope input", g.value(z), self.attr_dim)?;
        let h = self.hidden.forward(g, z)?;
        let h = g.leaky_relu(h)?;
        let main = self.out.forward(g, h)?;
        let gate = self.gate_activation(g, z)?;
        let skip = g.hadamard(gate, z)?;
        g.add(main, skip)
    }

    pub fn all(&self) -> Vec<Var> {
        vec![
            self.hidden.weight,
            self.hidden.bias,
            self.out.weight,
            self.out.bias,
            self.gate.weight,
            self.gate.bias,
        ]
    }
}

impl Network for VopeNet {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![
            &self.hidden.weight,
            &self.hidden.bias,
            &self.out.weight,
            &self.out.bias,
            &self.gate.weight,
            &self.gate.bias,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.out.weight,
            &mut self.out.bias,
            &mut self.gate.weight,
            &mut self.gate.bias,
        ]
    }
}

/// All four networks of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub dims: ModelDims,
    pub generator: GeneratorNet,
    pub critic: CriticNet,
    pub v2sm: V2smNet,
    pub vope: VopeNet,
}

impl Models {
    /// Initializes every network from `rng` in a fixed order.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let generator = GeneratorNet::new(dims.attr_dim, dims.g_hidden, dims.feature_dim, rng);
        let critic = CriticNet::new(dims.feature_dim, dims.attr_dim, dims.d_hidden, rng);
        let v2sm = V2smNet::new(dims.feature_dim, dims.v2sm_hidden, dims.attr_dim, rng);
        let vope = VopeNet::new(dims.attr_dim, dims.vope_width(), rng);
        Self {
            dims,
            generator,
            critic,
            v2sm,
            vope,
        }
    }

    pub(crate) fn named(&self) -> [(&'static str, &dyn Network); 4] {
        [
            ("generator", &self.generator),
            ("critic", &self.critic),
            ("v2sm", &self.v2sm),
            ("vope", &self.vope),
        ]
    }

    pub(crate) fn named_mut(&mut self) -> [(&'static str, &mut dyn Network); 4] {
        [
            ("generator", &mut self.generator),
            ("critic", &mut self.critic),
            ("v2sm", &mut self.v2sm),
            ("vope", &mut self.vope),
        ]
    }
}
