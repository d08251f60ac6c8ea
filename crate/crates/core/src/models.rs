//! The two comparison architectures: an 8-stage plain CNN and a residual CNN
//! with three additive skip junctions.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activations::Activation;
use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::PoolMode;
use crate::layers::{
    ActivationLayer, BatchNorm, BatchNormConfig, Conv2D, Dense, Layer, Mode, Param, ParamCount,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Architecture {
    #[default]
    Simple,
    Residual,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Simple => "simple",
            Architecture::Residual => "residual",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Architecture::Simple),
            "residual" => Ok(Architecture::Residual),
            other => Err(Error::Contract(format!(
                "unknown architecture {other:?}; expected simple or residual"
            ))),
        }
    }
}

pub const CIFAR_INPUT: [usize; 3] = [32, 32, 3];
pub const MNIST_INPUT: [usize; 3] = [28, 28, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub activation: Activation,
    pub use_batchnorm: bool,
    /// `[H, W, C]`
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub seed: u64,
    pub batchnorm: BatchNormConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Simple,
            activation: Activation::default(),
            use_batchnorm: false,
            input_shape: CIFAR_INPUT,
            num_classes: 10,
            seed: 0,
            batchnorm: BatchNormConfig::default(),
        }
    }
}

/// Where a node reads one of its inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelNode {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<Source>,
}

/// A DAG of layers evaluated in node order; the last node is the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub architecture: Architecture,
    pub input_shape: [usize; 3],
    pub nodes: Vec<ModelNode>,
}

/// Forward result: the output and, in [`Model::params`] order, the leaf vars
/// each trainable parameter was bound to.
pub struct ModelOutput<'t> {
    pub output: Var<'t>,
    pub bindings: Vec<Var<'t>>,
}

impl Model {
    fn new(architecture: Architecture, input_shape: [usize; 3]) -> Self {
        Model {
            architecture,
            input_shape,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, layer: Layer, inputs: Vec<Source>) -> Source {
        self.nodes.push(ModelNode {
            name: name.into(),
            layer,
            inputs,
        });
        Source::Node(self.nodes.len() - 1)
    }

    /// Appends a layer fed by the previous node.
    fn chain(&mut self, layer: Layer) -> Source {
        let prev = match self.nodes.len() {
            0 => Source::Input,
            n => Source::Node(n - 1),
        };
        let name = layer.type_name();
        self.push(name, layer, vec![prev])
    }

    pub fn param_count(&self) -> ParamCount {
        self.nodes.iter().map(|n| n.layer.param_count()).sum()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.nodes.iter().flat_map(|n| n.layer.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.nodes.iter_mut().flat_map(|n| n.layer.params_mut()).collect()
    }

    /// Per-sample output shape of every node.
    pub fn node_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<Vec<usize>> = node
                .inputs
                .iter()
                .map(|s| match s {
                    Source::Input => self.input_shape.to_vec(),
                    Source::Node(i) => shapes[*i].clone(),
                })
                .collect();
            shapes.push(node.layer.output_shape(&ins)?);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.node_shapes()?
            .pop()
            .ok_or_else(|| Error::Contract("model has no layers".into()))
    }

    /// Runs the model on an `[N, H, W, C]` batch.
    pub fn forward<'t>(&mut self, tape: &'t Tape, x: Var<'t>, mode: Mode) -> Result<ModelOutput<'t>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1..] != self.input_shape {
            let mut expect = vec![shape.first().copied().unwrap_or(1)];
            expect.extend(self.input_shape);
            return Err(Error::dim("model input", &shape, &expect));
        }
        let mut outs: Vec<Var<'t>> = Vec::with_capacity(self.nodes.len());
        let mut bindings = Vec::new();
        for node in &mut self.nodes {
            let ins: Vec<Var<'t>> = node
                .inputs
                .iter()
                .map(|s| match s {
                    Source::Input => x,
                    Source::Node(i) => outs[*i],
                })
                .collect();
            outs.push(node.layer.forward(tape, &ins, mode, &mut bindings)?);
        }
        let output = outs
            .pop()
            .ok_or_else(|| Error::Contract("model has no layers".into()))?;
        Ok(ModelOutput { output, bindings })
    }

    /// Copies the gradient of each bound leaf into its parameter's grad slot.
    pub fn load_grads(&mut self, grads: &Gradients, bindings: &[Var<'_>]) -> Result<()> {
        let params = self.params_mut();
        if params.len() != bindings.len() {
            return Err(Error::Contract(format!(
                "{} bindings for {} parameters",
                bindings.len(),
                params.len()
            )));
        }
        for (p, v) in params.into_iter().zip(bindings) {
            p.grad = grads.wrt(*v);
        }
        Ok(())
    }

    pub fn summary(&self) -> Result<Summary> {
        let shapes = self.node_shapes()?;
        let graph = self.architecture == Architecture::Residual;
        let name_of = |s: &Source| match s {
            Source::Input => "InputLayer".to_string(),
            Source::Node(i) => self.nodes[*i].name.clone(),
        };
        let mut rows = Vec::new();
        if graph {
            rows.push(SummaryRow {
                name: "InputLayer".into(),
                output_shape: self.input_shape.to_vec(),
                params: 0,
                connected_to: Some(String::new()),
            });
        }
        for (node, shape) in self.nodes.iter().zip(shapes) {
            rows.push(SummaryRow {
                name: node.name.clone(),
                output_shape: shape,
                params: node.layer.param_count().total,
                connected_to: graph
                    .then(|| node.inputs.iter().map(name_of).collect::<Vec<_>>().join(", ")),
            });
        }
        Ok(Summary {
            rows,
            count: self.param_count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub connected_to: Option<String>,
}

/// Layer / output shape / parameter table with a totals footer.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub count: ParamCount,
}

/// `1234567` → `"1,234,567"`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn shape_label(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
    format!("(None, {})", dims.join(", "))
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let graph = self.rows.iter().any(|r| r.connected_to.is_some());
        let rule = "=".repeat(if graph { 92 } else { 64 });
        write!(f, "{:<22}{:<26}{:<16}", "Layer", "Output Shape", "Param #")?;
        if graph {
            write!(f, "Connected to")?;
        }
        writeln!(f)?;
        writeln!(f, "{rule}")?;
        for r in &self.rows {
            write!(
                f,
                "{:<22}{:<26}{:<16}",
                r.name,
                shape_label(&r.output_shape),
                r.params
            )?;
            if let Some(c) = &r.connected_to {
                write!(f, "{}", if c.is_empty() { "[]" } else { c })?;
            }
            writeln!(f)?;
        }
        writeln!(f, "{rule}")?;
        writeln!(f, "Total params: {}", thousands(self.count.total))?;
        writeln!(f, "Trainable params: {}", thousands(self.count.trainable))?;
        write!(f, "Non-trainable params: {}", thousands(self.count.non_trainable()))
    }
}

/// Conv/Dense → (BatchNorm) → activation, as separate layers.
fn push_normalized_activation(model: &mut Model, cfg: &ModelConfig, channels: usize) {
    if cfg.use_batchnorm {
        model.chain(Layer::BatchNorm(BatchNorm::new(channels, cfg.batchnorm)));
    }
    model.chain(Layer::Activation(ActivationLayer::new(cfg.activation)));
}

fn check_input(cfg: &ModelConfig) -> Result<()> {
    if cfg.input_shape.iter().any(|&d| d == 0) {
        return Err(Error::shape("model input", &cfg.input_shape, "zero-sized dimension"));
    }
    if cfg.num_classes == 0 {
        return Err(Error::Contract("num_classes must be positive".into()));
    }
    Ok(())
}

/// Three conv pairs (32, 64, 128 filters, 3×3 same padding) each followed by
/// a 2×2 max pool, then Flatten → Dense(128) → Dense(classes). Odd spatial
/// sizes pool with floor division (28 → 14 → 7 → 3).
pub fn build_simple_cnn(cfg: &ModelConfig) -> Result<Model> {
    if cfg.architecture != Architecture::Simple {
        return Err(Error::Contract("build_simple_cnn needs architecture = simple".into()));
    }
    check_input(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(Architecture::Simple, cfg.input_shape);
    let mut channels = cfg.input_shape[2];
    for filters in [32, 64, 128] {
        for _ in 0..2 {
            model.chain(Layer::Conv2D(Conv2D::new((3, 3), channels, filters, &mut rng)));
            push_normalized_activation(&mut model, cfg, filters);
            channels = filters;
        }
        model.chain(Layer::MaxPool(PoolMode::Floor));
    }
    model.chain(Layer::Flatten);
    let shapes = model.node_shapes()?;
    let width = shapes.last().map_or(0, |s| s[0]);
    model.chain(Layer::Dense(Dense::new(width, 128, &mut rng)));
    push_normalized_activation(&mut model, cfg, 128);
    model.chain(Layer::Dense(Dense::new(128, cfg.num_classes, &mut rng)));
    model.output_shape()?;
    Ok(model)
}

/// Conv or Dense with (BatchNorm and) activation folded into one block.
fn block(cfg: &ModelConfig, first: Layer, channels: usize) -> Layer {
    let mut layers = vec![first];
    if cfg.use_batchnorm {
        layers.push(Layer::BatchNorm(BatchNorm::new(channels, cfg.batchnorm)));
    }
    layers.push(Layer::Activation(ActivationLayer::new(cfg.activation)));
    Layer::Block(layers)
}

/// Conv2D1 followed by three residual units `Add(prev, Conv(Conv(prev)))`,
/// all 32-filter 3×3 same-padding convs with the activation folded in, then
/// Flatten → Dense(128)+activation → Dense(classes).
///
/// Every unit consumes the previous junction (Add1 feeds Conv2D4, Add2 feeds
/// Conv2D6).
pub fn build_residual_cnn(cfg: &ModelConfig) -> Result<Model> {
    if cfg.architecture != Architecture::Residual {
        return Err(Error::Contract("build_residual_cnn needs architecture = residual".into()));
    }
    check_input(cfg)?;
    const FILTERS: usize = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(Architecture::Residual, cfg.input_shape);
    let conv = |cin: usize, rng: &mut ChaCha8Rng| {
        block(cfg, Layer::Conv2D(Conv2D::new((3, 3), cin, FILTERS, rng)), FILTERS)
    };
    let mut skip = model.push("Conv2D1", conv(cfg.input_shape[2], &mut rng), vec![Source::Input]);
    let mut conv_index = 2;
    for unit in 1..=3 {
        let a = model.push(format!("Conv2D{conv_index}"), conv(FILTERS, &mut rng), vec![skip]);
        let b = model.push(format!("Conv2D{}", conv_index + 1), conv(FILTERS, &mut rng), vec![a]);
        conv_index += 2;
        skip = model.push(format!("Add{unit}"), Layer::Add, vec![skip, b]);
    }
    let flat = model.push("Flatten", Layer::Flatten, vec![skip]);
    let [h, w, _] = cfg.input_shape;
    let dense1 = block(cfg, Layer::Dense(Dense::new(h * w * FILTERS, 128, &mut rng)), 128);
    let d1 = model.push("Dense1", dense1, vec![flat]);
    model.push(
        "Dense2",
        Layer::Dense(Dense::new(128, cfg.num_classes, &mut rng)),
        vec![d1],
    );
    model.output_shape()?;
    Ok(model)
}

pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    match cfg.architecture {
        Architecture::Simple => build_simple_cnn(cfg),
        Architecture::Residual => build_residual_cnn(cfg),
    }
}

pub fn param_count(model: &Model) -> ParamCount {
    model.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::tensor::Tensor;

    fn cfg(arch: Architecture, kind: ActivationKind) -> ModelConfig {
        ModelConfig {
            architecture: arch,
            activation: kind.default_spec(),
            ..ModelConfig::default()
        }
    }

    #[test]
    fn simple_cnn_matches_layer_table() {
        let m = build_simple_cnn(&cfg(Architecture::Simple, ActivationKind::Talu)).unwrap();
        let s = m.summary().unwrap();
        let rows: Vec<(&str, Vec<usize>, usize)> = s
            .rows
            .iter()
            .map(|r| (r.name.as_str(), r.output_shape.clone(), r.params))
            .collect();
        let expect: Vec<(&str, Vec<usize>, usize)> = vec![
            ("Conv2D", vec![32, 32, 32], 896),
            ("TaLU", vec![32, 32, 32], 1),
            ("Conv2D", vec![32, 32, 32], 9248),
            ("TaLU", vec![32, 32, 32], 1),
            ("MaxPooling2D", vec![16, 16, 32], 0),
            ("Conv2D", vec![16, 16, 64], 18496),
            ("TaLU", vec![16, 16, 64], 1),
            ("Conv2D", vec![16, 16, 64], 36928),
            ("TaLU", vec![16, 16, 64], 1),
            ("MaxPooling2D", vec![8, 8, 64], 0),
            ("Conv2D", vec![8, 8, 128], 73856),
            ("TaLU", vec![8, 8, 128], 1),
            ("Conv2D", vec![8, 8, 128], 147584),
            ("TaLU", vec![8, 8, 128], 1),
            ("MaxPooling2D", vec![4, 4, 128], 0),
            ("Flatten", vec![2048], 0),
            ("Dense", vec![128], 262272),
            ("TaLU", vec![128], 1),
            ("Dense", vec![10], 1290),
        ];
        assert_eq!(rows, expect);
        assert_eq!(s.count, ParamCount::trainable(550_577));
    }

    #[test]
    fn relu_simple_cnn_has_no_alpha_scalars() {
        let m = build_simple_cnn(&cfg(Architecture::Simple, ActivationKind::Relu)).unwrap();
        assert_eq!(m.param_count().total, 550_570);
    }

    #[test]
    fn mnist_flatten_width() {
        let c = ModelConfig {
            input_shape: MNIST_INPUT,
            ..cfg(Architecture::Simple, ActivationKind::Talu)
        };
        let m = build_simple_cnn(&c).unwrap();
        let shapes = m.node_shapes().unwrap();
        assert_eq!(shapes[0], vec![28, 28, 32]);
        let flat = m.nodes.iter().position(|n| n.layer == Layer::Flatten).unwrap();
        assert_eq!(shapes[flat], vec![1152]);
    }

    #[test]
    fn too_small_input_is_shape_error() {
        let c = ModelConfig {
            input_shape: [7, 7, 1],
            ..cfg(Architecture::Simple, ActivationKind::Talu)
        };
        assert!(matches!(build_simple_cnn(&c), Err(Error::Shape { .. })));
    }

    #[test]
    fn builder_checks_architecture() {
        assert!(build_simple_cnn(&cfg(Architecture::Residual, ActivationKind::Relu)).is_err());
        assert!(build_residual_cnn(&cfg(Architecture::Simple, ActivationKind::Relu)).is_err());
    }

    #[test]
    fn residual_rows_and_wiring() {
        let m = build_residual_cnn(&cfg(Architecture::Residual, ActivationKind::Talu)).unwrap();
        let s = m.summary().unwrap();
        let got: Vec<(&str, usize, &str)> = s
            .rows
            .iter()
            .map(|r| (r.name.as_str(), r.params, r.connected_to.as_deref().unwrap()))
            .collect();
        let expect = vec![
            ("InputLayer", 0, ""),
            ("Conv2D1", 897, "InputLayer"),
            ("Conv2D2", 9249, "Conv2D1"),
            ("Conv2D3", 9249, "Conv2D2"),
            ("Add1", 0, "Conv2D1, Conv2D3"),
            ("Conv2D4", 9249, "Add1"),
            ("Conv2D5", 9249, "Conv2D4"),
            ("Add2", 0, "Add1, Conv2D5"),
            ("Conv2D6", 9249, "Add2"),
            ("Conv2D7", 9249, "Conv2D6"),
            ("Add3", 0, "Add2, Conv2D7"),
            ("Flatten", 0, "Add3"),
            ("Dense1", 4_194_433, "Flatten"),
            ("Dense2", 1290, "Dense1"),
        ];
        assert_eq!(got, expect);
        assert_eq!(s.rows[11].output_shape, vec![32768]);
        assert_eq!(s.count.total, 4_252_114);
    }

    #[test]
    fn same_seed_same_init() {
        let c = cfg(Architecture::Simple, ActivationKind::Talu);
        assert_eq!(build_model(&c).unwrap(), build_model(&c).unwrap());
        let other = build_model(&ModelConfig { seed: 1, ..c.clone() }).unwrap();
        assert_ne!(build_model(&c).unwrap(), other);
    }

    #[test]
    fn activation_kind_does_not_change_other_shapes() {
        let shapes = |k: ActivationKind, arch| -> Vec<Vec<usize>> {
            let m = build_model(&cfg(arch, k)).unwrap();
            m.nodes
                .iter()
                .flat_map(|n| match &n.layer {
                    Layer::Activation(_) => Vec::new(),
                    Layer::Block(ls) => ls
                        .iter()
                        .filter(|l| !matches!(l, Layer::Activation(_)))
                        .flat_map(|l| l.params().into_iter().map(|p| p.value.shape().to_vec()))
                        .collect(),
                    l => l.params().into_iter().map(|p| p.value.shape().to_vec()).collect(),
                })
                .collect()
        };
        for arch in [Architecture::Simple, Architecture::Residual] {
            let base = shapes(ActivationKind::Relu, arch);
            for k in ActivationKind::ALL {
                assert_eq!(shapes(k, arch), base, "{k}");
            }
        }
    }

    #[test]
    fn zeroed_residual_outputs_final_bias() {
        let c = ModelConfig {
            input_shape: [4, 4, 1],
            ..cfg(Architecture::Residual, ActivationKind::Talu)
        };
        let mut m = build_residual_cnn(&c).unwrap();
        for p in m.params_mut() {
            if p.value.numel() > 1 {
                p.value = Tensor::zeros(p.value.shape().to_vec());
            }
        }
        let last = m.nodes.len() - 1;
        if let Layer::Dense(d) = &mut m.nodes[last].layer {
            d.bias.value = Tensor::new([10], (0..10).map(f64::from).collect()).unwrap();
        }
        let tape = Tape::no_grad();
        let x = tape.constant(Tensor::zeros([3, 4, 4, 1]));
        let y = m.forward(&tape, x, Mode::Infer).unwrap().output.value();
        assert_eq!(y.shape(), &[3, 10]);
        for row in y.data().chunks(10) {
            assert_eq!(row, (0..10).map(f64::from).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn empty_model_counts_zero() {
        let m = Model::new(Architecture::Simple, CIFAR_INPUT);
        assert_eq!(param_count(&m), ParamCount::default());
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(550_577), "550,577");
        assert_eq!(thousands(4_252_114), "4,252,114");
        assert_eq!(thousands(12), "12");
        assert_eq!(thousands(0), "0");
    }
}
