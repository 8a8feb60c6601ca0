//! Differentiable representation maps with exact forward-mode
//! Jacobian-vector products.
//!
//! A [`RepMap`] is an explicit stack of dense and elementwise activation
//! layers. `layer_index` counts applied layers: `0` is the input itself and
//! `None` means the full stack. Tangents are pushed through the stack with
//! [`Dual`] numbers, one pass per direction.

mod dual;
mod fixed_point;

pub use dual::Dual;
pub use fixed_point::{FixedPointMap, FixedPointSolution, SolverConfig};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::check_dims;

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: Dual) -> Dual {
        match self {
            Activation::Relu => x.relu(),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Softplus => x.softplus(),
        }
    }

    pub fn value(self, x: f64) -> f64 {
        self.apply(Dual::constant(x)).re
    }

    pub fn derivative(self, x: f64) -> f64 {
        self.apply(Dual::new(x, 1.0)).eps
    }

    /// `sup |σ'|` over the real line.
    pub fn max_slope(self) -> f64 {
        1.0
    }
}

/// Dense affine layer `x ↦ W x + b` with `W` stored `out×in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: DMatrix<f64>, bias: Vec<f64>) -> Result<Self> {
        check_dims(weight.nrows(), bias.len())?;
        if weight.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite layer weight".into()));
        }
        Ok(Self { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: &[Dual]) -> Vec<Dual> {
        let w = &self.weight;
        (0..w.nrows())
            .map(|i| {
                let mut re = 0.0;
                let mut eps = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    let wij = w[(i, j)];
                    re += wij * xj.re;
                    eps += wij * xj.eps;
                }
                // bias enters the value only, so the tangent never depends on it
                Dual::new(re + self.bias[i], eps)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Activation(Activation),
}

/// Anything that maps `R^d → R^m` and can push tangents forward.
pub trait DifferentiableMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>>;

    /// `J(x)·P`, column `j` being `jvp(x, P[:, j])`.
    fn jacobian_columns(&self, x: &[f64], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dims(self.input_dim(), basis.nrows())?;
        let mut out = DMatrix::zeros(self.output_dim(), basis.ncols());
        for j in 0..basis.ncols() {
            let v: Vec<f64> = basis.column(j).iter().copied().collect();
            let col = self.jvp(x, &v)?;
            out.set_column(j, &nalgebra::DVector::from_vec(col));
        }
        Ok(out)
    }
}

/// A map with a classifier head.
pub trait MarginModel: Sync {
    /// True-class logit minus the largest other logit.
    fn margin(&self, x: &[f64], true_class: usize) -> Result<f64>;
}

/// Feedforward stack of dense and activation layers.
#[derive(Clone, Debug, PartialEq)]
pub struct RepMap {
    input_dim: usize,
    layers: Vec<Layer>,
    dims: Vec<usize>,
    classifier: bool,
}

impl RepMap {
    pub fn new(input_dim: usize, layers: Vec<Layer>, classifier: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a map needs at least one layer".into()));
        }
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        let mut dims = vec![input_dim];
        let mut current = input_dim;
        for layer in &layers {
            if let Layer::Dense(dense) = layer {
                check_dims(current, dense.input_dim())?;
                current = dense.output_dim();
            }
            dims.push(current);
        }
        if classifier && current < 2 {
            return Err(Error::InvalidArgument(
                "a classifier head needs at least two outputs".into(),
            ));
        }
        Ok(Self {
            input_dim,
            layers,
            dims,
            classifier,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn is_classifier(&self) -> bool {
        self.classifier
    }

    /// Output dimension after `layer_index` layers.
    pub fn dim_at(&self, layer_index: usize) -> Result<usize> {
        self.dims.get(layer_index).copied().ok_or(Error::InvalidArgument(format!(
            "layer index {layer_index} exceeds depth {}",
            self.depth()
        )))
    }

    fn resolve(&self, layer_index: Option<usize>) -> Result<usize> {
        let n = layer_index.unwrap_or(self.depth());
        if n > self.depth() {
            return Err(Error::InvalidArgument(format!(
                "layer index {n} exceeds depth {}",
                self.depth()
            )));
        }
        Ok(n)
    }

    fn propagate(&self, x: &[f64], v: Option<&[f64]>, depth: usize) -> Result<Vec<Dual>> {
        check_dims(self.input_dim, x.len())?;
        if let Some(v) = v {
            check_dims(self.input_dim, v.len())?;
        }
        if x.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input".into()));
        }
        let mut state: Vec<Dual> = match v {
            Some(v) => x.iter().zip(v).map(|(&a, &t)| Dual::new(a, t)).collect(),
            None => x.iter().map(|&a| Dual::constant(a)).collect(),
        };
        for layer in &self.layers[..depth] {
            state = match layer {
                Layer::Dense(dense) => dense.apply(&state),
                Layer::Activation(act) => state.into_iter().map(|d| act.apply(d)).collect(),
            };
        }
        Ok(state)
    }

    /// Activations after `layer_index` layers.
    pub fn forward(&self, x: &[f64], layer_index: Option<usize>) -> Result<Vec<f64>> {
        let depth = self.resolve(layer_index)?;
        Ok(self.propagate(x, None, depth)?.into_iter().map(|d| d.re).collect())
    }

    /// Directional derivative `J(x)·v` of the map truncated at `layer_index`.
    pub fn jvp(&self, x: &[f64], v: &[f64], layer_index: Option<usize>) -> Result<Vec<f64>> {
        let depth = self.resolve(layer_index)?;
        Ok(self.propagate(x, Some(v), depth)?.into_iter().map(|d| d.eps).collect())
    }

    /// View of the map truncated after `layer_index` layers.
    pub fn at_layer(&self, layer_index: usize) -> Result<LayerView<'_>> {
        let depth = self.resolve(Some(layer_index))?;
        Ok(LayerView { map: self, depth })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, None)
    }

    /// Index of the largest logit (smallest index on ties).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.logits(x)?;
        Ok(argmax(&logits))
    }

    /// Adds `shift` to the bias of the last dense layer.
    pub fn with_final_bias_shift(&self, shift: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        let dense = out
            .layers
            .iter_mut()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d),
                Layer::Activation(_) => None,
            })
            .ok_or_else(|| Error::InvalidArgument("map has no dense layer".into()))?;
        check_dims(dense.bias.len(), shift.len())?;
        for (b, s) in dense.bias.iter_mut().zip(shift) {
            *b += s;
        }
        Ok(out)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Logit margin of the true class against the strongest competitor.
pub fn margin_from_logits(logits: &[f64], true_class: usize) -> Result<f64> {
    if logits.len() < 2 || true_class >= logits.len() {
        return Err(Error::ClassOutOfRange {
            class: true_class,
            n_classes: logits.len(),
        });
    }
    let runner_up = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != true_class)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[true_class] - runner_up)
}

impl MarginModel for RepMap {
    fn margin(&self, x: &[f64], true_class: usize) -> Result<f64> {
        if !self.classifier {
            return Err(Error::InvalidArgument("map has no classifier head".into()));
        }
        margin_from_logits(&self.logits(x)?, true_class)
    }
}

impl DifferentiableMap for RepMap {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty")
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, None)
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        RepMap::jvp(self, x, v, None)
    }
}

/// A [`RepMap`] truncated after a fixed number of layers.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a> {
    map: &'a RepMap,
    depth: usize,
}

impl LayerView<'_> {
    pub fn layer_index(&self) -> usize {
        self.depth
    }
}

impl DifferentiableMap for LayerView<'_> {
    fn input_dim(&self) -> usize {
        self.map.input_dim
    }

    fn output_dim(&self) -> usize {
        self.map.dims[self.depth]
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.map.forward(x, Some(self.depth))
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.map.jvp(x, v, Some(self.depth))
    }
}

// ---- model file format ----

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerRepr {
    Dense {
        #[serde(rename = "W")]
        w: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Activation {
        #[serde(rename = "fn")]
        func: Activation,
    },
}

#[derive(Serialize, Deserialize)]
struct RepMapRepr {
    input_dim: usize,
    layers: Vec<LayerRepr>,
    #[serde(default)]
    classifier: bool,
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 {
        return Err(Error::Parse("empty weight matrix".into()));
    }
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::DimMismatch {
            expected: c,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl Serialize for RepMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerRepr::Dense {
                    w: matrix_to_rows(&d.weight),
                    b: d.bias.clone(),
                },
                Layer::Activation(a) => LayerRepr::Activation { func: *a },
            })
            .collect();
        RepMapRepr {
            input_dim: self.input_dim,
            layers,
            classifier: self.classifier,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RepMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = RepMapRepr::deserialize(d)?;
        let layers = repr
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| match l {
                LayerRepr::Dense { w, b } => rows_to_matrix(&w)
                    .and_then(|w| Dense::new(w, b))
                    .map(Layer::Dense)
                    .map_err(|e| D::Error::custom(format!("layer {i}: {e}"))),
                LayerRepr::Activation { func } => Ok(Layer::Activation(func)),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        RepMap::new(repr.input_dim, layers, repr.classifier).map_err(D::Error::custom)
    }
}

/// Per-depth weight gains of the synthetic layer-matching bank.
pub const BANK_GAINS: [f64; 4] = [0.6, 1.2, 2.0, 3.0];

/// A tanh stack whose dense layer `l` has weights `N(0, gains[l]²/fan_in)`
/// and biases `N(0, 0.1²)`. Models drawn with the same gains share their
/// per-depth statistics and differ only by seed. Representation layer `l`
/// (after the `l`-th activation) has index `2l`.
pub fn tanh_stack(input_dim: usize, width: usize, gains: &[f64], seed: u64) -> Result<RepMap> {
    let mut rng = crate::random::seeded(seed);
    let mut layers = Vec::with_capacity(2 * gains.len());
    let mut fan_in = input_dim;
    for &g in gains {
        let weight = crate::random::gaussian_matrix(&mut rng, width, fan_in) * (g / (fan_in as f64).sqrt());
        let bias = crate::random::gaussian_vector(&mut rng, width).into_iter().map(|b| 0.1 * b).collect();
        layers.push(Layer::Dense(Dense::new(weight, bias)?));
        layers.push(Layer::Activation(Activation::Tanh));
        fan_in = width;
    }
    RepMap::new(input_dim, layers, false)
}
