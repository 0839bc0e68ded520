//! Siamese GCN encoder and MLP projector with a hand-written reverse pass.
//!
//! A conv layer computes `act(prop(H_prev) · W)`; the projector is a stack of
//! affine layers with an activation between consecutive layers and none
//! after the last one.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{GgdError, Result};
use crate::graph::{check_permutation, read_ggdf, write_ggdf, CsrGraph, NodeFeatures};
use crate::rng::RngState;
use crate::tensor::{spmm, xavier_uniform, Activation, AdamState, DenseMatrix};

pub const GGDP_MAGIC: &[u8; 4] = b"GGDP";
pub const GGDP_VERSION: u32 = 1;

/// Neighborhood operator applied by each conv layer.
pub trait Propagation: Sync {
    /// Applies the operator of conv layer `layer` to `m`.
    fn forward(&self, layer: usize, m: &DenseMatrix) -> Result<DenseMatrix>;
    /// Applies the transpose of the same operator.
    fn adjoint(&self, layer: usize, m: &DenseMatrix) -> Result<DenseMatrix>;
}

/// A full normalized graph is used by every layer. The operator must be
/// symmetric (as `D̂^{-1/2}ÂD̂^{-1/2}` of an undirected graph is), so the
/// adjoint is the operator itself.
impl Propagation for CsrGraph {
    fn forward(&self, _layer: usize, m: &DenseMatrix) -> Result<DenseMatrix> {
        spmm(self, m)
    }

    fn adjoint(&self, _layer: usize, m: &DenseMatrix) -> Result<DenseMatrix> {
        spmm(self, m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: DenseMatrix,
    pub slope: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f32>,
    /// `None` on the last projector layer.
    pub slope: Option<f32>,
}

/// Architecture knobs needed to initialize an encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub in_dim: usize,
    pub hidden: usize,
    pub num_conv: usize,
    pub num_proj: usize,
    pub activation: Activation,
    /// Adds a trainable `1 × hidden` aggregation weight.
    pub linear_agg: bool,
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub activation: Activation,
    pub conv: Vec<ConvLayer>,
    pub proj: Vec<ProjLayer>,
    pub agg_weight: Option<Vec<f32>>,
    generation: u64,
}

impl EncoderParams {
    /// Xavier-initialized weights, zero biases, default activation slopes.
    pub fn init(shape: EncoderShape, rng: &mut RngState) -> Result<Self> {
        if shape.in_dim == 0 || shape.hidden == 0 {
            return Err(GgdError::config("hidden", "dimensions must be positive"));
        }
        if shape.num_conv == 0 {
            return Err(GgdError::config("num_conv", "at least one conv layer is required"));
        }
        let slope = shape.activation.initial_slope();
        let mut conv = Vec::with_capacity(shape.num_conv);
        for l in 0..shape.num_conv {
            let d_in = if l == 0 { shape.in_dim } else { shape.hidden };
            conv.push(ConvLayer {
                weight: xavier_uniform(d_in, shape.hidden, rng),
                slope,
            });
        }
        let mut proj = Vec::with_capacity(shape.num_proj);
        for l in 0..shape.num_proj {
            proj.push(ProjLayer {
                weight: xavier_uniform(shape.hidden, shape.hidden, rng),
                bias: vec![0.0; shape.hidden],
                slope: (l + 1 < shape.num_proj).then_some(slope),
            });
        }
        let agg_weight = shape
            .linear_agg
            .then(|| xavier_uniform(shape.hidden, 1, rng).into_vec());
        Ok(Self {
            activation: shape.activation,
            conv,
            proj,
            agg_weight,
            generation: 0,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.conv.first().map_or(0, |c| c.weight.rows())
    }

    pub fn out_dim(&self) -> usize {
        match self.proj.last() {
            Some(p) => p.weight.cols(),
            None => self.conv.last().map_or(0, |c| c.weight.cols()),
        }
    }

    /// Bumped whenever the optimizer changes the parameters.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn validate(&self) -> Result<()> {
        let mut d = self.in_dim();
        for (l, c) in self.conv.iter().enumerate() {
            if c.weight.rows() != d {
                return Err(GgdError::shape(format!("conv layer {l} expects {} inputs, got {d}", c.weight.rows())));
            }
            d = c.weight.cols();
        }
        for (l, p) in self.proj.iter().enumerate() {
            if p.weight.rows() != d || p.bias.len() != p.weight.cols() {
                return Err(GgdError::shape(format!("projector layer {l} does not chain")));
            }
            if p.slope.is_some() == (l + 1 == self.proj.len()) {
                return Err(GgdError::shape(format!("projector layer {l} has a misplaced activation")));
            }
            d = p.weight.cols();
        }
        if let Some(w) = &self.agg_weight {
            if w.len() != d {
                return Err(GgdError::shape(format!("aggregation weight of length {} for {d} outputs", w.len())));
            }
        }
        if !self.all_finite() {
            return Err(GgdError::Range("non-finite parameter".into()));
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.conv.iter().all(|c| c.weight.is_finite() && c.slope.is_finite())
            && self.proj.iter().all(|p| {
                p.weight.is_finite()
                    && p.bias.iter().all(|v| v.is_finite())
                    && p.slope.is_none_or(f32::is_finite)
            })
            && self.agg_weight.as_ref().is_none_or(|w| w.iter().all(|v| v.is_finite()))
    }

    /// Every parameter tensor as a flat slice, in a fixed order shared with
    /// [`ParamGrads::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        for c in &mut self.conv {
            out.push(c.weight.as_mut_slice());
            out.push(std::slice::from_mut(&mut c.slope));
        }
        for p in &mut self.proj {
            out.push(p.weight.as_mut_slice());
            out.push(&mut p.bias);
            if let Some(s) = p.slope.as_mut() {
                out.push(std::slice::from_mut(s));
            }
        }
        if let Some(w) = self.agg_weight.as_mut() {
            out.push(w);
        }
        out
    }

    /// Copy of every parameter value in [`Self::tensors_mut`] order.
    pub fn flatten(&self) -> Vec<f32> {
        self.clone().tensors_mut().into_iter().flat_map(|t| t.to_vec()).collect()
    }

    /// One Adam step over all tensors. Slopes of non-learnable activations
    /// receive a zero gradient and therefore stay fixed.
    pub fn apply_adam(&mut self, adam: &mut AdamState, grads: &ParamGrads) -> Result<()> {
        let mut grads = grads.clone();
        if !self.activation.slope_is_learnable() {
            grads.conv_slope.iter_mut().for_each(|g| *g = 0.0);
            grads.proj_slope.iter_mut().flatten().for_each(|g| *g = 0.0);
        }
        let g = grads.tensors();
        adam.step(&mut self.tensors_mut(), &g)?;
        self.generation += 1;
        Ok(())
    }

    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(GGDP_MAGIC)?;
        for v in [
            GGDP_VERSION,
            self.activation.code(),
            self.conv.len() as u32,
            self.proj.len() as u32,
            self.agg_weight.is_some() as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let scalar = |v: f32| DenseMatrix::new(1, 1, vec![v]);
        for c in &self.conv {
            write_ggdf(&c.weight, w)?;
            write_ggdf(&scalar(c.slope)?, w)?;
        }
        for p in &self.proj {
            write_ggdf(&p.weight, w)?;
            write_ggdf(&DenseMatrix::new(1, p.bias.len(), p.bias.clone())?, w)?;
            if let Some(s) = p.slope {
                write_ggdf(&scalar(s)?, w)?;
            }
        }
        if let Some(a) = &self.agg_weight {
            write_ggdf(&DenseMatrix::new(1, a.len(), a.clone())?, w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != GGDP_MAGIC {
            return Err(GgdError::Format("missing GGDP magic".into()));
        }
        let mut header = [0u32; 5];
        for h in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, act, num_conv, num_proj, has_agg] = header;
        if version != GGDP_VERSION {
            return Err(GgdError::Format(format!("unsupported GGDP version {version}")));
        }
        let activation =
            Activation::from_code(act).ok_or_else(|| GgdError::Format(format!("unknown activation code {act}")))?;
        let scalar = |r: &mut dyn Read| -> Result<f32> {
            let m = read_ggdf(&mut &mut *r)?;
            if m.shape() != (1, 1) {
                return Err(GgdError::Format("expected a 1x1 slope".into()));
            }
            Ok(m.get(0, 0))
        };
        let mut conv = Vec::new();
        for _ in 0..num_conv {
            let weight = read_ggdf(r)?;
            let slope = scalar(r)?;
            conv.push(ConvLayer { weight, slope });
        }
        let mut proj = Vec::new();
        for l in 0..num_proj {
            let weight = read_ggdf(r)?;
            let bias = read_ggdf(r)?.into_vec();
            let slope = if l + 1 < num_proj { Some(scalar(r)?) } else { None };
            proj.push(ProjLayer { weight, bias, slope });
        }
        let agg_weight = if has_agg == 1 { Some(read_ggdf(r)?.into_vec()) } else { None };
        let params = Self {
            activation,
            conv,
            proj,
            agg_weight,
            generation: 0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(&mut BufReader::new(File::open(path)?))
    }
}

/// Gradients laid out like [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub conv_w: Vec<DenseMatrix>,
    pub conv_slope: Vec<f32>,
    pub proj_w: Vec<DenseMatrix>,
    pub proj_b: Vec<Vec<f32>>,
    pub proj_slope: Vec<Option<f32>>,
    pub agg_weight: Option<Vec<f32>>,
}

impl ParamGrads {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        Self {
            conv_w: p.conv.iter().map(|c| DenseMatrix::zeros(c.weight.rows(), c.weight.cols())).collect(),
            conv_slope: vec![0.0; p.conv.len()],
            proj_w: p.proj.iter().map(|c| DenseMatrix::zeros(c.weight.rows(), c.weight.cols())).collect(),
            proj_b: p.proj.iter().map(|c| vec![0.0; c.bias.len()]).collect(),
            proj_slope: p.proj.iter().map(|c| c.slope.map(|_| 0.0)).collect(),
            agg_weight: p.agg_weight.as_ref().map(|w| vec![0.0; w.len()]),
        }
    }

    pub fn tensors(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for (w, s) in self.conv_w.iter().zip(&self.conv_slope) {
            out.push(w.as_slice());
            out.push(std::slice::from_ref(s));
        }
        for ((w, b), s) in self.proj_w.iter().zip(&self.proj_b).zip(&self.proj_slope) {
            out.push(w.as_slice());
            out.push(b);
            if let Some(s) = s {
                out.push(std::slice::from_ref(s));
            }
        }
        if let Some(a) = &self.agg_weight {
            out.push(a);
        }
        out
    }

    pub fn flatten(&self) -> Vec<f32> {
        self.tensors().into_iter().flat_map(|t| t.to_vec()).collect()
    }

    /// Elementwise accumulation, in place.
    pub fn accumulate(&mut self, other: &ParamGrads) -> Result<()> {
        for (a, b) in self.conv_w.iter_mut().zip(&other.conv_w) {
            a.add_assign(b)?;
        }
        for (a, b) in self.conv_slope.iter_mut().zip(&other.conv_slope) {
            *a += b;
        }
        for (a, b) in self.proj_w.iter_mut().zip(&other.proj_w) {
            a.add_assign(b)?;
        }
        for (a, b) in self.proj_b.iter_mut().zip(&other.proj_b) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.proj_slope.iter_mut().zip(&other.proj_slope) {
            if let (Some(x), Some(y)) = (a.as_mut(), b) {
                *x += y;
            }
        }
        if let (Some(a), Some(b)) = (self.agg_weight.as_mut(), &other.agg_weight) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    /// Per-tensor L2 norms, for diagnostics.
    pub fn norms(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
            .collect()
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Conv: the propagated input. Projector: the layer input.
    input: DenseMatrix,
    pre_activation: DenseMatrix,
}

/// Activations saved by [`encode_forward`] for [`encode_backward`].
pub struct ForwardCache<'p> {
    prop: &'p dyn Propagation,
    generation: u64,
    conv: Vec<LayerCache>,
    proj: Vec<LayerCache>,
    output_shape: (usize, usize),
}

impl ForwardCache<'_> {
    pub fn output_shape(&self) -> (usize, usize) {
        self.output_shape
    }
}

fn run_forward<'p>(
    prop: &'p dyn Propagation,
    z: &DenseMatrix,
    params: &EncoderParams,
    keep: bool,
) -> Result<(DenseMatrix, Option<ForwardCache<'p>>)> {
    if z.cols() != params.in_dim() {
        return Err(GgdError::shape(format!(
            "features have {} columns, encoder expects {}",
            z.cols(),
            params.in_dim()
        )));
    }
    let act = params.activation;
    let mut conv_cache = Vec::new();
    let mut proj_cache = Vec::new();
    let mut h = z.clone();
    for (l, layer) in params.conv.iter().enumerate() {
        let agg = prop.forward(l, &h)?;
        let pre = agg.matmul(&layer.weight)?;
        h = act.apply(&pre, layer.slope);
        if keep {
            conv_cache.push(LayerCache {
                input: agg,
                pre_activation: pre,
            });
        }
    }
    for layer in &params.proj {
        let mut pre = h.matmul(&layer.weight)?;
        pre.add_row_vector(&layer.bias)?;
        let out = match layer.slope {
            Some(s) => act.apply(&pre, s),
            None => pre.clone(),
        };
        if keep {
            proj_cache.push(LayerCache {
                input: std::mem::replace(&mut h, out),
                pre_activation: pre,
            });
        } else {
            h = out;
        }
    }
    let cache = keep.then(|| ForwardCache {
        prop,
        generation: params.generation,
        conv: conv_cache,
        proj: proj_cache,
        output_shape: h.shape(),
    });
    Ok((h, cache))
}

/// Forward pass keeping every activation needed by [`encode_backward`].
pub fn encode_forward<'p>(
    prop: &'p dyn Propagation,
    z: &DenseMatrix,
    params: &EncoderParams,
) -> Result<(DenseMatrix, ForwardCache<'p>)> {
    let (h, cache) = run_forward(prop, z, params, true)?;
    Ok((h, cache.expect("cache requested")))
}

/// Forward pass without retaining activations.
pub fn encode(prop: &dyn Propagation, z: &DenseMatrix, params: &EncoderParams) -> Result<DenseMatrix> {
    Ok(run_forward(prop, z, params, false)?.0)
}

/// Reverse pass: gradients of every parameter given `∂L/∂H`.
pub fn encode_backward(grad_h: &DenseMatrix, cache: &ForwardCache<'_>, params: &EncoderParams) -> Result<ParamGrads> {
    if cache.generation != params.generation
        || cache.conv.len() != params.conv.len()
        || cache.proj.len() != params.proj.len()
    {
        return Err(GgdError::StaleCache(format!(
            "cache generation {} vs params generation {}",
            cache.generation, params.generation
        )));
    }
    if grad_h.shape() != cache.output_shape {
        return Err(GgdError::shape(format!(
            "gradient {:?} for output {:?}",
            grad_h.shape(),
            cache.output_shape
        )));
    }
    let act = params.activation;
    let mut grads = ParamGrads::zeros_like(params);
    let mut g = grad_h.clone();

    for (l, (layer, lc)) in params.proj.iter().zip(&cache.proj).enumerate().rev() {
        if let Some(s) = layer.slope {
            let (gi, gs) = act.backward(&g, &lc.pre_activation, s)?;
            g = gi;
            grads.proj_slope[l] = Some(gs as f32);
        }
        grads.proj_w[l] = lc.input.matmul_tn(&g)?;
        grads.proj_b[l] = g.column_sums().into_iter().map(|v| v as f32).collect();
        g = g.matmul_nt(&layer.weight)?;
    }
    for (l, (layer, lc)) in params.conv.iter().zip(&cache.conv).enumerate().rev() {
        let (gi, gs) = act.backward(&g, &lc.pre_activation, layer.slope)?;
        grads.conv_slope[l] = gs as f32;
        grads.conv_w[l] = lc.input.matmul_tn(&gi)?;
        if l > 0 {
            g = cache.prop.adjoint(l, &gi.matmul_nt(&layer.weight)?)?;
        }
    }
    Ok(grads)
}

/// Relabels node `i` as `perm[i]` in both the graph and the feature rows.
pub fn permute_graph_and_features(
    g: &CsrGraph,
    x: &NodeFeatures,
    perm: &[usize],
) -> Result<(CsrGraph, NodeFeatures)> {
    x.check_nodes(g.num_nodes())?;
    check_permutation(perm, g.num_nodes())?;
    let gp = g.permute(perm)?;
    let mut inverse = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let xp = x.matrix().gather_rows(&inverse)?;
    Ok((gp, NodeFeatures::new(xp)?))
}
