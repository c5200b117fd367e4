//! Graph-building forms of the encoders. Everything here is generic over
//! the scalar type so the same code runs in training precision and in the
//! double precision used by gradient checks.

use super::config::{ModelConfig, ModelKind};
use crate::error::{dim_err, Error, Result};
use crate::numcore::{conv_output_len, Bound, Graph, NodeId, Scalar, Tensor};

/// Parameters of one RHN layer. Index `l` is the 0-based microstep.
#[derive(Clone, Debug)]
pub struct RhnLayerNodes {
    pub w_h: NodeId,
    pub w_t: NodeId,
    pub u_h: Vec<NodeId>,
    pub b_h: Vec<NodeId>,
    pub u_t: Vec<NodeId>,
    pub b_t: Vec<NodeId>,
}

impl RhnLayerNodes {
    /// Looks up `rhn{n}.*` for the 1-based layer `n`.
    pub fn from_bound(b: &Bound, n: usize, microsteps: usize) -> Result<Self> {
        let p = |rest: String| b.id(&format!("rhn{n}.{rest}"));
        Ok(Self {
            w_h: p("H.W".into())?,
            w_t: p("T.W".into())?,
            u_h: (1..=microsteps).map(|l| p(format!("H.U{l}"))).collect::<Result<_>>()?,
            b_h: (1..=microsteps).map(|l| p(format!("H.b{l}"))).collect::<Result<_>>()?,
            u_t: (1..=microsteps).map(|l| p(format!("T.U{l}"))).collect::<Result<_>>()?,
            b_t: (1..=microsteps).map(|l| p(format!("T.b{l}"))).collect::<Result<_>>()?,
        })
    }

    pub fn microsteps(&self) -> usize {
        self.u_h.len()
    }
}

#[derive(Clone, Debug)]
pub struct SpeechNodes {
    pub conv_k: NodeId,
    pub conv_b: NodeId,
    pub conv_stride: usize,
    pub layers: Vec<RhnLayerNodes>,
    pub attn_w: NodeId,
    pub attn_u: NodeId,
    pub residual: bool,
}

impl SpeechNodes {
    pub fn from_bound(b: &Bound, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            conv_k: b.id("conv.K")?,
            conv_b: b.id("conv.b")?,
            conv_stride: cfg.conv_stride,
            layers: (1..=cfg.rhn_layers)
                .map(|n| RhnLayerNodes::from_bound(b, n, cfg.microsteps))
                .collect::<Result<_>>()?,
            attn_w: b.id("attn.W")?,
            attn_u: b.id("attn.U")?,
            residual: cfg.residual,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TextNodes {
    pub embedding: NodeId,
    pub layers: Vec<RhnLayerNodes>,
    pub residual: bool,
}

impl TextNodes {
    pub fn from_bound(b: &Bound, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            embedding: b.id("emb.E")?,
            layers: (1..=cfg.rhn_layers)
                .map(|n| RhnLayerNodes::from_bound(b, n, cfg.microsteps))
                .collect::<Result<_>>()?,
            residual: cfg.residual,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ImageNodes {
    pub a: NodeId,
    pub b: NodeId,
}

impl ImageNodes {
    pub fn from_bound(b: &Bound) -> Result<Self> {
        Ok(Self {
            a: b.id("img.A")?,
            b: b.id("img.b")?,
        })
    }
}

/// `unit(A i + b)`.
pub fn encode_image<T: Scalar>(g: &mut Graph<T>, img: ImageNodes, i: NodeId) -> Result<NodeId> {
    let proj = g.affine(i, img.a, Some(img.b))?;
    g.l2_normalize(proj)
}

/// One recurrence microstep, with the input projections `(W_H x_t, W_T x_t)`
/// supplied for the first microstep only:
///
/// `h = tanh(W_H x + U_H s + b_H)`, `t = σ(W_T x + U_T s + b_T)`,
/// `s' = h ⊙ t + s ⊙ (1 − t)`.
fn microstep_projected<T: Scalar>(
    g: &mut Graph<T>,
    layer: &RhnLayerNodes,
    l: usize,
    projected: Option<(NodeId, NodeId)>,
    s_prev: NodeId,
) -> Result<NodeId> {
    let mut pre_h = g.affine(s_prev, layer.u_h[l], Some(layer.b_h[l]))?;
    let mut pre_t = g.affine(s_prev, layer.u_t[l], Some(layer.b_t[l]))?;
    if let Some((xh, xt)) = projected {
        pre_h = g.add(pre_h, xh)?;
        pre_t = g.add(pre_t, xt)?;
    }
    let h = g.tanh(pre_h);
    let t = g.sigmoid(pre_t);
    let ht = g.mul(h, t)?;
    let one = g.constant(Tensor::filled(g.shape(t), T::one()));
    let carry = g.sub(one, t)?;
    let kept = g.mul(s_prev, carry)?;
    g.add(ht, kept)
}

/// Microstep `l` (0-based). The input `x_t` is consumed only when `l == 0`.
pub fn rhn_microstep<T: Scalar>(
    g: &mut Graph<T>,
    layer: &RhnLayerNodes,
    l: usize,
    x_t: Option<NodeId>,
    s_prev: NodeId,
) -> Result<NodeId> {
    if l >= layer.microsteps() {
        return Err(Error::OutOfRange {
            index: l,
            len: layer.microsteps(),
        });
    }
    let projected = match (l, x_t) {
        (0, Some(x)) => Some((g.affine(x, layer.w_h, None)?, g.affine(x, layer.w_t, None)?)),
        _ => None,
    };
    microstep_projected(g, layer, l, projected, s_prev)
}

/// Runs one RHN layer over the rows of `x[T×D]` from state `s0`, returning
/// the top-microstep state of every timestep as a `T×hidden` matrix.
pub fn rhn_layer<T: Scalar>(g: &mut Graph<T>, layer: &RhnLayerNodes, x: NodeId, s0: NodeId) -> Result<NodeId> {
    let (steps, _) = g.value(x).dims2()?;
    if steps == 0 {
        return Err(Error::EmptySequence("rhn_layer input"));
    }
    let xh = g.affine(x, layer.w_h, None)?;
    let xt = g.affine(x, layer.w_t, None)?;
    let mut s = s0;
    let mut states = Vec::with_capacity(steps);
    for t in 0..steps {
        let ph = g.row(xh, t)?;
        let pt = g.row(xt, t)?;
        s = microstep_projected(g, layer, 0, Some((ph, pt)), s)?;
        for l in 1..layer.microsteps() {
            s = microstep_projected(g, layer, l, None, s)?;
        }
        states.push(s);
    }
    g.stack_rows(&states)
}

/// Composes RHN layers, each starting from a zero state. With `residual`,
/// a layer whose input and output widths agree adds its input to its
/// output. Only the first layer may differ in width; it then runs without
/// the residual connection. Returns every layer's output sequence.
pub fn rhn_stack<T: Scalar>(
    g: &mut Graph<T>,
    layers: &[RhnLayerNodes],
    x: NodeId,
    residual: bool,
) -> Result<Vec<NodeId>> {
    let mut input = x;
    let mut outputs = Vec::with_capacity(layers.len());
    for (n, layer) in layers.iter().enumerate() {
        let hidden = g.shape(layer.u_h[0])[0];
        let width = g.value(input).dims2()?.1;
        let s0 = g.constant(Tensor::zeros(&[hidden]));
        let mut out = rhn_layer(g, layer, input, s0)?;
        if residual {
            if width == hidden {
                out = g.add(out, input)?;
            } else if n > 0 {
                return Err(dim_err("residual rhn layer", &[width], &[hidden]));
            }
        }
        outputs.push(out);
        input = out;
    }
    Ok(outputs)
}

/// `Σ_t α_t h_t` with `α = softmax_t(U tanh(W h_t))` over unmasked steps.
/// Returns the pooled vector and the attention weights.
pub fn attention_pool<T: Scalar>(
    g: &mut Graph<T>,
    w: NodeId,
    u: NodeId,
    h: NodeId,
    mask: &[bool],
) -> Result<(NodeId, NodeId)> {
    let (steps, width) = g.value(h).dims2()?;
    if mask.len() != steps {
        return Err(dim_err("attention mask", &[steps], &[mask.len()]));
    }
    let proj = g.affine(h, w, None)?;
    let act = g.tanh(proj);
    let logits = g.affine(act, u, None)?;
    let logits = g.reshape(logits, vec![steps])?;
    let alpha = g.masked_time_softmax(logits, mask)?;
    let row = g.reshape(alpha, vec![1, steps])?;
    let pooled = g.matmul(row, h)?;
    let pooled = g.reshape(pooled, vec![width])?;
    Ok((pooled, alpha))
}

/// Node handles produced by [`encode_utterance`].
#[derive(Clone, Debug)]
pub struct UtteranceNodes {
    pub embedding: NodeId,
    pub layers: Vec<NodeId>,
    pub attention: NodeId,
    /// Convolution output rows that see at least one real frame.
    pub valid_steps: usize,
}

/// Number of leading `true` entries; errors unless the mask is a
/// right-padding mask (all valid frames before all padding frames).
pub fn valid_prefix(mask: &[bool]) -> Result<usize> {
    let n = mask.iter().take_while(|&&m| m).count();
    if mask[n..].iter().any(|&m| m) {
        return Err(Error::Config("mask must mark a prefix of valid frames".into()));
    }
    Ok(n)
}

/// `unit(Attn(RHN_res(Conv(X))))`. `features` is `T×D`; `mask`, when given,
/// marks the valid (unpadded) frames, which must form a prefix.
pub fn encode_utterance<T: Scalar>(
    g: &mut Graph<T>,
    nodes: &SpeechNodes,
    features: &Tensor<T>,
    mask: Option<&[bool]>,
) -> Result<UtteranceNodes> {
    let (frames, dim) = features.dims2()?;
    let valid_in = match mask {
        Some(m) if m.len() != frames => return Err(dim_err("frame mask", &[frames], &[m.len()])),
        Some(m) => valid_prefix(m)?,
        None => frames,
    };
    if valid_in == 0 {
        return Err(Error::EmptySequence("utterance has no valid frames"));
    }
    let mut x = features.clone();
    x.data_mut()[valid_in * dim..].iter_mut().for_each(|v| *v = T::zero());
    let x = g.constant(x);
    let s = g.shape(nodes.conv_k)[0];
    let conv = g.conv1d_full(x, nodes.conv_k, nodes.conv_b, nodes.conv_stride)?;
    let steps = g.value(conv).rows();
    let valid_steps = conv_output_len(valid_in, s, nodes.conv_stride);
    let layers = rhn_stack(g, &nodes.layers, conv, nodes.residual)?;
    let top = *layers.last().expect("at least one layer");
    let step_mask: Vec<bool> = (0..steps).map(|t| t < valid_steps).collect();
    let (pooled, attention) = attention_pool(g, nodes.attn_w, nodes.attn_u, top, &step_mask)?;
    let embedding = g.l2_normalize(pooled)?;
    Ok(UtteranceNodes {
        embedding,
        layers,
        attention,
        valid_steps,
    })
}

/// Embedding lookup, RHN stack, last state of the top layer, normalized.
pub fn encode_text<T: Scalar>(g: &mut Graph<T>, nodes: &TextNodes, tokens: &[usize]) -> Result<(NodeId, Vec<NodeId>)> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence("token sequence"));
    }
    let emb = g.gather(nodes.embedding, tokens)?;
    let layers = rhn_stack(g, &nodes.layers, emb, nodes.residual)?;
    let top = *layers.last().expect("at least one layer");
    let last = g.row(top, tokens.len() - 1)?;
    Ok((g.l2_normalize(last)?, layers))
}

/// Checks that a config describes a model of the requested kind.
pub(crate) fn expect_kind(cfg: &ModelConfig, kind: ModelKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::Config(format!("expected a {kind:?} model, got {:?}", cfg.kind)));
    }
    Ok(())
}
