//! Per-sequence appearance model: one learned embedding per capture
//! sequence plus a small MLP that outputs an affine modulation
//! (alpha, beta) of each splat's base color:
//!
//!   (alpha, beta) = f(h, q_seq, dir, base_color),  c_a = alpha * base + beta
//!
//! The MLP has two hidden layers of width 128 with ReLU and a linear
//! 6-channel head. The head starts at the identity modulation (alpha = 1,
//! beta = 0) so training begins from plain base-color rendering. The viewing
//! direction enters as the raw unit vector.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::camera::CameraPose;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::splat::{Splat, EMBED_DIM};

pub const SEQ_EMBED_DIM: usize = 32;
pub const HIDDEN_DIM: usize = 128;
pub const MLP_IN: usize = EMBED_DIM + SEQ_EMBED_DIM + 3 + 3;
pub const MLP_OUT: usize = 6;
pub const APPEARANCE_MAGIC: &[u8; 8] = b"MSGSAPP1";

/// Backward chunk size; fixed so gradient reduction order never depends on
/// the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T: Real> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major, out_dim x in_dim.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    fn init_uniform(in_dim: usize, out_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in &mut layer.weight {
            *w = T::lit(rng.random_range(-bound..bound));
        }
        layer
    }

    fn forward(&self, input: &[T], output: &mut [T]) {
        debug_assert_eq!(input.len(), self.in_dim);
        debug_assert_eq!(output.len(), self.out_dim);
        for (o, out) in output.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input.iter()) {
                acc += *w * *x;
            }
            *out = acc;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceModel<T: Real> {
    pub layers: [Linear<T>; 3],
    /// One embedding per sequence, all starting at zero.
    pub sequence_embeddings: Vec<[T; SEQ_EMBED_DIM]>,
}

impl<T: Real> AppearanceModel<T> {
    pub fn new(num_sequences: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let l1 = Linear::init_uniform(MLP_IN, HIDDEN_DIM, &mut rng);
        let l2 = Linear::init_uniform(HIDDEN_DIM, HIDDEN_DIM, &mut rng);
        // Identity-modulation head: zero weights, bias (1,1,1,0,0,0).
        let mut l3 = Linear::zeros(HIDDEN_DIM, MLP_OUT);
        for c in 0..3 {
            l3.bias[c] = T::one();
        }
        Self {
            layers: [l1, l2, l3],
            sequence_embeddings: vec![[T::zero(); SEQ_EMBED_DIM]; num_sequences],
        }
    }

    pub fn num_sequences(&self) -> usize {
        self.sequence_embeddings.len()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.finite()) && l.bias.iter().all(|v| v.finite())
        }) && self
            .sequence_embeddings
            .iter()
            .all(|e| e.iter().all(|v| v.finite()))
    }

    /// Single-sample MLP evaluation.
    pub fn mlp_forward(
        &self,
        h: &[T; EMBED_DIM],
        q_seq: &[T; SEQ_EMBED_DIM],
        dir: &Vector3<T>,
        base_color: &[T; 3],
    ) -> ([T; 3], [T; 3]) {
        let mut input = [T::zero(); MLP_IN];
        pack_input(h, q_seq, dir, base_color, &mut input);
        let mut a1 = [T::zero(); HIDDEN_DIM];
        let mut a2 = [T::zero(); HIDDEN_DIM];
        let mut out = [T::zero(); MLP_OUT];
        self.layers[0].forward(&input, &mut a1);
        relu(&mut a1);
        self.layers[1].forward(&a1, &mut a2);
        relu(&mut a2);
        self.layers[2].forward(&a2, &mut out);
        (
            [out[0], out[1], out[2]],
            [out[3], out[4], out[5]],
        )
    }
}

#[inline]
fn relu<T: Real>(xs: &mut [T]) {
    for x in xs {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn pack_input<T: Real>(
    h: &[T; EMBED_DIM],
    q: &[T; SEQ_EMBED_DIM],
    dir: &Vector3<T>,
    base: &[T; 3],
    out: &mut [T],
) {
    out[..EMBED_DIM].copy_from_slice(h);
    out[EMBED_DIM..EMBED_DIM + SEQ_EMBED_DIM].copy_from_slice(q);
    out[EMBED_DIM + SEQ_EMBED_DIM] = dir.x;
    out[EMBED_DIM + SEQ_EMBED_DIM + 1] = dir.y;
    out[EMBED_DIM + SEQ_EMBED_DIM + 2] = dir.z;
    out[EMBED_DIM + SEQ_EMBED_DIM + 3..].copy_from_slice(base);
}

/// Toned colors for one frame plus the activations needed for backprop.
#[derive(Debug, Clone)]
pub struct TonedColors<T: Real> {
    pub sequence_id: usize,
    pub values: Vec<[T; 3]>,
    inputs: Vec<T>,
    act1: Vec<T>,
    act2: Vec<T>,
    alphas: Vec<[T; 3]>,
}

/// Evaluate the appearance MLP for every splat of one frame. The viewing
/// direction is the unit vector from the camera center to the splat mean.
pub fn modulate_colors<T: Real>(
    model: &AppearanceModel<T>,
    splats: &[Splat<T>],
    sequence_id: usize,
    pose: &CameraPose<T>,
) -> Result<TonedColors<T>> {
    if sequence_id >= model.num_sequences() {
        return Err(Error::InvalidArg(format!(
            "sequence id {sequence_id} out of range (N = {})",
            model.num_sequences()
        )));
    }
    let n = splats.len();
    let q_seq = model.sequence_embeddings[sequence_id];
    let center = pose.center();
    let mut toned = TonedColors {
        sequence_id,
        values: vec![[T::zero(); 3]; n],
        inputs: vec![T::zero(); n * MLP_IN],
        act1: vec![T::zero(); n * HIDDEN_DIM],
        act2: vec![T::zero(); n * HIDDEN_DIM],
        alphas: vec![[T::zero(); 3]; n],
    };

    let inputs = &mut toned.inputs;
    let act1 = &mut toned.act1;
    let act2 = &mut toned.act2;
    let values = &mut toned.values;
    let alphas = &mut toned.alphas;
    splats
        .par_iter()
        .zip(inputs.par_chunks_mut(MLP_IN))
        .zip(act1.par_chunks_mut(HIDDEN_DIM))
        .zip(act2.par_chunks_mut(HIDDEN_DIM))
        .zip(values.par_iter_mut())
        .zip(alphas.par_iter_mut())
        .for_each(|(((((splat, input), a1), a2), value), alpha_out)| {
            let offset = splat.mu - center;
            let norm = offset.norm();
            let dir = if norm > T::lit(1e-12) {
                offset / norm
            } else {
                Vector3::new(T::zero(), T::zero(), T::one())
            };
            pack_input(&splat.embedding, &q_seq, &dir, &splat.base_color, input);
            let mut out = [T::zero(); MLP_OUT];
            model.layers[0].forward(input, a1);
            relu(a1);
            model.layers[1].forward(a1, a2);
            relu(a2);
            model.layers[2].forward(a2, &mut out);
            let alpha = [out[0], out[1], out[2]];
            let beta = [out[3], out[4], out[5]];
            for c in 0..3 {
                value[c] = alpha[c] * splat.base_color[c] + beta[c];
            }
            *alpha_out = alpha;
        });
    Ok(toned)
}

/// Gradients of the appearance path.
#[derive(Debug, Clone)]
pub struct AppearanceGrads<T: Real> {
    pub d_layers: [Linear<T>; 3],
    pub d_sequence_embeddings: Vec<[T; SEQ_EMBED_DIM]>,
    pub d_splat_embedding: Vec<[T; EMBED_DIM]>,
    pub d_base_color: Vec<[T; 3]>,
}

impl<T: Real> AppearanceGrads<T> {
    /// Elementwise sum with gradients from another frame pass.
    pub fn accumulate(&mut self, other: &Self) {
        for l in 0..3 {
            for (a, b) in self.d_layers[l]
                .weight
                .iter_mut()
                .zip(other.d_layers[l].weight.iter())
            {
                *a += *b;
            }
            for (a, b) in self.d_layers[l]
                .bias
                .iter_mut()
                .zip(other.d_layers[l].bias.iter())
            {
                *a += *b;
            }
        }
        for (a, b) in self
            .d_sequence_embeddings
            .iter_mut()
            .zip(other.d_sequence_embeddings.iter())
        {
            for k in 0..SEQ_EMBED_DIM {
                a[k] += b[k];
            }
        }
        for (a, b) in self
            .d_splat_embedding
            .iter_mut()
            .zip(other.d_splat_embedding.iter())
        {
            for k in 0..EMBED_DIM {
                a[k] += b[k];
            }
        }
        for (a, b) in self.d_base_color.iter_mut().zip(other.d_base_color.iter()) {
            for c in 0..3 {
                a[c] += b[c];
            }
        }
    }
}

/// Reverse-mode gradients through the affine modulation and the MLP.
/// The viewing direction is treated as a constant input; position gradients
/// flow through the rasterizer only.
pub fn appearance_backward<T: Real>(
    model: &AppearanceModel<T>,
    splats: &[Splat<T>],
    toned: &TonedColors<T>,
    d_toned: &[[T; 3]],
) -> AppearanceGrads<T> {
    let n = splats.len();
    assert_eq!(d_toned.len(), n);

    struct Partial<T: Real> {
        d_layers: [Linear<T>; 3],
        d_seq: [T; SEQ_EMBED_DIM],
        d_h: Vec<[T; EMBED_DIM]>,
        d_base: Vec<[T; 3]>,
        start: usize,
    }

    let partials: Vec<Partial<T>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk_idx| {
            let start = chunk_idx * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut part = Partial {
                d_layers: [
                    Linear::zeros(MLP_IN, HIDDEN_DIM),
                    Linear::zeros(HIDDEN_DIM, HIDDEN_DIM),
                    Linear::zeros(HIDDEN_DIM, MLP_OUT),
                ],
                d_seq: [T::zero(); SEQ_EMBED_DIM],
                d_h: vec![[T::zero(); EMBED_DIM]; end - start],
                d_base: vec![[T::zero(); 3]; end - start],
                start,
            };
            let mut d_out = [T::zero(); MLP_OUT];
            let mut d_a2 = [T::zero(); HIDDEN_DIM];
            let mut d_a1 = [T::zero(); HIDDEN_DIM];
            let mut d_in = [T::zero(); MLP_IN];
            for i in start..end {
                let local = i - start;
                let splat = &splats[i];
                let g = d_toned[i];
                if g == [T::zero(); 3] {
                    continue; // culled or untouched by the loss
                }
                let alpha = toned.alphas[i];
                // c_a = alpha * base + beta.
                for c in 0..3 {
                    d_out[c] = g[c] * splat.base_color[c];
                    d_out[3 + c] = g[c];
                    part.d_base[local][c] = g[c] * alpha[c];
                }
                let input = &toned.inputs[i * MLP_IN..(i + 1) * MLP_IN];
                let a1 = &toned.act1[i * HIDDEN_DIM..(i + 1) * HIDDEN_DIM];
                let a2 = &toned.act2[i * HIDDEN_DIM..(i + 1) * HIDDEN_DIM];

                backprop_layer(&model.layers[2], a2, &d_out, &mut part.d_layers[2], &mut d_a2);
                relu_backward(a2, &mut d_a2);
                backprop_layer(&model.layers[1], a1, &d_a2, &mut part.d_layers[1], &mut d_a1);
                relu_backward(a1, &mut d_a1);
                backprop_layer(&model.layers[0], input, &d_a1, &mut part.d_layers[0], &mut d_in);

                for k in 0..EMBED_DIM {
                    part.d_h[local][k] = d_in[k];
                }
                for k in 0..SEQ_EMBED_DIM {
                    part.d_seq[k] += d_in[EMBED_DIM + k];
                }
                for c in 0..3 {
                    part.d_base[local][c] += d_in[EMBED_DIM + SEQ_EMBED_DIM + 3 + c];
                }
            }
            part
        })
        .collect();

    let mut grads = AppearanceGrads {
        d_layers: [
            Linear::zeros(MLP_IN, HIDDEN_DIM),
            Linear::zeros(HIDDEN_DIM, HIDDEN_DIM),
            Linear::zeros(HIDDEN_DIM, MLP_OUT),
        ],
        d_sequence_embeddings: vec![[T::zero(); SEQ_EMBED_DIM]; model.num_sequences()],
        d_splat_embedding: vec![[T::zero(); EMBED_DIM]; n],
        d_base_color: vec![[T::zero(); 3]; n],
    };
    for part in partials {
        for l in 0..3 {
            for (a, b) in grads.d_layers[l]
                .weight
                .iter_mut()
                .zip(part.d_layers[l].weight.iter())
            {
                *a += *b;
            }
            for (a, b) in grads.d_layers[l]
                .bias
                .iter_mut()
                .zip(part.d_layers[l].bias.iter())
            {
                *a += *b;
            }
        }
        for k in 0..SEQ_EMBED_DIM {
            grads.d_sequence_embeddings[toned.sequence_id][k] += part.d_seq[k];
        }
        for (local, dh) in part.d_h.iter().enumerate() {
            grads.d_splat_embedding[part.start + local] = *dh;
        }
        for (local, db) in part.d_base.iter().enumerate() {
            grads.d_base_color[part.start + local] = *db;
        }
    }
    grads
}

fn backprop_layer<T: Real>(
    layer: &Linear<T>,
    input: &[T],
    d_output: &[T],
    d_layer: &mut Linear<T>,
    d_input: &mut [T],
) {
    for v in d_input.iter_mut() {
        *v = T::zero();
    }
    for o in 0..layer.out_dim {
        let g = d_output[o];
        d_layer.bias[o] += g;
        if g == T::zero() {
            continue;
        }
        let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
        let d_row = &mut d_layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
        for i in 0..layer.in_dim {
            d_row[i] += g * input[i];
            d_input[i] += g * row[i];
        }
    }
}

/// Post-activation gradient gate: activations are stored post-ReLU, so a
/// zero activation means the pre-activation was <= 0.
fn relu_backward<T: Real>(post_activation: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(post_activation.iter()) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, layer shapes, weights, then embeddings, all
// little-endian with f32 payloads.
// ---------------------------------------------------------------------------

pub fn write_appearance_bytes<T: Real>(model: &AppearanceModel<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(APPEARANCE_MAGIC);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        out.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.num_sequences() as u32).to_le_bytes());
    out.extend_from_slice(&(SEQ_EMBED_DIM as u32).to_le_bytes());
    let mut push = |v: T| out.extend_from_slice(&(v.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
    for layer in &model.layers {
        for &w in &layer.weight {
            push(w);
        }
        for &b in &layer.bias {
            push(b);
        }
    }
    for e in &model.sequence_embeddings {
        for &v in e.iter() {
            push(v);
        }
    }
}

pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: String,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], origin: &str) -> Self {
        Self {
            bytes,
            pos: 0,
            origin: origin.to_string(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("{}: truncated", self.origin)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32<T: Real>(&mut self) -> Result<T> {
        Ok(T::lit(
            f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64,
        ))
    }

    pub fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn read_appearance_bytes<T: Real>(reader: &mut ByteReader) -> Result<AppearanceModel<T>> {
    let magic = reader.take(8)?;
    if magic != APPEARANCE_MAGIC {
        return Err(Error::Format("missing MSGSAPP1 magic".into()));
    }
    let n_layers = reader.u32()? as usize;
    if n_layers != 3 {
        return Err(Error::Format(format!("expected 3 layers, got {n_layers}")));
    }
    let mut shapes = Vec::new();
    for _ in 0..n_layers {
        let in_dim = reader.u32()? as usize;
        let out_dim = reader.u32()? as usize;
        shapes.push((in_dim, out_dim));
    }
    if shapes != [(MLP_IN, HIDDEN_DIM), (HIDDEN_DIM, HIDDEN_DIM), (HIDDEN_DIM, MLP_OUT)] {
        return Err(Error::Format(format!("unexpected layer shapes {shapes:?}")));
    }
    let num_sequences = reader.u32()? as usize;
    let embed_dim = reader.u32()? as usize;
    if embed_dim != SEQ_EMBED_DIM {
        return Err(Error::Format(format!(
            "sequence embedding dim {embed_dim}, expected {SEQ_EMBED_DIM}"
        )));
    }
    let mut layers = Vec::new();
    for &(in_dim, out_dim) in &shapes {
        let mut layer = Linear::zeros(in_dim, out_dim);
        for w in &mut layer.weight {
            *w = reader.f32()?;
        }
        for b in &mut layer.bias {
            *b = reader.f32()?;
        }
        layers.push(layer);
    }
    let mut embeddings = vec![[T::zero(); SEQ_EMBED_DIM]; num_sequences];
    for e in &mut embeddings {
        for v in e.iter_mut() {
            *v = reader.f32()?;
        }
    }
    let layers: [Linear<T>; 3] = layers.try_into().map_err(|_| Error::Format("layers".into()))?;
    Ok(AppearanceModel {
        layers,
        sequence_embeddings: embeddings,
    })
}

pub fn save_appearance<T: Real>(path: &std::path::Path, model: &AppearanceModel<T>) -> Result<()> {
    let mut bytes = Vec::new();
    write_appearance_bytes(model, &mut bytes);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_appearance<T: Real>(path: &std::path::Path) -> Result<AppearanceModel<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ByteReader::new(&bytes, &path.display().to_string());
    read_appearance_bytes(&mut reader)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;

    fn random_splats(rng: &mut StdRng, n: usize) -> Vec<Splat<f64>> {
        (0..n)
            .map(|_| {
                let mut s = Splat::new(
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(2.0..6.0),
                    ),
                    [
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                    ],
                );
                for v in &mut s.embedding {
                    *v = rng.random_range(-0.5..0.5);
                }
                s
            })
            .collect()
    }

    fn randomize_model(model: &mut AppearanceModel<f64>, rng: &mut StdRng) {
        for layer in &mut model.layers {
            for w in &mut layer.weight {
                *w = rng.random_range(-0.2..0.2);
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-0.1..0.1);
            }
        }
        for e in &mut model.sequence_embeddings {
            for v in e.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut model = AppearanceModel::<f64>::new(1, 0);
        for layer in &mut model.layers {
            layer.weight.fill(0.0);
            layer.bias.fill(0.0);
        }
        let (alpha, beta) = model.mlp_forward(
            &[0.1; EMBED_DIM],
            &[0.2; SEQ_EMBED_DIM],
            &Vector3::new(0.0, 0.0, 1.0),
            &[0.5; 3],
        );
        assert_eq!(alpha, [0.0; 3]);
        assert_eq!(beta, [0.0; 3]);
    }

    #[test]
    fn identity_head_initialization() {
        let model = AppearanceModel::<f64>::new(4, 7);
        let (alpha, beta) = model.mlp_forward(
            &[0.3; EMBED_DIM],
            &[-0.4; SEQ_EMBED_DIM],
            &Vector3::new(0.0, 1.0, 0.0),
            &[0.2, 0.6, 0.9],
        );
        assert_eq!(alpha, [1.0; 3]);
        assert_eq!(beta, [0.0; 3]);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let mut rng = StdRng::seed_from_u64(41);
        let mut model = AppearanceModel::<f64>::new(2, 0);
        randomize_model(&mut model, &mut rng);
        let h = std::array::from_fn::<f64, EMBED_DIM, _>(|_| rng.random_range(-1.0..1.0));
        let q = std::array::from_fn::<f64, SEQ_EMBED_DIM, _>(|_| rng.random_range(-1.0..1.0));
        let dir = Vector3::new(0.3, -0.5, 0.8).normalize();
        let base = [0.2, 0.4, 0.6];
        let (alpha, beta) = model.mlp_forward(&h, &q, &dir, &base);

        // Independent matrix-multiply chain.
        let mut x = Vec::new();
        x.extend_from_slice(&h);
        x.extend_from_slice(&q);
        x.extend_from_slice(&[dir.x, dir.y, dir.z]);
        x.extend_from_slice(&base);
        let dense = |layer: &Linear<f64>, x: &[f64]| -> Vec<f64> {
            (0..layer.out_dim)
                .map(|o| {
                    layer.bias[o]
                        + (0..layer.in_dim)
                            .map(|i| layer.weight[o * layer.in_dim + i] * x[i])
                            .sum::<f64>()
                })
                .collect()
        };
        let a1: Vec<f64> = dense(&model.layers[0], &x).iter().map(|v| v.max(0.0)).collect();
        let a2: Vec<f64> = dense(&model.layers[1], &a1).iter().map(|v| v.max(0.0)).collect();
        let out = dense(&model.layers[2], &a2);
        for c in 0..3 {
            assert!((alpha[c] - out[c]).abs() < 1e-12);
            assert!((beta[c] - out[3 + c]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_modulation_reproduces_base_colors() {
        let mut rng = StdRng::seed_from_u64(42);
        let model = AppearanceModel::<f64>::new(1, 3);
        let splats = random_splats(&mut rng, 20);
        let toned = modulate_colors(&model, &splats, 0, &CameraPose::identity()).unwrap();
        for (t, s) in toned.values.iter().zip(splats.iter()) {
            assert_eq!(*t, s.base_color);
        }
    }

    #[test]
    fn constant_beta_when_alpha_zeroed() {
        let mut model = AppearanceModel::<f64>::new(1, 3);
        model.layers[2].bias = vec![0.0, 0.0, 0.0, 0.15, 0.25, 0.35];
        let mut rng = StdRng::seed_from_u64(43);
        let splats = random_splats(&mut rng, 8);
        let toned = modulate_colors(&model, &splats, 0, &CameraPose::identity()).unwrap();
        for t in &toned.values {
            assert_eq!(*t, [0.15, 0.25, 0.35]);
        }
    }

    #[test]
    fn sequence_choice_matters_iff_embeddings_differ() {
        let mut rng = StdRng::seed_from_u64(44);
        let mut model = AppearanceModel::<f64>::new(2, 0);
        randomize_model(&mut model, &mut rng);
        model.sequence_embeddings[1] = model.sequence_embeddings[0];
        let splats = random_splats(&mut rng, 10);
        let pose = CameraPose::identity();
        let t0 = modulate_colors(&model, &splats, 0, &pose).unwrap();
        let t1 = modulate_colors(&model, &splats, 1, &pose).unwrap();
        assert_eq!(t0.values, t1.values);
        for v in model.sequence_embeddings[1].iter_mut() {
            *v += 0.3;
        }
        let t1b = modulate_colors(&model, &splats, 1, &pose).unwrap();
        assert!(t0.values.iter().zip(t1b.values.iter()).any(|(a, b)| a != b));
    }

    #[test]
    fn unknown_sequence_is_rejected() {
        let model = AppearanceModel::<f64>::new(2, 0);
        let splats = random_splats(&mut StdRng::seed_from_u64(1), 2);
        assert!(modulate_colors(&model, &splats, 2, &CameraPose::identity()).is_err());
    }

    #[test]
    fn zero_upstream_gradients_give_zero_grads() {
        let mut rng = StdRng::seed_from_u64(45);
        let mut model = AppearanceModel::<f64>::new(2, 0);
        randomize_model(&mut model, &mut rng);
        let splats = random_splats(&mut rng, 6);
        let toned = modulate_colors(&model, &splats, 0, &CameraPose::identity()).unwrap();
        let grads = appearance_backward(&model, &splats, &toned, &vec![[0.0; 3]; 6]);
        assert!(grads.d_layers.iter().all(|l| l.weight.iter().all(|&v| v == 0.0)));
        assert!(grads.d_base_color.iter().all(|g| *g == [0.0; 3]));
    }

    #[test]
    fn base_color_gradient_is_alpha_when_mlp_frozen() {
        // With the identity-initialized model the MLP output does not depend
        // on its weights' gradient path for this check: alpha = 1 everywhere,
        // and the direct path gives dL/d base = alpha * dL/d toned.
        let model = AppearanceModel::<f64>::new(1, 3);
        let mut rng = StdRng::seed_from_u64(46);
        let splats = random_splats(&mut rng, 5);
        let toned = modulate_colors(&model, &splats, 0, &CameraPose::identity()).unwrap();
        let d_toned: Vec<[f64; 3]> = (0..5)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let grads = appearance_backward(&model, &splats, &toned, &d_toned);
        // Zero head weights block the MLP input path, so the whole gradient
        // is the direct affine path with alpha = 1.
        for (g, d) in grads.d_base_color.iter().zip(d_toned.iter()) {
            for c in 0..3 {
                assert!((g[c] - d[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn appearance_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(47);
        let mut model = AppearanceModel::<f64>::new(2, 0);
        randomize_model(&mut model, &mut rng);
        let splats = random_splats(&mut rng, 4);
        let pose = CameraPose::identity();
        let d_toned: Vec<[f64; 3]> = (0..4)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let loss = |model: &AppearanceModel<f64>, splats: &[Splat<f64>]| -> f64 {
            let toned = modulate_colors(model, splats, 1, &pose).unwrap();
            toned
                .values
                .iter()
                .zip(d_toned.iter())
                .map(|(v, d)| v[0] * d[0] + v[1] * d[1] + v[2] * d[2])
                .sum()
        };
        let toned = modulate_colors(&model, &splats, 1, &pose).unwrap();
        let grads = appearance_backward(&model, &splats, &toned, &d_toned);
        let h = 1e-5;
        let check = |analytic: f64, fd: f64, what: &str| {
            let denom = analytic.abs().max(fd.abs()).max(1e-4);
            assert!(
                (analytic - fd).abs() / denom < 1e-3,
                "{what}: {analytic} vs {fd}"
            );
        };

        // A spread of weight entries in every layer.
        for l in 0..3 {
            let len = model.layers[l].weight.len();
            for idx in (0..len).step_by(len / 13 + 1) {
                let mut mp = model.clone();
                mp.layers[l].weight[idx] += h;
                let mut mm = model.clone();
                mm.layers[l].weight[idx] -= h;
                let fd = (loss(&mp, &splats) - loss(&mm, &splats)) / (2.0 * h);
                check(grads.d_layers[l].weight[idx], fd, &format!("w{l}[{idx}]"));
            }
            for idx in 0..model.layers[l].bias.len().min(6) {
                let mut mp = model.clone();
                mp.layers[l].bias[idx] += h;
                let mut mm = model.clone();
                mm.layers[l].bias[idx] -= h;
                let fd = (loss(&mp, &splats) - loss(&mm, &splats)) / (2.0 * h);
                check(grads.d_layers[l].bias[idx], fd, &format!("b{l}[{idx}]"));
            }
        }
        // Sequence embedding (the active one).
        for k in (0..SEQ_EMBED_DIM).step_by(5) {
            let mut mp = model.clone();
            mp.sequence_embeddings[1][k] += h;
            let mut mm = model.clone();
            mm.sequence_embeddings[1][k] -= h;
            let fd = (loss(&mp, &splats) - loss(&mm, &splats)) / (2.0 * h);
            check(grads.d_sequence_embeddings[1][k], fd, &format!("q[{k}]"));
        }
        // Per-splat embedding and base color.
        for i in 0..splats.len() {
            for k in (0..EMBED_DIM).step_by(9) {
                let mut sp = splats.clone();
                sp[i].embedding[k] += h;
                let mut sm = splats.clone();
                sm[i].embedding[k] -= h;
                let fd = (loss(&model, &sp) - loss(&model, &sm)) / (2.0 * h);
                check(grads.d_splat_embedding[i][k], fd, &format!("h[{i}][{k}]"));
            }
            for c in 0..3 {
                let mut sp = splats.clone();
                sp[i].base_color[c] += h;
                let mut sm = splats.clone();
                sm[i].base_color[c] -= h;
                let fd = (loss(&model, &sp) - loss(&model, &sm)) / (2.0 * h);
                check(grads.d_base_color[i][c], fd, &format!("base[{i}][{c}]"));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = StdRng::seed_from_u64(48);
        let mut model = AppearanceModel::<f32>::new(3, 9);
        for e in &mut model.sequence_embeddings {
            for v in e.iter_mut() {
                *v = rng.random_range(-1.0f32..1.0);
            }
        }
        let dir = std::env::temp_dir().join("msgs_app_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.msgsapp");
        save_appearance(&path, &model).unwrap();
        let back: AppearanceModel<f32> = load_appearance(&path).unwrap();
        assert_eq!(model, back);
    }
}
