//! Parameter storage, initialization, and the flat-vector layout.
//!
//! Parameters live as typed arrays inside [`ParamSet`] so forward/adjoint code
//! stays readable; the optimizer, checkpoints, and the gradient checker see
//! them through a single flattened `f64` vector. Complex tensors interleave
//! as (re, im) pairs. The flattening order is the field-walk order of
//! [`ParamSet::for_each_slot`], which is fixed and shared by every consumer;
//! [`Layout`] records names, shapes, and offsets so any flat index maps back
//! to a human-readable label. The mutable and immutable walkers must visit
//! slots in the same order — a unit test locks the two together.

use ndarray::{Array1, Array2, Array3, Array4};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use ssp_core::{Error, Result};

use crate::config::{BackboneMode, DecoderKind, EncoderKind, ModelConfig, GATE_HIDDEN};

/// A 1×1 channel map: weight `(out, in)` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// A two-layer MLP acting on channel vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// A padded convolution: weight `(out, in, kh, kw)` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
}

/// Weights of one residual feature block: either a pair of axis-wise complex
/// mode mixers `(modes, out, in)` or a local 3×3 convolution.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockParams {
    Spectral {
        mix_x: Array3<Complex64>,
        mix_y: Array3<Complex64>,
    },
    Conv(ConvParams),
}

/// Transposed-convolution upsampler for downsampled configurations:
/// weight `(in, out, r, r)` plus bias, painting one r×r patch per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleParams {
    pub w: Array4<f64>,
    pub b: Array1<f64>,
}

/// Every learnable tensor in the model. Optional fields exist only under the
/// configuration that uses them, so the flat layout always matches the
/// architecture exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub enc_lift: ConvParams,
    pub enc_blocks: Vec<BlockParams>,
    pub enc_attn: MlpParams,
    pub proj: Option<PointwiseParams>,
    pub lift: Option<PointwiseParams>,
    /// Per-channel temporal evolution matrices, `(c_z, t, t)`.
    pub kbar: Option<Array3<Complex64>>,
    pub gate: Option<MlpParams>,
    pub closure1: ConvParams,
    pub closure2: ConvParams,
    pub dec_attn: MlpParams,
    pub dec_branch: BlockParams,
    pub dec_local: ConvParams,
    pub dec_read: PointwiseParams,
    pub dec_up: Option<UpsampleParams>,
}

/// Borrowed view of one slot's scalars during a layout walk.
pub enum SlotRef<'a> {
    Real(&'a [f64]),
    Cplx(&'a [Complex64]),
}

/// Mutable counterpart of [`SlotRef`].
pub enum SlotMut<'a> {
    Real(&'a mut [f64]),
    Cplx(&'a mut [Complex64]),
}

fn real<'a, D: ndarray::Dimension>(
    name: &str,
    a: &'a ndarray::Array<f64, D>,
    f: &mut impl FnMut(String, Vec<usize>, SlotRef<'a>),
) {
    f(name.to_owned(), a.shape().to_vec(), SlotRef::Real(a.as_slice().expect("standard layout")));
}

fn real_mut<'a, D: ndarray::Dimension>(
    name: &str,
    a: &'a mut ndarray::Array<f64, D>,
    f: &mut impl FnMut(String, Vec<usize>, SlotMut<'a>),
) {
    let shape = a.shape().to_vec();
    f(name.to_owned(), shape, SlotMut::Real(a.as_slice_mut().expect("standard layout")));
}

fn cplx<'a, D: ndarray::Dimension>(
    name: &str,
    a: &'a ndarray::Array<Complex64, D>,
    f: &mut impl FnMut(String, Vec<usize>, SlotRef<'a>),
) {
    f(name.to_owned(), a.shape().to_vec(), SlotRef::Cplx(a.as_slice().expect("standard layout")));
}

fn cplx_mut<'a, D: ndarray::Dimension>(
    name: &str,
    a: &'a mut ndarray::Array<Complex64, D>,
    f: &mut impl FnMut(String, Vec<usize>, SlotMut<'a>),
) {
    let shape = a.shape().to_vec();
    f(name.to_owned(), shape, SlotMut::Cplx(a.as_slice_mut().expect("standard layout")));
}

fn walk_mlp<'a>(prefix: &str, m: &'a MlpParams, f: &mut impl FnMut(String, Vec<usize>, SlotRef<'a>)) {
    real(&format!("{prefix}.w1"), &m.w1, f);
    real(&format!("{prefix}.b1"), &m.b1, f);
    real(&format!("{prefix}.w2"), &m.w2, f);
    real(&format!("{prefix}.b2"), &m.b2, f);
}

fn walk_mlp_mut<'a>(prefix: &str, m: &'a mut MlpParams, f: &mut impl FnMut(String, Vec<usize>, SlotMut<'a>)) {
    real_mut(&format!("{prefix}.w1"), &mut m.w1, f);
    real_mut(&format!("{prefix}.b1"), &mut m.b1, f);
    real_mut(&format!("{prefix}.w2"), &mut m.w2, f);
    real_mut(&format!("{prefix}.b2"), &mut m.b2, f);
}

fn walk_block<'a>(prefix: &str, block: &'a BlockParams, f: &mut impl FnMut(String, Vec<usize>, SlotRef<'a>)) {
    match block {
        BlockParams::Spectral { mix_x, mix_y } => {
            cplx(&format!("{prefix}.mix_x"), mix_x, f);
            cplx(&format!("{prefix}.mix_y"), mix_y, f);
        }
        BlockParams::Conv(conv) => {
            real(&format!("{prefix}.conv.w"), &conv.w, f);
            real(&format!("{prefix}.conv.b"), &conv.b, f);
        }
    }
}

fn walk_block_mut<'a>(
    prefix: &str,
    block: &'a mut BlockParams,
    f: &mut impl FnMut(String, Vec<usize>, SlotMut<'a>),
) {
    match block {
        BlockParams::Spectral { mix_x, mix_y } => {
            cplx_mut(&format!("{prefix}.mix_x"), mix_x, f);
            cplx_mut(&format!("{prefix}.mix_y"), mix_y, f);
        }
        BlockParams::Conv(conv) => {
            real_mut(&format!("{prefix}.conv.w"), &mut conv.w, f);
            real_mut(&format!("{prefix}.conv.b"), &mut conv.b, f);
        }
    }
}

impl ParamSet {
    /// Visits every slot (name, shape, data) in the canonical flattening
    /// order.
    pub fn for_each_slot<'a>(&'a self, f: &mut impl FnMut(String, Vec<usize>, SlotRef<'a>)) {
        real("enc.lift.w", &self.enc_lift.w, f);
        real("enc.lift.b", &self.enc_lift.b, f);
        for (i, b) in self.enc_blocks.iter().enumerate() {
            walk_block(&format!("enc.block{i}"), b, f);
        }
        walk_mlp("enc.attn", &self.enc_attn, f);
        if let Some(p) = &self.proj {
            real("proj.w", &p.w, f);
            real("proj.b", &p.b, f);
        }
        if let Some(p) = &self.lift {
            real("lift.w", &p.w, f);
            real("lift.b", &p.b, f);
        }
        if let Some(k) = &self.kbar {
            cplx("prop.kbar", k, f);
        }
        if let Some(g) = &self.gate {
            walk_mlp("prop.gate", g, f);
        }
        real("prop.closure1.w", &self.closure1.w, f);
        real("prop.closure1.b", &self.closure1.b, f);
        real("prop.closure2.w", &self.closure2.w, f);
        real("prop.closure2.b", &self.closure2.b, f);
        walk_mlp("dec.attn", &self.dec_attn, f);
        walk_block("dec.branch", &self.dec_branch, f);
        real("dec.local.w", &self.dec_local.w, f);
        real("dec.local.b", &self.dec_local.b, f);
        real("dec.read.w", &self.dec_read.w, f);
        real("dec.read.b", &self.dec_read.b, f);
        if let Some(u) = &self.dec_up {
            real("dec.up.w", &u.w, f);
            real("dec.up.b", &u.b, f);
        }
    }

    /// Mutable variant of [`ParamSet::for_each_slot`], same order.
    pub fn for_each_slot_mut<'a>(&'a mut self, f: &mut impl FnMut(String, Vec<usize>, SlotMut<'a>)) {
        real_mut("enc.lift.w", &mut self.enc_lift.w, f);
        real_mut("enc.lift.b", &mut self.enc_lift.b, f);
        for (i, b) in self.enc_blocks.iter_mut().enumerate() {
            walk_block_mut(&format!("enc.block{i}"), b, f);
        }
        walk_mlp_mut("enc.attn", &mut self.enc_attn, f);
        if let Some(p) = &mut self.proj {
            real_mut("proj.w", &mut p.w, f);
            real_mut("proj.b", &mut p.b, f);
        }
        if let Some(p) = &mut self.lift {
            real_mut("lift.w", &mut p.w, f);
            real_mut("lift.b", &mut p.b, f);
        }
        if let Some(k) = &mut self.kbar {
            cplx_mut("prop.kbar", k, f);
        }
        if let Some(g) = &mut self.gate {
            walk_mlp_mut("prop.gate", g, f);
        }
        real_mut("prop.closure1.w", &mut self.closure1.w, f);
        real_mut("prop.closure1.b", &mut self.closure1.b, f);
        real_mut("prop.closure2.w", &mut self.closure2.w, f);
        real_mut("prop.closure2.b", &mut self.closure2.b, f);
        walk_mlp_mut("dec.attn", &mut self.dec_attn, f);
        walk_block_mut("dec.branch", &mut self.dec_branch, f);
        real_mut("dec.local.w", &mut self.dec_local.w, f);
        real_mut("dec.local.b", &mut self.dec_local.b, f);
        real_mut("dec.read.w", &mut self.dec_read.w, f);
        real_mut("dec.read.b", &mut self.dec_read.b, f);
        if let Some(u) = &mut self.dec_up {
            real_mut("dec.up.w", &mut u.w, f);
            real_mut("dec.up.b", &mut u.b, f);
        }
    }

    /// All-zero parameters of the shape the configuration dictates. Also used
    /// as the gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (c_s, c_z, t, d_u) = (config.c_s, config.c_z, config.t, config.d_u);
        let (modes_x, modes_y) = config.mixer_modes();
        let make_block = |spectral: bool| -> BlockParams {
            if spectral {
                BlockParams::Spectral {
                    mix_x: Array3::zeros((modes_x, c_s, c_s)),
                    mix_y: Array3::zeros((modes_y, c_s, c_s)),
                }
            } else {
                BlockParams::Conv(ConvParams {
                    w: Array4::zeros((c_s, c_s, 3, 3)),
                    b: Array1::zeros(c_s),
                })
            }
        };
        let coord_channels = if config.use_coords { 2 } else { 0 };
        let (lift_in, lift_out) = match config.encoder {
            EncoderKind::TimeToChannel => (t * d_u + coord_channels, t * c_s),
            _ => (d_u + coord_channels, c_s),
        };
        let spectral_blocks = config.encoder != EncoderKind::Conv;
        let ah = config.attn_hidden();
        let (cl_base, cl_hidden) = config.closure_channels();
        let attn = || MlpParams {
            w1: Array2::zeros((ah, c_s)),
            b1: Array1::zeros(ah),
            w2: Array2::zeros((c_s, ah)),
            b2: Array1::zeros(c_s),
        };
        Ok(ParamSet {
            enc_lift: ConvParams {
                w: Array4::zeros((lift_out, lift_in, 3, 3)),
                b: Array1::zeros(lift_out),
            },
            enc_blocks: vec![make_block(spectral_blocks), make_block(spectral_blocks)],
            enc_attn: attn(),
            proj: (!config.projectors_identity).then(|| PointwiseParams {
                w: Array2::zeros((c_z, c_s)),
                b: Array1::zeros(c_z),
            }),
            lift: (!config.projectors_identity).then(|| PointwiseParams {
                w: Array2::zeros((c_s, c_z)),
                b: Array1::zeros(c_s),
            }),
            kbar: (config.backbone == BackboneMode::Learned).then(|| Array3::zeros((c_z, t, t))),
            gate: (config.backbone == BackboneMode::Learned).then(|| MlpParams {
                w1: Array2::zeros((GATE_HIDDEN, 5)),
                b1: Array1::zeros(GATE_HIDDEN),
                w2: Array2::zeros((c_z, GATE_HIDDEN)),
                b2: Array1::zeros(c_z),
            }),
            closure1: ConvParams {
                w: Array4::zeros((cl_hidden, cl_base, 3, 3)),
                b: Array1::zeros(cl_hidden),
            },
            closure2: ConvParams {
                w: Array4::zeros((cl_base, cl_hidden, 3, 3)),
                b: Array1::zeros(cl_base),
            },
            dec_attn: attn(),
            dec_branch: make_block(config.decoder == DecoderKind::Spectral),
            dec_local: ConvParams {
                w: Array4::zeros((c_s, c_s, 3, 3)),
                b: Array1::zeros(c_s),
            },
            dec_read: PointwiseParams {
                w: Array2::zeros((d_u, c_s)),
                b: Array1::zeros(d_u),
            },
            dec_up: (config.r > 1).then(|| UpsampleParams {
                w: Array4::zeros((d_u, d_u, config.r, config.r)),
                b: Array1::zeros(d_u),
            }),
        })
    }

    /// Fresh parameters: weights scaled by fan-in, temporal matrices near the
    /// identity, and the gate output / closure output layers exactly zero so
    /// the initial propagator is a plain backbone step with no correction.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut set = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fn randn(rng: &mut ChaCha8Rng) -> f64 {
            // Box-Muller; u1 kept away from 0 so the log stays finite.
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
        set.for_each_slot_mut(&mut |name, shape, slot| match slot {
            SlotMut::Real(data) => {
                if name == "enc.attn.b2" || name == "dec.attn.b2" {
                    // Start the channel gates near pass-through (σ(2) ≈ 0.88).
                    data.fill(2.0);
                } else if name.ends_with(".b")
                    || name.ends_with(".b1")
                    || name.ends_with(".b2")
                    || name == "prop.gate.w2"
                    || name == "prop.closure2.w"
                {
                    // Biases zero; the gate output layer and the closure
                    // output layer start at zero so frequency gates are
                    // exactly 1 and the learned correction exactly 0.
                    data.fill(0.0);
                } else {
                    let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                    let scale = (1.0 / fan_in as f64).sqrt();
                    for v in data.iter_mut() {
                        *v = scale * randn(&mut rng);
                    }
                }
            }
            SlotMut::Cplx(data) => {
                if name == "prop.kbar" {
                    // Identity plus small complex noise: a near-identity
                    // temporal flow keeps early rollouts stable.
                    let t = shape[2];
                    for (idx, v) in data.iter_mut().enumerate() {
                        let row = (idx / t) % t;
                        let col = idx % t;
                        let eye = if row == col { 1.0 } else { 0.0 };
                        *v = Complex64::new(eye + 1e-2 * randn(&mut rng), 1e-2 * randn(&mut rng));
                    }
                } else {
                    // Mode mixers: per-entry variance 1/c_in split across
                    // re and im so the mixed branch matches its input scale.
                    let c_in = *shape.last().expect("mixer has a channel dim");
                    let scale = (0.5 / c_in as f64).sqrt();
                    for v in data.iter_mut() {
                        *v = Complex64::new(scale * randn(&mut rng), scale * randn(&mut rng));
                    }
                }
            }
        });
        Ok(set)
    }

    /// Total number of flat scalars.
    pub fn flat_len(&self) -> usize {
        let mut n = 0;
        self.for_each_slot(&mut |_, _, slot| {
            n += match slot {
                SlotRef::Real(d) => d.len(),
                SlotRef::Cplx(d) => 2 * d.len(),
            }
        });
        n
    }

    /// Copies every parameter into one flat vector, complex entries as
    /// (re, im) pairs, in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        self.for_each_slot(&mut |_, _, slot| match slot {
            SlotRef::Real(d) => out.extend_from_slice(d),
            SlotRef::Cplx(d) => {
                for v in d {
                    out.push(v.re);
                    out.push(v.im);
                }
            }
        });
        out
    }

    /// Overwrites every parameter from a flat vector produced by
    /// [`ParamSet::to_flat`] (or any vector of the same length).
    pub fn from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::config(format!(
                "flat vector has {} scalars, parameter set needs {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut offset = 0usize;
        self.for_each_slot_mut(&mut |_, _, slot| match slot {
            SlotMut::Real(d) => {
                d.copy_from_slice(&flat[offset..offset + d.len()]);
                offset += d.len();
            }
            SlotMut::Cplx(d) => {
                for v in d.iter_mut() {
                    *v = Complex64::new(flat[offset], flat[offset + 1]);
                    offset += 2;
                }
            }
        });
        Ok(())
    }

    /// Sets every parameter to zero in place (gradient accumulator reset).
    pub fn fill_zero(&mut self) {
        self.for_each_slot_mut(&mut |_, _, slot| match slot {
            SlotMut::Real(d) => d.fill(0.0),
            SlotMut::Cplx(d) => d.fill(Complex64::default()),
        });
    }
}

/// One named tensor's place inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInfo {
    pub name: String,
    /// Logical shape (without the implicit re/im factor of 2).
    pub shape: Vec<usize>,
    pub complex: bool,
    /// Offset and length in flat scalars.
    pub offset: usize,
    pub len: usize,
}

/// Names, shapes, and offsets of every slot, in canonical order.
#[derive(Debug, Clone)]
pub struct Layout {
    pub slots: Vec<SlotInfo>,
    pub total: usize,
}

impl Layout {
    pub fn of(config: &ModelConfig) -> Result<Self> {
        let set = ParamSet::zeros(config)?;
        let mut slots = Vec::new();
        let mut offset = 0usize;
        set.for_each_slot(&mut |name, shape, slot| {
            let (complex, len) = match slot {
                SlotRef::Real(d) => (false, d.len()),
                SlotRef::Cplx(d) => (true, 2 * d.len()),
            };
            slots.push(SlotInfo { name, shape, complex, offset, len });
            offset += len;
        });
        Ok(Layout { slots, total: offset })
    }

    /// The slot covering a flat index.
    pub fn slot_of(&self, flat_index: usize) -> Option<&SlotInfo> {
        self.slots
            .iter()
            .find(|s| flat_index >= s.offset && flat_index < s.offset + s.len)
    }

    /// Flat range of a named slot.
    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.slots
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.offset..s.offset + s.len)
    }

    /// Human-readable label for a flat index, e.g. `prop.kbar[2,0,1].im`.
    pub fn label(&self, flat_index: usize) -> String {
        let Some(slot) = self.slot_of(flat_index) else {
            return format!("?[{flat_index}]");
        };
        let mut elem = flat_index - slot.offset;
        let suffix = if slot.complex {
            let part = if elem % 2 == 0 { ".re" } else { ".im" };
            elem /= 2;
            part
        } else {
            ""
        };
        let mut coords = vec![0usize; slot.shape.len()];
        for (axis, &dim) in slot.shape.iter().enumerate().rev() {
            coords[axis] = elem % dim;
            elem /= dim;
        }
        let coord_text: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
        format!("{}[{}]{suffix}", slot.name, coord_text.join(","))
    }
}
