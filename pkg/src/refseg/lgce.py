"""Language-guided cross-scale feature fusion over a two-level pyramid, built
on the autodiff tensor core.

The chain: a pooled language vector is projected to each scale's width and
prepended as token 0 to that scale's flattened feature map; each sequence runs
through a pre-LN transformer block (scale-specific fusion). The sequences are
split back apart and the *other* scale's output language token is re-projected
and prepended before a single LN+MSA layer per scale (cross-scale fusion).
The residual in that layer spans the full concatenated sequence by default;
the narrower reading that adds only the language token (broadcast over rows)
is available as residual="language_broadcast". Finally the visual tokens are
reshaped back to maps, the coarse scale is nearest-upsampled 2x, and both are
channel-concatenated. A small conv/BN/ReLU decoder turns the fused map into
single-channel logits; thresholding at 0 (ties to background) gives a mask."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .raster import BinaryMask
from . import tensor as T
from .tensor import (
    AttentionParams,
    ParamInit,
    ShapeMismatch,
    Tape,
    Tensor,
)

RESIDUAL_MODES = ("sequence", "language_broadcast")


class PatchDivisibility(ShapeMismatch):
    pass


@dataclass(frozen=True)
class LgceConfig:
    """Channel/spatial dims of the two input scales, language width, and
    attention hyperparameters. The scales are stage-adjacent: the fine grid is
    exactly twice the coarse grid."""

    c3: int
    c4: int
    c_t: int
    h3: int
    w3: int
    h4: int
    w4: int
    heads: int = 2
    mlp_ratio: int = 4
    eps: float = 1e-5
    depth: int = 1
    residual: str = "sequence"

    def __post_init__(self):
        if min(self.c3, self.c4, self.c_t, self.h3, self.w3, self.h4, self.w4) < 1:
            raise ValueError("all dimensions must be positive")
        if self.c3 % self.heads or self.c4 % self.heads:
            raise ValueError(f"c3={self.c3}, c4={self.c4} must be divisible by heads={self.heads}")
        if self.h3 != 2 * self.h4 or self.w3 != 2 * self.w4:
            raise ValueError(f"fine grid {self.h3}x{self.w3} must be twice coarse {self.h4}x{self.w4}")
        if self.depth < 1 or self.mlp_ratio < 1:
            raise ValueError("depth and mlp_ratio must be >= 1")
        if self.residual not in RESIDUAL_MODES:
            raise ValueError(f"residual must be one of {RESIDUAL_MODES}, got {self.residual!r}")


# The toy configuration used by the gradient suite and tests.
FIXTURE_CONFIG = LgceConfig(c3=8, c4=16, c_t=6, h3=4, w3=4, h4=2, w4=2, heads=2)
FIXTURE_T = 5


@dataclass
class FeaturePyramid:
    """Inputs: fine visual map [c3, h3, w3], coarse visual map [c4, h4, w4],
    and word features [c_t, T] with T >= 1."""

    v3: Tensor
    v4: Tensor
    lang: Tensor

    def validate(self, cfg: LgceConfig) -> None:
        if self.v3.shape != (cfg.c3, cfg.h3, cfg.w3):
            raise ShapeMismatch(f"v3 is {self.v3.shape}, expected {(cfg.c3, cfg.h3, cfg.w3)}")
        if self.v4.shape != (cfg.c4, cfg.h4, cfg.w4):
            raise ShapeMismatch(f"v4 is {self.v4.shape}, expected {(cfg.c4, cfg.h4, cfg.w4)}")
        if len(self.lang.shape) != 2 or self.lang.shape[0] != cfg.c_t or self.lang.shape[1] < 1:
            raise ShapeMismatch(f"lang is {self.lang.shape}, expected ({cfg.c_t}, T>=1)")


@dataclass
class TransformerBlockParams:
    ln1_gamma: Tensor
    ln1_beta: Tensor
    attn: AttentionParams
    ln2_gamma: Tensor
    ln2_beta: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @classmethod
    def create(cls, dim: int, mlp_ratio: int, init: ParamInit) -> "TransformerBlockParams":
        hidden = dim * mlp_ratio
        return cls(
            ln1_gamma=init.ones((dim,)), ln1_beta=init.zeros((dim,)),
            attn=AttentionParams.create(dim, init),
            ln2_gamma=init.ones((dim,)), ln2_beta=init.zeros((dim,)),
            mlp_w1=init.uniform((dim, hidden), dim), mlp_b1=init.uniform((hidden,), dim),
            mlp_w2=init.uniform((hidden, dim), hidden), mlp_b2=init.uniform((dim,), hidden),
        )

    def named_tensors(self, prefix: str) -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.ln1_gamma", self.ln1_gamma), (f"{prefix}.ln1_beta", self.ln1_beta)]
        out += self.attn.named_tensors(f"{prefix}.attn")
        out += [(f"{prefix}.ln2_gamma", self.ln2_gamma), (f"{prefix}.ln2_beta", self.ln2_beta),
                (f"{prefix}.mlp_w1", self.mlp_w1), (f"{prefix}.mlp_b1", self.mlp_b1),
                (f"{prefix}.mlp_w2", self.mlp_w2), (f"{prefix}.mlp_b2", self.mlp_b2)]
        return out


@dataclass
class CrossScaleLayerParams:
    """One LN + MSA layer of the cross-scale stage (no MLP sublayer)."""

    ln_gamma: Tensor
    ln_beta: Tensor
    attn: AttentionParams

    @classmethod
    def create(cls, dim: int, init: ParamInit) -> "CrossScaleLayerParams":
        return cls(ln_gamma=init.ones((dim,)), ln_beta=init.zeros((dim,)),
                   attn=AttentionParams.create(dim, init))

    def named_tensors(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.ln_gamma", self.ln_gamma), (f"{prefix}.ln_beta", self.ln_beta),
                *self.attn.named_tensors(f"{prefix}.attn")]


@dataclass
class LgceParams:
    fh_w: Tensor  # language -> fine width
    fh_b: Tensor
    fl_w: Tensor  # language -> coarse width
    fl_b: Tensor
    tl_h: list[TransformerBlockParams]
    tl_l: list[TransformerBlockParams]
    fhp_w: Tensor  # fine -> coarse alignment
    fhp_b: Tensor
    flp_w: Tensor  # coarse -> fine alignment
    flp_b: Tensor
    msa_h: CrossScaleLayerParams
    msa_l: CrossScaleLayerParams

    @classmethod
    def create(cls, cfg: LgceConfig, seed: int) -> "LgceParams":
        init = ParamInit(seed)
        return cls(
            fh_w=init.uniform((cfg.c_t, cfg.c3), cfg.c_t), fh_b=init.uniform((cfg.c3,), cfg.c_t),
            fl_w=init.uniform((cfg.c_t, cfg.c4), cfg.c_t), fl_b=init.uniform((cfg.c4,), cfg.c_t),
            tl_h=[TransformerBlockParams.create(cfg.c3, cfg.mlp_ratio, init) for _ in range(cfg.depth)],
            tl_l=[TransformerBlockParams.create(cfg.c4, cfg.mlp_ratio, init) for _ in range(cfg.depth)],
            fhp_w=init.uniform((cfg.c3, cfg.c4), cfg.c3), fhp_b=init.uniform((cfg.c4,), cfg.c3),
            flp_w=init.uniform((cfg.c4, cfg.c3), cfg.c4), flp_b=init.uniform((cfg.c3,), cfg.c4),
            msa_h=CrossScaleLayerParams.create(cfg.c3, init),
            msa_l=CrossScaleLayerParams.create(cfg.c4, init),
        )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = [("fh_w", self.fh_w), ("fh_b", self.fh_b), ("fl_w", self.fl_w), ("fl_b", self.fl_b)]
        for i, block in enumerate(self.tl_h):
            out += block.named_tensors(f"tl_h.{i}")
        for i, block in enumerate(self.tl_l):
            out += block.named_tensors(f"tl_l.{i}")
        out += [("fhp_w", self.fhp_w), ("fhp_b", self.fhp_b),
                ("flp_w", self.flp_w), ("flp_b", self.flp_b)]
        out += self.msa_h.named_tensors("msa_h")
        out += self.msa_l.named_tensors("msa_l")
        return out


def zero_output_projections(params: LgceParams) -> LgceParams:
    """Zero every attention output projection and MLP second layer in place,
    making all transformer stages exact identities on their inputs."""
    for block in params.tl_h + params.tl_l:
        block.attn.wo.data[...] = 0.0
        block.attn.bo.data[...] = 0.0
        block.mlp_w2.data[...] = 0.0
        block.mlp_b2.data[...] = 0.0
    for layer in (params.msa_h, params.msa_l):
        layer.attn.wo.data[...] = 0.0
        layer.attn.bo.data[...] = 0.0
    return params


# ---------------------------------------------------------------------------
# forward pieces


def transformer_block(tokens: Tensor, params: TransformerBlockParams, heads: int,
                      eps: float = 1e-5) -> Tensor:
    """Pre-LN block: z' = z + MSA(LN(z)); out = z' + MLP(LN(z')) with a GELU MLP."""
    attended = T.multi_head_self_attention(
        T.layer_norm(tokens, params.ln1_gamma, params.ln1_beta, eps), params.attn, heads)
    z = T.add(tokens, attended)
    hidden = T.gelu(T.linear(T.layer_norm(z, params.ln2_gamma, params.ln2_beta, eps),
                             params.mlp_w1, params.mlp_b1))
    return T.add(z, T.linear(hidden, params.mlp_w2, params.mlp_b2))


def embed_patches(image: Tensor, patch: int, w: Tensor, b: Tensor, pos: Tensor) -> Tensor:
    """Linear patch projection plus learned position embedding: one token per
    non-overlapping patch."""
    c, h, wd = image.shape
    if h % patch or wd % patch:
        raise PatchDivisibility(f"image {h}x{wd} not divisible by patch size {patch}")
    tokens = T.linear(T.patchify(image, patch), w, b)
    if pos.shape != tokens.shape:
        raise ShapeMismatch(f"position embedding {pos.shape} vs tokens {tokens.shape}")
    return T.add(tokens, pos)


def mean_language(lang: Tensor) -> Tensor:
    """Mean of the word vectors: [c_t, T] -> [c_t]."""
    return T.mean(lang, axis=1)


def _to_tokens(v: Tensor) -> Tensor:
    """[c, h, w] -> [h*w, c], row-major tokens with channels-last features."""
    c, h, w = v.shape
    return T.transpose2d(T.reshape(v, (c, h * w)))


def _to_map(tokens: Tensor, c: int, h: int, w: int) -> Tensor:
    return T.reshape(T.transpose2d(tokens), (c, h, w))


def _as_row(v: Tensor) -> Tensor:
    return T.reshape(v, (1, v.shape[-1]))


def scale_specific_fusion(p: FeaturePyramid, params: LgceParams,
                          cfg: LgceConfig) -> tuple[Tensor, Tensor]:
    """Prepend the projected mean language vector to each scale's token
    sequence and run the scale's transformer block(s)."""
    p.validate(cfg)
    pooled = mean_language(p.lang)
    z_h = T.concat([_as_row(T.linear(pooled, params.fh_w, params.fh_b)), _to_tokens(p.v3)], axis=0)
    z_l = T.concat([_as_row(T.linear(pooled, params.fl_w, params.fl_b)), _to_tokens(p.v4)], axis=0)
    for block in params.tl_h:
        z_h = transformer_block(z_h, block, cfg.heads, cfg.eps)
    for block in params.tl_l:
        z_l = transformer_block(z_l, block, cfg.heads, cfg.eps)
    return z_h, z_l


def split_scale(z: Tensor) -> tuple[Tensor, Tensor]:
    """Inverse of the fusion concat: (language token [1, c], visual tokens [n, c])."""
    if len(z.shape) != 2 or z.shape[0] < 2:
        raise ShapeMismatch(f"expected a sequence of length >= 2, got {z.shape}")
    lang_token, visual = T.split(z, [1, z.shape[0] - 1], axis=0)
    return lang_token, visual


def _cross_scale_layer(lang_token: Tensor, visual: Tensor, layer: CrossScaleLayerParams,
                       cfg: LgceConfig) -> Tensor:
    seq = T.concat([lang_token, visual], axis=0)
    attended = T.multi_head_self_attention(
        T.layer_norm(seq, layer.ln_gamma, layer.ln_beta, cfg.eps), layer.attn, cfg.heads)
    if cfg.residual == "sequence":
        return T.add(seq, attended)
    return T.add_rowvec(attended, lang_token)


def cross_scale_fusion(l_h: Tensor, v_h: Tensor, l_l: Tensor, v_l: Tensor,
                       params: LgceParams, cfg: LgceConfig) -> tuple[Tensor, Tensor]:
    """Swap the scales' language tokens (re-projected to the other width) and
    run one LN+MSA layer per scale."""
    from_coarse = T.linear(l_l, params.flp_w, params.flp_b)  # [1, c3]
    from_fine = T.linear(l_h, params.fhp_w, params.fhp_b)  # [1, c4]
    z_h = _cross_scale_layer(from_coarse, v_h, params.msa_h, cfg)
    z_l = _cross_scale_layer(from_fine, v_l, params.msa_l, cfg)
    return z_h, z_l


def lgce_forward(p: FeaturePyramid, params: LgceParams, cfg: LgceConfig) -> Tensor:
    """Full fusion chain; output is the channel concat [c3+c4, h3, w3] of the
    fine visual map and the 2x-upsampled coarse visual map. Language tokens
    are carriers only and are discarded at the end."""
    z_h, z_l = scale_specific_fusion(p, params, cfg)
    l_h, v_h = split_scale(z_h)
    l_l, v_l = split_scale(z_l)
    z_h2, z_l2 = cross_scale_fusion(l_h, v_h, l_l, v_l, params, cfg)
    _, v_h2 = split_scale(z_h2)
    _, v_l2 = split_scale(z_l2)
    fine = _to_map(v_h2, cfg.c3, cfg.h3, cfg.w3)
    coarse = T.upsample_nearest2x(_to_map(v_l2, cfg.c4, cfg.h4, cfg.w4))
    return T.concat([fine, coarse], axis=0)


# ---------------------------------------------------------------------------
# decoder head


@dataclass
class ConvBnParams:
    kernel: Tensor
    bias: Tensor
    bn_mean: Tensor
    bn_var: Tensor
    bn_gamma: Tensor
    bn_beta: Tensor

    @classmethod
    def create(cls, c_in: int, c_out: int, ksize: int, init: ParamInit) -> "ConvBnParams":
        fan_in = c_in * ksize * ksize
        return cls(
            kernel=init.uniform((c_out, c_in, ksize, ksize), fan_in),
            bias=init.uniform((c_out,), fan_in),
            bn_mean=init.zeros((c_out,)), bn_var=init.ones((c_out,)),
            bn_gamma=init.ones((c_out,)), bn_beta=init.zeros((c_out,)),
        )

    def named_tensors(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.{n}", getattr(self, n))
                for n in ("kernel", "bias", "bn_mean", "bn_var", "bn_gamma", "bn_beta")]


@dataclass
class DecoderParams:
    """Two 3x3 conv/BN/ReLU stages followed by a 1x1 conv to one logit channel."""

    block1: ConvBnParams
    block2: ConvBnParams
    final_kernel: Tensor
    final_bias: Tensor

    @classmethod
    def create(cls, c_in: int, hidden: int, seed: int) -> "DecoderParams":
        init = ParamInit(seed)
        return cls(
            block1=ConvBnParams.create(c_in, hidden, 3, init),
            block2=ConvBnParams.create(hidden, hidden, 3, init),
            final_kernel=init.uniform((1, hidden, 1, 1), hidden),
            final_bias=init.uniform((1,), hidden),
        )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return (self.block1.named_tensors("decoder.block1")
                + self.block2.named_tensors("decoder.block2")
                + [("decoder.final_kernel", self.final_kernel),
                   ("decoder.final_bias", self.final_bias)])


def _conv_bn_relu(x: Tensor, p: ConvBnParams, eps: float) -> Tensor:
    return T.relu(T.batch_norm_infer(T.conv2d(x, p.kernel, p.bias),
                                     p.bn_mean, p.bn_var, p.bn_gamma, p.bn_beta, eps))


def decoder_head(fused: Tensor, params: DecoderParams, eps: float = 1e-5) -> Tensor:
    """[c, h, w] -> single-channel logits [1, h, w], spatial dims preserved."""
    x = _conv_bn_relu(fused, params.block1, eps)
    x = _conv_bn_relu(x, params.block2, eps)
    return T.conv2d(x, params.final_kernel, params.final_bias)


def mask_from_logits(logits: Tensor) -> BinaryMask:
    """Threshold logits at 0; a tie (logit exactly 0) is background."""
    return BinaryMask(logits.data[0] > 0)


# ---------------------------------------------------------------------------
# checkpoint plumbing


def save_params(path, params: LgceParams) -> None:
    T.save_checkpoint(path, params.named_tensors())


def load_params(path, cfg: LgceConfig) -> LgceParams:
    arrays = T.load_checkpoint(path)
    params = LgceParams.create(cfg, seed=0)
    for name, t in params.named_tensors():
        if name not in arrays:
            raise KeyError(f"checkpoint missing parameter {name!r}")
        if tuple(arrays[name].shape) != t.shape:
            raise ShapeMismatch(f"{name}: checkpoint {arrays[name].shape} vs expected {t.shape}")
        t.data[...] = arrays[name]
    return params


# ---------------------------------------------------------------------------
# invariant suite (shared by `lgce-check` and the acceptance tests)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _random_pyramid(cfg: LgceConfig, rng: np.random.Generator, t_words: int) -> FeaturePyramid:
    return FeaturePyramid(
        v3=Tensor(rng.normal(size=(cfg.c3, cfg.h3, cfg.w3))),
        v4=Tensor(rng.normal(size=(cfg.c4, cfg.h4, cfg.w4))),
        lang=Tensor(rng.normal(size=(cfg.c_t, t_words))),
    )


def _random_config(rng: np.random.Generator) -> LgceConfig:
    heads = int(rng.choice([1, 2, 4]))
    c3 = heads * int(rng.integers(1, 32 // heads + 1))
    c4 = heads * int(rng.integers(1, 32 // heads + 1))
    c3, c4 = max(c3, heads), max(c4, heads)
    h4 = int(rng.integers(1, 5))
    w4 = int(rng.integers(1, 5))
    return LgceConfig(c3=c3, c4=c4, c_t=int(rng.integers(2, 13)),
                      h3=2 * h4, w3=2 * w4, h4=h4, w4=w4, heads=heads)


def check_shape_contract(seed: int = 0, trials: int = 50) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for i in range(trials):
        cfg = _random_config(rng)
        p = _random_pyramid(cfg, rng, int(rng.integers(1, 9)))
        out = lgce_forward(p, LgceParams.create(cfg, seed + i), cfg)
        expected = (cfg.c3 + cfg.c4, cfg.h3, cfg.w3)
        if out.shape != expected:
            return CheckResult("shape-contract", False,
                               f"trial {i}: got {out.shape}, expected {expected}",
                               time.perf_counter() - t0)
    return CheckResult("shape-contract", True, f"{trials} randomized configs",
                       time.perf_counter() - t0)


def check_identity_at_zero(seed: int = 0) -> CheckResult:
    t0 = time.perf_counter()
    cfg = FIXTURE_CONFIG
    rng = np.random.default_rng(seed)
    p = _random_pyramid(cfg, rng, FIXTURE_T)
    params = zero_output_projections(LgceParams.create(cfg, seed))
    out = lgce_forward(p, params, cfg)
    expected = np.concatenate(
        [p.v3.data, p.v4.data.repeat(2, axis=1).repeat(2, axis=2)], axis=0)
    ok = np.array_equal(out.data, expected)
    return CheckResult("identity-at-zero", ok,
                       "zeroed projections reduce to upsample-and-concat" if ok
                       else "output differs from raw upsample-and-concat",
                       time.perf_counter() - t0)


def check_zero_input(seed: int = 0) -> CheckResult:
    t0 = time.perf_counter()
    cfg = FIXTURE_CONFIG
    rng = np.random.default_rng(seed)
    p = FeaturePyramid(
        v3=Tensor(np.zeros((cfg.c3, cfg.h3, cfg.w3))),
        v4=Tensor(np.zeros((cfg.c4, cfg.h4, cfg.w4))),
        lang=Tensor(rng.normal(size=(cfg.c_t, FIXTURE_T))),
    )
    params = zero_output_projections(LgceParams.create(cfg, seed))
    out = lgce_forward(p, params, cfg)
    ok = not out.data.any()
    return CheckResult("zero-input-zero-output", ok,
                       "all-zero visual inputs stay zero" if ok else "nonzero output",
                       time.perf_counter() - t0)


def check_word_permutation(seed: int = 0, trials: int = 10) -> CheckResult:
    t0 = time.perf_counter()
    cfg = FIXTURE_CONFIG
    rng = np.random.default_rng(seed)
    for i in range(trials):
        p = _random_pyramid(cfg, rng, FIXTURE_T)
        params = LgceParams.create(cfg, seed + i)
        base = lgce_forward(p, params, cfg)
        perm = rng.permutation(FIXTURE_T)
        shuffled = FeaturePyramid(v3=p.v3, v4=p.v4, lang=Tensor(p.lang.data[:, perm]))
        out = lgce_forward(shuffled, params, cfg)
        if not np.array_equal(base.data, out.data):
            return CheckResult("word-permutation-invariance", False,
                               f"trial {i}: outputs differ after word permutation",
                               time.perf_counter() - t0)
    return CheckResult("word-permutation-invariance", True, f"{trials} permutations bit-identical",
                       time.perf_counter() - t0)


def check_split_concat_inverse(seed: int = 0, trials: int = 20) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for i in range(trials):
        n, c = int(rng.integers(2, 20)), int(rng.integers(1, 16))
        lang = Tensor(rng.normal(size=(1, c)))
        visual = Tensor(rng.normal(size=(n, c)))
        back_l, back_v = split_scale(T.concat([lang, visual], axis=0))
        if not (np.array_equal(back_l.data, lang.data) and np.array_equal(back_v.data, visual.data)):
            return CheckResult("split-concat-inverse", False, f"trial {i}: round trip not bit-exact",
                               time.perf_counter() - t0)
    return CheckResult("split-concat-inverse", True, f"{trials} random sequences bit-exact",
                       time.perf_counter() - t0)


def check_attention_rows(seed: int = 0, trials: int = 10, tol: float = 1e-12) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(trials):
        heads = int(rng.choice([1, 2, 4]))
        d = heads * int(rng.integers(1, 9))
        n = int(rng.integers(1, 12))
        x = Tensor(rng.normal(size=(n, d)))
        _, weights = T.multi_head_self_attention(
            x, AttentionParams.create(d, ParamInit(seed + i)), heads, return_weights=True)
        for att in weights:
            worst = max(worst, float(np.abs(att.sum(axis=1) - 1.0).max()))
    ok = worst <= tol
    return CheckResult("attention-row-sums", ok, f"max |row sum - 1| = {worst:.3e}",
                       time.perf_counter() - t0)


def _projection_loss_value(p: FeaturePyramid, params: LgceParams, cfg: LgceConfig,
                           weights: np.ndarray) -> float:
    return float((lgce_forward(p, params, cfg).data * weights).sum())


def check_gradient_completeness(seed: int = 0) -> CheckResult:
    """Dead-parameter detector: under a sum-of-outputs loss on a random input,
    every parameter tensor must receive a gradient that is not identically zero."""
    t0 = time.perf_counter()
    cfg = FIXTURE_CONFIG
    rng = np.random.default_rng(seed)
    params = LgceParams.create(cfg, seed)
    p = _random_pyramid(cfg, rng, FIXTURE_T)
    tape = Tape()
    for _, t in params.named_tensors():
        tape.watch(t)
    tape.watch(p.v3)
    tape.watch(p.v4)
    tape.backward(T.total(lgce_forward(p, params, cfg)))
    dead = [name for name, t in params.named_tensors()
            if t.grad is None or not np.any(t.grad)]
    for name, t in (("input.v3", p.v3), ("input.v4", p.v4)):
        if t.grad is None or not np.any(t.grad):
            dead.append(name)
    ok = not dead
    return CheckResult("gradient-completeness", ok,
                       "every parameter received gradient" if ok else f"dead: {dead}",
                       time.perf_counter() - t0)


def check_finite_difference(seeds: int = 5, h: float = 1e-5, rel_tol: float = 1e-4,
                            abs_floor: float = 1e-7, inject_fault: bool = False) -> CheckResult:
    """Central finite differences against the tape gradients for every parameter
    group and both visual inputs, on the fixture config."""
    t0 = time.perf_counter()
    cfg = FIXTURE_CONFIG
    worst_name, worst_err = "", 0.0
    for seed in range(seeds):
        params = LgceParams.create(cfg, seed)
        rng = np.random.default_rng(10_000 + seed)
        p = _random_pyramid(cfg, rng, FIXTURE_T)
        weights = rng.normal(size=(cfg.c3 + cfg.c4, cfg.h3, cfg.w3))
        groups = params.named_tensors() + [("input.v3", p.v3), ("input.v4", p.v4)]

        fd = {}
        for name, t in groups:
            g = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = _projection_loss_value(p, params, cfg, weights)
                flat[i] = orig - h
                down = _projection_loss_value(p, params, cfg, weights)
                flat[i] = orig
                g.reshape(-1)[i] = (up - down) / (2.0 * h)
            fd[name] = g

        tape = Tape()
        for _, t in groups:
            tape.watch(t)
        loss = T.total(T.mul(lgce_forward(p, params, cfg), Tensor(weights)))
        tape.backward(loss)
        if inject_fault:
            params.fh_w.node.grad[0, 0] += 1.0

        for name, t in groups:
            a = t.grad
            f = fd[name]
            err = np.abs(a - f)
            bound = np.maximum(abs_floor, rel_tol * np.maximum(np.abs(a), np.abs(f)))
            if (err > bound).any():
                idx = np.unravel_index(int(np.argmax(err - bound)), err.shape)
                return CheckResult(
                    "finite-difference-gradients", False,
                    f"seed {seed}, {name}{list(idx)}: analytic {a[idx]:.6e} vs fd {f[idx]:.6e}",
                    time.perf_counter() - t0)
            ratio = float((err / bound).max())
            if ratio > worst_err:
                worst_name, worst_err = name, ratio
    return CheckResult("finite-difference-gradients", True,
                       f"{seeds} seeds, worst error at {worst_err:.2e} of tolerance ({worst_name})",
                       time.perf_counter() - t0)


def run_invariant_suite(seed: int = 0, trials: int = 50, fd_seeds: int = 5,
                        inject_fault: bool = False) -> list[CheckResult]:
    """All structural and numerical checks; fd_seeds=0 skips the (slow)
    finite-difference pass."""
    results = [
        check_shape_contract(seed, trials),
        check_identity_at_zero(seed),
        check_zero_input(seed),
        check_word_permutation(seed),
        check_split_concat_inverse(seed),
        check_attention_rows(seed),
        check_gradient_completeness(seed),
    ]
    if fd_seeds > 0:
        results.append(check_finite_difference(seeds=fd_seeds, inject_fault=inject_fault))
    return results
