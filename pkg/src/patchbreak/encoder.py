"""The keyed patch encoder.

An image is split into a*a patches; each patch goes through a keyed MLP
stack (affine layers with ReLU between), a per-position vector delta_i is
added, and a final keyed affine projection produces the encoded patch. The
encoded patches are then shuffled by a fresh per-image permutation. The key
(stack weights, deltas, final projection) stays fixed across a dataset; only
the patch shuffle is fresh per image.

Key initialization. Stack weights are N(0, 2*weight_scale^2/fan_in)
(Kaiming-for-ReLU times weight_scale) with small biases
(N(0, (0.1*weight_scale)^2)), so one ReLU layer multiplies activation
variance by weight_scale^2 and patch energy propagates multiplicatively
instead of being swamped by a bias floor. The default weight_scale is
depth-compensated: weight_scale = GAIN_TARGET**(1/(2*depth)), which makes
the end-to-end variance gain of the stack approximately GAIN_TARGET at any
depth. That pins the two leaks the key must exhibit at every depth: the
position vectors delta_i (variance 1) keep a fixed share of the
pre-projection signal, and patch energy still modulates the output moments.
Plain N(0,1) weights (weight_scale = sqrt(fan_in/2)) blow the gain up
exponentially and bury the position share.
"""

from dataclasses import dataclass

import numpy as np

from . import nn, rng, serialize
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ImageSpec:
    width: int = 32
    height: int = 32
    channels: int = 1
    patches_per_side: int = 4
    latent: int = 64
    out_width: int = 64
    depth: int = 2

    def __post_init__(self):
        a = self.patches_per_side
        if min(self.width, self.height, self.channels, a, self.latent,
               self.out_width, self.depth) < 1:
            raise ConfigError(f"all spec fields must be positive: {self}")
        if self.width % a or self.height % a:
            raise ConfigError(
                f"patches_per_side {a} must divide width {self.width} and "
                f"height {self.height}"
            )

    @property
    def num_patches(self):
        return self.patches_per_side**2

    @property
    def patch_len(self):
        a = self.patches_per_side
        return (self.width // a) * (self.height // a) * self.channels

    def to_dict(self):
        return {
            "width": self.width, "height": self.height, "channels": self.channels,
            "patches_per_side": self.patches_per_side, "latent": self.latent,
            "out_width": self.out_width, "depth": self.depth,
        }

    @staticmethod
    def from_dict(d):
        return ImageSpec(**d)


@dataclass
class EncoderKey:
    patch_mlp: nn.MlpParams  # f_1..f_k, ReLU between
    positional: np.ndarray  # (a^2, d) the delta_i rows
    final_W: np.ndarray  # (d_out, d)
    final_b: np.ndarray  # (d_out,)
    spec: ImageSpec
    seed: int
    weight_scale: float


# End-to-end variance gain of the patch stack under the default
# (depth-compensated) weight_scale; see module docstring. 12 balances the
# two leaks: above ~16 the shallow-stack position share degrades patch
# re-alignment, below ~6 patch energy stops reaching the output moments.
GAIN_TARGET = 12.0
BIAS_FRAC = 0.1


def default_weight_scale(depth):
    """Per-layer scale whose k-layer stack gain is ~GAIN_TARGET."""
    return float(GAIN_TARGET ** (1.0 / (2 * depth)))


def _scale_biases(params, factor):
    layers = [(W, b * factor) for W, b in params.layers]
    return nn.MlpParams(layers=layers, activation=params.activation)


def sample_key(spec, seed, weight_scale=None):
    """Draw a fresh encoder key. Deterministic per (seed, weight_scale).

    weight_scale=None picks the depth-compensated default.
    """
    if not isinstance(spec, ImageSpec):
        raise ConfigError(f"spec must be an ImageSpec, got {type(spec).__name__}")
    if weight_scale is None:
        weight_scale = default_weight_scale(spec.depth)
    if weight_scale <= 0:
        raise ConfigError(f"weight_scale must be positive, got {weight_scale}")
    stack_seed, final_seed = (int(s) for s in rng.spawn_seeds(seed, 2, "encoder.key"))
    dims = [spec.patch_len] + [spec.latent] * spec.depth
    # init_mlp draws W ~ N(0, s^2/fan_in), b ~ N(0, s^2); rescale biases down
    # to the small-bias regime.
    stack_s = weight_scale * np.sqrt(2.0)
    patch_mlp = _scale_biases(
        nn.init_mlp(dims, stack_s, stack_seed), BIAS_FRAC * weight_scale / stack_s
    )
    final = nn.init_mlp([spec.latent, spec.out_width], weight_scale, final_seed)
    final = _scale_biases(final, BIAS_FRAC)
    (final_W, final_b) = final.layers[0]
    positional = rng.stream(seed, "encoder.delta").standard_normal(
        (spec.num_patches, spec.latent)
    )
    return EncoderKey(
        patch_mlp=patch_mlp, positional=positional, final_W=final_W,
        final_b=final_b, spec=spec, seed=int(seed), weight_scale=float(weight_scale),
    )


def _check_image(spec, image):
    image = np.asarray(image, dtype=np.float64)
    want = (spec.width, spec.height, spec.channels)
    if image.shape == want[:2] and spec.channels == 1:
        image = image[:, :, None]
    if image.shape != want:
        raise ShapeError(f"image shape {image.shape} != spec {want}")
    if not np.all(np.isfinite(image)):
        raise ShapeError("image has non-finite values")
    return image


def patchify(spec, image):
    """Split into a^2 flattened patches, row-major grid order, each patch
    flattened row-major over (row, col, channel)."""
    image = _check_image(spec, image)
    a = spec.patches_per_side
    pw, ph = spec.width // a, spec.height // a
    grid = image.reshape(a, pw, a, ph, spec.channels)
    return grid.transpose(0, 2, 1, 3, 4).reshape(a * a, pw * ph * spec.channels)


def unpatchify(spec, patches):
    """Inverse of patchify."""
    patches = np.asarray(patches, dtype=np.float64)
    a = spec.patches_per_side
    pw, ph = spec.width // a, spec.height // a
    if patches.shape != (a * a, spec.patch_len):
        raise ShapeError(
            f"patches shape {patches.shape} != ({a * a}, {spec.patch_len})"
        )
    grid = patches.reshape(a, a, pw, ph, spec.channels)
    return grid.transpose(0, 2, 1, 3, 4).reshape(
        spec.width, spec.height, spec.channels
    )


def encode_patch(key, patch):
    """Latent z for one patch (or a batch): just the keyed MLP stack."""
    return nn.forward(key.patch_mlp, patch)


def encode_rows(key, image):
    """Encoded patches in original (pre-permutation) position order."""
    patches = patchify(key.spec, image)
    z = encode_patch(key, patches)
    pre = np.maximum(z + key.positional, 0.0)
    return pre @ key.final_W.T + key.final_b


def encode_image(key, image, perm_seed):
    """Encode and shuffle: row perm[i] of the output is patch i's encoding.

    perm_seed=None is the test hook for an identity permutation.
    """
    rows = encode_rows(key, image)
    n = key.spec.num_patches
    if perm_seed is None:
        perm = np.arange(n)
    else:
        perm = rng.stream(perm_seed, "encoder.perm").permutation(n)
    out = np.empty_like(rows)
    out[perm] = rows
    return out, perm


def encode_dataset(key, images, perm_seed):
    """Encode many images with per-image derived permutation seeds.

    Returns (encodings of shape (N, a^2, d_out), list of permutations).
    """
    seeds = rng.spawn_seeds(perm_seed, len(images), "encoder.dataset")
    encs, perms = [], []
    for img, s in zip(images, seeds):
        y, p = encode_image(key, img, int(s))
        encs.append(y)
        perms.append(p)
    return np.array(encs), perms


def save_encoded(json_path, encodings, spec, meta=None):
    info = {"kind": "encoded", "spec": spec.to_dict(), "count": len(encodings)}
    info.update(meta or {})
    return serialize.write_arrays(json_path, {"encodings": encodings}, meta=info)


def load_encoded(json_path):
    meta, arrays = serialize.read_arrays(json_path)
    if meta.get("kind") != "encoded":
        raise ConfigError(f"not an encoded dataset: {json_path}")
    return ImageSpec.from_dict(meta["spec"]), arrays["encodings"]


def save_key(json_path, key):
    arrays = {"positional": key.positional, "final_W": key.final_W,
              "final_b": key.final_b}
    for t, (W, b) in enumerate(key.patch_mlp.layers):
        arrays[f"stack_W{t}"] = W
        arrays[f"stack_b{t}"] = b
    meta = {
        "kind": "encoder-key", "spec": key.spec.to_dict(), "seed": key.seed,
        "weight_scale": key.weight_scale, "stack_depth": len(key.patch_mlp.layers),
    }
    return serialize.write_arrays(json_path, arrays, meta=meta)


def load_key(json_path):
    meta, arrays = serialize.read_arrays(json_path)
    if meta.get("kind") != "encoder-key":
        raise ConfigError(f"not an encoder key: {json_path}")
    layers = [
        (arrays[f"stack_W{t}"], arrays[f"stack_b{t}"])
        for t in range(meta["stack_depth"])
    ]
    return EncoderKey(
        patch_mlp=nn.MlpParams(layers=layers),
        positional=arrays["positional"], final_W=arrays["final_W"],
        final_b=arrays["final_b"], spec=ImageSpec.from_dict(meta["spec"]),
        seed=meta["seed"], weight_scale=meta["weight_scale"],
    )
