"""Vision autoencoder: image in, staged latents out, imagery back.

The encoder runs 784 -> 512 -> 256 -> 128 -> 32 with tanh everywhere; the
third activation (v3) feeds the decoder and the working-memory model, the
fourth (v4, the AIT stage) feeds working memory and the shortcut feedback
path. The decoder mirrors back 128 -> 256 -> 512 -> 784 and ends in a
sigmoid, so any finite latent decodes to a valid image. Reconstruction
training drives decode(encode(x).v3) toward x; the v3->v4 stage is a fixed
seeded projection that the downstream model adapts to, and it is saved and
frozen with everything else.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .curriculum import PIXELS, SIDE
from .errors import ConfigError, ShapeError
from .layers import FcLayer
from .optim import Adam
from .seeding import make_rng
from .tensor import Tensor

DEFAULT_WIDTHS = (512, 256)
V3_DIM = 128
V4_DIM = 32


@dataclass
class LatentPair:
    v3: np.ndarray  # [128]
    v4: np.ndarray  # [32]


class VisionModel:
    def __init__(self, encoder: list[FcLayer], decoder: list[FcLayer]):
        self.encoder = encoder
        self.decoder = decoder
        if encoder[-2].n_out != decoder[0].n_in:
            raise ShapeError("decoder must branch from the third encoder stage")

    @classmethod
    def new(cls, rng: np.random.Generator, widths=DEFAULT_WIDTHS,
            v3: int = V3_DIM, v4: int = V4_DIM) -> "VisionModel":
        dims = (PIXELS, *widths, v3, v4)
        encoder = [FcLayer.new(rng, dims[i], dims[i + 1], "tanh") for i in range(len(dims) - 1)]
        dec_dims = (v3, *reversed(widths), PIXELS)
        decoder = []
        for i in range(len(dec_dims) - 1):
            act = "sigmoid" if i == len(dec_dims) - 2 else "tanh"
            decoder.append(FcLayer.new(rng, dec_dims[i], dec_dims[i + 1], act))
        return cls(encoder, decoder)

    @property
    def v3_dim(self) -> int:
        return self.encoder[-2].n_out

    @property
    def v4_dim(self) -> int:
        return self.encoder[-1].n_out

    # ---------------------------------------------------------------- numpy paths

    def encode(self, img: np.ndarray) -> LatentPair:
        """Single image (28x28 or flat 784) to its stage-3 and stage-4 latents."""
        v3, v4 = self.encode_batch(_flatten_one(img))
        return LatentPair(v3=v3[0], v4=v4[0])

    def encode_batch(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = Tensor(np.asarray(flat, dtype=np.float32))
        for layer in self.encoder[:-1]:
            x = layer(x)
        v3 = x.data
        v4 = self.encoder[-1](x).data
        return v3, v4

    def decode(self, v3: np.ndarray) -> np.ndarray:
        """Latent back to a 28x28 image; total on any finite 128-vector."""
        arr = np.asarray(v3, dtype=np.float32).reshape(1, self.v3_dim)
        return self.decode_batch(arr)[0].reshape(SIDE, SIDE)

    def decode_batch(self, v3: np.ndarray) -> np.ndarray:
        x = Tensor(np.asarray(v3, dtype=np.float32))
        for layer in self.decoder:
            x = layer(x)
        return x.data

    def v3_to_v4(self, v3: np.ndarray) -> np.ndarray:
        """Apply only the final encoder stage (the shortcut feedback step)."""
        arr = np.asarray(v3, dtype=np.float32)
        single = arr.ndim == 1
        out = self.encoder[-1](Tensor(arr.reshape(-1, self.v3_dim))).data
        return out[0] if single else out

    # ------------------------------------------------------------- tensor paths

    def encode_v3_t(self, x: Tensor) -> Tensor:
        for layer in self.encoder[:-1]:
            x = layer(x)
        return x

    def decode_t(self, v3: Tensor) -> Tensor:
        x = v3
        for layer in self.decoder:
            x = layer(x)
        return x

    # ----------------------------------------------------------------- plumbing

    def named_params(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.encoder, start=1):
            out.update(dict(layer.params(f"enc{i}")))
        for i, layer in enumerate(self.decoder, start=1):
            out.update(dict(layer.params(f"dec{i}")))
        return out

    def arch(self) -> dict:
        return {
            "kind": "vision",
            "widths": [l.n_out for l in self.encoder[:-2]],
            "v3": self.v3_dim,
            "v4": self.v4_dim,
        }

    @classmethod
    def from_component(cls, arch: dict, params: dict[str, np.ndarray]) -> "VisionModel":
        model = cls.new(make_rng(0), widths=tuple(arch["widths"]),
                        v3=arch["v3"], v4=arch["v4"])
        from .language import _load_named

        _load_named(model.named_params(), params)
        return model


def _flatten_one(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float32)
    if arr.shape == (SIDE, SIDE):
        arr = arr.reshape(1, PIXELS)
    elif arr.shape == (PIXELS,):
        arr = arr.reshape(1, PIXELS)
    else:
        raise ShapeError(f"expected one {SIDE}x{SIDE} image, got {arr.shape}")
    return arr


def param_checksum(named: dict[str, Tensor]) -> int:
    """crc32 over all parameter bytes; used to prove models stay frozen."""
    crc = 0
    for name in sorted(named):
        crc = zlib.crc32(named[name].data.tobytes(), crc)
    return crc


def reconstruction_mse(model: VisionModel, flat: np.ndarray) -> float:
    """Mean per-pixel squared reconstruction error over an image set."""
    v3, _ = model.encode_batch(flat)
    recon = model.decode_batch(v3)
    return float(np.mean((recon - flat) ** 2))


def train_autoencoder(images: np.ndarray, *, steps: int = 5000, batch: int = 32,
                      lr: float = 1e-3, widths=DEFAULT_WIDTHS, v3: int = V3_DIM,
                      v4: int = V4_DIM, seed: int = 0, eval_every: int = 250,
                      log=None) -> tuple[VisionModel, list[dict]]:
    """Fit the autoencoder on flat [N, 784] images; returns the model frozen-ready.

    The per-pixel mean squared error is the training loss and the reported
    metric; history rows land in the returned metrics list.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 2 or images.shape[1] != PIXELS or images.shape[0] == 0:
        raise ConfigError(f"need a nonempty [N,{PIXELS}] image array, got {images.shape}")
    rng = make_rng(seed)
    model = VisionModel.new(rng, widths=widths, v3=v3, v4=v4)
    params = model.named_params()
    opt = Adam(list(params.values()), lr=lr)
    n = images.shape[0]
    scale = 1.0 / (batch * PIXELS)
    metrics = []
    for step in range(1, steps + 1):
        idx = rng.integers(0, n, size=batch)
        x = Tensor(images[idx])
        opt.zero_grad()
        recon = model.decode_t(model.encode_v3_t(x))
        loss = T.scale(T.square_sum(T.sub(recon, x)), scale)
        loss.backward()
        opt.step()
        if step % eval_every == 0 or step == steps or step == 1:
            row = {"step": step, "loss": float(loss.data)}
            metrics.append(row)
            if log:
                log(row)
    return model, metrics
