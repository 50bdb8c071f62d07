"""Compact convolutional classifier: pathology logit head plus an optional
tail-membership head used for expert gating."""

from __future__ import annotations

import numpy as np

import tailor.nn as nn
from tailor.nn import Tensor


class Classifier(nn.Module):
    def __init__(self, channels: tuple[int, ...] = (16, 32, 64, 128), seed: int = 0,
                 image_size: int = 32):
        rng = np.random.default_rng(seed)
        self.image_size = image_size
        self.channels = tuple(channels)
        convs, norms = [], []
        c_in = 1
        for c_out in channels:
            convs.append(nn.Conv2d(c_in, c_out, 3, rng, stride=2))
            norms.append(nn.GroupNorm(c_out))
            c_in = c_out
        self.convs = convs
        self.norms = norms
        self.head_pathology = nn.Dense(c_in, 1, rng)
        self.head_membership = nn.Dense(c_in, 1, rng)
        self.membership_trained = False

    def config(self) -> dict:
        return {"channels": list(self.channels), "image_size": self.image_size,
                "arch": "convnet4", "membership_trained": self.membership_trained}

    @classmethod
    def from_config(cls, cfg: dict) -> "Classifier":
        model = cls(channels=tuple(cfg["channels"]), image_size=cfg["image_size"])
        model.membership_trained = bool(cfg.get("membership_trained", False))
        return model

    def features(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))
        for conv, norm in zip(self.convs, self.norms):
            h = nn.relu(norm(conv(h)))
        return nn.tmean(h, axis=(2, 3))

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        """Returns (pathology logits (B,), membership probabilities (B,))."""
        feats = self.features(x)
        logit = nn.reshape(self.head_pathology(feats), (-1,))
        member = nn.sigmoid(nn.reshape(self.head_membership(feats), (-1,)))
        return logit, member

    def predict(self, images: np.ndarray, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
        """Array-in, array-out inference over (N,1,H,W)."""
        logits, members = [], []
        with nn.no_grad():
            for i in range(0, len(images), batch_size):
                lg, mb = self(images[i:i + batch_size])
                logits.append(lg.data)
                members.append(mb.data)
        return np.concatenate(logits), np.concatenate(members)

    def clone(self) -> "Classifier":
        out = Classifier(channels=self.channels, image_size=self.image_size)
        out.load_state_dict(self.state_dict())
        out.membership_trained = self.membership_trained
        return out
