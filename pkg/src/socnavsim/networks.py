"""Actor and critic networks over the stacked-scan motion feature.

The convolutional trunk uses a wide kernel and stride along the beam
axis with small extents along the time axis, followed by width-wise max
pooling, making the features insensitive to object shape while keeping
temporal changes resolved.  The action (critic) and goal vector join
after the trunk.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .lidar import MotionFeature
from .nn import Conv2d, Dense, MaxPoolW, ReLU, Tanh

ACTION_DIM = 2
GOAL_DIM = 2
ACTION_SCALE = 1.5
RANGE_NORM = 10.0


@dataclass(frozen=True)
class NetworkSpec:
    feature_shape: tuple[int, int]  # (time rows, beams)
    conv: tuple[tuple[int, int, int, int, int], ...] = (
        (16, 3, 41, 1, 8),  # (channels, k_time, k_beam, s_time, s_beam)
        (32, 3, 5, 1, 2),
    )
    pool_width: int = 4
    dense: tuple[int, ...] = (256, 128)

    def to_dict(self) -> dict:
        return {
            "feature_shape": list(self.feature_shape),
            "conv": [list(c) for c in self.conv],
            "pool_width": self.pool_width,
            "dense": list(self.dense),
        }

    @staticmethod
    def from_dict(d: dict) -> "NetworkSpec":
        return NetworkSpec(
            feature_shape=tuple(d["feature_shape"]),
            conv=tuple(tuple(c) for c in d["conv"]),
            pool_width=int(d["pool_width"]),
            dense=tuple(d["dense"]),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_network_spec(time_rows: int, beams: int) -> NetworkSpec:
    return NetworkSpec(feature_shape=(time_rows, beams))


def featurize(obs: MotionFeature, initial_goal_distance: float, dtype=np.float32):
    """Normalize an observation into network inputs."""
    feat = (obs.matrix / RANGE_NORM).astype(dtype)
    dist, bearing = obs.goal_vector
    denom = max(initial_goal_distance, 1e-6)
    goal = np.array([dist / denom, bearing / math.pi], dtype=dtype)
    return feat, goal


class Trunk:
    def __init__(self, spec: NetworkSpec, rng, dtype=np.float32):
        k, b = spec.feature_shape
        layers = []
        hw = (k, b)
        in_ch = 1
        for i, (ch, kh, kw, sh, sw) in enumerate(spec.conv):
            conv = Conv2d(in_ch, ch, (kh, kw), (sh, sw), hw, rng, dtype)
            layers.append((f"conv{i + 1}", conv))
            layers.append((f"relu{i + 1}", ReLU()))
            hw = conv.out_hw
            in_ch = ch
            if i == 0:
                pool = MaxPoolW(spec.pool_width)
                layers.append(("pool", pool))
                hw = (hw[0], pool.out_width(hw[1]))
        self.layers = layers
        self.flat_dim = in_ch * hw[0] * hw[1]

    def im2col1(self, feat):
        """First-layer patch matrix; reusable by any same-spec trunk."""
        return self.layers[0][1].im2col(feat[..., None])

    def forward(self, feat, cols1=None):
        x = feat[..., None]  # channels-last
        caches = []
        for i, (_, layer) in enumerate(self.layers):
            if i == 0:
                x, cache = layer.forward(x, cols1)
            else:
                x, cache = layer.forward(x)
            caches.append(cache)
        n = x.shape[0]
        flat_shape = x.shape
        return x.reshape(n, -1), (caches, flat_shape)

    def backward(self, dflat, cache):
        caches, flat_shape = cache
        dx = dflat.reshape(flat_shape)
        grads = {}
        for (name, layer), lcache in zip(reversed(self.layers), reversed(caches)):
            first = layer is self.layers[0][1]
            dx, lgrads = layer.backward(dx, lcache, need_input_grad=not first)
            for k, g in lgrads.items():
                grads[f"{name}.{k}"] = g
        return grads

    def params(self):
        out = {}
        for name, layer in self.layers:
            for k, p in layer.params().items():
                out[f"{name}.{k}"] = p
        return out


class _MLP:
    def __init__(self, dims, rng, dtype=np.float32, out_init=3e-3):
        self.hidden = [Dense(dims[i], dims[i + 1], rng, dtype) for i in range(len(dims) - 2)]
        out = Dense(dims[-2], dims[-1], rng, dtype)
        # small uniform output init keeps early value estimates near zero
        out.W = rng.uniform(-out_init, out_init, out.W.shape).astype(dtype)
        self.out = out
        self.relu = ReLU()

    def forward(self, x):
        caches = []
        for layer in self.hidden:
            x, c1 = layer.forward(x)
            x, c2 = self.relu.forward(x)
            caches.append((c1, c2))
        y, c_out = self.out.forward(x)
        return y, (caches, c_out)

    def backward(self, dy, cache):
        caches, c_out = cache
        grads = {}
        dx, g = self.out.backward(dy, c_out)
        grads["out.W"] = g["W"]
        grads["out.b"] = g["b"]
        for i in range(len(self.hidden) - 1, -1, -1):
            c1, c2 = caches[i]
            dx, _ = self.relu.backward(dx, c2)
            dx, g = self.hidden[i].backward(dx, c1)
            grads[f"fc{i + 1}.W"] = g["W"]
            grads[f"fc{i + 1}.b"] = g["b"]
        return dx, grads

    def params(self):
        out = {}
        for i, layer in enumerate(self.hidden):
            out[f"fc{i + 1}.W"] = layer.W
            out[f"fc{i + 1}.b"] = layer.b
        out["out.W"] = self.out.W
        out["out.b"] = self.out.b
        return out


class Actor:
    def __init__(self, spec: NetworkSpec, rng, dtype=np.float32):
        self.spec = spec
        self.trunk = Trunk(spec, rng, dtype)
        self.mlp = _MLP((self.trunk.flat_dim + GOAL_DIM, *spec.dense, ACTION_DIM), rng, dtype)
        self.tanh = Tanh()

    def forward(self, feat, goal, cols1=None):
        flat, tcache = self.trunk.forward(feat, cols1)
        x = np.concatenate([flat, goal], axis=1)
        y, mcache = self.mlp.forward(x)
        a, acache = self.tanh.forward(y)
        return ACTION_SCALE * a, (tcache, mcache, acache, y)

    def backward(self, da, cache, logit_grad=None):
        """logit_grad, when given, is added to the pre-squash gradient;
        the learner uses it to keep logits out of tanh saturation."""
        tcache, mcache, acache, _logits = cache
        dy, _ = self.tanh.backward(da * ACTION_SCALE, acache)
        if logit_grad is not None:
            dy = dy + logit_grad
        dx, grads = self.mlp.backward(dy, mcache)
        flat_dim = self.trunk.flat_dim
        tgrads = self.trunk.backward(np.ascontiguousarray(dx[:, :flat_dim]), tcache)
        out = {f"mlp.{k}": v for k, v in grads.items()}
        out.update({f"trunk.{k}": v for k, v in tgrads.items()})
        return out

    @staticmethod
    def logits(cache):
        return cache[3]

    def params(self):
        out = {f"trunk.{k}": v for k, v in self.trunk.params().items()}
        out.update({f"mlp.{k}": v for k, v in self.mlp.params().items()})
        return out


class Critic:
    def __init__(self, spec: NetworkSpec, rng, dtype=np.float32):
        self.spec = spec
        self.trunk = Trunk(spec, rng, dtype)
        self.mlp = _MLP((self.trunk.flat_dim + GOAL_DIM + ACTION_DIM, *spec.dense, 1), rng, dtype)

    def forward(self, feat, goal, action, cols1=None):
        flat, tcache = self.trunk.forward(feat, cols1)
        x = np.concatenate([flat, goal, action / ACTION_SCALE], axis=1)
        q, mcache = self.mlp.forward(x)
        return q[:, 0], (tcache, mcache)

    def backward(self, dq, cache, param_grads=True):
        """Returns (dQ/daction, param grads).

        With param_grads=False only the head is traversed, which is all
        the actor update needs: the action joins after the trunk.
        """
        tcache, mcache = cache
        dx, grads = self.mlp.backward(dq[:, None], mcache)
        daction = dx[:, -ACTION_DIM:] / ACTION_SCALE
        if not param_grads:
            return daction, {}
        flat_dim = self.trunk.flat_dim
        tgrads = self.trunk.backward(np.ascontiguousarray(dx[:, :flat_dim]), tcache)
        out = {f"mlp.{k}": v for k, v in grads.items()}
        out.update({f"trunk.{k}": v for k, v in tgrads.items()})
        return daction, out

    def params(self):
        out = {f"trunk.{k}": v for k, v in self.trunk.params().items()}
        out.update({f"mlp.{k}": v for k, v in self.mlp.params().items()})
        return out


def copy_params(src, dst) -> None:
    sp, dp = src.params(), dst.params()
    for k in sp:
        dp[k][...] = sp[k]


def soft_update(target, online, tau: float) -> None:
    tp, op = target.params(), online.params()
    for k in tp:
        tp[k] *= 1.0 - tau
        tp[k] += tau * op[k]


# ---------------------------------------------------------------------------
# Checkpoints: flat npz of named tensors plus a JSON metadata blob


def save_checkpoint(path, named_parts: dict, meta: dict) -> None:
    """named_parts maps a part name (e.g. 'actor') to a params dict."""
    arrays = {}
    for part, params in named_parts.items():
        for k, v in params.items():
            arrays[f"{part}/{k}"] = v
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns ({part: {name: array}}, meta)."""
    data = np.load(path)
    meta = json.loads(bytes(data["__meta__"]).decode())
    parts: dict = {}
    for key in data.files:
        if key == "__meta__":
            continue
        part, name = key.split("/", 1)
        parts.setdefault(part, {})[name] = data[key]
    return parts, meta


def actor_from_checkpoint(path, dtype=np.float32) -> tuple["Actor", dict]:
    parts, meta = load_checkpoint(path)
    spec = NetworkSpec.from_dict(meta["network_spec"])
    actor = Actor(spec, np.random.default_rng(0), dtype)
    ap = actor.params()
    for k, v in parts["actor"].items():
        ap[k][...] = v.astype(dtype)
    return actor, meta
