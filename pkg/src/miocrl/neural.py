"""Small dense networks with hand-written reverse mode and Adam.

Networks are two-hidden-layer ReLU perceptrons in float64. Parameters are kept
as a flat list ``[W1, b1, W2, b2, W3, b3]`` with ``W`` shaped ``(fan_in,
fan_out)`` so that a batch ``x`` of shape ``(B, fan_in)`` maps as ``x @ W + b``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeMismatch

CHECKPOINT_FORMAT = "miocrl-checkpoint"
CHECKPOINT_VERSION = 1

_OUTPUTS = ("tanh", "identity")


class Mlp:
    def __init__(self, sizes, output="identity", rng=None, params=None):
        if output not in _OUTPUTS:
            raise ValueError(f"output activation must be one of {_OUTPUTS}")
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        if params is not None:
            self.params = [np.array(p, dtype=float) for p in params]
            self._check(self.params)
            return
        rng = rng if rng is not None else np.random.default_rng()
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    def _check(self, params):
        expected = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            expected += [(a, b), (b,)]
        got = [np.shape(p) for p in params]
        if got != expected:
            raise ShapeMismatch(f"parameter shapes {got} do not match layer sizes {self.sizes}")

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def clone(self):
        return Mlp(self.sizes, self.output, params=[p.copy() for p in self.params])

    def forward(self, x):
        """Return ``(y, tape)``; ``x`` may be one sample or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"input width {x.shape[-1]} != {self.n_in}")
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W + b
            if k < n_layers - 1:
                h = np.maximum(z, 0.0)
            else:
                h = np.tanh(z) if self.output == "tanh" else z
            acts.append(h)
        tape = (acts, single, z)
        return (h[0] if single else h), tape

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape, dy, dz=None):
        """Gradients of a scalar loss whose derivative w.r.t. the output is ``dy``.

        ``dz`` optionally adds a derivative taken w.r.t. the output layer's
        pre-activation. Returns ``(grads, dx)`` with ``grads`` aligned to
        ``self.params`` and ``dx`` the derivative w.r.t. the input.
        """
        acts, single, _ = tape
        dy = np.asarray(dy, dtype=float)
        if single:
            dy = dy[None, :]
        if dy.shape != acts[-1].shape:
            raise ShapeMismatch(f"output gradient shape {dy.shape} != {acts[-1].shape}")
        n_layers = len(self.params) // 2
        grads = [None] * len(self.params)
        if self.output == "tanh":
            g = dy * (1.0 - acts[-1] ** 2)
        else:
            g = dy
        if dz is not None:
            g = g + (dz[None, :] if single else dz)
        for k in range(n_layers - 1, -1, -1):
            W = self.params[2 * k]
            h_in = acts[k]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ W.T
            if k > 0:
                g = g * (acts[k] > 0)
        return grads, (g[0] if single else g)

    @staticmethod
    def preactivation(tape):
        """Output-layer pre-activation recorded by :meth:`forward`."""
        return tape[2]

    def to_dict(self):
        return {"sizes": list(self.sizes), "output": self.output,
                "params": [p.ravel().tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d):
        sizes = d["sizes"]
        shapes = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            shapes += [(a, b), (b,)]
        flat = d["params"]
        if len(flat) != len(shapes) or any(len(f) != int(np.prod(s)) for f, s in zip(flat, shapes)):
            raise ShapeMismatch("flat parameter lengths do not match layer sizes")
        params = [np.array(f, dtype=float).reshape(s) for f, s in zip(flat, shapes)]
        return cls(sizes, d["output"], params=params)


class Adam:
    """Adam with bias correction; moments mirror the parameter list."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step = 0

    def update(self, params, grads):
        """Apply one descent step in place and return ``params``."""
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ShapeMismatch("gradient shapes do not match parameters")
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params

    def state_dict(self):
        return {"lr": self.lr, "step": self.step,
                "m": [a.ravel().tolist() for a in self.m],
                "v": [a.ravel().tolist() for a in self.v]}


def adam_update(params, grads, opt: Adam):
    return opt.update(params, grads)


def soft_update(target: Mlp, online: Mlp, rho):
    """target <- rho * online + (1 - rho) * target, in place."""
    if target.sizes != online.sizes:
        raise ShapeMismatch("target and online networks differ in shape")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    for pt_, po in zip(target.params, online.params):
        pt_ *= 1.0 - rho
        pt_ += rho * po
    return target


def save_checkpoint(path, nets: dict, extra=None):
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "networks": {name: net.to_dict() for name, net in nets.items()},
           "extra": extra or {}}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path):
    """Return ``(nets, extra)``; raises :class:`FormatError` on bad files."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a checkpoint document") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: missing '{CHECKPOINT_FORMAT}' format tag")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    try:
        nets = {name: Mlp.from_dict(d) for name, d in doc["networks"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed network entry") from exc
    return nets, doc.get("extra", {})
