"""Smooth parametric energy density Phi(T, E) with exact derivatives.

Two-branch MLP: structure parameters and the strain components (exx, eyy, exy)
pass through separate 3-layer branches, are concatenated, and run through a
trunk; a softplus head keeps Phi >= 0. Inference is pure numpy: values and
derivatives up to third order propagate in forward mode through the layers,
so stresses are exact gradients (conservative by construction), tangents are
exact Hessians, and the mixed third-order terms needed by design sensitivities
come from the same pass.

Tensor convention: the strain input is the 3-vector (exx, eyy, exy) with exy
fed once; at the tensor boundary S_xx = dPhi/dexx, S_yy = dPhi/deyy and
S_xy = dPhi/dexy / 2.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .homogenize import StrainState, StressState

MODEL_FORMAT = "cellmech-energy-net"
MODEL_VERSION = 1

ACTIVATIONS = ("swish", "tanh", "sine")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act_derivs(name: str, x: np.ndarray, order: int):
    """(f, f', f'', f''') up to `order` for the hidden activation."""
    if name == "swish":
        s = _sigmoid(x)
        sp = s * (1.0 - s)
        f = x * s
        out = [f]
        if order >= 1:
            out.append(s + x * sp)
        if order >= 2:
            out.append(2.0 * sp + x * sp * (1.0 - 2.0 * s))
        if order >= 3:
            out.append(3.0 * sp * (1.0 - 2.0 * s) + x * sp * (1.0 - 6.0 * s + 6.0 * s * s))
        return out
    if name == "tanh":
        t = np.tanh(x)
        out = [t]
        if order >= 1:
            out.append(1.0 - t * t)
        if order >= 2:
            out.append(-2.0 * t * (1.0 - t * t))
        if order >= 3:
            out.append(-2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t))
        return out
    if name == "sine":
        out = [np.sin(x)]
        if order >= 1:
            out.append(np.cos(x))
        if order >= 2:
            out.append(-np.sin(x))
        if order >= 3:
            out.append(-np.cos(x))
        return out
    raise ValueError(f"unknown activation '{name}'")


def _softplus_derivs(x: np.ndarray, order: int):
    f = np.logaddexp(0.0, x)
    out = [f]
    if order >= 1:
        s = _sigmoid(x)
        out.append(s)
    if order >= 2:
        out.append(s * (1.0 - s))
    if order >= 3:
        out.append(s * (1.0 - s) * (1.0 - 2.0 * s))
    return out


@dataclass
class NetConfig:
    strain_branch_layers: int = 3
    param_branch_layers: int = 3
    trunk_layers: int = 3
    width: int = 256
    hidden_activation: str = "swish"
    # output activation is fixed to softplus (non-negative energy)

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {ACTIVATIONS}")

    def to_dict(self) -> dict:
        return {
            "strain_branch_layers": self.strain_branch_layers,
            "param_branch_layers": self.param_branch_layers,
            "trunk_layers": self.trunk_layers,
            "width": self.width,
            "hidden_activation": self.hidden_activation,
            "output_activation": "softplus",
        }

    @staticmethod
    def from_dict(d: dict) -> "NetConfig":
        return NetConfig(
            strain_branch_layers=int(d.get("strain_branch_layers", 3)),
            param_branch_layers=int(d.get("param_branch_layers", 3)),
            trunk_layers=int(d.get("trunk_layers", 3)),
            width=int(d.get("width", 256)),
            hidden_activation=d.get("hidden_activation", "swish"),
        )


def _branch_shapes(in_dim: int, width: int, layers: int):
    dims = [in_dim] + [width] * layers
    return list(zip(dims[:-1], dims[1:]))


def layer_shapes(config: NetConfig, param_count: int) -> dict[str, list[tuple[int, int]]]:
    shapes = {"strain": _branch_shapes(3, config.width, config.strain_branch_layers)}
    if param_count > 0:
        shapes["param"] = _branch_shapes(param_count, config.width, config.param_branch_layers)
        trunk_in = 2 * config.width
    else:
        trunk_in = config.width
    shapes["trunk"] = _branch_shapes(trunk_in, config.width, config.trunk_layers)
    shapes["head"] = [(config.width, 1)]
    return shapes


class EnergyNet:
    """Weights plus input/output normalization; pure-numpy inference."""

    def __init__(self, config: NetConfig, param_count: int,
                 weights: dict[str, list[tuple[np.ndarray, np.ndarray]]],
                 in_shift: np.ndarray, in_scale: np.ndarray, out_scale: float = 1.0):
        self.config = config
        self.param_count = int(param_count)
        self.weights = weights
        self.in_shift = np.asarray(in_shift, dtype=float)
        self.in_scale = np.asarray(in_scale, dtype=float)
        self.out_scale = float(out_scale)
        d = self.param_count + 3
        if self.in_shift.shape != (d,) or self.in_scale.shape != (d,):
            raise ValueError("normalization vectors must have length param_count + 3")
        if np.any(self.in_scale <= 0) or self.out_scale <= 0:
            raise ValueError("scales must be positive")

    # -- construction -------------------------------------------------------

    @staticmethod
    def initialize(config: NetConfig, param_count: int, seed: int = 0,
                   in_shift=None, in_scale=None, out_scale: float = 1.0) -> "EnergyNet":
        """Xavier-uniform weights from a seeded generator (trainer start point)."""
        rng = np.random.default_rng(seed)
        weights = {}
        for name, shapes in layer_shapes(config, param_count).items():
            layers = []
            for n_in, n_out in shapes:
                a = np.sqrt(6.0 / (n_in + n_out))
                W = rng.uniform(-a, a, size=(n_out, n_in))
                layers.append((W, np.zeros(n_out)))
            weights[name] = layers
        d = param_count + 3
        return EnergyNet(
            config, param_count, weights,
            np.zeros(d) if in_shift is None else in_shift,
            np.ones(d) if in_scale is None else in_scale,
            out_scale,
        )

    # -- core evaluation ----------------------------------------------------

    @staticmethod
    def _lin(W, A):
        """Contract the feature axis: (o,i) x (B,i,*) -> (B,o,*), via one matmul."""
        B, n = A.shape[0], A.shape[1]
        flat = A.reshape(B, n, -1)
        out = np.matmul(W, flat)
        return out.reshape(B, W.shape[0], *A.shape[2:])

    def _run_layers(self, name, v, J, H, T, order):
        act = self.config.hidden_activation
        for W, b in self.weights[name]:
            v = v @ W.T + b
            if order >= 1:
                J = self._lin(W, J)
            if order >= 2:
                H = self._lin(W, H)
            if order >= 3:
                T = self._lin(W, T)
            fs = _act_derivs(act, v, order)
            if order >= 3:
                JJJ = J[:, :, :, None, None] * J[:, :, None, :, None] * J[:, :, None, None, :]
                JH = (
                    J[:, :, :, None, None] * H[:, :, None, :, :]
                    + J[:, :, None, :, None] * H[:, :, :, None, :]
                    + J[:, :, None, None, :] * H[:, :, :, :, None]
                )
                T = fs[3][..., None, None, None] * JJJ + fs[2][..., None, None, None] * JH \
                    + fs[1][..., None, None, None] * T
            if order >= 2:
                JJ = J[:, :, :, None] * J[:, :, None, :]
                H = fs[2][..., None, None] * JJ + fs[1][..., None, None] * H
            if order >= 1:
                J = fs[1][..., None] * J
            v = fs[0]
        return v, J, H, T

    def evaluate(self, X: np.ndarray, order: int = 0) -> dict:
        """Phi and derivatives w.r.t. raw inputs X = [params..., exx, eyy, exy].

        Returns dict with 'phi' (B,), and for order>=1 'grad' (B,d),
        order>=2 'hess' (B,d,d), order>=3 'third' (B,d,d,d).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B, d = X.shape
        p = self.param_count
        if d != p + 3:
            raise ValueError(f"expected inputs of width {p + 3}, got {d}")
        xn = (X - self.in_shift) / self.in_scale

        def seed(sl):
            n = sl.stop - sl.start
            v = xn[:, sl]
            J = np.zeros((B, n, d))
            J[:, np.arange(n), np.arange(sl.start, sl.stop)] = 1.0 / self.in_scale[sl]
            H = np.zeros((B, n, d, d)) if order >= 2 else None
            T = np.zeros((B, n, d, d, d)) if order >= 3 else None
            return v, J, H, T

        sv, sJ, sH, sT = self._run_layers("strain", *seed(slice(p, p + 3)), order)
        if p > 0:
            pv, pJ, pH, pT = self._run_layers("param", *seed(slice(0, p)), order)
            v = np.concatenate([pv, sv], axis=1)
            J = np.concatenate([pJ, sJ], axis=1) if order >= 1 else None
            H = np.concatenate([pH, sH], axis=1) if order >= 2 else None
            T = np.concatenate([pT, sT], axis=1) if order >= 3 else None
        else:
            v, J, H, T = sv, sJ, sH, sT
        v, J, H, T = self._run_layers("trunk", v, J, H, T, order)

        W, b = self.weights["head"][0]
        z = (v @ W.T + b)[:, 0]
        fs = _softplus_derivs(z, order)
        out = {"phi": self.out_scale * fs[0]}
        if order >= 1:
            Jz = self._lin(W, J)[:, 0]
            out["grad"] = self.out_scale * fs[1][:, None] * Jz
        if order >= 2:
            Hz = self._lin(W, H)[:, 0]
            out["hess"] = self.out_scale * (
                fs[2][:, None, None] * (Jz[:, :, None] * Jz[:, None, :])
                + fs[1][:, None, None] * Hz
            )
        if order >= 3:
            Tz = self._lin(W, T)[:, 0]
            JJJ = Jz[:, :, None, None] * Jz[:, None, :, None] * Jz[:, None, None, :]
            JH = (
                Jz[:, :, None, None] * Hz[:, None, :, :]
                + Jz[:, None, :, None] * Hz[:, :, None, :]
                + Jz[:, None, None, :] * Hz[:, :, :, None]
            )
            out["third"] = self.out_scale * (
                fs[3][:, None, None, None] * JJJ
                + fs[2][:, None, None, None] * JH
                + fs[1][:, None, None, None] * Tz
            )
        return out

    # -- physics-facing API -------------------------------------------------

    def _pack(self, params, strain) -> np.ndarray:
        t = np.asarray(getattr(params, "values", params), dtype=float).ravel()
        e = strain.as_vector() if isinstance(strain, StrainState) else np.asarray(strain, float)
        return np.concatenate([t, e.ravel()])

    def forward(self, params, strain) -> float:
        return float(self.evaluate(self._pack(params, strain)[None, :], 0)["phi"][0])

    def stress(self, params, strain) -> StressState:
        g = self.evaluate(self._pack(params, strain)[None, :], 1)["grad"][0]
        gs = g[self.param_count:]
        return StressState(float(gs[0]), float(gs[1]), float(0.5 * gs[2]))

    def stress_vector(self, X: np.ndarray) -> np.ndarray:
        """Batched (sxx, syy, sxy) rows from raw input rows."""
        g = self.evaluate(X, 1)["grad"][:, self.param_count:]
        return np.column_stack([g[:, 0], g[:, 1], 0.5 * g[:, 2]])

    def tangent(self, params, strain) -> np.ndarray:
        """Voigt tangent (3x3, strain vector (exx, eyy, 2 exy) -> (sxx, syy, sxy))."""
        Hr = self.evaluate(self._pack(params, strain)[None, :], 2)["hess"][0]
        Hs = Hr[self.param_count:, self.param_count:]
        D = np.diag([1.0, 1.0, 0.5])
        return D @ Hs @ D

    def tangent_full(self, params, strain) -> np.ndarray:
        """2x2x2x2 tangent with minor symmetries, from the Voigt form."""
        return voigt_tangent_to_full(self.tangent(params, strain))

    def param_gradients(self, params, strain):
        """(dPhi/dT, dS/dT, dC_voigt/dT): exact mixed derivatives."""
        p = self.param_count
        res = self.evaluate(self._pack(params, strain)[None, :], 3)
        dphi = res["grad"][0][:p]
        Hm = res["hess"][0][:p, p:]  # (p, 3) raw mixed
        dS = np.column_stack([Hm[:, 0], Hm[:, 1], 0.5 * Hm[:, 2]])
        T3 = res["third"][0][:p, p:, p:]  # (p, 3, 3) raw
        D = np.diag([1.0, 1.0, 0.5])
        dC = np.einsum("ij,pjk,kl->pil", D, T3, D)
        return dphi, dS, dC

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        blobs = {}
        for name, layers in self.weights.items():
            for li, (W, b) in enumerate(layers):
                blobs[f"{name}.{li}.W"] = _encode(W)
                blobs[f"{name}.{li}.b"] = _encode(b)
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "param_count": self.param_count,
            "normalization": {
                "in_shift": self.in_shift.tolist(),
                "in_scale": self.in_scale.tolist(),
                "out_scale": self.out_scale,
            },
            "weights": blobs,
        }
        return json.dumps(doc, sort_keys=True)

    def save(self, path: str):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    @staticmethod
    def from_json(text: str) -> "EnergyNet":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not an energy-net model file")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        config = NetConfig.from_dict(doc["config"])
        p = int(doc["param_count"])
        weights = {}
        for name, shapes in layer_shapes(config, p).items():
            layers = []
            for li, shape in enumerate(shapes):
                W = _decode(doc["weights"][f"{name}.{li}.W"], (shape[1], shape[0]))
                b = _decode(doc["weights"][f"{name}.{li}.b"], (shape[1],))
                layers.append((W, b))
            weights[name] = layers
        norm = doc["normalization"]
        return EnergyNet(
            config, p, weights,
            np.asarray(norm["in_shift"], float),
            np.asarray(norm["in_scale"], float),
            float(norm["out_scale"]),
        )

    @staticmethod
    def load(path: str) -> "EnergyNet":
        with open(path) as f:
            return EnergyNet.from_json(f.read())


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape)
    return a.copy()


def voigt_tangent_to_full(Cv: np.ndarray) -> np.ndarray:
    """Expand the Voigt tangent to C_ijkl with both minor symmetries."""
    C = np.zeros((2, 2, 2, 2))
    idx = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    for ij, a in idx.items():
        for kl, b in idx.items():
            C[ij[0], ij[1], kl[0], kl[1]] = Cv[a, b]
    return C


def full_compliance_from_voigt(Sv: np.ndarray) -> np.ndarray:
    """Expand the Voigt compliance (strain (exx, eyy, 2exy) = Sv @ stress) to S_ijkl."""
    S = np.zeros((2, 2, 2, 2))
    scale = {0: 1.0, 1: 1.0, 2: 0.5}  # shear rows/cols carry the half factor
    idx = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 2}
    for ij, a in idx.items():
        for kl, b in idx.items():
            S[ij[0], ij[1], kl[0], kl[1]] = scale[a] * scale[b] * Sv[a, b]
    return S
