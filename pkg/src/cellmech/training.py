"""Energy-net trainer: Adam on the energy + stress-gradient loss.

The loss matches the sampled data on both the energy density and its exact
strain gradient (second-order backprop through the stress term):

    L = mean_i (Phi_i - Psi_i)^2 / max(Psi_i, eps_psi)^2
      + mean_i |S_pred,i - S_i|_F^2 / max(|S_i|_F, eps_S)^2

Both terms are squared relative errors: each sample's contribution is
normalized by its own target magnitude, and the normalizers are floored at
1e-3 x the training-set median because they vanish at rest strain. torch is used only here; the trained weights are exported
to the numpy EnergyNet, which is the inference engine everywhere else.
Training is single-threaded and seeded, so fixed seeds reproduce weights
byte for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .energynet import EnergyNet, NetConfig
from .errors import NonFiniteLoss
from .sampling import Dataset


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4  # desk runs usually pass 1e-3
    batch_size: int = 4096
    epochs: int = 2000
    seed: int = 0
    denominator_floor: float = 1e-3  # floors = this x median(Psi), x median(|S|)
    # the relative normalizers make early training stiff; a short absolute-loss
    # warmup plus gradient clipping keeps the weighted phase stable, and a
    # two-step lr decay stops late-phase oscillation around the optimum
    warmup_fraction: float = 0.2
    clip_grad_norm: float | None = 10.0
    lr_decay_steps: tuple = ((0.6, 0.2), (0.85, 0.2))  # (epoch fraction, factor)
    log_every: int = 50
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "denominator_floor": self.denominator_floor,
            "warmup_fraction": self.warmup_fraction,
            "clip_grad_norm": self.clip_grad_norm,
        }


def _frob2(s3: "np.ndarray"):
    """Squared Frobenius norm of symmetric tensors stored as (sxx, syy, sxy) rows."""
    return s3[:, 0] ** 2 + s3[:, 1] ** 2 + 2.0 * s3[:, 2] ** 2


def _build_torch_model(net: EnergyNet):
    import torch

    class _Model(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.act = net.config.hidden_activation
            self.p = net.param_count
            self.register_buffer("in_shift", torch.tensor(net.in_shift))
            self.register_buffer("in_scale", torch.tensor(net.in_scale))
            self.out_scale = net.out_scale
            for name, layers in net.weights.items():
                mods = torch.nn.ModuleList()
                for W, b in layers:
                    lin = torch.nn.Linear(W.shape[1], W.shape[0])
                    with torch.no_grad():
                        lin.weight.copy_(torch.tensor(W))
                        lin.bias.copy_(torch.tensor(b))
                    mods.append(lin)
                setattr(self, f"seg_{name}", mods)

        def _hidden(self, x):
            import torch.nn.functional as F

            if self.act == "swish":
                return F.silu(x)
            if self.act == "tanh":
                return torch.tanh(x)
            return torch.sin(x)

        def forward(self, T, E):
            import torch.nn.functional as F

            x = torch.cat([T, E], dim=1) if self.p else E
            xn = (x - self.in_shift) / self.in_scale
            sv = xn[:, self.p:]
            for lin in self.seg_strain:
                sv = self._hidden(lin(sv))
            if self.p:
                pv = xn[:, : self.p]
                for lin in self.seg_param:
                    pv = self._hidden(lin(pv))
                v = torch.cat([pv, sv], dim=1)
            else:
                v = sv
            for lin in self.seg_trunk:
                v = self._hidden(lin(v))
            z = self.seg_head[0](v)[:, 0]
            return self.out_scale * F.softplus(z)

    model = _Model().double()
    return model


def _export_weights(model, net: EnergyNet) -> EnergyNet:
    weights = {}
    for name, layers in net.weights.items():
        mods = getattr(model, f"seg_{name}")
        out = []
        for lin in mods:
            out.append(
                (lin.weight.detach().cpu().numpy().astype(np.float64),
                 lin.bias.detach().cpu().numpy().astype(np.float64))
            )
        weights[name] = out
    return EnergyNet(net.config, net.param_count, weights, net.in_shift, net.in_scale,
                     net.out_scale)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    train_energy_err: list = field(default_factory=list)
    train_gradient_err: list = field(default_factory=list)
    test_energy_err: list = field(default_factory=list)
    test_gradient_err: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def train(train_set: Dataset, net_config: NetConfig, train_config: TrainConfig,
          test_set: Dataset | None = None) -> tuple[EnergyNet, TrainLog]:
    """Fit an EnergyNet to a (already split) training set. Deterministic per seed."""
    import torch

    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    torch.manual_seed(train_config.seed)
    try:
        return _train_impl(train_set, net_config, train_config, test_set, torch)
    finally:
        torch.set_num_threads(n_threads)


def _train_impl(train_set, net_config, train_config, test_set, torch):
    T, E, S, psi = train_set.arrays()
    n, p = T.shape
    if n == 0:
        raise ValueError("empty training set")

    # input/output normalization from training statistics, baked into the model
    X = np.concatenate([T, E], axis=1)
    in_shift = X.mean(axis=0)
    in_scale = np.maximum(X.std(axis=0), 1e-8)
    out_scale = float(max(psi.mean(), 1e-12))
    eps_psi = max(train_config.denominator_floor * float(np.median(psi)), 1e-300)
    eps_s = max(train_config.denominator_floor * float(np.median(np.sqrt(_frob2(S)))), 1e-300)

    net0 = EnergyNet.initialize(net_config, p, seed=train_config.seed,
                                in_shift=in_shift, in_scale=in_scale, out_scale=out_scale)
    model = _build_torch_model(net0)
    opt = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)

    T_t = torch.tensor(T)
    E_t = torch.tensor(E)
    S_t = torch.tensor(S)
    psi_t = torch.tensor(psi)
    wpsi = 1.0 / torch.clamp(psi_t, min=eps_psi) ** 2
    s_norm2 = torch.clamp(
        S_t[:, 0] ** 2 + S_t[:, 1] ** 2 + 2.0 * S_t[:, 2] ** 2, min=eps_s**2
    )

    rng = np.random.default_rng(train_config.seed)
    log = TrainLog()
    batch = min(train_config.batch_size, n)
    warmup_epochs = int(round(train_config.warmup_fraction * train_config.epochs))
    psi_sc = max(float(psi.std()), 1e-12)
    s_sc = max(float(S.std()), 1e-12)

    decay_at = {
        int(round(f * train_config.epochs)): factor
        for f, factor in (train_config.lr_decay_steps or ())
    }
    for epoch in range(train_config.epochs):
        if epoch in decay_at:
            for group in opt.param_groups:
                group["lr"] *= decay_at[epoch]
        order = rng.permutation(n)
        ep_loss = 0.0
        ep_e_num = 0.0
        ep_g_num = 0.0
        n_seen = 0
        for start in range(0, n, batch):
            idx = torch.tensor(order[start : start + batch], dtype=torch.long)
            Tb, Eb = T_t[idx], E_t[idx].requires_grad_(True)
            phi = model(Tb, Eb)
            grad = torch.autograd.grad(phi.sum(), Eb, create_graph=True)[0]
            s_pred = torch.stack(
                [grad[:, 0], grad[:, 1], 0.5 * grad[:, 2]], dim=1
            )
            ds = s_pred - S_t[idx]
            ds2 = ds[:, 0] ** 2 + ds[:, 1] ** 2 + 2.0 * ds[:, 2] ** 2
            dphi2 = (phi - psi_t[idx]) ** 2
            if epoch < warmup_epochs:
                loss = dphi2.mean() / psi_sc**2 + ds2.mean() / s_sc**2
            else:
                loss = (dphi2 * wpsi[idx]).mean() + (ds2 / s_norm2[idx]).mean()
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if train_config.clip_grad_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), train_config.clip_grad_norm)
            opt.step()
            with torch.no_grad():
                m = len(idx)
                ep_loss += float(loss) * m
                ep_e_num += float((dphi2.sqrt() / torch.clamp(psi_t[idx], min=eps_psi)).sum())
                ep_g_num += float((ds2 / s_norm2[idx]).sqrt().sum())
                n_seen += m
        if (epoch % train_config.log_every == 0) or (epoch == train_config.epochs - 1):
            log.epochs.append(epoch)
            log.loss.append(ep_loss / n_seen)
            log.train_energy_err.append(ep_e_num / n_seen)
            log.train_gradient_err.append(ep_g_num / n_seen)
            if test_set is not None and len(test_set):
                net_now = _export_weights(model, net0)
                te_e, te_g = evaluate(net_now, test_set)
                log.test_energy_err.append(te_e)
                log.test_gradient_err.append(te_g)
        if (
            train_config.checkpoint_every
            and train_config.checkpoint_dir
            and epoch % train_config.checkpoint_every == 0
        ):
            os.makedirs(train_config.checkpoint_dir, exist_ok=True)
            _export_weights(model, net0).save(
                os.path.join(train_config.checkpoint_dir, f"checkpoint_{epoch:06d}.nmn")
            )

    return _export_weights(model, net0), log


def evaluate(net: EnergyNet, dataset: Dataset) -> tuple[float, float]:
    """Mean relative (energy, gradient) errors with floored normalizers.

    energy:   mean |Phi - Psi| / max(Psi, eps_psi)
    gradient: mean |S_pred - S|_F / max(|S|_F, eps_S)
    """
    T, E, S, psi = dataset.arrays()
    X = np.concatenate([T, E], axis=1)
    s_pred = net.stress_vector(X)
    phi = net.evaluate(X, 0)["phi"]
    eps_psi = max(1e-3 * float(np.median(psi)), 1e-300)
    eps_s = max(1e-3 * float(np.median(np.sqrt(_frob2(S)))), 1e-300)
    e_rel = np.abs(phi - psi) / np.maximum(psi, eps_psi)
    g_rel = np.sqrt(_frob2(s_pred - S)) / np.maximum(np.sqrt(_frob2(S)), eps_s)
    return float(e_rel.mean()), float(g_rel.mean())


def save_log(log: TrainLog, path: str):
    with open(path, "w") as f:
        json.dump(log.to_dict(), f, sort_keys=True, indent=1)
