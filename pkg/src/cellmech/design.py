"""Bi-level inverse design over the energy network.

Inner problem (per loading direction): minimize Phi(E, T) over the strain
3-vector subject to the linear constraint d^T E d = magnitude. Solved by
feasible null-space Newton steps (SQP on a linear constraint) with the Hessian
eigen-shifted so its smallest eigenvalue is 1e-7. Outer problem: bound-
constrained quasi-Newton (L-BFGS-B, history 10) over structure parameters,
with analytic sensitivities from the implicit-function theorem on the inner
KKT conditions:

    dq/dT = -(dg/dq)^{-1} dg/dT,   g = [grad Phi - lambda a; -(a.E - m)]

Objectives: directional stress interpolation, directional stiffness
k = 1/((dd):S:(dd)), and Poisson profiles -((dd):S:(nn))/((dd):S:(dd)), with
the compliance S from inverting the exact network tangent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .energynet import EnergyNet
from .errors import InnerFailure, SingularKKTMatrix, SingularTangent, SQPNoConvergence

KINDS = ("uniaxial_stress", "directional_stiffness", "poisson_ratio")

_VOIGT_D = np.diag([1.0, 1.0, 0.5])


def direction_vectors(alpha: float):
    d = np.array([np.cos(alpha), np.sin(alpha)])
    n = np.array([-np.sin(alpha), np.cos(alpha)])
    return d, n


def constraint_vector(alpha: float) -> np.ndarray:
    """a such that a . (exx, eyy, exy) = d^T E d."""
    d, _ = direction_vectors(alpha)
    return np.array([d[0] ** 2, d[1] ** 2, 2.0 * d[0] * d[1]])


def quad_vector(v: np.ndarray) -> np.ndarray:
    """(v v^T) as the (V00, V11, V01) triple used in compliance contractions."""
    return np.array([v[0] ** 2, v[1] ** 2, v[0] * v[1]])


@dataclass
class InnerState:
    strain: np.ndarray  # (exx, eyy, exy)
    multiplier: float
    kkt_residual: float
    constraint_residual: float
    iterations: int = 0


@dataclass
class DesignObjective:
    kind: str
    directions: list
    magnitudes: list
    targets: list
    weights: list | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        n = len(self.targets)
        if not (len(self.directions) == len(self.magnitudes) == n):
            raise ValueError("directions, magnitudes and targets must be congruent")
        if self.weights is not None and len(self.weights) != n:
            raise ValueError("weights must match targets")

    def weight_array(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self.targets))
        return np.asarray(self.weights, dtype=float)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "directions": list(self.directions),
            "magnitudes": list(self.magnitudes),
            "targets": list(self.targets),
            "weights": None if self.weights is None else list(self.weights),
        }

    @staticmethod
    def from_dict(d: dict) -> "DesignObjective":
        return DesignObjective(
            d["kind"], list(d["directions"]), list(d["magnitudes"]),
            list(d["targets"]), d.get("weights"),
        )


@dataclass
class DesignResult:
    params: np.ndarray
    objective_value: float
    objective_history: list
    achieved: list
    targets: list
    iterations: int
    converged: bool
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params.tolist(),
            "objective_value": self.objective_value,
            "objective_history": list(self.objective_history),
            "achieved": list(self.achieved),
            "targets": list(self.targets),
            "iterations": self.iterations,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


def _shift_pd(H: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    """Uniform eigenvalue shift so the smallest eigenvalue equals `floor`."""
    w = np.linalg.eigvalsh(H)
    lo = float(w[0])
    if lo >= floor:
        return H
    return H + (floor - lo) * np.eye(H.shape[0])


def solve_inner(net: EnergyNet, params: np.ndarray, alpha: float, magnitude: float,
                warm: InnerState | None = None, kkt_tol: float = 1e-6,
                constraint_tol: float = 1e-8, max_iterations: int = 100) -> InnerState:
    """KKT point of min_E Phi(E, T) s.t. d^T E d = magnitude."""
    params = np.asarray(params, dtype=float).ravel()
    a = constraint_vector(alpha)
    aa = float(a @ a)
    # feasible start: pure directional strain, or the (reprojected) warm state
    if warm is not None:
        e = warm.strain.copy()
    else:
        d, _ = direction_vectors(alpha)
        e = magnitude * np.array([d[0] ** 2, d[1] ** 2, d[0] * d[1]])
    e = e + a * (magnitude - float(a @ e)) / aa
    # orthonormal null-space basis of the constraint row
    Q = np.linalg.qr(np.column_stack([a, np.eye(3)[:, :2]]))[0]
    N = Q[:, 1:]

    def eval_at(ev, order):
        X = np.concatenate([params, ev])[None, :]
        return net.evaluate(X, order)

    p = len(params)
    it = 0
    while True:
        res = eval_at(e, 2)
        g = res["grad"][0][p:]
        lam = float(a @ g) / aa
        kkt = float(np.linalg.norm(g - lam * a))
        if kkt <= kkt_tol:
            break
        if it >= max_iterations:
            raise SQPNoConvergence(
                f"inner solve stalled at KKT residual {kkt:.3e} after {it} iterations"
            )
        H = res["hess"][0][p:, p:]
        Hs = _shift_pd(H)
        Hr = N.T @ Hs @ N
        gr = N.T @ g
        s = np.linalg.solve(Hr, -gr)
        # backtracking on Phi along the feasible direction
        phi0 = float(res["phi"][0])
        slope = float(gr @ s)
        step = 1.0
        for _ in range(60):
            e_try = e + step * (N @ s)
            if float(eval_at(e_try, 0)["phi"][0]) <= phi0 + 1e-4 * step * slope:
                break
            step *= 0.5
        e = e + step * (N @ s)
        e = e + a * (magnitude - float(a @ e)) / aa
        it += 1
    return InnerState(
        strain=e,
        multiplier=lam,
        kkt_residual=kkt,
        constraint_residual=float(a @ e - magnitude),
        iterations=it,
    )


def sensitivity(net: EnergyNet, params: np.ndarray, inner: InnerState,
                alpha: float) -> np.ndarray:
    """dq/dT (q = [E, lambda], shape (4, p)) via the KKT implicit function theorem."""
    params = np.asarray(params, dtype=float).ravel()
    p = len(params)
    if p == 0:
        return np.zeros((4, 0))
    a = constraint_vector(alpha)
    X = np.concatenate([params, inner.strain])[None, :]
    res = net.evaluate(X, 2)
    H = res["hess"][0][p:, p:]
    mixed = res["hess"][0][p:, :p]  # d(grad_E Phi)/dT, shape (3, p)
    K = np.zeros((4, 4))
    K[:3, :3] = H
    K[:3, 3] = -a
    K[3, :3] = -a
    rhs = np.zeros((4, p))
    rhs[:3] = mixed
    try:
        return np.linalg.solve(K, -rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKKTMatrix(str(exc)) from exc


# ---------------------------------------------------------------------------
# objective evaluation with analytic total gradient
# ---------------------------------------------------------------------------


def _compliance(Cv: np.ndarray):
    """(Sv, shifted_flag): invert the Voigt tangent, eigen-shifting if indefinite."""
    w = np.linalg.eigvalsh(Cv)
    shifted = bool(w[0] <= 1e-12)
    Cuse = _shift_pd(Cv) if shifted else Cv
    try:
        Sv = np.linalg.inv(Cuse)
    except np.linalg.LinAlgError as exc:
        raise SingularTangent(str(exc)) from exc
    return Sv, shifted


def _achieved_and_partials(net: EnergyNet, params, inner: InnerState, alpha: float,
                           kind: str, need_grad: bool):
    """Achieved value plus d(ach)/dE (3,) and d(ach)/dT (p,) at fixed inner state."""
    params = np.asarray(params, dtype=float).ravel()
    p = len(params)
    a = constraint_vector(alpha)
    X = np.concatenate([params, inner.strain])[None, :]
    warn = False
    if kind == "uniaxial_stress":
        order = 2 if need_grad else 1
        res = net.evaluate(X, order)
        g = res["grad"][0][p:]
        ach = float(a @ g)  # == d^T S d
        if not need_grad:
            return ach, None, None, warn
        H = res["hess"][0]
        dA_de = H[p:, p:] @ a
        dA_dT = H[:p, p:] @ a if p else np.zeros(0)
        return ach, dA_de, dA_dT, warn

    order = 3 if need_grad else 2
    res = net.evaluate(X, order)
    Hs = res["hess"][0][p:, p:]
    Cv = _VOIGT_D @ Hs @ _VOIGT_D
    Sv, warn = _compliance(Cv)
    d, n = direction_vectors(alpha)
    qd, qn = quad_vector(d), quad_vector(n)
    den = float(qd @ Sv @ qd)
    num = float(qd @ Sv @ qn)
    if kind == "directional_stiffness":
        ach = 1.0 / den
        dach_dCv_mode = "stiffness"
    else:
        ach = -num / den
        dach_dCv_mode = "poisson"
    if not need_grad:
        return ach, None, None, warn

    u = Sv @ qd
    v = Sv @ qn
    if dach_dCv_mode == "stiffness":
        # d(1/den)/dCv = outer(u, u) / den^2  (via dSv = -Sv dCv Sv)
        dach_dCv = np.outer(u, u) / den**2
    else:
        # d(-num/den): num' = -u^T dCv v, den' = -u^T dCv u
        dach_dCv = (0.5 * (np.outer(u, v) + np.outer(v, u)) * den - np.outer(u, u) * num) / den**2
    T3 = res["third"][0]
    dach_de = np.empty(3)
    for k in range(3):
        dCv = _VOIGT_D @ T3[p + k, p:, p:] @ _VOIGT_D
        dach_de[k] = float(np.sum(dach_dCv * dCv))
    dach_dT = np.empty(p)
    for k in range(p):
        dCv = _VOIGT_D @ T3[k, p:, p:] @ _VOIGT_D
        dach_dT[k] = float(np.sum(dach_dCv * dCv))
    return ach, dach_de, dach_dT, warn


def objective_value(net: EnergyNet, params, objective: DesignObjective,
                    warm: dict | None = None, need_grad: bool = False,
                    inner_kkt_tol: float = 1e-6):
    """O(T) with per-target achieved values; optionally the analytic dO/dT.

    `warm` (mutable dict) caches inner states across calls, keyed by target
    index; reusing it across outer iterations warm-starts the inner solves.
    """
    params = np.asarray(params, dtype=float).ravel()
    p = len(params)
    w = objective.weight_array()
    achieved = []
    O = 0.0
    dO = np.zeros(p)
    warnings = []
    for j, (alpha, mag, tgt) in enumerate(
        zip(objective.directions, objective.magnitudes, objective.targets)
    ):
        prev = warm.get(j) if warm is not None else None
        try:
            inner = solve_inner(net, params, alpha, mag, warm=prev, kkt_tol=inner_kkt_tol)
        except SQPNoConvergence as exc:
            raise InnerFailure(f"target {j} (alpha={alpha:.3f}): {exc}") from exc
        if warm is not None:
            warm[j] = inner
        ach, dach_de, dach_dT, shifted = _achieved_and_partials(
            net, params, inner, alpha, objective.kind, need_grad
        )
        if shifted:
            warnings.append(f"target {j}: indefinite tangent eigen-shifted")
        achieved.append(ach)
        r = ach - tgt
        O += float(w[j] * r * r)
        if need_grad and p:
            dqdT = sensitivity(net, params, inner, alpha)
            dach_total = dach_dT + dqdT[:3].T @ dach_de
            dO += 2.0 * w[j] * r * dach_total
    if need_grad:
        return O, achieved, dO, warnings
    return O, achieved, warnings


def design(net: EnergyNet, t_min, t_max, objective: DesignObjective, init,
           max_iterations: int = 200, pg_tol: float = 1e-6,
           multi_start: int = 1, seed: int = 0) -> DesignResult:
    """Outer bound-constrained quasi-Newton minimization of the design objective."""
    t_min = np.asarray(t_min, dtype=float)
    t_max = np.asarray(t_max, dtype=float)
    init = np.clip(np.asarray(init, dtype=float), t_min, t_max)
    rng = np.random.default_rng(seed)
    starts = [init]
    for _ in range(multi_start - 1):
        starts.append(t_min + (t_max - t_min) * rng.random(len(t_min)))

    best = None
    for x0 in starts:
        warm: dict = {}
        history = []

        def fun(x):
            O, _, dO, _ = objective_value(net, x, objective, warm=warm, need_grad=True)
            return O, dO

        def cb(xk):
            O, _, _ = objective_value(net, xk, objective, warm=warm)
            history.append(float(O))

        O0, _, _ = objective_value(net, x0, objective, warm=warm)
        history.append(float(O0))
        res = minimize(
            fun, x0, jac=True, method="L-BFGS-B",
            bounds=list(zip(t_min, t_max)),
            callback=cb,
            options={"maxiter": max_iterations, "gtol": pg_tol, "ftol": 1e-14, "maxcor": 10},
        )
        x_fin = np.clip(res.x, t_min, t_max)
        O_fin, achieved, warns = objective_value(net, x_fin, objective, warm=warm)
        cand = DesignResult(
            params=x_fin,
            objective_value=float(O_fin),
            objective_history=history,
            achieved=[float(v) for v in achieved],
            targets=[float(t) for t in objective.targets],
            iterations=int(res.nit),
            converged=bool(res.success) or res.status == 1,
            warnings=warns,
        )
        if best is None or cand.objective_value < best.objective_value:
            best = cand
    return best


# ---------------------------------------------------------------------------
# profiles (CLI / service)
# ---------------------------------------------------------------------------


def stiffness_poisson_profile(net: EnergyNet, params, n_directions: int,
                              magnitude: float, warm: dict | None = None) -> dict:
    """Polar stiffness and Poisson profiles at a fixed directional magnitude."""
    params = np.asarray(params, dtype=float).ravel()
    alphas = [k * np.pi / n_directions for k in range(n_directions)]
    ks, nus = [], []
    prev = None
    for alpha in alphas:
        inner = solve_inner(net, params, alpha, magnitude, warm=prev)
        prev = inner
        k, _, _, _ = _achieved_and_partials(net, params, inner, alpha,
                                            "directional_stiffness", False)
        nu, _, _, _ = _achieved_and_partials(net, params, inner, alpha,
                                             "poisson_ratio", False)
        ks.append(float(k))
        nus.append(float(nu))
    return {
        "directions": [float(a) for a in alphas],
        "magnitude": float(magnitude),
        "stiffness": ks,
        "poisson": nus,
    }


def stress_strain_curve(net: EnergyNet, params, alpha: float,
                        magnitudes) -> dict:
    """Directional stress d^T S d along a list of Green magnitudes."""
    params = np.asarray(params, dtype=float).ravel()
    a = constraint_vector(alpha)
    out = []
    prev = None
    p = len(params)
    for m in magnitudes:
        inner = solve_inner(net, params, alpha, float(m), warm=prev)
        prev = inner
        g = net.evaluate(np.concatenate([params, inner.strain])[None, :], 1)["grad"][0][p:]
        out.append(float(a @ g))
    return {
        "alpha": float(alpha),
        "magnitudes": [float(m) for m in magnitudes],
        "stress": out,
    }


def load_objective(path: str) -> tuple[DesignObjective, dict]:
    """Objective spec file: kind, directions, magnitudes, targets, weights, init, bounds."""
    with open(path) as f:
        doc = json.load(f)
    obj = DesignObjective.from_dict(doc)
    extras = {k: doc[k] for k in ("init", "bounds", "multi_start", "seed") if k in doc}
    return obj, extras
