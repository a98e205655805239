"""Catalog of market-price-of-risk processes and their path functionals.

Every catalog entry is described by a frozen :class:`MprSpec` and evaluated
against a path ensemble into an :class:`MprFunctionals`: the terminal (and
optionally per-node) values of ``integral lambda dW`` and
``integral lambda^2 dt``, plus whatever conditioning state the construction
carries (the midpoint path value, the arccos-transformed scale ``alpha``,
the density-sampled cut time ``sigma``, clock exit data).

Kinds
-----
``zero``
    No risk premium; every functional vanishes.
``constant``
    Constant level; closed forms exist for every downstream quantity.
``reverting``
    ``lambda_t = -sign(W_t) * sqrt(|W_t|)``: mean-reverting, unbounded, with
    pathwise-bounded increments of exposure but no BMO bound.
``nosol``
    Deterministic scale ``pi / (2 sqrt(-q (T-t)))`` switched on at ``T/2``
    and killed at the clock exit: total exposure is exactly critical, so the
    relevant exponential moment is infinite for the target power.
``alpha_arccos``
    Same construction scaled per path by ``alpha in [0, 1)``, an arccos
    transform of the midpoint state: solvable but with unbounded solution.
``sigma_gamma``
    The critical scale additionally cut at a time ``sigma`` sampled from a
    smooth terminal-concentrated density: every exponential moment of the
    exposure is finite yet the solution is still unbounded.
``tilde``
    Drifted-clock variant ``pi alpha / sqrt(8 (T-t))`` killed when the clock
    line ``B_u + b * (pi alpha / sqrt(8)) u`` leaves (-1, 1); the combined
    integral ``integral lambda (dW + b lambda dt)`` is pathwise bounded.
``scaled``
    ``(1/a)`` times the ``tilde`` entry — the family whose parameter modes
    witness both sides of the sharp moment threshold.

All singular integrands are evaluated in the logarithmic clock, never summed
on the raw time grid.
"""

from __future__ import annotations

import math
import re
from collections import OrderedDict
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import integrate, special

from qbsde.core import (
    DEFAULT_DV,
    ClockExits,
    PathEnsemble,
    PathFunctionals,
    ito_integral,
    simulate_two_sided_exit,
)

__all__ = [
    "KINDS",
    "MprSpec",
    "MprFunctionals",
    "SigmaSampler",
    "mpr_zero",
    "mpr_constant",
    "mpr_reverting",
    "mpr_nosol",
    "mpr_alpha_arccos",
    "mpr_sigma_gamma",
    "mpr_tilde",
    "mpr_scaled",
    "scaled_params",
    "spec_to_kv",
    "spec_from_kv",
    "alpha_from_w_half",
    "evaluate_mpr",
    "evaluate_tilde_under_tilted",
    "lambda_reverting",
    "lambda_nosol",
    "lambda_alpha",
    "lambda_sigma",
    "lambda_tilde",
    "lambda_scaled",
    "mvt_terminal",
    "kq_threshold",
]

KINDS = (
    "zero",
    "constant",
    "reverting",
    "nosol",
    "alpha_arccos",
    "sigma_gamma",
    "tilde",
    "scaled",
)

_NEEDS_Q = {"nosol", "alpha_arccos", "sigma_gamma", "scaled"}
_CLOCK_KINDS = {"nosol", "alpha_arccos", "sigma_gamma", "tilde", "scaled"}


def kq_threshold(q: float) -> float:
    """Sharp dynamic exponential-moment threshold ``(q - sqrt(q^2 - q))^2 / 2``.

    For exposure orders strictly above this value there is a BMO risk premium
    whose solution is unbounded; strictly below it every such premium yields
    a bounded solution.  Defined for ``q < 0``.
    """
    if not q < 0.0:
        raise ValueError(f"threshold defined for q < 0, got {q!r}")
    return 0.5 * (q - math.sqrt(q * q - q)) ** 2


@dataclass(frozen=True)
class MprSpec:
    """Immutable description of one market-price-of-risk process."""

    kind: str
    T: float = 1.0
    q: float | None = None
    level: float | None = None
    a: float | None = None
    b: float | None = None
    c_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"T must be finite and positive, got {self.T!r}")
        if not (math.isfinite(self.c_scale)):
            raise ValueError(f"c_scale must be finite, got {self.c_scale!r}")
        if self.kind in _NEEDS_Q:
            if self.q is None or not (math.isfinite(self.q) and self.q < 0.0):
                raise ValueError(f"kind {self.kind!r} requires q < 0, got {self.q!r}")
        if self.kind == "constant":
            if self.level is None or not math.isfinite(self.level):
                raise ValueError("constant kind requires a finite level")
        if self.kind in ("tilde", "scaled"):
            if self.b is None or not math.isfinite(self.b):
                raise ValueError(f"kind {self.kind!r} requires a finite drift slope b")
        if self.kind == "scaled":
            if self.a is None or not (math.isfinite(self.a) and self.a > 0.0):
                raise ValueError(f"scaled kind requires a > 0, got {self.a!r}")

    def with_scale(self, c_scale: float) -> "MprSpec":
        return replace(self, c_scale=float(c_scale))


def mpr_zero(T: float = 1.0) -> MprSpec:
    return MprSpec(kind="zero", T=T)


def mpr_constant(level: float, T: float = 1.0) -> MprSpec:
    return MprSpec(kind="constant", T=T, level=float(level))


def mpr_reverting(T: float = 1.0) -> MprSpec:
    return MprSpec(kind="reverting", T=T)


def mpr_nosol(q: float, T: float = 1.0, c_scale: float = 1.0) -> MprSpec:
    return MprSpec(kind="nosol", T=T, q=float(q), c_scale=c_scale)


def mpr_alpha_arccos(q: float, T: float = 1.0, c_scale: float = 1.0) -> MprSpec:
    return MprSpec(kind="alpha_arccos", T=T, q=float(q), c_scale=c_scale)


def mpr_sigma_gamma(q: float, T: float = 1.0, c_scale: float = 1.0) -> MprSpec:
    return MprSpec(kind="sigma_gamma", T=T, q=float(q), c_scale=c_scale)


def mpr_tilde(b: float, T: float = 1.0) -> MprSpec:
    return MprSpec(kind="tilde", T=T, b=float(b))


def mpr_scaled(q: float, a: float, b: float, T: float = 1.0) -> MprSpec:
    return MprSpec(kind="scaled", T=T, q=float(q), a=float(a), b=float(b))


def scaled_params(
    q: float, k: float | None = None, mode: str = "auto"
) -> tuple[float, float]:
    """Solve the scaled-family parameters ``(a, b)`` for a target regime.

    ``mode="below"`` (or ``k`` given): the scaled premium's moment threshold
    strictly exceeds ``k`` (which must satisfy ``k < kq_threshold(q)``) while
    the solution is unbounded — the below-threshold witness.  The tilted
    exposure order then lands exactly at its own critical value
    (``q b / a - q / (2 a^2) - b^2 / 2 = 1``).

    ``mode="critical"``: the moment threshold equals ``kq_threshold(q)``
    exactly (``kq/a^2 - b^2/2 = 1``) with a bounded solution — the boundary
    witness certificate.
    """
    if not q < 0.0:
        raise ValueError(f"scaled params require q < 0, got {q!r}")
    kq = kq_threshold(q)
    if mode == "auto":
        mode = "below" if k is not None else "critical"
    if mode == "below":
        if k is None:
            raise ValueError("mode 'below' requires a target order k")
        if not 0.0 < k < kq:
            raise ValueError(f"target k must lie in (0, kq={kq!r}), got {k!r}")
        s_k = (k - (q * q - q / 2.0)) / (-q)
        a_max_sq = (q * q - q - s_k * s_k) / 2.0 if s_k > 0.0 else (q * q - q) / 2.0
        a = math.sqrt(a_max_sq / 2.0)
        root = math.sqrt(q * q - q - 2.0 * a * a)
        b = (q - root) / a
        threshold = q * q - q / 2.0 + (-q) * root
        if not threshold > k:
            raise AssertionError("scaled parameter solve failed the threshold check")
        return a, b
    if mode == "critical":
        a = math.sqrt(kq) / 2.0
        b = math.sqrt(2.0 * kq / (a * a) - 2.0)
        return a, b
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Key-value serialization
# ---------------------------------------------------------------------------

_KV_FIELDS = ("kind", "T", "q", "level", "a", "b", "c_scale")


def spec_to_kv(spec: MprSpec, seed: int | None = None) -> str:
    """Serialize a spec (and optionally a seed) as ``key = value`` lines."""
    lines = [f"kind = {spec.kind}"]
    lines.append(f"T = {spec.T!r}")
    for name in ("q", "level", "a", "b"):
        value = getattr(spec, name)
        if value is not None:
            lines.append(f"{name} = {value!r}")
    if spec.c_scale != 1.0:
        lines.append(f"c_scale = {spec.c_scale!r}")
    if seed is not None:
        lines.append(f"seed = {int(seed)}")
    return "\n".join(lines) + "\n"


def spec_from_kv(text: str) -> tuple[MprSpec, int | None]:
    """Parse :func:`spec_to_kv` output; unknown keys are rejected."""
    fields: dict[str, object] = {}
    seed: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)", line)
        if m is None:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = m.group(1), m.group(2).strip()
        if key == "seed":
            seed = int(value)
        elif key == "kind":
            fields["kind"] = value
        elif key in _KV_FIELDS:
            fields[key] = float(value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    if "kind" not in fields:
        raise ValueError("missing required key 'kind'")
    return MprSpec(**fields), seed  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# The sigma sampler
# ---------------------------------------------------------------------------


class SigmaSampler:
    """Sampler for the terminal-concentrated cut time ``sigma``.

    The cut time has density ``f(s) = c0 * exp(-1/(T-s))`` on ``(T/2, T)``;
    the normalizer ``c0`` is computed by adaptive quadrature of the
    substituted integrand ``u^-2 exp(-u)`` on ``[2/T, inf)`` (truncated where
    the integrand tail drops below 1e-14, relative tolerance 1e-10), and the
    inverse CDF is resolved by bisection to 1e-12 in the time variable.
    Sampling maps the midpoint state through the Gaussian CDF (a uniform
    variate by the probability integral transform) and inverts.
    """

    def __init__(self, T: float = 1.0):
        if not (math.isfinite(T) and T > 0.0):
            raise ValueError(f"T must be finite and positive, got {T!r}")
        self.T = float(T)
        self.y_lo = 2.0 / self.T

    @staticmethod
    def _integrand(u: float) -> float:
        return math.exp(-u) / (u * u)

    @cached_property
    def c0(self) -> float:
        upper = max(self.y_lo * 2.0, 4.0)
        while self._integrand(upper) >= 1e-14:
            upper *= 2.0
        value, _ = integrate.quad(
            self._integrand, self.y_lo, upper, epsrel=1e-10, limit=200
        )
        return 1.0 / value

    def _tail(self, y: np.ndarray | float) -> np.ndarray | float:
        """``integral_y^inf u^-2 exp(-u) du`` via the exponential integral."""
        return special.expn(2, y) / y

    def cdf(self, s: np.ndarray | float) -> np.ndarray | float:
        """CDF of ``sigma`` on ``(T/2, T)``."""
        s = np.asarray(s, dtype=np.float64)
        if np.any(s <= self.T / 2.0) or np.any(s >= self.T):
            raise ValueError("sigma CDF domain is (T/2, T)")
        return 1.0 - self.c0 * self._tail(1.0 / (self.T - s))

    def inverse_cdf(self, u: np.ndarray | float) -> np.ndarray:
        """Inverse CDF by bisection, resolved to 1e-12 in the time variable."""
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any((u < 0.0) | (u > 1.0)):
            raise ValueError("uniform variates must lie in [0, 1]")
        target = (1.0 - np.clip(u, 0.0, 1.0 - 1e-16)) / self.c0
        lo = np.full(u.shape, self.y_lo)
        hi = np.full(u.shape, max(2.0 * self.y_lo, 4.0))
        # Expand until the tail at hi is below every target.
        while np.any(self._tail(hi) > target):
            hi = np.where(self._tail(hi) > target, hi * 2.0, hi)
        # Bisect in y = 1/(T-s); |ds| = |dy|/y^2 <= |dy| * (T/2)^2 / ... is
        # controlled by iterating until the s-bracket closes below 1e-12.
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            too_high = self._tail(mid) > target  # tail decreasing: move right
            lo = np.where(too_high, mid, lo)
            hi = np.where(too_high, hi, mid)
            s_width = np.max(1.0 / lo - 1.0 / hi)
            if s_width < 1e-12:
                break
        y = 0.5 * (lo + hi)
        return self.T - 1.0 / y

    def from_w_half(self, w_half: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map midpoint states to ``(sigma, u_sigma)``.

        ``u_sigma = log((T/2)/(T - sigma))`` is the clock image of the cut.
        """
        u = special.ndtr(np.sqrt(2.0 / self.T) * np.asarray(w_half, np.float64))
        sigma = self.inverse_cdf(u)
        u_sigma = np.log((self.T / 2.0) / (self.T - sigma))
        return sigma, u_sigma


def alpha_from_w_half(w_half: np.ndarray, T: float) -> np.ndarray:
    """Arccos-transformed per-path scale in ``[0, 1)``.

    ``alpha = (2/pi) arccos(sqrt(Phi(sqrt(2/T) W_{T/2})))`` — an
    ``F_{T/2}``-measurable deterministic map of the midpoint state.
    """
    phi = special.ndtr(np.sqrt(2.0 / T) * np.asarray(w_half, np.float64))
    return (2.0 / math.pi) * np.arccos(np.sqrt(phi))


# ---------------------------------------------------------------------------
# Evaluated functionals
# ---------------------------------------------------------------------------


@dataclass
class MprFunctionals:
    """Path functionals of one spec along one ensemble.

    ``int_lam_dw`` and ``int_lam2`` are the terminal values of
    ``integral lambda dW`` (physical-measure Brownian) and
    ``integral lambda^2 dt`` for the *unscaled* premium; the spec's
    ``c_scale`` (or an explicit override) is applied in
    :meth:`summand_power` / :meth:`scaled_integrals`.  For clock-driven kinds
    the exposure dies at clock time ``u_kill`` (exit, cut, or censoring) and
    ``exit_state`` keeps the clock-line state there; ``alpha`` / ``sigma`` /
    ``u_sigma`` carry the midpoint conditioning.  When built with
    ``need_nodes=True``, ``node_int_dw`` / ``node_int2`` hold cumulative
    integrals at every grid node (zeros before the construction switches on).
    """

    spec: MprSpec
    ensemble: PathEnsemble
    int_lam_dw: np.ndarray
    int_lam2: np.ndarray
    w_half: np.ndarray
    alpha: np.ndarray | None = None
    sigma: np.ndarray | None = None
    u_sigma: np.ndarray | None = None
    u_kill: np.ndarray | None = None
    exit_state: np.ndarray | None = None
    exit_sign: np.ndarray | None = None
    censored: np.ndarray | None = None
    clock: ClockExits | None = None
    coeff: np.ndarray | None = None
    drift: np.ndarray | None = None
    node_int_dw: np.ndarray | None = None
    node_int2: np.ndarray | None = None
    pathfun: PathFunctionals | None = None
    measure: str = "physical"

    @property
    def n_paths(self) -> int:
        return self.ensemble.n_paths

    def scaled_integrals(self, c: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(integral c*lambda dW, integral (c*lambda)^2 dt)``."""
        c = self.spec.c_scale if c is None else float(c)
        return c * self.int_lam_dw, c * c * self.int_lam2

    def summand_power(self, q: float, c: float | None = None) -> np.ndarray:
        """Per-path ``E(-c lambda . W)_T ** q`` summands.

        These are the Monte Carlo summands whose mean is the unconditional
        exponential functional deciding solvability.
        """
        i1, i2 = self.scaled_integrals(c)
        return np.exp(-q * i1 - 0.5 * q * i2)

    def tilt_weights(self) -> np.ndarray:
        """``dPtilde/dP`` weights ``E(-b lambda~ . W)_T`` for the drifted kinds."""
        if self.spec.kind not in ("tilde", "scaled"):
            raise ValueError("tilt weights exist only for the drifted-clock kinds")
        b = self.spec.b
        # Tilt is driven by the *unit-scale* drifted premium lambda~.
        scale = self.spec.a if self.spec.kind == "scaled" else 1.0
        i1 = self.int_lam_dw * scale
        i2 = self.int_lam2 * scale * scale
        return np.exp(-b * i1 - 0.5 * b * b * i2)


_EXIT_CACHE: OrderedDict[tuple, ClockExits] = OrderedDict()
_EXIT_CACHE_MAX = 6


def _driftless_exits(
    ensemble: PathEnsemble, dv: float, checkpoints: np.ndarray | None
) -> ClockExits:
    ck_key = None if checkpoints is None else tuple(np.round(checkpoints, 12))
    key = (ensemble.seed, ensemble.n_paths, dv, round(ensemble.grid.clock_depth, 12), ck_key)
    hit = _EXIT_CACHE.get(key)
    if hit is not None:
        _EXIT_CACHE.move_to_end(key)
        return hit
    exits = simulate_two_sided_exit(
        ensemble.n_paths,
        dv=dv,
        u_max=ensemble.grid.clock_depth,
        seed=ensemble.seed,
        stream=("hit", 0.0),
        checkpoints=checkpoints,
    )
    _EXIT_CACHE[key] = exits
    while len(_EXIT_CACHE) > _EXIT_CACHE_MAX:
        _EXIT_CACHE.popitem(last=False)
    return exits


def _node_clock_images(ensemble: PathEnsemble) -> np.ndarray:
    """Clock images ``log((T/2)/(T-t))`` of the grid nodes after ``T/2``."""
    grid = ensemble.grid
    t_late = grid.nodes[grid.half_index + 1 :]
    return np.log((grid.T / 2.0) / (grid.T - t_late))


def evaluate_mpr(
    spec: MprSpec,
    ensemble: PathEnsemble,
    *,
    dv: float = DEFAULT_DV,
    need_nodes: bool = False,
) -> MprFunctionals:
    """Evaluate a catalog spec along an ensemble.

    Grid-resident kinds integrate on the time grid; clock kinds run the
    bridge-corrected clock engine on an independent stream keyed by the
    ensemble seed (legitimate because the post-midpoint driver increments
    are independent of the midpoint state, whose functionals ``alpha`` /
    ``sigma`` are computed from the stored ensemble bit-exactly).
    """
    if spec.T != ensemble.grid.T:
        raise ValueError(
            f"spec horizon T={spec.T!r} does not match grid T={ensemble.grid.T!r}"
        )
    grid = ensemble.grid
    w_half = ensemble.w_half
    n = ensemble.n_paths

    if spec.kind == "zero":
        zeros_T = np.zeros(n)
        nodes = np.zeros((n, grid.n_nodes)) if need_nodes else None
        return MprFunctionals(
            spec=spec,
            ensemble=ensemble,
            int_lam_dw=zeros_T,
            int_lam2=zeros_T.copy(),
            w_half=w_half,
            node_int_dw=nodes,
            node_int2=None if nodes is None else nodes.copy(),
        )

    if spec.kind == "constant":
        level = spec.level
        pf = ito_integral(ensemble, np.full(grid.n_intervals, level))
        return MprFunctionals(
            spec=spec,
            ensemble=ensemble,
            int_lam_dw=pf.terminal_int_dw,
            int_lam2=pf.terminal_quad_var,
            w_half=w_half,
            node_int_dw=pf.int_dw if need_nodes else None,
            node_int2=pf.quad_var if need_nodes else None,
            pathfun=pf,
        )

    if spec.kind == "reverting":
        pf = ito_integral(
            ensemble, lambda t, w: -np.sign(w) * np.sqrt(np.abs(w))
        )
        return MprFunctionals(
            spec=spec,
            ensemble=ensemble,
            int_lam_dw=pf.terminal_int_dw,
            int_lam2=pf.terminal_quad_var,
            w_half=w_half,
            node_int_dw=pf.int_dw if need_nodes else None,
            node_int2=pf.quad_var if need_nodes else None,
            pathfun=pf,
        )

    # --- clock kinds ------------------------------------------------------
    checkpoints = _node_clock_images(ensemble) if need_nodes else None

    alpha: np.ndarray | None = None
    sigma = u_sigma = None
    drift: np.ndarray | None = None

    if spec.kind == "nosol":
        coeff = np.full(n, math.pi / (2.0 * math.sqrt(-spec.q)))
        exits = _driftless_exits(ensemble, dv, checkpoints)
    elif spec.kind == "alpha_arccos":
        alpha = alpha_from_w_half(w_half, grid.T)
        coeff = math.pi * alpha / (2.0 * math.sqrt(-spec.q))
        exits = _driftless_exits(ensemble, dv, checkpoints)
    elif spec.kind == "sigma_gamma":
        sampler = SigmaSampler(grid.T)
        sigma, u_sigma = sampler.from_w_half(w_half)
        coeff = np.full(n, math.pi / (2.0 * math.sqrt(-spec.q)))
        exits = simulate_two_sided_exit(
            n,
            dv=dv,
            u_max=grid.clock_depth,
            seed=ensemble.seed,
            stream=("hit-cut",),
            stop_u=u_sigma,
            checkpoints=checkpoints,
        )
    elif spec.kind in ("tilde", "scaled"):
        alpha = alpha_from_w_half(w_half, grid.T)
        unit_coeff = math.pi * alpha / math.sqrt(8.0)
        drift = spec.b * unit_coeff
        coeff = unit_coeff / spec.a if spec.kind == "scaled" else unit_coeff
        exits = simulate_two_sided_exit(
            n,
            dv=dv,
            u_max=grid.clock_depth,
            seed=ensemble.seed,
            stream=("hit-drift", spec.b),
            drift=drift,
            checkpoints=checkpoints,
        )
    else:  # pragma: no cover
        raise AssertionError(spec.kind)

    u_kill = exits.u_exit
    # Brownian-part state at the kill time: the engine's state minus the
    # deterministic drift accrued up to it.
    bm_state = exits.x_exit - (drift * u_kill if drift is not None else 0.0)
    int_lam_dw = coeff * bm_state
    int_lam2 = coeff * coeff * u_kill

    node_int_dw = node_int2 = None
    if need_nodes:
        node_int_dw = np.zeros((n, grid.n_nodes))
        node_int2 = np.zeros((n, grid.n_nodes))
        u_at = np.minimum(checkpoints[:, None], u_kill[None, :])
        bm_at = exits.ckpt_pos - (drift[None, :] * u_at if drift is not None else 0.0)
        first_late = grid.half_index + 1
        node_int_dw[:, first_late:] = coeff[:, None] * bm_at.T
        node_int2[:, first_late:] = (coeff[:, None] ** 2) * u_at.T

    return MprFunctionals(
        spec=spec,
        ensemble=ensemble,
        int_lam_dw=int_lam_dw,
        int_lam2=int_lam2,
        w_half=w_half,
        alpha=alpha,
        sigma=sigma,
        u_sigma=u_sigma,
        u_kill=u_kill,
        exit_state=exits.x_exit,
        exit_sign=exits.sign,
        censored=exits.censored,
        clock=exits,
        coeff=coeff,
        drift=drift,
        node_int_dw=node_int_dw,
        node_int2=node_int2,
    )


def evaluate_tilde_under_tilted(
    spec: MprSpec, ensemble: PathEnsemble, *, dv: float = DEFAULT_DV
) -> MprFunctionals:
    """Evaluate a drifted-clock spec under its tilted measure.

    Under the tilt ``dPtilde/dP = E(-b lambda~ . W)_T`` the drifted clock
    line is a plain Brownian motion, so the construction is the undrifted
    exit driven by the tilted Brownian motion: integrals returned here are
    against that Brownian motion and means of functions of them estimate
    tilted-measure expectations directly.
    """
    if spec.kind not in ("tilde", "scaled"):
        raise ValueError("tilted evaluation exists only for the drifted-clock kinds")
    grid = ensemble.grid
    n = ensemble.n_paths
    alpha = alpha_from_w_half(ensemble.w_half, grid.T)
    unit_coeff = math.pi * alpha / math.sqrt(8.0)
    coeff = unit_coeff / spec.a if spec.kind == "scaled" else unit_coeff
    exits = _driftless_exits(ensemble, dv, None)
    u_kill = exits.u_exit
    return MprFunctionals(
        spec=spec,
        ensemble=ensemble,
        int_lam_dw=coeff * exits.x_exit,
        int_lam2=coeff * coeff * u_kill,
        w_half=ensemble.w_half,
        alpha=alpha,
        u_kill=u_kill,
        exit_state=exits.x_exit,
        exit_sign=exits.sign,
        censored=exits.censored,
        clock=exits,
        coeff=coeff,
        measure="tilted",
    )


# ---------------------------------------------------------------------------
# Spec-facing constructors (catalog entry points)
# ---------------------------------------------------------------------------


def lambda_reverting(ensemble: PathEnsemble, *, need_nodes: bool = False) -> MprFunctionals:
    """Mean-reverting unbounded premium ``-sign(W) sqrt(|W|)``."""
    return evaluate_mpr(mpr_reverting(ensemble.grid.T), ensemble, need_nodes=need_nodes)


def lambda_nosol(
    ensemble: PathEnsemble, q: float, *, dv: float = DEFAULT_DV, need_nodes: bool = False
) -> MprFunctionals:
    """Exactly-critical clock premium (no solution at power ``q``)."""
    return evaluate_mpr(mpr_nosol(q, ensemble.grid.T), ensemble, dv=dv, need_nodes=need_nodes)


def lambda_alpha(
    ensemble: PathEnsemble, q: float, *, dv: float = DEFAULT_DV, need_nodes: bool = False
) -> MprFunctionals:
    """Per-path arccos-scaled clock premium (solvable, unbounded solution)."""
    return evaluate_mpr(
        mpr_alpha_arccos(q, ensemble.grid.T), ensemble, dv=dv, need_nodes=need_nodes
    )


def lambda_sigma(
    ensemble: PathEnsemble, q: float, *, dv: float = DEFAULT_DV, need_nodes: bool = False
) -> tuple[MprFunctionals, SigmaSampler]:
    """Density-cut critical premium plus its cut-time sampler."""
    fn = evaluate_mpr(
        mpr_sigma_gamma(q, ensemble.grid.T), ensemble, dv=dv, need_nodes=need_nodes
    )
    return fn, SigmaSampler(ensemble.grid.T)


def lambda_tilde(
    ensemble: PathEnsemble, b: float, *, dv: float = DEFAULT_DV, need_nodes: bool = False
) -> MprFunctionals:
    """Drifted-clock premium with pathwise-bounded combined integral."""
    return evaluate_mpr(mpr_tilde(b, ensemble.grid.T), ensemble, dv=dv, need_nodes=need_nodes)


def lambda_scaled(
    ensemble: PathEnsemble,
    q: float,
    k: float | None = None,
    mode: str = "auto",
    *,
    dv: float = DEFAULT_DV,
    need_nodes: bool = False,
) -> tuple[MprFunctionals, float, float]:
    """Scaled drifted-clock premium solved for the requested threshold mode."""
    a, b = scaled_params(q, k=k, mode=mode)
    fn = evaluate_mpr(
        mpr_scaled(q, a, b, ensemble.grid.T), ensemble, dv=dv, need_nodes=need_nodes
    )
    return fn, a, b


def mvt_terminal(
    functionals: MprFunctionals, c: float | None = None
) -> tuple[float, float, np.ndarray]:
    """Terminal mean-variance-tradeoff sample ``integral (c lambda)^2 dt``.

    Returns ``(mean, standard_error, per_path_values)``.
    """
    _, i2 = functionals.scaled_integrals(c)
    mean = float(np.mean(i2))
    se = float(np.std(i2, ddof=1) / math.sqrt(i2.size))
    return mean, se, i2
