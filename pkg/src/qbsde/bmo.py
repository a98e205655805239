"""BMO analysis and solution classification for the exposure catalog.

Estimates BMO2 norms and dynamic exponential moments of the risk-premium
martingale over a restricted stopping family, brackets the critical moment
order by bisection, evaluates the sharp boundedness threshold ``k_q``, and
runs the John-Nirenberg, reverse-Holder, and a priori bound checks.  The
classifier combines these into one of three verdicts per (spec, q):
``BoundedSolution``, ``UnboundedSolution``, or ``NoSolution``.

Suprema over all stopping times are not computable by simulation.  Every
"sup" here is taken over a *restricted* family - deterministic grid times
plus the construction's own clock times, conditioned by binning on a
midpoint statistic - and is therefore a lower bound of the true norm; the
reports carry that caveat explicitly.  Conditioning on any measurable
statistic keeps the estimates honest: a binned mean is the conditional
expectation given a coarser sigma-field, which can only undershoot the
essential supremum of the finer one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from qbsde.core import DEFAULT_DV, PathEnsemble, philox_stream
from qbsde.catalog import (
    MprFunctionals,
    MprSpec,
    evaluate_mpr,
    evaluate_tilde_under_tilted,
    kq_threshold,
)
from qbsde.heavytail import (
    GROWTH_FLOOR,
    HILL_CEILING,
    HILL_FAST_PATH,
    DivergenceEvidence,
    divergence_verdict,
    growth_ratio,
    hill_estimator,
)
from qbsde.solver import (
    default_eps0,
    psi_conditional_profile,
    psi_path,
    psi_unconditional,
)

__all__ = [
    "BOUNDED",
    "UNBOUNDED",
    "NO_SOLUTION",
    "BinCell",
    "NormEstimate",
    "DynMoment",
    "CriticalExponent",
    "JnCheck",
    "RhCheck",
    "AprioriCheck",
    "BmoReport",
    "Classification",
    "kq_numeric",
    "kq_curve",
    "scaled_tilted_order",
    "sigma_cut_lower_bound",
    "reverting_rh_lower",
    "bmo_norm",
    "dyn_exp_moment",
    "critical_exponent",
    "john_nirenberg_check",
    "reverse_holder",
    "apriori_bound",
    "classify",
    "bmo_report",
]

BOUNDED = "BoundedSolution"
UNBOUNDED = "UnboundedSolution"
NO_SOLUTION = "NoSolution"


def _spec_record(spec: MprSpec) -> dict:
    """Compact spec serialization for JSON evidence records."""
    return {k: v for k, v in asdict(spec).items() if v is not None}

_CLOCK_KINDS = ("nosol", "alpha_arccos", "sigma_gamma", "tilde", "scaled")
_PROFILE_KINDS = ("alpha_arccos", "sigma_gamma", "tilde", "scaled")

#: Minimum samples per conditional bin.
MIN_BIN = 200
#: Mass of each edge bin pinned to the boundary of the conditioning state.
EDGE_FRACTION = 0.025
#: Minimum edge-bin size; below this the edge estimator is pure noise.
EDGE_MIN = 400
#: Growth sanity floor for edge cells (strict: constant cells sit exactly
#: at 1 and must not fire).
EDGE_GROWTH_FLOOR = 1.05
#: Conditional-mean ratio (extreme bin over median bin) read as state growth.
STATE_GROWTH_RATIO = 2.5
#: Relative jump of the max bin between half and full sample read as unstable.
STABILITY_TOL = 0.35
#: Slack factor on the linear-growth slope checks against analytic rates.
SLOPE_TOL = 0.4


# ---------------------------------------------------------------------------
# Threshold k_q
# ---------------------------------------------------------------------------


def kq_numeric(q: float, *, xatol: float = 1e-13) -> float:
    """Boundedness threshold by direct minimization over the split parameter.

    Minimizes ``(q^2 (1-q)/e - q + 2 q^2 - q e) / 2`` over ``e > 0``; the
    minimizer is ``sqrt(q^2 - q)`` and the minimum equals the closed form
    :func:`qbsde.catalog.kq_threshold`.  Kept as an independent numeric
    cross-check of that algebra.
    """
    if not q < 0.0:
        raise ValueError(f"threshold defined for q < 0, got {q!r}")

    def objective(eps: float) -> float:
        return 0.5 * (q * q * (1.0 - q) / eps - q + 2.0 * q * q - q * eps)

    scale = math.sqrt(q * q - q)
    res = optimize.minimize_scalar(
        objective, bounds=(1e-8 * scale, 50.0 * scale), method="bounded",
        options={"xatol": xatol},
    )
    return float(res.fun)


def kq_curve(p_values: np.ndarray) -> list[tuple[float, float, float]]:
    """Rows ``(p, q, k_q)`` for utility powers ``p`` in ``(0, 1)``.

    ``q = p/(p-1)`` is negative exactly on that range, where the sharp
    threshold applies.
    """
    rows = []
    for p in np.asarray(p_values, dtype=np.float64):
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ValueError(f"utility power must lie in (0, 1), got {p!r}")
        q = p / (p - 1.0)
        rows.append((p, q, kq_threshold(q)))
    return rows


def scaled_tilted_order(spec: MprSpec) -> float:
    """Tilted exposure order ``q b/a - q/(2 a^2) - b^2/2`` of a scaled spec.

    Orders below 1 certify a bounded solution for the spec's own ``q``; the
    below-threshold witness construction lands exactly at 1 (critical under
    the tilt) and has an unbounded solution.
    """
    if spec.kind != "scaled":
        raise ValueError(f"tilted order defined for scaled specs, got {spec.kind!r}")
    q, a, b = spec.q, spec.a, spec.b
    return q * b / a - q / (2.0 * a * a) - 0.5 * b * b


# ---------------------------------------------------------------------------
# Analytic lower bounds used by the unboundedness checks
# ---------------------------------------------------------------------------


def reverting_rh_lower(t: float, w: np.ndarray | float, q: float, T: float):
    """Conditional reverse-Holder lower bound ``exp(-q (T-t) |w| / 2)``.

    For the mean-reverting premium the conditional tail factor given
    ``W_t = w`` is at least this value, which is unbounded in ``|w|`` - the
    mechanism behind its unbounded solution.
    """
    if t < 0.0 or t >= T:
        raise ValueError(f"need 0 <= t < T, got t={t!r}")
    return np.exp(-q * (T - t) / 2.0 * np.abs(w))


def sigma_cut_lower_bound(u_cut: np.ndarray | float, q: float, c_scale: float = 1.0):
    """Lower bound for ``exp((1-q) Psi_{T/2})`` of the density-cut premium.

    At the critical scale the conditional inner mean given a cut depth ``u``
    grows at least linearly: truncating the exit-time series to its leading
    term gives ``E[exp(rate * (H ^ u))] >= exp(-s) * ((pi^2/4) u - 7/4)``
    with ``s`` the worst exit-state factor, valid once the bracket is
    positive.  Only the critical scale ``|c| = 1`` has this linear growth;
    other scales return the trivial bound 1.
    """
    u = np.asarray(u_cut, dtype=np.float64)
    if abs(abs(c_scale) - 1.0) > 1e-12:
        return np.ones_like(u)
    s = -q * abs(c_scale) * math.pi / (2.0 * math.sqrt(-q))
    linear = (math.pi ** 2 / 4.0) * u - 1.75
    return np.maximum(math.exp(-s) * linear, 1e-300)


# ---------------------------------------------------------------------------
# Conditional bins over the restricted stopping family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinCell:
    """One conditional-mean cell: a family member restricted to a state bin."""

    member: str
    statistic: str
    center: float
    count: int
    mean: float
    se: float
    time: float
    samples: np.ndarray = field(repr=False, compare=False)

    def to_json_record(self) -> dict:
        return {
            "member": self.member,
            "statistic": self.statistic,
            "center": None if math.isnan(self.center) else self.center,
            "count": self.count,
            "mean": self.mean,
            "se": self.se,
            "time": self.time,
        }


def _cells_from_stat(
    member: str,
    stat_name: str,
    stat: np.ndarray | None,
    samples: np.ndarray,
    t: float,
    *,
    min_bin: int,
    max_bins: int,
    add_edges: bool = False,
) -> list[BinCell]:
    """Equal-count bins of ``samples`` on ``stat`` (single bin when flat).

    With ``add_edges``, two narrow value-bins pinned to the edges of the
    statistic's empirical support are appended (tagged ``<stat>-edge``).
    Equal-count bins wash out a thin sub-population sitting at the edge of
    the conditioning state; the edge bins isolate it so tail decisions see
    its conditional law rather than a mixture dominated by the body.
    """
    n = samples.size
    if n == 0:
        return []

    def cell(sel: np.ndarray, center: float, name: str = stat_name) -> BinCell:
        vals = samples[sel] if sel is not None else samples
        m = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        return BinCell(
            member=member, statistic=name, center=center,
            count=int(vals.size), mean=m, se=se, time=t, samples=vals,
        )

    flat = stat is None or float(np.ptp(stat)) < 1e-12
    n_bins = min(max_bins, n // min_bin)
    if flat or n_bins < 2:
        return [cell(None, math.nan)]
    edges = np.quantile(stat, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    which = np.searchsorted(edges, stat, side="right")
    cells = []
    for b in range(n_bins):
        sel = which == b
        cnt = int(np.count_nonzero(sel))
        if cnt < min_bin:
            continue
        cells.append(cell(sel, float(np.mean(stat[sel]))))
    if add_edges and n >= 2 * EDGE_MIN:
        for lo_side in (True, False):
            frac = EDGE_FRACTION if lo_side else 1.0 - EDGE_FRACTION
            cut = float(np.quantile(stat, frac))
            sel = (stat <= cut) if lo_side else (stat >= cut)
            if int(np.count_nonzero(sel)) >= EDGE_MIN:
                cells.append(cell(sel, float(np.mean(stat[sel])),
                                  name=f"{stat_name}-edge"))
    return cells or [cell(None, math.nan)]


def _grid_member_indices(ensemble: PathEnsemble, times: list[float] | None) -> list[int]:
    grid = ensemble.grid
    if times is None:
        times = [0.0, grid.T / 4.0, grid.T / 2.0, 3.0 * grid.T / 4.0]
    idx = sorted({int(np.argmin(np.abs(grid.nodes - t))) for t in times})
    return [k for k in idx if k < grid.n_nodes - 1]


def _late_member_indices(ensemble: PathEnsemble, n_members: int = 4) -> list[int]:
    grid = ensemble.grid
    first = grid.half_index + 1
    last = grid.n_nodes - 2
    if last < first:
        return []
    step = max(1, (last - first) // max(1, n_members - 1))
    return sorted(set(range(first, last + 1, step)))


def _require_nodes(fn: MprFunctionals) -> None:
    if fn.node_int2 is None:
        raise ValueError("family cells need node tracks; evaluate with need_nodes=True")


def _exposure_cells(
    spec: MprSpec,
    ensemble: PathEnsemble,
    fn: MprFunctionals,
    *,
    min_bin: int,
    max_bins: int,
    stop_family: list[float] | None = None,
    add_edges: bool = False,
) -> list[BinCell]:
    """Remaining-exposure samples ``int_t^T lambda^2 ds`` per family member.

    Grid-resident kinds condition on ``W_t`` at deterministic times; clock
    kinds condition on the construction's midpoint statistic at entry and on
    the clock-line position at later grid times (alive paths only - retired
    paths carry exactly zero remaining exposure).
    """
    cs2 = spec.c_scale * spec.c_scale
    grid = ensemble.grid
    total = cs2 * fn.int_lam2
    cells: list[BinCell] = []

    if spec.kind == "zero":
        return _cells_from_stat("t=0", "none", None, total, 0.0,
                                min_bin=min_bin, max_bins=max_bins)

    if spec.kind in ("constant", "reverting"):
        _require_nodes(fn)
        for k in _grid_member_indices(ensemble, stop_family):
            t = float(grid.nodes[k])
            remaining = total - cs2 * fn.node_int2[:, k]
            stat = None if k == 0 else ensemble.wiener[:, k]
            cells.extend(_cells_from_stat(
                f"t={t:.4g}", "driver-value", stat, remaining, t,
                min_bin=min_bin, max_bins=max_bins, add_edges=add_edges,
            ))
        return cells

    # Clock kinds: exposure lives entirely after T/2.
    cells.extend(_cells_from_stat("t=0", "none", None, total, 0.0,
                                  min_bin=min_bin, max_bins=max_bins))
    half_t = grid.T / 2.0
    if spec.kind in ("alpha_arccos", "tilde", "scaled"):
        entry_stat, entry_name = fn.alpha, "arccos-scale"
    elif spec.kind == "sigma_gamma":
        entry_stat, entry_name = fn.u_sigma, "cut-clock"
    else:
        entry_stat, entry_name = None, "none"
    cells.extend(_cells_from_stat(
        f"t={half_t:.4g} (entry)", entry_name, entry_stat, total, half_t,
        min_bin=min_bin, max_bins=max_bins, add_edges=add_edges,
    ))

    if fn.node_int2 is not None and fn.clock is not None:
        first_late = grid.half_index + 1
        v_nodes = np.log((grid.T / 2.0) / (grid.T - grid.nodes[first_late:]))
        for k in _late_member_indices(ensemble):
            j = k - first_late
            alive = fn.u_kill > v_nodes[j]
            if np.count_nonzero(alive) < min_bin:
                continue
            t = float(grid.nodes[k])
            remaining = (total - cs2 * fn.node_int2[:, k])[alive]
            if entry_stat is not None:
                stat, name = entry_stat[alive], entry_name
            else:
                stat, name = fn.clock.ckpt_pos[j][alive], "clock-position"
            cells.extend(_cells_from_stat(
                f"t={t:.4g}", name, stat, remaining, t,
                min_bin=min_bin, max_bins=max_bins, add_edges=add_edges,
            ))
    return cells


def _bootstrap_upper(samples: np.ndarray, rng: np.random.Generator,
                     *, level: float = 0.999, n_boot: int = 4000) -> float:
    """Upper confidence value for a cell mean.

    Full bootstrap on small cells; the normal approximation (entirely
    adequate at that size) beyond 20000 samples.
    """
    n = samples.size
    mean = float(np.mean(samples))
    if n > 20000:
        se = float(np.std(samples, ddof=1) / math.sqrt(n))
        from scipy.special import ndtri

        return mean + float(ndtri(level)) * se
    idx = rng.integers(0, n, size=(n_boot, n))
    means = samples[idx].mean(axis=1)
    return float(np.quantile(means, level))


def _abs_state_slope(cells: list[BinCell], transform=None) -> dict[str, float]:
    """Least-squares slope of (transformed) bin means against ``|center|``.

    Fitted on the outer half of the bins (by ``|center|``), where the
    asymptotic linear growth dominates the conditional mean.
    """
    pts = [(abs(c.center), c.mean) for c in cells if not math.isnan(c.center)]
    if len(pts) < 4:
        return {"slope": 0.0, "n_bins": len(pts)}
    pts.sort()
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if transform is not None:
        ys = transform(ys)
    cut = np.median(xs)
    sel = xs >= cut
    if np.count_nonzero(sel) < 3:
        sel = np.ones_like(xs, dtype=bool)
    slope = float(np.polyfit(xs[sel], ys[sel], 1)[0])
    return {"slope": slope, "n_bins": int(np.count_nonzero(sel))}


# ---------------------------------------------------------------------------
# BMO2 norm over the restricted family
# ---------------------------------------------------------------------------


@dataclass
class NormEstimate:
    """Family-restricted estimate of ``sup_tau E[int_tau^T lambda^2 dt|F_tau]``.

    ``estimate`` is in squared-norm units (the BMO2 norm is its square
    root) and is a *lower bound*: the stopping family is restricted and the
    conditioning is binned.  ``unbounded`` flags conditional means that grow
    along an unbounded state grid (not BMO); the estimate is then ``inf``.
    """

    estimate: float
    upper_confidence: float
    unbounded: bool
    cells: list[BinCell]
    family: list[str]
    growth_note: str | None = None
    family_restricted: bool = True
    exact: bool = False

    def to_json_record(self) -> dict:
        return {
            "estimate": "inf" if math.isinf(self.estimate) else self.estimate,
            "upper_confidence": (
                "inf" if math.isinf(self.upper_confidence) else self.upper_confidence
            ),
            "unbounded": self.unbounded,
            "family": self.family,
            "family_restricted": self.family_restricted,
            "exact": self.exact,
            "growth_note": self.growth_note,
            "cells": [c.to_json_record() for c in self.cells],
        }


def bmo_norm(
    spec: MprSpec,
    ensemble: PathEnsemble,
    stop_family: list[float] | None = None,
    *,
    functionals: MprFunctionals | None = None,
    dv: float = DEFAULT_DV,
    min_bin: int = MIN_BIN,
    max_bins: int = 50,
) -> NormEstimate:
    """Binned-conditional estimate of the squared BMO2 norm.

    ``stop_family`` optionally lists deterministic times to condition at
    (snapped to grid nodes); clock constructions always add their entry time
    and later clock-line times.  The max bin plus a 99.9% bootstrap upper
    confidence value estimate the family sup; for the mean-reverting premium
    a linear-growth check against the analytic slope flags "not BMO".
    """
    if spec.kind == "zero":
        return NormEstimate(
            estimate=0.0, upper_confidence=0.0, unbounded=False, cells=[],
            family=["t=0"], exact=True,
        )
    fn = functionals if functionals is not None else evaluate_mpr(
        spec, ensemble, dv=dv, need_nodes=True
    )
    cells = _exposure_cells(spec, ensemble, fn, min_bin=min_bin,
                            max_bins=max_bins, stop_family=stop_family)
    family = sorted({c.member for c in cells})

    if spec.kind == "constant":
        exact_value = (spec.c_scale * spec.level) ** 2 * ensemble.grid.T
        return NormEstimate(
            estimate=exact_value, upper_confidence=exact_value,
            unbounded=False, cells=cells, family=family, exact=True,
        )

    if spec.kind == "reverting":
        # Conditional remaining exposure grows like (T-t)|W_t|; a slope at
        # that rate on an unbounded state certifies an infinite norm.
        for member in family:
            mc = [c for c in cells if c.member == member]
            if not mc or math.isnan(mc[0].center):
                continue
            t = mc[0].time
            fit = _abs_state_slope(mc)
            rate = (ensemble.grid.T - t) * (1.0 - SLOPE_TOL)
            if fit["slope"] >= rate and rate > 0.0:
                note = (
                    f"conditional exposure at t={t:.4g} grows with slope "
                    f"{fit['slope']:.3f} >= (T-t)(1-tol)={rate:.3f} in |W_t|: not BMO"
                )
                return NormEstimate(
                    estimate=math.inf, upper_confidence=math.inf, unbounded=True,
                    cells=cells, family=family, growth_note=note,
                )

    best = max(cells, key=lambda c: c.mean)
    rng = philox_stream(ensemble.seed, "bmo-bootstrap")
    upper = _bootstrap_upper(best.samples, rng)
    return NormEstimate(
        estimate=best.mean, upper_confidence=upper, unbounded=False,
        cells=cells, family=family,
    )


# ---------------------------------------------------------------------------
# Dynamic exponential moments and the critical order
# ---------------------------------------------------------------------------


def _bin_divergence(samples: np.ndarray, *, edge: bool = False) -> DivergenceEvidence:
    """Paired tail heuristic at bin scale.

    Same estimator pair and thresholds as the solver-side verdict, with two
    bin-size adaptations: the Hill tail fraction widens on small bins so the
    index keeps at least ~250 tail points when available, and the ceiling
    branch requires the index to sit below the ceiling by two standard
    errors.  Near-threshold moment orders sit within one Hill standard error
    of the ceiling, where the raw rule would flip on noise; requiring a
    decisive index keeps bisection brackets honest.  Growth corroboration is
    demanded on the fast path too - a power-looking tail alone is also what
    a stretched-tail finite sample produces at large orders.

    ``edge`` cells (narrow value-bins at the boundary of the conditioning
    state) get a different trade-off.  Inside such a bin the conditional
    tail is close to a single rate, so the Hill window widens to half the
    bin - the efficient estimator for a near-pure exponential rate - and
    the plain ceiling applies without the two-standard-error strictness.
    The growth floor drops to a sanity level: the divergent sub-population
    is thin by construction, so a modest realized growth is expected even
    when the conditional moment genuinely diverges, while exactly-flat cells
    (deterministic exposure) still sit at growth 1 and never fire.
    """
    x = np.asarray(samples, dtype=np.float64)
    if edge:
        hill, hill_se, k = hill_estimator(x, tail_frac=0.5)
        growth = growth_ratio(x)
        if hill <= HILL_CEILING and growth >= EDGE_GROWTH_FLOOR:
            diverged, reason = True, (
                f"edge cell: hill={hill:.3f} <= {HILL_CEILING} with "
                f"growth={growth:.3f} >= {EDGE_GROWTH_FLOOR}"
            )
        else:
            diverged, reason = False, (
                f"edge cell: hill={hill:.3f} (se {hill_se:.3f}), "
                f"growth={growth:.3f}: no decisive divergence evidence"
            )
        return DivergenceEvidence(
            diverged=diverged, hill=hill, hill_se=hill_se, growth=growth,
            n=int(x.size), tail_k=k, reason=reason,
        )
    tail_frac = min(0.05, max(0.01, 250.0 / max(x.size, 1)))
    hill, hill_se, k = hill_estimator(x, tail_frac=tail_frac)
    growth = growth_ratio(x)
    if hill <= HILL_FAST_PATH and growth >= GROWTH_FLOOR:
        diverged, reason = True, (
            f"hill={hill:.3f} <= {HILL_FAST_PATH} with growth={growth:.3f} "
            f">= {GROWTH_FLOOR}"
        )
    elif hill + 2.0 * hill_se <= HILL_CEILING and growth >= GROWTH_FLOOR:
        diverged, reason = True, (
            f"hill={hill:.3f}+2se decisively <= {HILL_CEILING} and "
            f"growth={growth:.3f} >= {GROWTH_FLOOR}"
        )
    else:
        diverged, reason = False, (
            f"hill={hill:.3f} (se {hill_se:.3f}), growth={growth:.3f}: "
            "no decisive divergence evidence"
        )
    return DivergenceEvidence(
        diverged=diverged, hill=hill, hill_se=hill_se, growth=growth,
        n=int(x.size), tail_k=k, reason=reason,
    )


@dataclass
class DynMoment:
    """One dynamic exponential moment ``sup_tau E[exp(k * remaining)|F_tau]``."""

    k: float
    estimate: float
    diverged: bool
    worst_cell: str | None
    evidence: DivergenceEvidence | None
    cells: list[BinCell]

    def as_row(self) -> tuple[float, float, bool]:
        return (self.k, self.estimate, self.diverged)


def _dyn_cells(
    spec: MprSpec,
    ensemble: PathEnsemble,
    fn: MprFunctionals,
    *,
    n_bins: int,
    min_bin: int,
) -> list[BinCell]:
    """Exposure cells sized for tail decisions (few large bins)."""
    big_bin = max(min_bin, ensemble.n_paths // (2 * n_bins))
    return _exposure_cells(spec, ensemble, fn, min_bin=big_bin, max_bins=n_bins,
                           add_edges=True)


def dyn_exp_moment(
    spec: MprSpec,
    ensemble: PathEnsemble,
    k: float,
    *,
    measure: str = "physical",
    functionals: MprFunctionals | None = None,
    dv: float = DEFAULT_DV,
    n_bins: int = 8,
    min_bin: int = MIN_BIN,
    _cells: list[BinCell] | None = None,
) -> DynMoment:
    """Family-restricted dynamic exponential moment of order ``k``.

    Each family/bin cell averages ``exp(k * remaining exposure)``; the cell
    samples are screened by the paired tail heuristic, and any diverging
    cell makes the whole moment diverged (+inf estimate).  ``measure`` may
    be ``"tilted"`` for the drifted-clock kinds, evaluating under their own
    tilt where the clock line is driftless.
    """
    if not k > 0.0:
        raise ValueError(f"moment order must be positive, got {k!r}")
    if _cells is None:
        if measure == "tilted":
            fn = functionals if functionals is not None else evaluate_tilde_under_tilted(
                spec, ensemble, dv=dv
            )
            if fn.measure != "tilted":
                raise ValueError("tilted evaluation requires tilted functionals")
        elif measure == "physical":
            fn = functionals if functionals is not None else evaluate_mpr(
                spec, ensemble, dv=dv, need_nodes=True
            )
        else:
            raise ValueError(f"unknown measure {measure!r}")
        if fn.node_int2 is None:
            # Entry-time and t=0 members only (tilted functionals carry no
            # node tracks; the full exposure dominates the tail decision).
            cs2 = spec.c_scale * spec.c_scale
            total = cs2 * fn.int_lam2
            if spec.kind in ("alpha_arccos", "tilde", "scaled"):
                stat, name = fn.alpha, "arccos-scale"
            elif spec.kind == "sigma_gamma":
                stat, name = fn.u_sigma, "cut-clock"
            else:
                stat, name = None, "none"
            big_bin = max(min_bin, ensemble.n_paths // (2 * n_bins))
            exp_cells = _cells_from_stat("t=0", "none", None, total, 0.0,
                                         min_bin=big_bin, max_bins=n_bins)
            exp_cells += _cells_from_stat(
                f"t={ensemble.grid.T / 2:.4g} (entry)", name, stat, total,
                ensemble.grid.T / 2.0, min_bin=big_bin, max_bins=n_bins,
                add_edges=True,
            )
        else:
            exp_cells = _dyn_cells(spec, ensemble, fn, n_bins=n_bins, min_bin=min_bin)
    else:
        exp_cells = _cells

    out_cells: list[BinCell] = []
    diverged = False
    worst = None
    worst_ev: DivergenceEvidence | None = None
    sup = 0.0
    for c in exp_cells:
        expo = k * c.samples
        clipped = bool(np.any(expo > 700.0))
        vals = np.exp(np.minimum(expo, 700.0))
        m = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        cell = BinCell(member=c.member, statistic=c.statistic, center=c.center,
                       count=c.count, mean=m, se=se, time=c.time, samples=vals)
        out_cells.append(cell)
        sup = max(sup, m)
        if c.count >= 120:
            ev = _bin_divergence(vals, edge=c.statistic.endswith("-edge"))
            if clipped:
                ev = DivergenceEvidence(
                    diverged=True, hill=ev.hill, hill_se=ev.hill_se,
                    growth=ev.growth, n=ev.n, tail_k=ev.tail_k,
                    reason="exponent overflow: moment beyond double range",
                )
            if ev.diverged and (worst_ev is None or not worst_ev.diverged
                                or m > (worst.mean if worst else -math.inf)):
                diverged, worst, worst_ev = True, cell, ev
            elif worst_ev is None or (not diverged and m > (worst.mean if worst else -math.inf)):
                worst, worst_ev = cell, ev
    if worst is None:
        label = None
    elif math.isnan(worst.center):
        label = worst.member
    else:
        label = f"{worst.member} @ {worst.center:.4g}"
    if spec.kind == "constant" and not diverged:
        # Deterministic premium: the moment is an analytic value; the grid
        # quadrature only misses the truncation gap next to T.
        sup = math.exp(k * (spec.c_scale * spec.level) ** 2 * ensemble.grid.T)
    return DynMoment(
        k=float(k),
        estimate=math.inf if diverged else sup,
        diverged=diverged,
        worst_cell=label,
        evidence=worst_ev,
        cells=out_cells,
    )


@dataclass
class CriticalExponent:
    """Bisection bracket ``[lo, hi]`` for the critical moment order.

    ``infinite`` is set when no probed order up to ``k_max`` diverges; the
    probes (order, sup-estimate, diverged) are kept as the moment table.
    """

    lo: float
    hi: float
    infinite: bool
    probes: list[tuple[float, float, bool]]

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def to_json_record(self) -> dict:
        return {
            "lo": self.lo,
            "hi": "inf" if math.isinf(self.hi) else self.hi,
            "infinite": self.infinite,
            "probes": [
                {"k": k, "estimate": "inf" if math.isinf(e) else e, "diverged": d}
                for (k, e, d) in self.probes
            ],
        }


def critical_exponent(
    spec: MprSpec,
    ensemble: PathEnsemble,
    *,
    measure: str = "physical",
    functionals: MprFunctionals | None = None,
    dv: float = DEFAULT_DV,
    k_min: float = 1.0 / 16.0,
    k_max: float = 64.0,
    stop_ratio: float = 1.25,
    max_iter: int = 12,
    n_bins: int = 8,
) -> CriticalExponent:
    """Bracket the critical exponential-moment order by bisection.

    Geometric probe ladder from ``k_min`` up to ``k_max``; on the first
    diverged order, geometric bisection between the last finite and first
    diverged order until the bracket ratio reaches ``stop_ratio`` (or the
    iteration cap - heavy-tail Monte Carlo cannot resolve the threshold
    finer at this scale).  All probes reuse one set of exposure cells, so
    the recorded moment table is exactly monotone in the order.
    """
    if measure == "tilted":
        fn = functionals if functionals is not None else evaluate_tilde_under_tilted(
            spec, ensemble, dv=dv
        )
    else:
        fn = functionals if functionals is not None else evaluate_mpr(
            spec, ensemble, dv=dv, need_nodes=True
        )
    if fn.node_int2 is not None:
        # The critical order is set by the full remaining exposure; later
        # members condition on survival and can only be lighter.  Keeping
        # the t <= T/2 members concentrates the samples where the decision
        # lives and avoids noise-driven flips in near-threshold cells.
        cells = [c for c in _dyn_cells(spec, ensemble, fn, n_bins=n_bins,
                                       min_bin=MIN_BIN)
                 if c.time <= ensemble.grid.T / 2.0 + 1e-12]
    else:
        cells = None  # assembled per-call by dyn_exp_moment

    probes: dict[float, DynMoment] = {}

    def probe(k: float) -> DynMoment:
        if k not in probes:
            probes[k] = dyn_exp_moment(
                spec, ensemble, k, measure=measure, functionals=fn, dv=dv,
                n_bins=n_bins, _cells=cells,
            )
        return probes[k]

    # Geometric ladder up.
    lo = None
    hi = None
    k = k_min
    while k <= k_max * (1.0 + 1e-12):
        dm = probe(k)
        if dm.diverged:
            hi = k
            break
        lo = k
        k *= 2.0
    if hi is None:
        rows = sorted((p.as_row() for p in probes.values()), key=lambda r: r[0])
        return CriticalExponent(lo=lo if lo is not None else k_max, hi=math.inf,
                                infinite=True, probes=rows)
    if lo is None:
        # Even the smallest ladder order diverged; walk down for a floor.
        k = k_min / 2.0
        for _ in range(6):
            dm = probe(k)
            if not dm.diverged:
                lo = k
                break
            hi = k
            k /= 2.0
        if lo is None:
            rows = sorted((p.as_row() for p in probes.values()), key=lambda r: r[0])
            return CriticalExponent(lo=0.0, hi=hi, infinite=False, probes=rows)

    # Geometric bisection.
    for _ in range(max_iter):
        if hi / lo <= stop_ratio:
            break
        mid = math.sqrt(lo * hi)
        if probe(mid).diverged:
            hi = mid
        else:
            lo = mid
    rows = sorted((p.as_row() for p in probes.values()), key=lambda r: r[0])
    # Report flags cumulatively (once diverged, stays diverged): the shared
    # cells make means exactly monotone; the flag inherits that order.
    cum = []
    seen = False
    for (kk, ee, dd) in rows:
        seen = seen or dd
        cum.append((kk, math.inf if seen else ee, seen))
    return CriticalExponent(lo=lo, hi=hi, infinite=False, probes=cum)


# ---------------------------------------------------------------------------
# John-Nirenberg check
# ---------------------------------------------------------------------------


@dataclass
class JnCheck:
    """Binned conditional exponential moments against ``1/(1 - norm^2)``."""

    status: str  # "pass" | "fail" | "skipped"
    norm_sq: float
    bound: float
    max_violation: float
    cells: list[BinCell]
    note: str | None = None

    def to_json_record(self) -> dict:
        return {
            "status": self.status,
            "norm_sq": "inf" if math.isinf(self.norm_sq) else self.norm_sq,
            "bound": "inf" if math.isinf(self.bound) else self.bound,
            "max_violation": self.max_violation,
            "cells": [c.to_json_record() for c in self.cells],
            "note": self.note,
        }


def john_nirenberg_check(
    spec: MprSpec,
    ensemble: PathEnsemble,
    *,
    functionals: MprFunctionals | None = None,
    norm: NormEstimate | None = None,
    dv: float = DEFAULT_DV,
    min_bin: int = MIN_BIN,
    max_bins: int = 50,
) -> JnCheck:
    """Check ``E[exp(remaining)|bin] <= 1/(1 - norm^2) + 3 SE`` per cell.

    Skipped (not failed) when the estimated squared norm reaches 1, where
    the inequality carries no information.
    """
    if spec.kind == "zero":
        return JnCheck(status="pass", norm_sq=0.0, bound=1.0, max_violation=0.0,
                       cells=[], note="zero premium: both sides are exactly 1")
    fn = functionals if functionals is not None else evaluate_mpr(
        spec, ensemble, dv=dv, need_nodes=True
    )
    nrm = norm if norm is not None else bmo_norm(spec, ensemble, functionals=fn,
                                                 min_bin=min_bin, max_bins=max_bins)
    if not nrm.estimate < 1.0:
        return JnCheck(
            status="skipped", norm_sq=nrm.estimate, bound=math.inf,
            max_violation=math.nan, cells=[],
            note="squared-norm estimate >= 1: smallness precondition fails",
        )
    bound = 1.0 / (1.0 - nrm.estimate)
    exp_cells = _exposure_cells(spec, ensemble, fn, min_bin=min_bin, max_bins=max_bins)
    cells = []
    worst = -math.inf
    for c in exp_cells:
        vals = np.exp(np.minimum(c.samples, 700.0))
        m = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        cells.append(BinCell(member=c.member, statistic=c.statistic, center=c.center,
                             count=c.count, mean=m, se=se, time=c.time, samples=vals))
        worst = max(worst, m - (bound + 3.0 * se))
    status = "pass" if worst <= 1e-12 else "fail"
    return JnCheck(status=status, norm_sq=nrm.estimate, bound=bound,
                   max_violation=worst, cells=cells)


# ---------------------------------------------------------------------------
# Reverse-Holder check
# ---------------------------------------------------------------------------


@dataclass
class RhCheck:
    """Verdict on the uniform conditional bound of tail density powers.

    ``Bounded`` when the max bin is stable across sample sizes with no
    divergent or growing cells; ``Unbounded`` when the extreme bins grow
    along the conditioning grid, their tails carry divergence evidence, or
    the max bin jumps with the sample size.
    """

    verdict: str
    max_cell: float
    cells: list[BinCell]
    top_evidence: DivergenceEvidence | None
    state_ratio: float
    instability: float
    slope: float | None = None
    slope_rate: float | None = None
    note: str | None = None

    def to_json_record(self) -> dict:
        return {
            "verdict": self.verdict,
            "max_cell": "inf" if math.isinf(self.max_cell) else self.max_cell,
            "state_ratio": self.state_ratio,
            "instability": self.instability,
            "slope": self.slope,
            "slope_rate": self.slope_rate,
            "note": self.note,
            "cells": [c.to_json_record() for c in self.cells],
        }


def _rh_cells(
    spec: MprSpec,
    ensemble: PathEnsemble,
    fn: MprFunctionals,
    q: float,
    *,
    min_bin: int,
    max_bins: int,
) -> list[BinCell]:
    """Conditional tail-power samples over the family.

    The sample at time ``t`` is ``exp(-q (I1_T - I1_t) - q/2 (I2_T - I2_t))``
    with the scaled integrals - the density ratio power whose conditional
    mean the reverse-Holder inequality bounds.
    """
    cs = spec.c_scale
    grid = ensemble.grid
    _require_nodes(fn)
    i1_T = cs * fn.int_lam_dw
    i2_T = cs * cs * fn.int_lam2
    cells: list[BinCell] = []

    def tail_power(k: int) -> np.ndarray:
        r1 = i1_T - cs * fn.node_int_dw[:, k]
        r2 = i2_T - cs * cs * fn.node_int2[:, k]
        return np.exp(np.minimum(-q * r1 - 0.5 * q * r2, 700.0))

    if spec.kind in ("zero", "constant", "reverting"):
        for k in _grid_member_indices(ensemble, None):
            t = float(grid.nodes[k])
            stat = None if k == 0 else ensemble.wiener[:, k]
            cells.extend(_cells_from_stat(
                f"t={t:.4g}", "driver-value", stat, tail_power(k), t,
                min_bin=min_bin, max_bins=max_bins,
            ))
        return cells

    # Clock kinds: the midpoint entry carries the whole exposure.
    half_t = grid.T / 2.0
    if spec.kind in ("alpha_arccos", "tilde", "scaled"):
        entry_stat, entry_name = fn.alpha, "arccos-scale"
    elif spec.kind == "sigma_gamma":
        entry_stat, entry_name = fn.u_sigma, "cut-clock"
    else:
        entry_stat, entry_name = None, "none"
    cells.extend(_cells_from_stat(
        f"t={half_t:.4g} (entry)", entry_name, entry_stat,
        fn.summand_power(q), half_t, min_bin=min_bin, max_bins=max_bins,
    ))
    first_late = grid.half_index + 1
    v_nodes = np.log((grid.T / 2.0) / (grid.T - grid.nodes[first_late:]))
    for k in _late_member_indices(ensemble, n_members=2):
        j = k - first_late
        alive = fn.u_kill > v_nodes[j]
        if np.count_nonzero(alive) < min_bin:
            continue
        t = float(grid.nodes[k])
        vals = tail_power(k)[alive]
        if entry_stat is not None:
            stat, name = entry_stat[alive], entry_name
        else:
            stat, name = fn.clock.ckpt_pos[j][alive], "clock-position"
        cells.extend(_cells_from_stat(
            f"t={t:.4g}", name, stat, vals, t, min_bin=min_bin, max_bins=max_bins,
        ))
    return cells


def reverse_holder(
    spec: MprSpec,
    q: float,
    ensemble: PathEnsemble,
    *,
    functionals: MprFunctionals | None = None,
    dv: float = DEFAULT_DV,
    min_bin: int | None = None,
    max_bins: int = 50,
) -> RhCheck:
    """Binned conditional reverse-Holder estimates over the stopping family.

    Defined for ``q < 1`` (the classical statement has ``q < 0``; for
    ``q`` in ``(0, 1)`` the same conditional means are bounded by 1 via
    Jensen and the check extends verbatim).  Three evidence channels feed
    the verdict: growth of extreme bins along the conditioning grid, tail
    divergence of the strongest cell, and stability of the max bin between
    the half and full sample.
    """
    if q >= 1.0:
        raise ValueError(f"tail power must satisfy q < 1, got {q!r}")
    if spec.kind == "zero":
        return RhCheck(verdict="Bounded", max_cell=1.0, cells=[], top_evidence=None,
                       state_ratio=1.0, instability=0.0,
                       note="zero premium: conditional means are exactly 1")
    fn = functionals if functionals is not None else evaluate_mpr(
        spec, ensemble, dv=dv, need_nodes=True
    )
    if min_bin is None:
        min_bin = max(MIN_BIN, ensemble.n_paths // 50)
    cells = _rh_cells(spec, ensemble, fn, q, min_bin=min_bin, max_bins=max_bins)
    best = max(cells, key=lambda c: c.mean)

    # (i) tail divergence of the strongest cell.
    top_ev = divergence_verdict(best.samples) if best.count >= 120 else None
    top_fires = bool(top_ev is not None and top_ev.diverged)

    # (ii) growth along the conditioning-state grid (extreme over median bin,
    # per family member; and the analytic slope test for the mean-reverting
    # premium, whose state is unbounded).
    state_ratio = 1.0
    slope = slope_rate = None
    members = sorted({c.member for c in cells})
    for member in members:
        mc = sorted((c for c in cells if c.member == member
                     and not math.isnan(c.center)), key=lambda c: c.center)
        if len(mc) < 4:
            continue
        means = np.array([c.mean for c in mc])
        med = float(np.median(means))
        if med > 0.0:
            edge = max(means[0], means[-1])
            state_ratio = max(state_ratio, edge / med)
        if spec.kind == "reverting":
            t = mc[0].time
            fit = _abs_state_slope(mc, transform=np.log)
            rate = -q * (ensemble.grid.T - t) / 2.0 * (1.0 - SLOPE_TOL)
            if slope is None or fit["slope"] > slope:
                slope, slope_rate = fit["slope"], rate
    slope_fires = bool(
        spec.kind == "reverting" and slope is not None and slope_rate is not None
        and slope >= slope_rate > 0.0
    )

    # (iii) stability of the max bin across sample sizes.
    half = best.samples[: best.count // 2]
    half_mean = float(np.mean(half)) if half.size else best.mean
    instability = abs(best.mean / half_mean - 1.0) if half_mean > 0.0 else math.inf
    unstable = instability > STABILITY_TOL

    fires = top_fires or slope_fires or state_ratio >= STATE_GROWTH_RATIO or unstable
    notes = []
    if top_fires:
        notes.append("strongest cell carries tail divergence evidence")
    if slope_fires:
        notes.append(
            f"log bin means grow with slope {slope:.3f} >= {slope_rate:.3f} "
            "along an unbounded state"
        )
    if state_ratio >= STATE_GROWTH_RATIO:
        notes.append(f"extreme/median bin ratio {state_ratio:.2f}")
    if unstable:
        notes.append(f"max bin moved {instability:.0%} between half and full sample")
    return RhCheck(
        verdict="Unbounded" if fires else "Bounded",
        max_cell=best.mean,
        cells=cells,
        top_evidence=top_ev,
        state_ratio=state_ratio,
        instability=instability,
        slope=slope,
        slope_rate=slope_rate,
        note="; ".join(notes) if notes else None,
    )


# ---------------------------------------------------------------------------
# A priori bounds for q in [0, 1)
# ---------------------------------------------------------------------------


@dataclass
class AprioriCheck:
    """Whole-path bound check ``lower_k <= mean Psi_k <= upper``.

    Upper: ``-(1/g) log(1 - g ||eta||^2)`` with ``g = max(1, gamma)`` and
    ``||eta||^2`` the driver's quadratic-growth share of the (family-
    restricted) squared BMO norm.  Lower: ``-q/(2(1-q))`` times the mean
    remaining exposure (conditional Jensen, averaged).  Skipped when the
    smallness condition ``g ||eta||^2 < 1`` fails.
    """

    status: str  # "pass" | "fail" | "skipped"
    gamma_tilde: float
    eta_sq: float
    upper: float
    nodes: np.ndarray | None
    psi_curve: np.ndarray | None
    lower_curve: np.ndarray | None
    max_upper_violation: float
    max_lower_violation: float
    note: str | None = None

    def to_json_record(self) -> dict:
        return {
            "status": self.status,
            "gamma_tilde": self.gamma_tilde,
            "eta_sq": "inf" if math.isinf(self.eta_sq) else self.eta_sq,
            "upper": "inf" if math.isinf(self.upper) else self.upper,
            "max_upper_violation": self.max_upper_violation,
            "max_lower_violation": self.max_lower_violation,
            "note": self.note,
        }


def apriori_bound(
    spec: MprSpec,
    q: float,
    ensemble: PathEnsemble,
    *,
    functionals: MprFunctionals | None = None,
    dv: float = DEFAULT_DV,
    degree: int = 3,
) -> AprioriCheck:
    """A priori solution bounds for exposure powers ``q`` in ``[0, 1)``.

    The driver's growth bound splits as ``|F| <= eta_t^2 + (gamma/2) z^2``
    with ``eta_t^2 = C_q lambda_t^2``; John-Nirenberg then caps the solution
    whenever ``gamma~ ||eta||^2 < 1``.  The whole-path regression curve must
    sit below that cap and above the conditional-Jensen floor.
    """
    if not 0.0 <= q < 1.0:
        raise ValueError(f"a priori bounds cover q in [0, 1), got {q!r}")
    if q == 0.0:
        return AprioriCheck(
            status="pass", gamma_tilde=1.0, eta_sq=0.0, upper=0.0,
            nodes=None, psi_curve=None, lower_curve=None,
            max_upper_violation=0.0, max_lower_violation=0.0,
            note="q=0: the solution is exactly zero and both bounds are 0",
        )
    fn = functionals if functionals is not None else evaluate_mpr(
        spec, ensemble, dv=dv, need_nodes=True
    )
    eps0 = default_eps0(q)
    c_q = 0.5 * max(q * (q - eps0) / eps0, q / (1.0 - q))
    gamma = 1.0 - q + eps0
    gamma_tilde = max(1.0, gamma)
    nrm = bmo_norm(spec, ensemble, functionals=fn)
    eta_sq = c_q * nrm.estimate
    if not gamma_tilde * eta_sq < 1.0:
        return AprioriCheck(
            status="skipped", gamma_tilde=gamma_tilde, eta_sq=eta_sq,
            upper=math.inf, nodes=None, psi_curve=None, lower_curve=None,
            max_upper_violation=math.nan, max_lower_violation=math.nan,
            note="smallness condition fails: gamma~ * ||eta||^2 >= 1",
        )
    upper = -math.log(1.0 - gamma_tilde * eta_sq) / gamma_tilde

    triple = psi_path(spec, q, ensemble, dv=dv, degree=degree)
    psi_curve = triple.psi.mean(axis=0)
    se_curve = triple.psi.std(axis=0, ddof=1) / math.sqrt(ensemble.n_paths)
    cs2 = spec.c_scale * spec.c_scale
    remaining = cs2 * (np.mean(fn.int_lam2) - fn.node_int2.mean(axis=0))
    lower_curve = -q / (2.0 * (1.0 - q)) * remaining

    span = max(float(np.ptp(psi_curve)), float(np.ptp(lower_curve)), 1e-3)
    slack = 0.02 * span + 3.0 * se_curve
    up_viol = float(np.max(psi_curve - (upper + slack)))
    lo_viol = float(np.max((lower_curve - slack) - psi_curve))
    status = "pass" if max(up_viol, lo_viol) <= 0.0 else "fail"
    return AprioriCheck(
        status=status, gamma_tilde=gamma_tilde, eta_sq=eta_sq, upper=upper,
        nodes=ensemble.grid.nodes.copy(), psi_curve=psi_curve,
        lower_curve=lower_curve, max_upper_violation=up_viol,
        max_lower_violation=lo_viol,
    )


# ---------------------------------------------------------------------------
# Reports and classification
# ---------------------------------------------------------------------------


@dataclass
class BmoReport:
    """Norm, moment table, critical-order bracket, and threshold in one view."""

    norm: NormEstimate
    moments: list[tuple[float, float, bool]]
    exponent: CriticalExponent
    k_q: float | None

    def __post_init__(self) -> None:
        ks = [m[0] for m in self.moments]
        if ks != sorted(ks):
            raise ValueError("moment table must be sorted by order")
        finite = [m[1] for m in self.moments if not m[2]]
        if any(b < a - 1e-12 for a, b in zip(finite, finite[1:])):
            raise ValueError("sup-estimates must be nondecreasing in the order")
        flags = [m[2] for m in self.moments]
        if any(a and not b for a, b in zip(flags, flags[1:])):
            raise ValueError("diverged flags must be monotone in the order")
        if not self.exponent.infinite and not self.exponent.lo <= self.exponent.hi:
            raise ValueError("bracket must satisfy lo <= hi")

    def to_json_record(self) -> dict:
        return {
            "norm": self.norm.to_json_record(),
            "moments": [
                {"k": k, "estimate": "inf" if math.isinf(e) else e, "diverged": d}
                for (k, e, d) in self.moments
            ],
            "exponent": self.exponent.to_json_record(),
            "k_q": self.k_q,
        }


def bmo_report(
    spec: MprSpec,
    ensemble: PathEnsemble,
    *,
    q: float | None = None,
    measure: str = "physical",
    functionals: MprFunctionals | None = None,
    stop_family: list[float] | None = None,
    dv: float = DEFAULT_DV,
    k_max: float = 64.0,
) -> BmoReport:
    """Assemble the norm estimate, moment table, and critical bracket."""
    if measure == "physical":
        fn = functionals if functionals is not None else evaluate_mpr(
            spec, ensemble, dv=dv, need_nodes=True
        )
    else:
        fn = functionals if functionals is not None else evaluate_tilde_under_tilted(
            spec, ensemble, dv=dv
        )
    norm = (bmo_norm(spec, ensemble, stop_family, functionals=fn, dv=dv)
            if measure == "physical" else
            bmo_norm(spec, ensemble, stop_family, dv=dv))
    ce = critical_exponent(spec, ensemble, measure=measure, functionals=fn,
                           dv=dv, k_max=k_max)
    return BmoReport(
        norm=norm, moments=ce.probes, exponent=ce,
        k_q=kq_threshold(q) if q is not None and q < 0.0 else None,
    )


@dataclass
class Classification:
    """Solution-regime verdict with its named evidence trail."""

    verdict: str
    evidence: list[dict]
    k_q: float | None
    exponent_interval: tuple[float, float] | None
    threshold_side: str | None
    spec_record: dict
    q: float

    def __post_init__(self) -> None:
        if self.verdict not in (BOUNDED, UNBOUNDED, NO_SOLUTION):
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_json_record(self) -> dict:
        lo_hi = None
        if self.exponent_interval is not None:
            lo, hi = self.exponent_interval
            lo_hi = [lo, "inf" if math.isinf(hi) else hi]
        return {
            "spec": self.spec_record,
            "q": self.q,
            "verdict": self.verdict,
            "evidence": self.evidence,
            "k_q": self.k_q,
            "exponent_interval": lo_hi,
            "threshold_side": self.threshold_side,
        }


def _profile_growth(
    spec: MprSpec,
    q: float,
    *,
    n_inner: int,
    seed: int,
    dv: float,
) -> tuple[bool, dict]:
    """Midpoint conditional-mean growth across a symmetric state grid.

    Compares ``exp((1-q) Psi_{T/2})`` at the grid edges against the median
    state; a diverged edge state or an edge/median ratio past the growth
    threshold is unboundedness evidence.
    """
    grid = np.array([-2.5, -1.25, 0.0, 1.25, 2.5]) * math.sqrt(spec.T / 2.0)
    estimates = psi_conditional_profile(spec, q, grid, n_inner=n_inner,
                                        seed=seed, dv=dv)
    inner = []
    any_diverged = False
    for est in estimates:
        if est.diverged:
            any_diverged = True
            inner.append(math.inf)
        else:
            inner.append(math.exp((1.0 - q) * est.estimate))
    med = float(np.median([v for v in inner if math.isfinite(v)] or [1.0]))
    edge = max(inner[0], inner[-1])
    ratio = math.inf if math.isinf(edge) else (edge / med if med > 0 else math.inf)
    fires = any_diverged or ratio >= STATE_GROWTH_RATIO
    return fires, {
        "states": [float(s) for s in grid],
        "inner_means": ["inf" if math.isinf(v) else v for v in inner],
        "edge_over_median": "inf" if math.isinf(ratio) else ratio,
        "diverged_state": any_diverged,
    }


def classify(
    spec: MprSpec,
    q: float,
    ensemble: PathEnsemble,
    *,
    dv: float = DEFAULT_DV,
    n_inner: int = 4096,
    profile_seed: int = 90210,
    with_exponent: bool = True,
) -> Classification:
    """Classify the (spec, q) pair into the three solution regimes.

    ``NoSolution`` exactly when the unconditional summand mean carries a
    divergence verdict; otherwise ``Bounded``/``Unbounded`` per the
    reverse-Holder check plus midpoint conditional growth, with the scaled
    family decided by its construction certificate when the ambient ``q``
    matches the spec's own (moment estimation cannot separate the critical
    boundary case - the certificate can).
    """
    if q >= 1.0:
        raise ValueError(f"classification covers q < 1, got {q!r}")
    evidence: list[dict] = []
    fn = evaluate_mpr(spec, ensemble, dv=dv, need_nodes=True)

    est = psi_unconditional(spec, q, ensemble, functionals=fn)
    ev = est.evidence
    evidence.append({
        "test": "summand-divergence",
        "outcome": "diverged" if est.diverged else "finite",
        "detail": None if ev is None else
        {"hill": ev.hill if math.isfinite(ev.hill) else "inf",
         "growth": ev.growth if math.isfinite(ev.growth) else "inf"},
    })

    k_q = kq_threshold(q) if q < 0.0 else None
    exponent = None
    side = None
    if with_exponent:
        ce = critical_exponent(spec, ensemble, functionals=fn, dv=dv)
        exponent = (ce.lo, math.inf if ce.infinite else ce.hi)
        if k_q is not None:
            if exponent[1] < k_q:
                side = "below k_q"
            elif exponent[0] > k_q:
                side = "above k_q"
            else:
                side = "straddles k_q"
        evidence.append({
            "test": "critical-exponent",
            "outcome": "infinite" if ce.infinite else f"[{ce.lo:.4g}, {ce.hi:.4g}]",
            "detail": {"side_of_k_q": side},
        })

    if est.diverged:
        return Classification(
            verdict=NO_SOLUTION, evidence=evidence, k_q=k_q,
            exponent_interval=exponent, threshold_side=side,
            spec_record=_spec_record(spec), q=q,
        )

    rh = reverse_holder(spec, q, ensemble, functionals=fn, dv=dv)
    evidence.append({
        "test": "reverse-holder",
        "outcome": rh.verdict,
        "detail": {"max_cell": rh.max_cell, "state_ratio": rh.state_ratio,
                   "instability": rh.instability, "note": rh.note},
    })

    if spec.kind == "scaled" and spec.q is not None and spec.q == q:
        order = scaled_tilted_order(spec)
        certified_bounded = order < 1.0
        evidence.append({
            "test": "construction-certificate",
            "outcome": "bounded" if certified_bounded else "unbounded",
            "detail": {"tilted_order": order},
        })
        verdict = BOUNDED if certified_bounded else UNBOUNDED
        return Classification(
            verdict=verdict, evidence=evidence, k_q=k_q,
            exponent_interval=exponent, threshold_side=side,
            spec_record=_spec_record(spec), q=q,
        )

    grows = False
    if spec.kind in _PROFILE_KINDS:
        grows, detail = _profile_growth(spec, q, n_inner=n_inner,
                                        seed=profile_seed, dv=dv)
        evidence.append({
            "test": "midpoint-conditional-growth",
            "outcome": "growing" if grows else "stable",
            "detail": detail,
        })

    verdict = UNBOUNDED if (rh.verdict == "Unbounded" or grows) else BOUNDED
    return Classification(
        verdict=verdict, evidence=evidence, k_q=k_q,
        exponent_interval=exponent, threshold_side=side,
        spec_record=_spec_record(spec), q=q,
    )
