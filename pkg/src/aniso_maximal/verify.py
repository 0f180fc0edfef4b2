"""Numerical verification experiments over a fixed corpus of test functions.

Every check returns a :class:`VerificationReport`.  A check passes when its
ratios are finite, stay within a declared budget and (when requested) move by
less than a drift tolerance when the grid spacing is halved.  No check claims
a sharp constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .cover import AnisotropicCover, isotropic, validate_cover
from .errors import PreconditionError
from .grid import GridFunction
from .kernels import TestFunction, bump
from .maximal import (
    BASIC_KINDS,
    GAUSSIAN_BEST_SCALE,
    MaximalConfig,
    _normalized_cached,
    _resolve_J,
    aperture_maximal_batch,
    default_dictionary,
    grand_batch,
    hardy_orders,
    hl_maximal_batch,
    maximal_fields_batch,
    oracle_dictionary,
)
from .report import VerificationReport

DRIFT_TOL = 0.10
CHAIN_SLACK = 1e-12

ANCHORS = {
    "pointwise_chain": "radial <= nontangential <= 2^N tangential",
    "weak_1_1": "weak type (1,1) of the Hardy-Littlewood type operator",
    "strong_pp": "strong type (p,p) of the Hardy-Littlewood type operator, p > 1",
    "aperture_growth": "aperture comparison: growth at most 2^((l-l')J)",
    "tangential_vs_nontangential": "truncated tangential controlled by truncated non-tangential",
    "grand_vs_single": "grand radial majorized by a single-kernel maximal function",
    "theorem41": "equivalence of radial, non-tangential, tangential and grand quasi-norms",
    "mtheta_domination": "non-tangential dominated by [M_Theta((radial)^q)]^(1/q)",
}


# ---------------------------------------------------------------------- corpus
Builder = Callable[[Sequence[float], Sequence[float], Sequence[int]], GridFunction]


@dataclass(frozen=True)
class CorpusItem:
    name: str
    description: str
    build: Builder | None = None
    grid: GridFunction | None = None

    def at(self, lo, hi, shape) -> GridFunction:
        if self.build is not None:
            return self.build(lo, hi, shape)
        g = self.grid
        if tuple(shape) == g.shape:
            return g
        factor = shape[0] // g.shape[0]
        v = g.values
        for ax in range(g.ndim):
            v = np.repeat(v, factor, axis=ax)
        return GridFunction(g.lo, g.hi, v)


@dataclass(frozen=True)
class Corpus:
    """Named test functions sampled on one box; :meth:`refined` halves the spacing.

    Items built from formulas are resampled; items given only as grids are
    refined as the same piecewise-constant function.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    shape: tuple[int, ...]
    items: tuple[CorpusItem, ...]

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def names(self) -> list[str]:
        return [it.name for it in self.items]

    def grids(self) -> list[GridFunction]:
        return [it.at(self.lo, self.hi, self.shape) for it in self.items]

    def refined(self, factor: int = 2) -> "Corpus":
        return replace(self, shape=tuple(n * factor for n in self.shape))

    def subset(self, names: Iterable[str]) -> "Corpus":
        keep = set(names)
        return replace(self, items=tuple(it for it in self.items if it.name in keep))

    def scaled(self, c: float) -> "Corpus":
        items = tuple(
            CorpusItem(it.name, it.description, grid=it.at(self.lo, self.hi, self.shape).with_values(c * it.at(self.lo, self.hi, self.shape).values))
            for it in self.items
        )
        return replace(self, items=items)

    def default_ball(self) -> tuple[np.ndarray, float]:
        """Center and radius of the norm region: half the box radius about the box center."""
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return 0.5 * (lo + hi), 0.25 * float(np.min(hi - lo))

    @classmethod
    def from_grids(cls, grids: Sequence[GridFunction], names: Sequence[str] | None = None) -> "Corpus":
        grids = list(grids)
        if not grids:
            raise PreconditionError("empty corpus")
        g0 = grids[0]
        names = list(names) if names is not None else [f"f{i}" for i in range(len(grids))]
        items = tuple(CorpusItem(nm, "user grid", grid=g) for nm, g in zip(names, grids))
        return cls(g0.lo, g0.hi, g0.shape, items)


def _sampler(fn, average: int = 8) -> Builder:
    return lambda lo, hi, shape: GridFunction.sample(fn, lo, hi, shape, average=average)


def _spike(lo, hi, shape) -> GridFunction:
    g = GridFunction.zeros(lo, hi, shape)
    idx = g.index_of(0.5 * (np.asarray(lo) + np.asarray(hi)))
    v = np.zeros(g.shape)
    v[tuple(idx)] = 1.0 / g.cell_volume
    return g.with_values(v)


DEFAULT_BOX = {1: ((-8.0,), (8.0,)), 2: ((-4.0, -4.0), (4.0, 4.0))}
DEFAULT_SHAPE = {1: (1024,), 2: (128, 128)}


def default_corpus(dimension: int = 1, shape: Sequence[int] | None = None, box=None) -> Corpus:
    """Indicator, tent, Gaussian, mean-zero bump difference and a single-cell spike."""
    lo, hi = box if box is not None else DEFAULT_BOX[dimension]
    lo = tuple(float(v) for v in np.atleast_1d(lo))
    hi = tuple(float(v) for v in np.atleast_1d(hi))
    shape = tuple(shape) if shape is not None else DEFAULT_SHAPE[dimension]
    b = bump(dimension)
    e1 = np.zeros(dimension)
    e1[0] = 1.0

    def indicator(p):
        return np.all(np.abs(p) <= 1.0, axis=-1).astype(float)

    def tent(p):
        return np.clip(1.0 - np.linalg.norm(p, axis=-1), 0.0, None)

    def gauss(p):
        return np.exp(-np.sum(p * p, axis=-1))

    def bump_diff(p):
        return b(p + e1) - b(p - e1)

    items = (
        CorpusItem("indicator", "indicator of the unit cube [-1,1]^n", _sampler(indicator)),
        CorpusItem("tent", "radial tent max(0, 1 - |x|)", _sampler(tent)),
        CorpusItem("gaussian", "exp(-|x|^2)", _sampler(gauss)),
        CorpusItem("bump_difference", "bump(x + e1) - bump(x - e1), mean zero", _sampler(bump_diff)),
        CorpusItem("spike", "single cell of mass 1 at the box center", _spike),
    )
    return Corpus(lo, hi, shape, items)


def _as_corpus(f) -> Corpus:
    if isinstance(f, Corpus):
        return f
    if isinstance(f, GridFunction):
        return Corpus.from_grids([f], ["f"])
    return Corpus.from_grids(list(f))


# ---------------------------------------------------------------------- helpers
def _ball(corpus: Corpus, grid: GridFunction, K: float | None) -> np.ndarray:
    center, radius = corpus.default_ball()
    K = radius if K is None else K
    return np.sum((grid.points() - center) ** 2, axis=-1) < K * K


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return 1.0 if num == 0 else math.inf


def _drift(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        return math.inf
    return abs(a - b) / max(abs(b), 1e-300)


def _refinement(coarse: float, fine: float, corpus: Corpus, tol: float) -> dict[str, Any]:
    h = list(GridFunction.zeros(corpus.lo, corpus.hi, corpus.shape).spacing)
    d = _drift(coarse, fine)
    return {"h": h, "h2": [v / 2 for v in h], "value_h": coarse, "value_h2": fine, "drift": d, "tol": tol, "stable": d < tol}


def _finish(check, cases, constant, ok, refine, flags, details, corpus, core, tol):
    """Shared tail: optional refinement pass, resolution flag, report assembly."""
    refinement = None
    if refine:
        fine = core(corpus.refined())
        refinement = _refinement(constant, fine, corpus, tol)
        if not refinement["stable"]:
            flags = sorted(set(flags) | {"resolution"})
            ok = False
    ok = ok and math.isfinite(constant)
    return VerificationReport(
        check=check,
        anchor=ANCHORS[check],
        cases=cases,
        empirical_constant=constant,
        passed=bool(ok),
        refinement=refinement,
        flags=sorted(set(flags)),
        details=details,
    )


def _require_N(cover: AnisotropicCover, config: MaximalConfig, p: float) -> None:
    if cover.constants is None:
        raise PreconditionError("the N > 1/(a6 p) precondition needs declared cover constants")
    bound = 1.0 / (cover.constants.a6 * p)
    if not config.N > bound:
        raise PreconditionError(f"need N > 1/(a6 p) = {bound:g}, got N = {config.N}")


def default_phi(dimension: int, cover: AnisotropicCover | None = None, config: MaximalConfig | None = None) -> TestFunction:
    """The dictionary's Gaussian: unit seminorm under the grand-maximal orders."""
    N, Nt = _orders(dimension, cover, config)
    order = max(12, N)
    raw = TestFunction("gaussian", (1.0,), dimension, scale=GAUSSIAN_BEST_SCALE, max_derivative_order=order, name="gaussian")
    return _normalized_cached(raw, N, Nt)


def _orders(dimension, cover, config) -> tuple[int, int]:
    if config is not None and config.Np is not None and config.Ntilde_p is not None:
        return config.Np, config.Ntilde_p
    cover = cover if cover is not None else isotropic(dimension)
    p = config.p if config is not None else 1.0
    return hardy_orders(cover.constants, dimension, p)


# ---------------------------------------------------------------------- pointwise chain
def chain_violations(rad: np.ndarray, nt: np.ndarray, tg: np.ndarray, N: int, slack: float = CHAIN_SLACK) -> list[tuple[str, int]]:
    """Flat indices where ``rad <= nt`` or ``nt <= 2^N tg`` fails beyond ``slack * max(nt)``."""
    tol = slack * max(float(np.max(nt, initial=0.0)), float(np.max(rad, initial=0.0)))
    out = [("radial>nontangential", int(i)) for i in np.flatnonzero((rad - nt).ravel() > tol)]
    out += [("nontangential>2^N tangential", int(i)) for i in np.flatnonzero((nt - 2.0**N * tg).ravel() > tol)]
    return out


def check_pointwise_chain(
    f, phi: TestFunction, cover: AnisotropicCover, config: MaximalConfig, slack: float = CHAIN_SLACK, include_center: bool = True
) -> VerificationReport:
    """``radial <= nontangential <= 2^N tangential`` at every node.

    ``include_center=False`` runs a deliberately broken engine (``y = x``
    removed from the non-tangential set) as a harness self-test.
    """
    corpus = _as_corpus(f)
    grids = corpus.grids()
    fields = maximal_fields_batch(grids, phi, cover, config, BASIC_KINDS, include_center=include_center)
    cases = []
    worst = 0.0
    flags: set[str] = set()
    ok = True
    for name, g, fl in zip(corpus.names, grids, fields):
        rad, nt, tg = (fl[k].values.values for k in BASIC_KINDS)
        for k in BASIC_KINDS:
            flags |= set(fl[k].flags)
        bad = chain_violations(rad, nt, tg, config.N, slack)
        pos = rad > 0
        r1 = float(np.max(nt[pos] / rad[pos])) if np.any(pos) else 1.0
        pos2 = tg > 0
        r2 = float(np.max(nt[pos2] / (2.0**config.N * tg[pos2]))) if np.any(pos2) else (0.0 if not np.any(nt) else math.inf)
        worst = max(worst, r2)
        case = {"f": name, "max_nontangential_over_radial": r1, "max_nontangential_over_2N_tangential": r2, "violations": len(bad)}
        if bad:
            ok = False
            kind, idx = bad[0]
            case["witness"] = {"relation": kind, "point": g.points().reshape(-1, g.ndim)[idx].tolist()}
        cases.append(case)
    details = {"N": config.N, "slack": slack, "include_center": include_center, "config": config.to_dict()}
    return _finish("pointwise_chain", cases, worst, ok, False, flags, details, corpus, None, DRIFT_TOL)


# ---------------------------------------------------------------------- weak (1,1)
DEFAULT_ALPHAS = tuple(np.round(np.linspace(0.01, 0.45, 45), 10))


def weak_ratios(M: GridFunction, f: GridFunction, alphas: Sequence[float]) -> list[float]:
    """``alpha |{M > alpha}| / ||f||_1`` for each threshold."""
    n1 = f.lp_norm(1.0)
    return [_ratio(a * M.level_set_measure(a), n1) for a in alphas]


def check_weak_1_1(
    f,
    cover: AnisotropicCover,
    config: MaximalConfig | None = None,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    budget: float = 4.0,
    relative: bool = True,
    refine: bool = False,
) -> VerificationReport:
    """Empirical weak-type constant ``max_alpha alpha |{M_Theta f > alpha}| / ||f||_1``.

    With ``relative=True`` the thresholds are fractions of ``max M_Theta f``, so
    the constant does not change when ``f`` is scaled.
    """
    corpus = _as_corpus(f)
    config = config or MaximalConfig.default(corpus.dimension)

    def core(c: Corpus, collect=None):
        grids = c.grids()
        Ms = hl_maximal_batch(grids, cover, config)
        best = 0.0
        for name, g, M in zip(c.names, grids, Ms):
            top = float(np.max(M.values.values))
            a_abs = [a * top for a in alphas] if relative else list(alphas)
            r = weak_ratios(M.values, g, a_abs)
            best = max(best, max(r, default=0.0))
            if collect is not None:
                i = int(np.argmax(r)) if r else 0
                collect.append({"f": name, "max_ratio": max(r, default=0.0), "argmax_alpha": a_abs[i] if r else None, "l1": g.lp_norm(1.0), "sup_M": top})
        return best

    cases: list[dict[str, Any]] = []
    C = core(corpus, cases)
    details = {"budget": budget, "alphas": list(alphas), "relative_thresholds": relative}
    return _finish("weak_1_1", cases, C, C <= budget, refine, [], details, corpus, core, DRIFT_TOL)


# ---------------------------------------------------------------------- strong (p,p)
def check_strong_pp(
    f,
    cover: AnisotropicCover,
    config: MaximalConfig | None = None,
    ps: Sequence[float] = (1.5, 2.0, 4.0),
    drift_tol: float = 0.05,
    budget: float | None = None,
    refine: bool = True,
) -> VerificationReport:
    """Ratios ``||M_Theta f||_p / ||f||_p`` per item and exponent, with per-ratio refinement drift."""
    corpus = _as_corpus(f)
    config = config or MaximalConfig.default(corpus.dimension)
    if any(p <= 1 for p in ps):
        raise PreconditionError("strong type needs p > 1")

    def table(c: Corpus) -> dict[tuple[str, float], float]:
        grids = c.grids()
        Ms = hl_maximal_batch(grids, cover, config)
        return {(nm, p): _ratio(M.values.lp_norm(p), g.lp_norm(p)) for nm, g, M in zip(c.names, grids, Ms) for p in ps}

    coarse = table(corpus)
    fine = table(corpus.refined()) if refine else None
    cases = []
    ok = True
    worst_drift = 0.0
    for (nm, p), r in coarse.items():
        case = {"f": nm, "p": p, "ratio": r}
        ok &= math.isfinite(r)
        if budget is not None:
            ok &= r <= budget
        if fine is not None:
            d = _drift(r, fine[(nm, p)])
            case.update(ratio_h2=fine[(nm, p)], drift=d)
            worst_drift = max(worst_drift, d)
        cases.append(case)
    C = max(coarse.values())
    flags = []
    refinement = None
    if fine is not None:
        h = list(GridFunction.zeros(corpus.lo, corpus.hi, corpus.shape).spacing)
        refinement = {"h": h, "h2": [v / 2 for v in h], "drift": worst_drift, "tol": drift_tol, "stable": worst_drift < drift_tol}
        if worst_drift >= drift_tol:
            ok = False
            flags.append("resolution")
    return VerificationReport(
        check="strong_pp",
        anchor=ANCHORS["strong_pp"],
        cases=cases,
        empirical_constant=C,
        passed=bool(ok and math.isfinite(C)),
        refinement=refinement,
        flags=flags,
        details={"ps": list(ps), "budget": budget},
    )


# ---------------------------------------------------------------------- aperture growth
def aperture_ratios(Fl: GridFunction, Flp: GridFunction, growth: float, lambdas: Sequence[float], mask: np.ndarray) -> tuple[list[float], float, int]:
    """Level-set ratios over ``lambdas`` (skipping empty denominators) and the integrated ratio."""
    level = []
    skipped = 0
    for lam in lambdas:
        den = Flp.level_set_measure(lam)
        if den == 0:
            skipped += 1
            continue
        level.append(Fl.level_set_measure(lam) / (growth * den))
    integ = _ratio(Fl.integral(mask), growth * Flp.integral(mask))
    return level, integ, skipped


def check_aperture_growth(
    f,
    phi: TestFunction,
    cover: AnisotropicCover,
    config: MaximalConfig,
    l_pairs: Sequence[tuple[int, int]] = ((1, 0), (2, 0), (2, 1)),
    budget: float = 8.0,
    n_lambdas: int = 12,
    K: float | None = None,
    refine: bool = True,
) -> VerificationReport:
    """Growth of ``F_l^*`` against ``2^((l-l')J) F_{l'}^*`` in level-set and integrated form."""
    corpus = _as_corpus(f)
    for l, lp in l_pairs:
        if l < lp or lp < 0:
            raise PreconditionError(f"need l >= l' >= 0, got {(l, lp)}")
    ls = sorted({v for pair in l_pairs for v in pair})

    def core(c: Corpus, collect=None):
        grids = c.grids()
        J = _resolve_J(cover, config, grids[0])
        fields = {l: aperture_maximal_batch(grids, phi, cover, config, l) for l in ls}
        best = 0.0
        for i, (nm, g) in enumerate(zip(c.names, grids)):
            mask = _ball(c, g, K)
            for l, lp in l_pairs:
                Fl, Flp = fields[l][i].values, fields[lp][i].values
                top = float(np.max(Flp.values))
                lambdas = [top * v for v in np.geomspace(1e-3, 0.9, n_lambdas)] if top > 0 else []
                growth = 2.0 ** ((l - lp) * J)
                level, integ, skipped = aperture_ratios(Fl, Flp, growth, lambdas, mask)
                c_pair = max(level + [integ])
                best = max(best, c_pair)
                if collect is not None:
                    collect.append(
                        {
                            "f": nm,
                            "l": l,
                            "l_prime": lp,
                            "J": J,
                            "max_level_ratio": max(level, default=0.0),
                            "integrated_ratio": integ,
                            "skipped_lambdas": skipped,
                            "integrated_by_l": None,
                        }
                    )
            if collect is not None:
                ints = [fields[l][i].values.integral(mask) for l in ls]
                for case in collect[-len(l_pairs):]:
                    case["integrated_by_l"] = dict(zip(map(str, ls), ints))
        return best

    cases: list[dict[str, Any]] = []
    C = core(corpus, cases)
    ok = True
    for case in cases:
        if case["l"] == case["l_prime"]:
            ok &= case["max_level_ratio"] <= 1 + 1e-12 and case["integrated_ratio"] <= 1 + 1e-12
        ok &= case["integrated_ratio"] <= budget
        ints = list(case["integrated_by_l"].values())
        ok &= all(b >= a * (1 - 1e-12) for a, b in zip(ints, ints[1:]))
    details = {"l_pairs": [list(p) for p in l_pairs], "budget": budget, "t0": config.t0, "L": config.L}
    return _finish("aperture_growth", cases, C, ok, refine, [], details, corpus, core, DRIFT_TOL)


# ---------------------------------------------------------------------- tangential vs non-tangential
def check_tangential_vs_nontangential(
    f,
    phi: TestFunction,
    cover: AnisotropicCover,
    config: MaximalConfig,
    t0s: Sequence[float] = (-1.0, -2.0, -4.0),
    p: float | None = None,
    K: float | None = None,
    spread_budget: float = 3.0,
    refine: bool = True,
) -> VerificationReport:
    """``||T^{N(t0,L)} f||_{L^p(B_K)} / ||M^{(t0,L)} f||_{L^p(B_K)}`` across a ``t0`` sweep."""
    corpus = _as_corpus(f)
    p = config.p if p is None else p
    _require_N(cover, config, p)

    def core(c: Corpus, collect=None):
        grids = c.grids()
        table = {}
        for t0 in t0s:
            cfg = replace(config, t0=t0, t_min=min(config.t_min, t0))
            fields = maximal_fields_batch(grids, phi, cover, cfg, ("nontangential", "tangential"), truncated=True)
            for nm, g, fl in zip(c.names, grids, fields):
                mask = _ball(c, g, K)
                table[(nm, t0)] = _ratio(fl["truncated_tangential"].lp_norm(p, mask), fl["truncated_nontangential"].lp_norm(p, mask))
        best = max(table.values())
        spread = 1.0
        for nm in c.names:
            rs = [table[(nm, t0)] for t0 in t0s]
            s = max(rs) / min(rs) if min(rs) > 0 else math.inf
            spread = max(spread, s)
            if collect is not None:
                collect.append({"f": nm, "ratios": {str(t0): table[(nm, t0)] for t0 in t0s}, "spread": s})
        return best, spread

    cases: list[dict[str, Any]] = []
    C, spread = core(corpus, cases)
    details = {"t0s": list(t0s), "p": p, "N": config.N, "L": config.L, "spread": spread, "spread_budget": spread_budget}
    return _finish(
        "tangential_vs_nontangential", cases, C, spread < spread_budget, refine, [], details, corpus, lambda c: core(c)[0], DRIFT_TOL
    )


# ---------------------------------------------------------------------- grand vs single
def check_grand_vs_single(
    f,
    cover: AnisotropicCover,
    config: MaximalConfig,
    phi: TestFunction | None = None,
    dictionary: Sequence[TestFunction] | None = None,
    K: float | None = None,
    budget: float = 10.0,
    trend: bool = True,
    refine: bool = True,
) -> VerificationReport:
    """Pointwise ``grand_radial / T^N_phi`` and ``||grand_radial||_p / ||M_phi||_p``.

    The trend table records the grand quasi-norm for dictionaries of 1, 4 and
    16 kernels.
    """
    corpus = _as_corpus(f)
    n = corpus.dimension
    N, Nt = _orders(n, cover, config)
    phi = phi or default_phi(n, cover, config)
    dictionary = list(dictionary) if dictionary is not None else default_dictionary(n, N, Nt)
    p = config.p

    def core(c: Corpus, collect=None):
        grids = c.grids()
        grand = grand_batch(grids, cover, config, dictionary, "radial")
        single = maximal_fields_batch(grids, phi, cover, config, ("nontangential", "tangential"))
        best = 0.0
        for nm, g, G, S in zip(c.names, grids, grand, single):
            mask = _ball(c, g, K)
            gv, tv = G.values.values[mask], S["tangential"].values.values[mask]
            pos = tv > 0
            pw = float(np.max(gv[pos] / tv[pos])) if np.any(pos) else (1.0 if not np.any(gv) else math.inf)
            lp = _ratio(G.lp_norm(p, mask), S["nontangential"].lp_norm(p, mask))
            best = max(best, lp)
            if collect is not None:
                collect.append({"f": nm, "pointwise_grand_over_tangential": pw, "lp_grand_over_nontangential": lp})
        return best

    cases: list[dict[str, Any]] = []
    C = core(corpus, cases)
    details: dict[str, Any] = {"budget": budget, "p": p, "orders": [N, Nt], "dictionary": [k.name for k in dictionary]}
    if trend:
        grids = corpus.grids()
        rows = []
        for label, dic in (("1", [phi]), ("4", default_dictionary(n, N, Nt)), ("16", oracle_dictionary(n, N, Nt))):
            G = grand_batch(grids, cover, config, dic, "radial")
            rows.append({"size": label, "norms": {nm: x.lp_norm(p, _ball(corpus, g, K)) for nm, g, x in zip(corpus.names, grids, G)}})
        details["dictionary_trend"] = rows
    return _finish("grand_vs_single", cases, C, C < budget, refine, ["dictionary_lower_bound"], details, corpus, core, DRIFT_TOL)


# ---------------------------------------------------------------------- quasi-norm ratio matrix
QUASI_NORMS = ("radial", "nontangential", "tangential_2N", "grand")


def quasi_norms(c: Corpus, phi, cover, config, dictionary, K=None) -> dict[str, dict[str, float]]:
    grids = c.grids()
    fields = maximal_fields_batch(grids, phi, cover, config, BASIC_KINDS)
    grand = grand_batch(grids, cover, config, dictionary, "radial")
    p = config.p
    out = {}
    for nm, g, fl, G in zip(c.names, grids, fields, grand):
        mask = _ball(c, g, K)
        out[nm] = {
            "radial": fl["radial"].lp_norm(p, mask),
            "nontangential": fl["nontangential"].lp_norm(p, mask),
            "tangential_2N": 2.0**config.N * fl["tangential"].lp_norm(p, mask),
            "grand": G.lp_norm(p, mask),
        }
    return out


def ratio_matrix(norms: dict[str, float]) -> list[list[float]]:
    return [[_ratio(norms[a], norms[b]) for b in QUASI_NORMS] for a in QUASI_NORMS]


def theorem41_experiment(
    corpus,
    phi: TestFunction | None,
    cover: AnisotropicCover,
    config: MaximalConfig,
    dictionary: Sequence[TestFunction] | None = None,
    budget: float = 50.0,
    drift_tol: float = DRIFT_TOL,
    K: float | None = None,
    refine: bool = True,
) -> VerificationReport:
    """Full 4x4 matrix of quasi-norm ratios per corpus item, with a refinement drift check."""
    corpus = _as_corpus(corpus)
    n = corpus.dimension
    N, Nt = _orders(n, cover, config)
    phi = phi or default_phi(n, cover, config)
    if phi.mass() == 0:
        raise PreconditionError("phi must have nonzero mean")
    _require_N(cover, config, config.p)
    dictionary = list(dictionary) if dictionary is not None else default_dictionary(n, N, Nt)

    coarse = quasi_norms(corpus, phi, cover, config, dictionary, K)
    fine = quasi_norms(corpus.refined(), phi, cover, config, dictionary, K) if refine else None
    cases = []
    ok = True
    C = 1.0
    worst = 0.0
    for nm in corpus.names:
        mat = ratio_matrix(coarse[nm])
        flat = [v for row in mat for v in row]
        C = max(C, max(max(v, 1.0 / v) if v > 0 else math.inf for v in flat))
        ok &= all(1.0 / budget <= v <= budget for v in flat)
        ok &= mat[0][1] <= 1 + 1e-12 and mat[1][2] <= 1 + 1e-12
        case = {"f": nm, "norms": coarse[nm], "ratio_matrix": mat}
        if fine is not None:
            mat2 = ratio_matrix(fine[nm])
            d = max(_drift(a, b) for ra, rb in zip(mat, mat2) for a, b in zip(ra, rb))
            worst = max(worst, d)
            case.update(ratio_matrix_h2=mat2, drift=d)
        cases.append(case)
    flags = ["dictionary_lower_bound"]
    refinement = None
    if fine is not None:
        h = list(GridFunction.zeros(corpus.lo, corpus.hi, corpus.shape).spacing)
        refinement = {"h": h, "h2": [v / 2 for v in h], "drift": worst, "tol": drift_tol, "stable": worst < drift_tol}
        if worst >= drift_tol:
            ok = False
            flags.append("resolution")
    return VerificationReport(
        check="theorem41",
        anchor=ANCHORS["theorem41"],
        cases=cases,
        empirical_constant=C,
        passed=bool(ok and math.isfinite(C)),
        refinement=refinement,
        flags=flags,
        details={"order": list(QUASI_NORMS), "budget": budget, "p": config.p, "N": config.N, "phi": phi.to_dict(), "dictionary": [k.name for k in dictionary]},
    )


# ---------------------------------------------------------------------- M_Theta domination
def domination_ratio(lhs: np.ndarray, rhs: np.ndarray) -> float:
    pos = rhs > 0
    if np.any(lhs[~pos] > 0):
        return math.inf
    return float(np.max(lhs[pos] / rhs[pos])) if np.any(pos) else 0.0


def check_mTheta_domination(
    f,
    phi: TestFunction,
    cover: AnisotropicCover,
    config: MaximalConfig,
    q: float | None = None,
    qs: Sequence[float] = (0.25, 0.5, 0.75),
    K: float | None = None,
    refine: bool = True,
) -> VerificationReport:
    """Pointwise ``M^{(t0,L)} f <= C3 [M_Theta((M^{0(t0,L)} f)^q)]^(1/q)`` on ``B_K``."""
    corpus = _as_corpus(f)
    q = config.q if q is None else q
    if not 0 < q < config.p:
        raise PreconditionError(f"need 0 < q < p, got q={q}, p={config.p}")

    def core(c: Corpus, q_: float, collect=None):
        grids = c.grids()
        fields = maximal_fields_batch(grids, phi, cover, config, ("radial", "nontangential"), truncated=True)
        powered = [fl["truncated_radial"].values.with_values(fl["truncated_radial"].values.values ** q_) for fl in fields]
        hls = hl_maximal_batch(powered, cover, config)
        best = 0.0
        for nm, g, fl, H in zip(c.names, grids, fields, hls):
            mask = _ball(c, g, K)
            lhs = fl["truncated_nontangential"].values.values[mask]
            rhs = H.values.values[mask] ** (1.0 / q_)
            r = domination_ratio(lhs, rhs)
            best = max(best, r)
            if collect is not None:
                collect.append({"f": nm, "q": q_, "ratio": r})
        return best

    cases: list[dict[str, Any]] = []
    C = core(corpus, q, cases)
    trend = {str(v): core(corpus, v) for v in qs if 0 < v < config.p}
    details = {"q": q, "p": config.p, "trend": trend, "t0": config.t0, "L": config.L}
    return _finish("mtheta_domination", cases, C, True, refine, [], details, corpus, lambda c: core(c, q), DRIFT_TOL)


# ---------------------------------------------------------------------- suite
SUITE_CHECKS = (
    "cover_validation",
    "pointwise_chain",
    "weak_1_1",
    "strong_pp",
    "aperture_growth",
    "tangential_vs_nontangential",
    "grand_vs_single",
    "theorem41",
    "mtheta_domination",
)

RESOLUTIONS = {
    "small": dict(shape=(256,), t_step=0.2),
    "default": dict(shape=(1024,), t_step=0.1),
}


def run_suite(
    cover: AnisotropicCover | None = None,
    phi: TestFunction | None = None,
    config: MaximalConfig | None = None,
    corpus: Corpus | None = None,
    checks: Sequence[str] = SUITE_CHECKS,
    resolution: str = "small",
    seed: int = 0,
    workers: int | None = None,
) -> dict[str, Any]:
    """Run the selected checks in declared order; returns ``{"pass", "reports"}`` as plain data."""
    cover = cover or isotropic(1)
    n = cover.dimension
    res = RESOLUTIONS[resolution]
    if config is None:
        config = MaximalConfig.default(n, t_step=res["t_step"])
    config = replace(config, workers=workers)
    if corpus is None:
        corpus = default_corpus(n, res["shape"] if n == 1 else None)
    phi = phi or default_phi(n, cover, config)
    runners: dict[str, Callable[[], VerificationReport]] = {
        "cover_validation": lambda: validate_cover(cover, (corpus.lo, corpus.hi), (config.t_min, config.t_max), samples=200, seed=seed),
        "pointwise_chain": lambda: check_pointwise_chain(corpus, phi, cover, config),
        "weak_1_1": lambda: check_weak_1_1(corpus, cover, config),
        "strong_pp": lambda: check_strong_pp(corpus, cover, config),
        "aperture_growth": lambda: check_aperture_growth(corpus, phi, cover, config),
        "tangential_vs_nontangential": lambda: check_tangential_vs_nontangential(corpus, phi, cover, config),
        "grand_vs_single": lambda: check_grand_vs_single(corpus, cover, config, phi, trend=False),
        "theorem41": lambda: theorem41_experiment(corpus, phi, cover, config),
        "mtheta_domination": lambda: check_mTheta_domination(corpus, phi, cover, config),
    }
    unknown = [c for c in checks if c not in runners]
    if unknown:
        raise PreconditionError(f"unknown checks {unknown}; choose from {list(runners)}")
    reports = [runners[c]().to_dict() for c in checks]
    return {"pass": all(r["pass"] for r in reports), "seed": seed, "resolution": resolution, "reports": reports}
