"""Simulation lab: latent-model data generation, closed-form group
correlations, irrepresentability diagnostics and the benchmark harness.

Binary factors are generated by thresholding an equicorrelated normal
latent matrix at zero.  Under that model the effect pairs fall into
correlation groups with closed forms (``theoretical_correlation``); the
parent-child and sibling pairs stay highly correlated even at rho = 0,
which is what breaks plain l1 selection on CME designs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .design import CME, ME, CmeDesign, EffectId, FactorMatrix, build_cme_design
from .errors import InvalidParams, InvalidRho, ModelNotRealizable, SingularBlock
from .solver import SolverOptions
from .tuning import cv_cmenet, cv_lasso_limit, default_grid


class GroupKind(Enum):
    MAIN_EFFECT_PAIR = "main_effect_pair"
    SIBLING_PAIR = "sibling_pair"
    PARENT_CHILD = "parent_child"
    COUSIN_PAIR = "cousin_pair"
    CME_CONDITIONED = "cme_conditioned"


@dataclass(frozen=True)
class LatentModelSpec:
    n: int
    p: int
    rho: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise InvalidRho(f"rho must lie in [0, 1), got {self.rho}")
        if self.n < 1 or self.p < 1:
            raise InvalidParams("n and p must be positive")


def gen_factors(spec: LatentModelSpec) -> FactorMatrix:
    """Draw n iid rows of p equicorrelated latent normals, threshold at 0.

    Uses the one-factor representation z = sqrt(rho)*w + sqrt(1-rho)*eps,
    which samples in O(n*p) without a p x p Cholesky.
    """
    rng = np.random.default_rng(spec.seed)
    w = rng.standard_normal((spec.n, 1))
    eps = rng.standard_normal((spec.n, spec.p))
    z = np.sqrt(spec.rho) * w + np.sqrt(1.0 - spec.rho) * eps
    return FactorMatrix(np.where(z > 0, 1, -1).astype(np.int8))


def _primitives_closed(rho: float) -> dict:
    t = np.arcsin(rho) / np.pi
    sc2 = 0.5 - t * t
    sc = np.sqrt(sc2)
    return {
        "psi_me": 2.0 * t,
        "psi_sib": (0.25 + 0.5 * t - t * t) / sc2,
        "psi_pc": 1.0 / (2.0 * sc),
        "psi_cou": (t - t * t) / sc2,
        "psi_cond": t / sc,
        "mu_c": t,
        "sigma_c2": sc2,
        "p2": 0.5 * t + 0.25,
    }


def _corr(a, b) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def _primitives_empirical(rho: float, n: int, seed) -> dict:
    """Estimate the pairwise-correlation primitives from one big draw."""
    x = gen_factors(LatentModelSpec(n, 3, rho, seed)).values.astype(np.float64)
    a, b, c = x[:, 0], x[:, 1], x[:, 2]
    a_bp = a * (b > 0)
    a_cp = a * (c > 0)
    b_ap = b * (a > 0)
    c_ap = c * (a > 0)
    return {
        "psi_me": _corr(a, b),
        "psi_sib": _corr(a_bp, a_cp),
        "psi_pc": _corr(a_bp, a),
        "psi_cou": _corr(b_ap, c_ap),
        "psi_cond": _corr(a_bp, b),
        "mu_c": float(a_bp.mean()),
        "sigma_c2": float(a_bp.var()),
        "p2": float(np.mean((a > 0) & (b > 0))),
    }


def theoretical_correlation(kind: GroupKind, rho: float) -> float:
    """Closed-form pairwise correlation for an effect-pair group."""
    if not 0.0 <= rho < 1.0:
        raise InvalidRho(f"rho must lie in [0, 1), got {rho}")
    prim = _primitives_closed(rho)
    kind = GroupKind(kind)
    return {
        GroupKind.MAIN_EFFECT_PAIR: prim["psi_me"],
        GroupKind.SIBLING_PAIR: prim["psi_sib"],
        GroupKind.PARENT_CHILD: prim["psi_pc"],
        GroupKind.COUSIN_PAIR: prim["psi_cou"],
        GroupKind.CME_CONDITIONED: prim["psi_cond"],
    }[kind]


def empirical_group_correlation(kind: GroupKind, rho: float, n: int = 100_000, seed=0):
    """Monte Carlo estimate of the same quantity plus its standard error."""
    prim = _primitives_empirical(rho, n, seed)
    kind = GroupKind(kind)
    r = {
        GroupKind.MAIN_EFFECT_PAIR: prim["psi_me"],
        GroupKind.SIBLING_PAIR: prim["psi_sib"],
        GroupKind.PARENT_CHILD: prim["psi_pc"],
        GroupKind.COUSIN_PAIR: prim["psi_cou"],
        GroupKind.CME_CONDITIONED: prim["psi_cond"],
    }[kind]
    se = (1.0 - r * r) / np.sqrt(n)
    return r, se


@dataclass(frozen=True)
class TrueModelSpec:
    """A GxAy active-effect layout: x groups of y effects each.

    Sibling groups share a parent factor (group g uses parent g and
    conditioned factors G + g*A .. G + g*A + A - 1, all at the + level);
    cousin groups mirror that with the conditioned factor shared; the
    main-effects structure activates the first G main effects.  The layout
    is a fixed deterministic convention so replications stay comparable.
    """

    structure: str
    n_groups: int
    n_per_group: int
    coefficient: float = 1.0
    noise_sd: float = 1.0
    signs: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.structure not in ("sibling", "cousin", "main"):
            raise InvalidParams(f"unknown structure {self.structure!r}")
        if self.n_groups < 1 or self.n_per_group < 1:
            raise InvalidParams("n_groups and n_per_group must be positive")
        if self.noise_sd < 0:
            raise InvalidParams("noise_sd must be nonnegative")

    def active_effects(self, p: int) -> list[EffectId]:
        G, A = self.n_groups, self.n_per_group
        if self.structure == "main":
            if G > p:
                raise ModelNotRealizable(f"{G} active MEs need p >= {G}")
            return [EffectId(ME, g) for g in range(G)]
        if G + G * A > p:
            raise ModelNotRealizable(
                f"G{G}A{A} {self.structure} model needs p >= {G + G * A}, got {p}"
            )
        out = []
        for g in range(G):
            for i in range(A):
                other = G + g * A + i
                if self.structure == "sibling":
                    out.append(EffectId(CME, g, other, "+"))
                else:
                    out.append(EffectId(CME, other, g, "+"))
        return out


def gen_response(design: CmeDesign, true_model: TrueModelSpec, seed=0):
    """y = X beta_true + noise; returns (y, active EffectIds)."""
    active = true_model.active_effects(design.p)
    index = {e: i for i, e in enumerate(design.effects)}
    try:
        cols = np.array([index[e] for e in active], dtype=np.int64)
    except KeyError as missing:
        raise ModelNotRealizable(f"effect {missing} not present in design") from None
    coefs = np.full(len(active), float(true_model.coefficient))
    if true_model.signs is not None:
        signs = np.asarray(true_model.signs, dtype=np.float64)
        if signs.shape[0] != len(active) or not np.isin(signs, (-1, 1)).all():
            raise InvalidParams("signs must be one +-1 per active effect")
        coefs = coefs * signs
    rng = np.random.default_rng(seed)
    y = design.columns[:, cols] @ coefs + true_model.noise_sd * rng.standard_normal(design.n)
    return y, active


def irrepresentability_stat(corr: np.ndarray, active, zeta, j: int) -> float:
    """|C_21,j C_11^{-1} zeta| for inactive effect j; >= 1 certifies a
    sign-consistency violation of l1 selection."""
    corr = np.asarray(corr, dtype=np.float64)
    active = np.asarray(active, dtype=np.int64)
    zeta = np.asarray(zeta, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise InvalidParams("corr must be square")
    if zeta.shape[0] != active.shape[0] or not np.isin(zeta, (-1.0, 1.0)).all():
        raise InvalidParams("zeta must be one +-1 per active effect")
    if j in active:
        raise InvalidParams("j must be an inactive effect")
    c11 = corr[np.ix_(active, active)]
    c21j = corr[j, active]
    try:
        x = np.linalg.solve(c11, zeta)
    except np.linalg.LinAlgError:
        raise SingularBlock("active correlation block is singular") from None
    return float(abs(c21j @ x))


def inconsistency_case(case: str, q: int, rho: float, method: str = "empirical",
                       n: int = 100_000, seed=0) -> float:
    """Irrepresentability statistic for the three canonical failure models.

    ``case='siblings'``: q active siblings (mixed conditioning levels), the
    shared parent ME inactive.  ``case='main_effects'``: two active MEs with
    opposite signs, one of their CMEs inactive.  ``case='cousins'``: q
    active cousins, the first parent ME inactive.  The blocks are assembled
    from the pairwise-correlation primitives (estimated empirically by
    default, closed forms with ``method='closed'``) following each model's
    stated structure, including the sign carried by negative effects.
    """
    if method == "empirical":
        prim = _primitives_empirical(rho, n, seed)
    elif method == "closed":
        prim = _primitives_closed(rho)
    else:
        raise InvalidParams(f"unknown method {method!r}")
    if q < 2:
        raise InvalidParams("need at least two active effects")

    if case == "siblings":
        off_first = (0.5 - prim["p2"] - prim["mu_c"] ** 2) / prim["sigma_c2"]
        c11 = np.full((q, q), prim["psi_sib"])
        c11[0, :] = c11[:, 0] = off_first
        np.fill_diagonal(c11, 1.0)
        c21 = np.full(q, prim["psi_pc"])
        zeta = np.ones(q)
    elif case == "main_effects":
        if q != 2:
            raise InvalidParams("the main-effects case is a q=2 model")
        c11 = np.array([[1.0, -prim["psi_me"]], [-prim["psi_me"], 1.0]])
        c21 = np.array([prim["psi_pc"], prim["psi_cond"]])
        zeta = np.ones(2)
    elif case == "cousins":
        off_first = -prim["mu_c"] ** 2 / prim["sigma_c2"]
        c11 = np.full((q, q), prim["psi_cou"])
        c11[0, :] = c11[:, 0] = off_first
        np.fill_diagonal(c11, 1.0)
        c21 = np.concatenate([[prim["psi_sib"]], np.full(q - 1, prim["psi_cond"])])
        zeta = np.ones(q)
    else:
        raise InvalidParams(f"unknown case {case!r}")

    corr = np.empty((q + 1, q + 1))
    corr[:q, :q] = c11
    corr[q, :q] = corr[:q, q] = c21
    corr[q, q] = 1.0
    return irrepresentability_stat(corr, np.arange(q), zeta, q)


@dataclass
class Scenario:
    """One benchmark cell: data model plus replication bookkeeping."""

    n: int
    p: int
    rho: float
    structure: str
    n_groups: int
    n_per_group: int
    coefficient: float = 1.0
    noise_sd: float = 1.0
    reps: int = 20
    seed: int = 0
    n_new: int = 20
    cv: dict = field(default_factory=dict)  # L, M, folds overrides

    def true_model(self) -> TrueModelSpec:
        return TrueModelSpec(self.structure, self.n_groups, self.n_per_group,
                             self.coefficient, self.noise_sd)

    @classmethod
    def from_file(cls, path):
        text = open(path, "rb").read()
        if str(path).endswith(".toml"):
            try:
                import tomllib
            except ImportError:  # tomllib ships with 3.11; tomli backports it
                try:
                    import tomli as tomllib
                except ImportError:
                    raise InvalidParams(
                        "TOML scenarios need Python >= 3.11 or the tomli package; "
                        "use JSON instead"
                    ) from None
            data = tomllib.loads(text.decode())
        else:
            data = json.loads(text)
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidParams(f"bad scenario file {path}: {exc}") from None


def misspecification_count(true_ids: Iterable[EffectId], selected_ids: Iterable[EffectId]) -> int:
    """Size of the symmetric difference between true and selected sets."""
    a, b = set(true_ids), set(selected_ids)
    return len(a - b) + len(b - a)


def _quantiles(values) -> dict:
    qs = np.percentile(np.asarray(values, dtype=np.float64), [10, 25, 50, 75, 90])
    return {k: float(v) for k, v in zip(("10", "25", "50", "75", "90"), qs)}


def _one_rep(scenario: Scenario, methods, rep: int):
    """Generate one replication, tune each method, score selection and MSPE."""
    seq = np.random.SeedSequence([scenario.seed, rep])
    s_factors, s_noise, s_folds, s_new = seq.spawn(4)
    model = scenario.true_model()

    factors = gen_factors(LatentModelSpec(scenario.n, scenario.p, scenario.rho, s_factors))
    design = build_cme_design(factors, keep_raw=False)
    y, active = gen_response(design, model, s_noise)
    index = {e: i for i, e in enumerate(design.effects)}
    active_cols = np.array([index[e] for e in active], dtype=np.int64)
    coef_true = np.full(active_cols.size, model.coefficient)

    new_rng = np.random.default_rng(s_new)
    new_factors = gen_factors(
        LatentModelSpec(scenario.n_new, scenario.p, scenario.rho, s_new.spawn(1)[0])
    )
    x_new = design.transform(new_factors)
    y_new = x_new[:, active_cols] @ coef_true + model.noise_sd * new_rng.standard_normal(
        scenario.n_new
    )

    cv_conf = dict(scenario.cv)
    L = int(cv_conf.pop("L", 10))
    M = int(cv_conf.pop("M", 10))
    folds = int(cv_conf.pop("folds", 10))
    fold_seed = int(s_folds.generate_state(1)[0])
    opts = SolverOptions(active_set_init_sweeps=int(cv_conf.pop("init_sweeps", 5)))
    if cv_conf:
        raise InvalidParams(f"unknown cv options {sorted(cv_conf)}")

    out = {}
    for method in methods:
        if method == "oracle":
            xa = design.columns[:, active_cols]
            yc = y - y.mean()
            coef, *_ = np.linalg.lstsq(xa, yc, rcond=None)
            beta = np.zeros(design.p_prime)
            beta[active_cols] = coef
            pred = x_new @ beta + y.mean()
            selected = list(active)
        else:
            grid = default_grid(design, y, L=L, M=M, folds=folds, seed=fold_seed)
            if method == "cmenet":
                res = cv_cmenet(design, y, grid, opts=opts)
            elif method == "lasso_limit":
                res = cv_lasso_limit(design, y, grid, opts=opts)
            else:
                raise InvalidParams(f"unknown method {method!r}")
            beta = res.final_fit.beta
            pred = x_new @ beta + res.final_fit.y_center
            selected = [e for e, _ in res.selected_effects]
        mspe = float(np.mean((y_new - pred) ** 2))
        out[method] = {
            "rep": rep,
            "misspecified": misspecification_count(active, selected),
            "mspe": mspe,
            "n_selected": len(selected),
        }
    return out


def run_benchmark(scenario: Scenario, methods: Sequence[str] = ("cmenet", "lasso_limit"),
                  threads: int = 1) -> dict:
    """Replicate a scenario, tune each method by K-fold CV, report quantiles.

    Each replication owns its generator stream (scenario seed + rep index),
    so results are deterministic and independent of thread count.
    """
    methods = list(methods)
    reps = range(scenario.reps)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(lambda r: _one_rep(scenario, methods, r), reps))
    else:
        per_rep = [_one_rep(scenario, methods, r) for r in reps]

    report: Dict[str, dict] = {
        "scenario": asdict(scenario),
        "true_effects": [e.name() for e in scenario.true_model().active_effects(scenario.p)],
        "methods": {},
    }
    for method in methods:
        rows = [r[method] for r in per_rep]
        report["methods"][method] = {
            "per_rep": rows,
            "quantiles": {
                "misspecified": _quantiles([r["misspecified"] for r in rows]),
                "mspe": _quantiles([r["mspe"] for r in rows]),
            },
        }
    return report
