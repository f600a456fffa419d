"""Model-matrix construction for main effects and conditional main effects.

A conditional main effect (CME) ``J|K+`` carries the value of the binary
factor J on observations where factor K sits at +1, and 0 where K sits at
-1 (``J|K-`` swaps the conditioning level).  The design holds the p main
effects first, then the 4*C(p,2) CME columns in (parent, conditioned, sign)
order, every column centered and scaled so that ``mean(x) == 0`` and
``mean(x**2) == 1``.

Each column belongs to exactly one sibling group (effects sharing a parent
factor) and one cousin group (effects sharing a conditioned factor); the
main effect of factor j is counted in both S(j) and C(j).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConstantColumn, DataError, DimensionMismatch, IndexOutOfRange, InvalidParams

ME = "ME"
CME = "CME"


@dataclass(frozen=True)
class EffectId:
    """Identity of one design column.

    ``parent`` and ``conditioned`` are 0-based factor indices; the canonical
    string form uses 1-based names, e.g. ``g14|g27-``.
    """

    kind: str
    parent: int
    conditioned: Optional[int] = None
    sign: Optional[str] = None

    def __post_init__(self):
        if self.kind == ME:
            if self.conditioned is not None or self.sign is not None:
                raise InvalidParams("main effects carry no conditioning")
        elif self.kind == CME:
            if self.conditioned is None or self.sign not in ("+", "-"):
                raise InvalidParams("CMEs need a conditioned factor and a sign")
            if self.conditioned == self.parent:
                raise InvalidParams("a factor cannot condition on itself")
        else:
            raise InvalidParams(f"unknown effect kind {self.kind!r}")

    def name(self, factor_names: Optional[Sequence[str]] = None) -> str:
        def nm(i):
            return factor_names[i] if factor_names is not None else f"g{i + 1}"

        if self.kind == ME:
            return nm(self.parent)
        return f"{nm(self.parent)}|{nm(self.conditioned)}{self.sign}"

    def __str__(self):
        return self.name()


def parse_effect_name(name: str, factor_names: Sequence[str]) -> EffectId:
    """Parse a canonical effect name ("g3" or "g3|g7+") back to an EffectId."""
    lookup = {nm: i for i, nm in enumerate(factor_names)}
    if "|" not in name:
        if name not in lookup:
            raise InvalidParams(f"unknown factor name {name!r}")
        return EffectId(ME, lookup[name])
    parent_nm, rest = name.split("|", 1)
    cond_nm, sign = rest[:-1], rest[-1]
    if sign not in "+-" or parent_nm not in lookup or cond_nm not in lookup:
        raise InvalidParams(f"malformed effect name {name!r}")
    return EffectId(CME, lookup[parent_nm], lookup[cond_nm], sign)


@dataclass(frozen=True)
class FactorMatrix:
    """Raw n x p matrix of binary factors coded -1/+1."""

    values: np.ndarray
    factor_names: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise DimensionMismatch("factor matrix must be 2-d")
        if not np.isin(vals, (-1, 1)).all():
            raise InvalidParams("factor entries must all be -1 or +1")
        object.__setattr__(self, "values", vals.astype(np.int8))
        if not self.factor_names:
            object.__setattr__(
                self, "factor_names", tuple(f"g{j + 1}" for j in range(vals.shape[1]))
            )
        elif len(self.factor_names) != vals.shape[1]:
            raise DimensionMismatch("factor_names length must equal p")
        else:
            object.__setattr__(self, "factor_names", tuple(self.factor_names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from01(cls, values, factor_names=()):
        """Build from 0/1 coded data, mapping 0 -> -1 (explicit, never inferred)."""
        vals = np.asarray(values)
        if not np.isin(vals, (0, 1)).all():
            raise InvalidParams("0/1 coding requested but entries are not all 0 or 1")
        return cls(np.where(vals == 0, -1, 1).astype(np.int8), factor_names)


def enumerate_effects(p: int, include_cmes: bool = True) -> list[EffectId]:
    """Column identities in design order: MEs, then CMEs by (parent, conditioned, +/-)."""
    effects = [EffectId(ME, j) for j in range(p)]
    if include_cmes:
        for j in range(p):
            for k in range(p):
                if k == j:
                    continue
                effects.append(EffectId(CME, j, k, "+"))
                effects.append(EffectId(CME, j, k, "-"))
    return effects


def build_raw_columns(factors: FactorMatrix, effects: Sequence[EffectId]) -> np.ndarray:
    """Raw (unnormalized) columns over {-1,0,+1} for the given effects."""
    x = factors.values
    out = np.zeros((factors.n, len(effects)), dtype=np.int8, order="F")
    for c, eff in enumerate(effects):
        if eff.kind == ME:
            out[:, c] = x[:, eff.parent]
        else:
            level = 1 if eff.sign == "+" else -1
            out[:, c] = x[:, eff.parent] * (x[:, eff.conditioned] == level)
    return out


@dataclass(frozen=True)
class CmeDesign:
    """Normalized ME+CME model matrix with group bookkeeping.

    Immutable after construction; one design may back many concurrent fits.
    ``columns`` is Fortran-ordered so single-column access is contiguous.
    """

    columns: np.ndarray
    effects: tuple
    column_center: np.ndarray
    column_scale: np.ndarray
    sib_of: np.ndarray
    cou_of: np.ndarray
    factor_names: tuple
    p: int
    raw_columns: Optional[np.ndarray] = None
    zero_columns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def p_prime(self) -> int:
        return self.columns.shape[1]

    @property
    def effect_names(self) -> list[str]:
        return [e.name(self.factor_names) for e in self.effects]

    def effect_index(self, name: str) -> int:
        try:
            return self.effect_names.index(name)
        except ValueError:
            raise InvalidParams(f"no effect named {name!r} in design") from None

    def sibling_group(self, j: int) -> np.ndarray:
        """Column indices of ME j and every CME with parent j (j is 1-based, as in "gJ")."""
        if not 1 <= j <= self.p:
            raise IndexOutOfRange(f"factor index {j} outside 1..{self.p}")
        return np.flatnonzero(self.sib_of == j - 1)

    def cousin_group(self, j: int) -> np.ndarray:
        """Column indices of ME j and every CME conditioned on j (1-based)."""
        if not 1 <= j <= self.p:
            raise IndexOutOfRange(f"factor index {j} outside 1..{self.p}")
        return np.flatnonzero(self.cou_of == j - 1)

    def transform(self, factors: FactorMatrix) -> np.ndarray:
        """Normalize new factor data with the stored center/scale."""
        if factors.p != self.p:
            raise DimensionMismatch(f"expected {self.p} factors, got {factors.p}")
        raw = build_raw_columns(factors, self.effects).astype(np.float64)
        out = (raw - self.column_center) / self.column_scale
        if self.zero_columns.any():
            out[:, self.zero_columns] = 0.0
        return out


def sibling_group(design: CmeDesign, j: int) -> np.ndarray:
    return design.sibling_group(j)


def cousin_group(design: CmeDesign, j: int) -> np.ndarray:
    return design.cousin_group(j)


def build_cme_design(
    factors: FactorMatrix,
    include_cmes: bool = True,
    degenerate: str = "error",
    keep_raw: Optional[bool] = None,
) -> CmeDesign:
    """Construct the normalized ME+CME design from binary factors.

    Parameters
    ----------
    factors : FactorMatrix
        n x p matrix over {-1,+1}, n >= 2.
    include_cmes : bool
        When False the design holds main effects only (p' = p).
    degenerate : {"error", "drop", "zero"}
        What to do with zero-variance raw columns: reject (default), remove
        the column and its group memberships, or keep it pinned to an
        all-zero column (used internally for cross-validation folds, where
        silent index shifts would break warm starts).
    keep_raw : bool, optional
        Retain the raw {-1,0,+1} columns (for exact identity checks and
        fast fold re-use).  Defaults to True below p = 200.
    """
    if factors.n < 2:
        raise InvalidParams("need at least 2 observations")
    if degenerate not in ("error", "drop", "zero"):
        raise InvalidParams(f"unknown degenerate mode {degenerate!r}")
    if keep_raw is None:
        keep_raw = factors.p < 200

    p = factors.p
    effects = enumerate_effects(p, include_cmes)
    raw = build_raw_columns(factors, effects)

    center = raw.mean(axis=0)
    scale = np.sqrt(np.mean((raw - center) ** 2, axis=0))
    dead = scale == 0.0

    if dead.any():
        first = int(np.flatnonzero(dead)[0])
        if degenerate == "error":
            raise ConstantColumn(effects[first].name(factors.factor_names))
        if degenerate == "drop":
            keep = ~dead
            effects = [e for e, k in zip(effects, keep) if k]
            raw = raw[:, keep]
            center, scale, dead = center[keep], scale[keep], dead[keep]

    safe_scale = np.where(dead, 1.0, scale)
    cols = np.asfortranarray((raw - center) / safe_scale)
    if dead.any():
        cols[:, dead] = 0.0

    sib_of = np.array([e.parent for e in effects], dtype=np.int32)
    cou_of = np.array(
        [e.parent if e.kind == ME else e.conditioned for e in effects], dtype=np.int32
    )

    return CmeDesign(
        columns=cols,
        effects=tuple(effects),
        column_center=center.astype(np.float64),
        column_scale=safe_scale.astype(np.float64),
        sib_of=sib_of,
        cou_of=cou_of,
        factor_names=factors.factor_names,
        p=p,
        raw_columns=np.asfortranarray(raw) if keep_raw else None,
        zero_columns=dead,
    )


def fold_design(design: CmeDesign, rows: np.ndarray) -> CmeDesign:
    """Re-normalize a row subset of an existing design.

    Centering/scaling is affine, so renormalizing the already-normalized
    columns on the subset equals building the design from the raw subset.
    Columns that are constant within the subset come back pinned at zero.
    """
    sub = design.columns[rows]
    center_f = sub.mean(axis=0)
    scale_f = np.sqrt(np.mean((sub - center_f) ** 2, axis=0))
    dead = (scale_f == 0.0) | design.zero_columns
    safe = np.where(dead, 1.0, scale_f)
    cols = np.asfortranarray((sub - center_f) / safe)
    if dead.any():
        cols[:, dead] = 0.0
    return replace(
        design,
        columns=cols,
        column_center=design.column_center + design.column_scale * center_f,
        column_scale=design.column_scale * safe,
        raw_columns=None,
        zero_columns=dead,
    )


def apply_fold_normalization(design: CmeDesign, fold: CmeDesign, rows: np.ndarray) -> np.ndarray:
    """Map held-out rows of ``design.columns`` into a fold design's coordinates."""
    center_f = (fold.column_center - design.column_center) / design.column_scale
    scale_f = fold.column_scale / design.column_scale
    out = (design.columns[rows] - center_f) / scale_f
    if fold.zero_columns.any():
        out[:, fold.zero_columns] = 0.0
    return out


def load_csv(path, response: str, map01: bool = False):
    """Read a data CSV: one numeric response column, remaining columns +-1 factors.

    Returns (FactorMatrix, y).  Malformed entries are reported with their
    row and column so CLI users can locate them.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise DataError(f"{path}: no column named {response!r}")
        y_col = header.index(response)
        names = [h for i, h in enumerate(header) if i != y_col]
        allowed = {0, 1} if map01 else {-1, 1}
        rows, ys = [], []
        for r, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataError(f"{path}: row {r} has {len(rec)} fields, expected {len(header)}")
            try:
                ys.append(float(rec[y_col]))
            except ValueError:
                raise DataError(
                    f"{path}: row {r}, column {response!r}: non-numeric response {rec[y_col]!r}"
                ) from None
            vals = []
            for i, h in enumerate(header):
                if i == y_col:
                    continue
                tok = rec[i].strip()
                try:
                    v = int(tok)
                except ValueError:
                    v = None
                if v not in allowed:
                    raise DataError(
                        f"{path}: row {r}, column {h!r}: entry {tok!r} not in {sorted(allowed)}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.int8)
    factors = FactorMatrix.from01(arr, names) if map01 else FactorMatrix(arr, names)
    return factors, np.array(ys, dtype=np.float64)


def save_csv(path, factors: FactorMatrix, y: np.ndarray, response: str = "y"):
    """Write factors plus response in the layout `load_csv` reads."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(factors.factor_names) + [response])
        for i in range(factors.n):
            writer.writerow([int(v) for v in factors.values[i]] + [repr(float(y[i]))])
