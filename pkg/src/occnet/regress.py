"""OLS with dummy-coded fixed effects, classical standard errors and star tables."""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import linalg
from scipy import stats

log = logging.getLogger(__name__)

COLLINEARITY_TOL = 1e-10
STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))
STAR_NOTE = "*p<0.1; **p<0.05; ***p<0.01"
INTERCEPT = "Intercept"

_CATEGORICAL = re.compile(r"^C\((\w+)\)$")


@dataclass(frozen=True)
class ModelSpec:
    """``terms`` entries: ``"col"`` numeric, ``"C(col)"`` categorical, ``"a*b"`` product."""

    dependent: str
    terms: tuple[str, ...]
    fixed_effects: tuple[str, ...] = ()
    reference_levels: Mapping[str, str] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise ValueError(f"duplicate terms in {self.terms}")


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    labels: list[str]
    dropped: list[str]
    rows: np.ndarray  # positions of the rows used (after listwise deletion)
    fixed_effect_labels: list[str] = field(default_factory=list)


@dataclass
class RegressionResult:
    labels: list[str]
    coef: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    n: int
    r2: float
    adj_r2: float
    resid_se: float
    df_resid: int
    dropped: list[str] = field(default_factory=list)
    fitted: np.ndarray | None = None
    name: str = ""
    dependent: str = ""
    fixed_effects: tuple[str, ...] = ()
    se_type: str = "classical"

    def __getitem__(self, label: str) -> dict:
        k = self.labels.index(label)
        return {
            "coef": float(self.coef[k]),
            "se": float(self.se[k]),
            "t": float(self.tstat[k]),
            "p": float(self.pvalue[k]),
            "stars": stars(float(self.pvalue[k])),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"coef": self.coef, "se": self.se, "t": self.tstat, "p": self.pvalue,
             "stars": [stars(p) for p in self.pvalue]},
            index=self.labels,
        )


def stars(p: float) -> str:
    if not np.isfinite(p):
        return ""
    for cut, mark in STAR_LEVELS:
        if p < cut:
            return mark
    return ""


def _term_columns(term: str) -> list[str]:
    m = _CATEGORICAL.match(term)
    if m:
        return [m.group(1)]
    return [t.strip() for t in term.split("*")]


def _numeric(series: pd.Series) -> np.ndarray:
    return series.to_numpy(dtype=float)


def _dummies(series: pd.Series, reference: str | None, prefix: str | None) -> tuple[np.ndarray, list[str]]:
    values = series.astype(str).to_numpy()
    levels = sorted(set(values))
    if len(levels) < 2:
        log.warning("categorical %s has %d observed level(s); dropped", series.name, len(levels))
        return np.empty((len(values), 0)), []
    ref = levels[0] if reference is None else str(reference)
    if ref not in levels:
        raise ValueError(f"reference level {ref!r} not observed in {series.name}")
    keep = [lv for lv in levels if lv != ref]
    codes = {lv: i for i, lv in enumerate(keep)}
    cols = np.zeros((len(values), len(keep)))
    for r, v in enumerate(values):
        j = codes.get(v)
        if j is not None:
            cols[r, j] = 1.0
    labels = [f"{prefix}[{lv}]" if prefix else lv for lv in keep]
    return cols, labels


def independent_columns(X: np.ndarray, tol: float = COLLINEARITY_TOL) -> np.ndarray:
    """Boolean mask keeping each column unless it lies in the span of the earlier ones.

    Uses an unpivoted Householder QR, so |R[j, j]| is the distance of column j
    from the span of columns 0..j-1; dependence is judged relative to the
    column's own norm.
    """
    if X.shape[1] == 0:
        return np.zeros(0, dtype=bool)
    R = linalg.qr(X, mode="r", check_finite=False)[0]
    diag = np.abs(np.diag(R))
    norms = np.linalg.norm(X, axis=0)
    return (norms > 0) & (diag > tol * np.maximum(norms, np.finfo(float).tiny))


def design_matrix(table: pd.DataFrame, spec: ModelSpec, intercept: bool = True) -> DesignMatrix:
    """Intercept, terms in order, then fixed-effect dummies; collinear columns dropped."""
    needed = [spec.dependent]
    for t in spec.terms:
        needed += _term_columns(t)
    needed += list(spec.fixed_effects)
    missing = sorted({c for c in needed if c not in table.columns})
    if missing:
        raise KeyError(f"columns not in table: {missing}")

    sub = table[list(dict.fromkeys(needed))]
    ok = ~sub.isna().any(axis=1).to_numpy()
    rows = np.flatnonzero(ok)
    sub = sub.iloc[rows]
    if len(sub) == 0:
        raise ValueError("empty estimation sample")

    y = _numeric(sub[spec.dependent])
    if np.ptp(y) == 0:
        log.warning("dependent variable %s is constant", spec.dependent)

    blocks: list[np.ndarray] = []
    labels: list[str] = []
    if intercept:
        blocks.append(np.ones((len(sub), 1)))
        labels.append(INTERCEPT)
    for term in spec.terms:
        m = _CATEGORICAL.match(term)
        if m:
            col = m.group(1)
            D, lab = _dummies(sub[col], spec.reference_levels.get(col), None)
            blocks.append(D)
            labels += lab
        elif "*" in term:
            parts = _term_columns(term)
            prod = np.ones(len(sub))
            for p in parts:
                prod = prod * _numeric(sub[p])
            blocks.append(prod[:, None])
            labels.append(term)
        else:
            blocks.append(_numeric(sub[term])[:, None])
            labels.append(term)
    fe_labels: list[str] = []
    for col in spec.fixed_effects:
        D, lab = _dummies(sub[col], spec.reference_levels.get(col), col)
        blocks.append(D)
        labels += lab
        fe_labels += lab

    X = np.hstack(blocks) if blocks else np.empty((len(sub), 0))
    keep = independent_columns(X)
    dropped = [lab for lab, k in zip(labels, keep) if not k]
    if dropped:
        log.info("dropped collinear columns: %s", dropped)
    X = X[:, keep]
    labels = [lab for lab, k in zip(labels, keep) if k]
    fe_labels = [lab for lab in fe_labels if lab in set(labels)]
    return DesignMatrix(X, y, labels, dropped, rows, fe_labels)


def ols(
    X: np.ndarray,
    y: np.ndarray,
    labels: Sequence[str] | None = None,
    weights: np.ndarray | None = None,
    clusters: np.ndarray | None = None,
) -> RegressionResult:
    """Least squares via Householder QR (never forms X'X).

    Classical standard errors ``s^2 (X'X)^-1`` come from ``R^-1``. With
    ``clusters`` a CR1 sandwich is used and p-values take G-1 degrees of freedom.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    labels = list(labels) if labels is not None else [f"x{j}" for j in range(p)]

    keep = independent_columns(X)
    dropped = [lab for lab, k in zip(labels, keep) if not k]
    if dropped:
        X = X[:, keep]
        labels = [lab for lab, k in zip(labels, keep) if k]
        p = X.shape[1]
    if p == 0:
        raise ValueError("design matrix has rank 0")
    if n <= p:
        raise ValueError(f"n = {n} observations do not exceed rank {p}")

    if weights is not None:
        w = np.asarray(weights, dtype=float)
        sw = np.sqrt(w)
        Xw, yw = X * sw[:, None], y * sw
    else:
        w = None
        Xw, yw = X, y

    Q, R = linalg.qr(Xw, mode="economic", check_finite=False)
    beta = linalg.solve_triangular(R, Q.T @ yw, check_finite=False)
    fitted = X @ beta
    resid_w = yw - Xw @ beta
    ssr = float(resid_w @ resid_w)
    df = n - p
    s2 = ssr / df
    Rinv = linalg.solve_triangular(R, np.eye(p), check_finite=False)

    if clusters is None:
        se = np.sqrt(s2 * np.einsum("ij,ij->i", Rinv, Rinv))
        t_df = df
        se_type = "classical"
    else:
        groups, g_idx = np.unique(np.asarray(clusters), return_inverse=True)
        G = len(groups)
        if G < 2:
            raise ValueError("clustered standard errors need at least two clusters")
        scores = np.zeros((G, p))
        np.add.at(scores, g_idx, Xw * resid_w[:, None])
        bread = Rinv @ Rinv.T
        meat = scores.T @ scores
        c = G / (G - 1) * (n - 1) / (n - p)
        se = np.sqrt(np.clip(np.diag(c * bread @ meat @ bread), 0.0, None))
        t_df = G - 1
        se_type = "clustered"

    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.inf * np.sign(beta)))
    pvalue = 2.0 * stats.t.sf(np.abs(tstat), t_df)

    has_const = bool(np.any(np.all(X == X[0:1, :], axis=0) & (X[0] != 0)))
    wts = np.ones(n) if w is None else w
    if has_const:
        ybar = np.sum(wts * y) / np.sum(wts)
        tss = float(np.sum(wts * (y - ybar) ** 2))
    else:
        tss = float(np.sum(wts * y**2))
    r2 = 0.0 if tss <= 0 else max(0.0, 1.0 - ssr / tss)
    adj = 1.0 - (1.0 - r2) * ((n - 1) if has_const else n) / df

    return RegressionResult(
        labels=labels,
        coef=beta,
        se=se,
        tstat=tstat,
        pvalue=pvalue,
        n=n,
        r2=r2,
        adj_r2=adj,
        resid_se=float(np.sqrt(s2)),
        df_resid=df,
        dropped=dropped,
        fitted=fitted,
        se_type=se_type,
    )


def fit(
    table: pd.DataFrame,
    spec: ModelSpec,
    weighted: bool = False,
    cluster: str | None = None,
    weight_col: str = "hh_weight",
) -> RegressionResult:
    dm = design_matrix(table, spec)
    sub = table.iloc[dm.rows]
    w = sub[weight_col].to_numpy(dtype=float) if weighted else None
    g = sub[cluster].to_numpy() if cluster else None
    res = ols(dm.X, dm.y, dm.labels, weights=w, clusters=g)
    res.dropped = dm.dropped + res.dropped
    res.name = spec.name
    res.dependent = spec.dependent
    res.fixed_effects = tuple(spec.fixed_effects)
    return res


FIXED_EFFECTS = ("state", "origin_occ")
_CONTROLS = ("C(social_group)", "assets", "urban", "female", "age", "origin_edu")


def family_a_specs(reference_levels: Mapping[str, str] | None = None) -> list[ModelSpec]:
    """Nested columns for social distance on education."""
    refs = dict(reference_levels or {})
    steps = [
        ("edu_years",),
        ("C(social_group)",),
        ("origin_edu",),
        ("assets",),
        ("urban", "female", "age"),
    ]
    specs, terms = [], ()
    for k, add in enumerate(steps, start=1):
        terms = terms + add
        specs.append(ModelSpec("d_ij", terms, FIXED_EFFECTS, refs, name=f"({k})"))
    return specs


def family_b_specs(reference_levels: Mapping[str, str] | None = None) -> list[ModelSpec]:
    """Nested columns for economic distance on social distance."""
    refs = dict(reference_levels or {})
    base = ("d_ij",) + _CONTROLS
    with_edu = ("d_ij", "edu_years") + _CONTROLS
    return [
        ModelSpec("ed_ij", base, FIXED_EFFECTS, refs, name="(1)"),
        ModelSpec("ed_ij", with_edu, FIXED_EFFECTS, refs, name="(2)"),
        ModelSpec("ed_ij", with_edu + ("d_ij*edu_years",), FIXED_EFFECTS, refs, name="(3)"),
    ]


def model_family_a(table: pd.DataFrame, reference_levels=None, weighted=False, cluster=None, specs=None):
    specs = specs or family_a_specs(reference_levels)
    return [fit(table, s, weighted=weighted, cluster=cluster) for s in specs]


def model_family_b(table: pd.DataFrame, reference_levels=None, weighted=False, cluster=None, specs=None):
    specs = specs or family_b_specs(reference_levels)
    return [fit(table, s, weighted=weighted, cluster=cluster) for s in specs]


@dataclass(frozen=True)
class TableLayout:
    dependent_label: str
    rows: tuple[tuple[str, str], ...]  # (term label, display name)


_GROUP_ROWS = tuple((g, g) for g in ("FC", "OBC", "SC", "ST", "MUS", "OTH"))

LAYOUT_A = TableLayout(
    "Social distance from traditional occupations (d_ij)",
    (("edu_years", "Education"),) + _GROUP_ROWS + (
        ("assets", "Assets"), ("urban", "Urban"), ("female", "Female"), ("age", "Age"), ("origin_edu", "Oe"),
    ),
)

LAYOUT_B = TableLayout(
    "Economic distance from traditional occupations (ED_ij)",
    (("d_ij", "dij"), ("edu_years", "Education (Eij)")) + _GROUP_ROWS + (
        ("assets", "Assets"), ("urban", "Urban"), ("female", "Female"), ("age", "Age"),
        ("origin_edu", "Oe"), ("d_ij*edu_years", "dij*Eij"),
    ),
)


def format_cell(coef: float, se: float, p: float) -> str:
    return f"{coef:,.3f}{stars(p)} ({se:,.3f})"


def _table_rows(results: Sequence[RegressionResult], layout: TableLayout):
    hidden = {INTERCEPT}
    for r in results:
        hidden.update(lab for lab in r.labels if "[" in lab)
    order = [lab for lab, _ in layout.rows]
    display = dict(layout.rows)
    extra = []
    for r in results:
        for lab in r.labels:
            if lab not in hidden and lab not in display and lab not in extra:
                extra.append(lab)
    present = {lab for r in results for lab in r.labels}
    body = []
    for lab in [o for o in order if o in present] + extra:
        cells = []
        for r in results:
            if lab in r.labels:
                k = r.labels.index(lab)
                cells.append(format_cell(r.coef[k], r.se[k], r.pvalue[k]))
            else:
                cells.append("")
        body.append((display.get(lab, lab), cells))
    footer = [
        ("Observations", [f"{r.n:,}" for r in results]),
        ("R²", [f"{r.r2:.3f}" for r in results]),
        ("Adjusted R²", [f"{r.adj_r2:.3f}" for r in results]),
        ("Residual Std. Error", [f"{r.resid_se:,.3f} (df = {r.df_resid})" for r in results]),
    ]
    return body, footer


def _fe_note(results: Sequence[RegressionResult]) -> str:
    fes = list(dict.fromkeys(fe for r in results for fe in r.fixed_effects))
    return f"Fixed effects: {', '.join(fes)}" if fes else "Fixed effects: none"


def regression_table(results: Sequence[RegressionResult], layout: TableLayout) -> tuple[str, str]:
    """Render a publication-style table; returns ``(text, csv_text)``."""
    if not results:
        raise ValueError("no results to tabulate")
    body, footer = _table_rows(results, layout)
    headers = [r.name or f"({k})" for k, r in enumerate(results, start=1)]

    label_w = max(len(s) for s, _ in body + footer + [("", [])])
    label_w = max(label_w, 20)
    col_w = max([len(h) for h in headers] + [len(c) for _, cells in body + footer for c in cells]) + 2
    total = label_w + col_w * len(results)

    def line(label, cells):
        return (label.ljust(label_w) + "".join(c.center(col_w) for c in cells)).rstrip()

    out = [
        "=" * total,
        " " * label_w + "Dependent variable:".center(col_w * len(results)).rstrip(),
        " " * label_w + "-" * (col_w * len(results)),
        " " * label_w + layout.dependent_label.center(col_w * len(results)).rstrip(),
        line("", headers),
        "-" * total,
    ]
    out += [line(label, cells) for label, cells in body]
    out.append("-" * total)
    out += [line(label, cells) for label, cells in footer]
    out.append("=" * total)
    out.append(f"Note: {STAR_NOTE}")
    out.append(_fe_note(results))
    se_types = {r.se_type for r in results}
    if se_types != {"classical"}:
        out.append(f"Standard errors: {', '.join(sorted(se_types))}")
    text = "\n".join(out) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["term", *headers])
    for label, cells in body + footer:
        w.writerow([label, *cells])
    w.writerow(["Note", STAR_NOTE] + [""] * (len(results) - 1))
    w.writerow(["Fixed effects", _fe_note(results).split(": ", 1)[1]] + [""] * (len(results) - 1))
    return text, buf.getvalue()
