"""Statistics for visualization experiments.

Choice-set generation for a full-profile conjoint with a none option,
dummy/effect encoding, maximum-likelihood logit with odds ratios and
information criteria, and OLS with heteroskedasticity-robust standard errors.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy import stats

from .errors import DataError, NumericError

CONJOINT_VISUALS = ("no", "line", "bar", "polar", "shap")
TASK_VISUALS = ("shap", "line", "bar", "polar", "text")
TIPS = ("CMT", "ET")
REFERENCE_VISUAL = "shap"
NONE_OPTION = "NONE"
SETS_PER_PARTICIPANT = 5
VARIANTS_PER_SET = 2

_LABELS = {"shap": "SHAP", "no": "No"}


def level_label(level: str) -> str:
    return _LABELS.get(level, level.capitalize())


@dataclass(frozen=True)
class ChoiceVariant:
    visual: str
    has_text: bool
    has_chatbot: bool
    tip: str

    def __post_init__(self):
        if self.tip not in TIPS:
            raise DataError(f"tip must be one of {TIPS}, got {self.tip!r}")


@dataclass
class ChoiceRecord:
    participant_id: str
    set_index: int
    option: ChoiceVariant | None  # None is the none-option
    chosen: bool | None = None

    @property
    def is_none(self) -> bool:
        return self.option is None


@dataclass
class TaskRecord:
    participant_id: str
    visual: str
    age: float
    edu_high: bool
    reading_time_log: float
    answer_time_log: float
    mem_right: int
    mem_dontknow: int
    mental_effort: int
    school_grade: int

    def __post_init__(self):
        checks = (
            ("mem_right", self.mem_right, 0, 3),
            ("mem_dontknow", self.mem_dontknow, 0, 3),
            ("mental_effort", self.mental_effort, 1, 7),
            ("school_grade", self.school_grade, 1, 6),
        )
        for name, v, lo, hi in checks:
            if not lo <= v <= hi:
                raise DataError(f"{name}={v} outside [{lo}, {hi}]")
        if not self.age > 0:
            raise DataError(f"age must be positive, got {self.age}")


TASK_OUTCOMES = ("reading_time_log", "answer_time_log", "mem_right", "mem_dontknow", "mental_effort", "school_grade")


@dataclass
class FitResult:
    names: list
    params: np.ndarray
    bse: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    n: int
    kind: str
    odds_ratios: np.ndarray | None = None
    llf: float | None = None
    aic: float | None = None
    bic: float | None = None
    deviance: float | None = None
    r2: float | None = None
    r2_adj: float | None = None
    cov_type: str | None = None
    n_iter: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.params)

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])


def all_variants(visuals: Sequence[str] = CONJOINT_VISUALS) -> list[ChoiceVariant]:
    """Full-profile design: every combination of the four stimuli."""
    return [
        ChoiceVariant(v, text, chat, tip)
        for v, text, chat, tip in itertools.product(visuals, (True, False), (True, False), TIPS)
    ]


def generate_choice_sets(n_participants: int, seed: int = 0, visuals: Sequence[str] = CONJOINT_VISUALS) -> list[ChoiceRecord]:
    """Five sets per participant, each two distinct random variants plus the none option."""
    if n_participants < 1:
        raise DataError("need at least one participant")
    variants = all_variants(visuals)
    rng = np.random.default_rng(seed)
    width = len(str(n_participants))
    out = []
    for p in range(n_participants):
        pid = f"P{p + 1:0{width}d}"
        for s in range(1, SETS_PER_PARTICIPANT + 1):
            for i in rng.choice(len(variants), size=VARIANTS_PER_SET, replace=False):
                out.append(ChoiceRecord(pid, s, variants[int(i)]))
            out.append(ChoiceRecord(pid, s, None))
    return out


def encode_factor(values: Sequence[str], levels: Sequence[str], reference: str, scheme: str) -> np.ndarray:
    """L-1 columns for a categorical; the reference row is all 0 (dummy) or all -1 (effect)."""
    if reference not in levels:
        raise DataError(f"reference level {reference!r} not among {list(levels)}")
    if scheme not in ("dummy", "effect"):
        raise DataError(f"unknown encoding scheme {scheme!r}")
    others = [lv for lv in levels if lv != reference]
    out = np.zeros((len(values), len(others)))
    for r, v in enumerate(values):
        if v not in levels:
            raise DataError(f"unseen level {v!r}; known levels are {list(levels)}")
        if v == reference:
            if scheme == "effect":
                out[r, :] = -1.0
        else:
            out[r, others.index(v)] = 1.0
    return out


def encode_design(
    records: Sequence[ChoiceRecord],
    scheme: str = "effect",
    reference: str = REFERENCE_VISUAL,
    visuals: Sequence[str] = CONJOINT_VISUALS,
    intercept: bool = False,
) -> tuple[np.ndarray, list[str]]:
    """Design matrix for the conjoint logit.

    Columns: visual levels other than ``reference``, then ``Text_No``,
    ``Chatbot_No``, ``Tip_CM`` and the 0/1 ``None`` indicator. Two-level
    stimuli are single columns coded +1/-1 (effect) or 1/0 (dummy) for the
    named level. Stimulus columns are 0 on none-option rows.
    """
    real = [r for r in records if not r.is_none]
    idx = [i for i, r in enumerate(records) if not r.is_none]
    vis = encode_factor([r.option.visual for r in real], visuals, reference, scheme)
    low = -1.0 if scheme == "effect" else 0.0
    binary = np.array(
        [
            [1.0 if not r.option.has_text else low,
             1.0 if not r.option.has_chatbot else low,
             1.0 if r.option.tip == "CMT" else low]
            for r in real
        ]
    ).reshape(len(real), 3)
    n = len(records)
    stim = np.zeros((n, vis.shape[1] + 3))
    stim[idx] = np.hstack([vis, binary])
    none = np.array([[1.0 if r.is_none else 0.0] for r in records]).reshape(n, 1)
    names = [f"Visual{level_label(v)}" for v in visuals if v != reference] + ["Text_No", "Chatbot_No", "Tip_CM", "None"]
    X = np.hstack([stim, none])
    if intercept:
        X = np.hstack([np.ones((n, 1)), X])
        names = ["(Intercept)"] + names
    return X, names


def task_design(
    tasks: Sequence[TaskRecord],
    reference: str = REFERENCE_VISUAL,
    visuals: Sequence[str] = TASK_VISUALS,
    scheme: str = "dummy",
) -> tuple[np.ndarray, list[str]]:
    """``(Intercept)``, visual contrasts, ``Age`` and ``EduHIGH`` for the OLS models."""
    vis = encode_factor([t.visual for t in tasks], visuals, reference, scheme)
    n = len(tasks)
    X = np.hstack([
        np.ones((n, 1)),
        vis,
        np.array([[t.age, 1.0 if t.edu_high else 0.0] for t in tasks]).reshape(n, 2),
    ])
    names = ["(Intercept)"] + [f"Visual{level_label(v)}" for v in visuals if v != reference] + ["Age", "EduHIGH"]
    return X, names


def odds_ratios(params) -> np.ndarray:
    return np.exp(np.asarray(params, dtype=np.float64))


def information_criteria(llf: float, k: int, n: int) -> dict[str, float]:
    """AIC, BIC and deviance (-2 LL, without the saturated-model constant)."""
    return {"aic": 2 * k - 2 * llf, "bic": k * math.log(n) - 2 * llf, "deviance": -2 * llf}


def derive_reference_effect(estimates: Iterable[float]) -> tuple[float, float]:
    """Effect-coded reference level: minus the sum of the other levels, and its odds ratio."""
    beta = -math.fsum(float(e) for e in estimates)
    beta = beta + 0.0  # normalise -0.0
    return beta, math.exp(beta)


def _loglik(X, y, beta):
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logit(X, y, names: Sequence[str] | None = None, max_iter: int = 100, tol: float = 1e-8) -> FitResult:
    """Binary logit by Newton-Raphson with step halving.

    Stops when the gradient norm drops below ``tol`` or the relative change
    in log-likelihood falls below 1e-10. Standard errors come from the
    inverse observed information.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if y.size != n:
        raise DataError("design and outcome lengths differ")
    if not n > k:
        raise DataError(f"need more rows ({n}) than coefficients ({k})")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("logit outcome must be 0/1")
    beta = np.zeros(k)
    ll = _loglik(X, y, beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = 1.0 / (1.0 + np.exp(-(X @ beta)))
        grad = X.T @ (y - p)
        if np.linalg.norm(grad) < tol:
            converged = True
            break
        info = (X * (p * (1 - p))[:, None]).T @ X
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise NumericError("singular information matrix") from None
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _loglik(X, y, cand)
            if ll_new >= ll or t < 1e-10:
                break
            t /= 2
        beta, ll_old, ll = cand, ll, ll_new
        if abs(ll - ll_old) <= 1e-10 * abs(ll_old):
            converged = True
            break
    big = np.abs(beta) > 20
    if big.any():
        j = int(np.argmax(np.abs(beta)))
        raise NumericError(f"perfect separation detected on column {names[j]!r} (|beta| diverging)")
    if not converged:
        raise NumericError(f"logit did not converge in {max_iter} iterations")
    p = 1.0 / (1.0 + np.exp(-(X @ beta)))
    info = (X * (p * (1 - p))[:, None]).T @ X
    if np.linalg.cond(info) > 1e13:
        raise NumericError("singular information matrix")
    cov = np.linalg.inv(info)
    bse = np.sqrt(np.diag(cov))
    z = beta / bse
    ic = information_criteria(ll, k, n)
    return FitResult(
        names=names,
        params=beta,
        bse=bse,
        tvalues=z,
        pvalues=2 * stats.norm.sf(np.abs(z)),
        n=n,
        kind="logit",
        odds_ratios=odds_ratios(beta),
        llf=ll,
        cov_type="observed-information",
        n_iter=it,
        **ic,
    )


def collinear_columns(X, names: Sequence[str]) -> list[str]:
    """Columns that add no rank when scanned left to right."""
    bad, kept = [], []
    rank = 0
    for j in range(X.shape[1]):
        r = np.linalg.matrix_rank(X[:, kept + [j]])
        if r > rank:
            kept.append(j)
            rank = r
        else:
            bad.append(names[j])
    return bad


def sandwich_cov(X, resid, cov_type: str = "HC0") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    e2 = np.asarray(resid) ** 2
    if cov_type == "HC0":
        omega = e2
    elif cov_type == "HC1":
        omega = e2 * n / (n - k)
    elif cov_type == "HC3":
        h = np.einsum("ij,jk,ik->i", X, bread, X)
        omega = e2 / (1.0 - h) ** 2
    else:
        raise DataError(f"unknown covariance type {cov_type!r}")
    meat = (X * omega[:, None]).T @ X
    return bread @ meat @ bread


def fit_ols_robust(X, y, names: Sequence[str] | None = None, cov_type: str = "HC0") -> FitResult:
    """Least squares with heteroskedasticity-consistent standard errors."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if y.size != n:
        raise DataError("design and outcome lengths differ")
    if not n > k:
        raise DataError(f"need more rows ({n}) than coefficients ({k})")
    if np.linalg.matrix_rank(X) < k:
        raise NumericError(f"design is rank deficient; collinear columns: {collinear_columns(X, names)}")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    cov = sandwich_cov(X, resid, cov_type)
    bse = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(bse > 0, beta / np.where(bse > 0, bse, 1.0), np.where(beta == 0, 0.0, np.inf) * np.sign(beta))
    df = n - k
    has_const = bool(np.any(np.all(X == 1.0, axis=0)))
    rss = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2)) if has_const else float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    dof_model = k - 1 if has_const else k
    r2_adj = 1.0 - (1.0 - r2) * (n - 1 if has_const else n) / df if dof_model > 0 else r2
    if has_const and k == 1:
        r2, r2_adj = 0.0, 0.0
    return FitResult(
        names=names,
        params=beta,
        bse=bse,
        tvalues=t,
        pvalues=2 * stats.t.sf(np.abs(t), df),
        n=n,
        kind="ols",
        r2=r2,
        r2_adj=r2_adj,
        cov_type=cov_type,
    )


# CSV formats ---------------------------------------------------------------

CHOICE_HEADER = ["participant_id", "set_index", "visual", "has_text", "has_chatbot", "tip", "chosen"]
TASK_HEADER = [
    "participant_id", "visual", "age", "edu_high", "reading_time_log", "answer_time_log",
    "mem_right", "mem_dontknow", "mental_effort", "school_grade",
]


def _bool(s: str, where: str) -> bool:
    if s in ("1", "true", "True"):
        return True
    if s in ("0", "false", "False"):
        return False
    raise DataError(f"{where}: expected 0/1, got {s!r}")


def write_choices(records: Sequence[ChoiceRecord], stream: TextIO) -> None:
    """``visual`` is ``NONE`` (other stimulus cells empty) for the none option."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CHOICE_HEADER)
    for r in records:
        chosen = "" if r.chosen is None else int(bool(r.chosen))
        if r.is_none:
            w.writerow([r.participant_id, r.set_index, NONE_OPTION, "", "", "", chosen])
        else:
            o = r.option
            w.writerow([r.participant_id, r.set_index, o.visual, int(o.has_text), int(o.has_chatbot), o.tip, chosen])


def read_choices(stream: TextIO, require_chosen: bool = True) -> list[ChoiceRecord]:
    reader = csv.reader(stream)
    if next(reader, None) != CHOICE_HEADER:
        raise DataError(f"line 1: expected header {','.join(CHOICE_HEADER)}")
    out = []
    for row in reader:
        if not row:
            continue
        where = f"line {reader.line_num}"
        if len(row) != len(CHOICE_HEADER):
            raise DataError(f"{where}: expected {len(CHOICE_HEADER)} fields")
        pid, set_s, visual, text, chat, tip, chosen = row
        try:
            set_index = int(set_s)
        except ValueError:
            raise DataError(f"{where}: bad set_index {set_s!r}") from None
        option = None if visual == NONE_OPTION else ChoiceVariant(visual, _bool(text, where), _bool(chat, where), tip)
        if chosen == "":
            if require_chosen:
                raise DataError(f"{where}: chosen is empty")
            ch = None
        else:
            ch = _bool(chosen, where)
        out.append(ChoiceRecord(pid, set_index, option, ch))
    if require_chosen:
        check_choice_sets(out)
    return out


def check_choice_sets(records: Sequence[ChoiceRecord]) -> None:
    """Every (participant, set) has 2 variants plus the none option and exactly one choice."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.participant_id, r.set_index), []).append(r)
    for key, rs in groups.items():
        if len(rs) != VARIANTS_PER_SET + 1 or sum(r.is_none for r in rs) != 1:
            raise DataError(f"choice set {key} must hold {VARIANTS_PER_SET} variants and one none option")
        if sum(bool(r.chosen) for r in rs) != 1:
            raise DataError(f"choice set {key} must have exactly one chosen option")


def write_tasks(tasks: Sequence[TaskRecord], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TASK_HEADER)
    for t in tasks:
        w.writerow([t.participant_id, t.visual, repr(float(t.age)), int(t.edu_high), repr(float(t.reading_time_log)),
                    repr(float(t.answer_time_log)), t.mem_right, t.mem_dontknow, t.mental_effort, t.school_grade])


def read_tasks(stream: TextIO) -> list[TaskRecord]:
    reader = csv.reader(stream)
    if next(reader, None) != TASK_HEADER:
        raise DataError(f"line 1: expected header {','.join(TASK_HEADER)}")
    out = []
    for row in reader:
        if not row:
            continue
        where = f"line {reader.line_num}"
        if len(row) != len(TASK_HEADER):
            raise DataError(f"{where}: expected {len(TASK_HEADER)} fields")
        try:
            out.append(TaskRecord(
                row[0], row[1], float(row[2]), _bool(row[3], where), float(row[4]), float(row[5]),
                int(row[6]), int(row[7]), int(row[8]), int(row[9]),
            ))
        except ValueError as exc:
            raise DataError(f"{where}: {exc}") from None
    return out


def write_coef_csv(fit: FitResult, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    header = ["term", "estimate", "std_error", "z_value" if fit.kind == "logit" else "t_value", "p_value"]
    if fit.odds_ratios is not None:
        header.append("odds_ratio")
    w.writerow(header)
    for j, name in enumerate(fit.names):
        row = [name, f"{fit.params[j]:.6f}", f"{fit.bse[j]:.6f}", f"{fit.tvalues[j]:.4f}", f"{fit.pvalues[j]:.6g}"]
        if fit.odds_ratios is not None:
            row.append(f"{fit.odds_ratios[j]:.6f}")
        w.writerow(row)


def _stars(p: float) -> str:
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""


def format_table(fit: FitResult, reference: tuple[str, float] | None = None) -> str:
    """Aligned plain-text coefficient table with fit statistics underneath.

    ``reference`` adds a row holding only an odds ratio (an effect-coded
    reference level derived from the others).
    """
    lines = []
    if fit.kind == "logit":
        lines.append(f"{'':<14}{'Estimate':>10}{'Std. Error':>12}{'z-value':>10}{'p-value':>14}{'Odds ratio':>12}")
        for j, name in enumerate(fit.names):
            p = fit.pvalues[j]
            ptxt = ("<0.001" if p < 0.001 else f"{p:.3f}") + (" " + _stars(p) if _stars(p) else "")
            lines.append(
                f"{name:<14}{fit.params[j]:>10.2f}{'(' + format(fit.bse[j], '.2f') + ')':>12}"
                f"{fit.tvalues[j]:>10.3f}{ptxt:>14}{fit.odds_ratios[j]:>12.2f}"
            )
        if reference is not None:
            lines.append(f"{reference[0]:<14}{'':>10}{'':>12}{'':>10}{'':>14}{reference[1]:>12.2f}")
        lines += [
            f"{'AIC':<14}{fit.aic:>10.2f}",
            f"{'BIC':<14}{fit.bic:>10.2f}",
            f"{'Log Likelihood':<14}{fit.llf:>10.2f}",
            f"{'Deviance':<14}{fit.deviance:>10.2f}",
            f"{'Num. obs.':<14}{fit.n:>10d}",
        ]
    else:
        lines.append(f"{'':<14}{'Estimate':>18}")
        for j, name in enumerate(fit.names):
            cell = f"{fit.params[j]:.2f}{_stars(fit.pvalues[j])} ({fit.bse[j]:.2f})"
            lines.append(f"{name:<14}{cell:>18}")
        lines += [
            f"{'R^2':<14}{fit.r2:>18.2f}",
            f"{'Adj. R^2':<14}{fit.r2_adj:>18.2f}",
            f"{'Num. obs.':<14}{fit.n:>18d}",
        ]
    return "\n".join(lines) + "\n"
