"""Evidence estimators: the direct product estimator, path sampling with
Newton-Cotes quadrature on refined grids, and model probability summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .particles import DegenerateWeightsError, log_sum_exp, normalize_log_weights
from .tempering import GeometricPath

# closed Newton-Cotes weights on k subintervals, scaled so that the panel
# integral is (panel width) * dot(weights, values) / k
NEWTON_COTES = {
    "trapezoid": (1, np.array([1.0, 1.0]) / 2.0),
    "simpson": (2, np.array([1.0, 4.0, 1.0]) / 6.0 * 2),
    "simpson38": (3, np.array([1.0, 3.0, 3.0, 1.0]) / 8.0 * 3),
    "boole": (4, np.array([7.0, 32.0, 12.0, 32.0, 7.0]) / 90.0 * 4),
}


@dataclass
class EvidenceAccumulator:
    """Running log of the direct (product) estimator of a normalizing-constant ratio."""

    increments: list = field(default_factory=list)

    @property
    def log_ratio(self) -> float:
        return float(np.sum(self.increments)) if self.increments else 0.0


def accumulate_direct(acc: EvidenceAccumulator, log_W_prev, log_w_inc) -> float:
    """Append ``log sum_i W_prev_i * w_inc_i`` to ``acc`` and return it.

    ``log_W_prev`` are normalized log weights, ``log_w_inc`` the log incremental
    weights computed at the states before mutation.
    """
    a = np.asarray(log_W_prev, dtype=float) + np.asarray(log_w_inc, dtype=float)
    inc = log_sum_exp(a)
    if not np.isfinite(inc):
        raise DegenerateWeightsError("degenerate weights: direct estimator increment is not finite")
    acc.increments.append(inc)
    return inc


@dataclass
class PathSampleTrace:
    """Samples retained for path sampling.

    ``alphas[t]`` and ``U[t]`` for ``t = 0..T``.  Snapshot ``t`` (for
    ``t >= 1``) holds the normalized log weights entering iteration ``t`` and
    the per-particle path values at the states being reweighted, so that any
    ``a`` in ``(alphas[t-1], alphas[t]]`` can be re-expected by importance
    weighting from ``alphas[t-1]``.
    """

    path: object = field(default_factory=GeometricPath)
    alphas: list = field(default_factory=list)
    U: list = field(default_factory=list)
    log_W: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def record(self, a_prev: float, a_next: float, log_W_prev, value):
        """Store a snapshot for the step ``a_prev -> a_next`` and return ``U`` at ``a_next``."""
        log_W_prev = np.asarray(log_W_prev, dtype=float).copy()
        value = np.asarray(value, dtype=float).copy()
        if not self.alphas:
            self.alphas.append(float(a_prev))
            self.U.append(_tilted_mean(self.path, log_W_prev, value, a_prev, a_prev))
        self.alphas.append(float(a_next))
        self.log_W.append(log_W_prev)
        self.values.append(value)
        self.U.append(_tilted_mean(self.path, log_W_prev, value, a_prev, a_next))
        return self.U[-1]

    @property
    def T(self) -> int:
        return max(len(self.alphas) - 1, 0)


def _tilted_mean(path, log_W, value, a0, a):
    lw = log_W + path.log_inc_from_value(value, a0, a)
    lw, _ = normalize_log_weights(lw)
    xi = path.derivative_from_value(value, a)
    w = np.exp(lw)
    keep = w > 0
    return float(np.sum(w[keep] * xi[keep]))


def path_expectation_at(trace: PathSampleTrace, alpha: float) -> float:
    """Importance-sampling estimate of ``E_alpha[d log q / d alpha]``.

    Knots return the recorded ``U`` values exactly.  Inside the panel
    ``(alphas[t-1], alphas[t])`` the snapshot of iteration ``t`` is
    reweighted from ``alphas[t-1]``.
    """
    if trace.T == 0:
        raise ValueError("empty path sampling trace")
    alphas = trace.alphas
    if not alphas[0] <= alpha <= alphas[-1]:
        raise ValueError(f"alpha {alpha} outside [{alphas[0]}, {alphas[-1]}]")
    t = int(np.searchsorted(alphas, alpha, side="left"))
    if alphas[t] == alpha:
        return trace.U[t]
    return _tilted_mean(trace.path, trace.log_W[t - 1], trace.values[t - 1],
                        alphas[t - 1], alpha)


@dataclass(frozen=True)
class QuadratureRule:
    kind: str = "trapezoid"
    refinement: int = 1

    def __post_init__(self):
        if self.kind not in NEWTON_COTES:
            raise ValueError(f"unknown quadrature rule {self.kind!r}")
        if int(self.refinement) < 1:
            raise ValueError("refinement must be >= 1")

    @property
    def label(self) -> str:
        return f"{self.kind}x{self.refinement}"


def newton_cotes(values: np.ndarray, width: float, kind: str) -> tuple[float, bool]:
    """Composite closed Newton-Cotes integral of equally spaced ``values``.

    ``width`` is the length of the whole interval.  If the number of
    subintervals is not a multiple of the rule's panel size the remainder is
    integrated with the trapezoid rule and the second return value is True.
    """
    values = np.asarray(values, dtype=float)
    n = values.size - 1
    if n < 1:
        return 0.0, False
    h = width / n
    k, w = NEWTON_COTES[kind]
    m = (n // k) * k
    total = 0.0
    for s in range(0, m, k):
        total += h * float(np.dot(w, values[s:s + k + 1]))
    fallback = m < n
    for s in range(m, n):
        total += 0.5 * h * (values[s] + values[s + 1])
    return total, fallback


def _refined(alphas, U, interior, rule: QuadratureRule, diagnostics):
    a = alphas
    if rule.kind == "trapezoid" and rule.refinement == 1:
        return float(sum(0.5 * (a[t] - a[t - 1]) * (U[t] + U[t - 1])
                         for t in range(1, len(a))))
    k, _ = NEWTON_COTES[rule.kind]
    m = k * int(rule.refinement)
    total = 0.0
    fallback = False
    for t in range(1, len(a)):
        lo, hi = a[t - 1], a[t]
        nodes = lo + (hi - lo) * np.arange(m + 1) / m
        vals = np.empty(m + 1)
        vals[0], vals[-1] = U[t - 1], U[t]
        vals[1:-1] = interior(t, nodes[1:-1])
        part, fb = newton_cotes(vals, hi - lo, rule.kind)
        total += part
        fallback |= fb
    if diagnostics is not None:
        diagnostics["quadrature_fallback"] = bool(fallback)
    return float(total)


def integrate_path(trace: PathSampleTrace, rule: QuadratureRule | None = None,
                   diagnostics: dict | None = None) -> float:
    """Path-sampling estimate of the log normalizing-constant ratio.

    The trapezoid rule at refinement 1 is the classical estimator
    ``sum 0.5 * (a_t - a_{t-1}) * (U_t + U_{t-1})``.  Otherwise each sampled
    panel is split into ``refinement * k`` equal subintervals (``k`` the rule's
    panel size) and the rule is applied to re-expectations at those nodes.
    """
    rule = rule or QuadratureRule()
    if trace.T == 0:
        raise ValueError("empty path sampling trace")

    def interior(t, nodes):
        lo = trace.alphas[t - 1]
        return [_tilted_mean(trace.path, trace.log_W[t - 1], trace.values[t - 1], lo, x)
                for x in nodes]

    return _refined(trace.alphas, trace.U, interior, rule, diagnostics)


def integrate_function(func, alphas, rule: QuadratureRule | None = None,
                       diagnostics: dict | None = None) -> float:
    """Same grid construction as :func:`integrate_path` for a known curve ``func``."""
    rule = rule or QuadratureRule()
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size < 2:
        raise ValueError("need at least two knots")
    U = [float(func(x)) for x in alphas]
    return _refined(list(alphas), U, lambda t, nodes: [func(x) for x in nodes], rule,
                    diagnostics)


@dataclass
class EvidenceEstimate:
    estimator: str
    log_evidence: float
    realized_T: int
    diagnostics: dict = field(default_factory=dict)


def model_posteriors(log_evidences: dict, log_priors: dict | None = None) -> dict:
    """Posterior model probabilities from log evidences and log prior masses."""
    if not log_evidences:
        raise ValueError("no models given")
    keys = list(log_evidences)
    if log_priors is None:
        log_priors = {k: -np.log(len(keys)) for k in keys}
    s = np.array([log_evidences[k] + log_priors[k] for k in keys], dtype=float)
    lw, _ = normalize_log_weights(s)
    return {k: float(np.exp(v)) for k, v in zip(keys, lw)}


def bayes_factor(log_evidence_a: float, log_evidence_b: float) -> float:
    """Log Bayes factor of model ``a`` against model ``b``."""
    if not (np.isfinite(log_evidence_a) and np.isfinite(log_evidence_b)):
        raise ValueError("log evidences must be finite")
    return float(log_evidence_a - log_evidence_b)
