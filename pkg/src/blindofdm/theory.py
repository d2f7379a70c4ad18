"""Numerical checks of the probabilistic statements behind the estimator.

Every ``check_*`` function returns a :class:`BoundCheckReport`. Verdicts are
mechanical: an inequality holds unless the Monte Carlo estimate lies beyond
the bound by more than three standard errors (plus a tiny floating point
allowance for exact identities).
"""

import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from ._util import derive_rng
from .channel import BemVarianceTable, bem_variances, build_matrices, sample_bem
from .ofdm import OfdmConfig

HOLDS = "holds"
VIOLATED = "violated-beyond-3sigma"
NOT_APPLICABLE = "not-applicable"
KINDS = ("upper", "lower", "equal", "range")


def verdict(estimate, stderr, bound, kind, atol=0.0, upper=None) -> str:
    """Classify one point.

    ``upper``: the claim is ``E <= bound``; ``lower``: ``E >= bound``;
    ``equal``: ``E == bound``; ``range``: ``bound <= E <= upper``.
    """
    if estimate is None or bound is None or not np.isfinite(estimate):
        return NOT_APPLICABLE
    slack = 3.0 * stderr + atol
    if kind == "upper":
        ok = estimate <= bound + slack
    elif kind == "lower":
        ok = estimate >= bound - slack
    elif kind == "equal":
        ok = abs(estimate - bound) <= slack
    elif kind == "range":
        ok = bound - slack <= estimate <= upper + slack
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return HOLDS if ok else VIOLATED


@dataclass
class BoundCheckReport:
    """Outcome of one claim. ``points`` holds per-parameter results; the
    top-level numbers are those of the point with the smallest margin."""

    claim_id: str
    estimate: float
    stderr: float
    bound: float
    kind: str
    verdict: str
    n_samples: int
    seed: int
    points: list = field(default_factory=list)
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_dict(self) -> dict:
        return asdict(self)


def _point(params, estimate, stderr, bound, kind, atol=0.0, upper=None, **extra):
    p = {
        "params": params,
        "estimate": float(estimate),
        "stderr": float(stderr),
        "bound": float(bound),
        "kind": kind,
        "verdict": verdict(estimate, stderr, bound, kind, atol, upper),
    }
    if upper is not None:
        p["upper"] = float(upper)
    p.update(extra)
    return p


def _margin(p):
    est, se, b = p["estimate"], max(p["stderr"], 1e-300), p["bound"]
    if p["kind"] == "upper":
        return (b - est) / se
    if p["kind"] == "lower":
        return (est - b) / se
    if p["kind"] == "range":
        return min(est - b, p["upper"] - est) / se
    return -abs(est - b) / se


def _report(claim_id, points, n_samples, seed, note="") -> BoundCheckReport:
    if not points:
        return BoundCheckReport(claim_id, float("nan"), 0.0, float("nan"), "upper", NOT_APPLICABLE, 0, seed, [], note)
    verdicts = {p["verdict"] for p in points}
    if VIOLATED in verdicts:
        top = VIOLATED
    elif verdicts == {NOT_APPLICABLE}:
        top = NOT_APPLICABLE
    else:
        top = HOLDS
    worst = min(points, key=_margin)
    return BoundCheckReport(
        claim_id, worst["estimate"], worst["stderr"], worst["bound"], worst["kind"],
        top, int(n_samples), int(seed), points, note,
    )


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(values.mean()), se


# --------------------------------------------------------------------------
# channel energy


def label_energies(cfg: OfdmConfig, trials: int, seed: int, table: BemVarianceTable = None,
                   chunk: int = 1000) -> np.ndarray:
    """Squared Frobenius norm of the frequency-domain channel for ``trials``
    independent symbols (equal to the squared label norm)."""
    table = bem_variances(cfg) if table is None else table
    out = np.empty(trials)
    for a in range(0, trials, chunk):
        b = min(a + chunk, trials)
        rng = derive_rng(seed, 11, a)
        real = sample_bem(cfg, table, np.arange(a, b), rng)
        h = build_matrices(real).freq
        out[a:b] = np.sum(h.real**2 + h.imag**2, axis=(-2, -1))
    return out


def check_label_energy(cfg: OfdmConfig, trials: int = 10_000, seed: int = 0,
                       table: BemVarianceTable = None) -> BoundCheckReport:
    """Mean squared label norm against the subcarrier count."""
    if trials < 1000:
        raise ValueError("label energy check needs at least 1000 trials")
    e = label_energies(cfg, trials, seed, table)
    mean, se = _mean_se(e)
    n = cfg.num_subcarriers
    pt = _point({"N": n}, mean, se, n, "equal", relative_error=abs(mean - n) / n)
    return _report("label-energy", [pt], trials, seed)


def check_parseval(cfg: OfdmConfig, trials: int = 100, seed: int = 0, tol: float = 1e-10) -> BoundCheckReport:
    """Frobenius norms of the time- and frequency-domain matrices agree per realization."""
    table = bem_variances(cfg)
    real = sample_bem(cfg, table, np.arange(trials), derive_rng(seed, 12))
    mats = build_matrices(real)
    tn = np.linalg.norm(mats.time, axis=(-2, -1))
    f = np.linalg.norm(mats.freq, axis=(-2, -1))
    worst = float(np.max(np.abs(tn - f)))
    pt = _point({"N": cfg.num_subcarriers}, worst, 0.0, 0.0, "equal", atol=tol)
    return _report("frobenius-parseval", [pt], trials, seed)


def small_label_probability_bound(channel_order: int, bem_order: int) -> float:
    """``2^(-2L(Q+1)) * (1 + erf(1/sqrt(2(Q+1))))``."""
    q1 = bem_order + 1
    return 2.0 ** (-2 * channel_order * q1) * (1.0 + math.erf(1.0 / math.sqrt(2.0 * q1)))


def check_small_label_probability(cfg: OfdmConfig, trials: int = 10_000, seed: int = 0,
                   table: BemVarianceTable = None) -> BoundCheckReport:
    """Probability that the label norm does not exceed ``sqrt(N)``."""
    table = bem_variances(cfg) if table is None else table
    e = label_energies(cfg, trials, seed, table)
    hits = (e <= cfg.num_subcarriers).astype(float)
    p, se = _mean_se(hits)
    bound = small_label_probability_bound(table.channel_order, table.bem_order)
    pt = _point({"L": table.channel_order, "Q": table.bem_order}, p, se, bound, "lower")
    return _report("small-label-probability", [pt], trials, seed)


# --------------------------------------------------------------------------
# testing MSE against subcarrier count


def check_mse_scaling(results: dict, rel_tol: float = 0.10, flat_ratio: float = 1.05,
                      ratio_range=(0.45, 0.55)) -> BoundCheckReport:
    """``results`` maps ``N`` to ``{snr_db: mse}``.

    Checks closeness to ``1/(2N)`` at every SNR, the max/min spread across
    SNRs and, at each shared SNR, the ratio of MSEs for each doubling of ``N``.
    """
    points = []
    means = {}
    for n in sorted(results):
        vals = np.array(list(results[n].values()), dtype=float)
        target = 1.0 / (2 * n)
        for snr, v in sorted(results[n].items()):
            points.append(_point({"check": "level", "N": n, "snr_db": snr}, v, 0.0,
                                 target * (1 - rel_tol), "range", upper=target * (1 + rel_tol)))
        points.append(_point({"check": "flatness", "N": n}, vals.max() / vals.min(), 0.0, flat_ratio, "upper"))
        means[n] = float(vals.mean())
    for n in sorted(means):
        if 2 * n not in means:
            continue
        shared = sorted(set(results[n]) & set(results[2 * n]))
        for snr in shared:
            points.append(_point({"check": "halving", "N": n, "N2": 2 * n, "snr_db": snr},
                                 results[2 * n][snr] / results[n][snr], 0.0,
                                 ratio_range[0], "range", upper=ratio_range[1]))
    return _report("mse-scaling", points, sum(len(v) for v in results.values()), 0)


# --------------------------------------------------------------------------
# random matrices


def check_gordon(n_rows: int, n_cols: int, trials: int = 500, seed: int = 0) -> BoundCheckReport:
    """Mean extreme singular values of standard Gaussian matrices against
    ``sqrt(rows) -+ sqrt(cols)``."""
    if n_rows < n_cols:
        raise ValueError("need n_rows >= n_cols")
    rng = derive_rng(seed, 21)
    smin = np.empty(trials)
    smax = np.empty(trials)
    for k in range(trials):
        s = np.linalg.svd(rng.standard_normal((n_rows, n_cols)), compute_uv=False)
        smin[k], smax[k] = s[-1], s[0]
    lo = math.sqrt(n_rows) - math.sqrt(n_cols)
    hi = math.sqrt(n_rows) + math.sqrt(n_cols)
    params = {"rows": n_rows, "cols": n_cols}
    points = [
        _point(dict(params, side="min"), *_mean_se(smin), lo, "lower"),
        _point(dict(params, side="max"), *_mean_se(smax), hi, "upper"),
    ]
    return _report("gordon", points, trials, seed)


def half_normal_moment(k: float) -> float:
    """``E|g|^k`` for a standard normal ``g``."""
    return 2.0 ** (k / 2) * math.gamma((k + 1) / 2) / math.sqrt(math.pi)


DISTRIBUTIONS = {
    # name: (sampler(rng, n), moment(k))
    "abs_normal": (lambda rng, n: np.abs(rng.standard_normal(n)), half_normal_moment),
    "constant": (lambda rng, n: np.ones(n), lambda k: 1.0),
    "rayleigh": (
        lambda rng, n: np.abs(rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0),
        lambda k: math.gamma(1 + k / 2),
    ),
}


def paley_zygmund_bound(threshold: float, p: float, second_moment: float, moment_2p: float) -> float:
    """``(E f^2 - threshold^2)^q / (E f^{2p})^{q/p}`` with ``q = p/(p-1)``."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    if threshold < 0 or threshold * threshold > second_moment * (1 + 1e-12):
        raise ValueError("lambda must lie in [0, sqrt(E f^2)]")
    q = p / (p - 1)
    return max(second_moment - threshold * threshold, 0.0) ** q / moment_2p ** (q / p)


def check_paley_zygmund(distribution: str = "abs_normal", thresholds=(0.0, 0.25, 0.5, 0.75, 1.0), p: float = 2.0,
                        trials: int = 100_000, seed: int = 0) -> BoundCheckReport:
    """Empirical ``P(f > lambda)`` against the Paley-Zygmund lower bound."""
    sampler, moment = DISTRIBUTIONS[distribution]
    f = sampler(derive_rng(seed, 22), trials)
    m2, m2p = moment(2), moment(2 * p)
    points = []
    for threshold in thresholds:
        threshold = min(float(threshold), math.sqrt(m2))
        prob, se = _mean_se((f > threshold).astype(float))
        points.append(_point({"distribution": distribution, "threshold": threshold, "p": p}, prob, se,
                             paley_zygmund_bound(threshold, p, m2, m2p), "lower", atol=1e-12))
    return _report("paley-zygmund", points, trials, seed)


# --------------------------------------------------------------------------
# Gaussian norm concentration


def expected_norm(variances) -> float:
    """Exact ``E||x||`` for independent ``x_i ~ N(0, variances[i])``.

    Uses ``sqrt(a) = pi^(-1/2) * int_0^inf (1 - exp(-a u^2)) / u^2 du`` and the
    Gaussian Laplace transform, leaving a smooth one-dimensional integral.
    """
    v = np.asarray(variances, dtype=float)
    if np.any(v < 0):
        raise ValueError("variances must be nonnegative")
    if not np.any(v > 0):
        return 0.0

    def integrand(u):
        if u == 0.0:
            return float(v.sum())
        return -math.expm1(-0.5 * float(np.sum(np.log1p(2.0 * v * u * u)))) / (u * u)

    scale = 1.0 / math.sqrt(v.sum())
    a, _ = integrate.quad(integrand, 0.0, scale, epsabs=0, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(integrand, scale, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return (a + b) / math.sqrt(math.pi)


def norm_tail_bound(deviation: float, variances) -> float:
    """``1 - 2^(-d) * (1 + erf(deviation / (sigma*sqrt(2))))`` with ``d = len(variances)``
    (an even count) and ``sigma^2`` the total variance."""
    v = np.asarray(variances, dtype=float)
    if v.size % 2:
        raise ValueError("need an even number of variances")
    sigma = math.sqrt(v.sum())
    return 1.0 - 2.0 ** (-v.size) * (1.0 + math.erf(deviation / (sigma * math.sqrt(2.0))))


DEFAULT_PROFILES = (
    (0.25, 0.25, 0.25, 0.25),
    (0.7, 0.1, 0.1, 0.1),
)


def check_norm_concentration(profiles=DEFAULT_PROFILES, deviations=(0.0, 0.5, 1.0, 2.0), trials: int = 100_000,
                             seed: int = 0) -> BoundCheckReport:
    """Empirical ``P(||x|| - E||x|| > deviation)`` against the upper bound for
    every (variance profile, deviation) pair."""
    points = []
    for k, prof in enumerate(profiles):
        v = np.asarray(prof, dtype=float)
        rng = derive_rng(seed, 23, k)
        norms = np.sqrt(np.sum(v * rng.standard_normal((trials, v.size)) ** 2, axis=1))
        mean_norm = expected_norm(v)
        for dev in deviations:
            prob, se = _mean_se((norms - mean_norm > dev).astype(float))
            points.append(_point({"variances": list(map(float, v)), "deviation": float(dev)}, prob, se,
                                 norm_tail_bound(dev, v), "upper", expected_norm=mean_norm))
    return _report("norm-concentration", points, trials, seed)


# --------------------------------------------------------------------------
# closed-form integral


def moment_integral(c: float) -> float:
    """``int_{-c}^inf (x + c)^3 exp(-x^2/2) dx`` in closed form."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    return (2.0 + c * c) * math.exp(-c * c / 2.0) + c * math.sqrt(math.pi / 2.0) * (
        math.erf(c / math.sqrt(2.0)) + 1.0
    ) * (3.0 + c * c)


def moment_integral_quadrature(c: float) -> float:
    """Same integral by adaptive quadrature."""
    val, _ = integrate.quad(lambda x: (x + c) ** 3 * math.exp(-x * x / 2.0), -c, np.inf,
                            epsabs=0, epsrel=1e-12, limit=200)
    return val


def check_moment_integral(c_grid=(0.1, 1.0, 2.0, 5.0, 10.0), rel_tol: float = 1e-6) -> BoundCheckReport:
    points = []
    for c in c_grid:
        closed, quad = moment_integral(c), moment_integral_quadrature(c)
        rel = abs(closed - quad) / abs(quad)
        points.append(_point({"c": float(c)}, rel, 0.0, rel_tol, "upper", closed_form=closed, quadrature=quad))
    return _report("integral-closed-form", points, len(points), 0)


# --------------------------------------------------------------------------
# square root of a sum


def check_sqrt_sum(n_tuples: int = 100_000, max_dim: int = 20, zero_prob: float = 0.3,
                   seed: int = 0) -> BoundCheckReport:
    """``sqrt(sum a) <= sum sqrt(a)`` with equality exactly when at most one
    entry is nonzero. Counts tuples that break either half of the statement."""
    rng = derive_rng(seed, 24)
    dims = rng.integers(2, max_dim + 1, size=n_tuples)
    width = int(dims.max())
    a = rng.random((n_tuples, width))
    a[rng.random((n_tuples, width)) < zero_prob] = 0.0
    a[np.arange(width)[None, :] >= dims[:, None]] = 0.0
    lhs = np.sqrt(a.sum(axis=1))
    rhs = np.sqrt(a).sum(axis=1)
    tol = 1e-12 * np.maximum(rhs, 1.0)
    nonzero = np.count_nonzero(a, axis=1)
    ineq_bad = lhs > rhs + tol
    eq_bad = np.where(nonzero <= 1, np.abs(lhs - rhs) > tol, rhs - lhs <= tol)
    points = [
        _point({"check": "inequality"}, int(ineq_bad.sum()), 0.0, 0.0, "upper"),
        _point({"check": "equality-case"}, int(eq_bad.sum()), 0.0, 0.0, "upper",
               single_support_tuples=int(np.sum(nonzero <= 1))),
    ]
    return _report("sqrt-sum", points, n_tuples, seed)


# --------------------------------------------------------------------------
# probabilistic testing-MSE lower bound


@dataclass
class MseProbabilityBound:
    applicable: bool
    value: float
    log10_value: float
    width_fraction: float
    product_fraction: float
    reason: str = ""


def level_floor(m: float, n: int) -> float:
    """Smallest admissible error level, ``(sqrt(m) + sqrt(2) N)^4``."""
    return (math.sqrt(m) + math.sqrt(2.0) * n) ** 4


def sv_product_threshold(m: float, n: int) -> float:
    """Minimum singular-value product the bound requires to exceed."""
    s = math.sqrt(m) + math.sqrt(2.0) * n
    return math.sqrt(2.0) * n * (s + math.sqrt(n) / s)


def sv_product_at_equal_fractions(m: float, n: int, level: float) -> float:
    """Singular-value product for which the two fractions of the bound coincide."""
    return math.sqrt(2.0) * n * (math.sqrt(level) + math.sqrt(n)) / (math.sqrt(m) - math.sqrt(2.0) * n)


def mse_probability_bound(m, n, level, sv_product, channel_order, bem_order, n_test) -> MseProbabilityBound:
    """Probability lower bound on the testing MSE reaching ``level / (2 N^2)``.

    The bound is built from two fractions:
    ``width_fraction = (sqrt(m) - sqrt(2) N) / (sqrt(m) + sqrt(2) N)`` and
    ``product_fraction = sqrt(2) N (sqrt(level) + sqrt(N)) / (sv_product (sqrt(m) + sqrt(2) N))``.

    Returns ``applicable=False`` with the failing condition in ``reason`` when
    ``sqrt(m)`` is not above ``sqrt(2) N`` (the width fraction would not be
    positive), ``level`` is not above :func:`level_floor`, ``sv_product`` is not
    above :func:`sv_product_threshold`, or the product fraction exceeds one.
    """
    for name, val in (("m", m), ("N", n), ("level", level), ("sv_product", sv_product), ("n_test", n_test)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    s = math.sqrt(m) + math.sqrt(2.0) * n
    wf = (math.sqrt(m) - math.sqrt(2.0) * n) / s
    pf = math.sqrt(2.0) * n * (math.sqrt(level) + math.sqrt(n)) / (sv_product * s)
    nan = float("nan")
    if not wf > 0:
        return MseProbabilityBound(False, nan, nan, wf, pf,
                                   f"width m={m:.6g} must exceed 2N^2={2 * n * n} so that the width fraction is positive")
    floor = level_floor(m, n)
    if not level > floor:
        return MseProbabilityBound(False, nan, nan, wf, pf,
                                   f"level={level:.6g} must exceed (sqrt(m)+sqrt(2)N)^4={floor:.6g}")
    threshold = sv_product_threshold(m, n)
    if not sv_product > threshold:
        return MseProbabilityBound(False, nan, nan, wf, pf,
                                   f"sv_product={sv_product:.6g} must exceed the threshold {threshold:.6g}")
    if pf > 1.0:
        return MseProbabilityBound(False, nan, nan, wf, pf, f"product fraction {pf:.6g} exceeds 1")
    q1 = bem_order + 1
    # the two fractions come from algebraically identical expressions at the
    # equality point, so a few ulps of disagreement mean equal
    gap = 0.0 if math.isclose(wf, pf, rel_tol=8 * sys.float_info.epsilon, abs_tol=0.0) else wf * wf - pf * pf
    base = gap**2 * 2.0 ** (-2 * channel_order * q1) * (1.0 + math.erf(1.0 / math.sqrt(2.0 * q1)))
    if base == 0.0:
        return MseProbabilityBound(True, 0.0, -math.inf, wf, pf)
    log10 = n_test * math.log10(base)
    return MseProbabilityBound(True, 10.0**log10 if log10 > -320 else 0.0, log10, wf, pf)


def check_mse_probability_bound(m: int = 2_000_000, n: int = 32, channel_order: int = 6, bem_order: int = 2,
                                n_test: int = 1) -> BoundCheckReport:
    """Evaluator sanity: zero where the two fractions are equal, inside [0, 1]
    on a feasible grid, and infeasible parameters flagged."""
    points = []
    floor = level_floor(m, n)
    level_eq = floor * (1 + 1e-6)
    eq = mse_probability_bound(m, n, level_eq, sv_product_at_equal_fractions(m, n, level_eq),
                               channel_order, bem_order, n_test)
    points.append(_point({"case": "equal-fractions"}, eq.value if eq.applicable else float("nan"), 0.0, 0.0,
                         "equal", atol=1e-300, width_fraction=eq.width_fraction,
                         product_fraction=eq.product_fraction))
    thr = sv_product_threshold(m, n)
    for level_mult in (1.01, 2.0, 10.0):
        for sv_mult in (1.5, 10.0, 1e3):
            r = mse_probability_bound(m, n, floor * level_mult, thr * sv_mult * level_mult,
                                      channel_order, bem_order, n_test)
            if r.applicable:
                points.append(_point({"case": "feasible", "level": floor * level_mult}, r.value, 0.0, 0.0,
                                     "range", upper=1.0, width_fraction=r.width_fraction,
                                     product_fraction=r.product_fraction))
    flagged = [
        mse_probability_bound(m, n, floor * 0.5, thr * 2, channel_order, bem_order, n_test),
        mse_probability_bound(m, n, floor * 2, thr * 0.5, channel_order, bem_order, n_test),
        mse_probability_bound(2 * n * n, n, floor * 2, thr * 2, channel_order, bem_order, n_test),
    ]
    n_flagged = sum(not r.applicable for r in flagged)
    points.append(_point({"case": "infeasible-flagged"}, n_flagged, 0.0, len(flagged), "equal"))
    return _report("mse-probability-bound", points, len(points), 0)


# --------------------------------------------------------------------------
# singular-value product of a trained network


@dataclass
class SingularProductTelemetry:
    products: list
    minimum: float
    threshold: float
    exceeds_threshold: bool
    inactive_units: list


def singular_product(net, x) -> tuple:
    """Product over layers of the smallest singular value of each masked
    weight matrix for input ``x``; also returns the inactive-unit count per layer."""
    from .nn import forward

    _, cache = forward(net, np.asarray(x, dtype=float))
    prod = 1.0
    inactive = []
    for w, mask in zip(net.weights[:-1], cache.masks):
        masked = mask[0][:, None] * np.asarray(w, dtype=float)
        # a square masked matrix is singular as soon as one unit is off
        prod *= float(np.linalg.svd(masked, compute_uv=False)[-1])
        inactive.append(int(mask.size - mask.sum()))
    return prod, inactive


def measure_singular_product(net, x_batch, num_subcarriers: int) -> SingularProductTelemetry:
    x_batch = np.atleast_2d(x_batch)
    products, inactive = [], []
    for x in x_batch:
        p, off = singular_product(net, x)
        products.append(p)
        inactive.append(off)
    thr = sv_product_threshold(net.width, num_subcarriers)
    mn = float(min(products))
    return SingularProductTelemetry(products, mn, thr, mn > thr, inactive)
