"""Monte Carlo tails, cumulants and iterated-logarithm traces of gamma_n = B_n - E B_n.

Theory constants for a walk with covariance determinant det Gamma:

* Xi = sqrt(det Gamma) kappa^-4, the upper-tail rate per unit lambda;
* Theta = (2 pi)^-1 det Gamma^-1/2, the lower-tail scale;
* (1/4) kappa^4 theta^2 det Gamma^-1/2, the cumulant limit;
* det Gamma^-1/2 kappa^4 and -Theta, the upper and lower LIL envelopes.

Every trial draws from its own random stream keyed by (seed, trial index), so
results do not depend on how trials are split across threads.
"""
import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .expectation import expected_silt, expectation_table
from .rng import stream_rng
from .silt import silt_batch, silt_trajectory, SiltAccumulator
from .walk import sample_steps

__all__ = [
    "ScalingSchedule",
    "TailEstimate",
    "LilTrace",
    "ExactDistribution",
    "HypothesisError",
    "xi_constant",
    "theta_constant",
    "cumulant_limit",
    "lil_envelopes",
    "sample_renormalized",
    "estimate_upper_tail",
    "estimate_lower_tail",
    "estimate_cumulant",
    "exhaustive_silt_distribution",
    "oracle_audit",
    "lil_trace",
    "default_checkpoints",
    "all_stay_probability",
    "remark_event_check",
    "remark_inclusion_threshold",
    "remark_moment_check",
    "CSV_HEADER",
    "estimates_to_csv",
]

CSV_HEADER = ["experiment", "dist", "n", "b_rule", "param", "trials", "estimate", "ci_lo", "ci_hi", "theory", "seed"]
MIN_TRIALS = 100
ENUMERATION_BUDGET = 10**7
Z95 = stats.norm.ppf(0.975)


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingSchedule:
    """b_n rules: ``log``, ``sqrt``, ``power`` (n^alpha), ``constant`` and ``linear`` (c n).

    ``constant`` and ``linear`` sit outside the growth hypotheses b_n -> inf,
    b_n = o(n) and need ``allow_outside=True``.
    """

    rule: str = "log"
    alpha: float = 0.5
    value: float = 1.0
    allow_outside: bool = False

    RULES = ("log", "sqrt", "power", "constant", "linear")

    def __post_init__(self):
        if self.rule not in self.RULES:
            raise ValueError(f"unknown b_n rule {self.rule!r}; expected one of {self.RULES}")
        if self.rule == "power" and not 0 < self.alpha < 1:
            raise HypothesisError("power rule needs 0 < alpha < 1 so that b_n = o(n)")
        if self.rule == "linear":
            if not self.allow_outside:
                raise HypothesisError("b_n proportional to n violates the hypothesis b_n = o(n)")
            if not 0 < self.value < 1:
                raise ValueError("linear rule needs 0 < c < 1")
        if self.rule == "constant" and not self.allow_outside:
            raise HypothesisError("constant b_n violates the hypothesis b_n -> infinity; pass allow_outside=True")

    @property
    def outside_hypotheses(self):
        return self.rule in ("constant", "linear")

    @property
    def label(self):
        return {
            "log": "log",
            "sqrt": "sqrt",
            "power": f"n^{self.alpha:g}",
            "constant": f"const:{self.value:g}",
            "linear": f"linear:{self.value:g}",
        }[self.rule]

    def raw(self, n):
        n = float(n)
        if self.rule == "log":
            return math.log(n)
        if self.rule == "sqrt":
            return math.sqrt(n)
        if self.rule == "power":
            return n**self.alpha
        if self.rule == "constant":
            return float(self.value)
        return self.value * n

    def __call__(self, n):
        b = self.raw(n)
        if not 1 <= b < n:
            if b >= n:
                raise HypothesisError(f"b_n = {b:g} >= n = {n}; the hypothesis b_n = o(n) requires b_n < n")
            raise HypothesisError(f"b_n = {b:g} < 1 at n = {n}")
        return b

    @classmethod
    def parse(cls, text, allow_outside=False):
        """Accepts ``log``, ``sqrt``, ``n^0.75``, ``const:5``, ``linear:0.98`` and ``n``."""
        t = str(text).strip().replace(" ", "")
        if t in ("log", "logn", "log(n)"):
            return cls("log")
        if t in ("sqrt", "sqrt(n)", "n^0.5"):
            return cls("sqrt")
        if t == "n":
            raise HypothesisError("b_n = n violates the hypothesis b_n = o(n)")
        if t.startswith("n^"):
            return cls("power", alpha=float(t[2:]), allow_outside=allow_outside)
        if t.startswith("const:"):
            return cls("constant", value=float(t[6:]), allow_outside=allow_outside)
        if t.startswith("linear:"):
            return cls("linear", value=float(t[7:]), allow_outside=allow_outside)
        raise ValueError(f"cannot parse b_n rule {text!r}")


def xi_constant(dist, kappa):
    return math.sqrt(dist.det_gamma) * kappa**-4


def theta_constant(dist):
    return 1.0 / (2 * math.pi * math.sqrt(dist.det_gamma))


def cumulant_limit(dist, kappa, theta):
    return 0.25 * kappa**4 * theta**2 / math.sqrt(dist.det_gamma)


def lil_envelopes(dist, kappa):
    """(upper, lower) limits of gamma_n/(n log log n) and gamma_n/(n log log log n)."""
    return kappa**4 / math.sqrt(dist.det_gamma), -theta_constant(dist)


@dataclass
class TailEstimate:
    experiment: str
    dist: str
    n: int
    b_n: float
    b_rule: str
    param: float
    trials: int
    estimate: float
    ci: tuple
    theory: float
    normalized: float
    normalized_ci: tuple
    seed: int
    successes: int = -1
    flagged: bool = False

    def row(self):
        """CSV fields; estimate and CI are on the normalized scale of the theory column."""
        return [
            self.experiment, self.dist, self.n, self.b_rule, repr(float(self.param)), self.trials,
            repr(float(self.normalized)), repr(float(self.normalized_ci[0])),
            repr(float(self.normalized_ci[1])), repr(float(self.theory)), self.seed,
        ]


def estimates_to_csv(estimates):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for e in estimates:
        w.writerow(e.row())
    return buf.getvalue()


def _require_law(dist):
    if not dist.strongly_aperiodic:
        raise HypothesisError(f"{dist.name}: law is not strongly aperiodic; theorem hypotheses violated")


def _silt_chunk(dist, n, seed, streams):
    pts = np.empty((len(streams), n, 2), dtype=np.int64)
    for i, s in enumerate(streams):
        np.cumsum(dist.steps[sample_steps(dist, n, stream_rng(seed, s))], axis=0, out=pts[i])
    return silt_batch(pts)


def sample_silt(dist, n, trials, seed, threads=1, first_stream=1, chunk=None):
    """B_n for ``trials`` independent paths; trial i uses stream first_stream + i."""
    if chunk is None:
        chunk = max(1, min(1024, (1 << 22) // max(n, 1)))
    starts = list(range(0, trials, chunk))
    jobs = [range(first_stream + a, first_stream + min(a + chunk, trials)) for a in starts]
    if threads <= 1:
        parts = [_silt_chunk(dist, n, seed, j) for j in jobs]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda j: _silt_chunk(dist, n, seed, j), jobs))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def sample_renormalized(dist, n, trials, seed, threads=1, cache_dir=None, block=0):
    """gamma_n for ``trials`` independent paths (float array).

    Different ``block`` values give disjoint stream ranges, so experiments at
    several n can avoid sharing path prefixes.
    """
    b = sample_silt(dist, n, trials, seed, threads, first_stream=(block << 32) + 1)
    return b - float(expected_silt(dist, n, cache_dir))


def _bernoulli(k, trials):
    p = k / trials
    if k == 0:
        # exact one-sided 95% upper bound
        return p, (0.0, 1 - 0.05 ** (1 / trials)), True
    half = Z95 * math.sqrt(p * (1 - p) / trials)
    return p, (max(0.0, p - half), min(1.0, p + half)), False


def _safe_log(x):
    return math.log(x) if x > 0 else -math.inf


def _check_trials(trials):
    if trials < MIN_TRIALS:
        raise ValueError(f"trials = {trials} is below statistical minimum {MIN_TRIALS}")


def _gammas(dist, n, trials, seed, samples, threads, cache_dir):
    if samples is not None:
        g = np.asarray(samples, dtype=float)
        _check_trials(len(g))
        return g
    _check_trials(trials)
    return sample_renormalized(dist, n, trials, seed, threads, cache_dir)


def estimate_upper_tail(dist, n, schedule, lam, trials=1000, seed=0, kappa=None, samples=None,
                        threads=1, cache_dir=None):
    """P(gamma_n >= lam n b_n) with (1/b_n) log p and the theory value -lam Xi.

    ``samples`` lets several thresholds share one set of gamma_n draws.
    """
    _require_law(dist)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    b = schedule(n)
    g = _gammas(dist, n, trials, seed, samples, threads, cache_dir)
    k = int(np.count_nonzero(g >= lam * n * b))
    p, ci, flagged = _bernoulli(k, len(g))
    return TailEstimate(
        "upper_tail", dist.name, n, b, schedule.label, lam, len(g), p, ci,
        -lam * xi_constant(dist, kappa) if kappa else math.nan,
        _safe_log(p) / b, (_safe_log(ci[0]) / b, _safe_log(ci[1]) / b), seed, k, flagged,
    )


def estimate_lower_tail(dist, n, schedule, theta_exp, trials=1000, seed=0, samples=None,
                        threads=1, cache_dir=None):
    """P(E B_n - B_n >= theta_exp Theta n log b_n), reported as b_n^-theta_exp log p.

    Only two-sided bounds with unnamed constants are known for this tail, so
    the theory column is NaN.
    """
    _require_law(dist)
    if not theta_exp > 0:
        raise ValueError("theta_exp must be positive")
    b = schedule(n)
    g = _gammas(dist, n, trials, seed, samples, threads, cache_dir)
    thr = theta_exp * theta_constant(dist) * n * math.log(b)
    k = int(np.count_nonzero(-g >= thr))
    p, ci, flagged = _bernoulli(k, len(g))
    s = b**-theta_exp
    return TailEstimate(
        "lower_tail", dist.name, n, b, schedule.label, theta_exp, len(g), p, ci, math.nan,
        s * _safe_log(p), (s * _safe_log(ci[0]), s * _safe_log(ci[1])), seed, k, flagged,
    )


def estimate_cumulant(dist, n, schedule, theta, trials=1000, seed=0, kappa=None, samples=None,
                      threads=1, cache_dir=None, batches=20):
    """(1/b_n) log E exp(theta sqrt(b_n/n) |gamma_n|^(1/2)) with a batch-means CI."""
    _require_law(dist)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    b = schedule(n)
    g = _gammas(dist, n, trials, seed, samples, threads, cache_dir)
    T = len(g)
    x = theta * math.sqrt(b / n) * np.sqrt(np.abs(g))
    if theta == 0:
        est, ci = 0.0, (0.0, 0.0)
    else:
        est = float((logsumexp(x) - math.log(T)) / b)
        nb = min(batches, T // 5)
        parts = np.array_split(x, nb)
        per = np.array([(logsumexp(q) - math.log(len(q))) / b for q in parts])
        half = stats.t.ppf(0.975, nb - 1) * per.std(ddof=1) / math.sqrt(nb)
        ci = (est - half, est + half)
    return TailEstimate(
        "cumulant", dist.name, n, b, schedule.label, theta, T, est, ci,
        cumulant_limit(dist, kappa, theta) if kappa else math.nan, est, ci, seed,
    )


@dataclass
class ExactDistribution:
    """Law of B_n as parallel arrays of values and probabilities."""

    n: int
    values: np.ndarray
    probs: np.ndarray

    @property
    def mean(self):
        return float(np.dot(self.values, self.probs))

    def tail(self, t):
        """P(B_n >= t)."""
        return float(self.probs[self.values >= t].sum())

    def lower(self, t):
        """P(B_n <= t)."""
        return float(self.probs[self.values <= t].sum())

    def expect(self, fn):
        return float(np.dot(fn(self.values.astype(float)), self.probs))

    def as_dict(self):
        return {int(v): float(p) for v, p in zip(self.values, self.probs)}


def exhaustive_silt_distribution(dist, n, budget=ENUMERATION_BUDGET, event=None):
    """Enumerate every step sequence of length n and tabulate B_n.

    With ``event`` (a function of the (paths, n, 2) point array returning a
    boolean mask) the total probability of that event is returned as well.
    """
    k = len(dist.probs)
    count = k**n
    if count > budget:
        raise ValueError(f"enumeration needs {count} paths, budget is {budget}")
    head = 0
    while k ** (n - head) > 1 << 20:
        head += 1
    tail_idx = np.array(list(itertools.product(range(k), repeat=n - head)), dtype=np.int64).reshape(-1, n - head)
    tail_logp = np.log(dist.probs)[tail_idx].sum(axis=1)
    acc = np.zeros(n * (n - 1) // 2 + 1)
    event_p = 0.0
    for prefix in itertools.product(range(k), repeat=head):
        idx = np.concatenate([np.broadcast_to(np.array(prefix, dtype=np.int64), (len(tail_idx), head)), tail_idx], axis=1)
        pts = np.cumsum(dist.steps[idx], axis=1)
        w = np.exp(tail_logp + np.log(dist.probs[list(prefix)]).sum())
        acc += np.bincount(silt_batch(pts), weights=w, minlength=len(acc))
        if event is not None:
            event_p += float(w[event(pts)].sum())
    values = np.nonzero(acc)[0]
    exact = ExactDistribution(n, values, acc[values])
    if abs(exact.probs.sum() - 1) > 1e-12:
        raise ArithmeticError("enumerated probabilities do not sum to one")
    return (exact, event_p) if event is not None else exact


def oracle_audit(dist, n=8, repetitions=100, trials=2000, seed=0, lams=(0.3, 0.6), theta_exps=(0.5,),
                 thetas=(0.5, 1.0), schedule=None, threads=1):
    """Compare every estimator with the exact law of B_n at small n.

    Returns per-estimator pass fractions, where a repetition passes when the
    Monte Carlo value is within 3 standard errors of the exact one.
    """
    schedule = schedule or ScalingSchedule("log")
    exact = exhaustive_silt_distribution(dist, n)
    eb = float(expected_silt(dist, n))
    b = schedule(n)
    checks = {}
    for lam in lams:
        checks[f"upper_tail:{lam:g}"] = ("tail", exact.tail(eb + lam * n * b - 1e-9), lam)
    for te in theta_exps:
        thr = te * theta_constant(dist) * n * math.log(b)
        checks[f"lower_tail:{te:g}"] = ("tail", exact.lower(eb - thr + 1e-9), te)
    for th in thetas:
        fn = lambda v, th=th: np.exp(th * math.sqrt(b / n) * np.sqrt(np.abs(v - eb)))  # noqa: E731
        checks[f"cumulant:{th:g}"] = ("mean", exact.expect(fn), th)
    passes = {name: 0 for name in checks}
    for rep in range(repetitions):
        g = sample_renormalized(dist, n, trials, seed + rep, threads)
        for name, (kind, truth, par) in checks.items():
            if name.startswith("upper"):
                p = estimate_upper_tail(dist, n, schedule, par, samples=g).estimate
            elif name.startswith("lower"):
                p = estimate_lower_tail(dist, n, schedule, par, samples=g).estimate
            if kind == "tail":
                se = math.sqrt(truth * (1 - truth) / trials)
                ok = abs(p - truth) <= 3 * se
            else:
                est = estimate_cumulant(dist, n, schedule, par, samples=g).estimate
                m = math.exp(est * b)
                se = math.sqrt(exact.expect(lambda v, th=par: np.exp(2 * th * math.sqrt(b / n) * np.sqrt(np.abs(v - eb)))) - truth**2) / math.sqrt(trials)
                ok = abs(m - truth) <= 3 * se
            passes[name] += bool(ok)
    return {name: passes[name] / repetitions for name in checks}, {name: c[1] for name, c in checks.items()}


@dataclass
class LilTrace:
    checkpoints: np.ndarray
    gamma: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    running_max: np.ndarray
    running_min: np.ndarray
    seed: int
    dist: str = ""

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "gamma", "upper_ratio", "lower_ratio", "running_max", "running_min", "seed"])
        for row in zip(self.checkpoints, self.gamma, self.upper, self.lower, self.running_max, self.running_min):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]] + [self.seed])
        return buf.getvalue()


def default_checkpoints(n_max, start=1 << 8, per_octave=4):
    """Geometric grid from ``start`` to n_max with ``per_octave`` points per doubling."""
    if start < 16:
        raise ValueError("checkpoints start at n >= 16 so that log log log n > 0")
    k = int(round(per_octave * math.log2(n_max / start)))
    pts = np.unique(np.round(start * 2.0 ** (np.arange(k + 1) / per_octave)).astype(np.int64))
    pts = pts[pts <= n_max]
    if pts[-1] != n_max:
        pts = np.append(pts, n_max)
    return pts


def lil_trace(dist, n_max, checkpoints=None, seed=0, engine="vector", cache_dir=None, min_n_max=1 << 16):
    """Ratios of gamma_n along one long path.

    ``engine="stream"`` feeds the path through :class:`SiltAccumulator` one
    segment at a time; ``"vector"`` computes every B_k at once.  Both give
    identical traces.
    """
    if n_max < min_n_max:
        raise ValueError(f"n_max must be at least {min_n_max}")
    cps = default_checkpoints(n_max) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if np.any(np.diff(cps) <= 0) or cps[0] < 16 or cps[-1] > n_max:
        raise ValueError("checkpoints must be strictly increasing within [16, n_max]")
    rng = stream_rng(seed, 0)
    pts = np.cumsum(dist.steps[sample_steps(dist, n_max, rng)], axis=0)
    if engine == "vector":
        b = silt_trajectory(pts)[cps - 1]
    elif engine == "stream":
        acc = SiltAccumulator(dist)
        b = np.empty(len(cps), dtype=np.int64)
        prev = 0
        for i, c in enumerate(cps):
            acc.extend(pts[prev:c])
            prev = c
            b[i] = acc.b_value
    else:
        raise ValueError(f"unknown engine {engine!r}")
    eb = expectation_table(dist, n_max, cache_dir).expected(cps)
    gamma = b - eb
    n = cps.astype(float)
    ll = np.log(np.log(n))
    upper = gamma / (n * ll)
    lower = gamma / (n * np.log(ll))
    return LilTrace(cps, gamma, upper, lower, np.maximum.accumulate(upper), np.minimum.accumulate(lower),
                    seed, dist.name)


def all_stay_probability(dist, n):
    """P(S_i = S_0 for all i <= n) = p(0)^n."""
    p0 = float(dist.probs[np.all(dist.steps == 0, axis=1)].sum())
    return p0**n


def remark_event_check(dist, n, eps=None):
    """Check the all-stay lower bound for P(B_n - E B_n > n b_n / 2) with b_n = (1 - eps) n.

    On the all-stay event B_n = n(n-1)/2, so the event contains it iff
    n(n-1)/2 - E B_n > n b_n / 2.  When the threshold exceeds n(n-1)/2 the
    event is empty and its probability is exactly zero.
    """
    p0 = float(dist.probs[np.all(dist.steps == 0, axis=1)].sum())
    eps = 1 - p0 if eps is None else eps
    b = (1 - eps) * n
    eb = float(expected_silt(dist, n))
    threshold = eb + n * b / 2
    b_max = n * (n - 1) / 2
    included = b_max > threshold
    if included:
        event_lower = all_stay_probability(dist, n)
        log_p = math.log(event_lower)
    else:
        event_lower = 0.0
        log_p = -math.inf
    bound = n * math.log(1 - eps)
    return {
        "n": n, "eps": eps, "b_n": b, "expected_silt": eb, "threshold": threshold, "max_silt": b_max,
        "inclusion_holds": bool(included), "log_probability_lower": log_p, "bound": bound,
        "bound_holds": bool(log_p >= bound),
    }


def remark_inclusion_threshold(dist, n_hi=1 << 14):
    """Smallest n at which the all-stay event lies inside the deviation event."""
    p0 = float(dist.probs[np.all(dist.steps == 0, axis=1)].sum())
    eps = 1 - p0
    ns = np.arange(2, n_hi + 1)
    eb = expected_silt(dist, ns)
    ok = ns * (ns - 1) / 2 - eb > ns * (1 - eps) * ns / 2
    return int(ns[np.argmax(ok)]) if ok.any() else None


def remark_moment_check(dist, n=64, C=1.0, trials=2000, seed=0):
    """Term-by-term check of E exp(C gamma_n / n) >= exp(-C E B_n / n) (1-eps)^n exp(C (n-1)/2).

    The right side is P(all stay) times the value of exp(C gamma_n / n) on
    that event, so each factor is checked separately and the left side is
    estimated by Monte Carlo.  Returns the terms, a per-term verdict and the
    critical constant 2 log(1/(1-eps)).
    """
    p0 = float(dist.probs[np.all(dist.steps == 0, axis=1)].sum())
    eps = 1 - p0
    eb = float(expected_silt(dist, n))
    stay = all_stay_probability(dist, n)
    on_event = math.exp(C * (n * (n - 1) / 2 - eb) / n)
    rhs = math.exp(-C * eb / n) * (1 - eps) ** n * math.exp(C * (n - 1) / 2)
    b = sample_silt(dist, n, trials, seed)
    vals = np.exp(C * (b - eb) / n)
    lhs = float(vals.mean())
    lhs_se = float(vals.std(ddof=1) / math.sqrt(trials))
    # the all-stay contribution is a deterministic lower bound on the left side
    stay_path_silt = int(silt_batch(np.zeros((1, n, 2), dtype=np.int64))[0])
    terms = {
        "all_stay_probability": stay,
        "all_stay_matches_power": math.isclose(stay, (1 - eps) ** n, rel_tol=1e-12),
        "silt_on_all_stay": stay_path_silt,
        "silt_on_all_stay_matches": stay_path_silt == n * (n - 1) // 2,
        "lower_bound_via_event": stay * on_event,
        "rhs": rhs,
        "factorization_matches": math.isclose(stay * on_event, rhs, rel_tol=1e-10),
        "lhs_mc": lhs,
        "lhs_se": lhs_se,
        "lhs_exceeds_rhs": lhs + 3 * lhs_se >= rhs,
        "critical_constant_bound": 2 * math.log(1 / (1 - eps)),
    }
    terms["all_hold"] = all(terms[k] for k in ("all_stay_matches_power", "silt_on_all_stay_matches",
                                                "factorization_matches", "lhs_exceeds_rhs"))
    return terms
