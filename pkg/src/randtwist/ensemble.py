"""Monte Carlo over orbit ensembles and the statistics of the diffusion limit.

Orbits advance synchronously in vectorized packs (dynamics.LanePack), each
lane carrying its own counter-based stream, so results are independent of
batch layout and bit-identical to running dynamics.iterate orbit by orbit
with the derived per-orbit seeds.

Statistical outputs compare simulation against the predicted diffusion:
displacement moments and Kolmogorov-Smirnov distance for the central limit
theorem, exit times from an action strip, the discounted martingale
functional of the generator, occupation time of rational strips, energy
increments of the resonant pendulum, and the characteristic function of
random signed sums.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import LanePack, _bitgen, orbit_seed
from .strips import classify

__all__ = [
    "EnsembleStats",
    "run_ensemble",
    "CltReport",
    "clt_test",
    "StoppingTimes",
    "stopping_times",
    "MartingaleReport",
    "martingale_residual",
    "martingale_residuals",
    "StripOccupation",
    "time_in_rational_strips",
    "CharFunctionTable",
    "empirical_char_function",
    "RRBlockReport",
    "rr_h_process",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 2e10


# ----------------------------------------------------------------------
# streaming moments
# ----------------------------------------------------------------------

@dataclass
class EnsembleStats:
    """Streaming moments of a scalar per-orbit statistic (displacement).

    Holds the count and central moment sums M2..M4, so merging two stats
    objects is exact, associative, and commutative.  The raw sample is
    kept when available (distribution tests need it) and concatenated on
    merge.
    """

    count: int
    mean: float
    m2: float
    m3: float
    m4: float
    n_steps: int = 0
    epsilon: float = 0.0
    r0: float = 0.0
    censored: int = 0
    sample: np.ndarray = field(default=None, repr=False)
    histogram: tuple = field(default=None, repr=False)

    @classmethod
    def from_sample(cls, x, n_steps=0, epsilon=0.0, r0=0.0, keep_sample=True,
                    bins=None):
        x = np.asarray(x, dtype=float)
        m = x.size
        mean = float(np.mean(x)) if m else 0.0
        d = x - mean
        stats = cls(
            count=m,
            mean=mean,
            m2=float(np.sum(d**2)),
            m3=float(np.sum(d**3)),
            m4=float(np.sum(d**4)),
            n_steps=int(n_steps),
            epsilon=float(epsilon),
            r0=float(r0),
            sample=(x.copy() if keep_sample else None),
        )
        if bins is not None:
            stats.histogram = np.histogram(x, bins=bins)
        return stats

    @property
    def s(self):
        """Diffusive time eps^2 * n."""
        return self.epsilon**2 * self.n_steps

    @property
    def variance(self):
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def skewness(self):
        if self.count < 2 or self.m2 == 0:
            return 0.0
        m = self.count
        return (self.m3 / m) / (self.m2 / m) ** 1.5

    @property
    def excess_kurtosis(self):
        if self.count < 2 or self.m2 == 0:
            return 0.0
        m = self.count
        return (self.m4 / m) / (self.m2 / m) ** 2 - 3.0

    @property
    def se_mean(self):
        return math.sqrt(self.variance / self.count) if self.count else 0.0

    @property
    def se_skewness(self):
        return math.sqrt(6.0 / self.count) if self.count else 0.0

    @property
    def se_kurtosis(self):
        return math.sqrt(24.0 / self.count) if self.count else 0.0

    def merge(self, other):
        """Combine stats of two disjoint ensembles (pairwise formulas)."""
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        na, nb = self.count, other.count
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        mean = self.mean + nb * d_n
        m2 = self.m2 + other.m2 + delta * d_n * na * nb
        m3 = (
            self.m3
            + other.m3
            + delta * d_n**2 * na * nb * (na - nb)
            + 3.0 * d_n * (na * other.m2 - nb * self.m2)
        )
        m4 = (
            self.m4
            + other.m4
            + delta * d_n**3 * na * nb * (na**2 - na * nb + nb**2)
            + 6.0 * d_n**2 * (na**2 * other.m2 + nb**2 * self.m2)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3)
        )
        sample = None
        if self.sample is not None and other.sample is not None:
            sample = np.concatenate([self.sample, other.sample])
        hist = None
        if (
            self.histogram is not None
            and other.histogram is not None
            and np.array_equal(self.histogram[1], other.histogram[1])
        ):
            hist = (self.histogram[0] + other.histogram[0], self.histogram[1])
        return EnsembleStats(
            count=n,
            mean=mean,
            m2=m2,
            m3=m3,
            m4=m4,
            n_steps=max(self.n_steps, other.n_steps),
            epsilon=self.epsilon or other.epsilon,
            r0=self.r0,
            censored=self.censored + other.censored,
            sample=sample,
            histogram=hist,
        )

    def ks_distance(self, cdf):
        """One-sample Kolmogorov-Smirnov distance against a given CDF."""
        if self.sample is None:
            raise ValueError(
                "KS distance needs the raw sample; rerun with keep_sample=True"
            )
        x = np.sort(self.sample)
        m = x.size
        f = cdf(x)
        upper = np.max(np.arange(1, m + 1) / m - f)
        lower = np.max(f - np.arange(0, m) / m)
        return float(max(upper, lower))

    def to_dict(self):
        return {
            "count": self.count,
            "n_steps": self.n_steps,
            "epsilon": self.epsilon,
            "r0": self.r0,
            "s": self.s,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "se_mean": self.se_mean,
            "censored": self.censored,
        }


# ----------------------------------------------------------------------
# ensemble driving
# ----------------------------------------------------------------------

def _budget_check(n, M, budget):
    total = float(n) * float(M)
    if total > budget:
        raise ValueError(
            f"run of {total:.3g} orbit-steps exceeds the budget {budget:.3g} "
            f"({int(M)} orbits x {int(n)} steps); raise `budget` if intended"
        )


def _batched_seeds(M, master_seed, batch):
    for start in range(0, int(M), batch):
        stop = min(start + batch, int(M))
        yield start, [orbit_seed(master_seed, j) for j in range(start, stop)]


def run_ensemble(fam, x0, n, M, master_seed, thin=None, budget=DEFAULT_BUDGET,
                 keep_sample=True, bins=None, batch=8192, threads=1):
    """Displacement statistics of M independent orbits after n steps.

    Orbit j uses the stream seeded by orbit_seed(master_seed, j);
    results are deterministic and independent of the batch size and of
    `threads` (batches run concurrently but write disjoint slices).
    `thin` is accepted for interface symmetry with dynamics.iterate and
    has no effect on the statistics.
    """
    n, M = int(n), int(M)
    _budget_check(n, M, budget)
    displacements = np.empty(M)

    def run_batch(start, seeds):
        pack = LanePack(fam, x0.theta, x0.r, seeds)
        for _ in range(n):
            pack.advance()
        displacements[start:start + len(seeds)] = pack.r - x0.r

    jobs = list(_batched_seeds(M, master_seed, batch))
    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(lambda job: run_batch(*job), jobs))
    else:
        for start, seeds in jobs:
            run_batch(start, seeds)
    return EnsembleStats.from_sample(
        displacements, n_steps=n, epsilon=fam.epsilon, r0=x0.r,
        keep_sample=keep_sample, bins=bins,
    )


# ----------------------------------------------------------------------
# CLT test
# ----------------------------------------------------------------------

def _normal_cdf_factory(mu, sigma):
    root2 = math.sqrt(2.0)

    def cdf(x):
        from scipy.special import erf
        return 0.5 * (1.0 + erf((x - mu) / (sigma * root2)))

    return cdf


@dataclass
class CltReport:
    """Comparison of a displacement sample against the predicted normal."""

    passed: bool
    ks: float
    ks_threshold: float
    z_mean: float
    z_variance: float
    z_skewness: float
    z_kurtosis: float
    predicted_mean: float
    predicted_variance: float
    diagnostic: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def clt_test(stats, pred, s=None, ks_threshold=None, z_max=4.0):
    """Test the displacement sample against N(s b(r0), s sigma^2(r0)).

    The reference parameters are fixed from the prediction, never fitted
    to the sample, so plain KS critical values apply; the default
    threshold is the 1% level 1.63 / sqrt(M).  Moment z-scores must stay
    below z_max.  Samples with more than 1% censored orbits are rejected
    as invalid.
    """
    if stats.censored > 0.01 * stats.count:
        raise ValueError(
            f"{stats.censored} of {stats.count} orbits censored (> 1%); "
            "sample invalid for the CLT test"
        )
    if s is None:
        s = stats.s
    mu = s * float(np.asarray(pred.b(stats.r0)).reshape(()))
    var = s * float(np.asarray(pred.sigma2(stats.r0)).reshape(()))
    if ks_threshold is None:
        ks_threshold = 1.63 / math.sqrt(max(stats.count, 1))
    if var <= 0 or stats.variance == 0:
        return CltReport(
            passed=False, ks=1.0, ks_threshold=ks_threshold,
            z_mean=float("inf"), z_variance=float("inf"),
            z_skewness=0.0, z_kurtosis=0.0,
            predicted_mean=mu, predicted_variance=var,
            diagnostic="degenerate sample or prediction (zero variance)",
        )
    sigma = math.sqrt(var)
    ks = stats.ks_distance(_normal_cdf_factory(mu, sigma))
    m = stats.count
    z_mean = (stats.mean - mu) / (sigma / math.sqrt(m))
    z_var = (stats.variance - var) / (var * math.sqrt(2.0 / (m - 1)))
    z_skew = stats.skewness / stats.se_skewness
    z_kurt = stats.excess_kurtosis / stats.se_kurtosis
    passed = ks < ks_threshold and all(
        abs(z) < z_max for z in (z_mean, z_var, z_skew, z_kurt)
    )
    return CltReport(
        passed=passed, ks=ks, ks_threshold=ks_threshold,
        z_mean=z_mean, z_variance=z_var, z_skewness=z_skew,
        z_kurtosis=z_kurt, predicted_mean=mu, predicted_variance=var,
    )


# ----------------------------------------------------------------------
# stopping times
# ----------------------------------------------------------------------

@dataclass
class StoppingTimes:
    """Per-orbit exit data from the strip |r - r0| <= half_width."""

    exit_time: np.ndarray
    exit_side: np.ndarray
    censored: np.ndarray
    final_r: np.ndarray
    half_width: float
    r0: float
    max_steps: int

    @property
    def n_censored(self):
        return int(np.count_nonzero(self.censored))

    def histogram(self, bins=50):
        return np.histogram(self.exit_time[~self.censored], bins=bins)

    def fraction_outside(self, lo, hi):
        """Fraction of uncensored exits outside the window [lo, hi]."""
        t = self.exit_time[~self.censored]
        if t.size == 0:
            return 1.0
        return float(np.mean((t < lo) | (t > hi)))

    def to_dict(self):
        ok = ~self.censored
        t = self.exit_time[ok]
        return {
            "M": int(self.exit_time.size),
            "censored": self.n_censored,
            "half_width": self.half_width,
            "max_steps": self.max_steps,
            "mean_exit": float(np.mean(t)) if t.size else None,
            "median_exit": float(np.median(t)) if t.size else None,
            "up_fraction": (float(np.mean(self.exit_side[ok] > 0))
                            if t.size else None),
        }


def stopping_times(fam, x0, beta, M, master_seed, max_steps=None,
                   half_width=None, budget=DEFAULT_BUDGET, batch=16384):
    """First exit times from the action strip of half-width eps^beta.

    An orbit exits at the first k with |r_k - r0| > half_width; orbits
    still inside at max_steps (default 10 eps^-2) are censored, excluded
    from exit statistics, and reported.  The recorded exit overshoots the
    boundary by at most one step, i.e. by eps plus the eps^2 correction.
    """
    eps = fam.epsilon
    if half_width is None:
        half_width = eps**float(beta) if eps > 0 else float("inf")
    if max_steps is None:
        max_steps = 1000 if eps == 0 else int(math.ceil(10.0 * eps**-2))
    M = int(M)
    _budget_check(max_steps, M, budget)
    exit_time = np.full(M, max_steps, dtype=np.int64)
    exit_side = np.zeros(M, dtype=np.int8)
    final_r = np.full(M, x0.r)
    for start, seeds in _batched_seeds(M, master_seed, batch):
        pack = LanePack(fam, x0.theta, x0.r, seeds)
        idx = np.arange(start, start + len(seeds))
        for k in range(max_steps):
            pack.advance()
            dev = pack.r - x0.r
            out = pack.alive & (np.abs(dev) > half_width)
            if out.any():
                rows = np.nonzero(out)[0]
                exit_time[idx[rows]] = k + 1
                exit_side[idx[rows]] = np.where(dev[rows] > 0, 1, -1)
                final_r[idx[rows]] = pack.r[rows]
                pack.alive[rows] = False
            if k % 2048 == 2047 and not pack.alive.all():
                keep = np.nonzero(pack.alive)[0]
                if keep.size == 0:
                    break
                pack.compact(keep)
                idx = idx[keep]
        still = np.nonzero(pack.alive)[0]
        final_r[idx[still]] = pack.r[still]
    censored = exit_time >= max_steps
    exit_side[censored] = 0
    return StoppingTimes(
        exit_time=exit_time, exit_side=exit_side, censored=censored,
        final_r=final_r, half_width=float(half_width), r0=x0.r,
        max_steps=int(max_steps),
    )


# ----------------------------------------------------------------------
# martingale residual
# ----------------------------------------------------------------------

@dataclass
class MartingaleReport:
    """Monte Carlo estimate of E eta - f(r0) for the discounted functional."""

    residual: float
    se: float
    M: int
    censored: int
    lam: float
    beta: float
    epsilon: float

    @property
    def z(self):
        return self.residual / self.se if self.se else float("inf")

    def to_dict(self):
        return dict(self.__dict__, z=self.z)


def _field_tables(pred, r0, half_width):
    """Per-step drift/variance evaluators for the martingale integrand.

    The prediction callables are sampled once onto interpolation tables
    (the homological solve behind b(r) is far too slow to call every
    step); linear interpolation error on 2^14 nodes is orders below the
    Monte Carlo noise.  TI fields depend on r alone, IR fields on theta
    alone (frozen at the strip's rational).
    """
    if pred.regime == "TI":
        if not math.isfinite(half_width):
            b0 = float(np.asarray(pred.b(r0)).reshape(()))
            s0 = float(np.asarray(pred.sigma2(r0)).reshape(()))
            return (lambda th, r: np.full_like(r, b0),
                    lambda th, r: np.full_like(r, s0))
        pad = 0.05 * half_width + 1e-6
        nodes = np.linspace(r0 - half_width - pad, r0 + half_width + pad,
                            16385)
        b_tab = np.asarray(pred.b(nodes), dtype=float)
        s_tab = np.asarray(pred.sigma2(nodes), dtype=float)
        if s_tab.ndim == 0:
            s_tab = np.full_like(nodes, float(s_tab))

        def b_vec(theta, r):
            return np.interp(r, nodes, b_tab)

        def s2_vec(theta, r):
            return np.interp(r, nodes, s_tab)

        return b_vec, s2_vec
    if pred.regime == "IR":
        grid = np.arange(4096) / 4096.0
        bt = np.asarray(pred.b_theta(grid), dtype=float)
        st = np.asarray(pred.sigma2_theta(grid), dtype=float)
        grid_ext = np.append(grid, 1.0)
        bt_ext = np.append(bt, bt[0])
        st_ext = np.append(st, st[0])

        def b_vec(theta, r):
            return np.interp(theta % 1.0, grid_ext, bt_ext)

        def s2_vec(theta, r):
            return np.interp(theta % 1.0, grid_ext, st_ext)

        return b_vec, s2_vec
    raise ValueError(f"unsupported prediction regime {pred.regime!r}")


def _derivative_triple(f, df, d2f):
    h = 1e-5
    if df is None:
        df = lambda r: (f(r + h) - f(r - h)) / (2 * h)
    if d2f is None:
        d2f = lambda r: (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h)
    return f, df, d2f


def martingale_residuals(fam, pred, fs, lam, x0, beta, M, master_seed=0,
                         max_steps=None, budget=DEFAULT_BUDGET, batch=16384,
                         zp=None):
    """Discounted-generator martingale check at the strip exit time.

    Accumulates, per orbit and per test function f,

        eta = e^(-lam s_exit) f(r at exit)
              + eps^2 sum_{k < n_exit} e^(-lam eps^2 k)
                    [lam f(r_k) - b f'(r_k) - (1/2) sigma^2 f''(r_k)]

    with s_exit = eps^2 n_exit, and returns Monte Carlo estimates of
    E eta - f(r0) with their standard errors.  Optional stopping for the
    limiting diffusion makes the expectation vanish; for the map it
    decays with eps.

    `fs` is a sequence of (f, df, d2f) triples sharing one simulation
    (the dynamics dominates the cost, so checking several test
    functions on the same orbits is nearly free).  Missing derivatives
    fall back to central differences with h = 1e-5.  Drift and variance
    fields come from `pred`, which must match the zone of the start
    point (validated when `zp` is given).  Censored orbits (still
    inside at max_steps) use the truncated functional and are counted.
    Returns one MartingaleReport per entry of `fs`.
    """
    eps = fam.epsilon
    if zp is not None:
        tag = classify(x0.r, zp).tag
        base = {"TZ1": "RR", "TZ2": "RR"}.get(tag, tag)
        if base != pred.regime:
            raise ValueError(
                f"start point is {tag} but prediction regime is {pred.regime}"
            )
    if max_steps is None:
        max_steps = 1000 if eps == 0 else int(math.ceil(10.0 * eps**-2))
    half_width = eps**float(beta) if eps > 0 else float("inf")
    M = int(M)
    _budget_check(max_steps, M, budget)
    triples = [_derivative_triple(f, df, d2f) for f, df, d2f in fs]
    n_f = len(triples)
    eps2 = eps * eps
    lam_eps2 = lam * eps2
    decay = math.exp(-lam_eps2)

    # In the TI regime the whole integrand lam f - b f' - s2 f''/2 is a
    # function of r alone; sampling it once per test function onto the
    # usual 2^14-node table turns the per-step work into a single interp
    # (the interpolation error sits many orders below the Monte Carlo
    # noise).  Other regimes keep the generic field evaluation.
    use_tables = pred.regime == "TI" and math.isfinite(half_width)
    if use_tables:
        pad = 0.05 * half_width + 1e-6
        nodes = np.linspace(
            x0.r - half_width - pad, x0.r + half_width + pad, 16385
        )
        b_tab = np.broadcast_to(
            np.asarray(pred.b(nodes), dtype=float), nodes.shape
        )
        s_tab = np.broadcast_to(
            np.asarray(pred.sigma2(nodes), dtype=float), nodes.shape
        )

        def _sample(fn):
            return np.broadcast_to(
                np.asarray(fn(nodes), dtype=float), nodes.shape
            )

        g_tabs = [
            lam * _sample(f) - b_tab * _sample(df) - 0.5 * s_tab * _sample(d2f)
            for f, df, d2f in triples
        ]
    else:
        b_vec, s2_vec = _field_tables(pred, x0.r, half_width)

    eta = np.empty((n_f, M))
    censored_total = 0
    for start, seeds in _batched_seeds(M, master_seed, batch):
        pack = LanePack(fam, x0.theta, x0.r, seeds)
        m0 = len(seeds)
        idx = np.arange(m0)
        acc = np.zeros((n_f, m0))
        acc_c = np.zeros((n_f, m0))
        eta_batch = np.empty((n_f, m0))
        w = 1.0
        for k in range(max_steps):
            if use_tables:
                for i in range(n_f):
                    term = w * np.interp(pack.r, nodes, g_tabs[i])
                    y = term - acc_c[i]
                    t = acc[i] + y
                    acc_c[i] = (t - acc[i]) - y
                    acc[i] = t
            else:
                b_val = b_vec(pack.theta, pack.r)
                s2_val = s2_vec(pack.theta, pack.r)
                for i, (f, df, d2f) in enumerate(triples):
                    integrand = (
                        lam * f(pack.r)
                        - b_val * df(pack.r)
                        - 0.5 * s2_val * d2f(pack.r)
                    )
                    term = w * integrand
                    y = term - acc_c[i]
                    t = acc[i] + y
                    acc_c[i] = (t - acc[i]) - y
                    acc[i] = t
            pack.advance()
            w *= decay
            out = pack.alive & (np.abs(pack.r - x0.r) > half_width)
            if out.any():
                # an orbit's eta is banked the moment it leaves the
                # strip; whatever its lane accumulates afterwards is
                # dropped at the next compaction without being read
                rows = np.nonzero(out)[0]
                cols = idx[rows]
                for i, (f, _, _) in enumerate(triples):
                    eta_batch[i, cols] = (
                        w * np.asarray(f(pack.r[rows]), dtype=float)
                        + eps2 * acc[i, rows]
                    )
                pack.alive[rows] = False
            if k % 2048 == 2047 and not pack.alive.all():
                keep = np.nonzero(pack.alive)[0]
                if keep.size == 0:
                    break
                pack.compact(keep)
                idx = idx[keep]
                acc = acc[:, keep]
                acc_c = acc_c[:, keep]
        live = np.nonzero(pack.alive)[0]
        if live.size:
            censored_total += int(live.size)
            w_cens = math.exp(-lam_eps2 * max_steps)
            cols = idx[live]
            for i, (f, _, _) in enumerate(triples):
                eta_batch[i, cols] = (
                    w_cens * np.asarray(f(pack.r[live]), dtype=float)
                    + eps2 * acc[i, live]
                )
        eta[:, start:start + m0] = eta_batch
    reports = []
    for i, (f, _, _) in enumerate(triples):
        resid = eta[i] - f(x0.r)
        reports.append(MartingaleReport(
            residual=float(np.mean(resid)),
            se=float(np.std(resid, ddof=1) / math.sqrt(M)) if M > 1 else 0.0,
            M=M,
            censored=censored_total,
            lam=float(lam),
            beta=float(beta),
            epsilon=eps,
        ))
    return reports


def martingale_residual(fam, pred, f, lam, x0, beta, M, master_seed=0,
                        max_steps=None, df=None, d2f=None,
                        budget=DEFAULT_BUDGET, batch=16384, zp=None):
    """Single test-function form of martingale_residuals."""
    return martingale_residuals(
        fam, pred, [(f, df, d2f)], lam, x0, beta, M,
        master_seed=master_seed, max_steps=max_steps, budget=budget,
        batch=batch, zp=zp,
    )[0]


# ----------------------------------------------------------------------
# occupation of rational strips
# ----------------------------------------------------------------------

def _zone_partition(zp):
    """Breakpoints and in-strip flags of the zone structure on [0, 1].

    The zone taxonomy is 1-periodic in r, so one painted partition of
    the unit interval classifies every action with a searchsorted.
    """
    spans = []
    half = zp.strip_half_width
    for q in range(zp.d + 1, zp.q_cut + 1):
        for p in range(0, q + 1):
            if math.gcd(p, q) == 1:
                spans.append((p / q - half, p / q + half))
    for q in range(1, zp.d + 1):
        for p in range(0, q + 1):
            if math.gcd(p, q) == 1:
                spans.append((p / q - zp.gamma, p / q + zp.gamma))
    points = {0.0, 1.0}
    for lo, hi in spans:
        for x in (lo, hi, lo + 1.0, hi + 1.0, lo - 1.0, hi - 1.0):
            if 0.0 <= x <= 1.0:
                points.add(x)
    grid = np.array(sorted(points))
    mids = 0.5 * (grid[:-1] + grid[1:])
    flags = np.zeros(mids.size, dtype=bool)
    for lo, hi in spans:
        for shift in (-1.0, 0.0, 1.0):
            flags |= (mids >= lo + shift) & (mids <= hi + shift)
    return grid, flags


@dataclass
class StripOccupation:
    """Distribution of the fraction of time spent in rational strips."""

    fractions: np.ndarray
    n_steps: int
    rho_grid: tuple
    tail_probability: dict
    tail_se: dict

    def to_dict(self):
        return {
            "n_steps": self.n_steps,
            "mean_fraction": float(np.mean(self.fractions)),
            "tail_probability": {str(k): v
                                 for k, v in self.tail_probability.items()},
            "tail_se": {str(k): v for k, v in self.tail_se.items()},
        }


def time_in_rational_strips(fam, zp, x0, n, M, master_seed=0,
                            rho_grid=(0.1, 0.2, 0.3),
                            budget=DEFAULT_BUDGET, batch=16384):
    """Occupation time of the union of rational strips along orbits.

    T_R counts the post-step states r_1 .. r_n classified RR, TZ, or IR;
    the report gives the per-orbit fractions T_R/n and the empirical
    tails P{T_R >= rho n} with binomial standard errors on the rho grid.
    """
    n, M = int(n), int(M)
    _budget_check(n, M, budget)
    grid, flags = _zone_partition(zp)
    counts = np.zeros(M, dtype=np.int64)
    for start, seeds in _batched_seeds(M, master_seed, batch):
        pack = LanePack(fam, x0.theta, x0.r, seeds)
        c = np.zeros(len(seeds), dtype=np.int64)
        for _ in range(n):
            pack.advance()
            pos = np.searchsorted(grid, pack.r % 1.0, side="right") - 1
            np.clip(pos, 0, flags.size - 1, out=pos)
            c += flags[pos]
        counts[start:start + len(seeds)] = c
    fractions = counts / float(n)
    tail = {}
    tail_se = {}
    for rho in rho_grid:
        p_hat = float(np.mean(fractions >= rho))
        tail[float(rho)] = p_hat
        tail_se[float(rho)] = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / M)
    return StripOccupation(
        fractions=fractions, n_steps=n, rho_grid=tuple(rho_grid),
        tail_probability=tail, tail_se=tail_se,
    )


# ----------------------------------------------------------------------
# characteristic function of random signed sums
# ----------------------------------------------------------------------

@dataclass
class CharFunctionTable:
    """Empirical characteristic function of S_n / sqrt(n) vs the normal."""

    t: np.ndarray
    phi_re: np.ndarray
    phi_im: np.ndarray
    target: np.ndarray
    sigma2: float

    @property
    def sup_error(self):
        phi = self.phi_re + 1j * self.phi_im
        return float(np.max(np.abs(phi - self.target)))

    def to_rows(self):
        return np.column_stack([self.t, self.phi_re, self.phi_im, self.target])


def empirical_char_function(v_sequence, M, n, t_grid, master_seed=0,
                            batch=4096):
    """Empirical characteristic function of S_n = sum_k v_k omega_k.

    Draws M independent fair sign sequences (the same stream construction
    as the orbit ensembles), forms S_n / sqrt(n), and averages
    exp(i t S).  The comparison target is exp(-sigma^2 t^2 / 2) with
    sigma^2 the Cesaro mean of v_k^2 over the horizon.
    """
    n, M = int(n), int(M)
    if callable(v_sequence):
        v = np.array([float(v_sequence(k)) for k in range(n)])
    else:
        v = np.asarray(v_sequence, dtype=float)
        if v.size != n:
            raise ValueError(f"v_sequence has {v.size} entries, expected {n}")
    sigma2 = float(np.mean(v**2))
    t = np.asarray(t_grid, dtype=float)
    phi = np.zeros(t.size, dtype=complex)
    n_words = (n + 63) // 64
    shifts = np.arange(64, dtype=np.uint64)
    for start in range(0, M, batch):
        stop = min(start + batch, M)
        words = np.stack([
            _bitgen(orbit_seed(master_seed, j)).integers(
                0, 2**64, size=n_words, dtype=np.uint64)
            for j in range(start, stop)
        ])
        bits = ((words[:, :, None] >> shifts) & np.uint64(1)).reshape(
            words.shape[0], -1)[:, :n]
        signs = bits.astype(np.float64) * 2.0 - 1.0
        s_vals = signs @ v / math.sqrt(n)
        phi += np.exp(1j * np.outer(t, s_vals)).sum(axis=1)
    phi /= M
    target = np.exp(-0.5 * sigma2 * t**2)
    return CharFunctionTable(
        t=t, phi_re=phi.real, phi_im=phi.imag, target=target, sigma2=sigma2,
    )


# ----------------------------------------------------------------------
# resonant energy process
# ----------------------------------------------------------------------

@dataclass
class RRBlockReport:
    """Per-block energy increments of the resonant pendulum process."""

    mean_increment: float
    se_increment: float
    predicted_drift: float
    predicted_variance: float
    n_blocks: int
    M: int
    escaped: int
    increments: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {
            "mean_increment": self.mean_increment,
            "se_increment": self.se_increment,
            "predicted_drift": self.predicted_drift,
            "predicted_variance": self.predicted_variance,
            "n_blocks": self.n_blocks,
            "M": self.M,
            "escaped": self.escaped,
        }


def rr_h_process(fam, frame, x0, n_blocks, M, master_seed=0,
                 budget=DEFAULT_BUDGET, batch=16384):
    """Energy process H at q-step block ends near the frame's resonance.

    Simulates M orbits for n_blocks blocks of q steps, evaluates the
    pendulum energy H(theta, R) with R = (r - p/q) / sqrt(eps) at each
    block end (the co-rotation is trivial there: q steps advance theta
    by p, a full turn), and compares per-block increments against the
    resonant prediction eps * b_RR for the mean and eps * sigma2_RR for
    the variance.  Orbits leaving |R| <= K1 stop contributing and are
    counted as escaped.
    """
    from .resonance import hamiltonian_H, rr_drift_variance

    eps = fam.epsilon
    q = frame.q
    n_blocks, M = int(n_blocks), int(M)
    _budget_check(n_blocks * q, M, budget)
    sqrt_eps = math.sqrt(eps)
    R0 = (x0.r - frame.r0) / sqrt_eps
    b_pred, s2_pred = rr_drift_variance(frame, x0.theta, R0)
    increments = []
    escaped_total = 0
    for _, seeds in _batched_seeds(M, master_seed, batch):
        pack = LanePack(fam, x0.theta, x0.r, seeds)
        m = len(seeds)
        h_prev = np.full(m, float(hamiltonian_H(frame, x0.theta, R0)))
        ok = np.ones(m, dtype=bool)
        for _ in range(n_blocks):
            for _ in range(q):
                pack.advance()
            R = (pack.r - frame.r0) / sqrt_eps
            h_now = hamiltonian_H(frame, pack.theta, R)
            inside = ok & (np.abs(R) <= frame.k1)
            increments.append((h_now - h_prev)[inside])
            escaped_total += int(np.count_nonzero(ok & ~inside))
            ok = inside
            h_prev = h_now
    inc = np.concatenate(increments) if increments else np.array([])
    mean = float(np.mean(inc)) if inc.size else 0.0
    se = (float(np.std(inc, ddof=1) / math.sqrt(inc.size))
          if inc.size > 1 else 0.0)
    return RRBlockReport(
        mean_increment=mean,
        se_increment=se,
        predicted_drift=float(eps * np.asarray(b_pred).reshape(())),
        predicted_variance=float(eps * np.asarray(s2_pred).reshape(())),
        n_blocks=n_blocks,
        M=M,
        escaped=escaped_total,
        increments=inc,
    )
