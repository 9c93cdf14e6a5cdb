"""Random compositions of perturbed twist maps on the cylinder.

One step of the system applies a randomly chosen member of a finite family
of maps

    theta' = theta + r + eps * u_w(theta, r)          (mod 1)
    r'     = r + eps * v_w(theta, r) + eps^2 * w_w(theta, r)

where the label w is drawn i.i.d. from a finite alphabet (by default a
fair coin on {-1, +1}).  The module also fixes the reproducibility
contract: a 64-bit master seed expands into per-orbit streams through a
SplitMix64 finalizer, and each orbit's labels come from a counter-based
Philox generator, one bit per step in the fair two-symbol case.
"""

from dataclasses import dataclass, field

import numpy as np

from .trig import TrigPoly

__all__ = [
    "MapFamily",
    "PhasePoint",
    "OrbitRecord",
    "LanePack",
    "step",
    "iterate",
    "orbit_seed",
    "draw_symbols",
]

# Salt for the second Philox key word and the per-orbit seed spread.
# This is the usual 64-bit golden-ratio constant.
_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _splitmix64(x):
    """SplitMix64 finalizer; a bijection on 64-bit words."""
    z = x & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def orbit_seed(master_seed, index):
    """Derive the seed of orbit `index` from the ensemble master seed.

    Distinct indices give distinct seeds: the finalizer is a bijection
    and the inputs master ^ ((index+1) * golden) are pairwise distinct.
    """
    x = (int(master_seed) ^ (((int(index) + 1) * _GOLDEN) & _MASK)) & _MASK
    return _splitmix64(x)


def _bitgen(seed):
    key = np.array([int(seed) & _MASK, _GOLDEN], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_symbols(family, seed, n):
    """Draw n i.i.d. labels for one orbit; returns an int array of symbols.

    Fair two-symbol families consume one bit per step (64 steps per
    Philox word, least-significant bit first).  Other distributions fall
    back to 53-bit uniforms against the cumulative table.
    """
    gen = _bitgen(seed)
    n = int(n)
    if family.is_fair_pair:
        n_words = (n + 63) // 64
        words = gen.integers(0, 2**64, size=n_words, dtype=np.uint64)
        bits = (
            (words[:, None] >> np.arange(64, dtype=np.uint64)) & np.uint64(1)
        ).reshape(-1)[:n]
        lo, hi = family.symbols
        return np.where(bits == 1, hi, lo).astype(np.int64)
    cum = np.cumsum(family.probabilities)
    idx = np.searchsorted(cum, gen.random(n), side="right")
    idx = np.minimum(idx, len(family.symbols) - 1)
    return np.asarray(family.symbols, dtype=np.int64)[idx]


@dataclass(frozen=True)
class PhasePoint:
    """A point (theta, r) on the cylinder; theta is stored mod 1."""

    theta: float
    r: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % 1.0)
        object.__setattr__(self, "r", float(self.r))


@dataclass(frozen=True)
class MapFamily:
    """A finite family of perturbed twist maps with a sampling law.

    Parameters
    ----------
    epsilon : float
        Perturbation size in [0, 1).  Zero is allowed and gives the
        unperturbed twist (handy for degenerate checks).
    u, v : tuple of TrigPoly
        Angle and action potentials, one per symbol, in the order of
        `symbols`.  Each v_i must satisfy max |v_i| <= 1; families that
        violate the normalization are rejected (rescale the potentials
        and fold the factor into epsilon instead).
    w : tuple of TrigPoly, optional
        Second-order action potentials; defaults to zeros.
    symbols : tuple of int
        Alphabet labels.  Default (-1, +1).
    probabilities : tuple of float
        Sampling law; must sum to 1.  Default fair.
    area_preserving : bool
        Record that every family member is exact symplectic; enables the
        zero-drift shortcut downstream.  Not verified symbolically.
    """

    epsilon: float
    u: tuple
    v: tuple
    w: tuple = None
    symbols: tuple = (-1, 1)
    probabilities: tuple = (0.5, 0.5)
    area_preserving: bool = False

    def __post_init__(self):
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        u = tuple(self.u)
        v = tuple(self.v)
        symbols = tuple(int(s) for s in self.symbols)
        probs = tuple(float(p) for p in self.probabilities)
        if len(set(symbols)) != len(symbols):
            raise ValueError("symbols must be distinct")
        if not (len(u) == len(v) == len(symbols) == len(probs)):
            raise ValueError("u, v, symbols, probabilities must align")
        if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        w = self.w
        if w is None:
            w = tuple(TrigPoly.zero() for _ in symbols)
        else:
            w = tuple(w)
            if len(w) != len(symbols):
                raise ValueError("w must align with symbols")
        r_probe = np.linspace(-2.0, 2.0, 41)
        for i, vi in enumerate(v):
            m = vi.max_abs(r_probe)
            if m > 1.0 + 1e-9:
                raise ValueError(
                    f"normalization violated: max|v[{i}]| = {m:.6g} > 1; "
                    "rescale the potential and adjust epsilon"
                )
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "probabilities", probs)

    # -- alphabet structure -------------------------------------------

    @property
    def n_symbols(self):
        return len(self.symbols)

    @property
    def is_fair_pair(self):
        return (
            self.n_symbols == 2
            and abs(self.probabilities[0] - 0.5) < 1e-15
            and abs(self.probabilities[1] - 0.5) < 1e-15
        )

    def index_of(self, symbol):
        try:
            return self.symbols.index(int(symbol))
        except ValueError:
            raise ValueError(f"unknown symbol {symbol!r}") from None

    # -- averaged and fluctuating potentials --------------------------

    def mean_u(self):
        """E u = sum_i p_i u_i as a TrigPoly."""
        out = TrigPoly.zero()
        for p, ui in zip(self.probabilities, self.u):
            out = out + ui * p
        return out

    def mean_v(self):
        out = TrigPoly.zero()
        for p, vi in zip(self.probabilities, self.v):
            out = out + vi * p
        return out

    def mean_w(self):
        out = TrigPoly.zero()
        for p, wi in zip(self.probabilities, self.w):
            out = out + wi * p
        return out

    def _pair(self):
        if not self.is_fair_pair:
            raise ValueError(
                "half-difference potentials are defined for fair two-symbol "
                "families only"
            )
        i_plus = self.index_of(+1) if 1 in self.symbols else 1
        i_minus = self.index_of(-1) if -1 in self.symbols else 0
        return i_plus, i_minus

    def osc_u(self):
        """Half-difference (u_{+1} - u_{-1}) / 2 for fair pairs."""
        ip, im = self._pair()
        return (self.u[ip] - self.u[im]) * 0.5

    def osc_v(self):
        """Half-difference (v_{+1} - v_{-1}) / 2 for fair pairs."""
        ip, im = self._pair()
        return (self.v[ip] - self.v[im]) * 0.5

    @property
    def degree(self):
        return max(
            [g.degree for g in self.u]
            + [g.degree for g in self.v]
            + [g.degree for g in self.w]
        )


def step(family, point, symbol):
    """Apply the map with the given symbol once.

    The angle update uses the pre-step action (a skew rule: theta first,
    then r), matching the generating order of the composition.
    """
    i = family.index_of(symbol)
    eps = family.epsilon
    th, r = point.theta, point.r
    th_new = (th + r + eps * float(family.u[i](th, r))) % 1.0
    r_new = r + eps * float(family.v[i](th, r)) + eps * eps * float(family.w[i](th, r))
    return PhasePoint(th_new, r_new)


@dataclass
class OrbitRecord:
    """A sampled orbit: states at multiples of `thin`, plus all symbols."""

    theta: np.ndarray
    r: np.ndarray
    symbols: np.ndarray
    thin: int = 1
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return len(self.symbols)

    def displacement(self):
        """Total action displacement r_n - r_0."""
        return float(self.r[-1] - self.r[0])


class LanePack:
    """A pack of orbits advancing in lockstep, one random stream per lane.

    This is the arithmetic reference for every simulation in the package:
    iterate() runs a single lane through it and the ensemble runners use
    wide packs, so orbit j of an ensemble is bit-identical to iterate with
    seed = orbit_seed(master, j) regardless of batching.

    Streams are keyed exactly as draw_symbols and consumed in the same
    order (64 signs per Philox word, least-significant bit first).  The
    action update is accumulated with Kahan compensation per lane: over
    1e8 steps of size eps the uncompensated rounding noise would be
    visible against the diffusive variance signal.
    """

    _REFILL = 2048  # steps per random refill; a multiple of 64

    def __init__(self, family, theta0, r0, seeds):
        if not family.is_fair_pair:
            raise NotImplementedError(
                "the vectorized kernel handles fair two-symbol families; "
                "general alphabets go through step()"
            )
        self.family = family
        self.eps = family.epsilon
        m = len(seeds)
        self.theta = np.full(m, float(theta0) % 1.0)
        self.r = np.full(m, float(r0))
        self._comp = np.zeros(m)
        self.alive = np.ones(m, dtype=bool)
        self._gens = [_bitgen(s) for s in seeds]
        self._signs = None
        self._cursor = 0
        hi_idx = family.symbols.index(1) if 1 in family.symbols else 1
        lo_idx = family.symbols.index(-1) if -1 in family.symbols else 0
        self._u = (family.u[lo_idx], family.u[hi_idx])
        self._v = (family.v[lo_idx], family.v[hi_idx])
        self._w = (family.w[lo_idx], family.w[hi_idx])
        self._w_zero = self._w[0].is_zero and self._w[1].is_zero
        self._u_is_v = self._u[0] == self._v[0] and self._u[1] == self._v[1]
        self._sym = (family.symbols[lo_idx], family.symbols[hi_idx])

    def __len__(self):
        return self.r.size

    def _refill(self):
        n_words = self._REFILL // 64
        words = np.stack(
            [g.integers(0, 2**64, size=n_words, dtype=np.uint64)
             for g in self._gens]
        )
        bits = (
            (words[:, :, None] >> np.arange(64, dtype=np.uint64))
            & np.uint64(1)
        ).reshape(words.shape[0], -1)
        self._signs = bits.astype(np.int8) * 2 - 1
        self._cursor = 0

    def advance(self):
        """One map step for every lane; returns the sign vector used."""
        if self._signs is None or self._cursor >= self._signs.shape[1]:
            self._refill()
        s = self._signs[:, self._cursor]
        self._cursor += 1
        hi = s > 0
        z = np.exp(2j * np.pi * self.theta)
        v_val = np.where(
            hi,
            self._v[1]._eval_with_z(z, self.r),
            self._v[0]._eval_with_z(z, self.r),
        )
        if self._u_is_v:
            u_val = v_val
        else:
            u_val = np.where(
                hi,
                self._u[1]._eval_with_z(z, self.r),
                self._u[0]._eval_with_z(z, self.r),
            )
        dr = self.eps * v_val
        if not self._w_zero:
            dr = dr + (self.eps * self.eps) * np.where(
                hi,
                self._w[1]._eval_with_z(z, self.r),
                self._w[0]._eval_with_z(z, self.r),
            )
        self.theta = (self.theta + self.r + self.eps * u_val) % 1.0
        y = dr - self._comp
        t = self.r + y
        self._comp = (t - self.r) - y
        self.r = t
        return s

    def symbols_of(self, signs):
        """Map +-1 sign draws to the family's symbol values."""
        return np.where(np.asarray(signs) > 0, self._sym[1], self._sym[0])

    def compact(self, keep):
        """Drop lanes not in `keep` (an index array); returns nothing."""
        self.theta = self.theta[keep]
        self.r = self.r[keep]
        self._comp = self._comp[keep]
        self.alive = self.alive[keep]
        self._gens = [self._gens[i] for i in keep]
        if self._signs is not None:
            self._signs = self._signs[keep]


def iterate(family, point, n_steps, seed, thin=1):
    """Run one orbit for n_steps with labels drawn from `seed`.

    Returns an OrbitRecord holding theta and r at steps 0, thin, 2*thin,
    ..., n_steps (the final state is always included) and the full symbol
    sequence.  Deterministic: the same (family, point, n_steps, seed)
    always yields the same record, and orbit j of an ensemble run is
    bit-identical to iterate with seed = orbit_seed(master, j).

    Fair two-symbol families run through the compensated lane kernel
    (the same code path as the ensembles); a step()-composed orbit agrees
    up to accumulated rounding, not bit for bit.
    """
    n_steps = int(n_steps)
    thin = max(1, int(thin))
    n_keep = n_steps // thin + 1
    extra = 1 if n_steps % thin else 0
    theta_out = np.empty(n_keep + extra)
    r_out = np.empty(n_keep + extra)
    theta_out[0] = point.theta
    r_out[0] = point.r
    j = 1
    if family.is_fair_pair:
        pack = LanePack(family, point.theta, point.r, [seed])
        signs = np.empty(n_steps, dtype=np.int8)
        for k in range(n_steps):
            signs[k] = pack.advance()[0]
            if (k + 1) % thin == 0:
                theta_out[j] = pack.theta[0]
                r_out[j] = pack.r[0]
                j += 1
        if extra:
            theta_out[j] = pack.theta[0]
            r_out[j] = pack.r[0]
            j += 1
        omegas = pack.symbols_of(signs).astype(np.int64)
    else:
        omegas = draw_symbols(family, seed, n_steps)
        x = point
        for k in range(n_steps):
            x = step(family, x, int(omegas[k]))
            if (k + 1) % thin == 0:
                theta_out[j] = x.theta
                r_out[j] = x.r
                j += 1
        if extra:
            theta_out[j] = x.theta
            r_out[j] = x.r
            j += 1
    return OrbitRecord(
        theta=theta_out[:j],
        r=r_out[:j],
        symbols=omegas,
        thin=thin,
        seed=int(seed),
    )
