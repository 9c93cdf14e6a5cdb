"""Dynamics near a low-order resonance p/q: composite maps and level-set graphs.

Close to a resonance the natural object is the q-fold composite of the
random map, watched in the co-rotating frame theta -> theta - t p/q with
the rescaled action R = (r - p/q) / sqrt(eps).  To leading order the
composite follows the pendulum Hamiltonian

    H(theta, R) = R^2 / 2 - V(theta),      V' = averaged potential,

and the limiting slow process lives on the graph of connected components
of H level sets.  This module builds the composite potentials, the
Hamiltonian, its critical points, the level-set graph (by flood fill on a
grid), and the drift/variance fields of the resonant and transition-zone
regimes.

Critical points are labeled geometrically: a local minimum of V is a
saddle of H and a local maximum is a focus (the Hessian of H there is
diag(-V'', 1)).  Note the source text's prose swaps those two words; the
graph structure, in particular which level the separatrix sits on, only
closes up with the geometric labeling used here.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .hypotheses import TAU, find_zeros
from .normal_form import E3_series, averaged_potential, default_gamma

__all__ = [
    "ResonantFrame",
    "composite_map",
    "hamiltonian_H",
    "critical_points",
    "ReebGraph",
    "reeb_graph",
    "rr_drift_variance",
    "tz_variance",
]


@dataclass(frozen=True)
class ResonantFrame:
    """Composite-map potentials in the co-rotating frame of p/q.

    All second slots follow the absolute-action convention: an offset
    `rhat` means evaluation of the original potentials at r = p/q + rhat.
    The omega argument of the fluctuating sums is a block of q symbols.
    """

    fam: object
    p: int
    q: int
    gamma: float
    k1: float = 1.0

    def __post_init__(self):
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"p/q = {self.p}/{self.q} is not reduced")
        if not (1 <= self.q <= self.fam.degree):
            raise ValueError(
                f"resonant regime needs 1 <= q <= degree = {self.fam.degree}, "
                f"got q = {self.q}"
            )

    # -- building blocks ----------------------------------------------

    @property
    def r0(self):
        return self.p / self.q

    def _evpq(self):
        return averaged_potential(self.fam, self.p, self.q)

    def potential_V(self, theta):
        """V(theta) = integral_0^theta of the averaged potential at p/q."""
        g = self._evpq().freeze_r(self.r0)
        if g.is_zero:
            return np.zeros_like(np.asarray(theta, dtype=float))
        A = g.antiderivative_theta()
        return A(theta, self.r0)

    # -- composite potentials -----------------------------------------

    def mean_v_q(self, theta, rhat=0.0):
        """E v^(q): sum of averaged potentials along the q translates."""
        g = self._evpq()
        r = self.r0 + rhat
        acc = np.zeros_like(np.asarray(theta, dtype=float))
        for i in range(self.q):
            acc = acc + g(theta + i * (self.r0 + rhat), r)
        return acc

    def mean_v_q_dtheta(self, theta, rhat=0.0):
        g = self._evpq().dtheta()
        r = self.r0 + rhat
        acc = np.zeros_like(np.asarray(theta, dtype=float))
        for i in range(self.q):
            acc = acc + g(theta + i * (self.r0 + rhat), r)
        return acc

    def mean_u_q(self, theta):
        """E u^(q) with the triangular resonant-average correction."""
        eu = self.fam.mean_u()
        ev = self.fam.mean_v()
        g = self._evpq()
        e3 = E3_series(self.fam, self.p, self.q)
        acc = np.zeros_like(np.asarray(theta, dtype=float))
        for i in range(self.q):
            ti = theta + i * self.r0
            acc = acc + (
                eu(ti, self.r0)
                - ev(ti, self.r0)
                + (self.q - i) * g(ti, self.r0)
                + e3(ti, self.r0)
            )
        return acc

    def osc_v_q(self, theta, rhat, omega):
        """v^(q)(theta, rhat, omega) = sum_i omega_i vbar(theta + i(p/q+rhat))."""
        omega = np.asarray(omega, dtype=float)
        if omega.shape[-1] != self.q:
            raise ValueError(f"omega block must have length q = {self.q}")
        vbar = self.fam.osc_v()
        r = self.r0 + rhat
        acc = 0.0
        for i in range(self.q):
            acc = acc + omega[..., i] * vbar(theta + i * (self.r0 + rhat), r)
        return acc

    def osc_u_q(self, theta, omega):
        """u^(q): triangular-weighted sum of (ubar + vbar) translates at p/q."""
        omega = np.asarray(omega, dtype=float)
        if omega.shape[-1] != self.q:
            raise ValueError(f"omega block must have length q = {self.q}")
        uv = self.fam.osc_u() + self.fam.osc_v()
        acc = 0.0
        for i in range(self.q):
            acc = acc + (self.q - i) * omega[..., i] * uv(theta + i * self.r0, self.r0)
        return acc

    def translate_variance(self, theta, rhat=0.0):
        """sum_{i<q} vbar^2 at the q translates (the strip variance core)."""
        vbar = self.fam.osc_v()
        r = self.r0 + rhat
        acc = np.zeros_like(np.asarray(theta, dtype=float))
        for i in range(self.q):
            acc = acc + vbar(theta + i * (self.r0 + rhat), r) ** 2
        return acc

    def g_field(self, theta, R, omega, epsilon=None):
        """Fluctuating part G of the energy increment over one q-block.

        Second-order potential terms are set to zero and the offset is
        frozen at rhat = 0:

            G = -(1/q) Ev_q u_q - (1/q) v_q * int_0^theta d_rhat Ev_q
                + (1/2) sum_{i != j} w_i w_j vbar_i vbar_j + Ev_q v_q.

        The source display writes the first term with a plus sign; that
        sign (together with two slips in F, see rr_drift_variance) breaks
        the displayed energy-increment identity, which closes at order
        eps^(3/2) with the signs used here.  Checked by enumerating all
        symbol blocks against the composite one-block system.
        """
        theta = np.asarray(theta, dtype=float)
        omega = np.asarray(omega, dtype=float)
        vbar = self.fam.osc_v()
        evq = self.mean_v_q(theta, 0.0)
        t1 = -evq * self.osc_u_q(theta, omega) / self.q
        t2 = -self.osc_v_q(theta, 0.0, omega) * self._int_dr_mean_v_q(theta) / self.q
        vals = np.stack(
            [vbar(theta + i * self.r0, self.r0) for i in range(self.q)], axis=-1
        )
        weighted = omega * vals
        tot = np.sum(weighted, axis=-1)
        t3 = 0.5 * (tot**2 - np.sum(weighted**2, axis=-1))
        t4 = evq * self.osc_v_q(theta, 0.0, omega)
        return t1 + t2 + t3 + t4

    def _int_dr_mean_v_q(self, theta):
        """int_0^theta of the rhat-derivative of Ev_q at rhat = 0, exactly."""
        g = self._evpq().freeze_r(self.r0)
        gr = self._evpq().dr().freeze_r(self.r0)
        acc = np.zeros_like(np.asarray(theta, dtype=float))
        for i in range(self.q):
            c = i * self.r0
            acc = acc + i * (g(theta + c, self.r0) - g(np.asarray(c), self.r0))
            if not gr.is_zero:
                A = gr.antiderivative_theta()
                acc = acc + A(theta + c, self.r0) - A(np.asarray(c), self.r0)
        return acc


def composite_map(fam, p, q, gamma=None, k1=1.0):
    """Build the co-rotating composite frame at the resonance p/q."""
    if gamma is None:
        gamma = default_gamma(fam.degree)
    return ResonantFrame(fam=fam, p=int(p), q=int(q), gamma=float(gamma), k1=float(k1))


def hamiltonian_H(frame, theta, R, epsilon=0.0):
    """Pendulum Hamiltonian H = R^2/2 - (1/q) int_0^theta Ev_q.

    With epsilon = 0 (the default, matching the frozen-slot convention)
    the integral collapses to the single-resonance potential V.  A
    positive epsilon honors the R*sqrt(eps) coupling in the second slot,
    still with exact per-harmonic antiderivatives.
    """
    theta = np.asarray(theta, dtype=float)
    R = np.asarray(R, dtype=float)
    if not epsilon:
        pot = frame.potential_V(theta)
    else:
        rhat = R * math.sqrt(epsilon)
        g = frame._evpq()
        acc = np.zeros(np.broadcast(theta, R).shape)
        for i in range(frame.q):
            c = i * (frame.r0 + rhat)
            gf = g.freeze_r(frame.r0 + rhat) if np.ndim(rhat) == 0 else None
            if gf is None:
                raise ValueError("epsilon coupling needs scalar R")
            if gf.is_zero:
                continue
            A = gf.antiderivative_theta()
            acc = acc + A(theta + c, frame.r0) - A(np.asarray(c), frame.r0)
        pot = acc / frame.q
    out = 0.5 * R**2 - pot
    return float(out) if out.ndim == 0 else out


def critical_points(frame):
    """Critical points of H on R = 0: zeros of the averaged potential.

    Returns a list of (theta_c, type, H_value) sorted by theta, with type
    'saddle' at local minima of V (positive slope of the averaged
    potential) and 'focus' at local maxima.  Raises if the averaged
    potential vanishes identically or has a degenerate zero.
    """
    g = frame._evpq().freeze_r(frame.r0)
    if g.is_zero:
        raise ValueError(
            f"averaged potential at {frame.p}/{frame.q} vanishes identically; "
            "no nondegenerate critical points"
        )
    gp = g.dtheta()
    zeros = find_zeros(lambda th: g(th, frame.r0))
    out = []
    for z in zeros:
        slope = float(gp(z, frame.r0))
        if abs(slope) <= TAU:
            raise ValueError(
                f"degenerate critical point at theta = {z:.6g} "
                f"(|V''| = {abs(slope):.3g} <= {TAU})"
            )
        kind = "saddle" if slope > 0 else "focus"
        h_val = float(-frame.potential_V(np.asarray(z)))
        out.append((z, kind, h_val))
    return out


# ----------------------------------------------------------------------
# level-set graph
# ----------------------------------------------------------------------

@dataclass
class ReebGraph:
    """Graph of connected components of H level sets in |H| <= K3.

    vertices: list of {"h": level, "type": focus|saddle|boundary|degenerate}
    edges: list of {"v_from", "v_to", "h_min", "h_max", "seed_point"},
    where v_from sits at h_min and v_to at h_max.
    """

    vertices: list
    edges: list
    k3: float
    grid: int

    @property
    def n_internal_vertices(self):
        return sum(1 for v in self.vertices if v["type"] in ("focus", "saddle"))

    @property
    def n_foci(self):
        return sum(1 for v in self.vertices if v["type"] == "focus")

    @property
    def n_saddles(self):
        return sum(1 for v in self.vertices if v["type"] == "saddle")

    @property
    def n_boundary(self):
        return sum(1 for v in self.vertices if v["type"] == "boundary")

    def validate(self):
        """Degree-sum consistency: foci and boundary have degree 1, saddles 3."""
        expected = (self.n_foci + 3 * self.n_saddles + self.n_boundary) / 2
        if self.n_saddles and len(self.edges) != expected:
            raise AssertionError(
                f"edge count {len(self.edges)} != degree-sum value {expected}"
            )
        deg = [0] * len(self.vertices)
        for e in self.edges:
            deg[e["v_from"]] += 1
            deg[e["v_to"]] += 1
        for v, dv in zip(self.vertices, deg):
            want = {"focus": 1, "saddle": 3, "boundary": 1, "degenerate": 1}[v["type"]]
            if dv != want:
                raise AssertionError(
                    f"{v['type']} vertex at h = {v['h']:.4g} has degree {dv}"
                )
        return True

    def to_dict(self):
        return {
            "k3": self.k3,
            "grid": self.grid,
            "vertices": self.vertices,
            "edges": self.edges,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def to_dot(self):
        lines = ["graph reeb {"]
        for i, v in enumerate(self.vertices):
            lines.append(
                f'  v{i} [label="{v["type"]} h={v["h"]:.4g}"];'
            )
        for e in self.edges:
            lines.append(
                f'  v{e["v_from"]} -- v{e["v_to"]} '
                f'[label="[{e["h_min"]:.4g}, {e["h_max"]:.4g}]"];'
            )
        lines.append("}")
        return "\n".join(lines)


def _level_components(theta_grid, R_grid, H_vals, level):
    """Connected components of the level set {H = level} on the grid.

    Marks every cell whose corner values straddle the level, labels the
    mask with 8-connectivity, merges labels across the periodic theta
    seam, and returns per-component summaries.
    """
    sgn = H_vals >= level
    # corner indexing: rows R, columns theta; wrap column appended
    s = np.concatenate([sgn, sgn[:, :1]], axis=1)
    crossed = ~(
        (s[:-1, :-1] == s[:-1, 1:])
        & (s[:-1, :-1] == s[1:, :-1])
        & (s[:-1, :-1] == s[1:, 1:])
    )
    labels, n = ndimage.label(crossed, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    # merge across the seam: last column is adjacent to first
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    last = labels[:, -1]
    first = labels[:, 0]
    n_rows = labels.shape[0]
    for i in range(n_rows):
        if last[i]:
            for j in (i - 1, i, i + 1):
                if 0 <= j < n_rows and first[j]:
                    union(last[i], first[j])
    roots = {}
    comp_cells = {}
    rows, cols = np.nonzero(labels)
    for i, j in zip(rows, cols):
        root = find(labels[i, j])
        comp_cells.setdefault(root, []).append((i, j))
    n_theta = H_vals.shape[1]
    out = []
    for root, cells in comp_cells.items():
        ci = np.array([c[0] for c in cells])
        cj = np.array([c[1] for c in cells])
        r_vals = 0.5 * (R_grid[ci] + R_grid[ci + 1])
        shadow = set(cj.tolist())
        if r_vals.min() > 0:
            kind = ("band", 1)
        elif r_vals.max() < 0:
            kind = ("band", -1)
        else:
            kind = ("oval", None)
        seed_idx = int(np.argmin(np.abs(r_vals)))
        seed = (
            float((cj[seed_idx] + 0.5) / n_theta),
            float(r_vals[seed_idx]),
        )
        out.append({"kind": kind, "shadow": shadow, "seed": seed})
    return out


def _identity(comp, foci_cols, n_theta):
    """Stable identity of a component: band sign or the set of enclosed foci."""
    kind, sign = comp["kind"]
    if kind == "band":
        return ("band", sign)
    shadow = comp["shadow"]
    grown = set(shadow)
    for j in shadow:
        grown.add((j - 1) % n_theta)
        grown.add((j + 1) % n_theta)
    enclosed = frozenset(f for f, col in foci_cols.items() if col in grown)
    return ("oval", enclosed)


def reeb_graph(frame, K3=None, grid=512):
    """Level-set component graph of the pendulum Hamiltonian.

    Sweeps H levels across the truncation window, flood-fills level-set
    components on a (theta, R) grid, and quotients each level to one
    point per component.  Components merge or split exactly at saddle
    levels; every maximal family of components becomes one edge.
    """
    grid = int(grid)
    theta_grid = np.arange(grid) / grid
    V = frame.potential_V(theta_grid)
    v_max = float(np.max(V)) if V.size else 0.0
    if K3 is None:
        K3 = 1.0 + float(np.max(np.abs(V)))
    K3 = float(K3)

    degenerate = frame._evpq().freeze_r(frame.r0).is_zero
    if degenerate:
        vertices = [
            {"h": 0.0, "type": "degenerate"},
            {"h": 0.0, "type": "degenerate"},
            {"h": K3, "type": "boundary"},
            {"h": K3, "type": "boundary"},
        ]
        mid = math.sqrt(K3)
        edges = [
            {"v_from": 0, "v_to": 2, "h_min": 0.0, "h_max": K3,
             "seed_point": (0.0, mid)},
            {"v_from": 1, "v_to": 3, "h_min": 0.0, "h_max": K3,
             "seed_point": (0.0, -mid)},
        ]
        return ReebGraph(vertices=vertices, edges=edges, k3=K3, grid=grid)

    crit = critical_points(frame)
    crit_levels = sorted(h for _, _, h in crit)
    h_gap = 2.0 * K3 / grid
    levels = crit_levels + [K3]
    for a, b in zip(levels, levels[1:]):
        if b - a < 2.0 * h_gap:
            raise ValueError(
                f"resolution error: critical levels {a:.6g} and {b:.6g} "
                f"closer than 2 grid gaps ({2 * h_gap:.3g}); increase grid"
            )
    if max(abs(h) for h in crit_levels) >= K3:
        raise ValueError("truncation K3 must exceed every critical level")

    r_max = math.sqrt(2.0 * (K3 + max(v_max, 0.0))) * 1.05
    R_grid = np.linspace(-r_max, r_max, grid + 1)
    H_vals = 0.5 * R_grid[:, None] ** 2 - V[None, :]

    vertices = []
    vertex_of_crit = {}
    foci_cols = {}
    for idx, (tc, kind, h) in enumerate(crit):
        vertex_of_crit[idx] = len(vertices)
        vertices.append({"h": h, "type": kind})
        if kind == "focus":
            foci_cols[idx] = int(tc * grid) % grid
    focus_vertex_by_id = {
        frozenset([idx]): vertex_of_crit[idx]
        for idx, (_, kind, _) in enumerate(crit)
        if kind == "focus"
    }
    saddle_vertex_at_level = {
        h: vertex_of_crit[idx]
        for idx, (_, kind, h) in enumerate(crit)
        if kind == "saddle"
    }

    sweep = sorted(set(crit_levels)) + [K3]
    lo = sweep[0]
    intervals = []
    prev = lo
    for h in sweep[1:]:
        intervals.append((prev, h))
        prev = h

    active = {}
    edges = []

    def open_edge(ident, h_at, vertex, seed):
        active[ident] = {"v_from": vertex, "h_min": h_at, "seed_point": seed}

    def close_edge(ident, h_at, vertex):
        rec = active.pop(ident)
        edges.append(
            {
                "v_from": rec["v_from"],
                "v_to": vertex,
                "h_min": rec["h_min"],
                "h_max": h_at,
                "seed_point": rec["seed_point"],
            }
        )

    for h_lo, h_hi in intervals:
        mid = 0.5 * (h_lo + h_hi)
        comps = _level_components(theta_grid, R_grid, H_vals, mid)
        idents = {}
        for comp in comps:
            ident = _identity(comp, foci_cols, grid)
            if ident in idents:
                raise ValueError(
                    "resolution error: two components share an identity; "
                    "increase grid"
                )
            idents[ident] = comp
        born = set(idents) - set(active)
        died = set(active) - set(idents)
        if died or (born and h_lo in saddle_vertex_at_level and active):
            vertex = saddle_vertex_at_level.get(h_lo)
            if vertex is None:
                raise ValueError(
                    "components changed away from a saddle level; "
                    "increase grid"
                )
            for ident in died:
                close_edge(ident, h_lo, vertex)
            for ident in born:
                open_edge(ident, h_lo, vertex, idents[ident]["seed"])
        else:
            for ident in born:
                if ident[0] == "oval" and ident[1] in focus_vertex_by_id:
                    vertex = focus_vertex_by_id[ident[1]]
                    open_edge(ident, h_lo, vertex, idents[ident]["seed"])
                else:
                    raise ValueError(
                        "component born away from focus or saddle; increase grid"
                    )

    for ident in sorted(active, key=str):
        vertices.append({"h": K3, "type": "boundary"})
        close_edge(ident, K3, len(vertices) - 1)

    graph = ReebGraph(vertices=vertices, edges=edges, k3=K3, grid=grid)
    graph.validate()
    return graph


# ----------------------------------------------------------------------
# drift and variance fields
# ----------------------------------------------------------------------

def rr_drift_variance(frame, theta, R):
    """Drift F(theta, R) and variance of the resonant energy process.

    Assembles F from its five terms (the second-order potential
    contributions are zero by construction) and pairs it with the
    variance R^2 * sum_i vbar^2(theta + i p/q, p/q).  Valid for
    |R| <= K1.

    Three defects in the source display are corrected here, all traceable
    to a dropped minus on the potential-increment row of the derivation:
    the Ev_q*Eu_q and R^2*dEv_q/dtheta terms enter with minus signs, and
    the integral term pairs Ev_q with the antiderivative of the
    rhat-derivative of Ev_q (the display lost the derivative; the
    fluctuating field's matching term has it).  With these signs the
    one-block energy-increment identity closes at order eps^(3/2) for
    every symbol block, which is what the downstream stopping-time
    machinery actually uses.  At a critical point with R = 0 every
    disputed term vanishes, so the classical value b(theta*, 0) =
    (1/2) sum_i vbar^2 is unaffected.
    """
    theta = np.asarray(theta, dtype=float)
    R_arr = np.asarray(R, dtype=float)
    if np.any(np.abs(R_arr) > frame.k1):
        raise ValueError(
            f"|R| exceeds K1 = {frame.k1}; transition-zone machinery applies"
        )
    q = frame.q
    evq = frame.mean_v_q(theta, 0.0)
    t1 = -evq * frame.mean_u_q(theta) / q
    t2 = -evq * frame._int_dr_mean_v_q(theta) / q
    t3 = -0.5 * q * R_arr**2 * frame.mean_v_q_dtheta(theta, 0.0)
    t4 = 0.5 * evq**2
    tv = frame.translate_variance(theta, 0.0)
    t5 = 0.5 * tv
    b_rr = t1 + t2 + t3 + t4 + t5
    sigma2_rr = R_arr**2 * tv
    return b_rr, sigma2_rr


def tz_variance(frame, theta, r):
    """Transition-zone variance: sum_i vbar^2(theta + i r, r).

    `r` is the absolute action; it must lie in the annulus
    K1 sqrt(eps) <= |r - p/q| <= gamma around the frame's resonance.
    """
    rhat = float(r) - frame.r0
    eps = frame.fam.epsilon
    lo = frame.k1 * math.sqrt(eps)
    if not (lo <= abs(rhat) <= frame.gamma):
        raise ValueError(
            f"|r - {frame.p}/{frame.q}| = {abs(rhat):.3g} outside the TZ annulus "
            f"[{lo:.3g}, {frame.gamma:.3g}]"
        )
    return frame.translate_variance(np.asarray(theta, dtype=float), rhat)
