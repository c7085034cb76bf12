"""Diagnostics of planar minimisers and the ε-ladder study harness."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .energy2d import PField, PotentialSpec, ctilde, stability_threshold
from .energy3d import ElasticConstants, ModelParams, QField3D, minimize_eps, total_energy_eps, z_variation
from .mesh import Mesh2D, extrude
from .minimizer import BoundaryData, boundary_case1, minimize_f0_full, minimize_reduced
from .optim import SolverConfig
from .tensor import biaxiality_p, tr2_array

# |p| below this fraction of max|p| is treated as an exact zero (phase undefined)
ZERO_FRACTION = 1e-12


# ---------------------------------------------------------------------------
# vortices


@dataclass(frozen=True)
class VortexRecord:
    x: float
    y: float
    winding: int
    core_radius: float | None = None

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return asdict(self)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def loop_winding(p: np.ndarray, loop) -> int:
    ph = np.arctan2(p[loop, 1], p[loop, 0])
    d = _wrap(np.diff(np.r_[ph, ph[0]]))
    return int(round(d.sum() / (2 * np.pi)))


def plaquette_windings(field: PField) -> np.ndarray:
    """Winding of ``p`` around each cell; zero for cells touching an exact zero."""
    m = field.mesh
    ph = np.arctan2(field.p[:, 1], field.p[:, 0])
    c = m.cells
    loop = np.concatenate([c, c[:, :1]], axis=1)
    d = _wrap(np.diff(ph[loop], axis=1))
    w = np.rint(d.sum(axis=1) / (2 * np.pi)).astype(int)
    mag = field.magnitude
    tiny = ZERO_FRACTION * max(mag.max(initial=0.0), 1e-300)
    w[(mag[c] <= tiny).any(axis=1)] = 0
    return w


def _node_ring(m: Mesh2D, k: int):
    """Counter-clockwise loop of the 8 neighbours of an interior node."""
    nx1 = m.nx + 1
    i, j = k % nx1, k // nx1
    if i in (0, m.nx) or j in (0, m.ny):
        return None
    offs = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)]
    return np.array([m.index(i + a, j + b) for a, b in offs])


def _cell_zero(field: PField, cell: int):
    """Zero of the bilinear interpolant of ``p`` inside a cell, if Newton finds one."""
    m = field.mesh
    vals = field.p[m.cells[cell]]
    ref = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    xi = np.zeros(2)
    for _ in range(30):
        n = 0.25 * (1 + ref[:, 0] * xi[0]) * (1 + ref[:, 1] * xi[1])
        dxi = 0.25 * ref[:, 0] * (1 + ref[:, 1] * xi[1])
        deta = 0.25 * ref[:, 1] * (1 + ref[:, 0] * xi[0])
        f = n @ vals
        J = np.column_stack([dxi @ vals, deta @ vals])
        if abs(np.linalg.det(J)) < 1e-300:
            break
        step = np.linalg.solve(J, f)
        xi = np.clip(xi - step, -1.5, 1.5)
        if np.abs(step).max() < 1e-14:
            break
    xi = np.clip(xi, -1, 1)
    n = 0.25 * (1 + ref[:, 0] * xi[0]) * (1 + ref[:, 1] * xi[1])
    return n @ m.nodes[m.cells[cell]]


def core_radius(field: PField, center, plateau: float, n_rays: int = 16) -> float | None:
    """Mean distance along rays from ``center`` where ``|p|`` first reaches plateau/2."""
    m = field.mesh
    h = m.h
    reach = min(0.5, float(m.dist_to_boundary(np.atleast_2d(center))[0]))
    if reach <= h:
        return None
    s = np.arange(0.0, reach, h / 8)
    out = []
    for a in 2 * np.pi * np.arange(n_rays) / n_rays:
        pts = np.asarray(center) + s[:, None] * np.array([math.cos(a), math.sin(a)])
        mag = np.hypot(*m.interpolate(field.p, pts).T)
        r = _first_crossing(s, mag, 0.5 * plateau)
        if r is not None:
            out.append(r)
    return float(np.mean(out)) if out else None


def find_vortices(field: PField, plateau: float | None = None) -> list[VortexRecord]:
    """Zeros of ``p`` detected by nonzero plaquette winding.

    Records closer than one cell spacing are merged (windings summed, zero
    totals dropped).  Interior nodes where ``p`` vanishes exactly are tested
    on their ring of neighbours.
    """
    m = field.mesh
    w = plaquette_windings(field)
    cand = []  # (x, y, winding)
    for c in np.flatnonzero(w):
        x, y = _cell_zero(field, c)
        cand.append((x, y, int(w[c])))
    mag = field.magnitude
    tiny = ZERO_FRACTION * max(mag.max(initial=0.0), 1e-300)
    for k in np.flatnonzero((mag <= tiny) & ~m.boundary):
        ring = _node_ring(m, k)
        if ring is None or (mag[ring] <= tiny).any():
            continue
        wk = loop_winding(field.p, ring)
        if wk:
            cand.append((m.nodes[k, 0], m.nodes[k, 1], wk))
    if not cand:
        return []
    pts = np.array([c[:2] for c in cand])
    wind = np.array([c[2] for c in cand])
    dist = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    adj = sparse.csr_matrix(dist <= 1.01 * m.h)
    ncomp, labels = csgraph.connected_components(adj, directed=False)
    plateau = float(mag.max()) if plateau is None else plateau
    out = []
    for lab in range(ncomp):
        sel = labels == lab
        total = int(wind[sel].sum())
        if total == 0:
            continue
        cx, cy = pts[sel].mean(axis=0)
        out.append(VortexRecord(float(cx), float(cy), total, core_radius(field, (cx, cy), plateau)))
    out.sort(key=lambda r: (round(r.x, 12), round(r.y, 12)))
    return out


# ---------------------------------------------------------------------------
# boundary layer


def _first_crossing(s: np.ndarray, f: np.ndarray, level: float) -> float | None:
    above = np.flatnonzero(f >= level)
    if above.size == 0:
        return None
    k = above[0]
    if k == 0:
        return float(s[0])
    f0, f1 = f[k - 1], f[k]
    return float(s[k - 1] + (level - f0) / (f1 - f0) * (s[k] - s[k - 1]))


def _inward_rays(m: Mesh2D, n_rays: int):
    if m.shape == "disc":
        a = 2 * np.pi * (np.arange(n_rays) + 0.5) / n_rays
        start = np.column_stack([np.cos(a), np.sin(a)])
        return start, -start
    per = max(n_rays // 4, 1)
    t = 0.25 + 0.5 * (np.arange(per) + 0.5) / per  # stay away from corners
    starts, normals = [], []
    for (x0, y0), (nx, ny), (tx, ty) in (
        ((0, 0), (0, 1), (1, 0)),
        ((1, 0), (-1, 0), (0, 1)),
        ((1, 1), (0, -1), (-1, 0)),
        ((0, 1), (1, 0), (0, -1)),
    ):
        for tt in t:
            starts.append((x0 + tt * tx, y0 + tt * ty))
            normals.append((nx, ny))
    return np.array(starts, float), np.array(normals, float)


def boundary_layer_width(field: PField, plateau: float, fraction: float = 0.9, n_rays: int = 64) -> float:
    """Mean distance from ∂Ω along inward normals at which ``|p|`` first
    reaches ``fraction * plateau``."""
    m = field.mesh
    starts, normals = _inward_rays(m, n_rays)
    L = 0.5 if m.shape == "square" else 1.0
    s = np.arange(0.0, L, m.h / 8)
    widths = []
    for x0, nv in zip(starts, normals):
        pts = x0 + s[:, None] * nv
        mag = np.hypot(*m.interpolate(field.p, pts).T)
        r = _first_crossing(s, mag, fraction * plateau)
        if r is not None:
            widths.append(r)
    if not widths:
        raise ValueError("|p| never reaches the requested fraction of the plateau")
    return float(np.mean(widths))


def fit_exponent(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# biaxiality


def biaxiality_field(field: PField) -> np.ndarray:
    return np.asarray(biaxiality_p(field.magnitude, field.b_values), dtype=float)


@dataclass(frozen=True)
class RingCheck:
    encloses: bool  # the core's {|p| < β/2} component stays off ∂Ω
    crossings: int  # edges of that component crossing |p| = β/2
    min_xi: float  # smallest ξ at the interpolated crossing points
    max_offset: float  # largest distance of a crossing point from its edge's nodes, in cells

    def to_dict(self) -> dict:
        return asdict(self)


def biaxial_ring(field: PField, core) -> RingCheck:
    """Check that the ξ = 1 locus ``|p| = β/2`` closes around a core.

    The node set ``{|p| < β/2}`` is split into edge-connected components; the
    one nearest ``core`` must not reach a boundary node.  Each mesh edge from
    that component to a node with ``|p| ≥ β/2`` carries one crossing of the
    level set, located by linear interpolation of ``|p|``; ξ is evaluated at
    the crossing from the linearly interpolated ``p``.
    """
    m = field.mesh
    beta = field.beta
    level = beta / 2
    mag = field.magnitude
    inside = mag < level
    c = m.cells
    edges = np.concatenate([c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 3]], c[:, [3, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    both = inside[edges[:, 0]] & inside[edges[:, 1]]
    e_in = edges[both]
    adj = sparse.csr_matrix((np.ones(len(e_in)), (e_in[:, 0], e_in[:, 1])), shape=(m.n_nodes,) * 2)
    _, labels = csgraph.connected_components(adj, directed=False)
    cand = np.flatnonzero(inside)
    if cand.size == 0:
        return RingCheck(False, 0, float("nan"), float("nan"))
    k0 = cand[np.argmin(np.hypot(*(m.nodes[cand] - np.asarray(core)).T))]
    comp = inside & (labels == labels[k0])
    encloses = not bool((comp & m.boundary).any())
    cross = edges[comp[edges[:, 0]] ^ comp[edges[:, 1]]]
    xis, offs = [], []
    for a, b in cross:
        if not comp[a]:
            a, b = b, a
        if mag[b] < level:  # neighbour below the level but in another component
            continue
        t = (level - mag[a]) / (mag[b] - mag[a])
        p = (1 - t) * field.p[a] + t * field.p[b]
        bb = (1 - t) * field.b_values[a] + t * field.b_values[b]
        xis.append(float(biaxiality_p(math.hypot(*p), bb)))
        offs.append(min(t, 1 - t))
    if not xis:
        return RingCheck(encloses, 0, float("nan"), float("nan"))
    return RingCheck(encloses, len(xis), float(min(xis)), float(max(offs)))


# ---------------------------------------------------------------------------
# ε-ladder study


@dataclass(frozen=True)
class GammaStudyRow:
    epsilon: float
    energy: float
    initial_energy: float  # F_ε of the z-independent extension
    z_variation: float
    l2_distance: float  # z-averaged 3D minimiser vs 2D minimiser
    iterations: int
    status: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GammaStudy:
    f0_min: float
    f0_iterations: int
    f0_status: str
    rows: list

    def trends(self) -> dict:
        zv = [r.z_variation for r in self.rows]
        gap = [abs(r.energy - self.f0_min) for r in self.rows]
        dec = lambda v: all(b < a for a, b in zip(v, v[1:]))
        return {
            "z_variation_decreasing": dec(zv),
            "energy_gap_decreasing": dec(gap),
            "upper_bound_holds": all(r.energy <= self.f0_min * (1 + 1e-9) + 1e-12 for r in self.rows),
            "initial_matches_f0": max(abs(r.initial_energy - self.f0_min) for r in self.rows)
            <= 1e-9 * max(1.0, abs(self.f0_min)),
        }

    def to_dict(self) -> dict:
        return {
            "f0_min": self.f0_min,
            "f0_iterations": self.f0_iterations,
            "f0_status": self.f0_status,
            "rows": [r.to_dict() for r in self.rows],
            "trends": self.trends(),
        }


def l2_distance(mesh: Mesh2D, q1: np.ndarray, q2: np.ndarray) -> float:
    return float(math.sqrt(np.sum(mesh.mass * tr2_array(q1 - q2))))


def gamma_study(
    epsilons,
    mesh: Mesh2D,
    nz: int,
    bd: BoundaryData,
    ec: ElasticConstants,
    mp: ModelParams,
    cfg: SolverConfig,
) -> GammaStudy:
    """Minimise F_0, then F_ε from the trivial extension for each ε.

    The 3D runs start from the z-independent extension of the 2D minimiser,
    so ``initial_energy`` equals ``f0_min`` up to roundoff.
    """
    q0, br0, rep0 = minimize_f0_full(mesh, bd, ec, mp, cfg)
    mesh3 = extrude(mesh, nz)
    rows = []
    for eps in epsilons:
        mpe = mp.with_epsilon(float(eps))
        start = QField3D.extend(mesh3, q0.q)
        e0 = total_energy_eps(start, ec, mpe).total
        f, br, rep = minimize_eps(start, ec, mpe, cfg)
        rows.append(
            GammaStudyRow(
                float(eps),
                br.total,
                e0,
                z_variation(f),
                l2_distance(mesh, f.z_average(), q0.q),
                rep.iterations,
                rep.status,
            )
        )
    return GammaStudy(br0.total, rep0.iterations, rep0.status, rows)


# ---------------------------------------------------------------------------
# linear stability of the zero state


@dataclass(frozen=True)
class StabilityRow:
    delta: float
    threshold: float
    predicted: str  # trivial | nontrivial
    observed: str
    sup_p: float
    status: str

    @property
    def agrees(self) -> bool:
        return self.predicted == self.observed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agrees"] = self.agrees
        return d


NONTRIVIAL_AMPLITUDE = 1e-4


def stability_report(mesh: Mesh2D, A: float, B: float, beta: float, deltas, cfg: SolverConfig) -> list[StabilityRow]:
    """Compare the sign of the stability eigenvalue with solver outcomes.

    Case 1 data; each δ is relaxed from the seeded small perturbation, and a
    run counts as nontrivial when ``sup |p|`` exceeds 1e-4.
    """
    C = ctilde(A, B, beta)
    bd = boundary_case1(mesh, beta)
    rows = []
    for delta in deltas:
        spec = PotentialSpec(C, float(delta))
        thr = stability_threshold(mesh, spec)
        f, rep = minimize_reduced(mesh, bd, spec, replace(cfg, continuation=()))
        sup = float(f.magnitude.max())
        rows.append(
            StabilityRow(
                float(delta),
                thr,
                "trivial" if thr > 0 else "nontrivial",
                "nontrivial" if sup > NONTRIVIAL_AMPLITUDE else "trivial",
                sup,
                rep.status,
            )
        )
    return rows

