"""Mixed solvers: Hodge Laplacian with harmonic forms, and linear elasticity
with weakly imposed stress symmetry.

Sign conventions
----------------
Hodge Laplacian (``0 < k <= n``), unknowns ``s`` in ``P_r^- L^{k-1}``,
``u`` in ``P_r^- L^k`` and harmonic multipliers ``p``::

    (s, t) - (u, dt)                 = -<u_D, Tr t>_boundary
   -(ds, v) - (du, dv) - (p, v)      = -(f, v)
   -(u, q)                           = 0

Elasticity: each row ``I`` of the stress is an ``(n-1)``-form whose flux
vector ``s_j = sign(c_j, j) t_{c_j}`` (``c_j`` the complement of ``j``) has
divergence ``(-1)**(n-1) dt``. With compliance ``A``, rotations ``q`` and the
skew embedding ``Q``::

    (A S, T) + (div T, u) + (T, Q q) = <T n, u_D>_{Gamma_D}
    (div S, v)                       = -(b, v)
    (S, Q q)                         = 0

Tractions on ``Gamma_N`` are imposed strongly by a boundary L2 projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .assembly import (FULL, MINUS, QUASI, Space, assemble, boundary_facets, boundary_terms,
                       impose_trace_bc, mass_integrand, resolve_orders, trace_projection)
from .mesh import HierComplex
from .simplex import permutation_parity, wedge_indices


# Hodge Laplacian

@dataclass
class HodgeLaplaceProblem:
    """Hodge Laplace problem ``(d delta + delta d) u = f`` with natural boundary conditions.

    ``f`` maps physical points ``(m, dim)`` to components ``(C(n,k), m)``.
    ``u_boundary`` (only for ``k = n``) is the scalar proxy of the prescribed
    boundary value of ``*u``. ``harmonic=None`` computes the harmonic space
    unless the topology makes it trivially empty.
    """

    k: int
    order: object = 1
    f: Callable | None = None
    u_boundary: Callable | None = None
    harmonic: bool | None = None
    variant: str = QUASI
    mode: str = "hierarchical"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")


@dataclass
class HarmonicBasis:
    """Discrete harmonic ``k``-forms as full coefficient vectors (columns)."""

    k: int
    space: Space
    vectors: np.ndarray
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class HodgeSolution:
    """Mixed solution: ``codiff`` approximates the codifferential of ``u``
    (absent for 0-forms) and ``p`` holds harmonic coordinates."""
    codiff: np.ndarray | None
    u: np.ndarray
    p: np.ndarray
    codiff_space: Space | None
    u_space: Space
    harmonic: HarmonicBasis | None
    residual: float


def _hodge_integrand(k: int, n: int, f: Callable | None):
    def integrand(geom, vals, dvals):
        mats, vecs = {}, {}
        w = geom.weights
        if k > 0:
            vs, ds = vals[0], dvals[0]
            vu = vals[1]
            mats[(0, 0)] = np.einsum("asq,bsq,q->ab", vs, vs, w)
            b = -np.einsum("asq,bsq,q->ab", vu, ds, w)
            mats[(1, 0)] = b
            mats[(0, 1)] = b.T
            ui = 1
        else:
            ui = 0
            vu = vals[0]
        if k < n:
            du = dvals[ui]
            mats[(ui, ui)] = -np.einsum("asq,bsq,q->ab", du, du, w)
        if f is not None:
            fv = np.asarray(f(geom.points), dtype=float).reshape(vu.shape[1], -1)
            vecs[ui] = -np.einsum("asq,sq,q->a", vu, fv, w)
        return mats, vecs
    return integrand


def _mixed_spaces(hc: HierComplex, k: int, order, variant: str, mode: str):
    od = resolve_orders(hc, order, mode)
    sig = Space(hc, od, k - 1, MINUS, variant) if k > 0 else None
    u = Space(hc, od, k, MINUS, variant)
    return sig, u


def _trivially_empty(hc: HierComplex, k: int) -> bool:
    return k == hc.n and len(hc.boundary_root_facets) > 0


def harmonic_forms(k: int, hc: HierComplex, order=1, variant: str = QUASI, mode: str = "hierarchical",
                   spaces: tuple | None = None, threshold: float = 1e-9) -> HarmonicBasis:
    """Kernel of the homogeneous mixed operator by dense SVD.

    Singular values below ``threshold * max`` count as kernel. The returned
    vectors are the ``u`` parts, orthonormal in L2.
    """
    sig, u = spaces if spaces is not None else _mixed_spaces(hc, k, order, variant, mode)
    fields = [s for s in (sig, u) if s is not None]
    sysm = assemble(hc, fields, _hodge_integrand(k, hc.n, None))
    a, _, p = sysm.reduced()
    dense = a.toarray()
    if dense.shape[0] == 0:
        return HarmonicBasis(k, u, np.zeros((u.ndof, 0)))
    _, sv, vt = np.linalg.svd(dense)
    tol = threshold * sv.max() if sv.size else 0.0
    kernel = vt[sv <= tol].T if sv.size else np.zeros((dense.shape[1], 0))
    full = p @ kernel
    nsig = sig.ndof if sig is not None else 0
    hu = full[nsig:]
    if hu.shape[1]:
        m = assemble(hc, [u], mass_integrand, need_d=[False]).matrix()
        g = hu.T @ (m @ hu)
        w, v = np.linalg.eigh(g)
        hu = hu @ (v / np.sqrt(np.maximum(w, 1e-300)))
    return HarmonicBasis(k, u, hu, sv)


def solve_hodge_laplace(problem: HodgeLaplaceProblem, hc: HierComplex) -> HodgeSolution:
    """Assemble and solve the mixed Hodge Laplace system."""
    k, n = problem.k, hc.n
    if k > n:
        raise ValueError("form degree exceeds the dimension")
    if problem.u_boundary is not None and k != n:
        raise ValueError("boundary data is supported for k = n only")
    sig, u = _mixed_spaces(hc, k, problem.order, problem.variant, problem.mode)
    fields = [s for s in (sig, u) if s is not None]
    sysm = assemble(hc, fields, _hodge_integrand(k, n, problem.f))
    if problem.u_boundary is not None:
        ub = problem.u_boundary
        sysm.rhs[0] = sysm.rhs[0] - boundary_terms(hc, sig, lambda x, f: np.asarray(ub(x))[None])
    a, b, pmat = sysm.reduced()
    want = problem.harmonic if problem.harmonic is not None else not _trivially_empty(hc, k)
    hb = harmonic_forms(k, hc, spaces=(sig, u)) if want else None
    nh = hb.dim if hb is not None else 0
    if nh:
        mu = assemble(hc, [u], mass_integrand, need_d=[False]).matrix()
        nsig = sig.ndof if sig is not None else 0
        pu = pmat[nsig:, :]
        coupling = -(pu.T @ (mu @ hb.vectors))
        a = sp.bmat([[a, sp.csr_matrix(coupling)], [sp.csr_matrix(coupling.T), None]], format="csc")
        b = np.concatenate([b, np.zeros(nh)])
    x = np.atleast_1d(spsolve(sp.csc_matrix(a), b))
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("singular Hodge Laplace system; check topology and boundary data")
    res = float(np.linalg.norm(a @ x - b) / max(np.linalg.norm(b), 1e-300))
    full = pmat @ x[: pmat.shape[1]]
    parts = sysm.split(full)
    if sig is None:
        return HodgeSolution(None, parts[0], x[pmat.shape[1]:], None, u, hb, res)
    return HodgeSolution(parts[0], parts[1], x[pmat.shape[1]:], sig, u, hb, res)


# elasticity

@dataclass
class ComplianceOperator:
    """Isotropic compliance ``A S = (S - c tr(S) I) / (2 mu)``."""

    mu: float
    c: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("shear modulus must be positive")

    @classmethod
    def from_material(cls, E: float, nu: float, regime: str = "plane_strain", n: int = 2) -> "ComplianceOperator":
        if regime not in ("plane_strain", "plane_stress", "3d"):
            raise ValueError(f"unknown regime {regime!r}")
        if not (-1.0 < nu <= 0.5):
            raise ValueError("Poisson ratio must lie in (-1, 0.5]")
        if regime == "3d":
            n = 3
        mu = E / (2 * (1 + nu))
        if regime == "plane_stress":
            c = nu / ((1 - nu) + n * nu)
        else:
            c = nu / ((1 - 2 * nu) + n * nu)
        return cls(mu, c)

    def apply(self, stress: np.ndarray) -> np.ndarray:
        """Strain of Cartesian stress tensors, shape ``(..., n, n)``."""
        stress = np.asarray(stress, dtype=float)
        n = stress.shape[-1]
        tr = np.trace(stress, axis1=-2, axis2=-1)
        return (stress - self.c * tr[..., None, None] * np.eye(n)) / (2 * self.mu)


def compliance_tensor(op: ComplianceOperator, jac: np.ndarray | None = None) -> np.ndarray:
    """Components ``D[I, j, K, l]`` in a frame with tangent map ``jac`` (ambient by local)."""
    jac = np.eye(2) if jac is None else np.asarray(jac, dtype=float)
    n = jac.shape[0]
    ginv = np.linalg.inv(jac.T @ jac)
    first = np.einsum("KI,jl->IjKl", np.eye(n), ginv)
    proj = jac @ ginv  # J^I_a g^{ja}
    second = np.einsum("Ij,Kl->IjKl", proj, proj)
    return (first - op.c * second) / (2 * op.mu)


def elasticity_star(stress: np.ndarray, op: ComplianceOperator, jac: np.ndarray | None = None) -> np.ndarray:
    """Strain from stress components ``stress[K, l]`` (ambient ``K``, local ``l``).

    With ``jac=None`` the frame is Cartesian and this equals :meth:`ComplianceOperator.apply`.
    The result has a lowered local index.
    """
    stress = np.asarray(stress, dtype=float)
    jac = np.eye(stress.shape[0]) if jac is None else np.asarray(jac, dtype=float)
    d = compliance_tensor(op, jac)
    raised = np.einsum("IjKl,Kl->Ij", d, stress)
    return raised @ (jac.T @ jac)


def flux_matrix(n: int) -> np.ndarray:
    """Matrix taking ``(n-1)``-form components to the flux vector."""
    rows = wedge_indices(n - 1, n)
    pos = {r: i for i, r in enumerate(rows)}
    out = np.zeros((n, len(rows)))
    for j in range(n):
        comp = tuple(i for i in range(n) if i != j)
        out[j, pos[comp]] = permutation_parity(comp + (j,))
    return out


def skew_basis(n: int) -> list[np.ndarray]:
    out = []
    for a, b in combinations(range(n), 2):
        e = np.zeros((n, n))
        e[a, b], e[b, a] = 1.0, -1.0
        out.append(e)
    return out


@dataclass
class ElasticityProblem:
    """Linear elasticity with mixed boundary conditions.

    ``traction_region(centroid, normal)`` selects the boundary part with
    prescribed traction ``traction(points) -> (n, m)``; the remaining boundary
    carries the displacement ``displacement(points) -> (n, m)`` (zero when
    ``None``).
    """

    E: float
    nu: float
    regime: str = "plane_strain"
    order: object = 1
    traction_region: Callable | None = None
    traction: Callable | None = None
    displacement: Callable | None = None
    body_force: Callable | None = None
    variant: str = QUASI
    mode: str = "hierarchical"

    def compliance(self, n: int) -> ComplianceOperator:
        return ComplianceOperator.from_material(self.E, self.nu, self.regime, n)


@dataclass
class ElasticitySolution:
    stress: list
    displacement: list
    rotation: list
    stress_space: Space
    disp_space: Space
    residual: float
    compliance: ComplianceOperator

    def stress_at(self, hc: HierComplex, leaf, ref_points: np.ndarray) -> np.ndarray:
        """Cartesian stress tensors ``(m, n, n)`` at reference points of a leaf cell."""
        vals = self.stress_space.evaluate(leaf, ref_points)
        dofs = self.stress_space.cells[leaf].dofs
        fm = flux_matrix(hc.n)
        rows = [np.einsum("b,bsq->sq", c[dofs], vals) for c in self.stress]
        return np.stack([(fm @ r).T for r in rows], axis=1)

    def displacement_at(self, hc: HierComplex, leaf, ref_points: np.ndarray) -> np.ndarray:
        vals = self.disp_space.evaluate(leaf, ref_points)
        dofs = self.disp_space.cells[leaf].dofs
        return np.stack([np.einsum("b,bq->q", c[dofs], vals[:, 0]) for c in self.displacement], axis=1)


def _elasticity_integrand(n: int, op: ComplianceOperator, body: Callable | None):
    fm = flux_matrix(n)
    skews = skew_basis(n)
    sgn = (-1) ** (n - 1)

    def integrand(geom, vals, dvals):
        w = geom.weights
        s = np.einsum("js,asq->ajq", fm, vals[0])  # flux vectors
        divs = sgn * dvals[0][:, 0, :]
        v = vals[n][:, 0, :]
        mats, vecs = {}, {}
        ss = np.einsum("ajq,bjq,q->ab", s, s, w) / (2 * op.mu)
        for i in range(n):
            for kk in range(n):
                m = -op.c / (2 * op.mu) * np.einsum("aq,bq,q->ab", s[:, i], s[:, kk], w)
                if i == kk:
                    m = m + ss
                mats[(i, kk)] = m
            b = np.einsum("aq,bq,q->ab", v, divs, w)
            mats[(n + i, i)] = b
            mats[(i, n + i)] = b.T
            for r, e in enumerate(skews):
                # (T, Q q) with T row i: sum_j T_ij e[i, j] q
                c = np.einsum("j,ajq,bq,q->ba", e[i], s, v, w)
                if np.any(c):
                    mats[(2 * n + r, i)] = c
                    mats[(i, 2 * n + r)] = c.T
        if body is not None:
            bv = np.asarray(body(geom.points), dtype=float).reshape(n, -1)
            for i in range(n):
                vecs[n + i] = -np.einsum("aq,q,q->a", v, bv[i], w)
        return mats, vecs
    return integrand


def stress_bc_projection(hc: HierComplex, space: Space, select: Callable, traction: Callable,
                         component: int):
    """L2 projection of one traction component onto the boundary stress DOFs.

    Returns reduced DOF indices and their values for stress row ``component``.
    """
    fm = flux_matrix(hc.n)

    def normal_flux(vals, facet):
        return np.einsum("j,js,asq->aq", facet.normal, fm, vals)[:, None, :]

    def data(points, facet):
        return np.asarray(traction(points), dtype=float).reshape(hc.n, -1)[component][None]

    return trace_projection(hc, space, select, normal_flux, data)


def solve_elasticity(problem: ElasticityProblem, hc: HierComplex) -> ElasticitySolution:
    """Assemble and solve the weakly symmetric mixed elasticity system."""
    n = hc.n
    if n < 2:
        raise ValueError("elasticity needs n >= 2")
    op = problem.compliance(n)
    od = resolve_orders(hc, problem.order, problem.mode)
    s_space = Space(hc, od, n - 1, FULL, problem.variant)
    u_space = Space(hc, od, n, MINUS, problem.variant)
    nrot = n * (n - 1) // 2
    fields = [s_space] * n + [u_space] * n + [u_space] * nrot
    sysm = assemble(hc, fields, _elasticity_integrand(n, op, problem.body_force))

    region = problem.traction_region
    all_facets = boundary_facets(hc, 1)
    on_n = [region is not None and region(f.points.mean(axis=0), f.normal) for f in all_facets]
    if all(on_n):
        raise ValueError("incompatible boundary partition: no displacement boundary")
    if problem.displacement is not None:
        fm = flux_matrix(n)
        ud = problem.displacement

        def dirichlet(c, nrm):
            return not (region is not None and region(c, nrm))

        rmax = od.max_order()
        for facet in boundary_facets(hc, 2 * rmax + 4, dirichlet):
            vals = s_space.evaluate(facet.cell, facet.ref_points)
            sn = np.einsum("j,js,asq->aq", facet.normal, fm, vals)
            uv = np.asarray(ud(facet.points), dtype=float).reshape(n, -1)
            dofs = s_space.cells[facet.cell].dofs
            for i in range(n):
                np.add.at(sysm.rhs[i], dofs, np.einsum("aq,q,q->a", sn, uv[i], facet.weights))
    a, b, pmat = sysm.reduced()
    off_red = np.concatenate([[0], np.cumsum([p.shape[1] for p in sysm.prolongations])])
    fixed, values = [], []
    if region is not None and any(on_n):
        tr = problem.traction or (lambda x: np.zeros((n, len(x))))
        for i in range(n):
            idx, val = stress_bc_projection(hc, s_space, region, tr, i)
            fixed.append(off_red[i] + idx)
            values.append(val)
    fixed = np.concatenate(fixed) if fixed else np.zeros(0, dtype=int)
    values = np.concatenate(values) if values else np.zeros(0)
    aff, bf, free = impose_trace_bc(a, b, fixed, values)
    xf = np.atleast_1d(spsolve(aff, bf))
    if not np.all(np.isfinite(xf)):
        raise np.linalg.LinAlgError("singular elasticity system")
    x = np.zeros(a.shape[0])
    x[free] = xf
    x[fixed] = values
    res = float(np.linalg.norm(aff @ xf - bf) / max(np.linalg.norm(bf), 1e-300))
    parts = sysm.split(pmat @ x)
    return ElasticitySolution(parts[:n], parts[n:2 * n], parts[2 * n:], s_space, u_space, res, op)


def point_value(hc: HierComplex, sol: ElasticitySolution, x: np.ndarray) -> np.ndarray:
    """Displacement at a physical point (first containing leaf cell)."""
    from .assembly import locate
    hit = locate(hc, np.asarray(x, dtype=float), tol=1e-9)
    if hit is None:
        raise ValueError("point outside the mesh")
    leaf, ref = hit
    return sol.displacement_at(hc, leaf, ref[None])[0]


def hydrostatic_minimum(hc: HierComplex, sol: ElasticitySolution, samples: int = 4):
    """Smallest mean normal stress over a sampling lattice; returns (value, point, leaf)."""
    n = hc.n
    pts = _lattice(n, samples)
    best = (math.inf, None, None)
    for leaf in hc.leaf_cells():
        st = sol.stress_at(hc, leaf, pts)
        hyd = np.trace(st, axis1=1, axis2=2) / n
        i = int(np.argmin(hyd))
        if hyd[i] < best[0]:
            x = hc.coords(leaf)
            best = (float(hyd[i]), x[0] + (x[1:] - x[0]).T @ pts[i], leaf)
    return best


def _lattice(n: int, m: int) -> np.ndarray:
    from itertools import product
    pts = [np.array(p) / m for p in product(range(m + 1), repeat=n) if sum(p) <= m]
    return np.array(pts)
