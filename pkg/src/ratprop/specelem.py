"""Multidomain Chebyshev collocation on the unit square.

The square is split into ``nx * ny`` equal elements, each carrying a tensor
grid of ``p x p`` Chebyshev-Gauss-Lobatto nodes.  Because every element uses
the same 1D node set, the deduplicated global node set is itself a tensor
product of ``Nx`` x-lines and ``Ny`` y-lines, and global node ``g`` sits on
x-line ``g % Nx`` and y-line ``g // Nx``.

Collocation rows:

* element-interior nodes enforce the PDE with the local spectral stencil,
* edge nodes enforce continuity of the normal derivative across the edge,
* corner nodes enforce the PDE averaged over the four touching elements.

The linear systems are factored with SuperLU after a geometric
nested-dissection permutation whose separators are element boundary lines.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INTERIOR, EDGE, CORNER = 0, 1, 2


class SingularShiftError(RuntimeError):
    """Raised when a collocation matrix cannot be factored."""

    def __init__(self, message, shift=None):
        super().__init__(message)
        self.shift = shift


def chebyshev_grid(p):
    """Chebyshev-Gauss-Lobatto nodes on [-1, 1] in ascending order.

    Returns ``(x, D, w)``: the ``p`` nodes, the ``p x p`` differentiation
    matrix, and Clenshaw-Curtis quadrature weights.
    """
    if p < 4:
        raise ValueError(f"need p >= 4 Chebyshev nodes, got {p}")
    n = p - 1
    k = np.arange(p)
    x = -np.cos(np.pi * k / n)
    c = np.where((k == 0) | (k == n), 2.0, 1.0) * (-1.0) ** k
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(p))
    D -= np.diag(D.sum(axis=1))
    return x, D, clenshaw_curtis_weights(p)


def clenshaw_curtis_weights(p):
    n = p - 1
    theta = np.pi * np.arange(p) / n
    w = np.zeros(p)
    v = np.ones(n - 1)
    inner = np.arange(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[inner]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2.0 * v / n
    return w


def barycentric_matrix(nodes, targets):
    """Dense interpolation matrix from Chebyshev-Lobatto ``nodes`` to ``targets``."""
    p = len(nodes)
    wts = (-1.0) ** np.arange(p)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    diff = targets[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14)
    diff[exact] = 1.0
    K = wts / diff
    K /= K.sum(axis=1, keepdims=True)
    rows, cols = np.nonzero(exact)
    K[rows] = 0.0
    K[rows, cols] = 1.0
    return K


@dataclass(frozen=True, eq=False)
class Mesh:
    nx: int
    ny: int
    p: int
    periodic: tuple = (True, True)
    ref_nodes: np.ndarray = field(repr=False, default=None)
    ref_diff: np.ndarray = field(repr=False, default=None)
    ref_weights: np.ndarray = field(repr=False, default=None)

    @property
    def Nx(self):
        return self.nx * (self.p - 1) + (0 if self.periodic[0] else 1)

    @property
    def Ny(self):
        return self.ny * (self.p - 1) + (0 if self.periodic[1] else 1)

    @property
    def N(self):
        return self.Nx * self.Ny

    @property
    def hx(self):
        return 1.0 / self.nx

    @property
    def hy(self):
        return 1.0 / self.ny

    @property
    def xlines(self):
        return _line_coords(self.nx, self.p, self.ref_nodes, self.periodic[0])

    @property
    def ylines(self):
        return _line_coords(self.ny, self.p, self.ref_nodes, self.periodic[1])

    @property
    def x(self):
        return np.tile(self.xlines, self.Ny)

    @property
    def y(self):
        return np.repeat(self.ylines, self.Nx)

    @property
    def Dx(self):
        return self.ref_diff * (2.0 / self.hx)

    @property
    def Dy(self):
        return self.ref_diff * (2.0 / self.hy)

    def line_index(self, elem, local, axis):
        n_el = self.nx if axis == 0 else self.ny
        total = self.Nx if axis == 0 else self.Ny
        g = np.asarray(elem) * (self.p - 1) + np.asarray(local)
        if self.periodic[axis]:
            g = g % total
        return g

    def element_nodes(self, ex, ey):
        """Global indices of element ``(ex, ey)`` as a ``(p, p)`` array indexed ``[j, i]``."""
        gx = self.line_index(ex, np.arange(self.p), 0)
        gy = self.line_index(ey, np.arange(self.p), 1)
        return gy[:, None] * self.Nx + gx[None, :]

    def elements(self):
        for ey in range(self.ny):
            for ex in range(self.nx):
                yield ex, ey, self.element_nodes(ex, ey)

    def node_kind(self):
        """Per-node classification: INTERIOR, EDGE or CORNER."""
        onx = (np.arange(self.Nx) % (self.p - 1)) == 0
        ony = (np.arange(self.Ny) % (self.p - 1)) == 0
        kind = onx[None, :].astype(int) + ony[:, None].astype(int)
        return kind.ravel()

    def multiplicity(self):
        """How many elements contain each global node."""
        count = np.zeros(self.N)
        for _, _, g in self.elements():
            np.add.at(count, g.ravel(), 1.0)
        return count

    @property
    def weights(self):
        """Quadrature weights of the global nodes (integrate over the unit square)."""
        w = np.zeros(self.N)
        w2 = np.outer(self.ref_weights * self.hy / 2, self.ref_weights * self.hx / 2)
        for _, _, g in self.elements():
            np.add.at(w, g.ravel(), w2.ravel())
        return w

    def sample(self, func):
        """Evaluate ``func(x, y)`` at all global nodes."""
        return np.asarray(func(self.x, self.y))

    def describe(self):
        return {"nx": self.nx, "ny": self.ny, "p": self.p, "periodic": list(self.periodic)}


def _line_coords(n_el, p, ref, periodic):
    base = (ref[:-1] + 1.0) / 2.0
    coords = (np.arange(n_el)[:, None] + base[None, :]).ravel() / n_el
    if not periodic:
        coords = np.append(coords, 1.0)
    return coords


def build_mesh(nx, ny, p, periodic=(True, True)):
    if isinstance(periodic, bool):
        periodic = (periodic, periodic)
    periodic = tuple(bool(v) for v in periodic)
    if p < 4:
        raise ValueError(f"need p >= 4, got {p}")
    for n, per, name in ((nx, periodic[0], "nx"), (ny, periodic[1], "ny")):
        if n < 1 or (per and n < 2):
            raise ValueError(f"{name}={n} is too small for a periodic direction (need >= 2)")
    x, D, w = chebyshev_grid(p)
    return Mesh(nx, ny, p, periodic, x, D, w)


@dataclass(frozen=True, eq=False)
class GridFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.mesh.N:
            raise ValueError(f"expected {self.mesh.N} values, got {len(self.values)}")


@dataclass(frozen=True)
class OperatorSpec:
    """``Laplacian - shift``; ``shift`` is a complex scalar or nodal array."""

    shift: complex | np.ndarray = 0.0
    kind: str = "shifted_laplacian"

    def shift_values(self, mesh):
        s = np.asarray(self.shift, dtype=complex)
        if s.ndim == 0:
            return np.full(mesh.N, complex(s))
        if s.shape != (mesh.N,):
            raise ValueError("shift field must have one value per node")
        if not np.all(np.isfinite(s)):
            raise ValueError("shift field is not finite")
        return s


@dataclass(frozen=True, eq=False)
class CollocationMatrix:
    matrix: sp.csr_matrix
    row_kind: np.ndarray
    mesh: Mesh
    shift: np.ndarray = None

    def __matmul__(self, vec):
        return self.matrix @ vec


def _second_derivative(D):
    # exact zero row sums keep constants in the null space to roundoff
    D2 = D @ D
    D2 -= np.diag(D2.sum(axis=1))
    return D2


def _laplacian_structure(mesh):
    """Shift-independent part of the collocation matrix, cached per mesh."""
    cached = getattr(mesh, "_lap_cache", None)
    if cached is not None:
        return cached
    if not all(mesh.periodic):
        raise NotImplementedError("assembly is only implemented for doubly periodic meshes")
    p = mesh.p
    Dx, Dy = mesh.Dx, mesh.Dy
    Dxx, Dyy = _second_derivative(Dx), _second_derivative(Dy)
    kind = mesh.node_kind()
    rows, cols, vals = [], [], []
    corner_rows, corner_cols, corner_vals = [], [], []
    inner = np.arange(1, p - 1)
    jj, ii = np.meshgrid(inner, inner, indexing="ij")
    jj, ii = jj.ravel(), ii.ravel()
    allk = np.arange(p)
    for _, _, g in mesh.elements():
        # interior rows: Dxx along the element row plus Dyy along the column
        r = np.repeat(g[jj, ii], p)
        rows += [r, r]
        cols += [g[jj[:, None], allk[None, :]].ravel(), g[allk[None, :], ii[:, None]].ravel()]
        vals += [Dxx[ii][:, allk].ravel(), Dyy[jj][:, allk].ravel()]
        # vertical edges: flux from this element, + on its right side, - on its left side
        for side, sign in ((p - 1, 1.0), (0, -1.0)):
            r = np.repeat(g[inner, side], p)
            rows.append(r)
            cols.append(g[inner][:, allk].ravel())
            vals.append(np.tile(sign * Dx[side], len(inner)))
        for side, sign in ((p - 1, 1.0), (0, -1.0)):
            r = np.repeat(g[side, inner], p)
            rows.append(r)
            cols.append(g[allk][:, inner].T.ravel())
            vals.append(np.tile(sign * Dy[side], len(inner)))
        # corners: net normal flux through the node, summed over the four elements.
        # A collocated PDE row here would carry a spurious positive eigenvalue,
        # since no other row couples to the corner value.
        for cj, sy in ((0, -1.0), (p - 1, 1.0)):
            for ci, sx in ((0, -1.0), (p - 1, 1.0)):
                rr = np.full(2 * p, g[cj, ci])
                corner_rows.append(rr)
                corner_cols.append(np.concatenate([g[cj, allk], g[allk, ci]]))
                corner_vals.append(np.concatenate([sx * Dx[ci], sy * Dy[cj]]))
    rows = np.concatenate(rows + corner_rows)
    cols = np.concatenate(cols + corner_cols)
    vals = np.concatenate(vals + corner_vals)
    L = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.N, mesh.N))
    L.sum_duplicates()
    pde_rows = kind == INTERIOR
    object.__setattr__(mesh, "_lap_cache", (L, kind, pde_rows))
    return L, kind, pde_rows


def assemble(mesh, spec=None):
    """Collocation matrix of ``Laplacian - shift`` on ``mesh``."""
    spec = spec or OperatorSpec()
    L, kind, pde_rows = _laplacian_structure(mesh)
    shift = spec.shift_values(mesh) * pde_rows
    B = (L.astype(complex) - sp.diags(shift)).tocsr()
    return CollocationMatrix(B, kind, mesh, spec.shift_values(mesh))


def prepare_rhs(mesh, f):
    """Nodal right-hand side with flux-continuity rows set to zero."""
    _, _, pde_rows = _laplacian_structure(mesh)
    f = np.array(f, dtype=complex)
    f[~pde_rows] = 0.0
    return f


def derivative_matrices(mesh):
    """Sparse ``(Gx, Gy)``: element-local spectral derivatives averaged at shared nodes."""
    cached = getattr(mesh, "_grad_cache", None)
    if cached is not None:
        return cached
    p = mesh.p
    mult = _multiplicity(mesh)
    out = []
    for D, axis in ((mesh.Dx, 0), (mesh.Dy, 1)):
        rows, cols, vals = [], [], []
        for _, _, g in mesh.elements():
            if axis == 0:
                # d/dx acts along each element row g[j, :]
                r = np.broadcast_to(g[:, :, None], (p, p, p))
                c = np.broadcast_to(g[:, None, :], (p, p, p))
                v = np.broadcast_to(D[None, :, :], (p, p, p))
            else:
                r = np.broadcast_to(g[:, :, None], (p, p, p))
                c = np.broadcast_to(g.T[None, :, :], (p, p, p))
                v = np.broadcast_to(D[:, None, :], (p, p, p))
            rows.append(np.ravel(r))
            cols.append(np.ravel(c))
            vals.append(np.ravel(v))
        rows = np.concatenate(rows)
        G = sp.csr_matrix(
            (np.concatenate(vals) / mult[rows], (rows, np.concatenate(cols))),
            shape=(mesh.N, mesh.N),
        )
        G.sum_duplicates()
        out.append(G)
    object.__setattr__(mesh, "_grad_cache", tuple(out))
    return tuple(out)


def gradient(gf_or_values, mesh=None):
    """Element-local spectral gradient, averaged at shared nodes."""
    mesh, u = _unpack(gf_or_values, mesh)
    Gx, Gy = derivative_matrices(mesh)
    return Gx @ u, Gy @ u


def divergence(vx, vy, mesh=None):
    mesh, vx = _unpack(vx, mesh)
    _, vy = _unpack(vy, mesh)
    Gx, Gy = derivative_matrices(mesh)
    return Gx @ vx + Gy @ vy


def _multiplicity(mesh):
    m = getattr(mesh, "_mult_cache", None)
    if m is None:
        m = mesh.multiplicity()
        object.__setattr__(mesh, "_mult_cache", m)
    return m


def _unpack(obj, mesh):
    if isinstance(obj, GridFunction):
        return obj.mesh, obj.values
    if mesh is None:
        raise ValueError("mesh is required when passing raw arrays")
    return mesh, np.asarray(obj)


def nested_dissection_order(mesh):
    """Elimination order with element boundary lines as separators.

    The torus is first cut along two x-lines and two y-lines; the resulting
    boxes are bisected recursively (longest side first) until they hold a
    single element.  Separators are ordered after the boxes they split.
    """
    Nx, Ny, q = mesh.Nx, mesh.Ny, mesh.p - 1
    order = []

    def box(x0, x1, y0, y1):
        # open box of element indices [x0, x1) x [y0, y1): nodes strictly inside
        ex, ey = x1 - x0, y1 - y0
        if ex <= 1 and ey <= 1:
            xs = np.arange(x0 * q + 1, x1 * q)
            ys = np.arange(y0 * q + 1, y1 * q)
            order.append(((ys[:, None] % Ny) * Nx + (xs[None, :] % Nx)).ravel())
            return
        if ex >= ey:
            xm = x0 + ex // 2
            box(x0, xm, y0, y1)
            box(xm, x1, y0, y1)
            ys = np.arange(y0 * q + 1, y1 * q)
            order.append((ys % Ny) * Nx + (xm * q) % Nx)
        else:
            ym = y0 + ey // 2
            box(x0, x1, y0, ym)
            box(x0, x1, ym, y1)
            xs = np.arange(x0 * q + 1, x1 * q)
            order.append(((ym * q) % Ny) * Nx + (xs % Nx))

    nx, ny = mesh.nx, mesh.ny
    xh, yh = nx // 2, ny // 2
    box(0, xh, 0, yh)
    box(xh, nx, 0, yh)
    box(0, xh, yh, ny)
    box(xh, nx, yh, ny)
    # top-level separators: the two x-lines and two y-lines of the torus cut
    seps = []
    for xm in (0, xh):
        for y0, y1 in ((0, yh), (yh, ny)):
            ys = np.arange(y0 * q + 1, y1 * q)
            seps.append((ys % Ny) * Nx + (xm * q) % Nx)
    for ym in (0, yh):
        for x0, x1 in ((0, xh), (xh, nx)):
            xs = np.arange(x0 * q + 1, x1 * q)
            seps.append(((ym * q) % Ny) * Nx + (xs % Nx))
    corners = [(ym * q % Ny) * Nx + (xm * q % Nx) for ym in (0, yh) for xm in (0, xh)]
    order += seps
    perm = np.concatenate(order + [np.array(corners)])
    # remaining element corners (inner ones of sub-boxes) go last
    seen = np.zeros(mesh.N, dtype=bool)
    seen[perm] = True
    perm = np.concatenate([perm, np.flatnonzero(~seen)])
    return perm


@dataclass(eq=False)
class SparseFactorization:
    """Solve handle for one collocation matrix.

    ``method`` is ``"condensed"`` (element interiors eliminated with dense
    block LUs, sparse LU on the element skeleton) or ``"sparse"`` (one sparse
    LU of the whole matrix under the nested-dissection permutation).
    """

    N: int
    method: str
    fill_nnz: int
    build_seconds: float
    shift: object = None
    lu: object = None
    perm: np.ndarray = None
    parts: dict = None
    matrix: object = field(default=None, repr=False)

    def solve(self, rhs):
        return solve(self, rhs)

    @property
    def nbytes(self):
        n = 20 * int(self.fill_nnz)
        if self.parts is not None:
            n += sum(np.asarray(b[0]).nbytes for b in self.parts["interior_lu"])
        return n


def _skeleton_split(mesh):
    cached = getattr(mesh, "_skel_cache", None)
    if cached is not None:
        return cached
    p = mesh.p
    interior = np.array([g[1:-1, 1:-1].ravel() for _, _, g in mesh.elements()])
    is_skel = np.ones(mesh.N, dtype=bool)
    is_skel[interior.ravel()] = False
    # skeleton nodes in nested-dissection order
    nd = nested_dissection_order(mesh)
    skel = nd[is_skel[nd]]
    skel_pos = np.full(mesh.N, -1)
    skel_pos[skel] = np.arange(len(skel))
    ring = np.ones((p, p), dtype=bool)
    ring[1:-1, 1:-1] = False
    bdry = np.array([skel_pos[g[ring]] for _, _, g in mesh.elements()])
    out = (interior, skel, bdry)
    object.__setattr__(mesh, "_skel_cache", out)
    return out


_SKEL_ORDER = "NATURAL"


def _local_blocks(mesh):
    """Dense interior block of the unshifted Laplacian and the element couplings.

    All elements have the same size, so these are identical for every element.
    """
    cached = getattr(mesh, "_local_cache", None)
    if cached is not None:
        return cached
    L = _laplacian_structure(mesh)[0]
    interior, _, bdry = _skeleton_split(mesh)
    B_IS, B_SI = _coupling_blocks(mesh)
    ni = interior.shape[1]
    i0 = interior[0]
    L_ii = L[i0][:, i0].toarray()
    Bis = B_IS[:ni][:, bdry[0]].toarray()
    Bsi = B_SI[bdry[0]][:, :ni].toarray()
    out = (L_ii, Bis, Bsi)
    object.__setattr__(mesh, "_local_cache", out)
    return out


def _element_groups(sig):
    """Group elements whose interior shifts agree to roundoff."""
    scale = max(float(np.max(np.abs(sig))), 1e-300)
    block_of = np.empty(len(sig), dtype=int)
    keys = {}
    for e, row in enumerate(sig):
        k = np.round(row / scale, 12).tobytes()
        block_of[e] = keys.setdefault(k, len(keys))
    reps = np.zeros(len(keys), dtype=int)
    for e in range(len(sig) - 1, -1, -1):
        reps[block_of[e]] = e
    return block_of, reps


def _factor_condensed(mat):
    import scipy.linalg as sla

    mesh = mat.mesh
    B = mat.matrix.tocsr()
    interior, skel, bdry = _skeleton_split(mesh)
    L_ii, Bis, Bsi = _local_blocks(mesh)
    B_SS = B[skel][:, skel].tocoo()
    shift = mat.shift if mat.shift is not None else np.zeros(mesh.N, dtype=complex)
    sig = shift[interior]
    block_of, reps = _element_groups(sig)
    blocks, locals_ = [], []
    for e in reps:
        lu_e = sla.lu_factor(L_ii - np.diag(sig[e]), check_finite=False)
        d = np.abs(np.diag(lu_e[0]))
        if d.min() <= 1e-13 * d.max():
            raise SingularShiftError("singular element interior block", shift[0])
        blocks.append(lu_e)
        locals_.append((Bsi @ sla.lu_solve(lu_e, Bis, check_finite=False)).ravel())
    nb = bdry.shape[1]
    rows = [B_SS.row, np.repeat(bdry, nb, axis=1).ravel()]
    cols = [B_SS.col, np.tile(bdry, (1, nb)).ravel()]
    vals = [B_SS.data, -np.concatenate([locals_[g] for g in block_of])]
    ns = len(skel)
    S = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(ns, ns)
    )
    S.sum_duplicates()
    try:
        lu = spla.splu(S, permc_spec=_SKEL_ORDER, diag_pivot_thresh=0.1,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SingularShiftError(f"skeleton factorization failed: {exc}", shift[0]) from exc
    parts = _condensed_parts(mesh, blocks, block_of)
    parts["skeleton_norm"] = float(abs(S).sum(axis=1).max())
    return lu, parts


def _coupling_blocks(mesh):
    """Interior/skeleton coupling blocks; they carry no shift and are shared."""
    cached = getattr(mesh, "_coupling_cache", None)
    if cached is not None:
        return cached
    L = _laplacian_structure(mesh)[0]
    interior, skel, _ = _skeleton_split(mesh)
    I_all = interior.ravel()
    out = (L[I_all][:, skel].tocsr(), L[skel][:, I_all].tocsr())
    object.__setattr__(mesh, "_coupling_cache", out)
    return out


def _condensed_parts(mesh, interior_lu, block_of):
    interior, skel, _ = _skeleton_split(mesh)
    B_IS, B_SI = _coupling_blocks(mesh)
    groups = [np.flatnonzero(block_of == g) for g in range(len(interior_lu))]
    return {
        "interior": interior,
        "skel": skel,
        "interior_lu": interior_lu,
        "block_of": np.asarray(block_of),
        "groups": groups,
        "B_IS": B_IS,
        "B_SI": B_SI,
    }


class ShiftedOperator:
    """``L - diag(d)`` applied without storing a shifted copy of ``L``."""

    def __init__(self, base, diag):
        self.base = base
        self.diag = np.asarray(diag)
        self.shape = base.shape

    def __matmul__(self, x):
        return self.base @ x - self.diag * x


class StoredLU:
    """Triangular factors ``Pr A Pc = L U`` restored from arrays."""

    def __init__(self, L, U, perm_r, perm_c):
        self.L, self.U = L.tocsr(), U.tocsr()
        self.perm_r, self.perm_c = np.asarray(perm_r), np.asarray(perm_c)
        self.shape = self.L.shape

    def solve(self, b):
        pb = np.empty_like(b)
        pb[self.perm_r] = b
        y = spla.spsolve_triangular(self.L, pb, lower=True, unit_diagonal=True)
        z = spla.spsolve_triangular(self.U, y, lower=False)
        x = np.empty_like(z)
        x[self.perm_c] = z
        return x


def factorization_arrays(fact):
    """Plain arrays describing a condensed factorization (for persistence)."""
    if fact.method != "condensed":
        raise ValueError("only condensed factorizations can be exported")
    lu = fact.lu
    L, U = lu.L.tocsr(), lu.U.tocsr()
    out = {
        "shift": np.atleast_1d(np.asarray(fact.shift, dtype=complex)),
        "block_of": fact.parts["block_of"],
        "perm_r": np.asarray(lu.perm_r),
        "perm_c": np.asarray(lu.perm_c),
        "fill_nnz": np.array(fact.fill_nnz),
    }
    for name, M in (("L", L), ("U", U)):
        out[name + "_data"], out[name + "_indices"], out[name + "_indptr"] = M.data, M.indices, M.indptr
    out["interior_lu"] = np.array([b[0] for b in fact.parts["interior_lu"]])
    out["interior_piv"] = np.array([b[1] for b in fact.parts["interior_lu"]])
    return out


def factorization_from_arrays(arrays, mesh):
    """Inverse of :func:`factorization_arrays`; no refactoring takes place."""
    ns = len(_skeleton_split(mesh)[1])
    L = sp.csr_matrix((arrays["L_data"], arrays["L_indices"], arrays["L_indptr"]), shape=(ns, ns))
    U = sp.csr_matrix((arrays["U_data"], arrays["U_indices"], arrays["U_indptr"]), shape=(ns, ns))
    lu = StoredLU(L, U, arrays["perm_r"], arrays["perm_c"])
    blocks = list(zip(arrays["interior_lu"], arrays["interior_piv"]))
    parts = _condensed_parts(mesh, blocks, arrays["block_of"])
    shift = arrays["shift"]
    full = np.full(mesh.N, shift[0]) if shift.size == 1 else shift
    base, _, pde_rows = _laplacian_structure(mesh)
    label = complex(shift[0]) if shift.size == 1 else shift
    return SparseFactorization(
        mesh.N, "condensed", int(arrays["fill_nnz"]), 0.0, label, lu=lu, parts=parts,
        matrix=ShiftedOperator(base, full * pde_rows),
    )


def factor(mat, method="auto"):
    """Factor a collocation matrix.

    ``method="auto"`` uses the condensed solver for collocation matrices and a
    plain sparse LU otherwise.  Raises ``SingularShiftError`` naming the shift
    when a pivot vanishes.
    """
    is_coll = isinstance(mat, CollocationMatrix)
    if method == "auto":
        method = "condensed" if is_coll else "sparse"
    B = mat.matrix if is_coll else sp.csr_matrix(mat)
    shift = mat.shift if is_coll else None
    label = shift[0] if shift is not None and np.all(shift == shift[0]) else shift
    t0 = time.perf_counter()
    if method == "condensed":
        if not is_coll:
            raise ValueError("condensed factorization needs a CollocationMatrix")
        lu, parts = _factor_condensed(mat)
        anorm = parts["skeleton_norm"]
        elapsed = time.perf_counter() - t0
        base, _, pde_rows = _laplacian_structure(mat.mesh)
        fact = SparseFactorization(
            B.shape[0], method, lu.nnz, elapsed, label, lu=lu, parts=parts,
            matrix=ShiftedOperator(base, shift * pde_rows),
        )
    elif method in ("sparse", "colamd"):
        if method == "sparse" and is_coll:
            perm = nested_dissection_order(mat.mesh)
        else:
            perm = np.arange(B.shape[0])
        Bp = B[perm][:, perm].tocsc()
        anorm = float(abs(Bp).sum(axis=1).max())
        try:
            lu = spla.splu(
                Bp,
                permc_spec="NATURAL" if method == "sparse" and is_coll else "COLAMD",
                diag_pivot_thresh=0.1,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise SingularShiftError(f"factorization failed: {exc}", label) from exc
        elapsed = time.perf_counter() - t0
        fact = SparseFactorization(
            B.shape[0], method, lu.nnz, elapsed, label, lu=lu, perm=perm, matrix=B
        )
    else:
        raise ValueError(f"unknown factorization method {method!r}")
    # a cheap conditioning probe; reading lu.L / lu.U would double the memory
    probe = np.cos(np.arange(lu.shape[0]) * 0.7)
    x = lu.solve(probe.astype(complex))
    growth = np.max(np.abs(x)) * anorm / np.max(np.abs(probe))
    if not np.all(np.isfinite(x)) or growth > 1e14:
        raise SingularShiftError(f"numerically singular factorization (shift {label})", label)
    return fact


def _interior_solve(parts, F):
    import scipy.linalg as sla

    if len(parts["groups"]) == 1:
        return sla.lu_solve(parts["interior_lu"][0], F.T, check_finite=False).T
    out = np.empty(F.shape, dtype=complex)
    for lu_g, idx in zip(parts["interior_lu"], parts["groups"]):
        out[idx] = sla.lu_solve(lu_g, F[idx].T, check_finite=False).T
    return out


def _raw_solve(fact, b):
    x = np.empty(fact.N, dtype=complex)
    if fact.method == "condensed":
        pr = fact.parts
        interior, skel = pr["interior"], pr["skel"]
        Y = _interior_solve(pr, b[interior])
        rs = b[skel] - pr["B_SI"] @ Y.ravel()
        xs = fact.lu.solve(rs)
        Z = (pr["B_IS"] @ xs).reshape(Y.shape)
        x[interior] = Y - _interior_solve(pr, Z)
        x[skel] = xs
    else:
        x[fact.perm] = fact.lu.solve(np.ascontiguousarray(b[fact.perm]))
    return x


def solve(fact, rhs, refine=1):
    """Solve ``B x = rhs`` with a factorization from :func:`factor`.

    ``refine`` steps of iterative refinement are applied when the matrix is
    known to the handle.
    """
    b = rhs.values if isinstance(rhs, GridFunction) else np.asarray(rhs)
    if b.shape[0] != fact.N:
        raise ValueError(f"rhs has length {b.shape[0]}, expected {fact.N}")
    b = np.asarray(b, dtype=complex)
    x = _raw_solve(fact, b)
    if fact.matrix is not None:
        for _ in range(refine):
            x += _raw_solve(fact, b - fact.matrix @ x)
    return x


def dump_coo(mat, path):
    """Write the matrix as ``row col re im`` lines."""
    B = (mat.matrix if isinstance(mat, CollocationMatrix) else mat).tocoo()
    data = np.column_stack([B.row, B.col, B.data.real, B.data.imag])
    np.savetxt(path, data, fmt=["%d", "%d", "%.17g", "%.17g"])
