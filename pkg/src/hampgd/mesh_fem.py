"""Structured tetrahedral beam mesh and P1 elasticity operator assembly.

Geometry: a box (0,Lx) x (0,Ly) x (0,Lz) clamped on the x=0 face and loaded by
a vertical traction on the y=Ly face.  Each grid hexahedron is split into six
tetrahedra (Kuhn decomposition around the main diagonal), which is conforming
across cells and deterministic.

DOF ordering is node-major, xyz-interleaved: dof(node, axis) = 3*node + axis
before elimination; Dirichlet nodes (x = 0) lose all three components and the
remaining DOFs are renumbered in node order.
"""

from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

# facet tag codes
DIRICHLET = 1
NEUMANN = 2
FREE = 3


class AssemblyError(RuntimeError):
    """Raised when element geometry makes assembly impossible."""


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic material.

    E in Pa, nu dimensionless, rho in kg/m^3; the Lame coefficients are
    mu = E / (2 (1 + nu)) and lam = E nu / ((1 + nu)(1 - 2 nu)).
    """

    E: float
    nu: float
    rho: float

    def __post_init__(self):
        if self.E <= 0.0 or self.rho <= 0.0:
            raise ValueError("E and rho must be positive")
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (0, 0.5), got {self.nu}")

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


@dataclass(frozen=True)
class Mesh:
    """Tetrahedral mesh of the beam box with tagged boundary facets."""

    nodes: np.ndarray       # (n_nodes, 3) coordinates
    tets: np.ndarray        # (n_tets, 4) node indices, positive orientation
    facets: np.ndarray      # (n_facets, 3) boundary triangles
    facet_tags: np.ndarray  # (n_facets,) DIRICHLET / NEUMANN / FREE
    dof_map: np.ndarray     # (n_nodes, 3) reduced dof index or -1 if eliminated
    lengths: tuple
    divisions: tuple

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_tets(self):
        return self.tets.shape[0]

    @property
    def n_dof(self):
        """Number of free (non-Dirichlet) degrees of freedom."""
        return int((self.dof_map >= 0).sum())

    def tet_volumes(self):
        verts = self.nodes[self.tets]
        edges = verts[:, 1:, :] - verts[:, :1, :]
        return np.linalg.det(edges) / 6.0

    def facet_areas(self, which=None):
        """Areas of boundary facets, optionally restricted to one tag."""
        facets = self.facets if which is None else self.facets[self.facet_tags == which]
        verts = self.nodes[facets]
        cross = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def max_edge_length(self):
        verts = self.nodes[self.tets]
        pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        longest = 0.0
        for a, b in pairs:
            longest = max(longest, np.linalg.norm(verts[:, a] - verts[:, b], axis=1).max())
        return longest

    def expand(self, reduced):
        """Scatter a reduced DOF vector to (n_nodes, 3) with zeros at clamps."""
        reduced = np.asarray(reduced)
        full = np.zeros((self.n_nodes, 3))
        mask = self.dof_map >= 0
        full[mask] = reduced[self.dof_map[mask]]
        return full


# local corner numbering of a hex cell: bit pattern (dx, dy, dz) -> index
_CORNERS = [(dx, dy, dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
_CORNER_INDEX = {c: i for i, c in enumerate(_CORNERS)}


def _kuhn_tets():
    """Local corner quadruples of the 6-tet Kuhn split, positively oriented.

    One tet per permutation (a,b,c) of the axes: corners 0, e_a, e_a+e_b,
    (1,1,1).  Odd permutations get two vertices swapped to keep the signed
    volume positive.
    """
    tets = []
    for perm in permutations(range(3)):
        walk = [(0, 0, 0)]
        acc = [0, 0, 0]
        for axis in perm[:2]:
            acc[axis] = 1
            walk.append(tuple(acc))
        walk.append((1, 1, 1))
        parity = sum(
            1 for i in range(3) for j in range(i + 1, 3) if perm[i] > perm[j]
        )
        if parity % 2 == 1:
            walk[1], walk[2] = walk[2], walk[1]
        tets.append([_CORNER_INDEX[c] for c in walk])
    return tets


_KUHN_TETS = _kuhn_tets()


def build_beam_mesh(lengths, divisions):
    """Structured tetrahedral mesh of the beam box.

    Parameters
    ----------
    lengths : (Lx, Ly, Lz), positive
    divisions : (nx, ny, nz), positive integers (hex cells per direction)
    """
    lengths = tuple(float(v) for v in lengths)
    divisions = tuple(int(v) for v in divisions)
    if any(v <= 0.0 for v in lengths):
        raise ValueError(f"lengths must be positive, got {lengths}")
    if any(v < 1 for v in divisions):
        raise ValueError(f"divisions must be >= 1, got {divisions}")

    Lx, Ly, Lz = lengths
    nx, ny, nz = divisions
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    zs = np.linspace(0.0, Lz, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def node_id(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    corners = np.stack(
        [node_id(ii + dx, jj + dy, kk + dz) for (dx, dy, dz) in _CORNERS], axis=1
    )  # (n_cells, 8)
    tets = np.concatenate([corners[:, quad] for quad in _KUHN_TETS], axis=0)

    # boundary facets = tet faces appearing exactly once
    faces = tets[:, [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]]].reshape(-1, 3)
    faces_sorted = np.sort(faces, axis=1)
    uniq, counts = np.unique(faces_sorted, axis=0, return_counts=True)
    facets = uniq[counts == 1]

    fx = nodes[facets][:, :, 0]
    fy = nodes[facets][:, :, 1]
    tags = np.full(facets.shape[0], FREE, dtype=int)
    tags[np.all(fx == 0.0, axis=1)] = DIRICHLET
    tags[np.all(fy == Ly, axis=1)] = NEUMANN

    clamped = nodes[:, 0] == 0.0
    dof_map = np.full((nodes.shape[0], 3), -1, dtype=int)
    free_nodes = np.flatnonzero(~clamped)
    dof_map[free_nodes] = 3 * np.arange(free_nodes.size)[:, None] + np.arange(3)[None, :]

    return Mesh(
        nodes=nodes,
        tets=tets,
        facets=facets,
        facet_tags=tags,
        dof_map=dof_map,
        lengths=lengths,
        divisions=divisions,
    )


def _shape_gradients(mesh):
    """Constant P1 gradients per tet: (n_tets, 4, 3), plus signed volumes."""
    verts = mesh.nodes[mesh.tets]
    edges = verts[:, 1:, :] - verts[:, :1, :]  # rows: p_i - p_0
    vol = np.linalg.det(edges) / 6.0
    bad = np.flatnonzero(vol <= 0.0)
    if bad.size:
        raise AssemblyError(
            f"degenerate or inverted element(s): ids {bad[:10].tolist()}"
            + ("..." if bad.size > 10 else "")
        )
    inv = np.linalg.inv(edges)
    grads = np.empty((mesh.n_tets, 4, 3))
    grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return grads, vol


def _scatter(mesh, element_matrices, eliminate):
    """Accumulate (n_tets, 12, 12) element blocks into a global CSR matrix."""
    n_full = 3 * mesh.n_nodes
    dofs = (3 * mesh.tets[:, :, None] + np.arange(3)[None, None, :]).reshape(-1, 12)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    A = sp.coo_matrix(
        (element_matrices.ravel(), (rows, cols)), shape=(n_full, n_full)
    ).tocsr()
    A = (A + A.T) * 0.5  # enforce exact symmetry regardless of summation order
    if eliminate:
        keep = np.flatnonzero((mesh.dof_map >= 0).ravel())
        A = A[keep][:, keep]
    A.sort_indices()
    return A


def assemble_operators(mesh, mat, eliminate_dirichlet=True):
    """Assemble P1 stiffness and consistent mass for isotropic elasticity.

    Returns (K, M) as CSR matrices, reduced by deleting Dirichlet rows and
    columns unless `eliminate_dirichlet=False` (used by kernel/row-sum tests).
    Closed-form tetrahedral integrals are used throughout; no quadrature error
    and no mass lumping.
    """
    grads, vol = _shape_gradients(mesh)
    lam, mu = mat.lam, mat.mu

    # K_e[(a,i),(b,j)] = V (lam g_ai g_bj + mu g_aj g_bi + mu delta_ij g_a.g_b)
    gg = np.einsum("eai,ebj->eaibj", grads, grads)
    gram = np.einsum("eak,ebk->eab", grads, grads)
    Ke = lam * gg + mu * np.einsum("eaj,ebi->eaibj", grads, grads)
    Ke += mu * gram[:, :, None, :, None] * np.eye(3)[None, None, :, None, :]
    Ke *= vol[:, None, None, None, None]
    K = _scatter(mesh, Ke.reshape(-1, 12, 12), eliminate_dirichlet)

    # consistent mass: M_e[(a,i),(b,j)] = rho V/20 (1 + delta_ab) delta_ij
    node_block = (np.ones((4, 4)) + np.eye(4)) / 20.0
    Me = (
        mat.rho
        * vol[:, None, None, None, None]
        * node_block[None, :, None, :, None]
        * np.eye(3)[None, None, :, None, :]
    )
    M = _scatter(mesh, Me.reshape(-1, 12, 12), eliminate_dirichlet)
    return K, M


@dataclass(frozen=True)
class SeparatedLoad:
    """Load in separated form: f(t) = sum_j vec_j * signal_j(t)."""

    terms: tuple  # of (np.ndarray, callable) pairs

    @property
    def dim(self):
        return self.terms[0][0].shape[0] if self.terms else 0

    def at(self, t):
        """Assembled load vector at one time."""
        out = None
        for vec, sig in self.terms:
            contrib = vec * float(sig(t))
            out = contrib if out is None else out + contrib
        return out

    def sampled(self, grid):
        """[(vec, signal samples on grid nodes)] for marching schemes."""
        return [(vec, np.asarray(sig(grid.nodes), dtype=float)) for vec, sig in self.terms]


def assemble_neumann_load(mesh, signal, eliminate_dirichlet=True):
    """Separated load for a uniform upward (+y) traction on the Neumann face.

    The spatial vector integrates unit traction against the P1 facet shape
    functions (exact: each facet node receives area/3); all time dependence is
    carried by `signal`.
    """
    neumann = mesh.facets[mesh.facet_tags == NEUMANN]
    if neumann.shape[0] == 0:
        raise ValueError("mesh has no Neumann facets; cannot assemble surface load")
    verts = mesh.nodes[neumann]
    cross = np.cross(verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)

    b = np.zeros(3 * mesh.n_nodes)
    y_dofs = 3 * neumann + 1
    np.add.at(b, y_dofs.ravel(), np.repeat(areas / 3.0, 3))
    if eliminate_dirichlet:
        keep = np.flatnonzero((mesh.dof_map >= 0).ravel())
        b = b[keep]
    return SeparatedLoad(terms=((b, signal),))


def export_operators_mm(K, M, directory, prefix=""):
    """Write K and M in Matrix Market coordinate format."""
    import os

    kpath = os.path.join(directory, f"{prefix}K.mtx")
    mpath = os.path.join(directory, f"{prefix}M.mtx")
    mmwrite(kpath, sp.coo_matrix(K), symmetry="symmetric")
    mmwrite(mpath, sp.coo_matrix(M), symmetry="symmetric")
    return kpath, mpath


def write_vtk_mesh(mesh, path):
    """Legacy ASCII VTK export: points, tets and boundary facets.

    Facet tags are emitted as cell data (tets carry tag 0).
    """
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("beam mesh (dof ordering: node-major, xyz-interleaved)\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.nodes:
            f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        n_cells = mesh.n_tets + mesh.facets.shape[0]
        size = 5 * mesh.n_tets + 4 * mesh.facets.shape[0]
        f.write(f"CELLS {n_cells} {size}\n")
        for tet in mesh.tets:
            f.write(f"4 {tet[0]} {tet[1]} {tet[2]} {tet[3]}\n")
        for tri in mesh.facets:
            f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
        f.write(f"CELL_TYPES {n_cells}\n")
        f.write("\n".join(["10"] * mesh.n_tets + ["5"] * mesh.facets.shape[0]) + "\n")
        f.write(f"CELL_DATA {n_cells}\n")
        f.write("SCALARS facet_tag int 1\nLOOKUP_TABLE default\n")
        f.write("\n".join(["0"] * mesh.n_tets + [str(t) for t in mesh.facet_tags]) + "\n")


def write_vtk_point_field(mesh, field, name, path):
    """Legacy ASCII VTK export of one vector field given per node (n_nodes, 3)."""
    field = np.asarray(field)
    if field.shape != (mesh.n_nodes, 3):
        raise ValueError(f"expected field shape {(mesh.n_nodes, 3)}, got {field.shape}")
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{name}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.nodes:
            f.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        f.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        for tet in mesh.tets:
            f.write(f"4 {tet[0]} {tet[1]} {tet[2]} {tet[3]}\n")
        f.write(f"CELL_TYPES {mesh.n_tets}\n")
        f.write("\n".join(["10"] * mesh.n_tets) + "\n")
        f.write(f"POINT_DATA {mesh.n_nodes}\n")
        f.write(f"VECTORS {name} double\n")
        for v in field:
            f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
