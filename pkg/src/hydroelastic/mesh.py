"""Structured quadrilateral meshes of the 2D fluid rectangle.

The mesh is built on a reference column ``ẑ ∈ [-1, 0]`` and every vertex is
then mapped vertically to ``z = ẑ·H(x)`` where ``H`` is the local water depth.
The top row of facets is split between the free surface and the floating
structure; the interior vertices of the structure are classified as
C/DG interfaces or joints.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import MisalignmentError, TopologyError, ValidationError

#: Tags used for the boundary facet sets.
BOTTOM = "bottom"
INLET = "inlet"
OUTLET = "outlet"
FREE_SURFACE = "free_surface"
STRUCTURE = "structure"

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class BathymetryProfile:
    """Water depth as a function of the horizontal coordinate.

    A constant profile has ``depth_right is None``. A ramp profile is
    ``depth_left`` up to ``ramp[0]``, varies linearly to ``depth_right`` at
    ``ramp[1]`` and stays constant afterwards.
    """

    depth_left: float
    depth_right: float | None = None
    ramp: tuple[float, float] | None = None

    @classmethod
    def constant(cls, depth: float) -> "BathymetryProfile":
        return cls(float(depth))

    @classmethod
    def linear_ramp(cls, depth_left: float, depth_right: float, x_start: float, x_end: float) -> "BathymetryProfile":
        return cls(float(depth_left), float(depth_right), (float(x_start), float(x_end)))

    @property
    def kind(self) -> str:
        return "constant" if self.depth_right is None else "ramp"

    def validate(self, length: float | None = None) -> None:
        if not self.depth_left > 0:
            raise ValidationError(f"water depth must be positive, got {self.depth_left}")
        if self.depth_right is None:
            return
        if not self.depth_right > 0:
            raise ValidationError(f"water depth must be positive, got {self.depth_right}")
        if self.ramp is None:
            raise ValidationError("a ramp profile needs its interval")
        x0, x1 = self.ramp
        if not x1 > x0:
            raise ValidationError(f"ramp interval must be increasing, got {self.ramp}")
        if length is not None and (x0 < 0 or x1 > length):
            raise ValidationError(f"ramp interval {self.ramp} is not inside [0, {length}]")

    def depth(self, x) -> np.ndarray:
        """Local depth ``H(x)`` (vectorized)."""
        x = np.asarray(x, dtype=float)
        if self.depth_right is None:
            return np.full_like(x, self.depth_left)
        x0, x1 = self.ramp
        s = np.clip((x - x0) / (x1 - x0), 0.0, 1.0)
        return self.depth_left - s * (self.depth_left - self.depth_right)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return () if self.ramp is None else tuple(self.ramp)

    def to_dict(self) -> dict:
        return {"depth_left": self.depth_left, "depth_right": self.depth_right,
                "ramp": None if self.ramp is None else list(self.ramp)}

    @classmethod
    def from_dict(cls, d: dict) -> "BathymetryProfile":
        ramp = d.get("ramp")
        return cls(float(d["depth_left"]),
                   None if d.get("depth_right") is None else float(d["depth_right"]),
                   None if ramp is None else (float(ramp[0]), float(ramp[1])))


@dataclass(frozen=True)
class GeometryConfig:
    """Tank geometry: length, bathymetry, floating structure, joints and absorbing zones."""

    length: float
    depth: BathymetryProfile
    structure: tuple[float, float] | None = None
    joints: tuple[float, ...] = ()
    damping_inlet: float = 0.0
    damping_outlet: float = 0.0
    periodic: bool = False

    def validate(self) -> None:
        if not self.length > 0:
            raise ValidationError(f"domain length must be positive, got {self.length}")
        self.depth.validate(self.length)
        if self.structure is not None:
            xl, xr = self.structure
            if not (0 <= xl < xr <= self.length):
                raise ValidationError(f"structure span {self.structure} must satisfy 0 <= x_bl < x_br <= Lx")
        if self.joints:
            if self.structure is None:
                raise ValidationError("joints require a structure span")
            xs = np.asarray(self.joints, dtype=float)
            if np.any(np.diff(xs) <= 0):
                raise ValidationError("joint positions must be strictly increasing")
            xl, xr = self.structure
            if xs[0] <= xl or xs[-1] >= xr:
                raise ValidationError("joints must lie strictly inside the structure span")
        if self.damping_inlet < 0 or self.damping_outlet < 0:
            raise ValidationError("damping lengths must be non-negative")
        if self.damping_inlet + self.damping_outlet > self.length:
            raise ValidationError("damping zones are longer than the domain")
        if self.periodic and (self.damping_inlet > 0 or self.damping_outlet > 0):
            raise ValidationError("a periodic domain has no inlet/outlet damping zones")

    @property
    def structure_length(self) -> float:
        return 0.0 if self.structure is None else self.structure[1] - self.structure[0]

    def aligned_positions(self) -> tuple[float, ...]:
        """Horizontal positions that must coincide with vertical grid lines."""
        pts: list[float] = []
        if self.structure is not None:
            pts.extend(self.structure)
        pts.extend(self.joints)
        pts.extend(self.depth.breakpoints)
        return tuple(pts)

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "depth": self.depth.to_dict(),
            "structure": None if self.structure is None else list(self.structure),
            "joints": list(self.joints),
            "damping_inlet": self.damping_inlet,
            "damping_outlet": self.damping_outlet,
            "periodic": self.periodic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeometryConfig":
        s = d.get("structure")
        return cls(
            length=float(d["length"]),
            depth=BathymetryProfile.from_dict(d["depth"]),
            structure=None if s is None else (float(s[0]), float(s[1])),
            joints=tuple(float(v) for v in d.get("joints", ())),
            damping_inlet=float(d.get("damping_inlet", 0.0)),
            damping_outlet=float(d.get("damping_outlet", 0.0)),
            periodic=bool(d.get("periodic", False)),
        )


@dataclass(frozen=True)
class Interface:
    """A vertex shared by two structure facets.

    ``left`` and ``right`` are top-facet column indices. The interface normal
    points from the left facet to the right one, so the jump of a quantity
    ``a`` is ``a_left - a_right``.
    """

    x: float
    column: int
    left: int
    right: int
    h: float
    is_joint: bool = False
    normal: float = 1.0


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Tagged structured quadrilateral mesh.

    Vertex ``(ix, iz)`` has id ``iz*(nx+1) + ix`` and cell ``(ix, iz)`` has id
    ``iz*nx + ix``; ``iz = 0`` is the bottom layer. Cell connectivity is
    counter-clockwise ``[bottom-left, bottom-right, top-right, top-left]``.
    """

    geometry: GeometryConfig
    nx: int
    nz: int
    x_lines: np.ndarray
    zeta_lines: np.ndarray
    nodes: np.ndarray
    cells: np.ndarray
    top_tags: np.ndarray
    facets: dict = field(repr=False)
    structure_interfaces: tuple = ()
    joint_interfaces: tuple = ()
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int), repr=False)

    @property
    def periodic(self) -> bool:
        return self.geometry.periodic

    @property
    def ncells(self) -> int:
        return self.nx * self.nz

    @property
    def nvertices(self) -> int:
        return (self.nx + 1) * (self.nz + 1)

    def vertex_id(self, ix, iz):
        return np.asarray(iz) * (self.nx + 1) + np.asarray(ix)

    def cell_id(self, ix, iz):
        return np.asarray(iz) * self.nx + np.asarray(ix)

    def columns(self, tag: str) -> np.ndarray:
        """Top-facet column indices carrying ``tag`` (free surface or structure)."""
        return np.flatnonzero(self.top_tags == tag)

    def top_cells(self, columns) -> np.ndarray:
        return self.cell_id(np.asarray(columns), self.nz - 1)

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x_lines)

    def depth(self, x) -> np.ndarray:
        return self.geometry.depth.depth(x)


def _grid_is_aligned(positions, length: float, nx: int) -> bool:
    for p in positions:
        s = p / length * nx
        if abs(s - round(s)) > _ALIGN_TOL * max(1.0, nx):
            return False
    return True


def layer_heights(nz: int, ratio: float) -> np.ndarray:
    """Relative layer heights (bottom first, summing to one) in geometric progression.

    ``ratio`` is the top-layer height divided by the bottom-layer height.
    """
    if nz < 1:
        raise ValidationError("nz must be at least 1")
    if not ratio > 0:
        raise ValidationError(f"grading ratio must be positive, got {ratio}")
    if nz == 1:
        return np.ones(1)
    q = ratio ** (1.0 / (nz - 1))
    h = q ** np.arange(nz)
    return h / h.sum()


def build_structured_mesh(geom: GeometryConfig, nx: int, nz: int,
                          vertical_grading_ratio: float = 1.0, snap: bool = True) -> Mesh2D:
    """Build the tagged mesh of ``[0, Lx] x [-H(x), 0]``.

    :param geom: tank geometry.
    :param nx: requested number of columns. When a structure endpoint, joint or
        ramp breakpoint does not fall on a grid line and ``snap`` is true, the
        smallest ``nx' >= nx`` that aligns all of them is used instead.
    :param nz: number of layers.
    :param vertical_grading_ratio: top/bottom layer height ratio (1 is uniform).
    :raises MisalignmentError: alignment is impossible or ``snap`` is false.
    """
    geom.validate()
    if int(nx) != nx or int(nz) != nz or nx < 1 or nz < 1:
        raise ValidationError(f"nx and nz must be positive integers, got {nx}, {nz}")
    nx, nz = int(nx), int(nz)
    L = geom.length
    special = geom.aligned_positions()
    if not _grid_is_aligned(special, L, nx):
        if not snap:
            raise MisalignmentError(f"positions {special} are not on the grid of nx={nx}")
        for cand in range(nx + 1, 64 * nx + 1):
            if _grid_is_aligned(special, L, cand):
                nx = cand
                break
        else:
            raise MisalignmentError(f"no nx in [{nx}, {64 * nx}] aligns the positions {special}")

    x_lines = np.linspace(0.0, L, nx + 1)
    for p in special:
        x_lines[int(round(p / L * nx))] = p
    x_lines[0], x_lines[-1] = 0.0, L

    heights = layer_heights(nz, vertical_grading_ratio)
    zeta = np.concatenate(([0.0], np.cumsum(heights))) - 1.0
    zeta[0], zeta[-1] = -1.0, 0.0

    ref_nodes = np.empty(((nz + 1) * (nx + 1), 2))
    xx, zz = np.meshgrid(x_lines, zeta)
    ref_nodes[:, 0] = xx.ravel()
    ref_nodes[:, 1] = zz.ravel()

    ix, iz = np.meshgrid(np.arange(nx), np.arange(nz))
    ix, iz = ix.ravel(), iz.ravel()
    bl = iz * (nx + 1) + ix
    cells = np.stack([bl, bl + 1, bl + nx + 2, bl + nx + 1], axis=1)

    centers = 0.5 * (x_lines[:-1] + x_lines[1:])
    top_tags = np.full(nx, FREE_SURFACE, dtype=object)
    if geom.structure is not None:
        xl, xr = geom.structure
        top_tags[(centers > xl) & (centers < xr)] = STRUCTURE

    top = nz * (nx + 1)
    cols = np.arange(nx)
    facets = {
        BOTTOM: np.stack([cols, cols + 1], axis=1),
        FREE_SURFACE: np.stack([top + cols, top + cols + 1], axis=1)[top_tags == FREE_SURFACE],
        STRUCTURE: np.stack([top + cols, top + cols + 1], axis=1)[top_tags == STRUCTURE],
    }
    layers = np.arange(nz)
    if geom.periodic:
        facets[INLET] = np.zeros((0, 2), dtype=int)
        facets[OUTLET] = np.zeros((0, 2), dtype=int)
        left = np.arange(nz + 1) * (nx + 1)
        pairs = np.stack([left, left + nx], axis=1)
    else:
        facets[INLET] = np.stack([layers * (nx + 1), (layers + 1) * (nx + 1)], axis=1)
        facets[OUTLET] = np.stack([layers * (nx + 1) + nx, (layers + 1) * (nx + 1) + nx], axis=1)
        pairs = np.zeros((0, 2), dtype=int)

    mesh = Mesh2D(geometry=geom, nx=nx, nz=nz, x_lines=x_lines, zeta_lines=zeta,
                  nodes=ref_nodes, cells=cells, top_tags=top_tags, facets=facets,
                  periodic_pairs=pairs)
    s_list, j_list = extract_interfaces(mesh)
    mesh = replace(mesh, structure_interfaces=tuple(s_list), joint_interfaces=tuple(j_list))
    return apply_bathymetry(mesh, geom.depth)


def apply_bathymetry(mesh: Mesh2D, profile: BathymetryProfile) -> Mesh2D:
    """Map each vertex ``(x, ẑ)`` to ``(x, ẑ·H(x))``; the surface ``ẑ = 0`` is unchanged."""
    profile.validate(mesh.geometry.length)
    nodes = mesh.nodes.copy()
    ix = np.tile(np.arange(mesh.nx + 1), mesh.nz + 1)
    iz = np.repeat(np.arange(mesh.nz + 1), mesh.nx + 1)
    H = profile.depth(mesh.x_lines)[ix]
    if np.any(H <= 0):
        raise ValidationError("bathymetry map produced a non-positive depth")
    nodes[:, 1] = mesh.zeta_lines[iz] * H
    geom = replace(mesh.geometry, depth=profile)
    out = replace(mesh, nodes=nodes, geometry=geom)
    if np.any(cell_corner_jacobians(out) <= 0):
        raise ValidationError("bathymetry map produced an inverted cell")
    return out


def cell_corner_jacobians(mesh: Mesh2D) -> np.ndarray:
    """Jacobian determinants of the bilinear cell maps at the four corners.

    The determinant of a bilinear map is affine in each reference coordinate,
    so positivity at the corners implies positivity in the whole cell.
    """
    X = mesh.nodes[mesh.cells]
    out = np.empty((mesh.ncells, 4))
    for k in range(4):
        p, n, q = X[:, (k - 1) % 4], X[:, k], X[:, (k + 1) % 4]
        a, b = q - n, p - n
        out[:, k] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def extract_interfaces(mesh: Mesh2D) -> tuple[list[Interface], list[Interface]]:
    """Classify the vertices shared by two structure facets into C/DG interfaces and joints."""
    geom = mesh.geometry
    joints = list(geom.joints)
    nx = mesh.nx
    is_str = mesh.top_tags == STRUCTURE
    dx = np.diff(mesh.x_lines)
    interfaces: list[Interface] = []
    joint_ifs: list[Interface] = []
    found = [False] * len(joints)
    vcols = range(nx) if mesh.periodic else range(1, nx)
    for j in vcols:
        left, right = (j - 1) % nx, j
        if not (is_str[left] and is_str[right]):
            continue
        x = mesh.x_lines[j]
        h = 0.5 * (dx[left] + dx[right])
        hit = [i for i, xj in enumerate(joints) if abs(xj - x) <= _ALIGN_TOL * max(1.0, geom.length)]
        if hit:
            found[hit[0]] = True
            joint_ifs.append(Interface(x, j, left, right, h, True))
        else:
            interfaces.append(Interface(x, j, left, right, h, False))
    for ok, xj in zip(found, joints):
        if not ok:
            raise TopologyError(f"joint at x={xj} is not shared by two structure facets")
    return interfaces, joint_ifs


def write_mesh_vtk(mesh: Mesh2D, path) -> Path:
    """Dump the mesh as a legacy ASCII VTK unstructured grid of quads.

    The cell data ``layer`` and ``top_tag`` (0 interior, 1 free surface,
    2 structure) help to check the tagging visually.
    """
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", "hydroelastic mesh", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.nvertices} double"]
    lines += [f"{x:.17g} {z:.17g} 0" for x, z in mesh.nodes]
    lines.append(f"CELLS {mesh.ncells} {5 * mesh.ncells}")
    lines += ["4 " + " ".join(str(v) for v in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.ncells}")
    lines += ["9"] * mesh.ncells
    tag = np.zeros(mesh.ncells, dtype=int)
    top = mesh.top_cells(np.arange(mesh.nx))
    tag[top] = np.where(mesh.top_tags == STRUCTURE, 2, 1)
    lines += [f"CELL_DATA {mesh.ncells}", "SCALARS layer int 1", "LOOKUP_TABLE default"]
    lines += [str(i // mesh.nx) for i in range(mesh.ncells)]
    lines += ["SCALARS top_tag int 1", "LOOKUP_TABLE default"]
    lines += [str(t) for t in tag]
    path.write_text("\n".join(lines) + "\n")
    return path
