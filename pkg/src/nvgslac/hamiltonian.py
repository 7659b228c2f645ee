"""Ground-state spin Hamiltonian of the NV- center coupled to its host 14N.

Units: MHz for energies, mT for fields, MHz/mT for gyromagnetic ratios.
The quantization axis z is the NV symmetry axis; the field direction is
given by polar angle theta (from z) and azimuth phi, both in degrees.

The full 9x9 Hamiltonian is

    H = d_g Sz^2 + gamma_e B (n . S)
      + q Iz^2  - gamma_n14 B (n . I)
      + a_perp (Sx Ix + Sy Iy) + a_par Sz Iz

with S the electron spin-1 (subsystem slot 0) and I the nitrogen spin-1
(slot 1).

Closed-form axial model
-----------------------
For an axial field the six m_S in {0,-1} levels admit closed-form
energies and eigenvectors once the (tiny) nitrogen Zeeman term is
dropped.  Levels carry a conventional index 1..9 fixed by their
character, not by energy order:

    1: |0,+1>             2: |-1,-1>
    3, 4: lower/upper of the mixed (|-1,+1>, |0,0>) pair
    5, 6: lower/upper of the mixed (|-1,0>, |0,-1>) pair
    7: |+1,+1>            8: |+1,-1>            9: |+1,0>

Energy-sorted output (``EigenSystem``) is a different ordering; use the
labels to map between the two.

The mixing parameter of the 5/6 pair is exposed with a switch,
``kappa2_sign``:

* ``"minus"`` (default): kappa2 = (d_g - q - gamma_e B) / (2 a_perp),
  the exact two-state reduction of the Hamiltonian block above.  With
  this choice the closed forms reproduce numerical diagonalization of
  the truncated model to machine precision.
* ``"plus"``: kappa2 = (d_g + q - gamma_e B) / (2 a_perp), mirroring the
  form of the 3/4 pair with the parallel coupling dropped.  Kept for
  comparison; it is *not* an eigendecomposition of the Hamiltonian
  block and its minimum 5/6 gap sits at gamma_e B = d_g + q instead of
  d_g - q.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, ValidationError
from .spin_core import (
    EigenSystem,
    _greedy_bijection,
    eigensolve,
    embed,
    label_states,
    product_basis_labels,
    spin_matrices,
)

KAPPA2_SIGNS = ("minus", "plus")


@dataclass(frozen=True)
class PhysicalConstants:
    """Ground-state coupling constants (MHz and MHz/mT)."""

    d_g: float = 2870.0          # zero-field splitting
    gamma_e: float = 28.025      # electron gyromagnetic ratio
    q: float = -4.96             # 14N quadrupole parameter
    gamma_n14: float = 0.003077  # 14N gyromagnetic ratio
    gamma_c13: float = 0.010704  # 13C gyromagnetic ratio
    a_par: float = -2.14         # 14N hyperfine, axial
    a_perp: float = -2.70        # 14N hyperfine, transverse

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def sha256(self) -> str:
        text = ",".join(f"{k}={v!r}" for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(text.encode()).hexdigest()


DEFAULT_CONSTANTS = PhysicalConstants()

CONSTANT_UNITS = {
    "d_g": "MHz",
    "gamma_e": "MHz/mT",
    "q": "MHz",
    "gamma_n14": "MHz/mT",
    "gamma_c13": "MHz/mT",
    "a_par": "MHz",
    "a_perp": "MHz",
}


def parse_constants_file(path) -> PhysicalConstants:
    """Read a flat ``key = value`` override file.

    Unknown keys and non-numeric values are rejected; missing keys keep
    their defaults.  ``#`` starts a comment.
    """
    overrides = {}
    known = set(PhysicalConstants.__dataclass_fields__)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ParseError(f"{path}:{lineno}: expected 'key = value'")
                key, value = parts
            key = key.strip()
            if key not in known:
                raise ParseError(f"{path}:{lineno}: unknown constant {key!r}")
            if key in overrides:
                raise ParseError(f"{path}:{lineno}: duplicate constant {key!r}")
            try:
                overrides[key] = float(value.strip())
            except ValueError:
                raise ParseError(f"{path}:{lineno}: invalid number {value.strip()!r}") from None
    return replace(DEFAULT_CONSTANTS, **overrides)


@dataclass(frozen=True)
class FieldConfig:
    """Static field: magnitude (mT) and orientation relative to the NV axis."""

    b: float
    theta_deg: float = 0.0
    phi_deg: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.b) or self.b < 0:
            raise ValidationError(f"field magnitude must be >= 0, got {self.b!r}")
        if not 0.0 <= self.theta_deg < 180.0:
            raise ValidationError(f"theta must lie in [0, 180), got {self.theta_deg!r}")
        if not 0.0 <= self.phi_deg < 360.0:
            raise ValidationError(f"phi must lie in [0, 360), got {self.phi_deg!r}")

    def direction(self) -> np.ndarray:
        theta = np.deg2rad(self.theta_deg)
        phi = np.deg2rad(self.phi_deg)
        return np.array(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
        )


@dataclass(frozen=True)
class HyperfineTensor:
    """Principal values (MHz) of a diagonal hyperfine coupling tensor."""

    axx: float
    ayy: float
    azz: float

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.axx, self.ayy, self.azz]).astype(float)


def nitrogen_tensor(constants: PhysicalConstants = DEFAULT_CONSTANTS) -> HyperfineTensor:
    return HyperfineTensor(axx=constants.a_perp, ayy=constants.a_perp, azz=constants.a_par)


# Basis index of |m_S, m_I> in the 9-dim product basis.
def basis_index(ms: int, mi: int) -> int:
    return 3 * (1 - ms) + (1 - mi)


NV_N14_LABELS = product_basis_labels(0)
TRUNCATED_LABELS = ((0, 1), (0, 0), (0, -1), (-1, 1), (-1, 0), (-1, -1))


def build_nv_hamiltonian(
    constants: PhysicalConstants, field_cfg: FieldConfig
) -> np.ndarray:
    """Assemble the full 9x9 NV + 14N Hamiltonian for an arbitrary field."""
    dims = (3, 3)
    e = spin_matrices(1.0)
    sx, sy, sz = (embed(op, 0, dims) for op in (e.sx, e.sy, e.sz))
    ix, iy, iz = (embed(op, 1, dims) for op in (e.sx, e.sy, e.sz))
    nx, ny, nz = field_cfg.direction()
    b = field_cfg.b
    c = constants
    h = (
        c.d_g * (sz @ sz)
        + c.gamma_e * b * (nx * sx + ny * sy + nz * sz)
        + c.q * (iz @ iz)
        - c.gamma_n14 * b * (nx * ix + ny * iy + nz * iz)
        + c.a_perp * (sx @ ix + sy @ iy)
        + c.a_par * (sz @ iz)
    )
    return h


def truncated_hamiltonian(constants: PhysicalConstants, b: float) -> np.ndarray:
    """6x6 axial model over m_S in {0,-1}, nitrogen Zeeman dropped.

    This is the numerical twin of the closed forms: it keeps exactly the
    terms they contain, so the two agree to machine precision. Basis
    order is ``TRUNCATED_LABELS``.
    """
    no_nz = replace(constants, gamma_n14=0.0)
    h9 = build_nv_hamiltonian(no_nz, FieldConfig(b=b))
    return h9[3:, 3:]


def gslac_field(constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Field (mT) where the electron Zeeman shift cancels the zero-field splitting."""
    return constants.d_g / constants.gamma_e


def _check_kappa2_sign(kappa2_sign: str) -> None:
    if kappa2_sign not in KAPPA2_SIGNS:
        raise ValidationError(f"kappa2_sign must be one of {KAPPA2_SIGNS}, got {kappa2_sign!r}")


def analytic_energies(
    constants: PhysicalConstants, b, kappa2_sign: str = "minus"
) -> np.ndarray:
    """Closed-form axial energies, indexed 1..9 (see module docstring).

    ``b`` may be a scalar or an array; the level index is the last axis.
    """
    _check_kappa2_sign(kappa2_sign)
    c = constants
    b = np.asarray(b, dtype=float)
    ze = c.gamma_e * b
    delta1 = c.d_g + c.q - c.a_par - ze
    root1 = np.hypot(2.0 * c.a_perp, delta1)
    trace2 = c.d_g + c.q - ze
    gap2 = (c.d_g - c.q - ze) if kappa2_sign == "minus" else trace2
    root2 = np.hypot(2.0 * c.a_perp, gap2)
    ones = np.ones_like(b)
    levels = [
        c.q * ones,
        (c.d_g + c.q + c.a_par) * ones - ze,
        0.5 * (delta1 - root1),
        0.5 * (delta1 + root1),
        0.5 * (trace2 - root2),
        0.5 * (trace2 + root2),
        (c.d_g + c.q + c.a_par) * ones + ze,
        (c.d_g + c.q - c.a_par) * ones + ze,
        c.d_g * ones + ze,
    ]
    return np.stack(levels, axis=-1)


def kappa_parameters(
    constants: PhysicalConstants, b, kappa2_sign: str = "minus"
) -> tuple:
    """Signed mixing parameters (kappa1, kappa2) of the two mixed pairs."""
    _check_kappa2_sign(kappa2_sign)
    c = constants
    b = np.asarray(b, dtype=float)
    ze = c.gamma_e * b
    kappa1 = (c.d_g + c.q - c.a_par - ze) / (2.0 * c.a_perp)
    num2 = (c.d_g - c.q - ze) if kappa2_sign == "minus" else (c.d_g + c.q - ze)
    return kappa1, num2 / (2.0 * c.a_perp)


def _pair_vectors(kappa_abs: float, sign_a: float) -> tuple:
    """Normalized (lower, upper) eigenvectors of a mixed two-state block.

    Components refer to the block basis (state with the larger diagonal,
    state with the smaller diagonal); ``kappa_abs`` is the diagonal gap
    over 2|a| and ``sign_a`` the sign of the off-diagonal coupling.
    kappa +- sqrt(kappa^2 + 1) is evaluated in the cancellation-free
    branch so large |kappa| keeps full precision.
    """
    k = kappa_abs
    root = np.sqrt(k * k + 1.0)
    t_plus = k + root if k >= 0 else 1.0 / (root - k)
    t_minus = k - root if k <= 0 else -1.0 / (k + root)
    low = np.array([1.0, -sign_a * t_plus])
    up = np.array([1.0, -sign_a * t_minus])
    return low / np.linalg.norm(low), up / np.linalg.norm(up)


def analytic_eigenstates(
    constants: PhysicalConstants, b: float, kappa2_sign: str = "minus"
) -> np.ndarray:
    """Closed-form axial eigenvectors; column k is level k+1 in the 9-dim basis.

    Each column is normalized; pairing with :func:`analytic_energies`
    holds exactly for the ``"minus"`` convention.
    """
    _check_kappa2_sign(kappa2_sign)
    c = constants
    if c.a_perp == 0.0:
        raise ValidationError("transverse hyperfine coupling must be nonzero")
    sign_a = 1.0 if c.a_perp > 0 else -1.0
    abs_a = abs(c.a_perp)
    ze = c.gamma_e * float(b)
    kt1 = (c.d_g + c.q - c.a_par - ze) / (2.0 * abs_a)
    num2 = (c.d_g - c.q - ze) if kappa2_sign == "minus" else (c.d_g + c.q - ze)
    kt2 = num2 / (2.0 * abs_a)

    v = np.zeros((9, 9), dtype=complex)
    v[basis_index(0, 1), 0] = 1.0       # level 1
    v[basis_index(-1, -1), 1] = 1.0     # level 2
    low1, up1 = _pair_vectors(kt1, sign_a)
    for col, vec in ((2, low1), (3, up1)):  # levels 3, 4
        v[basis_index(-1, 1), col] = vec[0]
        v[basis_index(0, 0), col] = vec[1]
    low2, up2 = _pair_vectors(kt2, sign_a)
    for col, vec in ((4, low2), (5, up2)):  # levels 5, 6
        v[basis_index(-1, 0), col] = vec[0]
        v[basis_index(0, -1), col] = vec[1]
    v[basis_index(1, 1), 6] = 1.0       # level 7
    v[basis_index(1, -1), 7] = 1.0      # level 8
    v[basis_index(1, 0), 8] = 1.0       # level 9
    return v


def truncated_eigensystem(constants: PhysicalConstants, b: float) -> EigenSystem:
    """Eigen-system of the truncated axial model lifted to the 9-dim basis.

    The three m_S = +1 product states are appended unmixed with their
    diagonal energies, giving a full 9-level system in which the
    five unmixed levels are exact basis states.
    """
    h6 = truncated_hamiltonian(constants, b)
    energies6, vectors6 = np.linalg.eigh(h6)
    c = constants
    ze = c.gamma_e * b
    plus_energies = np.array(
        [c.d_g + c.q + c.a_par + ze, c.d_g + ze, c.d_g + c.q - c.a_par + ze]
    )
    energies = np.concatenate([energies6, plus_energies])
    vectors = np.zeros((9, 9), dtype=complex)
    vectors[3:, :6] = vectors6
    for col, (ms, mi) in enumerate(((1, 1), (1, 0), (1, -1)), start=6):
        vectors[basis_index(ms, mi), col] = 1.0
    order = np.argsort(energies, kind="stable")
    system = EigenSystem(energies=energies[order], vectors=vectors[:, order])
    return label_states(system, NV_N14_LABELS)


def level_sweep(
    constants: PhysicalConstants,
    fields,
    theta_deg: float = 0.0,
    phi_deg: float = 0.0,
) -> list:
    """Eigen-systems over a field range with labels tracked continuously.

    The first point is labeled by basis overlap; each further point
    inherits labels from its predecessor through greedy eigenvector
    overlap matching, so a label follows one adiabatic branch through
    anticrossings.
    """
    fields = [float(b) for b in fields]
    if not fields:
        raise ValidationError("field range must be nonempty")
    systems = []
    prev = None
    for b in fields:
        h = build_nv_hamiltonian(constants, FieldConfig(b=b, theta_deg=theta_deg, phi_deg=phi_deg))
        if prev is None:
            system = eigensolve(h, NV_N14_LABELS)
        else:
            energies, vectors = np.linalg.eigh(h)
            overlap = np.abs(prev.vectors.conj().T @ vectors) ** 2  # [prev_k, k]
            assign = _greedy_bijection(overlap.T)  # new k -> prev k
            labels = tuple(prev.labels[assign[k]] for k in range(9))
            system = EigenSystem(energies=energies, vectors=vectors, labels=labels)
        systems.append(system)
        prev = system
    return systems
