"""13C bath sampling on the diamond lattice, secular hyperfine couplings, bath files.

Positions are expressed in the NV frame: origin at the vacancy, z along the
crystal [111] direction (the NV axis), x along [11-2], y along [-110].
Lattice sites are enumerated on the integer grid of quarter lattice constants,
which makes site ordering and coupling-strength ranking exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from importlib import resources
import math

import numpy as np

from .constants import CONSTANTS, GAUSS, PhysicalConstants
from .errors import BathParseError, ConsistencyError, DomainError, ParameterError

__all__ = [
    "BathSpin",
    "BathConfig",
    "PROVENANCES",
    "hyperfine_from_position",
    "lattice_sites",
    "sample_bath",
    "save_bath",
    "parse_bath",
    "load_bath",
    "write_bath",
    "preset_bath",
    "PRESET_BATHS",
]

PROVENANCES = ("sampled", "loaded", "synthetic")

# rows: NV-frame unit vectors in crystal coordinates
NV_FRAME = np.array(
    [
        [1.0, 1.0, -2.0],
        [-1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0],
    ]
)
NV_FRAME /= np.linalg.norm(NV_FRAME, axis=1)[:, None]

# nitrogen sits on the nearest neighbour along [111], in units of a/4
NITROGEN_SITE = (1, 1, 1)


@dataclass(frozen=True)
class BathSpin:
    position: tuple  # metres, NV frame
    a_par: float  # rad/s
    a_perp: float  # rad/s, >= 0

    def __post_init__(self):
        pos = tuple(float(x) for x in self.position)
        if len(pos) != 3:
            raise ParameterError("position", "must be a 3-vector")
        if pos == (0.0, 0.0, 0.0):
            raise ParameterError("position", "the vacancy site cannot hold a bath spin")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "a_par", float(self.a_par))
        object.__setattr__(self, "a_perp", float(self.a_perp))
        if self.a_perp < 0:
            raise ParameterError("a_perp", "stored value must be non-negative")

    @property
    def r(self):
        return math.sqrt(sum(x * x for x in self.position))

    def is_consistent(self, constants=CONSTANTS, rtol=1e-12):
        """True when the couplings follow from the position (point dipole)."""
        a_par, a_perp = hyperfine_from_position(self.position, constants)
        scale = max(abs(a_par), abs(a_perp))
        return (
            abs(a_par - self.a_par) <= rtol * scale
            and abs(a_perp - self.a_perp) <= rtol * scale
        )


@dataclass(frozen=True)
class BathConfig:
    """External field plus the ordered list of bath spins.

    ``larmor`` is derived (``gamma_c * b_field``) and never stored independently.
    """

    b_field: float  # tesla, along the NV axis
    spins: tuple = ()
    seed: int = 0
    provenance: str = "synthetic"
    constants: PhysicalConstants = field(default=CONSTANTS, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "b_field", float(self.b_field))
        object.__setattr__(self, "spins", tuple(self.spins))
        object.__setattr__(self, "seed", int(self.seed))
        if self.provenance not in PROVENANCES:
            raise ParameterError("provenance", f"must be one of {PROVENANCES}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed", "must fit in an unsigned 64-bit integer")

    @property
    def larmor(self):
        return self.constants.gamma_c * self.b_field

    @property
    def n_spins(self):
        return len(self.spins)

    @property
    def a_par(self):
        return np.array([s.a_par for s in self.spins], dtype=float)

    @property
    def a_perp(self):
        return np.array([s.a_perp for s in self.spins], dtype=float)

    @property
    def positions(self):
        return np.array([s.position for s in self.spins], dtype=float).reshape(-1, 3)

    def with_field(self, b_field):
        return replace(self, b_field=b_field)

    def pure_dephasing(self):
        """Copy with every ``a_perp`` forced to zero (flagged synthetic)."""
        spins = tuple(replace(s, a_perp=0.0) for s in self.spins)
        return replace(self, spins=spins, provenance="synthetic")

    def subset(self, indices):
        spins = tuple(self.spins[i] for i in indices)
        return replace(self, spins=spins)


def hyperfine_from_position(position, constants=CONSTANTS):
    """Secular (``a_par``) and pseudo-secular (``a_perp``) point-dipole couplings.

    Parameters
    ----------
    position : array_like, shape (3,)
        Nuclear position relative to the vacancy, NV frame, metres.

    Returns
    -------
    (a_par, a_perp) in rad/s, ``a_perp >= 0``.
    """
    x, y, z = (float(v) for v in position)
    r2 = x * x + y * y + z * z
    if r2 == 0.0:
        raise DomainError("hyperfine coupling undefined at the vacancy site (r = 0)")
    r = math.sqrt(r2)
    cos_t = z / r
    sin_t = math.sqrt(x * x + y * y) / r
    d_r3 = constants.dipolar_prefactor / (r2 * r)
    a_par = d_r3 * (1.0 - 3.0 * cos_t * cos_t)
    a_perp = abs(-3.0 * d_r3 * sin_t * cos_t)
    return a_par, a_perp


def _quarter_grid(n_max):
    """All diamond sites with |u|,|v|,|w| <= n_max (units of a/4)."""
    rng = np.arange(-n_max, n_max + 1)
    u, v, w = np.meshgrid(rng, rng, rng, indexing="ij")
    u, v, w = u.ravel(), v.ravel(), w.ravel()
    even = (u % 2 == 0) & (v % 2 == 0) & (w % 2 == 0) & ((u + v + w) % 4 == 0)
    odd = (u % 2 == 1) & (v % 2 == 1) & (w % 2 == 1) & ((u + v + w - 3) % 4 == 0)
    keep = even | odd
    return np.stack([u[keep], v[keep], w[keep]], axis=1)


def lattice_sites(r_min, r_max, constants=CONSTANTS):
    """Carbon sites with ``r_min <= |r| <= r_max`` in deterministic order.

    Returns
    -------
    grid : ndarray of int, shape (n, 3)
        Crystal coordinates in units of a/4, sorted by (r^2, u, v, w).
    positions : ndarray, shape (n, 3)
        NV-frame positions in metres.
    """
    quarter = constants.lattice_constant / 4.0
    n_max = int(math.ceil(r_max / quarter)) + 1
    grid = _quarter_grid(n_max)
    r2 = (grid**2).sum(axis=1)
    not_special = (r2 != 0) & ~np.all(grid == NITROGEN_SITE, axis=1)
    # widen by one ulp-ish margin in quarter units, then filter on metres exactly
    lo = (r_min / quarter) ** 2 * (1 - 1e-12)
    hi = (r_max / quarter) ** 2 * (1 + 1e-12)
    grid = grid[not_special & (r2 >= lo) & (r2 <= hi)]
    order = np.lexsort((grid[:, 2], grid[:, 1], grid[:, 0], (grid**2).sum(axis=1)))
    grid = grid[order]
    positions = (grid * quarter) @ NV_FRAME.T
    radius = np.linalg.norm(positions, axis=1)
    inside = (radius >= r_min) & (radius <= r_max)
    return grid[inside], positions[inside]


def _strength_key(g):
    """Exact rank key proportional to a_par^2 + a_perp^2 = d^2 (1 + 3 cos^2) / r^6."""
    r2 = int(g[0] ** 2 + g[1] ** 2 + g[2] ** 2)
    s = int(g[0] + g[1] + g[2])
    return Fraction(r2 + s * s, r2**4)


def sample_bath(
    seed,
    abundance=CONSTANTS.abundance_default,
    r_min=0.25e-9,
    r_max=1.5e-9,
    max_spins=8,
    b_field=0.05,
    constants=CONSTANTS,
):
    """Occupy lattice sites with 13C at ``abundance`` and keep the strongest couplings.

    Each enumerated site draws one uniform number from ``default_rng(seed)`` in
    site order; a site is occupied when the draw is below ``abundance``. If more
    than ``max_spins`` sites are occupied only the ``max_spins`` most strongly
    coupled are kept (ties broken by site order). Spins are returned strongest
    first.
    """
    if not 0.0 <= abundance <= 1.0:
        raise ParameterError("abundance", f"must lie in [0, 1], got {abundance}")
    if not r_min > 0:
        raise ParameterError("r_min", f"must be positive, got {r_min}")
    if not r_max > r_min:
        raise ParameterError("r_max", f"must exceed r_min, got {r_max} <= {r_min}")
    if max_spins < 0:
        raise ParameterError("max_spins", f"must be non-negative, got {max_spins}")
    if not b_field >= 0:
        raise ParameterError("b_field", f"must be non-negative, got {b_field}")
    grid, positions = lattice_sites(r_min, r_max, constants)
    rng = np.random.default_rng(seed)
    draws = rng.random(len(grid))
    occupied = np.flatnonzero(draws < abundance)
    ranked = sorted(occupied, key=lambda i: (-_strength_key(grid[i]), i))
    kept = ranked[:max_spins]
    spins = []
    for i in kept:
        pos = tuple(positions[i])
        a_par, a_perp = hyperfine_from_position(pos, constants)
        spins.append(BathSpin(pos, a_par, a_perp))
    return BathConfig(
        b_field=b_field,
        spins=tuple(spins),
        seed=seed,
        provenance="sampled",
        constants=constants,
    )


# --------------------------------------------------------------------- bath files

FORMAT_VERSION = 1
COLUMNS = ("x_nm", "y_nm", "z_nm", "a_par_krad_s", "a_perp_krad_s")
_COLUMN_SCALE = {"x_nm": 9, "y_nm": 9, "z_nm": 9, "a_par_krad_s": -3, "a_perp_krad_s": -3}


def _exact_decimal(x, exponent):
    """Shortest decimal (>= 12 significant digits) of ``x * 10**exponent``
    that maps back to ``x`` exactly under decimal rescaling."""
    if x == 0.0:
        return "0"
    scaled = Decimal(x).scaleb(exponent)
    for digits in range(12, 18):
        text = format(scaled, f".{digits - 1}e")
        if float(Decimal(text).scaleb(-exponent)) == x:
            return text
    return format(scaled, "e")


def _from_decimal(text, exponent):
    return float(Decimal(text).scaleb(-exponent))


def save_bath(bath):
    """Serialize ``bath`` to the line-oriented bath file format."""
    lines = [
        f"# format_version={FORMAT_VERSION}",
        f"# b_field_gauss={_exact_decimal(bath.b_field, 4)}",
        f"# larmor_rad_s={bath.larmor!r}",
        f"# seed={bath.seed}",
        f"# provenance={bath.provenance}",
        f"# n_spins={bath.n_spins}",
        "# columns=" + "\t".join(COLUMNS),
    ]
    for s in bath.spins:
        values = (*s.position, s.a_par, s.a_perp)
        fields = [_exact_decimal(v, _COLUMN_SCALE[c]) for c, v in zip(COLUMNS, values)]
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def parse_bath(text, constants=CONSTANTS):
    """Parse bath-file text; inverse of :func:`save_bath`."""
    meta = {}
    columns = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if not body:
                continue
            if "=" not in body:
                # free-form comment
                continue
            key, _, value = body.partition("=")
            key, value = key.strip(), value.strip()
            if key == "columns":
                columns = [c.strip() for c in value.split("\t") if c.strip()]
                if len(columns) == 1:
                    columns = value.split()
                missing = [c for c in COLUMNS if c not in columns]
                if missing:
                    raise BathParseError(lineno, f"missing column {missing[0]!r}")
                unknown = [c for c in columns if c not in COLUMNS]
                if unknown:
                    raise BathParseError(lineno, f"unknown column {unknown[0]!r}")
            else:
                meta[key] = (value, lineno)
            continue
        if columns is None:
            raise BathParseError(lineno, "spin row before the '# columns=' header")
        fields = line.split("\t")
        if len(fields) != len(columns):
            raise BathParseError(
                lineno, f"expected {len(columns)} tab-separated fields, got {len(fields)}"
            )
        try:
            values = {c: _from_decimal(f.strip(), _COLUMN_SCALE[c]) for c, f in zip(columns, fields)}
        except ArithmeticError:
            raise BathParseError(lineno, "field is not a decimal number") from None
        rows.append((lineno, values))

    def take(key, convert, default=None, required=True):
        if key not in meta:
            if required:
                raise BathParseError(1, f"missing header key {key!r}")
            return default
        value, lineno = meta[key]
        try:
            return convert(value)
        except (ValueError, ArithmeticError):
            raise BathParseError(lineno, f"bad value for {key!r}: {value!r}") from None

    version = take("format_version", int)
    if version != FORMAT_VERSION:
        raise BathParseError(meta["format_version"][1], f"unsupported format_version {version}")
    if columns is None:
        raise BathParseError(1, "missing '# columns=' header")
    b_field = take("b_field_gauss", lambda v: _from_decimal(v, 4))
    seed = take("seed", int, default=0, required=False)
    provenance = take("provenance", str, default="loaded", required=False)
    if provenance not in PROVENANCES:
        raise BathParseError(meta["provenance"][1], f"unknown provenance {provenance!r}")
    spins = []
    for lineno, values in rows:
        a_perp = values["a_perp_krad_s"]
        if a_perp < 0:
            raise BathParseError(lineno, "a_perp_krad_s must be non-negative")
        pos = (values["x_nm"], values["y_nm"], values["z_nm"])
        if pos == (0.0, 0.0, 0.0):
            raise BathParseError(lineno, "spin placed on the vacancy site")
        spins.append(BathSpin(pos, values["a_par_krad_s"], a_perp))
    n_declared = take("n_spins", int, default=None, required=False)
    if n_declared is not None and n_declared != len(spins):
        raise BathParseError(meta["n_spins"][1], f"n_spins={n_declared} but {len(spins)} rows")
    bath = BathConfig(b_field, tuple(spins), seed, provenance, constants)
    larmor = take("larmor_rad_s", float, default=None, required=False)
    if larmor is not None:
        expected = bath.larmor
        if abs(larmor - expected) > 1e-9 * max(abs(expected), 1e-300):
            raise ConsistencyError(
                f"larmor_rad_s={larmor!r} inconsistent with b_field (gamma_c*B = {expected!r})"
            )
    return bath


def write_bath(bath, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_bath(bath))


def load_bath(path, constants=CONSTANTS):
    with open(path, encoding="utf-8") as fh:
        return parse_bath(fh.read(), constants)


PRESET_BATHS = ("acceptance", "paper_like")


def preset_bath(name, b_field=None):
    """Named synthetic bath shipped with the package.

    ``acceptance``: six lattice-consistent spins used by the acceptance suite.
    ``paper_like``: one strongly coupled spin plus weaker ones, for demos.
    Both are hand-picked and flagged ``synthetic``; neither is measured data.
    """
    if name not in PRESET_BATHS:
        raise ParameterError("name", f"unknown preset bath {name!r}; choose from {PRESET_BATHS}")
    text = resources.files("nvdnp").joinpath("data").joinpath(f"{name}.bath").read_text("utf-8")
    bath = parse_bath(text)
    if b_field is not None:
        bath = bath.with_field(b_field)
    return bath
