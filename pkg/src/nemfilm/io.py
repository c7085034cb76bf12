"""Run configuration and field files.

Configuration is line oriented::

    # comment
    section.key = value

Numbers are plain decimals, lists are comma separated.  Fields are CSV with a
header row, one node per row, x fastest, 17 significant digits.
"""
from __future__ import annotations

import csv
import io
import math
import re
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .energy2d import PField, PotentialSpec, QField2D, ctilde
from .energy3d import ElasticConstants, ModelParams, QField3D, check_coercivity
from .mesh import Mesh2D, Mesh3D, disc_mesh, extrude, make_mesh, square_mesh
from .minimizer import BoundaryData, boundary_case1, boundary_case2
from .optim import SolverConfig
from .surface import AnchoringParams


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class NonCoerciveWarning(UserWarning):
    pass


_DEC = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INT = re.compile(r"^[+-]?\d+$")


def _decimal(text: str, line: int) -> float:
    if not _DEC.match(text):
        raise ConfigError(f"malformed number {text!r}", line)
    return float(text)


def _integer(text: str, line: int) -> int:
    if not _INT.match(text):
        raise ConfigError(f"expected an integer, got {text!r}", line)
    return int(text)


def _decimals(text: str, line: int) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(_decimal(t.strip(), line) for t in text.split(","))


def _choice(options):
    def parse(text: str, line: int) -> str:
        if text not in options:
            raise ConfigError(f"expected one of {sorted(options)}, got {text!r}", line)
        return text

    return parse


# key -> (parser, default)
KEYS: dict[str, tuple] = {
    "domain.shape": (_choice({"square", "disc"}), "square"),
    "grid.nx": (_integer, 32),
    "grid.ny": (_integer, None),
    "grid.nz": (_integer, 8),
    "model.A": (_decimal, -1.0),
    "model.B": (_decimal, 1.0),
    "model.w_l": (_decimal, 20.0),
    "model.beta": (_decimal, 0.2),
    "model.delta": (_decimal, None),
    "elastic.M2": (_decimal, 0.0),
    "elastic.M3": (_decimal, 0.0),
    "anchoring.alpha0": (_decimal, 1.0),
    "anchoring.alpha1": (_decimal, 0.0),
    "anchoring.gamma0": (_decimal, 1.0),
    "anchoring.gamma1": (_decimal, 0.0),
    "boundary.case": (_choice({"case1", "case2"}), "case1"),
    "boundary.degree": (_integer, 1),
    "epsilon.list": (_decimals, (0.2, 0.1, 0.05)),
    "solver.tol": (_decimal, 1e-6),
    "solver.max_iters": (_integer, 20000),
    "solver.seed": (_integer, 0),
    "solver.continuation": (_decimals, ()),
    "stability.deltas": (_decimals, ()),
}

# model symbol -> config key
SYMBOL_KEYS = {
    "A": "model.A",
    "B": "model.B",
    "w_l": "model.w_l",
    "beta": "model.beta",
    "delta": "model.delta",
    "epsilon": "epsilon.list",
    "M2": "elastic.M2",
    "M3": "elastic.M3",
    "alpha0": "anchoring.alpha0",
    "alpha1": "anchoring.alpha1",
    "gamma0": "anchoring.gamma0",
    "gamma1": "anchoring.gamma1",
    "d": "boundary.degree",
}

# parameter fields that are computed rather than set
DERIVED_FIELDS = {"ldg_offset", "anchoring"}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[1] for k, v in KEYS.items()})
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    # builders -----------------------------------------------------------

    def mesh(self) -> Mesh2D:
        return make_mesh(self["domain.shape"], self["grid.nx"], self["grid.ny"])

    def anchoring(self) -> AnchoringParams:
        return AnchoringParams(
            self["anchoring.alpha0"],
            self["anchoring.alpha1"],
            self["anchoring.gamma0"],
            self["anchoring.gamma1"],
            self["model.beta"],
        )

    def elastic(self) -> ElasticConstants:
        return ElasticConstants(self["elastic.M2"], self["elastic.M3"])

    def model(self, epsilon: float | None = None) -> ModelParams:
        eps = self["epsilon.list"][0] if epsilon is None else epsilon
        return ModelParams(self["model.A"], self["model.B"], self["model.w_l"], eps, self.anchoring())

    def potential(self) -> PotentialSpec:
        if self["model.delta"] is not None:
            C = ctilde(self["model.A"], self["model.B"], self["model.beta"])
            return PotentialSpec(C, self["model.delta"], None, self.elastic().M)
        return PotentialSpec.from_model(self.model(), self.elastic())

    def solver(self) -> SolverConfig:
        return SolverConfig(
            tol=self["solver.tol"],
            max_iters=self["solver.max_iters"],
            seed=self["solver.seed"],
            continuation=self["solver.continuation"],
        )

    def boundary(self, mesh: Mesh2D) -> BoundaryData:
        if self["boundary.case"] == "case1":
            return boundary_case1(mesh, self["model.beta"])
        return boundary_case2(mesh, self["boundary.degree"], self["model.beta"])


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", n)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in cfg.lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.lines[key]})", n)
        cfg.values[key] = KEYS[key][0](value, n)
        cfg.lines[key] = n
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _validate(cfg: RunConfig):
    v, ln = cfg.values, cfg.lines

    def fail(msg, *keys):
        lines = [ln[k] for k in keys if k in ln]
        raise ConfigError(msg, max(lines) if lines else None)

    for a, b in (("anchoring.alpha0", "anchoring.alpha1"), ("anchoring.gamma0", "anchoring.gamma1")):
        if v[a] * v[b] != 0:
            fail(f"{a} and {b} cannot both be nonzero", a, b)
    for k in ("anchoring.alpha0", "anchoring.alpha1", "anchoring.gamma0", "anchoring.gamma1"):
        if v[k] < 0:
            fail(f"{k} must be nonnegative", k)
    if not v["model.w_l"] > 0:
        fail("model.w_l must be positive", "model.w_l")
    if v["model.delta"] is not None and not v["model.delta"] > 0:
        fail("model.delta must be positive", "model.delta")
    if not v["solver.tol"] > 0:
        fail("solver.tol must be positive", "solver.tol")
    if v["solver.max_iters"] < 1:
        fail("solver.max_iters must be positive", "solver.max_iters")
    c = v["solver.continuation"]
    if any(x <= 0 for x in c) or any(b >= a for a, b in zip(c, c[1:])):
        fail("solver.continuation must be positive and strictly decreasing", "solver.continuation")
    if not v["epsilon.list"] or any(e <= 0 for e in v["epsilon.list"]):
        fail("epsilon.list must hold positive values", "epsilon.list")
    if any(d <= 0 for d in v["stability.deltas"]):
        fail("stability.deltas must be positive", "stability.deltas")
    for k in ("grid.nx", "grid.nz"):
        if v[k] < 1:
            fail(f"{k} must be positive", k)
    if v["grid.ny"] is not None and v["grid.ny"] < 1:
        fail("grid.ny must be positive", "grid.ny")
    if v["domain.shape"] == "disc":
        if v["grid.nx"] < 2:
            fail("disc grid needs grid.nx >= 2", "grid.nx")
        if v["grid.ny"] not in (None, v["grid.nx"]):
            fail("disc grid requires grid.ny == grid.nx", "grid.ny")
    chk = check_coercivity(v["elastic.M2"], v["elastic.M3"])
    if not chk.ok:
        warnings.warn(
            f"elastic constants M2={v['elastic.M2']}, M3={v['elastic.M3']} are not coercive "
            f"(margin {chk.margin:.3g}); 3D minimisation will be refused",
            NonCoerciveWarning,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# CSV fields

Q_COLS = ["q11", "q12", "q13", "q22", "q23"]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_rows(fh, header, cols):
    fh.write(",".join(header) + "\n")
    data = np.column_stack(cols)
    for row in data:
        fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_field(path, fld) -> None:
    """Write a PField, QField2D or QField3D."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if isinstance(fld, PField):
            m = fld.mesh
            _write_rows(fh, ["x", "y", "p1", "p2", "b"], [m.nodes, fld.p, fld.b_values])
        elif isinstance(fld, QField2D):
            _write_rows(fh, ["x", "y"] + Q_COLS, [fld.mesh.nodes, fld.q])
        elif isinstance(fld, QField3D):
            _write_rows(fh, ["x", "y", "z"] + Q_COLS, [fld.mesh.nodes, fld.q])
        else:
            raise TypeError(f"cannot write {type(fld).__name__}")


def write_table(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in r) + "\n")


class FieldFormatError(ValueError):
    pass


def _infer_mesh2d(xy: np.ndarray) -> Mesh2D:
    """Rebuild the square or disc mesh whose nodes are exactly ``xy``."""
    n = xy.shape[0]
    candidates = []
    if n and xy[0, 0] == 0.0 and xy[0, 1] == 0.0:
        row = int(np.argmax(xy[:, 1] != 0.0)) if np.any(xy[:, 1] != 0.0) else n
        if row >= 2 and n % row == 0 and n // row >= 2:
            candidates.append(lambda: square_mesh(row - 1, n // row - 1))
    k = math.isqrt(n)
    if k * k == n and k >= 3:
        candidates.append(lambda: disc_mesh(k - 1))
    for make in candidates:
        m = make()
        if np.array_equal(m.nodes, xy):
            return m
    raise FieldFormatError("non-rectangular node set")


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FieldFormatError("empty field file") from None
    rows = [r for r in reader if r]
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise FieldFormatError(f"malformed number: {exc}") from None
    if data.size and data.shape[1] != len(header):
        raise FieldFormatError("column count does not match the header")
    return header, data.reshape(-1, len(header))


def read_field(path, beta: float | None = None):
    """Read a field written by :func:`write_field`.

    A ``p`` file without a ``b`` column needs ``beta``; a ``b`` column that is
    constant becomes the field's β.
    """
    header, data = _read_csv(path)
    if header in (["x", "y", "p1", "p2"], ["x", "y", "p1", "p2", "b"]):
        m = _infer_mesh2d(data[:, :2])
        if len(header) == 4:
            if beta is None:
                raise FieldFormatError("p file without b column needs beta")
            return PField(m, data[:, 2:4], float(beta))
        b = data[:, 4]
        if np.all(b == b[0]):
            return PField(m, data[:, 2:4], float(b[0]))
        return PField(m, data[:, 2:4], float(b[np.flatnonzero(m.boundary)[0]]) if beta is None else float(beta), b)
    if header == ["x", "y"] + Q_COLS:
        return QField2D(_infer_mesh2d(data[:, :2]), data[:, 2:])
    if header == ["x", "y", "z"] + Q_COLS:
        z = np.unique(data[:, 2])
        nz = z.size - 1
        if nz < 1 or data.shape[0] % (nz + 1) or not np.array_equal(z, np.linspace(0, 1, nz + 1)):
            raise FieldFormatError("non-rectangular node set")
        n2 = data.shape[0] // (nz + 1)
        base = _infer_mesh2d(data[:n2, :2])
        m3: Mesh3D = extrude(base, nz)
        if not np.array_equal(m3.nodes, data[:, :3]):
            raise FieldFormatError("non-rectangular node set")
        return QField3D(m3, data[:, 3:])
    raise FieldFormatError(f"unrecognised columns {header}")


def is_finite_number(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def config_fields_covered() -> dict[str, list[str]]:
    """Parameter fields of the model dataclasses lacking a config key."""
    missing = {}
    for cls in (ModelParams, ElasticConstants, AnchoringParams):
        names = [f.name for f in fields(cls) if f.name not in DERIVED_FIELDS and f.name not in SYMBOL_KEYS]
        if names:
            missing[cls.__name__] = names
    return missing
