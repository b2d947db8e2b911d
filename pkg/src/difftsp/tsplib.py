"""Reading TSPLIB ``.tsp`` files with a NODE_COORD_SECTION.

Coordinates are normalised into the unit square: the minimum is moved to
the origin and both axes are divided by the larger of the two spans.
This keeps every distance ratio, so optimality gaps are unaffected.

Distances inside :class:`~difftsp.core.Instance` are always planar
Euclidean on the normalised points.  The integer TSPLIB conventions
(EUC_2D, CEIL_2D, ATT, GEO) are available separately through
:func:`tsplib_distance_matrix` on the raw coordinates.  GEO follows the
reference TSPLIB code: degrees are truncated, not rounded.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import Instance
from .exceptions import TsplibParseError, UnsupportedFormatError

SUPPORTED_TYPES = ("EUC_2D", "CEIL_2D", "ATT", "GEO")
_DATA_SECTIONS = {
    "NODE_COORD_SECTION", "DEPOT_SECTION", "DEMAND_SECTION", "EDGE_DATA_SECTION",
    "FIXED_EDGES_SECTION", "DISPLAY_DATA_SECTION", "TOUR_SECTION", "EDGE_WEIGHT_SECTION",
}


@dataclass(frozen=True)
class TsplibHeader:
    name: str
    dimension: int
    edge_weight_type: str
    comment: str | None = None


@dataclass(frozen=True, eq=False)
class TsplibProblem:
    header: TsplibHeader
    raw_coords: np.ndarray  # rows ordered by node id, original units

    def to_instance(self) -> Instance:
        return Instance(normalize_coords(self.raw_coords), id=self.header.name)


def normalize_coords(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    shifted = coords - coords.min(axis=0)
    span = float(shifted.max())
    return shifted / span if span > 0 else shifted


def _text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8", errors="replace")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data


def read_tsplib(source) -> TsplibProblem:
    """Parse TSPLIB text (str, bytes or a readable stream) without normalising."""
    fields = {}
    nodes = []
    section = None
    last_line = 0
    for lineno, raw in enumerate(_text(source).splitlines(), start=1):
        last_line = lineno
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        keyword = line.split(":", 1)[0].strip().split()[0].upper()
        if keyword in _DATA_SECTIONS and ":" not in line:
            section = keyword
            if section == "EDGE_WEIGHT_SECTION":
                raise UnsupportedFormatError(fields.get("EDGE_WEIGHT_TYPE", "EXPLICIT"))
            if section == "NODE_COORD_SECTION":
                _check_header(fields, lineno)
            continue
        if section is not None and not keyword[0].isalpha():
            if section == "NODE_COORD_SECTION":
                nodes.append(_coord_row(line, lineno))
            continue
        if ":" not in line:
            raise TsplibParseError(f"expected 'KEY: value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split(":", 1))
        fields[key.upper()] = value
        section = None
        if key.upper() == "EDGE_WEIGHT_TYPE":
            _check_type(value)

    header = _check_header(fields, last_line)
    if not nodes:
        raise TsplibParseError("missing NODE_COORD_SECTION", last_line)
    ids = [node_id for node_id, _, _ in nodes]
    if len(set(ids)) != len(ids):
        raise TsplibParseError("duplicate node ids in NODE_COORD_SECTION", last_line)
    if len(nodes) != header.dimension:
        raise TsplibParseError(
            f"DIMENSION is {header.dimension} but {len(nodes)} coordinate rows were read", last_line)
    nodes.sort(key=lambda row: row[0])
    coords = np.array([[x, y] for _, x, y in nodes], dtype=np.float64)
    return TsplibProblem(header, coords)


def _check_type(value: str) -> str:
    value = value.strip().upper()
    if value not in SUPPORTED_TYPES:
        raise UnsupportedFormatError(value)
    return value


def _check_header(fields: dict, lineno: int) -> TsplibHeader:
    for key in ("NAME", "DIMENSION", "EDGE_WEIGHT_TYPE"):
        if key not in fields:
            raise TsplibParseError(f"missing {key} before coordinates", lineno)
    try:
        dimension = int(fields["DIMENSION"])
    except ValueError:
        raise TsplibParseError(f"malformed DIMENSION {fields['DIMENSION']!r}", lineno) from None
    if dimension < 1:
        raise TsplibParseError(f"DIMENSION must be positive, got {dimension}", lineno)
    return TsplibHeader(fields["NAME"], dimension, _check_type(fields["EDGE_WEIGHT_TYPE"]),
                        fields.get("COMMENT"))


def _coord_row(line: str, lineno: int):
    tokens = line.split()
    if len(tokens) != 3:
        raise TsplibParseError(f"expected 'id x y', got {line!r}", lineno)
    try:
        return int(tokens[0]), float(tokens[1]), float(tokens[2])
    except ValueError:
        raise TsplibParseError(f"malformed numeric token in {line!r}", lineno) from None


def parse_tsplib(source) -> Instance:
    """Parse a TSPLIB file into a normalised :class:`Instance`."""
    return read_tsplib(source).to_instance()


def load_tsplib(path) -> Instance:
    with open(path, "rb") as fh:
        return parse_tsplib(fh)


def write_tsplib(instance: Instance, sink, comment: str | None = None) -> None:
    """Write ``instance`` as an EUC_2D file, coordinates at full precision."""
    lines = [f"NAME : {instance.id}"]
    if comment:
        lines.append(f"COMMENT : {comment}")
    lines += ["TYPE : TSP", f"DIMENSION : {instance.n}", "EDGE_WEIGHT_TYPE : EUC_2D", "NODE_COORD_SECTION"]
    lines += [f"{k + 1} {x!r} {y!r}" for k, (x, y) in enumerate(instance.coords.tolist())]
    lines.append("EOF")
    text = "\n".join(lines) + "\n"
    if isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


def _nint(x):
    return np.floor(x + 0.5)


def tsplib_distance_matrix(problem: TsplibProblem) -> np.ndarray:
    """Integer distance matrix under the file's own EDGE_WEIGHT_TYPE."""
    xy = problem.raw_coords
    kind = problem.header.edge_weight_type
    if kind == "GEO":
        pi = 3.141592
        deg = np.trunc(xy)
        rad = pi * (deg + 5.0 * (xy - deg) / 3.0) / 180.0
        lat, lon = rad[:, 0], rad[:, 1]
        q1 = np.cos(lon[:, None] - lon[None, :])
        q2 = np.cos(lat[:, None] - lat[None, :])
        q3 = np.cos(lat[:, None] + lat[None, :])
        arg = np.clip(0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3), -1.0, 1.0)
        d = np.trunc(6378.388 * np.arccos(arg) + 1.0)
    else:
        diff = xy[:, None, :] - xy[None, :, :]
        sq = (diff ** 2).sum(axis=-1)
        if kind == "EUC_2D":
            d = _nint(np.sqrt(sq))
        elif kind == "CEIL_2D":
            d = np.ceil(np.sqrt(sq))
        elif kind == "ATT":
            r = np.sqrt(sq / 10.0)
            t = _nint(r)
            d = np.where(t < r, t + 1.0, t)
        else:
            raise UnsupportedFormatError(kind)
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class ReferenceRow:
    name: str
    n: int
    ref_length: float
    reported_length: float
    reported_gap_pct: float


def reference_table() -> dict:
    """Per-instance reference lengths (normalised units) bundled with the package."""
    text = resources.files("difftsp.data").joinpath("tsplib_reference.csv").read_text()
    out = {}
    for rec in csv.DictReader(io.StringIO(text)):
        row = ReferenceRow(rec["name"], int(rec["n"]), float(rec["ref_length"]),
                           float(rec["reported_length"]), float(rec["reported_gap_pct"]))
        out[row.name] = row
    return out


def tsplib_optima() -> dict:
    """Published optimal tour lengths, in each file's integer TSPLIB metric."""
    text = resources.files("difftsp.data").joinpath("tsplib_optima.csv").read_text()
    return {rec["name"]: float(rec["optimum"]) for rec in csv.DictReader(io.StringIO(text))}


def tsplib_tour_length(problem: TsplibProblem, tour) -> float:
    order = np.asarray(getattr(tour, "order", tour))
    d = tsplib_distance_matrix(problem)
    return float(d[order, np.roll(order, -1)].sum())


def bundled_instances() -> dict:
    """Paths of the TSPLIB files shipped in ``difftsp/data/tsplib``."""
    root = resources.files("difftsp.data").joinpath("tsplib")
    return {p.name[:-4]: p for p in root.iterdir() if p.name.endswith(".tsp")}
