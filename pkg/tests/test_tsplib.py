import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from difftsp.core import Instance, generate_random_instance, optimality_gap, tour_length
from difftsp.exceptions import TsplibParseError, UnsupportedFormatError
from difftsp.local_search import random_tour, two_opt
from difftsp.tsplib import (
    bundled_instances,
    load_tsplib,
    normalize_coords,
    parse_tsplib,
    read_tsplib,
    reference_table,
    tsplib_distance_matrix,
    tsplib_optima,
    write_tsplib,
)

GOOD = """NAME : tiny
COMMENT : five points
TYPE : TSP
DIMENSION : 5
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 0 0
3 10 10
2 10 0
4 0 10
5 5 20
EOF
"""


def test_parse_basic_and_sorted_by_id():
    problem = read_tsplib(GOOD)
    assert problem.header.name == "tiny" and problem.header.dimension == 5
    assert problem.raw_coords[:3].tolist() == [[0, 0], [10, 0], [10, 10]]
    inst = problem.to_instance()
    assert inst.coords.min() == 0 and inst.coords.max() == 1


def test_colon_variants_and_missing_eof():
    text = GOOD.replace("NAME : tiny", "NAME: tiny").replace("EOF\n", "")
    assert parse_tsplib(text).n == 5
    assert parse_tsplib(text.encode()).n == 5
    assert parse_tsplib(io.BytesIO(text.encode())).n == 5


@pytest.mark.parametrize("bad,line", [
    (GOOD.replace("3 10 10", "3 10 ten"), 8),
    (GOOD.replace("3 10 10", "3 10"), 8),
    (GOOD.replace("DIMENSION : 5", "DIMENSION : five"), 6),
    (GOOD.replace("DIMENSION : 5", "DIMENSION : 6"), 12),
])
def test_malformed_files_report_line(bad, line):
    with pytest.raises(TsplibParseError) as err:
        read_tsplib(bad)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_missing_header_fields():
    with pytest.raises(TsplibParseError):
        read_tsplib(GOOD.replace("NAME : tiny\n", ""))
    with pytest.raises(TsplibParseError):
        read_tsplib("NAME : x\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\n")


def test_explicit_weights_rejected():
    with pytest.raises(UnsupportedFormatError) as err:
        load_tsplib(bundled_instances()["gr17"])
    assert "EXPLICIT" in str(err.value)
    with pytest.raises(UnsupportedFormatError):
        read_tsplib(GOOD.replace("EUC_2D", "MAN_2D"))


def test_bundled_files_parse():
    sizes = {"att532": 532, "gr666": 666, "pcb442": 442, "pr107": 107}
    paths = bundled_instances()
    for name, n in sizes.items():
        assert load_tsplib(paths[name]).n == n


def test_round_trip_through_writer():
    inst = generate_random_instance(13, 2)
    buf = io.StringIO()
    write_tsplib(inst, buf)
    back = parse_tsplib(buf.getvalue())
    assert np.array_equal(back.coords, normalize_coords(inst.coords))


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 15), st.integers(0, 999), st.floats(0.01, 1e4), st.floats(-1e3, 1e3))
def test_normalisation_preserves_gaps(n, seed, scale, offset):
    raw = generate_random_instance(n, seed).coords * scale + offset
    inst = Instance(raw)
    norm = Instance(normalize_coords(raw))
    rng = np.random.default_rng(seed)
    a, b = random_tour(n, rng), two_opt(inst, random_tour(n, rng))
    gap_raw = optimality_gap(tour_length(inst, a), tour_length(inst, b)).gap
    gap_norm = optimality_gap(tour_length(norm, a), tour_length(norm, b)).gap
    assert gap_norm == pytest.approx(gap_raw, rel=1e-9, abs=1e-12)


def test_euc2d_metric_rounds_to_nearest():
    d = tsplib_distance_matrix(read_tsplib(GOOD))
    assert d[0, 1] == 10 and d[0, 2] == 14 and d[0, 4] == 21


def test_integer_metrics_are_symmetric():
    paths = bundled_instances()
    for name in ("att532", "gr666", "pcb442"):
        with open(paths[name], "rb") as fh:
            d = tsplib_distance_matrix(read_tsplib(fh))
        assert np.array_equal(d, d.T)
        assert np.all(d == np.round(d))
        assert np.all(d[~np.eye(len(d), dtype=bool)] >= 0)


def test_geo_metric_matches_hand_computation():
    text = ("NAME : g\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : GEO\nNODE_COORD_SECTION\n"
            "1 38.24 20.42\n2 39.57 26.15\n3 40.56 25.32\n")
    d = tsplib_distance_matrix(read_tsplib(text))
    # degrees truncated, minutes scaled by 5/3, then the reference great-circle rule
    import math

    def rad(v):
        deg = int(v)
        return 3.141592 * (deg + 5.0 * (v - deg) / 3.0) / 180.0

    lat1, lon1, lat2, lon2 = rad(38.24), rad(20.42), rad(39.57), rad(26.15)
    q1, q2, q3 = math.cos(lon1 - lon2), math.cos(lat1 - lat2), math.cos(lat1 + lat2)
    expected = int(6378.388 * math.acos(0.5 * ((1 + q1) * q2 - (1 - q1) * q3)) + 1.0)
    assert d[0, 1] == expected


def test_reference_tables():
    table = reference_table()
    assert len(table) == 75
    assert table["kroA100"].n == 100
    assert set(tsplib_optima()) == {"att532", "gr666", "pcb442", "pr107"}


def test_reference_gap_arithmetic():
    kro = reference_table()["kroA100"]
    assert round(optimality_gap(kro.reported_length, kro.ref_length).gap_pct, 3) == 0.167
    fl = reference_table()["fl1577"]
    assert optimality_gap(fl.reported_length, fl.ref_length).gap_pct == pytest.approx(-1.17012, abs=5e-5)
