"""Published CTHP calibrations of stock ACC vehicles (OpenACC campaigns).

Each entry: (label, (alpha, beta, tau), l2_strict, linf_strict).
"""
from __future__ import annotations

from .model import CthpParams

ISPRA_CASALE = [
    ("ispra-casale#1", (0.0104, 0.0718, 1.52), False, False),
    ("ispra-casale#2", (0.0104, 0.0712, 1.52), False, False),
    ("ispra-casale#3", (0.0104, 0.0723, 1.52), False, False),
    ("ispra-casale#4", (0.0102, 0.0709, 1.52), False, False),
    ("ispra-casale#5", (0.0103, 0.0724, 1.52), False, False),
]

HOMOGENEOUS = [
    ("astazero", (0.0627, 0.2630, 1.17), False, False),
    ("ispra-vicolungo", (0.0581, 0.3010, 1.04), False, False),
]

ASTAZERO = [
    ("astazero-1", (0.0612, 0.1200, 1.19), False, False),
    ("astazero-2", (0.1000, 0.1470, 1.17), False, False),
    ("astazero-3", (0.0766, 0.2220, 1.16), False, False),
    ("astazero-4", (0.0409, 0.4450, 1.16), False, True),
]

ISPRA_VICOLUNGO = [
    ("ispra-vicolungo-1", (0.0766, 0.1660, 1.01), False, False),
    ("ispra-vicolungo-2", (0.1760, 0.3921, 1.00), False, False),
    ("ispra-vicolungo-3", (0.0705, 0.1930, 1.13), False, False),
]

PLATOON_AVERAGES = [
    ("astazero-average", (0.070, 0.234, 1.17), False, False),
    ("ispra-vicolungo-average", (0.1077, 0.2504, 1.05), False, False),
]

# per-vehicle fit quality and mean time-gaps: label -> (mae_p, mae_v, mean_time_gap)
ASTAZERO_FIT = {
    "astazero-1": (0.2452, 0.1492, 1.25),
    "astazero-2": (0.3867, 0.2044, 1.23),
    "astazero-3": (0.5305, 0.2585, 1.20),
    "astazero-4": (0.4494, 0.3068, 1.30),
}
ISPRA_VICOLUNGO_FIT = {
    "ispra-vicolungo-1": (0.2208, 0.1272, 1.03),
    "ispra-vicolungo-2": (0.1933, 0.1406, 1.01),
    "ispra-vicolungo-3": (0.2481, 0.1439, 1.18),
}

# per-signal reconstruction MAEs, keyed like the signal names of a fit (v0, p1, v1, ...)
ISPRA_CASALE_MAE = {
    "ispra-casale#1": {"p1": 0.4721, "v0": 0.1464, "v1": 0.1419},
    "ispra-casale#2": {"p1": 0.2653, "v0": 0.1529, "v1": 0.0871},
    "ispra-casale#3": {"p1": 0.4667, "v0": 0.1925, "v1": 0.1507},
    "ispra-casale#4": {"p1": 0.4519, "v0": 0.1863, "v1": 0.2183},
    "ispra-casale#5": {"p1": 0.3590, "v0": 0.1547, "v1": 0.1361},
}
HOMOGENEOUS_MAE = {
    "astazero": {"v0": 0.1270, "p1": 0.3295, "v1": 0.1436, "p2": 0.4731, "v2": 0.2308,
                 "p3": 0.5381, "v3": 0.2454, "p4": 0.4672, "v4": 0.3203},
    "ispra-vicolungo": {"v0": 0.1776, "p1": 0.4061, "v1": 0.2087, "p2": 0.3271, "v2": 0.2111,
                        "p3": 0.4710, "v3": 0.2563},
}
LEADER_MAE = {"astazero": 0.1197, "ispra-vicolungo": 0.1014}  # per-vehicle fits

SETS = {
    "ispra-casale": ISPRA_CASALE,
    "homogeneous": HOMOGENEOUS,
    "astazero": ASTAZERO,
    "ispra-vicolungo": ISPRA_VICOLUNGO,
    "averages": PLATOON_AVERAGES,
}


def all_rows():
    for rows in SETS.values():
        yield from rows


def params_of(rows) -> list[tuple[str, CthpParams]]:
    return [(label, CthpParams.from_sequence(p)) for label, p, *_ in rows]
