"""Published fit parameters and p* values, shipped as reference fixtures.

Keys are ``(ensemble, mode, quantity)`` with quantity ``accuracy`` (1-r) or
``infidelity`` (1-F); values map n to ``(p0, c)``. The functional form for
each key is :data:`abqaoa.metrics.FIT_FORMS`.
"""

from __future__ import annotations

from .metrics import FIT_FORMS, FitResult

SIZES = (8, 10, 12, 14, 16, 18)


def _table(p0s, cs):
    return {n: (p0, c) for n, p0, c in zip(SIZES, p0s, cs)}


FIT_PARAMETERS = {
    ("w3r", "standard", "accuracy"): _table(
        (0.42800977, 0.62230354, 0.73323484, 0.80231316, 0.90685782, 0.9443149),
        (0.10739954, -0.12764388, -0.23251733, -0.26348911, -0.39672828, -0.35855954),
    ),
    ("w3r", "adaptive", "accuracy"): _table(
        (0.17327266, 0.17580396, 0.17704141, 0.17957186, 0.18424291, 0.23922264),
        (-0.24508518, -0.27957327, -0.26115427, -0.27881266, -0.24826492, -0.67913148),
    ),
    ("w3r", "standard", "infidelity"): _table(
        (8.43984294, 10.17259833, 12.81448118, 18.54647523, 29.51964065, 35.31026806),
        (0.0340003, 0.08045262, 0.08814327, 0.06948011, 0.04850331, 0.04527017),
    ),
    ("w3r", "adaptive", "infidelity"): _table(
        (0.50210827, 0.61290557, 0.75486606, 1.00539136, 1.57615813, 2.53419367),
        (1.01553842, 0.79839955, 0.6930013, 0.58993449, 0.51400306, 0.37161959),
    ),
    ("u3r", "standard", "accuracy"): _table(
        (1.30228564, 2.07538215, 2.46757535, 2.7788049, 3.03328213, 3.15617106),
        (-0.55076766, -1.01623816, -1.16513946, -1.24119178, -1.26713441, -1.26322867),
    ),
    ("u3r", "adaptive", "accuracy"): _table(
        (0.0481013, 0.04482199, 0.05410145, 0.05651275, 0.04743622, 0.0476715),
        (2.41506594, 2.5535474, 1.93841831, 1.89568572, 2.39503391, 2.39867199),
    ),
    ("u3r", "standard", "infidelity"): _table(
        (1.2630754, 2.47189574, 3.33176173, 4.93148061, 5.8239181, 6.96389395),
        (1.18876273, 0.55371133, 0.42748629, 0.28974544, 0.27341578, 0.24360132),
    ),
    ("u3r", "adaptive", "infidelity"): _table(
        (0.04960161, 0.04422032, 0.0519072, 0.05735311, 0.04898178, 0.0498607),
        (4.14004776, 4.58598679, 4.17168606, 4.08843585, 4.6724513, 4.70423705),
    ),
}

# p* at r* = 0.99: fitted for standard QAOA, read off the data for the adaptive variant
P_STAR = {
    "w3r": {"standard": dict(zip(SIZES, (10, 12, 14, 15, 16, 17))), "adaptive": dict.fromkeys(SIZES, 3)},
    "u3r": {"standard": dict(zip(SIZES, (5, 7, 8, 9, 10, 11))), "adaptive": dict.fromkeys(SIZES, 3)},
}


def reference_fit(ensemble: str, mode: str, quantity: str, n: int) -> FitResult:
    key = (ensemble, mode, quantity)
    p0, c = FIT_PARAMETERS[key][n]
    return FitResult(FIT_FORMS[key], p0, c, float("nan"))
