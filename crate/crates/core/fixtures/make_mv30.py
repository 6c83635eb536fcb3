"""Writes mv30.json: a 30-bus medium-voltage benchmark grid with aggregated
low-voltage feeders and flexibility units.

Line, transformer and cost data follow the benchmark tables. Feeder lengths
follow the usual benchmark feeder. The unit polygons and operating points
are illustrative fixture data.
"""

import json
from pathlib import Path

LINE = {"r_ohm_per_km": 0.501, "l_mh_per_km": 2.279, "c_uf_per_km": 0.151, "i_max_a": 680.0}

# MV feeder: bus pairs and lengths in km
FEEDER = [(2, 3, 2.82), (3, 4, 4.42), (4, 5, 0.61), (5, 6, 0.56), (6, 7, 1.54),
          (7, 8, 0.24), (8, 9, 1.67), (9, 10, 0.32), (10, 11, 0.77), (11, 12, 0.33)]

# LV bus -> MV bus it hangs off
LV_PARENT = {13: 3, 14: 3, 15: 4, 16: 4, 17: 5, 18: 5, 19: 6, 20: 6, 21: 7,
             22: 7, 23: 8, 24: 8, 25: 9, 26: 9, 27: 10, 28: 10, 29: 11, 30: 12}

LV_COST = {
    # bus: (pv c_p, load c_p, pv c_q, load c_q)
    13: (50, 80, 0.6, 0.7), 14: (30, 70, 0.7, 0.7), 15: (90, 50, 0.6, 1.0),
    16: (40, 20, 1.0, 0.9), 17: (50, 90, 0.5, 1.0), 18: (10, 80, 0.6, 0.7),
    19: (10, 50, 0.8, 0.1), 20: (10, 90, 0.3, 0.9), 21: (50, 60, 0.7, 0.4),
    22: (40, 70, 0.3, 0.5), 23: (30, 20, 0.7, 0.5), 24: (70, 80, 0.4, 0.4),
    25: (90, 90, 0.9, 0.2), 26: (90, 30, 0.3, 0.4), 27: (70, 70, 1.0, 0.6),
    28: (40, 40, 0.9, 0.5), 29: (50, 10, 0.4, 0.7), 30: (10, 20, 0.9, 0.2),
}

# MV units: (bus, kind, c_p, c_q)
MV_UNITS = [
    (2, "load", 90, 0.9), (2, "wind", 30, 0.1), (2, "compensation", 0, 0.3),
    (2, "dfig", 40, 0.5), (2, "storage", 60, 0.7),
    (4, "load", 60, 0.2), (4, "wind", 30, 1.0), (4, "compensation", 0, 1.0),
    (5, "wind", 40, 0.8), (5, "dfig", 10, 0.5), (5, "storage", 70, 0.6),
    (6, "wind", 20, 0.5),
    (7, "load", 80, 0.6), (7, "dfig", 40, 0.5),
    (8, "wind", 60, 0.2),
    (11, "load", 90, 0.7), (11, "dfig", 60, 0.4),
    (12, "dfig", 70, 0.2),
]

# injection convention: generation positive
SHAPES = {
    "pv": ([(0.0, -0.05), (0.4, -0.15), (0.4, 0.15), (0.0, 0.05)], (0.25, 0.0)),
    "lvload": ([(-0.35, -0.1), (-0.1, -0.1), (-0.1, 0.05), (-0.35, 0.05)], (-0.2, -0.03)),
    "load": ([(-2.0, -0.6), (-0.8, -0.6), (-0.8, 0.0), (-2.0, 0.0)], (-1.4, -0.3)),
    "wind": ([(0.0, -0.2), (1.5, -0.6), (1.5, 0.6), (0.0, 0.2)], (0.9, 0.0)),
    "compensation": ([(-0.02, -0.8), (0.0, -0.8), (0.0, 0.8), (-0.02, 0.8)], (-0.01, 0.0)),
    "dfig": ([(0.0, -0.4), (1.5, -0.4), (1.5, 0.5), (0.75, 0.5), (0.45, 0.15), (0.0, 0.15)], (0.9, 0.0)),
    "storage": ([(-0.5, -0.2), (-0.2, -0.5), (0.2, -0.5), (0.5, -0.2), (0.5, 0.2), (0.2, 0.5),
                 (-0.2, 0.5), (-0.5, 0.2)], (0.0, 0.0)),
}


def unit(uid, bus, shape, fkind, c_p, c_q):
    poly, (p, q) = SHAPES[shape]
    return {"id": uid, "bus": bus, "kind": fkind, "polygon": [list(v) for v in poly],
            "p_op": p, "q_op": q, "cost": {"c_s_p": c_p, "c_s_q": c_q}}


def main():
    buses = [{"id": 1, "nominal_kv": 110.0}]
    buses += [{"id": b, "nominal_kv": 20.0, "p_mw": -0.3, "q_mvar": -0.1} for b in range(2, 13)]
    buses += [{"id": b, "nominal_kv": 0.4, "p_mw": -0.1, "q_mvar": -0.03} for b in range(13, 31)]
    lines = [dict(LINE, **{"from": a, "to": b, "length_km": l}) for a, b, l in FEEDER]
    transformers = [{
        "hv_bus": 1, "lv_bus": 2, "v_hv_kv": 110.0, "v_lv_kv": 20.0, "s_rated_mva": 25.0,
        "v_sc_pct": 12.0, "p_cu_kw": 25.0, "i_oc_pct": 0.2, "p_fe_kw": 0.0,
        "tap": {"step_pct": 0.25, "tap_min": -10, "tap_max": 10, "tap0": 0},
    }]
    for lv, mv in LV_PARENT.items():
        transformers.append({
            "hv_bus": mv, "lv_bus": lv, "v_hv_kv": 20.0, "v_lv_kv": 0.4, "s_rated_mva": 2.0,
            "v_sc_pct": 8.0, "p_cu_kw": 16.7, "i_oc_pct": 0.2, "p_fe_kw": 4.0,
        })
    fpus = []
    for bus, (pv_p, ld_p, pv_q, ld_q) in LV_COST.items():
        fpus.append(unit(f"pv{bus}", bus, "pv", "pv", pv_p, pv_q))
        fpus.append(unit(f"load{bus}", bus, "lvload", "load", ld_p, ld_q))
    for bus, kind, c_p, c_q in MV_UNITS:
        fpus.append(unit(f"{kind}{bus}", bus, kind, kind, c_p, c_q))
    grid = {
        "name": "mv30",
        "description": "30-bus medium-voltage benchmark with aggregated low-voltage feeders; "
                       "unit polygons are illustrative",
        "base_mva": 25.0,
        "frequency": 50.0,
        "slack": {"bus": 1, "voltage_kv": 110.0, "angle_deg": 0.0},
        "buses": buses,
        "lines": lines,
        "transformers": transformers,
        "fpus": fpus,
    }
    out = Path(__file__).with_name("mv30.json")
    out.write_text(json.dumps(grid, indent=1) + "\n")


if __name__ == "__main__":
    main()
