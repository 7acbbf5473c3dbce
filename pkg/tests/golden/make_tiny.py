"""Regenerate the golden LP/MPS files: python tests/golden/make_tiny.py"""

from pathlib import Path

from fuelplan.landscape import VegClass, build_landscape
from fuelplan.mip import build_phase1, build_phase2, write_lp, write_mps

HERE = Path(__file__).parent


def tiny():
    vegs = [VegClass("1", "EVC 1", 3, 10, 5), VegClass("6", "EVC 6", 7, 20, 10)]
    rows = [
        {"id": "u-1", "patches": [{"id": "u-1.a", "veg": "1", "area": 2, "age": 6},
                                  {"id": "u-1.b", "veg": "6", "area": 1.5, "age": 19}]},
        {"id": "u2", "patches": [{"id": "u2.a", "veg": "1", "area": 3, "age": 4}]},
        {"id": "w", "treatable": False, "patches": [{"id": "w.a", "veg": "6", "area": 4, "age": 9}]},
    ]
    return build_landscape(vegs, rows, [("u-1", "u2", 1), ("u2", "w", 2.5)], T=2, rho=0.6, name="tiny")


def models():
    ls = tiny()
    return {
        "tiny_phase2": build_phase2(ls),
        "tiny_phase2_reduced": build_phase2(ls, reduce=True),
        "tiny_phase1": build_phase1(ls, 1),
    }


if __name__ == "__main__":
    for name, m in models().items():
        (HERE / f"{name}.lp").write_text(write_lp(m))
        (HERE / f"{name}.mps").write_text(write_mps(m))
