"""Ready-made manifests for the worked examples shipped with the tool.

Each entry is a plain JSON-serializable dict in the manifest format read by
the command-line front end.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

__all__ = ["FIXTURES", "emit_fixtures", "fixture"]

DEFAULT_TOLERANCES = {
    "zero_tol": 1e-9,
    "ode_tol": 1e-6,
    "grid": 200,
    "trials": 32,
    "seed": 0,
    "steps": 1000,
    "degree_cap": 5,
    "panels": 64,
}

_SYMPLECTIC_R4 = [
    {"i": "x", "j": "y", "expr": "1"},
    {"i": "z", "j": "w", "expr": "1"},
]

_LEAF_R4 = [
    {"i": "x", "j": "y", "expr": "x"},
    {"i": "z", "j": "w", "expr": "1"},
]

_LINEAR_R2 = [{"i": "a", "j": "b", "expr": "a"}]

_CIRCLE_ZW = ["cos(2*pi*t)", "sin(2*pi*t)"]
_CIRCLE_ZW_COVECTOR = ["2*pi*cos(2*pi*t)", "2*pi*sin(2*pi*t)"]

FIXTURES: dict[str, dict] = {
    # symplectic R^4 with a Poisson map onto (R^2, a da^db); the path is a
    # cotangent path of the pullback algebroid for the covector db
    "ex-basic-R4": {
        "coordinates": ["x", "y", "z", "w"],
        "poisson": _SYMPLECTIC_R4,
        "volume": "1",
        "map": {
            "target_coordinates": ["a", "b"],
            "components": ["y", "z*w - x*y"],
            "target_poisson": _LINEAR_R2,
            "target_volume": "1",
        },
        "path": {
            "base": ["exp(t)", "exp(-t)", "exp(-t)", "exp(t)"],
            "covector": ["0", "1"],
            "loop": False,
        },
    },
    # the linear structure a da^db on its own, with an open cotangent path
    "ex-basic-R2": {
        "coordinates": ["a", "b"],
        "poisson": _LINEAR_R2,
        "volume": "1",
        "path": {
            "base": ["exp(-t)", "1 - exp(-t)"],
            "covector": ["1", "1"],
            "loop": False,
            "hamiltonian": "a^2*b + b^3",
        },
    },
    # dual of the two-dimensional nonabelian algebra, projected to y
    "ex-2dim": {
        "coordinates": ["x", "y"],
        "poisson": [{"i": "x", "j": "y", "expr": "x"}],
        "volume": "1",
        "map": {
            "target_coordinates": ["u"],
            "components": ["y"],
            "target_poisson": [],
            "target_volume": "1",
        },
    },
    # two-dimensional leaf {x = y = 0} with a loop around the (z, w) circle
    "ex-leafR4": {
        "coordinates": ["x", "y", "z", "w"],
        "poisson": _LEAF_R4,
        "volume": "1",
        "submanifold": {"transverse": ["x", "y"], "submanifold_volume": "1"},
        "path": {
            "base": ["0", "0"] + _CIRCLE_ZW,
            "covector": ["1 + t", "2 - t^2"] + _CIRCLE_ZW_COVECTOR,
            "loop": True,
        },
    },
    # R acting by z-translations, quotient (R^2, a da^db)
    "ex-R3-action": {
        "coordinates": ["x", "y", "z"],
        "poisson": [
            {"i": "x", "j": "y", "expr": "x"},
            {"i": "y", "j": "z", "expr": "1"},
        ],
        "volume": "exp(z)",
        "action": {
            "structure_constants": [],
            "generators": [["0", "0", "1"]],
            "pairing": "1",
            "quotient": {
                "target_coordinates": ["a", "b"],
                "components": ["x", "y"],
                "target_poisson": _LINEAR_R2,
                "target_volume": "1",
            },
        },
    },
    "ex-sphere-R3": {
        "coordinates": ["x", "y", "z"],
        "guard": "x^2 + y^2 + z^2",
        "poisson": [{"i": "x", "j": "y", "expr": "(x^2 + y^2 + z^2)^(1/2)"}],
        "volume": "1",
    },
    "ex-sphere-R3-shifted": {
        "coordinates": ["x", "y", "z"],
        "guard": "x^2 + y^2 + z^2",
        "poisson": [{"i": "x", "j": "y", "expr": "(x^2 + y^2 + z^2)^(1/2) - 1"}],
        "volume": "1",
    },
    # diagonal circle action on symplectic R^4 with the Hopf quotient map
    "ex-ham-S1-R4": {
        "coordinates": ["x", "y", "z", "w"],
        "guard": "x^2 + y^2 + z^2 + w^2",
        "poisson": _SYMPLECTIC_R4,
        "volume": "1",
        "action": {
            "structure_constants": [],
            "generators": [["-y", "x", "-w", "z"]],
            "pairing": "1",
            "quotient": {
                "target_coordinates": ["u1", "u2", "u3"],
                "components": ["x^2 + y^2 - z^2 - w^2", "2*(x*z + y*w)", "2*(y*z - x*w)"],
                "target_poisson": [
                    {"i": "u1", "j": "u2", "expr": "-4*u3"},
                    {"i": "u2", "j": "u3", "expr": "-4*u1"},
                    {"i": "u3", "j": "u1", "expr": "-4*u2"},
                ],
                "target_volume": "1",
            },
        },
        "moment": {"components": ["(x^2 + y^2 + z^2 + w^2)/2"]},
        "ham": {
            "tau": [
                {"indices": ["u2", "u3"], "expr": "u1"},
                {"indices": ["u1", "u3"], "expr": "-u2"},
                {"indices": ["u1", "u2"], "expr": "u3"},
            ],
            "level": [0.5],
        },
    },
    # fixed points {x = 0} of the involution x -> -x
    "ex-conormal-involution": {
        "coordinates": ["x", "y", "z", "w"],
        "poisson": _LEAF_R4,
        "volume": "1",
        "submanifold": {"transverse": ["x"], "submanifold_volume": "1"},
        "path": {
            "base": ["0", "1"] + _CIRCLE_ZW,
            "covector": ["1 + t", "2 - t^2"] + _CIRCLE_ZW_COVECTOR,
            "loop": True,
        },
    },
    # the line {a = 0} in (R^2, a da^db) with a constant base point
    "ex-rel-line": {
        "coordinates": ["a", "b"],
        "poisson": _LINEAR_R2,
        "volume": "1",
        "submanifold": {"transverse": ["a"], "submanifold_volume": "1"},
        "path": {"base": ["0", "0"], "covector": ["0", "1"], "loop": True},
    },
}

for _m in FIXTURES.values():
    _m["tolerances"] = dict(DEFAULT_TOLERANCES)


def fixture(name: str) -> dict:
    """A deep copy of the named fixture manifest."""
    try:
        return copy.deepcopy(FIXTURES[name])
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None


def emit_fixtures(directory) -> list[Path]:
    """Write every fixture as ``<name>.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(FIXTURES):
        p = out / f"{name}.json"
        p.write_text(json.dumps(FIXTURES[name], indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(p)
    return written
