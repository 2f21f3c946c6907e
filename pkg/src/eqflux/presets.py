"""Built-in study configurations reproducing the reference experiments.

test1      square with one internal negative 16-gon, f(x,y) = x, zero
           Dirichlet outer boundary (estimator columns only).
test2-neg  top notch, f = 1, Dirichlet on x = 0 and x = 1, with reference.
test2-pos  bottom bump, same problem data, with reference.
test2-both both boundary features at once, with reference.
test3      five internal negative 16-gons, Laplace with g_D = exp(-8(x+y))
           on x = 0 and y = 0 (estimator columns only).

Feature sizes that have to be meshed (test2 references and bumps) are
snapped to the mesh lattice; 16-gon features are estimator-only curves and
need no conforming mesh.
"""

from __future__ import annotations

PRESET_NAMES = ("test1", "test2-neg", "test2-pos", "test2-both", "test3")

TEST3_FEATURES = (
    ((0.12, 0.12), 0.02),
    ((0.35, 0.35), 0.05),
    ((0.65, 0.65), 0.10),
    ((0.20, 0.68), 0.05),
    ((0.65, 0.16), 0.05),
)


def snap_eps_to_grid(eps: float, n: int) -> float:
    """Closest feature size k/n with the rectangle corners on the lattice.

    The test2 rectangles span ((1-eps)/2, (1+eps)/2) in x, so besides
    eps*n being an integer, n - eps*n must be even.
    """
    k0 = eps * n
    best = None
    for k in range(max(1, int(k0) - 2), int(k0) + 4):
        if (n - k) % 2 != 0 or k >= n:
            continue
        if best is None or abs(k - k0) < abs(best - k0):
            best = k
    if best is None:
        raise ValueError(f"no grid-compatible feature size near {eps} for n={n}")
    return best / n


def _ngon_feature(fid, center, include=False):
    return {
        "id": fid,
        "kind": "negative_internal",
        "shape": {"type": "ngon", "center": list(center), "radius": "eps", "sides": 16},
        "g": 0.0,
        "include": include,
    }


def preset_config(name: str, n: int | None = None, eps: float | None = None) -> dict:
    """Return the JSON-style config of a named preset."""
    if name == "test1":
        return {
            "run_id": "test1",
            "mesh": {"builtin": n or 32},
            "dirichlet": "all",
            "f": "x",
            "g_dirichlet": 0.0,
            "eps": eps if eps is not None else 7.00e-2,
            "features": [_ngon_feature(1, (0.5, 0.5))],
            "study": {"type": "none"},
            "reference": None,
        }
    if name in ("test2-neg", "test2-pos", "test2-both"):
        nn = n or 40
        ee = snap_eps_to_grid(eps if eps is not None else 0.2, nn)
        features = []
        if name in ("test2-neg", "test2-both"):
            features.append(
                {
                    "id": 1,
                    "kind": "negative_boundary",
                    "shape": {
                        "type": "rect",
                        "x0": "(1-eps)/2",
                        "x1": "(1+eps)/2",
                        "y0": "1-eps",
                        "y1": "1",
                    },
                    "g": 0.0,
                    "include": False,
                }
            )
        if name in ("test2-pos", "test2-both"):
            features.append(
                {
                    "id": 2 if name == "test2-both" else 1,
                    "kind": "positive",
                    "shape": {
                        "type": "rect",
                        "x0": "(1-eps)/2",
                        "x1": "(1+eps)/2",
                        "y0": "-eps",
                        "y1": "0",
                    },
                    "g": 0.0,
                    "include": False,
                }
            )
        return {
            "run_id": name,
            "mesh": {"builtin": nn},
            "dirichlet": "x == 0 or x == 1",
            "f": 1.0,
            "g_dirichlet": 0.0,
            "g_neumann": 0.0,
            "eps": ee,
            "features": features,
            "study": {"type": "none"},
            "reference": {"levels": 2},
        }
    if name == "test3":
        features = []
        for k, (center, radius) in enumerate(TEST3_FEATURES):
            f = _ngon_feature(k + 1, center)
            f["shape"]["radius"] = radius  # each feature keeps its own size
            features.append(f)
        return {
            "run_id": "test3",
            "mesh": {"builtin": n or 32},
            "dirichlet": "x == 0 or y == 0",
            "f": 0.0,
            "g_dirichlet": "exp(-8*(x+y))",
            "g_neumann": 0.0,
            "features": features,
            "study": {"type": "none"},
            "reference": None,
        }
    raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
