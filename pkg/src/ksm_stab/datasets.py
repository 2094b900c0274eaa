"""Built-in named KSM instances pinned to the worked examples.

* ``Z1``           -- P(O(1) + O) over P^1: n = 1, mu = (1/2), P = [-1, 1].
* ``Z2``           -- P(O(2) + O) over P^2: n = 2, mu = (2/3, 2/3), P = [-1, 1].
* ``product``      -- P^1 x P^1 as a trivial bundle: n = 1, mu = (0).
* ``p1-fiber``     -- the bare fiber P^1: n = 0, P = [-1, 1].
* ``P2-fiber``     -- the bare fiber P^2: n = 0, P = conv{(1,0),(0,1),(-1,-1)}.
* ``square-fiber`` -- the bare fiber P^1 x P^1: n = 0, P = conv{+-e1, +-e2}.
"""

from __future__ import annotations

from .ksm import KSMData, make_ksm

__all__ = ["DATASETS", "load_dataset", "dataset_names"]

INTERVAL = [(-1,), (1,)]
P2 = [(1, 0), (0, 1), (-1, -1)]
SQUARE = [(1, 0), (0, 1), (-1, 0), (0, -1)]

_BUILDERS = {
    "Z1": lambda: make_ksm(1, 1, [["1/2"]], INTERVAL, "Z1"),
    "Z2": lambda: make_ksm(2, 1, [["2/3"], ["2/3"]], INTERVAL, "Z2"),
    "product": lambda: make_ksm(1, 1, [["0"]], INTERVAL, "product"),
    "p1-fiber": lambda: make_ksm(0, 1, [], INTERVAL, "p1-fiber"),
    "P2-fiber": lambda: make_ksm(0, 2, [], P2, "P2-fiber"),
    "square-fiber": lambda: make_ksm(0, 2, [], SQUARE, "square-fiber"),
}

DATASETS = tuple(sorted(_BUILDERS))


def dataset_names() -> tuple[str, ...]:
    return DATASETS


def load_dataset(name: str) -> KSMData:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(
            f"unknown dataset {name!r}; available: {', '.join(DATASETS)}"
        ) from None
