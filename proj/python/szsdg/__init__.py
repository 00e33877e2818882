"""Path-dependent stochastic zero-sum game toolkit.

Thin wrappers around the C++ core: the instance catalog, the run-config
entry point (same semantics as the ``szsdg run`` CLI), and direct access to
the scenario-tree game values.
"""
from __future__ import annotations

import json
from typing import Any

from . import _core

__all__ = ["catalog", "run", "tree_value_bounds", "set_max_threads"]


def catalog() -> list[dict[str, Any]]:
    """Built-in game instances with their parameter defaults."""
    return json.loads(_core.catalog_json())


def run(config: dict[str, Any], output_root: str = "") -> dict[str, Any]:
    """Execute one run config and return its outcome.

    Returns a dict with ``exit_code`` (0 ok, 2 config error, 3 budget
    exceeded, 4 numerical failure), ``run_dir``, ``report``, ``message``.
    """
    code, run_dir, report_text, message = _core.run(
        json.dumps(config), output_root)
    report = json.loads(report_text) if report_text else None
    return {
        "exit_code": code,
        "run_dir": run_dir,
        "report": report if isinstance(report, dict) else {},
        "message": message,
    }


def tree_value_bounds(
    instance: str,
    params: dict[str, Any] | None = None,
    n_steps: int = 2,
    grid_points: int = 3,
) -> tuple[float, float]:
    """Lower/upper stagewise-minimax values on a scenario tree."""
    return _core.tree_value_bounds(
        instance, json.dumps(params or {}), int(n_steps), int(grid_points))


def set_max_threads(n: int) -> None:
    """Cap the worker thread count (``n <= 1`` forces serial execution)."""
    _core.set_max_threads(int(n))
