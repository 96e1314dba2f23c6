"""Deterministic spatial-reasoning agent engine.

A query is first formalized into a task constraint (a reference frame plus an
objective), then solved by a budgeted tool loop over a geometric toolbox. The
toolbox runs against a synthetic ground-truth scene by default, or against a
remote tool service over a small wire protocol.
"""

__version__ = "0.1.0"
