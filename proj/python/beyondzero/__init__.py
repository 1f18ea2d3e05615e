"""Python surface for the Beyond Zero authorization engine.

Everything heavy lives in the compiled extension; this package only re-exports
it and adds a couple of conveniences for JSON round-trips.
"""

import json as _json

try:
    from ._bzcore import (  # noqa: F401
        Engine,
        EngineError,
        fmt_policy,
        gen_world,
        lint_policy,
        run_scenario,
    )
except ImportError:  # plain CMake builds leave the extension next to the package
    from _bzcore import (  # noqa: F401
        Engine,
        EngineError,
        fmt_policy,
        gen_world,
        lint_policy,
        run_scenario,
    )

__all__ = [
    "Engine",
    "EngineError",
    "fmt_policy",
    "lint_policy",
    "gen_world",
    "run_scenario",
    "authorize",
    "lint",
]


def authorize(engine: Engine, request: dict) -> dict:
    """Authorize a request given as a dict; returns the decision record."""
    return _json.loads(engine.authorize(_json.dumps(request)))


def lint(text: str) -> list:
    """Lint policy text; returns diagnostics as a list of dicts."""
    return _json.loads(lint_policy(text))
