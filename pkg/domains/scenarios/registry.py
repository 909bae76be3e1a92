from __future__ import annotations

from typing import Any, Callable, Dict, List

from .models import ScenarioError, TaskOutcome, Workspace

Handler = Callable[[Workspace, Dict[str, Any]], TaskOutcome]

# 작업 핸들러 레지스트리
_REGISTRY: Dict[str, Handler] = {}


def _norm(op: str) -> str:
    return (op or "").strip().lower().replace("-", "_").replace(" ", "")


# 흔한 별칭 → 표준 작업 이름
_ALIASES = {
    "hm": "morse_homology",
    "local_hm": "local_morse_homology",
    "hi": "mcf_homology",
    "isolation": "verify_isolation",
    "induced": "induced_map",
    "pd": "poincare_duality",
}


def register_task(op: str) -> Callable[[Handler], Handler]:
    """작업 이름에 핸들러 함수를 등록 (데코레이터)."""

    def wrap(fn: Handler) -> Handler:
        _REGISTRY[_norm(op)] = fn
        return fn

    return wrap


def get_handler(op: str) -> Handler:
    """작업 이름/별칭으로 핸들러를 돌려준다."""
    key = _norm(_ALIASES.get(_norm(op), op))
    fn = _REGISTRY.get(key)
    if fn is None:
        raise ScenarioError(f"등록되지 않은 작업: {op!r}", op=op, known=sorted(_REGISTRY))
    return fn


def registered_tasks() -> List[str]:
    return sorted(_REGISTRY)
