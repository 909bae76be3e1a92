from __future__ import annotations

from typing import Any, Dict, Optional


class McfkitError(Exception):
    """모든 도메인 오류의 공통 조상. stage 태그와 key=value 상세를 함께 들고 다님."""

    stage = "mcfkit"

    def __init__(self, message: str, *, stage: Optional[str] = None, **detail: Any) -> None:
        super().__init__(message)
        self.message = message
        if stage:
            self.stage = stage
        self.detail: Dict[str, Any] = detail

    def __str__(self) -> str:
        if not self.detail:
            return self.message
        extra = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"{self.message} ({extra})"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "stage": self.stage,
            "message": self.message,
            "detail": {k: _fmt(v) for k, v in self.detail.items()},
        }


def _fmt(v: Any) -> Any:
    # numpy 배열/스칼라는 리포트에 그대로 못 실으니 리스트/float 로
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_fmt(x) for x in v]
    return v
