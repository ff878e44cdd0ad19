"""
Diagnostics collected before a solve.

Validation checks append leveled messages to an OperationResult instead of
raising, so one pass can report every problem with a problem/log pair. The
solve tool prints them and refuses to run when any error is present.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional

from lib import console as cs


class ResultLevel(Enum):
    SUCCESS = "success"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"

    @property
    def is_failure(self) -> bool:
        return self in (ResultLevel.ERROR, ResultLevel.CRITICAL)


# StatusIndicator has no separate critical style.
_INDICATOR = {level: level.value for level in ResultLevel}
_INDICATOR[ResultLevel.CRITICAL] = "error"


@dataclass
class ResultMessage:
    """One diagnostic; context carries structured data such as landmark ids."""

    level: ResultLevel
    message: str
    details: Optional[str] = None
    context: Optional[Dict[str, Any]] = None

    def __str__(self) -> str:
        text = f"{self.level.value}: {self.message}"
        return f"{text} ({self.details})" if self.details else text

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"level": self.level.value, "message": self.message}
        if self.details:
            data["details"] = self.details
        if self.context:
            data.update(self.context)
        return data


@dataclass
class OperationResult:
    success: bool = True
    messages: List[ResultMessage] = field(default_factory=list)

    def add(
        self, level: ResultLevel, message: str, details: Optional[str] = None, **context: Any
    ) -> "OperationResult":
        self.messages.append(ResultMessage(level, message, details, context or None))
        if level.is_failure:
            self.success = False
        return self

    def add_success(self, message: str, details: Optional[str] = None) -> "OperationResult":
        return self.add(ResultLevel.SUCCESS, message, details)

    def add_info(self, message: str, details: Optional[str] = None) -> "OperationResult":
        return self.add(ResultLevel.INFO, message, details)

    def add_warning(self, message: str, details: Optional[str] = None, **context: Any) -> "OperationResult":
        return self.add(ResultLevel.WARNING, message, details, **context)

    def add_error(self, message: str, details: Optional[str] = None, **context: Any) -> "OperationResult":
        return self.add(ResultLevel.ERROR, message, details, **context)

    def merge(self, parts: Iterable["OperationResult"]) -> "OperationResult":
        """Append the messages of other results; any failure fails this one."""
        for part in parts:
            self.messages.extend(part.messages)
            self.success = self.success and part.success
        return self

    def messages_at(self, level: ResultLevel) -> List[ResultMessage]:
        return [m for m in self.messages if m.level == level]

    def has_errors(self) -> bool:
        return any(m.level.is_failure for m in self.messages)

    def has_warnings(self) -> bool:
        return bool(self.messages_at(ResultLevel.WARNING))

    def to_dict(self) -> Dict[str, Any]:
        return {"success": self.success, "messages": [m.to_dict() for m in self.messages]}

    def emit_all(self) -> None:
        for msg in self.messages:
            indicator = cs.StatusIndicator(_INDICATOR[msg.level]).add_message(msg.message)
            if msg.details:
                indicator.with_explanation(msg.details)
            ids = (msg.context or {}).get("ids")
            if ids and len(ids) > 1:
                indicator.add_item("ids: " + ", ".join(str(i) for i in ids))
            indicator.emit()
