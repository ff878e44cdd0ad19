"""
Console styling for steamgp tools.

Small rich-backed status builder used by every tool. Status output goes to
stderr so stdout stays clean for CSV and query rows.
"""

import logging
from typing import Any, List, Optional, Sequence, Tuple

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from rich.text import Text

console = Console(stderr=True, highlight=False)

_LEVEL_STYLES = {
    "info": ("•", "cyan"),
    "success": ("✓", "green"),
    "warning": ("!", "yellow"),
    "error": ("✗", "red"),
    "saved": ("→", "magenta"),
    "parsing": ("…", "blue"),
    "unchanged": ("=", "dim"),
}


class StatusIndicator:
    """Fluent builder for one status line with optional detail items."""

    def __init__(self, level: str = "info"):
        if level not in _LEVEL_STYLES:
            level = "info"
        self.level = level
        self.message = ""
        self.explanation: Optional[str] = None
        self.items: List[Tuple[str, Optional[str]]] = []
        self.summary: List[Tuple[str, Any]] = []

    def add_message(self, message: str) -> "StatusIndicator":
        self.message = message
        return self

    def with_explanation(self, explanation: str) -> "StatusIndicator":
        self.explanation = explanation
        return self

    def add_item(self, item: str, style: Optional[str] = None) -> "StatusIndicator":
        self.items.append((item, style))
        return self

    def with_summary_block(self, **counts: Any) -> "StatusIndicator":
        self.summary.extend(counts.items())
        return self

    def emit(self) -> None:
        symbol, style = _LEVEL_STYLES[self.level]
        line = Text()
        line.append(f"{symbol} ", style=f"bold {style}")
        line.append(self.message)
        console.print(line)
        if self.explanation:
            console.print(Text(f"    {self.explanation}", style="dim"))
        for item, item_style in self.items:
            console.print(Text(f"    - {item}", style=item_style or ""))
        if self.summary:
            parts = [f"{key.replace('_', ' ')}: {fmt_count(value)}" for key, value in self.summary]
            console.print(Text("    " + " | ".join(parts), style="dim"))


def emit(message: str = "") -> None:
    console.print(message)


def fmt_count(value: Any) -> str:
    """Format counts with thousands separators; other values pass through."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, int):
        return f"{value:,}"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def print_table(title: str, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    table = Table(title=title, show_lines=False)
    for col in columns:
        table.add_column(col, justify="right" if col != columns[0] else "left")
    for row in rows:
        table.add_row(*[fmt_count(v) for v in row])
    console.print(table)


def setup_logging(verbose: bool = False) -> None:
    """Route library logging through rich; DEBUG when verbose."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )
