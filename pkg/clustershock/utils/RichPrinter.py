from typing import Any, List, Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from clustershock.schemas.montecarlo import MCSummary
from clustershock.utils.log_util import logger


class RichPrinter:
    _styles = {
        "success": {"emoji": "✅", "color": "green", "prefix": "Success"},
        "error": {"emoji": "❌", "color": "red", "prefix": "Error"},
        "warning": {"emoji": "⚠️", "color": "yellow", "prefix": "Warning"},
    }

    # stderr, so reports written to stdout stay byte-stable
    _console = Console(stderr=True)

    @classmethod
    def _panel(cls, message: str, style_type: str, title: Optional[str] = None):
        style = cls._styles[style_type]
        text = Text()
        text.append(f"{style['emoji']} ", style="bold")
        text.append(f"{style['prefix']}: ", style=f"bold {style['color']}")
        text.append(message, style=style["color"])
        cls._console.print(
            Panel.fit(text, title=title or style_type.upper(), border_style=style["color"], padding=(1, 4))
        )

    @classmethod
    def success(cls, message: str, title: Optional[str] = None):
        cls._panel(message, "success", title)

    @classmethod
    def error(cls, message: str, title: Optional[str] = None):
        cls._panel(message, "error", title)

    @classmethod
    def warning(cls, message: str, title: Optional[str] = None):
        cls._panel(message, "warning", title)

    @classmethod
    def table(
        cls,
        headers: List[str],
        rows: List[List[Any]],
        title: str = "Results",
        column_styles: Optional[List[str]] = None,
    ):
        table = Table(title=title, show_header=True, header_style="bold cyan")
        for header, style in zip(headers, column_styles or ["magenta"] * len(headers)):
            table.add_column(header, style=style)
        for row in rows:
            table.add_row(*[str(item) for item in row])
        cls._console.print(table)

    @classmethod
    def mc_summary(cls, summary: MCSummary):
        verdicts = {True: "[green]PASS[/green]", False: "[bold red]FAIL[/bold red]", None: "[blue]info[/blue]"}
        rows = [
            [
                c.name,
                c.relation.value,
                f"{c.empirical:.6g}",
                "" if c.theoretical is None else f"{c.theoretical:.6g}",
                "" if c.tolerance is None else f"{c.tolerance:.3g}",
                verdicts[c.passed],
            ]
            for c in summary.checks
        ]
        cls.table(
            ["check", "relation", "empirical", "theoretical", "tolerance", "result"],
            rows,
            title=f"Monte Carlo checks (R={summary.replications}, {summary.elapsed_seconds:.1f}s)",
            column_styles=["magenta", "white", "cyan", "cyan", "white", "white"],
        )

    @classmethod
    def _banner(cls, icon: str, label: str, color: str):
        cls._console.print()
        text = Text()
        text.append(f"{icon} ", style="bold")
        text.append(label, style=f"bold {color}")
        cls._console.print(Panel.fit(text, border_style=color, padding=(1, 4)))

    @classmethod
    def workflow_start(cls, name: str):
        cls._banner("🚀", f"Running {name}", "blue")
        logger.info(f"=======================start {name}=======================")

    @classmethod
    def workflow_end(cls, name: str):
        cls._banner("✨", f"{name} finished", "green")
        logger.info(f"=======================end {name}=======================")
