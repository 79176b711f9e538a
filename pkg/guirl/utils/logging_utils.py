import logging
import sys
from typing import List, Optional, Sequence

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from guirl.types import AblationRow, EvalReport, RewardBreakdown


def setup_logging(
    level: str = "INFO",
    log_format: Optional[str] = None,
    date_format: Optional[str] = None,
) -> None:
    """
    Setup basic logging configuration for the guirl package.

    Args:
        level: The logging level to use. Defaults to "INFO".
        log_format: Custom log format string. If None, uses default format.
        date_format: Custom date format string. If None, uses default format.
    """
    if log_format is None:
        log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    if date_format is None:
        date_format = "%Y-%m-%d %H:%M:%S"

    # Create a StreamHandler that writes to stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(fmt=log_format, datefmt=date_format))

    # Get the root logger for the guirl package
    logger = logging.getLogger("guirl")
    logger.setLevel(level.upper())
    # repeated calls replace the handler instead of stacking them
    for existing in list(logger.handlers):
        logger.removeHandler(existing)
    logger.addHandler(handler)

    # Prevent the logger from propagating messages to the root logger
    logger.propagate = False


def print_prompt_completions_sample(
    prompts: List[str],
    completions: List[str],
    rewards: Sequence[RewardBreakdown],
    step: int,
    num_samples: int = 1,  # Number of samples to display
    console: Optional[Console] = None,
) -> None:
    console = console or Console(stderr=True)
    table = Table(show_header=True, header_style="bold white", expand=True)

    table.add_column("Prompt", style="bright_yellow")
    table.add_column("Completion", style="bright_green")
    table.add_column("Format", style="cyan", justify="right")
    table.add_column("Accuracy", style="cyan", justify="right")
    table.add_column("Reward", style="bold cyan", justify="right")

    samples_to_show = min(num_samples, len(prompts), len(completions), len(rewards))
    for i in range(samples_to_show):
        reward = rewards[i]
        table.add_row(
            Text(prompts[i]),
            Text(completions[i]),
            Text(f"{reward.format_score:.3f}"),
            Text(f"{reward.accuracy_score:.3f}"),
            Text(f"{reward.total:.2f}"),
        )
        if i < samples_to_show - 1:  # Don't add section after last row
            table.add_section()

    panel = Panel(table, expand=False, title=f"Step {step}", border_style="bold white")
    console.print(panel)


def print_eval_report(
    report: EvalReport, title: str = "Evaluation", console: Optional[Console] = None
) -> None:
    console = console or Console()
    table = Table(show_header=True, header_style="bold white", title=title)
    table.add_column("Subset", style="bright_yellow")
    table.add_column("Hits", justify="right")
    table.add_column("Count", justify="right")
    table.add_column("Accuracy", style="bold cyan", justify="right")
    for key in report.subsets:
        table.add_row(
            key,
            str(report.hits.get(key, 0)),
            str(report.counts.get(key, 0)),
            f"{report.subsets[key]:.4f}",
        )
    table.add_section()
    table.add_row(
        "overall",
        str(sum(report.hits.values())),
        str(report.total),
        f"{report.overall:.4f}",
        style="bold",
    )
    console.print(table)


def print_ablation_table(rows: Sequence[AblationRow], console: Optional[Console] = None) -> None:
    console = console or Console()
    table = Table(show_header=True, header_style="bold white", title="Ablation")
    table.add_column("Variant", style="bright_yellow")
    table.add_column("Digest")
    table.add_column("Eval acc", style="bold cyan", justify="right")
    table.add_column("Reward first", justify="right")
    table.add_column("Reward last", justify="right")
    table.add_column("Error", style="red")

    def fmt(value: Optional[float]) -> str:
        return "-" if value is None else f"{value:.4f}"

    for row in rows:
        table.add_row(
            row.variant,
            row.config_digest,
            fmt(row.final_eval_acc),
            fmt(row.reward_first),
            fmt(row.reward_last),
            row.error or "",
        )
    console.print(table)
