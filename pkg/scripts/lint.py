#!/usr/bin/env python3

"""Run the static checks and the fast test tier for ground_aware."""

import subprocess
import sys

from rich.console import Console
from rich.table import Table

console = Console()

PATHS = ["ground_aware", "tests", "scripts"]

CHECKS: dict[str, list[str]] = {
    "ruff": ["ruff", "check", *PATHS],
    "black": ["black", "--check", "--quiet", *PATHS],
    "mypy": ["mypy", "ground_aware"],
    # timing benchmarks are marked slow and stay out of the lint gate
    "tests": ["pytest", "-q", "-m", "not slow", "--no-cov"],
}


def run_lint() -> None:
    """Run every check, print a summary table and exit non-zero on any failure."""
    table = Table(title="Lint")
    table.add_column("check")
    table.add_column("result")
    failed = []
    for name, command in CHECKS.items():
        with console.status(f"[bold green]Running {name}..."):
            result = subprocess.run(
                command, capture_output=True, text=True, check=False
            )
        if result.returncode == 0:
            table.add_row(name, "[green]passed")
            continue
        failed.append(name)
        table.add_row(name, f"[red]failed ({result.returncode})")
        console.rule(f"[red]{name}")
        console.print(result.stdout or result.stderr, markup=False)

    console.print(table)
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    run_lint()
