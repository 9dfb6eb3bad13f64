"""
Terminal color utilities for experiment output.

Uses colorama so that the escape codes also work on Windows consoles.
Colors are switched off when stdout is not a terminal (CSV piping, CI logs).
"""

import sys

from colorama import Fore, Style, just_fix_windows_console

just_fix_windows_console()

# Check if terminal supports colors
COLORS_ENABLED = hasattr(sys.stdout, 'isatty') and sys.stdout.isatty()


class Colors:
    """ANSI color codes (empty strings when colors are disabled)."""
    RESET = Style.RESET_ALL if COLORS_ENABLED else ''

    RED = Fore.RED if COLORS_ENABLED else ''
    GREEN = Fore.GREEN if COLORS_ENABLED else ''
    YELLOW = Fore.YELLOW if COLORS_ENABLED else ''
    CYAN = Fore.CYAN if COLORS_ENABLED else ''

    BOLD = Style.BRIGHT if COLORS_ENABLED else ''
    DIM = Style.DIM if COLORS_ENABLED else ''

    BOLD_RED = BOLD + RED
    BOLD_GREEN = BOLD + GREEN
    BOLD_YELLOW = BOLD + YELLOW
    BOLD_CYAN = BOLD + CYAN
    BOLD_WHITE = BOLD + (Fore.WHITE if COLORS_ENABLED else '')


def colorize(text: str, color: str) -> str:
    """Apply color to text if colors are enabled."""
    if not COLORS_ENABLED:
        return text
    return f"{color}{text}{Colors.RESET}"


def error(text: str) -> str:
    return colorize(text, Colors.BOLD_RED)


def header(text: str, width: int = 70) -> str:
    """Create a colored section header."""
    line = "═" * width
    return "\n".join([colorize(line, Colors.BOLD_CYAN),
                      colorize(text.center(width), Colors.BOLD_WHITE),
                      colorize(line, Colors.BOLD_CYAN)])


def status(ok: bool) -> str:
    """PASS / FAIL marker for check tables."""
    return PASS if ok else FAIL


PASS = colorize("✓ PASS", Colors.BOLD_GREEN)
FAIL = colorize("✗ FAIL", Colors.BOLD_RED)
