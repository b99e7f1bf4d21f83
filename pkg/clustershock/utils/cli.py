import shutil
from textwrap import dedent

BANNER = dedent(
    r"""
    ==================================================================
      ___ _         _           ___ _             _
     / __| |_  _ __| |_ ___ _ _/ __| |_  ___  __| |__
    | (__| | || (_-<  _/ -_) '_\__ \ ' \/ _ \/ _| / /
     \___|_|\_,_/__/\__\___|_| |___/_||_\___/\__|_\_\

    ==================================================================
    """
).strip()


def center_cli_str(text: str, width: int | None = None) -> str:
    width = width or shutil.get_terminal_size().columns
    lines = text.splitlines()
    pad = max(len(line) for line in lines)
    return "\n".join(line.ljust(pad).center(width) for line in lines)


def get_ascii_banner(center: bool = True) -> str:
    return center_cli_str(BANNER) if center else BANNER
