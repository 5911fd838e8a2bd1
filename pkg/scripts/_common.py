"""Shared helpers for the experiment scripts."""
import argparse
from pathlib import Path

from tmscoil import experiments as ex


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default="runs", help="output root (default ./runs)")
    p.add_argument("--plots", action="store_true", help="write SVG plots for each run")
    p.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps")
    return p


def save(out: str, name: str, log, plots: bool) -> Path:
    d = ex.write_outputs(Path(out), name, log, plots=plots)
    print(f"  wrote {d}")
    return d


def fmt(v, digits: int = 2) -> str:
    return "null" if v is None else f"{v:.{digits}f}"
