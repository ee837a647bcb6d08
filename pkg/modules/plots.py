"""
Static plots drawn from the CSV reports

matplotlib is imported on first use so the simulation modules never need it.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

from .report_writer import read_rows

logger = logging.getLogger(__name__)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _floats(rows: List[Dict], column: str) -> List[Optional[float]]:
    out = []
    for row in rows:
        text = row.get(column, '')
        try:
            value = float(text)
        except (TypeError, ValueError):
            value = None
        out.append(value if value is not None and math.isfinite(value) and value > 0 else None)
    return out


def _series(ax, xs, ys, **style):
    points = [(x, y) for x, y in zip(xs, ys) if y is not None]
    if points:
        ax.plot([p[0] for p in points], [p[1] for p in points], **style)


def plot_hoc(csv_path: str, out_path: str, title: str = ''):
    """v_k against k on a log scale, with whichever bounds the table carries"""
    rows = read_rows(csv_path)
    plt = _pyplot()
    ks = [int(row['k']) for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5), constrained_layout=True)
    _series(ax, ks, _floats(rows, 'v_dp'), marker='o', markersize=3, label='v_k (dp)')
    _series(ax, ks, _floats(rows, 'v_mc'), linestyle='none', marker='x', label='v_k (mc)')
    for column, label in (('bound_i', 'non-summable bound'), ('bound_ii', 'generic bound'),
                          ('bound_iii', 'exponential bound')):
        _series(ax, ks, _floats(rows, column), linestyle='--', label=label)
    ax.set_yscale('log')
    ax.set_xlabel('k')
    ax.set_ylabel('P(H_k = 0)')
    ax.set_title(title or 'house of cards')
    ax.grid(True, alpha=0.3)
    ax.legend(loc='best', fontsize=8)
    _save(fig, plt, out_path)


def plot_conc(csv_path: str, out_path: str):
    """Exact tails against the Chernoff bounds, one panel per tail"""
    rows = read_rows(csv_path)
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5), constrained_layout=True)
    groups: Dict[tuple, List[Dict]] = {}
    for row in rows:
        groups.setdefault((row['alpha'], row['n']), []).append(row)
    for (alpha, n), group in sorted(groups.items()):
        for ax, sign in zip(axes, (1.0, -1.0)):
            part = [row for row in group if float(row['x']) * sign > 0]
            xs = [abs(float(row['x'])) for row in part]
            line, = ax.plot(xs, [float('nan') if v is None else v for v in _floats(part, 'exact')],
                            label=f"alpha={alpha}, n={n}")
            _series(ax, xs, _floats(part, 'chernoff'), linestyle='--', color=line.get_color())
    for ax, name in zip(axes, ('P(S/n - 1/alpha > x)', 'P(S/n - 1/alpha < -x)')):
        ax.set_yscale('log')
        ax.set_xlabel('x')
        ax.set_title(name)
        ax.grid(True, alpha=0.3)
    axes[-1].legend(loc='best', fontsize=7)
    _save(fig, plt, out_path)


def plot_dbar(csv_path: str, out_path: str):
    """Empirical d-bar with its interval next to each bound column"""
    rows = read_rows(csv_path)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5), constrained_layout=True)
    by_kernel: Dict[str, List[Dict]] = {}
    for row in rows:
        by_kernel.setdefault(row['kernel'], []).append(row)
    for kernel, part in sorted(by_kernel.items()):
        ks = [int(row['k']) for row in part]
        values = _floats(part, 'dbar_hat')
        line, = ax.plot(ks, [v if v is not None else float('nan') for v in values], marker='o', label=f"{kernel} d-bar")
        for column in [c for c in part[0] if c.startswith('b_')]:
            _series(ax, ks, _floats(part, column), linestyle='--', color=line.get_color(), alpha=0.6,
                    label=f"{kernel} {column[2:]}")
    ax.set_yscale('log')
    ax.set_xlabel('k')
    ax.set_ylabel('d-bar(X, X^[k])')
    ax.grid(True, alpha=0.3)
    ax.legend(loc='best', fontsize=7)
    _save(fig, plt, out_path)


def _save(fig, plt, out_path: str):
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    logger.info(f"Plot written to {path}")


PLOTTERS = {'hoc': plot_hoc, 'conc': plot_conc, 'dbar': plot_dbar, 'bounds': plot_dbar}
