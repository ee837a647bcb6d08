"""
Kernel definition files

KEY=VALUE lines, read with python-dotenv; list and dict values are Python
literals. Keys:

    FAMILY      renewal | markov | mixture
    ID          kernel id used in reports (defaults to the file stem)
    ALPHABET    alphabet size (default 2)

    renewal:  P=[0.4, 0.3]  TAIL=constant|periodic
    markov:   ORDER=1  ROWS={(1,): [0.7, 0.3], (2,): [0.4, 0.6]}
    mixture:  COMPONENT=uniform|copy|vote  and either WEIGHTS=[...] or
              GEOMETRIC=0.5 with MAX_ORDER=8 (lambda_j proportional to 0.5^j)
"""

import ast
import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np
from dotenv import dotenv_values

from .errors import InvalidKernel
from .kernel import Kernel, MarkovKernel, MixtureKernel, RenewalKernel

logger = logging.getLogger(__name__)

KERNELS_DIR = Path(__file__).resolve().parent.parent / 'kernels'


def resolve_kernel_path(name: Union[str, Path]) -> Path:
    """A path as given, else a file of that name (with or without .txt) under kernels/"""
    path = Path(name)
    if path.is_file():
        return path
    for candidate in (KERNELS_DIR / path.name, KERNELS_DIR / f"{path.name}.txt"):
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"kernel file '{name}' not found (also looked in {KERNELS_DIR})")


def _literal(values: Dict[str, str], key: str, default=None):
    raw = values.get(key)
    if raw is None or raw == '':
        if default is None:
            raise InvalidKernel(f"kernel file is missing {key}")
        return default
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        raise InvalidKernel(f"cannot parse {key}={raw!r}") from None


def kernel_from_values(values: Dict[str, str], default_id: str = '', state_cap: int = 4096) -> Kernel:
    family = (values.get('FAMILY') or '').strip().lower()
    kernel_id = values.get('ID') or default_id
    alphabet = int(_literal(values, 'ALPHABET', 2))

    if family == 'renewal':
        return RenewalKernel(p=_literal(values, 'P'), tail=(values.get('TAIL') or 'constant').strip(),
                             kernel_id=kernel_id)

    if family == 'markov':
        rows = {tuple(context): row for context, row in _literal(values, 'ROWS').items()}
        return MarkovKernel.from_rows(int(_literal(values, 'ORDER')), rows, alphabet, kernel_id)

    if family == 'mixture':
        kind = (values.get('COMPONENT') or 'copy').strip()
        if values.get('WEIGHTS'):
            weights = np.asarray(_literal(values, 'WEIGHTS'), dtype=float)
        else:
            ratio = float(_literal(values, 'GEOMETRIC'))
            weights = ratio ** np.arange(int(_literal(values, 'MAX_ORDER')) + 1)
        weights = weights / weights.sum()
        return MixtureKernel.of_family(weights, kind, alphabet, kernel_id, state_cap)

    raise InvalidKernel(f"unknown kernel family '{family}'")


def load_kernel(name: Union[str, Path], state_cap: int = 4096) -> Kernel:
    """Build the kernel described by a kernel file"""
    path = resolve_kernel_path(name)
    values = dotenv_values(path)
    kernel = kernel_from_values(values, default_id=path.stem, state_cap=state_cap)
    logger.info(f"Loaded {kernel!r} from {path}")
    return kernel
