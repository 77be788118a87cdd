"""Rectangular abstraction and LTL model checking of multi-affine reaction
network models.
"""

__version__ = '0.1.0'

# Package defaults. The CLI builds its RunConfig from these, and library
# functions fall back on them when an option is not given explicitly.
settings = {
    "sign_tolerance": 0.0,
    "transient_test": "per-dim",
    "workers": 1,
    "duplicate_tolerance": 1e-12,
    "min_spacing": 1e-9,
    "grazing_tolerance": 1e-9,
    "grid_memo_limit": 1_000_000,
    "batch_size": 2048,
}
