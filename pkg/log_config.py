"""
log_config.py

Console logging for the reconstruction tools. Every module asks for a tagged
logger; records print as `[LEVEL][TAG] message`, e.g.

    [INFO][PIPELINE] r=1 n=12 E2=4.10e-02 dE=3.2e-03 band=640
    [WARNING][RECON] 3 degenerate fits (collinear stencil)
"""
import logging
import sys

ROOT = "recon"
_FORMAT = "[%(levelname)s][%(tag)s] %(message)s"
_configured = False


class _TagFilter(logging.Filter):
    def filter(self, record):
        if not hasattr(record, "tag"):
            record.tag = record.name.rsplit(".", 1)[-1].upper()
        return True


def configure(verbose=False, stream=None):
    """Installs the console handler once; later calls only adjust the level."""
    global _configured
    root = logging.getLogger(ROOT)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if _configured:
        return root
    handler = logging.StreamHandler(stream or sys.stdout)
    handler.setFormatter(logging.Formatter(_FORMAT))
    handler.addFilter(_TagFilter())
    root.addHandler(handler)
    root.propagate = False
    _configured = True
    return root


def get_logger(tag):
    return logging.getLogger(f"{ROOT}.{tag.lower()}")
