"""
reconstruct.py - Command-line entry point

Reconstructs an implicit surface from a point cloud with the adaptive
level-set pipeline and writes the results to --outdir (see Contract.md).

Usage:
    python reconstruct.py presets/square.json
    python reconstruct.py presets/tunnel.json --cavity on --runs 2 --verbose
    python reconstruct.py --input data/sphere.xyz --export csv,obj,db --workers 4

Exit codes:
    0 success, 2 configuration/input error, 3 numerical failure, 4 I/O error
"""
import argparse
import sys

from errors import EXIT_NUMERICAL, EXIT_OK, exit_code_for
from log_config import configure, get_logger
from pipeline import run
from run_config import EXACT_SHAPES, load_config

log = get_logger("CLI")


def _on_off(text):
    value = text.strip().lower()
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on|off, got '{text}'")
    return value == "on"


def _export_list(text):
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser():
    parser = argparse.ArgumentParser(description="Adaptive level-set surface reconstruction from point clouds")
    parser.add_argument('config', nargs='?', default=None, help='Flat JSON configuration (preset) file')
    parser.add_argument('--input', type=str, help='Point cloud file (.xyz or ASCII .ply)')
    parser.add_argument('--outdir', type=str, help='Directory for the result files')
    parser.add_argument('--runs', type=int, help='Number of runs R (each halves dx_min)')
    parser.add_argument('--cs', type=float, help='Resolution factor C_S of the first run')
    parser.add_argument('--domain-halfwidth', dest='domain_halfwidth', type=float,
                        help='Half-width M of the computational box [-M, M]^n')
    parser.add_argument('--cavity', type=_on_off, help='Cavity-detection velocity switch (on|off)')
    parser.add_argument('--seed', type=int, help='Seed of the resolution-estimate sample')
    parser.add_argument('--workers', type=int, help='Worker threads for leaf-parallel loops')
    parser.add_argument('--export', dest='exports', type=_export_list,
                        help='Comma separated subset of csv,vtk,obj,db')
    parser.add_argument('--exact', type=str, choices=EXACT_SHAPES,
                        help='Named shape whose exact signed distance gives Err_1')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure(verbose=args.verbose)
    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    try:
        config = load_config(args.config, overrides)
        report = run(config)
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_NUMERICAL and not hasattr(e, "exit_code"):
            log.exception(f"unexpected failure: {e}")
        else:
            log.error(f"{type(e).__name__}: {e}")
        return code
    final = report.final
    err1 = f", Err1={final.Err1:.4e}" if final.Err1 is not None else ""
    log.info(f"done: {report.total_iterations} iterations over {len(report.runs)} runs, "
             f"ErrS={final.ErrS:.4e}{err1}, {final.leaves} leaves -> {config.outdir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
