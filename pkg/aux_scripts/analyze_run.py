"""
analyze_run.py - Summary of a reconstruction run log

Reads run_log.csv and prints per-run iteration counts, final energy and
errors, and the energy trend over the last iterations of each run.

Usage:
    python aux_scripts/analyze_run.py out/run_log.csv
"""
import os
import sys

import pandas as pd


def load_log(log_path):
    if not os.path.exists(log_path):
        print(f"Log file {log_path} not found.")
        return None
    return pd.read_csv(log_path)


def summarize(df, tail=5):
    """Per-run table: iterations, final E2/ErrS/Err1, mean step time and energy drop."""
    grouped = df.groupby('r')
    stats = grouped.agg(iterations=('n', 'max'), E2=('E2', 'last'), ErrS=('ErrS', 'last'),
                        Err1=('Err1', 'last'), band=('band_size', 'last'), wall_ms=('wall_ms', 'mean'),
                        fallbacks=('fallback', 'sum'), cavity=('cavity', 'sum'))
    stats['E2_first'] = grouped['E2'].first()
    stats['E2_drop%'] = (1.0 - stats['E2'] / stats['E2_first']) * 100.0
    stats['dE_tail'] = grouped['deltaE'].apply(lambda s: s.tail(tail).mean())
    return stats


def analyze_log(log_path):
    df = load_log(log_path)
    if df is None:
        return None
    if df.empty:
        print("Run log is empty.")
        return None

    print(f"Summary: {df['r'].nunique()} runs, {len(df)} iterations.")
    stats = summarize(df)

    print("\n" + "=" * 40)
    print("BY RUN")
    print("=" * 40)
    print(stats.to_string(float_format=lambda v: f"{v:.4g}"))

    last = df.iloc[-1]
    print("\nFINAL:")
    print(f"ErrS:   {last['ErrS']:.4e}")
    if pd.notna(last['Err1']):
        print(f"Err1:   {last['Err1']:.4e}")
    print(f"E2:     {last['E2']:.4e}")
    return stats


if __name__ == "__main__":
    log_file = sys.argv[1] if len(sys.argv) > 1 else os.path.join("out", "run_log.csv")
    analyze_log(log_file)
