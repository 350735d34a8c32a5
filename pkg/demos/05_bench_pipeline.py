"""The benchmark pipeline end to end on a shrunken configuration.

``make_case`` builds the desk-scale setup for one of the four examples;
keyword overrides shrink it so this demo finishes quickly. ``run_case``
generates data, trains, measures trajectory and UQ errors, evaluates the
error bounds and, if given a directory, writes CSV files (and SVG charts).

Run:  python demos/05_bench_pipeline.py [output_dir]
"""

import sys

from flowmap.bench import make_case, run_case

out_dir = sys.argv[1] if len(sys.argv) > 1 else None
case = make_case(2, J=5000, epochs=30)
result = run_case(case, out_dir, render_svg=out_dir is not None)

print(f"example {case.example} ({case.system}): J={case.J}, epochs={case.epochs}")
for name, value in result.metrics.items():
    print(f"  {name:20s} {value:.4g}")
for check in result.checks:
    print(f"  check {check.metric}: {check.value:.3g} vs {check.threshold:g} -> "
          f"{'pass' if check.passed else 'fail'} (shrunken run, failures expected)")
if out_dir:
    print(f"CSV files written under {out_dir}/example{case.example}/")
