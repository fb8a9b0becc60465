"""Cook's membrane, nearly incompressible plane strain, hp-adaptive.

Prints the tip deflection and the hydrostatic stress minimum per iteration.
The full run (depth 9) takes a few minutes.
"""
import sys

from hpfeec.adapt import AdaptConfig, adapt_loop
from hpfeec.cli import cook_task
from hpfeec.meshes import cook


def show(it, hc, state, rec):
    q = rec.quantities
    print(f"{it:>3} {rec.ndof:>7} {rec.global_error:>10.3e} tip {q['probe_u1']:.4f} "
          f"hydrostatic min {q['hydrostatic_min']:.1f} at ({q['hydrostatic_min_x0']:.1f}, "
          f"{q['hydrostatic_min_x1']:.1f})", flush=True)


def main(max_depth: int = 9, max_iter: int = 10):
    adapt_loop(cook_task(), cook(2, 2), AdaptConfig(max_depth=max_depth, max_iter=max_iter), callback=show)


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:3]))
