"""Evolve an approximation of the Pagie polynomial and plot progress.

Runs a short evolutionary search on a 64x64 domain, prints the best
fitness per generation, and leaves a run folder with all logs plus a
PNG of the best phenotype next to the target.
"""

import os

from vecgp import DomainSpec, RunConfig, run
from vecgp.bench import pagie_target
from vecgp.evaluate import eval_vectorized
from vecgp.expr import to_string
from vecgp.persistence import export_image
from vecgp.primitives import default_set

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    config = RunConfig(seed=7, pop_size=50, generations=30,
                       domain=DomainSpec((64, 64)), target="pagie")

    def progress(state, stats):
        print(f"generation {state.generation:3d}  "
              f"best rmse {state.best.fitness:.6f}  "
              f"cache hits {stats.cache_hits}")

    state = run(config, hooks=[progress], out_root=OUT)
    print("\nbest individual:")
    print(" ", to_string(state.best.tree))

    pset = default_set()
    phenotype, _ = eval_vectorized(state.best.tree, config.domain, pset)
    export_image(phenotype, os.path.join(OUT, "best.png"))
    export_image(pagie_target(config.domain), os.path.join(OUT, "target.png"))
    print(f"wrote {OUT}/best.png and {OUT}/target.png")


if __name__ == "__main__":
    main()
