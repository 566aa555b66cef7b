"""Render a small gallery of hand-picked expressions as grayscale PNGs.

Shows the texture-generation side of the operator set: warps, smoothstep
bands, interference patterns. Images land in demos/out/.
"""

import os

from vecgp import DomainSpec, default_set, parse
from vecgp.evaluate import EvalCache, eval_vectorized
from vecgp.persistence import export_image

GALLERY = {
    "rings": "sin(mult(len(x, y), 6.0))",
    "plaid": "mult(sin(mult(x, 4.0)), cos(mult(y, 4.0)))",
    "bands": "sub(mult(sstep(frac(mult(x, 3.0))), 2.0), 1.0)",
    "swirl": "sin(mult(warp(x, sin(y), cos(x)), 3.0))",
    "blend": "lerp(sin(mult(x, 2.0)), cos(mult(y, 2.0)), frac(mult(x, y)))",
    "facet": "if(mod(x, 0.4), sign(sin(mult(y, 5.0))), neg(x))",
}

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    pset = default_set()
    domain = DomainSpec((512, 512))
    cache = EvalCache()
    for name, text in GALLERY.items():
        tree = parse(text, pset, domain.rank)
        phenotype, stats = eval_vectorized(tree, domain, pset, cache)
        path = os.path.join(OUT, f"{name}.png")
        export_image(phenotype, path)
        print(f"{name:8s} {stats.wall_time * 1000:6.1f} ms  {path}")


if __name__ == "__main__":
    main()
