"""Walk through one branch-and-bound search on a small Cloud-RAN network.

Prints the visited nodes in order with their fixings, relaxation bound and
the reason each leaf was closed, then checks the answer against brute force
over every RRH on/off pattern.

    python3 demos/search_tree.py
"""

import itertools

import numpy as np

from bnbtransfer import ExactOracle, Fixings, SolveCache, cached_solve, gen_cloudran_instance, run_bnb


def describe(node):
    fixed = node.fixings.as_dict()
    pattern = "".join(str(fixed[i]) if i in fixed else "." for i in range(4))
    bound = "-" if node.relax is None or node.relax.objective is None else f"{node.relax.objective:8.3f}"
    if node.fathom_reason is not None:
        status = f"closed by {node.fathom_reason.value}"
    elif node.policy_pruned:
        status = "pruned by policy"
    else:
        status = f"branch on RRH {node.branch_var}"
    return f"  node {node.id:3d}  depth {node.depth}  on/off {pattern}  bound {bound}  {status}"


def main():
    # four RRHs with one antenna each serving two users at a 4 dB SINR target
    scenario, instance = gen_cloudran_instance(7, 4, 2, 1, 4.0)
    print(f"fronthaul powers (W): {scenario.fronthaul_powers.tolist()}")

    cache = SolveCache()
    trace = run_bnb(instance, ExactOracle(), cache)
    print(f"\nvisited {trace.node_count} nodes; {cache.misses} relaxations solved, "
          f"{cache.hits} served from the cache\n")
    for node in trace.visited:
        print(describe(node))
    print(f"\nincumbent updates (node, objective): {trace.incumbent_timeline}")
    on = np.round(trace.best_values.binaries).astype(int)
    print(f"best objective {trace.best_objective:.4f} W with RRHs on: {on.tolist()}")

    # every on/off pattern fixed completely leaves a convex problem; its best is the optimum
    best = min(
        (r.objective for bits in itertools.product((0, 1), repeat=4)
         if (r := cached_solve(cache, instance, Fixings(enumerate(bits)))).optimal),
        default=None,
    )
    print(f"brute force over 16 patterns gives {best:.4f} W")


if __name__ == "__main__":
    main()
