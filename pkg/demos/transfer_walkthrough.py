"""Learn a pruning policy on one network setting and adapt it to another.

1. Draw feasible four-user networks and label their exact search trees.
2. Train the node classifier on those labels.
3. Draw six-user networks, which the classifier has never seen, and adapt
   it with self-imitation (no exact labels on the new setting).
4. Compare both classifiers with exact search on fresh six-user networks.

Takes about fifteen seconds on one core.

    python3 demos/transfer_walkthrough.py
"""

import numpy as np

from bnbtransfer import (
    BnbConfig, Learned, SelfImitationConfig, SolveCache, TrainConfig, compute_class_weights,
    generate_labeled_dataset, init_params, self_imitation_run, train,
)
from bnbtransfer.pipeline import NetworkSpec, draw_instances, evaluate_policy, exact_references


def summarize(name, ev):
    print(f"  {name:<11} mean gap {100 * np.mean(ev.gaps):5.2f}%   "
          f"node speedup {np.mean(ev.node_ratios):4.2f}x   failures {ev.failures}")


def main():
    bnb = BnbConfig()
    cache = SolveCache()

    source = draw_instances(NetworkSpec(L=6, K=4, N=2), 4.0, 12, seed_base=1000)
    data = generate_labeled_dataset(source, cache, bnb)
    n_keep = sum(s.label == "preserve" for s in data)
    print(f"source setting: {len(source)} networks, {len(data)} labeled nodes "
          f"({n_keep} on an optimal path)")

    weights = compute_class_weights(data, (1.0, 4.0))
    history = []
    pretrained = train(init_params(seed=0), data, weights, TrainConfig(epochs=30), history)
    print(f"classifier loss {history[0]:.3f} -> {history[-1]:.3f} over {len(history)} epochs")

    target = draw_instances(NetworkSpec(L=6, K=6, N=2), 4.0, 6, seed_base=2000)
    result = self_imitation_run(pretrained, target, SelfImitationConfig(M=3), cache)
    print(f"self-imitation kept candidate {result.best_iteration} "
          f"(dataset sizes per iteration: {result.dataset_sizes})")

    test = draw_instances(NetworkSpec(L=6, K=6, N=2), 4.0, 6, seed_base=3000)
    refs = exact_references(test, bnb)
    print(f"\nsix-user test networks, exact search visits {np.mean([r.nodes for r in refs]):.1f} "
          "nodes on average:")
    summarize("pretrained", evaluate_policy(Learned(pretrained), test, refs, bnb))
    summarize("adapted", evaluate_policy(Learned(result.params), test, refs, bnb))


if __name__ == "__main__":
    main()
