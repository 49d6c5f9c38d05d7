"""Builders shared by several test modules."""

import numpy as np

from f2p.facegen import Recipe
from f2p.nets import ConvSpec, HeadSpec, LossSpec, NetSpec, Norm, init_model


def tiny_spec(size=12, heads=(HeadSpec("G", "continuous", 2), HeadSpec("G", "onehot", 3)), convs=((3, 3, 2),), pool=2, dense=(5,)):
    return NetSpec(size, tuple(ConvSpec(*c) for c in convs), pool, tuple(dense), tuple(heads))



def random_tiny_net(seed):
    rng = np.random.default_rng(seed)
    size = int(rng.choice([8, 12, 16]))
    convs = [(int(rng.integers(2, 5)), 3, int(rng.choice([1, 2])))]
    if rng.random() < 0.5:
        convs.append((int(rng.integers(2, 5)), 3, 2))
    fmap = size
    for _, _, s in convs:
        fmap = (fmap - 1) // s + 1
    pool = int(rng.choice([g for g in (1, 2) if fmap % g == 0]))
    dense = tuple(int(d) for d in rng.integers(3, 8, size=int(rng.integers(0, 3))))
    heads = (HeadSpec("A", "continuous", int(rng.integers(1, 4))), HeadSpec("A", "onehot", int(rng.integers(2, 4))), HeadSpec("B", "continuous", 1))
    spec = tiny_spec(size, heads, convs, pool, dense)
    model = init_model(spec, seed)
    # non-trivial input statistics so their use in the forward pass is exercised
    model.params["input.mean"] = rng.uniform(0.3, 0.6, (size, size))
    model.params["input.scale"] = np.array([rng.uniform(0.2, 2.0)])
    n = int(rng.integers(1, 4))
    images = rng.random((n, size, size))
    wa = heads[1].width
    target = np.concatenate([rng.uniform(-1, 1, (n, heads[0].width)), np.eye(wa)[rng.integers(wa, size=n)], rng.uniform(-1, 1, (n, 1))], axis=1)
    loss = LossSpec(Norm(rng.choice(["L1", "L2"])), {"A": float(rng.uniform(0.5, 2))}, {"A": float(rng.uniform(0.5, 2))})
    return model, images, target, loss


def with_param(recipe, region, index, value):
    cont = {k: v.copy() for k, v in recipe.continuous.items()}
    cont[region][index] = value
    return Recipe(cont, recipe.globals.copy(), dict(recipe.discrete), 0.0)
