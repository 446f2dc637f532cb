"""Two-moons story: one Gaussian per class cannot hug a curved class.

Each moon is a half-circle — no single Gaussian covers it without
swallowing the other moon's tips.  With one cluster per class (a flat
mixture) some points are always misassigned, links or not.  Giving each
class a two-cluster mixture lets the model trace the curve, and the same
four relations then yield a perfect assignment.

Run:  python demos/two_moons_subclusters.py
"""

import numpy as np

from pairmix import (
    FitConfig,
    PairmixError,
    RelationSet,
    fit_flat,
    fit_hier,
    gen_synthetic,
    hard_assign,
    log_likelihood,
    log_likelihood_hier,
    predict_flat_batch,
    predict_hier_batch,
    purity,
)
from pairmix.initialize import init_flat, init_hier, make_rng, trial_seed

N_RESTARTS = 3
N_TRIALS = 20


def moon_links(points):
    """2 must (arc ends) + 2 cannot (closest cross-moon pairs, far apart)."""
    upper = np.arange(100)
    lower = np.arange(100, 200)
    d2 = ((points[upper][:, None, :] - points[lower][None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=None)
    first = np.unravel_index(order[0], d2.shape)
    first_pair = (int(upper[first[0]]), int(lower[first[1]]))
    mid_x0 = (points[first_pair[0], 0] + points[first_pair[1], 0]) / 2
    second_pair = None
    for flat_idx in order[1:]:
        i, j = np.unravel_index(flat_idx, d2.shape)
        pair = (int(upper[i]), int(lower[j]))
        if abs((points[pair[0], 0] + points[pair[1], 0]) / 2 - mid_x0) > 0.5:
            second_pair = pair
            break
    return RelationSet(must=[(0, 99), (100, 199)], cannot=[first_pair, second_pair])


def main():
    ds = gen_synthetic("two-moons", 100, 0.05, seed=11)
    pts, labels = ds.points, ds.labels
    rel = moon_links(pts)
    cfg = FitConfig(seed=0)

    print("two-moons: 100 points/moon, noise 0.05")
    print(f"relations: must={list(rel.must)} cannot={list(rel.cannot)}")
    print()

    flat_sub = hier_perfect = 0
    example = None
    for t in range(N_TRIALS):
        rng = make_rng(trial_seed(456, t))
        best_f, ll_f = None, -np.inf
        best_h, ll_h = None, -np.inf
        for _ in range(N_RESTARTS):
            init_f = init_flat(ds, 2, rng)
            init_h = init_hier(ds, 2, (2, 2), rng)
            try:
                mf, _ = fit_flat(ds, rel, 2, cfg, init=init_f)
                lf = log_likelihood(mf, ds, rel)
                if lf > ll_f:
                    best_f, ll_f = mf, lf
            except PairmixError:
                pass
            try:
                mh, _ = fit_hier(ds, rel, 2, (2, 2), cfg, init=init_h)
                lh = log_likelihood_hier(mh, ds, rel)
                if lh > ll_h:
                    best_h, ll_h = mh, lh
            except PairmixError:
                pass
        p_f = purity(hard_assign(predict_flat_batch(best_f, pts)), labels)
        p_h = purity(hard_assign(predict_hier_batch(best_h, pts)), labels)
        flat_sub += bool(p_f < 1.0)
        hier_perfect += bool(p_h == 1.0)
        if example is None and p_f < 1.0 and p_h == 1.0:
            example = (t, p_f, p_h, round((1.0 - p_f) * len(labels)), best_h)

    print(f"one cluster/class : purity < 1.0 in {flat_sub}/{N_TRIALS} trials")
    print(f"two clusters/class: purity == 1.0 in {hier_perfect}/{N_TRIALS} trials")
    print()
    if example:
        t, p_f, p_h, miss, mh = example
        print(f"trial {t}: flat purity {p_f:.3f} ({miss} points on the wrong moon), "
              f"two-level purity {p_h:.3f}")
        print("two-level model sub-cluster centers (each row hugs half an arc):")
        for m, cls in enumerate(mh.classes):
            centers = ", ".join(f"({c[0]:+.2f}, {c[1]:+.2f})" for c in cls.means)
            print(f"  class {m}: {centers}")


if __name__ == "__main__":
    main()
