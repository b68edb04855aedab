"""Slow, loop-based reference implementations used to check the fast ones.

Nothing here shares code with the package: distances are written out
coordinate by coordinate and assignments are enumerated.
"""
import itertools
import math


def dist2(p, q):
    return sum((float(a) - float(b)) ** 2 for a, b in zip(p, q))


def chamfer(X, Y):
    fwd = sum(min(dist2(x, y) for y in Y) for x in X)
    bwd = sum(min(dist2(x, y) for x in X) for y in Y)
    return fwd + bwd


def emd_permutations(X, Y):
    n = len(X)
    d = [[math.sqrt(dist2(X[i], Y[j])) for j in range(n)] for i in range(n)]
    return min(sum(d[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def voxel_counts(clouds, res):
    counts = {}
    for pc in clouds:
        for p in pc:
            cell = []
            for c in p:
                i = math.floor((float(c) + 1.0) / 2.0 * res)
                cell.append(min(max(i, 0), res - 1))
            counts[tuple(cell)] = counts.get(tuple(cell), 0) + 1
    return counts


def jsd(A, B, res):
    ca, cb = voxel_counts(A, res), voxel_counts(B, res)
    na, nb = sum(ca.values()), sum(cb.values())
    total = 0.0
    for cell in set(ca) | set(cb):
        p, q = ca.get(cell, 0) / na, cb.get(cell, 0) / nb
        m = (p + q) / 2
        if p:
            total += 0.5 * p * math.log(p / m)
        if q:
            total += 0.5 * q * math.log(q / m)
    return total


def coverage(A, B, dist):
    marked = set()
    for a in A:
        ds = [dist(a, b) for b in B]
        marked.add(ds.index(min(ds)))
    return len(marked) / len(B)


def mmd(A, B, dist):
    return sum(min(dist(a, b) for a in A) for b in B) / len(B)
