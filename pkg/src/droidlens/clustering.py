"""Clustering algorithms and validity indices over raw feature matrices.

Five fitters (k-means, agglomerative, BIRCH, DBSCAN, Gaussian mixture)
plus the Calinski-Harabasz and silhouette indices used to pick between
them.  Everything is deterministic given (X, params, seed): ties break
toward the lowest index, and all randomness flows through derived
generator streams.  Features are consumed raw; callers standardize
beforehand if they want scaled distances.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ClusterError
from .rng import derive_rng, derive_seed

logger = logging.getLogger(__name__)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ClusterError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ClusterError("matrix contains NaN or infinity")
    return X


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ClusterError(f"k must satisfy 1 <= k <= n, got k={k} with n={n}")


def _sq_dists(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """n×k squared Euclidean distances, clipped at 0 against roundoff."""
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * X @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _exact_dists(X: np.ndarray, chunk: int = 256) -> np.ndarray:
    """n×n Euclidean distances by direct differences.

    Slower than the expanded form but free of its cancellation error;
    the validity indices are tested against oracles at 1e-9 relative,
    which the expanded form cannot hold for near-coincident points.
    """
    n = X.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        gap = X[start:stop, None, :] - X[None, :, :]
        out[start:stop] = np.sqrt((gap * gap).sum(axis=2))
    return out


@dataclass(frozen=True)
class Assignment:
    """Cluster ids per row; -1 marks DBSCAN noise.

    k counts the non-noise clusters.  k = 0 is legal only for the
    all-noise outcome.
    """

    labels: tuple[int, ...]
    k: int

    def __post_init__(self) -> None:
        labels = tuple(int(v) for v in self.labels)
        object.__setattr__(self, "labels", labels)
        if self.k < 0:
            raise ClusterError(f"k must be non-negative, got {self.k}")
        for i, lab in enumerate(labels):
            if lab != -1 and not 0 <= lab < self.k:
                raise ClusterError(f"row {i}: label {lab} outside [0, {self.k})")
        if self.k == 0 and any(lab != -1 for lab in labels):
            raise ClusterError("k = 0 requires every row to be noise")

    @property
    def n(self) -> int:
        return len(self.labels)

    def noise_fraction(self) -> float:
        if not self.labels:
            return 0.0
        return sum(1 for lab in self.labels if lab == -1) / len(self.labels)


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    sse: float
    iterations: int

    def __post_init__(self) -> None:
        centroids = np.asarray(self.centroids, dtype=np.float64).copy()
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)
        if self.sse < 0:
            raise ClusterError(f"sse must be non-negative, got {self.sse}")


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64).copy()
        means = np.asarray(self.means, dtype=np.float64).copy()
        variances = np.asarray(self.variances, dtype=np.float64).copy()
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ClusterError(f"component weights sum to {weights.sum()!r}, not 1")
        if (variances <= 0).any():
            raise ClusterError("variances must be positive")
        for arr in (weights, means, variances):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def k(self) -> int:
        return self.means.shape[0]


# --- k-means ---------------------------------------------------------------


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # remaining mass zero: any point works
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[[idx]])[:, 0])
    return X[chosen].copy()


def _repair_empty(
    X: np.ndarray, labels: np.ndarray, dmin: np.ndarray, centroids: np.ndarray
) -> np.ndarray:
    """Reseed each empty cluster to the point currently farthest from
    its assigned centroid; a point is spent once per repair round."""
    counts = np.bincount(labels, minlength=centroids.shape[0])
    if counts.min() > 0:
        return centroids
    centroids = centroids.copy()
    dmin = dmin.copy()
    for cid in np.flatnonzero(counts == 0):
        far = int(np.argmax(dmin))
        centroids[cid] = X[far]
        dmin[far] = -1.0
    return centroids


def kmeans(
    X, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6
) -> tuple[KMeansModel, Assignment]:
    """Lloyd iterations from a k-means++ start.

    Nearest-centroid ties go to the lowest centroid index.  SSE is
    checked non-increasing on every iteration; a violation is a bug,
    not a data condition, and raises.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    _check_k(k, n)
    rng = derive_rng(seed, "kmeans++")
    centroids = _kmeanspp_init(X, k, rng)

    prev_sse = math.inf
    iterations = 0

    def assign(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        d2 = _sq_dists(X, c)
        labels = np.argmin(d2, axis=1)
        dmin = d2[np.arange(n), labels]
        return labels, dmin, float(dmin.sum())

    def check_monotone(sse: float) -> None:
        if sse > prev_sse + 1e-9 * max(1.0, prev_sse):
            raise ClusterError(
                f"SSE increased from {prev_sse!r} to {sse!r}; Lloyd step is broken"
            )

    for _ in range(max_iter):
        labels, dmin, sse = assign(centroids)
        check_monotone(sse)
        prev_sse = sse
        new_centroids = centroids.copy()
        for cid in range(k):
            members = labels == cid
            if members.any():
                new_centroids[cid] = X[members].mean(axis=0)
        new_centroids = _repair_empty(X, labels, dmin, new_centroids)
        iterations += 1
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break

    labels, _, sse = assign(centroids)
    check_monotone(sse)
    model = KMeansModel(centroids=centroids, sse=sse, iterations=iterations)
    return model, Assignment(labels=tuple(int(v) for v in labels), k=k)


def sse_curve(X, k_range, seed: int, n_restarts: int = 10) -> list[tuple[int, float]]:
    """Best-of-restarts SSE per k, the elbow-method curve."""
    X = _as_matrix(X)
    ks = [int(k) for k in k_range]
    if not ks:
        raise ClusterError("k_range is empty")
    for k in ks:
        _check_k(k, X.shape[0])
    if n_restarts < 1:
        raise ClusterError(f"n_restarts must be positive, got {n_restarts}")
    curve = []
    for k in ks:
        best = math.inf
        for restart in range(n_restarts):
            model, _ = kmeans(X, k, derive_seed(seed, "sse_curve", k, restart))
            best = min(best, model.sse)
        curve.append((k, best))
    return curve


def assign_clusters(x, model: KMeansModel) -> int:
    """Nearest centroid for one point; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.centroids.shape[1]:
        raise ClusterError(
            f"point has shape {x.shape}, centroids are "
            f"{model.centroids.shape[0]}x{model.centroids.shape[1]}"
        )
    return int(np.argmin(_sq_dists(x[None, :], model.centroids)[0]))


def assign_clusters_batch(X, model: KMeansModel) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.centroids.shape[1]:
        raise ClusterError(
            f"matrix has shape {X.shape}, centroids are "
            f"{model.centroids.shape[0]}x{model.centroids.shape[1]}"
        )
    return np.argmin(_sq_dists(X, model.centroids), axis=1)


# --- agglomerative ----------------------------------------------------------

_LINKAGES = ("ward", "complete", "average")


def agglomerative(X, k: int, linkage: str = "ward") -> Assignment:
    """Bottom-up merging from singletons.

    Ward merges the pair with minimum variance increase
    (ni*nj/(ni+nj) * ||ci - cj||^2); complete and average update via
    the usual max / size-weighted-mean rules.  Among equal merge
    distances the pair with the lexicographically lowest (i, j) cluster
    ids wins; a merged cluster keeps the lower of the two ids, so ids
    stay comparable across rounds.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    _check_k(k, n)
    if linkage not in _LINKAGES:
        raise ClusterError(f"linkage must be one of {_LINKAGES}, got {linkage!r}")

    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    centroids = X.copy()

    if linkage == "ward":
        D = 0.5 * _sq_dists(X, X)
    else:
        D = np.sqrt(_sq_dists(X, X))
    # Keep only i < j cells; flat argmin then scans pairs in (i, j)
    # lexicographic order, which is the documented tie-break.
    D[np.tril_indices(n)] = np.inf

    def pair(a: np.ndarray, b: int) -> tuple[np.ndarray, np.ndarray]:
        return np.minimum(a, b), np.maximum(a, b)

    for _ in range(n - k):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        ni, nj = sizes[i], sizes[j]

        if linkage == "ward":
            centroids[i] = (ni * centroids[i] + nj * centroids[j]) / (ni + nj)
            sizes[i] = ni + nj
            if others.size:
                gap = centroids[others] - centroids[i]
                merged = (sizes[i] * sizes[others] / (sizes[i] + sizes[others])) * (
                    gap * gap
                ).sum(axis=1)
        else:
            sizes[i] = ni + nj
            if others.size:
                di = D[pair(others, i)]
                dj = D[pair(others, j)]
                if linkage == "complete":
                    merged = np.maximum(di, dj)
                else:
                    merged = (ni * di + nj * dj) / (ni + nj)

        members[i].extend(members[j])
        del members[j]
        active[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
        if others.size:
            rows, cols = pair(others, i)
            D[rows, cols] = merged

    ordered = sorted(members.values(), key=min)
    labels = [0] * n
    for cid, rows in enumerate(ordered):
        for r in rows:
            labels[r] = cid
    return Assignment(labels=tuple(labels), k=k)


# --- BIRCH -------------------------------------------------------------------


class _CF:
    """Clustering feature: point count, linear sum, squared-norm sum."""

    __slots__ = ("n", "ls", "ss", "child")

    def __init__(self, n: int, ls: np.ndarray, ss: float, child=None):
        self.n = n
        self.ls = ls
        self.ss = ss
        self.child = child

    @classmethod
    def of_point(cls, x: np.ndarray) -> "_CF":
        return cls(1, x.copy(), float(x @ x))

    def centroid(self) -> np.ndarray:
        return self.ls / self.n

    def absorb(self, other: "_CF") -> None:
        self.n += other.n
        self.ls = self.ls + other.ls
        self.ss += other.ss

    def merged_radius(self, other: "_CF") -> float:
        n = self.n + other.n
        ls = self.ls + other.ls
        ss = self.ss + other.ss
        return math.sqrt(max(ss / n - float(ls @ ls) / (n * n), 0.0))


class _CFNode:
    __slots__ = ("entries", "leaf")

    def __init__(self, leaf: bool):
        self.entries: list[_CF] = []
        self.leaf = leaf


def _nearest_entry(entries: list[_CF], x: np.ndarray) -> int:
    best, best_d = 0, math.inf
    for idx, entry in enumerate(entries):
        gap = entry.centroid() - x
        d = float(gap @ gap)
        if d < best_d:
            best, best_d = idx, d
    return best


def _split_node(node: _CFNode, branching: int) -> tuple[_CF, _CF]:
    """Split by farthest-pair seeding; each half becomes a new node
    summarized by a fresh CF entry."""
    cents = np.array([e.centroid() for e in node.entries])
    d2 = _sq_dists(cents, cents)
    a, b = divmod(int(np.argmax(d2)), len(node.entries))
    left, right = _CFNode(node.leaf), _CFNode(node.leaf)
    for idx, entry in enumerate(node.entries):
        da = d2[idx, a]
        db = d2[idx, b]
        (left if da <= db else right).entries.append(entry)
    if not right.entries:  # identical centroids: argmax degenerated to a == b
        right.entries.append(left.entries.pop())
    out = []
    for half in (left, right):
        summary = _CF(0, np.zeros(cents.shape[1]), 0.0, child=half)
        for entry in half.entries:
            summary.absorb(entry)
        out.append(summary)
    return out[0], out[1]


def _insert_cf(node: _CFNode, point_cf: _CF, threshold: float, branching: int):
    """Insert into the subtree; returns a (left, right) pair when this
    node split, else None."""
    if node.leaf:
        if node.entries:
            idx = _nearest_entry(node.entries, point_cf.centroid())
            if node.entries[idx].merged_radius(point_cf) <= threshold:
                node.entries[idx].absorb(point_cf)
                return None
        node.entries.append(point_cf)
    else:
        idx = _nearest_entry(node.entries, point_cf.centroid())
        entry = node.entries[idx]
        split = _insert_cf(entry.child, point_cf, threshold, branching)
        if split is None:
            entry.absorb(point_cf)
            return None
        node.entries[idx : idx + 1] = list(split)
    if len(node.entries) > branching:
        return _split_node(node, branching)
    return None


def _leaf_entries(node: _CFNode) -> list[_CF]:
    if node.leaf:
        return list(node.entries)
    out: list[_CF] = []
    for entry in node.entries:
        out.extend(_leaf_entries(entry.child))
    return out


def birch(X, k: int, threshold: float | None = None, branching: int = 50) -> Assignment:
    """Single-pass CF-tree condensation, then ward over leaf entries.

    ``threshold`` is a fraction of the data radius (max distance to the
    global centroid), default 0.05, so one setting works across raw
    count scales.  The absolute radius bound is threshold * radius.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    _check_k(k, n)
    if threshold is None:
        threshold = 0.05
    if threshold <= 0:
        raise ClusterError(f"threshold must be positive, got {threshold}")
    if branching < 2:
        raise ClusterError(f"branching must be at least 2, got {branching}")

    radius = float(np.sqrt(_sq_dists(X, X.mean(axis=0)[None, :])).max())
    abs_threshold = threshold * radius

    root = _CFNode(leaf=True)
    for row in X:
        split = _insert_cf(root, _CF.of_point(row), abs_threshold, branching)
        if split is not None:
            new_root = _CFNode(leaf=False)
            new_root.entries = list(split)
            root = new_root

    entries = _leaf_entries(root)
    if k > len(entries):
        raise ClusterError(
            f"k={k} exceeds the {len(entries)} leaf entries the CF tree produced; "
            "lower k or the threshold"
        )

    centroids = np.array([e.centroid() for e in entries])
    grouping = agglomerative(centroids, k, linkage="ward")
    final = np.zeros((k, X.shape[1]))
    weights = np.zeros(k)
    for entry, cid in zip(entries, grouping.labels):
        final[cid] += entry.ls
        weights[cid] += entry.n
    final /= weights[:, None]

    raw = np.argmin(_sq_dists(X, final), axis=1)
    remap: dict[int, int] = {}
    labels = []
    for v in raw:
        v = int(v)
        if v not in remap:
            remap[v] = len(remap)
        labels.append(remap[v])
    return Assignment(labels=tuple(labels), k=len(remap))


# --- DBSCAN ------------------------------------------------------------------


def dbscan(X, eps: float, min_pts: int = 5) -> Assignment:
    """Density clustering; core iff >= min_pts neighbors within eps
    (self included).

    Clusters are connected components of the core-core reachability
    graph, numbered by their lowest core row index.  Border points
    join the cluster of their nearest core neighbor (ties to the lower
    row index), which makes the outcome independent of row order.
    Unreachable points are noise (-1).
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if eps <= 0:
        raise ClusterError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ClusterError(f"min_pts must be at least 1, got {min_pts}")

    dist = np.sqrt(_sq_dists(X, X))
    within = dist <= eps
    core = within.sum(axis=1) >= min_pts
    core_idx = np.flatnonzero(core)

    labels = np.full(n, -1, dtype=np.int64)
    next_id = 0
    for start in core_idx:
        if labels[start] != -1:
            continue
        stack = [int(start)]
        labels[start] = next_id
        while stack:
            p = stack.pop()
            for q in np.flatnonzero(within[p] & core):
                if labels[q] == -1:
                    labels[q] = next_id
                    stack.append(int(q))
        next_id += 1

    if core_idx.size:
        border = np.flatnonzero(~core & within[:, core_idx].any(axis=1))
        for p in border:
            cands = dist[p, core_idx]
            reach = cands <= eps
            best = core_idx[reach][int(np.argmin(cands[reach]))]
            labels[p] = labels[best]

    return Assignment(labels=tuple(int(v) for v in labels), k=next_id)


# --- Gaussian mixture ---------------------------------------------------------


def _log_gaussian(X: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """n×k log densities for diagonal-covariance components."""
    n, d = X.shape
    out = np.empty((n, means.shape[0]))
    for j in range(means.shape[0]):
        gap = X - means[j]
        out[:, j] = -0.5 * (
            d * math.log(2.0 * math.pi)
            + np.log(variances[j]).sum()
            + ((gap * gap) / variances[j]).sum(axis=1)
        )
    return out


def gmm(
    X,
    k: int,
    seed: int,
    max_iter: int = 200,
    tol: float = 1e-6,
    reg_floor: float = 1e-6,
) -> tuple[GmmModel, Assignment]:
    """EM for a diagonal-covariance mixture, seeded from k-means.

    Responsibilities are computed in log space; the total log
    likelihood must not decrease by more than 1e-8 between iterations
    (slack for the variance floor projection).
    """
    X = _as_matrix(X)
    n, d = X.shape
    _check_k(k, n)
    if reg_floor <= 0:
        raise ClusterError(f"reg_floor must be positive, got {reg_floor}")

    _, init = kmeans(X, k, seed)
    init_labels = np.array(init.labels)
    means = np.empty((k, d))
    variances = np.empty((k, d))
    weights = np.empty(k)
    global_var = np.maximum(X.var(axis=0), reg_floor)
    for j in range(k):
        rows = X[init_labels == j]
        if rows.shape[0] == 0:
            means[j] = X.mean(axis=0)
            variances[j] = global_var
            weights[j] = 1.0 / n  # tiny but alive; renormalized below
        else:
            means[j] = rows.mean(axis=0)
            variances[j] = np.maximum(rows.var(axis=0), reg_floor)
            weights[j] = rows.shape[0] / n
    weights /= weights.sum()

    def e_step() -> tuple[float, np.ndarray]:
        with np.errstate(divide="ignore"):  # dead components carry weight 0
            log_w = np.log(weights)
        log_prob = _log_gaussian(X, means, variances) + log_w[None, :]
        row_max = log_prob.max(axis=1, keepdims=True)
        lse = row_max[:, 0] + np.log(np.exp(log_prob - row_max).sum(axis=1))
        return float(lse.sum()), np.exp(log_prob - lse[:, None])

    prev_ll = -math.inf
    for _ in range(max_iter):
        ll, resp = e_step()
        if ll < prev_ll - 1e-8 * max(1.0, abs(prev_ll)):
            raise ClusterError(
                f"log-likelihood fell from {prev_ll!r} to {ll!r}; EM step is broken"
            )
        converged = prev_ll != -math.inf and ll - prev_ll < tol
        prev_ll = ll
        if converged:
            break

        mass = resp.sum(axis=0)
        for j in range(k):
            if mass[j] < 1e-12:
                # Dead component: keep its shape, it simply stops moving.
                continue
            means[j] = resp[:, j] @ X / mass[j]
            gap = X - means[j]
            variances[j] = np.maximum(resp[:, j] @ (gap * gap) / mass[j], reg_floor)
        weights = np.maximum(mass / n, 0.0)
        weights /= weights.sum()
    else:
        # Ran out of iterations after an M-step; refresh the posterior
        # so labels and log_likelihood describe the returned parameters.
        prev_ll, resp = e_step()

    model = GmmModel(
        weights=weights, means=means, variances=variances, log_likelihood=prev_ll
    )
    labels = np.argmax(resp, axis=1)
    return model, Assignment(labels=tuple(int(v) for v in labels), k=k)


# --- Validity indices ----------------------------------------------------------


def _validated_partition(X: np.ndarray, assignment: Assignment, allow_noise: bool):
    if len(assignment.labels) != X.shape[0]:
        raise ClusterError(
            f"{len(assignment.labels)} labels for {X.shape[0]} rows"
        )
    labels = np.array(assignment.labels)
    if not allow_noise and (labels == -1).any():
        raise ClusterError("noise labels present; filter them before scoring")
    return labels


def calinski_harabasz(X, assignment: Assignment) -> float:
    """Between/within dispersion ratio; +inf when W = 0 (a sentinel,
    reported, never a crash)."""
    X = _as_matrix(X)
    labels = _validated_partition(X, assignment, allow_noise=False)
    k = assignment.k
    n = X.shape[0]
    if k < 2:
        raise ClusterError(f"Calinski-Harabasz needs k >= 2, got k={k}")
    if n <= k:
        raise ClusterError(f"Calinski-Harabasz needs n > k, got n={n}, k={k}")
    overall = X.mean(axis=0)
    between = 0.0
    within = 0.0
    for cid in range(k):
        rows = X[labels == cid]
        if rows.shape[0] == 0:
            continue
        center = rows.mean(axis=0)
        gap = center - overall
        between += rows.shape[0] * float(gap @ gap)
        within += float(((rows - center) ** 2).sum())
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


def silhouette(X, assignment: Assignment) -> float:
    """Mean silhouette over non-noise points; singleton clusters
    contribute 0 by convention.  Exact O(n^2) distances."""
    X = _as_matrix(X)
    labels = _validated_partition(X, assignment, allow_noise=True)
    keep = labels != -1
    excluded = int((~keep).sum())
    if excluded:
        logger.info(
            "silhouette: excluding %d noise points (%.1f%% of %d rows)",
            excluded, 100.0 * excluded / labels.size, labels.size,
        )
    X = X[keep]
    labels = labels[keep]
    n = X.shape[0]
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ClusterError(f"silhouette needs at least 2 clusters, got {uniq.size}")
    counts = {int(c): int((labels == c).sum()) for c in uniq}
    if all(v == 1 for v in counts.values()):
        raise ClusterError("all clusters are singletons; silhouette undefined")
    if uniq.size > n - 1:
        raise ClusterError(f"silhouette needs k <= n-1, got k={uniq.size}, n={n}")

    dist = _exact_dists(X)
    scores = np.zeros(n)
    sums = {int(c): dist[:, labels == c].sum(axis=1) for c in uniq}
    for i in range(n):
        own = int(labels[i])
        if counts[own] == 1:
            continue  # convention: s = 0
        a = sums[own][i] / (counts[own] - 1)
        b = min(sums[int(c)][i] / counts[int(c)] for c in uniq if int(c) != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())
