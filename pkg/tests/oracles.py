"""Independent reference implementations used to check the package.

Everything here is deliberately written with different algorithms than
the library under test: one-sided Jacobi rotations instead of LAPACK
bidiagonalization, Gauss-Jordan normal equations instead of SVD-based
least squares, per-query python loops instead of one blocked GEMM, and
explicit threshold enumeration for error rates. Slow is fine; these run
on small instances.
"""

import numpy as np


def jacobi_svd(a, tol=1e-12, max_sweeps=60):
    """Full SVD via one-sided Jacobi column rotations.

    Returns (u, s, vt) with s descending, economy shapes. Accurate for
    the modest, well-scaled matrices used in tests; not meant for
    production sizes.
    """
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    transposed = m < n
    b = a.T.copy() if transposed else a.copy()
    rows, cols = b.shape
    v = np.eye(cols)

    for _ in range(max_sweeps):
        off = 0.0
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                app = float(b[:, p] @ b[:, p])
                aqq = float(b[:, q] @ b[:, q])
                apq = float(b[:, p] @ b[:, q])
                if abs(apq) <= tol * np.sqrt(app * aqq) or apq == 0.0:
                    continue
                off = max(off, abs(apq) / np.sqrt(app * aqq))
                zeta = (aqq - app) / (2.0 * apq)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                bp = b[:, p].copy()
                b[:, p] = c * bp - s * b[:, q]
                b[:, q] = s * bp + c * b[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if off == 0.0:
            break

    norms = np.sqrt(np.sum(b * b, axis=0))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    b = b[:, order]
    v = v[:, order]
    u = np.zeros_like(b)
    nonzero = norms > 0
    u[:, nonzero] = b[:, nonzero] / norms[nonzero]

    if transposed:
        return v, norms, u.T
    return u, norms, v.T


def gauss_solve(a, b):
    """Solve a square system by Gauss-Jordan elimination with partial
    pivoting. Raises if a pivot vanishes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("square matrix required")
    rhs = b.reshape(n, -1).copy()
    work = a.copy()
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(work[col:, col])))
        if abs(work[pivot, col]) < 1e-14:
            raise ValueError("singular system")
        if pivot != col:
            work[[col, pivot]] = work[[pivot, col]]
            rhs[[col, pivot]] = rhs[[pivot, col]]
        scale = work[col, col]
        work[col] /= scale
        rhs[col] /= scale
        for row in range(n):
            if row == col:
                continue
            factor = work[row, col]
            if factor != 0.0:
                work[row] -= factor * work[col]
                rhs[row] -= factor * rhs[col]
    return rhs.reshape(b.shape) if b.ndim > 1 else rhs[:, 0]


def normal_eq_lstsq(a, b):
    """Least squares through the normal equations.

    Tall systems solve (A'A)x = A'b; wide systems return the minimum-norm
    solution A'(AA')^-1 b. Only valid at full rank with decent
    conditioning; test instances are constructed to satisfy that.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] >= a.shape[1]:
        return gauss_solve(a.T @ a, a.T @ b)
    return a.T @ gauss_solve(a @ a.T, b)


def brute_knn_indices(queries, pool, k):
    """Per-query scan for the top-k pool rows by cosine similarity.

    Ties broken toward the lowest pool index via lexsort. Zero-norm rows
    score 0 against everything, matching the alignment contract.
    """
    queries = np.asarray(queries, dtype=np.float64)
    pool = np.asarray(pool, dtype=np.float64)
    m = pool.shape[0]
    pool_norms = np.sqrt(np.sum(pool * pool, axis=1))
    safe = np.where(pool_norms < 1e-12, 1.0, pool_norms)
    unit_pool = pool / safe[:, None]
    unit_pool[pool_norms < 1e-12] = 0.0
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for i, q in enumerate(queries):
        qn = np.sqrt(float(q @ q))
        uq = q / qn if qn >= 1e-12 else np.zeros_like(q)
        sims = unit_pool @ uq
        order = np.lexsort((np.arange(m), -sims))
        out[i] = order[:k]
    return out


def exhaustive_eer(target_scores, nontarget_scores):
    """Equal error rate by enumerating every distinct score threshold.

    Acceptance rule is score >= threshold. A sentinel above the maximum
    gives the (FAR=0, FRR=1) endpoint. When no threshold makes the rates
    exactly equal, interpolate linearly between the two thresholds where
    FAR-FRR changes sign.
    """
    tar = [float(v) for v in target_scores]
    non = [float(v) for v in nontarget_scores]
    if not tar or not non:
        raise ValueError("both trial lists must be non-empty")
    points = []
    thresholds = sorted(set(tar + non), reverse=True)
    far_prev, frr_prev = 0.0, 1.0
    points.append((far_prev, frr_prev))
    for t in thresholds:
        far = sum(1 for v in non if v >= t) / len(non)
        frr = sum(1 for v in tar if v < t) / len(tar)
        points.append((far, frr))
    for i, (far, frr) in enumerate(points):
        diff = far - frr
        if diff == 0.0:
            return far
        if diff > 0.0:
            pf, pr = points[i - 1]
            prev_diff = pf - pr
            alpha = -prev_diff / (diff - prev_diff)
            return pf + alpha * (far - pf)
    raise AssertionError("no crossing found")


def centroid_classify(features, labels, enroll_idx, test_idx):
    """Cosine nearest-centroid accuracy with python loops.

    Centroids come from enroll rows per class; ties resolve to the
    lexicographically smallest class label.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    classes = sorted({labels[i] for i in enroll_idx})
    centroids = {}
    for cls in classes:
        rows = [features[i] for i in enroll_idx if labels[i] == cls]
        centroids[cls] = np.mean(rows, axis=0)
    correct = 0
    for i in test_idx:
        best_cls, best_score = None, -np.inf
        for cls in classes:
            c = centroids[cls]
            nf = np.sqrt(float(features[i] @ features[i]))
            nc = np.sqrt(float(c @ c))
            score = 0.0 if nf < 1e-12 or nc < 1e-12 else float(features[i] @ c) / (nf * nc)
            if score > best_score:
                best_cls, best_score = cls, score
        if best_cls == labels[i]:
            correct += 1
    return correct / len(test_idx)


def gram_singular_values(a):
    """Singular values through the eigenvalues of the smaller Gram
    matrix, an independent route from any bidiagonal SVD."""
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    g = a @ a.T if m <= n else a.T @ a
    w = np.linalg.eigvalsh(g)
    w = np.clip(w, 0.0, None)
    return np.sqrt(w[::-1])


def tail_energy(a, rank):
    """Frobenius norm of the part of a rejected by the best rank-r
    approximation: the root of the discarded squared singular values."""
    s = gram_singular_values(a)
    tail = s[rank:]
    return float(np.sqrt(np.sum(tail * tail)))
