"""Layout embeddings, template clustering, and label recommendations.

Pages are embedded as projection-profile histograms plus coarse table-shape
statistics, clustered with deterministic average-linkage agglomeration under
cosine distance, and each template contributes up to two label suggestions:
its lowest-confidence page (impact, red tag) and its highest-confidence page
(easy, yellow tag).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .extract import TableRegion
from .geometry import interval_overlap
from .layout import PageLayout

HIST_BINS = 32
EMBED_DIM = 2 * HIST_BINS + 4
DEFAULT_CUT = 0.35

KIND_IMPACT = "impact"  # lowest confidence: most model benefit, red tag
KIND_EASY = "easy"      # highest confidence: quick to confirm, yellow tag


@dataclass(frozen=True)
class TemplateAssignment:
    page_id: str
    template_id: int
    distance_to_medoid: float


@dataclass(frozen=True)
class Recommendation:
    page_id: str
    template_id: int
    kind: str


def _profile(spans: list[tuple[float, float]], extent: float) -> np.ndarray:
    hist = np.zeros(HIST_BINS)
    if extent <= 0:
        return hist
    width = extent / HIST_BINS
    for lo, hi in spans:
        for b in range(HIST_BINS):
            ov = interval_overlap((lo, hi), (b * width, (b + 1) * width))
            if ov > 0:
                hist[b] += ov
    norm = float(np.linalg.norm(hist))
    return hist / norm if norm > 0 else hist


def embed_page(p: PageLayout, regions: Sequence[TableRegion]) -> np.ndarray:
    """Deterministic layout embedding; unit L2 norm, all-zero for empty pages.

    Composition: 32-bin x-projection histogram of token coverage, 32-bin
    y-projection histogram, then [table count / 4 clamped to 1, mean table
    width fraction, mean table height fraction, ruling density clamped to 1].
    Histogram bins are fractions of the page size, so a uniformly scaled page
    embeds identically.
    """
    x_hist = _profile([(t.bbox.x0, t.bbox.x1) for t in p.tokens], p.width)
    y_hist = _profile([(t.bbox.y0, t.bbox.y1) for t in p.tokens], p.height)
    if regions:
        mean_w = sum(r.bbox.width for r in regions) / (len(regions) * p.width)
        mean_h = sum(r.bbox.height for r in regions) / (len(regions) * p.height)
    else:
        mean_w = mean_h = 0.0
    ruling_len = sum(
        max(r.bbox.width, r.bbox.height) for r in p.rulings
    )
    extras = np.array(
        [
            min(1.0, len(regions) / 4.0),
            mean_w,
            mean_h,
            min(1.0, ruling_len / (2.0 * (p.width + p.height))),
        ]
    )
    vec = np.concatenate([x_hist, y_hist, extras])
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity; all-zero vectors are distance 0 from each other
    and 1 from everything else."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0 and nb == 0:
        return 0.0
    if na == 0 or nb == 0:
        return 1.0
    sim = float(np.dot(a, b)) / (na * nb)
    return max(0.0, 1.0 - sim)


def _cluster(
    embeddings: Mapping[str, np.ndarray], cut: float
) -> tuple[list[list[str]], list[float]]:
    """Average-linkage agglomeration; returns clusters (sorted page ids) and the
    merge-time linkage distances (the audit trace)."""
    if not 0 < cut < 2:
        raise ValueError("cut must be in (0, 2)")
    ids = sorted(embeddings)
    n = len(ids)
    dist = {
        (ids[i], ids[j]): cosine_distance(embeddings[ids[i]], embeddings[ids[j]])
        for i in range(n)
        for j in range(i + 1, n)
    }

    def pair_sum(a: list[str], b: list[str]) -> float:
        total = 0.0
        for x in a:
            for y in b:
                total += dist[(x, y)] if (x, y) in dist else dist[(y, x)]
        return total

    clusters: list[list[str]] = [[pid] for pid in ids]
    sums: dict[tuple[int, int], float] = {}
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            sums[(i, j)] = pair_sum(clusters[i], clusters[j])
    trace: list[float] = []

    while len(clusters) > 1:
        best: Optional[tuple[float, str, str, int, int]] = None
        for (i, j), s in sums.items():
            avg = s / (len(clusters[i]) * len(clusters[j]))
            key = (avg, clusters[i][0], clusters[j][0])
            if best is None or key < best[:3]:
                best = (avg, clusters[i][0], clusters[j][0], i, j)
        avg, _, _, i, j = best
        if avg > cut:
            break
        trace.append(avg)
        merged = sorted(clusters[i] + clusters[j])
        keep, drop = i, j
        new_clusters = [c for k, c in enumerate(clusters) if k not in (keep, drop)]
        new_sums: dict[tuple[int, int], float] = {}
        remap = {}
        for k in range(len(clusters)):
            if k in (keep, drop):
                continue
            remap[k] = len(remap)
        for (a, b), s in sums.items():
            if keep in (a, b) or drop in (a, b):
                continue
            new_sums[(remap[a], remap[b])] = s
        new_clusters.append(merged)
        mi = len(new_clusters) - 1
        for k in range(len(clusters)):
            if k in (keep, drop):
                continue
            s = sums.get((min(k, keep), max(k, keep)), 0.0) + sums.get(
                (min(k, drop), max(k, drop)), 0.0
            )
            a, b = sorted((remap[k], mi))
            new_sums[(a, b)] = s
        clusters = new_clusters
        sums = new_sums

    clusters.sort(key=lambda c: c[0])
    return clusters, trace


def cluster_templates(
    embeddings: Mapping[str, np.ndarray], cut: float = DEFAULT_CUT
) -> list[TemplateAssignment]:
    """Assign every page to a template; deterministic for any input order.

    Clusters merge while the closest average-linkage pair is within ``cut``,
    ties broken by smallest member page_id. Template ids are numbered by each
    cluster's smallest page_id; the medoid is the member minimizing summed
    in-cluster distance (ties to the lexicographically first page).
    """
    if not embeddings:
        return []
    clusters, _ = _cluster(embeddings, cut)
    out: list[TemplateAssignment] = []
    for tid, members in enumerate(clusters):
        medoid = None
        medoid_cost = None
        for pid in members:
            cost = sum(
                cosine_distance(embeddings[pid], embeddings[other])
                for other in members
                if other != pid
            )
            if medoid is None or (cost, pid) < (medoid_cost, medoid):
                medoid, medoid_cost = pid, cost
        for pid in members:
            out.append(
                TemplateAssignment(
                    page_id=pid,
                    template_id=tid,
                    distance_to_medoid=cosine_distance(
                        embeddings[pid], embeddings[medoid]
                    ),
                )
            )
    out.sort(key=lambda a: a.page_id)
    return out


def clustering_trace(
    embeddings: Mapping[str, np.ndarray], cut: float = DEFAULT_CUT
) -> list[float]:
    """Linkage distances at each executed merge, for auditing against cut."""
    if not embeddings:
        return []
    _, trace = _cluster(embeddings, cut)
    return trace


def recommend_labels(
    assignments: Sequence[TemplateAssignment],
    confidences: Mapping[str, Optional[float]],
    labelled: frozenset[str] | set[str] = frozenset(),
) -> list[Recommendation]:
    """Per-template impact (argmin confidence) and easy (argmax) suggestions.

    Pages without a confidence (no tables) and already-labelled pages are
    ineligible. A template with a single eligible page yields only the impact
    suggestion; with two or more, impact and easy are distinct pages. Ties
    break to the lexicographically first page id.
    """
    by_template: dict[int, list[str]] = {}
    for a in assignments:
        if a.page_id not in confidences:
            raise KeyError(f"no confidence entry for page {a.page_id}")
        if a.page_id in labelled or confidences[a.page_id] is None:
            continue
        by_template.setdefault(a.template_id, []).append(a.page_id)

    out: list[Recommendation] = []
    for tid in sorted(by_template):
        eligible = sorted(by_template[tid])
        impact = min(eligible, key=lambda pid: (confidences[pid], pid))
        out.append(Recommendation(page_id=impact, template_id=tid, kind=KIND_IMPACT))
        rest = [pid for pid in eligible if pid != impact]
        if rest:
            easy = min(rest, key=lambda pid: (-confidences[pid], pid))
            out.append(Recommendation(page_id=easy, template_id=tid, kind=KIND_EASY))
    return out
