"""Estimator-style facade over the extraction model and template clusterer.

These classes follow the scikit-learn protocol (``get_params`` /
``set_params``, ``fit`` / ``predict`` / ``transform``, trailing-underscore
fitted attributes) without depending on scikit-learn itself, so the model
drops into pipelines, grid searches, and cross-validation harnesses that
duck-type against that interface.
"""

from __future__ import annotations

import inspect
from typing import Optional

import numpy as np

from .editor import LabelRecord, LabeledTable
from .errors import SchemaError
from .extract import (
    ModelParams,
    TableRegion,
    detect_cells,
    detect_tables,
)
from .finetune import detection_prf, finetune_model
from .geometry import BBox
from .layout import PageLayout
from .structure import TableGrid, build_grid
from .templates import cluster_templates, embed_page


def check_pages(X) -> list[PageLayout]:
    if isinstance(X, PageLayout):
        raise SchemaError("expected a sequence of PageLayout, got a single page")
    pages = list(X)
    for i, p in enumerate(pages):
        if not isinstance(p, PageLayout):
            raise SchemaError(f"X[{i}] is not a PageLayout")
    return pages


def check_embedding_matrix(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise SchemaError(f"expected a 2-d embedding matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise SchemaError("embedding matrix contains non-finite values")
    return arr


class _ParamsMixin:
    """get_params/set_params over the __init__ signature, sklearn-style."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [n for n in sig.parameters if n != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class TableDetector(_ParamsMixin):
    """Table extraction as a fit/predict estimator.

    ``fit(X, y)`` takes pages and their true tables (per page: a list of
    (bbox, grid) pairs, grid optional) and refits the detection weights,
    cell-cut parameters, and threshold. ``predict`` returns detected regions
    per page and ``transform`` the extracted grids.
    """

    def __init__(
        self,
        weights: Optional[tuple] = None,
        bias: float = -4.0,
        detect_threshold: float = 0.55,
        col_gap_min: float = 8.0,
        row_gap_min: float = 8.0,
        valley_frac: float = 0.2,
    ):
        self.weights = weights
        self.bias = bias
        self.detect_threshold = detect_threshold
        self.col_gap_min = col_gap_min
        self.row_gap_min = row_gap_min
        self.valley_frac = valley_frac

    # -- parameter plumbing -------------------------------------------------

    def _initial_params(self) -> ModelParams:
        weights = self.weights
        if weights is None:
            from .registry import BASE_PARAM_SETS

            weights = BASE_PARAM_SETS["base-balanced"].weights
        return ModelParams(
            weights=tuple(weights),
            bias=self.bias,
            detect_threshold=self.detect_threshold,
            col_gap_min=self.col_gap_min,
            row_gap_min=self.row_gap_min,
            valley_frac=self.valley_frac,
            version_id="estimator-init",
        )

    def _fitted_params(self) -> ModelParams:
        if not hasattr(self, "params_"):
            return self._initial_params()
        return self.params_

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y) -> "TableDetector":
        pages = check_pages(X)
        if len(pages) != len(y):
            raise SchemaError(f"X has {len(pages)} pages but y has {len(y)} entries")
        records = []
        layouts = {}
        for page, truth in zip(pages, y):
            tables = []
            for item in truth:
                box, grid = item if isinstance(item, tuple) else (item, None)
                if not isinstance(box, BBox):
                    box = BBox.from_list(list(box))
                region = TableRegion(f"t{len(tables)}", box, 1.0)
                if grid is None:
                    grid = TableGrid(region.table_id, box, 1, 1, [])
                tables.append(LabeledTable(region=region, grid=grid))
            records.append(
                LabelRecord(
                    page_id=page.page_id,
                    model_version="estimator-init",
                    tables=tables,
                    initial_tables=[],
                    status="submitted",
                )
            )
            layouts[page.page_id] = page
        params, metrics = finetune_model(
            records, layouts, self._initial_params(), "estimator-fit"
        )
        self.params_ = params
        self.weights_ = params.weights
        self.bias_ = params.bias
        self.detect_threshold_ = params.detect_threshold
        self.fit_metrics_ = metrics
        return self

    def predict(self, X) -> list[list[TableRegion]]:
        params = self._fitted_params()
        return [detect_tables(params, p) for p in check_pages(X)]

    def transform(self, X) -> list[list[TableGrid]]:
        params = self._fitted_params()
        out = []
        for page in check_pages(X):
            regions = detect_tables(params, page)
            out.append(
                [build_grid(r, detect_cells(params, page, r), page) for r in regions]
            )
        return out

    def fit_predict(self, X, y) -> list[list[TableRegion]]:
        return self.fit(X, y).predict(X)

    def score(self, X, y) -> float:
        """Detection F1 at IoU 0.5 against per-page truth boxes."""
        pages = check_pages(X)
        detections = {}
        truths = {}
        for page, truth in zip(pages, y):
            detections[page.page_id] = [r.bbox for r in detect_tables(self._fitted_params(), page)]
            boxes = []
            for item in truth:
                box = item[0] if isinstance(item, tuple) else item
                boxes.append(box if isinstance(box, BBox) else BBox.from_list(list(box)))
            truths[page.page_id] = boxes
        return detection_prf(detections, truths)[2]


class LayoutEmbedder(_ParamsMixin):
    """Stateless transformer: pages (with optional detections) to embeddings."""

    def __init__(self):
        pass

    def fit(self, X, y=None) -> "LayoutEmbedder":
        return self

    def transform(self, X) -> np.ndarray:
        rows = []
        for item in X:
            page, regions = item if isinstance(item, tuple) else (item, [])
            if not isinstance(page, PageLayout):
                raise SchemaError("each item must be a PageLayout or (page, regions)")
            rows.append(embed_page(page, regions))
        return np.vstack(rows) if rows else np.empty((0, 0))

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform(X)


class TemplateClusterer(_ParamsMixin):
    """Deterministic average-linkage clustering over embedding rows.

    After ``fit``, ``labels_`` holds the template id per row and
    ``medoid_indices_`` the row index of each template's medoid.
    """

    def __init__(self, cut: float = 0.35):
        self.cut = cut

    def fit(self, X, y=None) -> "TemplateClusterer":
        arr = check_embedding_matrix(X)
        keyed = {f"{i:08d}": arr[i] for i in range(arr.shape[0])}
        assignments = cluster_templates(keyed, self.cut)
        labels = np.zeros(arr.shape[0], dtype=int)
        distance = np.zeros(arr.shape[0])
        for a in assignments:
            labels[int(a.page_id)] = a.template_id
            distance[int(a.page_id)] = a.distance_to_medoid
        self.labels_ = labels
        self.distance_to_medoid_ = distance
        medoids = {}
        for a in assignments:
            if a.distance_to_medoid == 0.0 and a.template_id not in medoids:
                medoids[a.template_id] = int(a.page_id)
        self.medoid_indices_ = np.array(
            [medoids[t] for t in sorted(medoids)], dtype=int
        )
        self.n_templates_ = len(self.medoid_indices_)
        return self

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_
