"""Streaming change detector: epochs, incremental scoring, Page-Hinkley alarms.

Each epoch fixes a reference window, fits the projection and factor tree on
it, then slides the test window one sample at a time.  Scores go through a
Page-Hinkley test; on alarm the detector reports the change and starts a new
epoch from the samples that follow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from . import divergence, factorization, sampled_pca
from .config import NORMALIZED_PH_DELTA, DetectorConfig
from .core import DimensionMismatchError, Sample, SeriesMeta, WindowPair, minmax_normalize
from .divergence import BoundsExceeded, DivergenceState
from .factorization import FactorTree, SketchBasis
from .sampled_pca import DegenerateWindowError, ProjectionModel

log = logging.getLogger(__name__)


@dataclass
class PageHinkleyState:
    count: int = 0
    running_mean: float = 0.0
    cumulative: float = 0.0
    minimum: float = 0.0


def ph_update(
    state: PageHinkleyState, score: float, lam: float, delta: Optional[float] = None
) -> tuple[PageHinkleyState, bool, float]:
    """One Page-Hinkley step against the mean of previously seen scores.

    ``delta=None`` uses 0.005 x the running mean as the drift allowance.
    """
    if not math.isfinite(score):
        raise ValueError("score must be finite")
    if state.count == 0:
        state.running_mean = score
    if delta is None:
        delta = 0.005 * abs(state.running_mean)
    state.cumulative += score - state.running_mean - delta
    state.minimum = min(state.minimum, state.cumulative)
    state.count += 1
    state.running_mean += (score - state.running_mean) / state.count
    statistic = state.cumulative - state.minimum
    return state, statistic > lam, statistic


class ScoreNormalizer:
    """Expresses scores relative to the epoch's early baseline.

    The first ``warmup`` scores of an epoch fix a baseline mean and spread;
    later scores become ``|score - mean| / spread``.  During warm-up the
    output is 0.  Consecutive sliding-window scores are strongly correlated,
    so their spread understates how far a stationary score wanders; the
    spread is therefore floored at 5% of the mean's magnitude.

    The absolute value matters: a reference window projected through a PCA
    fitted on itself has inflated spread, so the baseline carries a positive
    offset, and a change that widens the test distribution can lower the
    raw score.  Either direction is a departure from the epoch's history.
    """

    def __init__(self, warmup: int):
        self.warmup = max(2, warmup)
        self._seen: list[float] = []
        self.mean = 0.0
        self.spread = 1.0

    @property
    def ready(self) -> bool:
        return len(self._seen) >= self.warmup

    def __call__(self, score: float) -> float:
        if not self.ready:
            self._seen.append(score)
            if self.ready:
                arr = np.asarray(self._seen)
                self.mean = float(arr.mean())
                self.spread = max(float(arr.std()), 0.05 * abs(self.mean), 1e-12)
            return 0.0
        return abs(score - self.mean) / self.spread


@dataclass
class ChangeEvent:
    t: int
    score: float
    ph_statistic: float
    epoch_start: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    t: int
    score: float
    ph_statistic: float
    alarm: bool

    def to_dict(self) -> dict:
        return {"t": self.t, "score": self.score, "ph_statistic": self.ph_statistic, "alarm": self.alarm}


@dataclass
class Epoch:
    """Everything fixed for one reference window."""

    index: int
    t_start: int
    windows: WindowPair
    model: ProjectionModel
    tree: FactorTree
    state: Optional[DivergenceState]
    col_lo: np.ndarray = field(repr=False, default=None)
    col_hi: np.ndarray = field(repr=False, default=None)
    degenerate: bool = False


class LightDetector:
    """Change detector for n-dimensional streams.

    Parameters
    ----------
    n : int
        Dimension of every sample.
    config : DetectorConfig
    meta : SeriesMeta, optional
        Known per-dimension bounds.  Used for input normalisation and, when
        ``bounds_source`` is configured, for the PCA-space bound R.
    """

    def __init__(self, n: int, config: Optional[DetectorConfig] = None, meta: Optional[SeriesMeta] = None):
        self.n = n
        self.config = config or DetectorConfig()
        self.meta = meta
        if meta is not None and meta.n != n:
            raise DimensionMismatchError(n, meta.n)
        if self.config.normalize_input and meta is None:
            raise ValueError("normalize_input needs configured bounds (meta)")
        self.t = 0
        self.t_start = 0
        self.epoch: Optional[Epoch] = None
        self.epochs_started = 0
        self.events: list[ChangeEvent] = []
        self.last_record: Optional[StepRecord] = None
        self._buffer: list[np.ndarray] = []
        self._ph = PageHinkleyState()
        self._norm = ScoreNormalizer(self.config.m // 2)
        self._degenerate_steps = 0
        self._ph_delta = self.config.ph.delta
        if self._ph_delta is None and self.config.normalize_scores:
            self._ph_delta = NORMALIZED_PH_DELTA

    # -- epoch setup -------------------------------------------------------

    def _r_bound(self, col_means, col_lo, col_hi) -> float:
        if self.meta is not None and self.meta.bounds_source == "configured" and not self.config.normalize_input:
            col_lo = np.minimum(col_lo, self.meta.lower_bounds - col_means)
            col_hi = np.maximum(col_hi, self.meta.upper_bounds - col_means)
        return float(np.sqrt(np.sum(np.maximum(col_lo**2, col_hi**2))))

    def start_epoch(self, rows: np.ndarray, t_start: int) -> Epoch:
        cfg = self.config
        rows = np.asarray(rows, dtype=float)
        windows = WindowPair.from_rows(rows, t_start=t_start)
        ref_c, means = sampled_pca.center_columns(windows.ref)
        test_c = windows.test - means
        col_lo = np.minimum(ref_c.min(axis=0), test_c.min(axis=0))
        col_hi = np.maximum(ref_c.max(axis=0), test_c.max(axis=0))
        bound = self._r_bound(means, col_lo, col_hi)
        index = self.epochs_started
        self.epochs_started += 1
        seeds = np.random.SeedSequence([cfg.factor.seed or 0, index]).generate_state(2)

        try:
            if cfg.variant == "np":
                model = ProjectionModel(
                    col_means=means, selected_cols=np.arange(self.n), v_k=np.eye(self.n),
                    singular_values=np.ones(self.n), variance_fraction=1.0, r_bound=bound,
                )
                if not np.any(ref_c):
                    raise DegenerateWindowError("reference window is constant")
                ref_trans = ref_c
            else:
                model, ref_trans = sampled_pca.fit(
                    ref_c, c=cfg.pca.c, variance_fraction=cfg.pca.variance_fraction,
                    col_means=means, deterministic=cfg.pca.deterministic,
                    seed=None if cfg.pca.seed is None else int(cfg.pca.seed) + index,
                    r_bound=bound,
                )
        except DegenerateWindowError:
            log.info("epoch %d at t=%d: degenerate reference window", index, t_start)
            model = ProjectionModel.zero(means, r_bound=max(bound, 1.0))
            epoch = Epoch(index, t_start, windows, model, FactorTree(k=1), None, col_lo, col_hi, degenerate=True)
            self._degenerate_steps = 0
            return epoch

        test_trans = sampled_pca.transform(model, windows.test)
        if cfg.variant in ("light", "np") and model.k > 1:
            basis = None
            if not cfg.factor.exact:
                basis = SketchBasis.generate(len(ref_trans), cfg.factor.s1, cfg.factor.s2, seed=int(seeds[0]))
            tree = factorization.build_structure(ref_trans, bound, basis, exact=cfg.factor.exact)
        else:
            tree = FactorTree(k=model.k)

        ref_for_div = ref_trans
        m = len(ref_trans)
        if m > cfg.div.subsample_threshold:
            eps = cfg.div.subsample_threshold / m
            ref_for_div = divergence.subsample(ref_trans, eps, seed=int(seeds[1]))
        _, state = divergence.score(ref_for_div, test_trans, tree, 2.0 * bound, variant=cfg.variant)
        self._norm = ScoreNormalizer(cfg.m // 2)
        return Epoch(index, t_start, windows, model, tree, state, col_lo, col_hi)

    def _reset_epoch(self, t_start: int):
        self.t_start = t_start
        self.epoch = None
        self._buffer = []
        self._ph = PageHinkleyState()
        self._norm = ScoreNormalizer(self.config.m // 2)

    # -- streaming -----------------------------------------------------------

    @property
    def warm(self) -> bool:
        return self.epoch is not None

    def _prepare(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != self.n:
            raise DimensionMismatchError(self.n, values.size)
        if self.config.normalize_input:
            values = minmax_normalize(values, self.meta)
        return values

    def _raw_score(self, ep: Epoch, values: np.ndarray) -> float:
        centered = values - ep.model.col_means
        np.minimum(ep.col_lo, centered, out=ep.col_lo)
        np.maximum(ep.col_hi, centered, out=ep.col_hi)
        y = centered @ ep.model.v_k
        try:
            return divergence.update(ep.state, y)
        except BoundsExceeded:
            bound = max(self._r_bound(ep.model.col_means, ep.col_lo, ep.col_hi), float(np.abs(y).max()))
            log.debug("t=%d: refreshing R %.4g -> %.4g", self.t, ep.state.bound, bound)
            divergence.rescore(ep.state, bound)
            return divergence.update(ep.state, y)

    def step(self, values) -> Optional[ChangeEvent]:
        """Consume the next sample; return a ChangeEvent when an alarm fires."""
        values = self._prepare(values)
        self.t += 1
        self.last_record = None
        if self.epoch is None:
            self._buffer.append(values)
            if len(self._buffer) == 2 * self.config.m:
                self.epoch = self.start_epoch(np.array(self._buffer), self.t_start)
                self._buffer = []
            return None

        ep = self.epoch
        ep.windows.push(Sample(self.t, values))
        if ep.degenerate:
            self._degenerate_steps += 1
            self.last_record = StepRecord(self.t, 0.0, 0.0, False)
            if self._degenerate_steps % self.config.m == 0 and np.ptp(ep.windows.test, axis=0).any():
                self._reset_epoch(self.t)
            return None

        raw = self._raw_score(ep, values)
        fed = self._norm(raw) if self.config.normalize_scores else raw
        if self.config.normalize_scores and not self._norm.ready:
            self.last_record = StepRecord(self.t, raw, 0.0, False)
            return None
        self._ph, alarm, stat = ph_update(self._ph, fed, self.config.ph.lam, self._ph_delta)
        self.last_record = StepRecord(self.t, raw, stat, alarm)
        if not alarm:
            return None
        event = ChangeEvent(t=self.t, score=raw, ph_statistic=stat, epoch_start=self.t_start)
        self.events.append(event)
        self._reset_epoch(self.t)
        return event

    def run(self, rows: Iterable) -> Iterator[StepRecord]:
        """Feed rows in order, yielding a record for every scored step."""
        for row in rows:
            self.step(row)
            if self.last_record is not None:
                yield self.last_record


def detect(rows, config: DetectorConfig, meta: Optional[SeriesMeta] = None) -> tuple[list[ChangeEvent], list[StepRecord]]:
    rows = np.asarray(rows, dtype=float)
    det = LightDetector(rows.shape[1], config, meta)
    records = list(det.run(rows))
    return det.events, records


def calibrate(rows, config: DetectorConfig, safety: float = 1.5, meta: Optional[SeriesMeta] = None) -> dict:
    """Largest Page-Hinkley statistic over a change-free prefix.

    Runs with alarms disabled and recommends ``safety x`` the maximum as
    ``ph.lambda``.  Scores within an epoch are correlated over about m
    steps, so short prefixes understate the peak; a warning is logged
    below 10m scored steps.
    """
    rows = np.asarray(rows, dtype=float)
    if len(rows) <= 2 * config.m:
        raise ValueError(f"calibration needs more than 2m = {2 * config.m} rows")
    silent = config.replace(**{"ph.lambda": math.inf})
    det = LightDetector(rows.shape[1], silent, meta)
    stats = [rec.ph_statistic for rec in det.run(rows)]
    peak = max(stats) if stats else 0.0
    if len(stats) < 10 * config.m:
        log.warning("calibrating on %d scored steps (< 10m = %d); the threshold is likely too low",
                    len(stats), 10 * config.m)
    return {"max_statistic": peak, "recommended_lambda": safety * peak if peak > 0 else 1.0, "steps": len(stats)}
