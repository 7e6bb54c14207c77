"""Shared plumbing for the policy estimators."""

import json
import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..autodiff import Adam, Tensor, default_dtype, load_checkpoint, make_schedule, save_checkpoint

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


class GrpEstimator(BaseEstimator):
    """Parameters live in ``self.params_`` (name -> Tensor), fixed by the hyper-parameters."""

    _schedule_kind = "halving"

    def _make_params(self, rng):
        raise NotImplementedError

    def _prepare(self, samples):
        """Stack samples into ``{shape_key: arrays}`` groups."""
        raise NotImplementedError

    def _batch_loss(self, group, idx):
        """Return ``(loss Tensor, metrics dict)`` for rows ``idx`` of ``group``."""
        raise NotImplementedError

    def _precision(self):
        return default_dtype(getattr(self, "dtype", "float64"))

    def _init(self):
        rng = np.random.default_rng(self.random_state)
        self._set_params(self._make_params(rng))
        return rng

    def _set_params(self, arrays):
        with self._precision():
            self.params_ = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}

    @property
    def n_parameters_(self):
        check_is_fitted(self, "params_")
        return int(sum(p.data.size for p in self.params_.values()))

    def _schedule(self):
        if self._schedule_kind == "halving":
            return make_schedule("halving", self.lr, period=self.lr_period)
        return make_schedule("exponential", self.lr, rate=self.lr_rate)

    def fit(self, samples, y=None):
        """Train from scratch on ``samples`` (y is ignored)."""
        samples = list(samples)
        if not samples:
            raise ValueError("cannot fit on an empty dataset")
        data = self._prepare(samples)
        rng = self._init()
        with self._precision():
            self._train(data, rng)
        return self

    def _train(self, data, rng):
        opt = Adam(self.params_.values(), self._schedule(), clip_norm=self.clip_norm)
        self.loss_curve_, self.metric_curves_ = [], {}
        for epoch in range(self.epochs):
            total, count, sums = 0.0, 0, {}
            for key, idx in minibatches({k: np.arange(g["n"]) for k, g in data.items()}, self.batch_size, rng):
                opt.zero_grad()
                loss, metrics = self._batch_loss(data[key], idx)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDivergedError(f"loss became {value} in epoch {epoch}")
                loss.backward()
                opt.step(epoch)
                total += value * len(idx)
                count += len(idx)
                for k, v in metrics.items():
                    sums[k] = sums.get(k, 0.0) + v * len(idx)
            self.loss_curve_.append(total / count)
            for k, v in sums.items():
                self.metric_curves_.setdefault(k, []).append(v / count)
            if self.verbose:
                log.info("epoch %d loss %.5f %s", epoch, total / count,
                         " ".join(f"{k}={v / count:.4f}" for k, v in sums.items()))

    def save(self, path):
        check_is_fitted(self, "params_")
        meta = {"class": type(self).__name__, "params": self.get_params()}
        save_checkpoint(path, {k: t.data for k, t in self.params_.items()}, json.loads(json.dumps(meta)))

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        if meta.get("class") != cls.__name__:
            raise ValueError(f"{path} holds a {meta.get('class')}, not a {cls.__name__}")
        model = cls(**meta["params"])
        expected = model._make_params(np.random.default_rng(0))
        if [(k, v.shape) for k, v in expected.items()] != [(k, v.shape) for k, v in arrays.items()]:
            raise ValueError(f"{path}: parameter layout does not match the stored configuration")
        model._set_params(arrays)
        return model


def minibatches(groups, batch_size, rng):
    """Shuffle within each group, chunk, then shuffle the chunk order.

    ``groups`` maps a shape key to an index array; all indices in a chunk
    share the key so they stack into one array.
    """
    chunks = []
    for key in sorted(groups):
        idx = rng.permutation(groups[key])
        chunks.extend((key, idx[i:i + batch_size]) for i in range(0, len(idx), batch_size))
    order = rng.permutation(len(chunks))
    return [chunks[i] for i in order]
