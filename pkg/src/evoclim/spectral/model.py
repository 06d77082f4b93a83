"""Fitted covariance-change model: smoothed deltas, their standard errors and predictions."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..grid import RegionPartition, ScenarioEnsemble
from ..mean_emulator import WarmingPath
from ..preprocess import SeasonalModel, compute_contrasts, deseasonalize
from .periodogram import baseline_periodogram, local_periodograms, n_half
from .smoothing import BandwidthParams, cross_validate_bandwidth, effective_weights, smoothing_matrix
from .whittle import (RoughFit, TransientBlocks, WhittleData, build_whittle_data, maximize_whittle,
                      profile_log_a)


@dataclass(frozen=True)
class SpectralChangeModel:
    """Smoothed ``delta_0, delta_1`` per location on the half grid ``omega_j = 2 pi j/M``.

    ``var_hat`` stacks ``(V00, V11, V01)`` of the smoothed estimates; ``rough_cov`` holds the
    frequency-independent covariance of the rough estimates.  ``log_a_hat`` is the baseline
    log spectrum profiled at the smoothed deltas, which is what predictions pair them with:
    the rough ``log a`` carries noise that offsets the rough deltas' noise.
    """

    block: int
    delta_hat: np.ndarray        # (2, L, H)
    var_hat: np.ndarray          # (3, L, H)
    delta_rough: np.ndarray      # (2, L, H)
    log_a_rough: np.ndarray      # (L, H)
    rough_cov: np.ndarray        # (3, L)
    region_of: np.ndarray        # (L,)
    bandwidths: dict = field(default_factory=dict)   # region -> (BandwidthParams, BandwidthParams)
    with_rate: bool = True
    log_a_hat: np.ndarray | None = None   # (L, H)

    @property
    def n_loc(self) -> int:
        return self.delta_hat.shape[1]

    @property
    def n_freq(self) -> int:
        return self.delta_hat.shape[2]

    @property
    def freqs(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_freq) / self.block

    def _interp(self, values: np.ndarray, omega) -> np.ndarray:
        """Evaluate half-grid ``values`` (``(..., H)``) at arbitrary frequencies by even folding."""
        w = np.mod(np.asarray(omega, float), 2 * np.pi)
        w = np.minimum(w, 2 * np.pi - w)
        flat = values.reshape(-1, values.shape[-1])
        grid = self.freqs
        out = np.stack([np.interp(w, grid, row) for row in flat])
        return out.reshape(values.shape[:-1] + w.shape)

    def delta_at(self, omega) -> np.ndarray:
        return self._interp(self.delta_hat, omega)

    def var_at(self, omega) -> np.ndarray:
        return self._interp(self.var_hat, omega)

    def select(self, locs) -> "SpectralChangeModel":
        locs = np.atleast_1d(locs)
        return SpectralChangeModel(self.block, self.delta_hat[:, locs], self.var_hat[:, locs],
                                   self.delta_rough[:, locs], self.log_a_rough[locs],
                                   self.rough_cov[:, locs], self.region_of[locs], self.bandwidths,
                                   self.with_rate, None if self.log_a_hat is None else self.log_a_hat[locs])

    # ------------------------------------------------------------------ persistence
    _ARRAYS = ("delta_hat", "var_hat", "delta_rough", "log_a_rough", "rough_cov", "log_a_hat")

    def save(self, path) -> None:
        """Binary layout: uint64 header length, JSON header, then float64 arrays (all LE)."""
        offset, meta, chunks = 0, {}, []
        for name in self._ARRAYS:
            if getattr(self, name) is None:
                continue
            a = np.ascontiguousarray(getattr(self, name), dtype="<f8")
            meta[name] = {"shape": list(a.shape), "offset": offset}
            chunks.append(a.tobytes())
            offset += a.nbytes
        header = {"block": self.block, "with_rate": self.with_rate,
                  "region_of": self.region_of.tolist(), "arrays": meta,
                  "bandwidths": {str(r): [b.to_list() for b in pair] for r, pair in self.bandwidths.items()}}
        hb = json.dumps(header).encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(hb)))
            fh.write(hb)
            for c in chunks:
                fh.write(c)

    @classmethod
    def load(cls, path) -> "SpectralChangeModel":
        raw = Path(path).read_bytes()
        (hlen,) = struct.unpack("<Q", raw[:8])
        try:
            header = json.loads(raw[8:8 + hlen])
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a spectral model file") from exc
        payload = memoryview(raw)[8 + hlen:]
        arrays = {}
        for name, m in header["arrays"].items():
            count = int(np.prod(m["shape"]))
            arrays[name] = np.frombuffer(payload, "<f8", count, m["offset"]).reshape(m["shape"]).copy()
        bw = {int(r): tuple(BandwidthParams(*b) for b in pair) for r, pair in header["bandwidths"].items()}
        return cls(int(header["block"]), region_of=np.asarray(header["region_of"], np.int64),
                   bandwidths=bw, with_rate=bool(header["with_rate"]), **arrays)


# --------------------------------------------------------------------------- assembly

def whittle_data_from_ensemble(ensemble: ScenarioEnsemble, seasonal: SeasonalModel,
                               warming: Mapping[str, WarmingPath], block: int,
                               exclude: tuple = ()) -> WhittleData:
    """Contrast and baseline periodograms of an ensemble with per-location warming at blocks.

    ``warming`` maps scenario labels to per-location warming paths covering each run.
    """
    base = ensemble.baseline
    xb = deseasonalize(base.runs[0], seasonal)
    terms = []
    for runs in ensemble.transient:
        if runs.label in exclude:
            continue
        q = compute_contrasts(runs.runs, seasonal)
        per = local_periodograms(q, block, runs.label)
        d, r = warming[runs.label].at(per.midpoints)
        terms.append(TransientBlocks(per, d, r))
    return build_whittle_data(terms, baseline_periodogram(xb, block))


def standard_errors(rough_cov: np.ndarray, w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    """Covariance ``(V00, V11, V01)`` of smoothed estimates, ``(3, L, H)``.

    ``w0`` and ``w1`` are the effective (edge-folded) smoothers for ``i = 0, 1``; the rough
    estimates at distinct fitted ordinates are independent with covariance ``rough_cov``.
    """
    s00 = np.sum(w0 * w0, axis=1)
    s11 = np.sum(w1 * w1, axis=1)
    s01 = np.sum(w0 * w1, axis=1)
    c = np.asarray(rough_cov, float)
    return np.stack([c[0][:, None] * s00, c[1][:, None] * s11, c[2][:, None] * s01])


def fit_spectral_model(data: WhittleData, partition: RegionPartition | None = None,
                       bandwidths=None, with_rate: bool = True, grid=None,
                       rough: RoughFit | None = None, bias_correct: bool = True) -> SpectralChangeModel:
    """Rough per-frequency fit, per-region bandwidth choice, smoothing and standard errors.

    ``bandwidths`` may be ``None`` (cross-validate), one :class:`BandwidthParams` for both
    deltas, a pair, or a mapping from region id to a pair.  With ``bias_correct`` the rough
    estimates lose their first-order bias before smoothing; smoothing averages away noise
    but not bias, so an uncorrected ``O(1/n)`` offset would dominate the smoothed error.
    """
    partition = partition or RegionPartition.single(data.n_loc)
    if partition.n_loc != data.n_loc:
        raise ValueError("region partition does not match the number of locations")
    rough = rough or maximize_whittle(data, with_rate=with_rate)
    rough_delta = rough.delta_corrected if bias_correct else rough.delta
    rough_log_a = rough.log_a_corrected if bias_correct else rough.log_a
    H, L = data.n_freq, data.n_loc
    delta_hat = np.zeros((2, L, H))
    var_hat = np.zeros((3, L, H))
    chosen = {}
    for r in partition.ids:
        locs = partition.members(r)
        pair = _bandwidths_for(bandwidths, r)
        if pair is None:
            pair = tuple(cross_validate_bandwidth(rough_delta[i][locs], rough.fitted, data.block, grid)[0]
                         for i in (0, 1))
        chosen[r] = pair
        for i in (0, 1):
            delta_hat[i][locs] = rough_delta[i][locs] @ smoothing_matrix(pair[i], data.block).T
        w0 = effective_weights(pair[0], data.block, rough.fitted)
        w1 = effective_weights(pair[1], data.block, rough.fitted)
        var_hat[:, locs] = standard_errors(rough.cov[:, locs], w0, w1)
    if not with_rate:
        delta_hat[1] = 0.0
        var_hat[1:] = 0.0
    log_a_hat = profile_log_a(data, delta_hat[0], delta_hat[1])
    return SpectralChangeModel(data.block, delta_hat, var_hat, rough_delta, rough_log_a, rough.cov,
                               partition.region_of.copy(), chosen, with_rate, log_a_hat)


def _bandwidths_for(spec, region):
    if spec is None:
        return None
    if isinstance(spec, BandwidthParams):
        return (spec, spec)
    if isinstance(spec, Mapping):
        return _bandwidths_for(spec.get(region), region)
    pair = tuple(spec)
    if len(pair) != 2:
        raise ValueError("bandwidths must be given for delta_0 and delta_1")
    return pair


def predict_log_rho(model: SpectralChangeModel, warming: WarmingPath, t, omega
                    ) -> tuple[np.ndarray, np.ndarray]:
    """``log rho`` and its standard error on the ``(t, location, omega)`` grid.

    ``warming`` must have one column per model location; ``t`` is in days from its start.
    """
    d, r = warming.at(t)                               # (T, L)
    if d.shape[1] != model.n_loc:
        raise ValueError("warming path columns do not match the model's locations")
    dl = model.delta_at(omega)                         # (2, L, F)
    v = model.var_at(omega)                            # (3, L, F)
    d, r = d[:, :, None], r[:, :, None]
    log_rho = d * dl[0][None] + r * dl[1][None]
    var = d * d * v[0][None] + r * r * v[1][None] + 2 * d * r * v[2][None]
    return log_rho, np.sqrt(np.maximum(var, 0.0))


def block_grid(block: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n_half(block)) / block
