"""Timing harness: standard 3x3 conv vs the adaptive layer's sparse and dense paths.

Inputs are synthetic. The selector bias is solved so that a chosen fraction
of pixels clips to alpha = 0, which makes the skip fraction the independent
variable. Variants are interleaved within each repetition so slow drift in
machine state hits all three equally.
"""

import statistics
import time
from dataclasses import asdict, dataclass, field

from threadpoolctl import threadpool_limits

from . import _backend, config
from .adaptive import (RacnnParams, conv2d, embed_center, predict_time_factor,
                       racnn_forward_dense, racnn_forward_sparse,
                       selector_bias_for_zero_fraction, standard_macs)
from .tensor import count_macs, make_rng

VARIANTS = ("standard", "racnn_sparse", "racnn_dense")


@dataclass
class Timing:
    median_ms: float
    min_ms: float
    mean_ms: float

    @classmethod
    def from_samples(cls, samples_s):
        ms = [s * 1e3 for s in samples_s]
        return cls(statistics.median(ms), min(ms), statistics.fmean(ms))


@dataclass
class BenchReport:
    h: int
    c: int
    d: int
    f: int
    reps: int
    warmup: int
    tau: float
    timings: dict
    speedup: float
    ratio_sparse: float
    ratio_dense: float
    fraction_alpha_zero: float
    target_alpha_zero: float
    predicted_factor: float
    macs_standard: int
    macs_sparse: int
    mac_ratio: float
    threads: int
    scalar_bits: int
    backend: str
    seed: int
    samples_ms: dict = field(default=None, repr=False)

    def to_dict(self, *, samples=False):
        out = asdict(self)
        if not samples:
            out.pop("samples_ms")
        return out

    CSV_FIELDS = ("h", "c", "d", "f", "reps", "warmup", "tau", "target_alpha_zero",
                  "fraction_alpha_zero", "predicted_factor", "mac_ratio", "variant",
                  "median_ms", "min_ms", "mean_ms", "threads", "scalar_bits", "backend")

    def csv_rows(self):
        base = self.to_dict()
        for name in VARIANTS:
            row = {k: base[k] for k in self.CSV_FIELDS if k in base}
            row["variant"] = name
            row.update(base["timings"][name])
            yield row


def make_case(h, c, d, f, alpha_zero, *, seed=0, dtype=None):
    """Input and parameters with ``round(alpha_zero * h * c)`` pixels at alpha = 0.

    Every other pixel has alpha > 0, so the sparse path does hollow work there.
    """
    rng = make_rng([seed, 31])
    dt = dtype or config.default_dtype()
    x = rng.uniform(-1.0, 1.0, size=(h, c, d)).astype(dt)
    p = RacnnParams.random(rng, d, f, alpha_scale=1.0, dtype=dt)
    p.b_alpha = selector_bias_for_zero_fraction(x, p, alpha_zero)
    return x, p


def run_bench(h=128, c=128, d=64, f=64, *, alpha_zero=0.5, reps=20, warmup=3, threads=1,
              tau=0.0, seed=0, keep_samples=False):
    if min(h, c, d, f) < 1:
        raise ValueError("layer dims must be positive")
    if reps < 3:
        raise ValueError("reps must be >= 3")
    if warmup < 3:
        raise ValueError("warmup must be >= 3")
    if not 0.0 <= alpha_zero <= 1.0:
        raise ValueError("alpha-zero must lie in [0, 1]")

    x, p = make_case(h, c, d, f, alpha_zero, seed=seed)
    w3 = embed_center(p)
    fns = {
        "standard": lambda: conv2d(x, w3, 3),
        "racnn_sparse": lambda: racnn_forward_sparse(x, p, tau),
        "racnn_dense": lambda: racnn_forward_dense(x, p),
    }
    previous = config.threads()
    config.set_threads(threads)
    try:
        with threadpool_limits(limits=threads):
            _, _, stats = racnn_forward_sparse(x, p, tau)
            with count_macs() as m_std:
                fns["standard"]()
            with count_macs() as m_sparse:
                racnn_forward_sparse(x, p, tau)
            for _ in range(warmup):
                for fn in fns.values():
                    fn()
            samples = {name: [] for name in VARIANTS}
            for _ in range(reps):
                for name in VARIANTS:
                    t0 = time.perf_counter()
                    fns[name]()
                    samples[name].append(time.perf_counter() - t0)
    finally:
        config.set_threads(previous)

    timings = {name: Timing.from_samples(samples[name]) for name in VARIANTS}
    std = timings["standard"].median_ms
    sparse = timings["racnn_sparse"].median_ms
    dense = timings["racnn_dense"].median_ms
    return BenchReport(
        h=h, c=c, d=d, f=f, reps=reps, warmup=warmup, tau=tau,
        timings={k: asdict(v) for k, v in timings.items()},
        speedup=std / sparse,
        ratio_sparse=sparse / std,
        ratio_dense=dense / std,
        fraction_alpha_zero=stats.fraction_alpha_zero,
        target_alpha_zero=alpha_zero,
        predicted_factor=predict_time_factor(stats.fraction_alpha_zero),
        macs_standard=m_std.macs,
        macs_sparse=m_sparse.macs,
        mac_ratio=m_sparse.macs / standard_macs(h, c, d, f),
        threads=threads,
        scalar_bits=config.scalar_bits(),
        backend=_backend.name(),
        seed=seed,
        samples_ms={k: [s * 1e3 for s in v] for k, v in samples.items()} if keep_samples else None,
    )
