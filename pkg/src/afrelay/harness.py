"""Monte-Carlo BER/MSE sweeps over SNR grids, emitted as CSV.

Every trial draws its instance from ``trial_rng(seed, grid_index, trial)``
and all requested detectors see the same instance, so adding or removing
an algorithm never changes what the others are evaluated on.  Trials may be
spread over worker processes; aggregation always runs in trial order so the
output does not depend on scheduling.
"""

from __future__ import annotations

import dataclasses
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erfc

from . import baselines, detector
from .baselines import BaselineFailure
from .detector import DetectorFailure, DetectorOptions
from .messages import V_MAX, V_MIN
from .prior import GaussianPrior, hard_decision, qpsk
from .state_evolution import eigen_spectra, marchenko_pastur_spectra, se_run
from .system import CONVENTION, Dimensions, draw_instance, sample_channels, snr_to_sigma_sq, trial_rng

__all__ = [
    "ALGORITHMS",
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "ber",
    "make_prior",
    "parse_config_text",
    "load_config",
    "run_experiment",
    "excessive_failures",
    "write_csv",
    "format_csv",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("proposed", "lmmse_ls", "single_lmmse", "ep_ls", "se_predictor")
ITERATIVE = ("proposed", "ep_ls", "se_predictor")
FAILURE_LIMIT = 0.10
# keys that change how a sweep is executed but never what it computes
EXECUTION_KEYS = ("out", "workers")


class ConfigError(ValueError):
    pass


def _bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


# key -> (converter, repeated)
KEYS = {
    "L": (int, False),
    "M": (int, False),
    "N": (int, False),
    "prior": (str, False),
    "algos": (str, True),
    "snr1": (float, True),
    "snr2": (float, True),
    "snr2_offset_db": (_optional_float, False),
    "trials": (int, False),
    "iters": (int, False),
    "seed": (int, False),
    "v_min": (float, False),
    "v_max": (float, False),
    "damping": (float, False),
    "stop_tol": (_optional_float, False),
    "lmmse_ls_whiten": (_bool, False),
    "se_spectrum": (str, False),
    "se_pad_relay": (_bool, False),
    "quad_points": (int, False),
    "out": (str, False),
    "workers": (int, False),
    "timing": (_bool, False),
}


@dataclass
class ExperimentConfig:
    """One sweep.  SNR2 is either the fixed list ``snr2`` or ``snr1 + snr2_offset_db``."""

    L: int = 128
    M: int = 256
    N: int = 512
    prior: str = "qpsk"
    algos: list = field(default_factory=lambda: ["proposed", "lmmse_ls", "single_lmmse", "ep_ls"])
    snr1: list = field(default_factory=lambda: [6.0, 8.0, 10.0, 12.0, 14.0])
    snr2: list = field(default_factory=list)
    snr2_offset_db: Optional[float] = -3.0
    trials: int = 100
    iters: int = 10
    seed: int = 0
    v_min: float = V_MIN
    v_max: float = V_MAX
    damping: float = 1.0
    stop_tol: Optional[float] = 1e-8
    lmmse_ls_whiten: bool = True
    se_spectrum: str = "empirical"
    se_pad_relay: bool = True
    quad_points: int = 63
    out: str = "-"
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        try:
            Dimensions(self.L, self.M, self.N)
            DetectorOptions(K=self.iters, v_min=self.v_min, v_max=self.v_max,
                            damping=self.damping, stop_tol=self.stop_tol)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be an unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.snr1:
            raise ConfigError("snr1 grid is empty")
        if not self.algos:
            raise ConfigError("no algorithms requested")
        bad = [a for a in self.algos if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if len(set(self.algos)) != len(self.algos):
            raise ConfigError("algorithms listed twice")
        if self.snr2 and self.snr2_offset_db is not None:
            raise ConfigError("give either snr2 or snr2_offset_db, not both")
        if not self.snr2 and self.snr2_offset_db is None:
            raise ConfigError("one of snr2 or snr2_offset_db is required")
        if self.se_spectrum not in ("empirical", "mp"):
            raise ConfigError("se_spectrum must be 'empirical' or 'mp'")
        make_prior(self.prior)

    @property
    def dims(self):
        return Dimensions(self.L, self.M, self.N)

    def options(self):
        return DetectorOptions(K=self.iters, v_min=self.v_min, v_max=self.v_max,
                               damping=self.damping, stop_tol=self.stop_tol)

    def grid(self):
        """``(snr1_db, snr2_db)`` pairs in grid-index order."""
        if self.snr2:
            return [(s1, s2) for s1 in self.snr1 for s2 in self.snr2]
        return [(s1, s1 + self.snr2_offset_db) for s1 in self.snr1]

    def items(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)


def make_prior(name):
    if name == "qpsk":
        return qpsk()
    if name == "gaussian":
        return GaussianPrior(1.0)
    raise ConfigError(f"unknown prior {name!r}; choose 'qpsk' or 'gaussian'")


def parse_config_text(text):
    """Parse ``key = value`` lines; repeated keys (or comma lists) build grids."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        conv, repeated = KEYS[key]
        try:
            if repeated:
                values.setdefault(key, []).extend(conv(v.strip()) for v in value.split(",") if v.strip())
            else:
                values[key] = conv(value)
        except ValueError as err:
            raise ConfigError(f"line {lineno}: bad value for {key}: {err}") from err
    return values


def load_config(path=None, overrides=None):
    """Build a config from an optional file, then apply ``overrides`` on top."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values = parse_config_text(fh.read())
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[key] = value
        # an explicit SNR2 rule on the command line replaces the file's rule
        if key == "snr2":
            values["snr2_offset_db"] = None
        elif key == "snr2_offset_db":
            values["snr2"] = []
    if "snr2" in values and "snr2_offset_db" not in values:
        values["snr2_offset_db"] = None
    try:
        return ExperimentConfig(**values)
    except TypeError as err:
        raise ConfigError(str(err)) from err


@dataclass
class ResultRow:
    algorithm: str
    snr1_db: float
    snr2_db: float
    trials: int
    failures: int
    ber: float
    ber_stderr: float
    mse: float
    iters: float
    mse_per_iteration: list
    safeguard_count: int
    wall_time_ms: float
    seed: int


def ber(decided_bits, true_bits):
    """Fraction of differing bits."""
    a = np.asarray(decided_bits).ravel()
    b = np.asarray(true_bits).ravel()
    if a.shape != b.shape:
        raise ValueError(f"bit arrays differ in length: {a.size} != {b.size}")
    if a.size == 0:
        raise ValueError("no bits to compare")
    return float(np.count_nonzero(a != b) / a.size)


def _pad(trace, K):
    trace = list(trace)[:K]
    if not trace:
        return [math.nan] * K
    return trace + [trace[-1]] * (K - len(trace))


def _run_algorithm(name, inst, prior, cfg, opts):
    z, H, C, s1, s2 = inst.z, inst.H, inst.C, inst.sigma1_sq, inst.sigma2_sq
    if name == "proposed":
        res = detector.run(z, H, C, s1, s2, prior, opts)
        return res.x_hat, _pad(res.mse_trace(inst.x), opts.K), res.safeguard_count, res.iterations_run
    if name == "ep_ls":
        res = baselines.ep_plus_ls(z, H, C, s1, s2, prior, opts, return_result=True)
        return res.x_hat, _pad(res.mse_trace(inst.x), opts.K), res.safeguard_count, res.iterations_run
    if name == "lmmse_ls":
        return baselines.lmmse_plus_ls(z, H, C, s1, s2, whiten=cfg.lmmse_ls_whiten), None, 0, 0
    if name == "single_lmmse":
        return baselines.single_lmmse(z, H, C, s1, s2), None, 0, 0
    raise ValueError(name)


def _trial(task):
    """One instance, every trial-based algorithm.  Returns ``{algo: outcome}``."""
    cfg, grid_index, snr1, snr2, trial_index = task
    prior = make_prior(cfg.prior)
    opts = cfg.options()
    s1, s2 = snr_to_sigma_sq(snr1), snr_to_sigma_sq(snr2)
    inst = draw_instance(cfg.dims, prior, s1, s2, trial_rng(cfg.seed, grid_index, trial_index))
    discrete = not isinstance(prior, GaussianPrior)
    true_bits = hard_decision(inst.x, prior)[1] if discrete else None
    out = {}
    for name in cfg.algos:
        if name == "se_predictor":
            continue
        start = time.perf_counter()
        try:
            x_hat, trace, safeguards, iters = _run_algorithm(name, inst, prior, cfg, opts)
            if not np.all(np.isfinite(x_hat)):
                raise DetectorFailure("non-finite estimate")
        except (DetectorFailure, BaselineFailure, np.linalg.LinAlgError) as err:
            log.info("trial %d at grid point %d: %s failed: %s", trial_index, grid_index, name, err)
            out[name] = None
            continue
        errors = int(np.count_nonzero(hard_decision(x_hat, prior)[1] != true_bits)) if discrete else 0
        out[name] = {
            "bit_errors": errors,
            "bits": true_bits.size if discrete else 0,
            "mse": detector.posterior_mse(x_hat, inst.x),
            "trace": trace,
            "safeguards": safeguards,
            "iters": iters,
            "elapsed": time.perf_counter() - start,
        }
    return out


def _qpsk_ber(gamma):
    # Gray QPSK over CN(0, 1/gamma): each bit sees amplitude 1/sqrt(2) in variance 1/(2 gamma)
    return float(0.5 * erfc(np.sqrt(gamma / 2.0)))


def _se_row(cfg, grid_index, snr1, snr2):
    prior = make_prior(cfg.prior)
    start = time.perf_counter()
    if cfg.se_spectrum == "mp":
        spectra = marchenko_pastur_spectra(cfg.L, cfg.M, cfg.N)
    else:
        # trial 0 draws its channels first, so this is the pair that trial sees
        H, C = sample_channels(cfg.dims, trial_rng(cfg.seed, grid_index, 0))
        spectra = eigen_spectra(H, C)
    tr = se_run(spectra, snr_to_sigma_sq(snr1), snr_to_sigma_sq(snr2), prior, cfg.iters,
                quad_points=cfg.quad_points, pad_relay=cfg.se_pad_relay,
                v_min=cfg.v_min, v_max=cfg.v_max)
    gamma = tr.records[-1].gamma0_minus
    ber_value = _qpsk_ber(gamma) if cfg.prior == "qpsk" else math.nan
    elapsed = (time.perf_counter() - start) * 1e3 if cfg.timing else 0.0
    return ResultRow("se_predictor", snr1, snr2, 1, 0, ber_value, 0.0, float(tr.mse[-1]),
                     float(len(tr)), [float(v) for v in tr.mse], tr.safeguard_count, elapsed, cfg.seed)


def _aggregate(name, outcomes, cfg, snr1, snr2):
    ok = [o for o in outcomes if o is not None]
    failures = len(outcomes) - len(ok)
    K = cfg.iters
    if not ok:
        return ResultRow(name, snr1, snr2, cfg.trials, failures, math.nan, math.nan, math.nan,
                         math.nan, [math.nan] * K if name in ITERATIVE else [], 0, 0.0, cfg.seed)
    bits = sum(o["bits"] for o in ok)
    if bits:
        p = sum(o["bit_errors"] for o in ok) / bits
        stderr = math.sqrt(p * (1 - p) / bits)
    else:
        p = stderr = math.nan
    mse = float(np.mean([o["mse"] for o in ok]))
    if name in ITERATIVE:
        trace = [float(v) for v in np.mean([o["trace"] for o in ok], axis=0)]
        iters = float(np.mean([o["iters"] for o in ok]))
    else:
        trace, iters = [], 0.0
    safeguards = sum(o["safeguards"] for o in ok)
    elapsed = sum(o["elapsed"] for o in ok) * 1e3 if cfg.timing else 0.0
    return ResultRow(name, snr1, snr2, cfg.trials, failures, p, stderr, mse, iters, trace,
                     safeguards, elapsed, cfg.seed)


def run_experiment(config):
    """Run the sweep and return rows sorted by ``(algorithm, snr1_db)``."""
    cfg = config
    grid = cfg.grid()
    tasks = [(cfg, g, s1, s2, t) for g, (s1, s2) in enumerate(grid) for t in range(cfg.trials)]
    trial_algos = [a for a in cfg.algos if a != "se_predictor"]
    results = []
    if trial_algos:
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_trial, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
        else:
            results = [_trial(t) for t in tasks]

    rows = []
    for g, (s1, s2) in enumerate(grid):
        chunk = results[g * cfg.trials:(g + 1) * cfg.trials]
        for name in trial_algos:
            rows.append(_aggregate(name, [r[name] for r in chunk], cfg, s1, s2))
        if "se_predictor" in cfg.algos:
            rows.append(_se_row(cfg, g, s1, s2))
        log.info("grid point %d/%d done (snr1=%g, snr2=%g)", g + 1, len(grid), s1, s2)
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    rows.sort(key=lambda r: (order[r.algorithm], r.snr1_db, r.snr2_db))
    return rows


def excessive_failures(rows, limit=FAILURE_LIMIT):
    return [r for r in rows if r.trials and r.failures / r.trials > limit]


def _num(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".10g")


def format_csv(rows, config):
    K = config.iters
    buf = io.StringIO()
    for key, value in config.items():
        if key in EXECUTION_KEYS:
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        buf.write(f"# {key} = {value}\n")
    buf.write(f"# convention: {CONVENTION}\n")
    buf.write("# lmmse_ls: LS on hop 2, LMMSE on hop 1, LS error "
              f"{'whitened to its mean diagonal' if config.lmmse_ls_whiten else 'kept colored'}\n")
    buf.write("# single_lmmse: compound noise variance sigma1^2 ||C||_F^2 / N + sigma2^2\n")
    buf.write("# ep_ls: LS on hop 2, EP on hop 1, LS error whitened to its mean diagonal\n")
    header = (["algorithm", "snr1_db", "snr2_db", "trials", "failures", "ber", "ber_stderr", "mse", "iters"]
              + [f"mse_iter_{k}" for k in range(1, K + 1)]
              + ["safeguards", "wall_time_ms", "seed"])
    buf.write(",".join(header) + "\n")
    for r in rows:
        trace = [_num(v) for v in r.mse_per_iteration] + [""] * (K - len(r.mse_per_iteration))
        cells = ([r.algorithm, _num(r.snr1_db), _num(r.snr2_db), _num(r.trials), _num(r.failures),
                  _num(r.ber), _num(r.ber_stderr), _num(r.mse), _num(r.iters)]
                 + trace + [_num(r.safeguard_count), _num(r.wall_time_ms), _num(r.seed)])
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def write_csv(rows, config, path=None):
    text = format_csv(rows, config)
    path = config.out if path is None else path
    if path in (None, "-"):
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text
