"""Monte-Carlo link harness: SNR sweeps over uniform, shaped, and mixed scenarios.

A frame is one codeword (uniform/ps scenarios) or a fixed number of
uncoded vector uses (mixed scenario). Every frame derives its own RNG from
(master seed, snr index, frame index), and the stop rule advances in fixed
batches, so results are independent of worker count and scheduling.
Aggregation uses integer counters only.

The CSV contract has a fixed column order; per-layer columns are filled
only by mixed runs and the wall-time column only when timing is enabled.
"""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import fec
from .channel import CorrelationConfig, draw_channel, snr_to_sigma2, transmit
from .constellation import mb_distribution, nu_for_rate, shaped_constellation, uniform_constellation
from .detect import RtsDetector, bruteforce_maxlog, mmse_soft
from .shaping import frame_bit_positions, pas_decode, pas_encode, plan_frame

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "SweepRecord",
    "parse_config_text",
    "load_config",
    "run_point",
    "run_sweep",
    "run_mixed_layers",
    "write_csv",
    "spectral_efficiency",
    "assert_comparable",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("scenario", "snr_db", "frames", "bit_errors", "block_errors",
               "ber", "bler", "mean_nodes", "layer_ber_0", "layer_ber_1", "wall_time_s")

MIXED_VARIANTS = (("ps", "ps"), ("ps", "qam"), ("qam", "qam"))


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class FrameStreams:
    """Per-frame RNG split by role so fading draws are scenario-invariant."""
    channel: np.random.Generator
    data: np.random.Generator
    noise: np.random.Generator


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "uniform"     # uniform | ps | mixed
    m_bits: int = 2               # bits per PAM dimension (2 -> 16-QAM, 4 -> 256-QAM)
    mt: int = 2
    mr: int = 2
    code_uniform: str = "peg_1200_800"
    code_ps: str = "peg_1200_1056"
    nu: float = None              # MB shaping parameter; exclusive with target_rate
    target_rate: float = None     # amplitude entropy target in bits
    detector: str = "sd"          # sd | mmse | bruteforce
    clip: float = 1000.0
    beta_tx: float = 0.0
    beta_rx: float = 0.0
    coherence: int = 0            # vector uses per channel draw; 0 = one draw per frame
    snr_start: float = 8.0
    snr_stop: float = 14.0
    snr_step: float = 1.0
    max_frames: int = 2000
    target_block_errors: int = 100
    batch_frames: int = 50
    seed: int = 1
    workers: int = 1
    mixed_uses: int = 128         # vector uses per frame in the mixed scenario
    mmse_priors: bool = True
    timing: bool = True
    output: str = None
    figures: bool = False


@dataclass(frozen=True)
class SweepRecord:
    scenario: str
    snr_db: float
    frames: int
    bit_errors: int
    block_errors: int
    ber: float
    bler: float
    mean_nodes: float
    layer_ber: tuple = None
    layer_ci: tuple = None        # 95% half-widths from per-frame statistics
    wall_time_s: float = None


def _parse_bool(raw):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def parse_config_text(text):
    """Parse flat `key = value` lines with # comments into a dict of strings."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(cfg_field, raw):
    if raw.lower() in ("none", ""):
        return None
    kind = getattr(cfg_field.type, "__name__", cfg_field.type)
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _parse_bool(raw)
        return raw
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"bad value for {cfg_field.name}: {raw!r}") from None


def build_config(values, overrides=None):
    """ScenarioConfig from string-valued dicts; overrides win."""
    merged = dict(values)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    by_name = {f.name: f for f in fields(ScenarioConfig)}
    kwargs = {}
    for key, raw in merged.items():
        if key not in by_name:
            raise ConfigError(f"unknown configuration key {key!r}")
        kwargs[key] = _coerce(by_name[key], raw) if isinstance(raw, str) else raw
    return ScenarioConfig(**kwargs)


def load_config(path, overrides=None):
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    return build_config(parse_config_text(text), overrides)


def snr_grid(cfg):
    if cfg.snr_step <= 0:
        raise ConfigError(f"snr_step must be positive, got {cfg.snr_step}")
    if cfg.snr_stop < cfg.snr_start:
        return np.empty(0)
    count = int(np.floor((cfg.snr_stop - cfg.snr_start) / cfg.snr_step + 1e-9)) + 1
    return cfg.snr_start + cfg.snr_step * np.arange(count)


def _resolve_nu(cfg):
    if cfg.nu is not None and cfg.target_rate is not None:
        raise ConfigError("give either nu or target_rate, not both")
    if cfg.nu is not None:
        if cfg.nu < 0:
            raise ConfigError(f"nu must be >= 0, got {cfg.nu}")
        return cfg.nu
    if cfg.target_rate is not None:
        try:
            return nu_for_rate(cfg.target_rate, cfg.m_bits)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError("shaped scenario needs nu or target_rate")


class _Context:
    """Everything one worker needs to simulate frames of one scenario variant."""

    def __init__(self, cfg, variant=None):
        if cfg.scenario not in ("uniform", "ps", "mixed"):
            raise ConfigError(f"unknown scenario {cfg.scenario!r}")
        if cfg.detector not in ("sd", "mmse", "bruteforce"):
            raise ConfigError(f"unknown detector {cfg.detector!r}")
        if cfg.mt < 1 or cfg.mr < cfg.mt:
            raise ConfigError(f"need mr >= mt >= 1, got mt={cfg.mt} mr={cfg.mr}")
        if not 1 <= cfg.m_bits <= 6:
            raise ConfigError(f"m_bits must be in 1..6, got {cfg.m_bits}")
        if cfg.clip <= 0:
            raise ConfigError(f"clip must be positive, got {cfg.clip}")
        if not (0 <= cfg.beta_tx < 1 and 0 <= cfg.beta_rx < 1):
            raise ConfigError("correlation parameters must be in [0, 1)")
        if min(cfg.max_frames, cfg.batch_frames, cfg.target_block_errors, cfg.workers) < 1:
            raise ConfigError("frame budgets, batch size, and workers must be >= 1")
        if cfg.coherence < 0:
            raise ConfigError(f"coherence must be >= 0, got {cfg.coherence}")
        if cfg.detector == "bruteforce" and (2 ** (2 * cfg.m_bits)) ** cfg.mt > 2 ** 20:
            raise ConfigError("bruteforce detector infeasible for this alphabet size")
        self.cfg = cfg
        self.corr = (CorrelationConfig(cfg.beta_tx, cfg.beta_rx)
                     if (cfg.beta_tx or cfg.beta_rx) else None)
        self.variant = variant
        if cfg.scenario == "mixed":
            if cfg.mt != 2:
                raise ConfigError("mixed scenario is defined for mt = 2")
            if variant is None:
                raise ConfigError("mixed scenario needs a layer variant")
            nu = _resolve_nu(cfg)
            shaped = shaped_constellation(cfg.m_bits, nu)
            uniform = uniform_constellation(cfg.m_bits)
            self.layer_consts = [shaped if kind == "ps" else uniform for kind in variant]
            self.uses_per_frame = cfg.mixed_uses
            self.data_bits = cfg.mixed_uses * 2 * cfg.m_bits * cfg.mt
            return
        if cfg.scenario == "ps":
            nu = _resolve_nu(cfg)
            self.code = fec.load_code(cfg.code_ps)
            dist = mb_distribution(nu, cfg.m_bits)
            try:
                self.plan = plan_frame(self.code.n, self.code.k, cfg.m_bits, dist)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            self.const = shaped_constellation(cfg.m_bits, nu)
            self.data_bits = self.plan.data_bits
            self.bitpos = frame_bit_positions(self.plan)
            n_sym = self.plan.n_sym
        else:
            self.code = fec.load_code(cfg.code_uniform)
            if self.code.n % (2 * cfg.m_bits) != 0:
                raise ConfigError(
                    f"codeword length {self.code.n} is not a multiple of {2 * cfg.m_bits}")
            self.const = uniform_constellation(cfg.m_bits)
            self.data_bits = self.code.k
            n_sym = self.code.n // (2 * cfg.m_bits)
            cols = 2 * cfg.m_bits
            self.bitpos = (np.arange(n_sym * cols)).reshape(n_sym, cols)
        if n_sym % cfg.mt != 0:
            raise ConfigError(f"{n_sym} symbols per frame do not fill {cfg.mt} layers evenly")
        self.layer_consts = [self.const] * cfg.mt
        self.uses_per_frame = n_sym // cfg.mt

    def frame_rng(self, snr_index, frame_index):
        """Three independent streams per frame: channel, data, noise.

        Keeping the channel stream separate means scenarios with the same
        seed see the same fading ensemble, so their error-rate differences
        are paired rather than independent.
        """
        seq = np.random.SeedSequence(entropy=self.cfg.seed,
                                     spawn_key=(snr_index, frame_index))
        children = seq.spawn(3)
        return FrameStreams(channel=np.random.default_rng(children[0]),
                            data=np.random.default_rng(children[1]),
                            noise=np.random.default_rng(children[2]))

    # --- per-frame simulation ---------------------------------------

    def _detect_block(self, h, sigma2, tx_rows, rng):
        """Detect a block of vector uses sharing one channel draw.

        Returns (llr rows, node count) with one LLR row per use.
        """
        cfg = self.cfg
        rows = np.empty((len(tx_rows), 2 * cfg.m_bits * cfg.mt), dtype=np.float64)
        nodes = 0
        detector = None
        if cfg.detector == "sd":
            detector = RtsDetector(h, sigma2, self.layer_consts)
        for i, s in enumerate(tx_rows):
            y = transmit(rng, h, s, sigma2)
            if detector is not None:
                out = detector.detect(y, clip=cfg.clip)
            elif cfg.detector == "mmse":
                out = mmse_soft(y, h, sigma2, self.layer_consts, use_priors=cfg.mmse_priors)
            else:
                out = bruteforce_maxlog(y, h, sigma2, self.layer_consts)
            rows[i] = out.llrs
            nodes += out.nodes_visited
        return rows, nodes

    def _channel_blocks(self, uses):
        block = self.cfg.coherence if self.cfg.coherence > 0 else uses
        for lo in range(0, uses, block):
            yield lo, min(lo + block, uses)

    def run_coded_frame(self, sigma2, streams):
        cfg = self.cfg
        data = streams.data.integers(0, 2, self.data_bits).astype(np.uint8)
        if cfg.scenario == "ps":
            symbols = pas_encode(self.plan, self.code, self.const, data)
        else:
            codeword = self.code.encode(data)
            labels = self.const.labels_from_bits(codeword[self.bitpos])
            symbols = self.const.points[labels]
        tx = symbols.reshape(self.uses_per_frame, cfg.mt)
        llr_sym = np.empty((self.uses_per_frame, tx.shape[1] * 2 * cfg.m_bits))
        nodes = 0
        for lo, hi in self._channel_blocks(self.uses_per_frame):
            h = draw_channel(streams.channel, cfg.mt, cfg.mr, self.corr)
            rows, n = self._detect_block(h, sigma2, tx[lo:hi], streams.noise)
            llr_sym[lo:hi] = rows
            nodes += n
        llr_cw = np.empty(self.code.n, dtype=np.float64)
        llr_cw[self.bitpos.ravel()] = llr_sym.reshape(-1, 2 * cfg.m_bits).ravel()
        if cfg.scenario == "ps":
            decoded, _ = pas_decode(self.plan, self.code, self.const, llr_cw)
        else:
            hard, _, _ = self.code.decode_minsum(llr_cw)
            decoded = hard[:self.code.k]
        bit_errors = int(np.count_nonzero(decoded != data))
        return bit_errors, int(bit_errors > 0), nodes

    def _draw_mixed_labels(self, rng, uses):
        labels = np.empty((uses, self.cfg.mt), dtype=np.int64)
        for j, const in enumerate(self.layer_consts):
            if const.dist.nu > 0:
                labels[:, j] = rng.choice(const.size, size=uses, p=const.point_probs)
            else:
                labels[:, j] = rng.integers(0, const.size, size=uses)
        return labels

    def run_mixed_frame(self, sigma2, streams):
        cfg = self.cfg
        uses = self.uses_per_frame
        labels = self._draw_mixed_labels(streams.data, uses)
        tx = np.empty((uses, cfg.mt), dtype=np.complex128)
        true_bits = np.empty((uses, cfg.mt, 2 * cfg.m_bits), dtype=np.uint8)
        for j, const in enumerate(self.layer_consts):
            tx[:, j] = const.points[labels[:, j]]
            true_bits[:, j, :] = const.bits_from_labels(labels[:, j])
        nodes = 0
        layer_errors = np.zeros(cfg.mt, dtype=np.int64)
        for lo, hi in self._channel_blocks(uses):
            h = draw_channel(streams.channel, cfg.mt, cfg.mr, self.corr)
            rows, n = self._detect_block(h, sigma2, tx[lo:hi], streams.noise)
            nodes += n
            hard = (rows.reshape(hi - lo, cfg.mt, 2 * cfg.m_bits) < 0).astype(np.uint8)
            layer_errors += (hard != true_bits[lo:hi]).sum(axis=(0, 2))
        bit_errors = int(layer_errors.sum())
        return bit_errors, int(bit_errors > 0), nodes, layer_errors


# --- worker-pool plumbing -------------------------------------------

_WORKER_CTX = None


def _init_worker(cfg, variant):
    global _WORKER_CTX
    _WORKER_CTX = _Context(cfg, variant)


def _frame_span(ctx, snr_index, sigma2, lo, hi):
    """Simulate frames [lo, hi); returns integer counters only."""
    mixed = ctx.cfg.scenario == "mixed"
    bit_errors = 0
    block_errors = 0
    nodes = 0
    layer_errors = np.zeros(ctx.cfg.mt, dtype=np.int64)
    layer_sq = np.zeros(ctx.cfg.mt, dtype=np.int64)
    for f in range(lo, hi):
        streams = ctx.frame_rng(snr_index, f)
        if mixed:
            be, blk, nd, lerr = ctx.run_mixed_frame(sigma2, streams)
            layer_errors += lerr
            layer_sq += lerr * lerr
        else:
            be, blk, nd = ctx.run_coded_frame(sigma2, streams)
        bit_errors += be
        block_errors += blk
        nodes += nd
    return bit_errors, block_errors, nodes, layer_errors, layer_sq


def _frame_span_in_worker(args):
    return _frame_span(_WORKER_CTX, *args)


class _Runner:
    """Executes frame spans either inline or on a worker pool."""

    def __init__(self, cfg, variant=None):
        self.ctx = _Context(cfg, variant)
        self.cfg = cfg
        self.pool = None
        if cfg.workers > 1:
            self.pool = ProcessPoolExecutor(max_workers=cfg.workers,
                                            initializer=_init_worker,
                                            initargs=(cfg, variant))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def run_span(self, snr_index, sigma2, lo, hi):
        if self.pool is None:
            return [_frame_span(self.ctx, snr_index, sigma2, lo, hi)]
        count = hi - lo
        chunk = max(1, -(-count // self.cfg.workers))
        spans = [(snr_index, sigma2, s, min(s + chunk, hi)) for s in range(lo, hi, chunk)]
        return list(self.pool.map(_frame_span_in_worker, spans))


def _point_with_runner(runner, snr_db, snr_index, scenario_tag):
    cfg = runner.cfg
    ctx = runner.ctx
    sigma2 = snr_to_sigma2(snr_db, cfg.mt)
    started = time.perf_counter() if cfg.timing else None
    frames = 0
    bit_errors = 0
    block_errors = 0
    nodes = 0
    layer_errors = np.zeros(cfg.mt, dtype=np.int64)
    layer_sq = np.zeros(cfg.mt, dtype=np.int64)
    # fixed batch boundaries make the stop rule independent of worker count
    while frames < cfg.max_frames and block_errors < cfg.target_block_errors:
        hi = min(frames + cfg.batch_frames, cfg.max_frames)
        for be, blk, nd, lerr, lsq in runner.run_span(snr_index, sigma2, frames, hi):
            bit_errors += be
            block_errors += blk
            nodes += nd
            layer_errors += lerr
            layer_sq += lsq
        frames = hi
    data_bits = ctx.data_bits * frames
    uses = ctx.uses_per_frame * frames
    layer_ber = None
    layer_ci = None
    if cfg.scenario == "mixed":
        per_frame_bits = ctx.uses_per_frame * 2 * cfg.m_bits
        mean = layer_errors / frames
        var = layer_sq / frames - mean ** 2
        half = 1.96 * np.sqrt(np.maximum(var, 0.0) / frames) / per_frame_bits
        layer_ber = tuple(float(e) / (per_frame_bits * frames) for e in layer_errors)
        layer_ci = tuple(float(h) for h in half)
    wall = time.perf_counter() - started if cfg.timing else None
    return SweepRecord(scenario=scenario_tag, snr_db=float(snr_db), frames=frames,
                       bit_errors=bit_errors, block_errors=block_errors,
                       ber=bit_errors / data_bits, bler=block_errors / frames,
                       mean_nodes=nodes / uses, layer_ber=layer_ber,
                       layer_ci=layer_ci, wall_time_s=wall)


def _scenario_tag(cfg, variant=None):
    if cfg.scenario == "mixed":
        return "mixed:" + "-".join(variant)
    return cfg.scenario


def run_point(cfg, snr_db, snr_index=0, variant=None):
    """Simulate one SNR point; deterministic given (seed, snr_index)."""
    if cfg.scenario == "mixed" and variant is None:
        variant = ("ps", "qam")
    runner = _Runner(cfg, variant)
    try:
        return _point_with_runner(runner, snr_db, snr_index, _scenario_tag(cfg, variant))
    finally:
        runner.close()


def _progress(record):
    print(f"[{record.scenario}] snr={record.snr_db:g} frames={record.frames} "
          f"bler={record.bler:.4g} mean_nodes={record.mean_nodes:.1f}",
          file=sys.stderr, flush=True)


def run_mixed_layers(cfg):
    """All three layer variants over the SNR grid: (ps,ps), (ps,qam), (qam,qam)."""
    grid = snr_grid(cfg)
    records = []
    for variant in MIXED_VARIANTS:
        runner = _Runner(cfg, variant)
        try:
            for index, snr_db in enumerate(grid):
                record = _point_with_runner(runner, snr_db, index, _scenario_tag(cfg, variant))
                records.append(record)
                _progress(record)
        finally:
            runner.close()
    return records


def run_sweep(cfg):
    """Sweep the SNR grid, write the CSV (and figures when asked), return records."""
    _validate_output(cfg)
    if cfg.scenario == "mixed":
        records = run_mixed_layers(cfg)
    else:
        records = []
        runner = _Runner(cfg)
        try:
            for index, snr_db in enumerate(snr_grid(cfg)):
                record = _point_with_runner(runner, snr_db, index, _scenario_tag(cfg))
                records.append(record)
                _progress(record)
        finally:
            runner.close()
    if cfg.output:
        write_csv(records, cfg.output)
        if cfg.figures:
            from .plots import render_report
            render_report(cfg.output)
    return records


def _validate_output(cfg):
    # surface config problems, including the output path, before simulating
    _Context(cfg, ("ps", "qam") if cfg.scenario == "mixed" else None)
    if cfg.output:
        parent = os.path.dirname(os.path.abspath(cfg.output))
        if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
            raise ConfigError(f"output path is not writable: {cfg.output}")


def _format_row(record):
    layer0 = layer1 = ""
    if record.layer_ber is not None:
        layer0 = f"{record.layer_ber[0]:.10g}"
        layer1 = f"{record.layer_ber[1]:.10g}"
    wall = "" if record.wall_time_s is None else f"{record.wall_time_s:.3f}"
    return (f"{record.scenario},{record.snr_db:.6g},{record.frames},"
            f"{record.bit_errors},{record.block_errors},{record.ber:.10g},"
            f"{record.bler:.10g},{record.mean_nodes:.10g},{layer0},{layer1},{wall}")


def write_csv(records, path):
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(_format_row(r) for r in records)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def spectral_efficiency(cfg, variant=None):
    """Data bits per vector channel use."""
    if cfg.scenario == "mixed" and variant is None:
        variant = ("ps", "qam")
    ctx = _Context(cfg, variant)
    return ctx.data_bits / ctx.uses_per_frame


def assert_comparable(cfg_a, cfg_b):
    """Refuse scenario comparisons whose spectral efficiencies differ by >1%."""
    se_a = spectral_efficiency(cfg_a)
    se_b = spectral_efficiency(cfg_b)
    if abs(se_a - se_b) > 0.01 * max(se_a, se_b):
        raise ConfigError(
            f"spectral efficiencies differ by more than 1%: {se_a:.4f} vs {se_b:.4f}")
    return se_a, se_b
