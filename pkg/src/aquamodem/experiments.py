"""Monte-Carlo experiments: link simulation, distance sweeps, coding ablation, drift.

Every function takes a single ``seed``; per-trial generators are derived
from it with :func:`aquamodem.seeding.derive_seed`, so results do not depend
on evaluation order.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from aquamodem import __version__, channel, corruption, fec, phy, receiver, recovery, textcodec
from aquamodem.channel import ChannelParams
from aquamodem.context import PurposeTag
from aquamodem.fec import CodingMode
from aquamodem.phy import DEFAULT_PARAMS, ModulationParams
from aquamodem.seeding import derive_seed, rng_for

LEAD_IN = 0.25  # s of silence before each simulated frame
TAIL = 0.1  # s after it

Messages = Sequence[tuple[str, PurposeTag]]


def load_messages(path: str | Path | None = None) -> list[tuple[str, PurposeTag]]:
    """Read ``purpose<TAB>text`` lines; the bundled diver corpus by default."""
    if path is None:
        text = (resources.files("aquamodem") / "data" / "messages.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        purpose, sep, message = line.partition("\t")
        if not sep:
            raise ValueError(f"line {n}: expected purpose<TAB>text")
        out.append((textcodec.normalize_message(message), PurposeTag(purpose.strip())))
    if not out:
        raise corruption.EmptyInput("no messages")
    return out


def mean_ci(values, z: float = 1.96) -> tuple[float, float, float]:
    """Mean and normal-approximation confidence interval."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    if v.size < 2:
        return m, m, m
    h = z * float(v.std(ddof=1)) / math.sqrt(v.size)
    return m, m - h, m + h


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    """Tabular result plus everything needed to rerun it bit-identically."""

    name: str
    config: dict
    rows: list[dict]
    seed: int
    version: str = __version__

    def write(self, csv_path: str | Path) -> Path:
        """Write the CSV and a JSON sidecar next to it; returns the sidecar path."""
        csv_path = Path(csv_path)
        columns = list(self.rows[0]) if self.rows else []
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _fmt(v) for k, v in row.items()})
        sidecar = csv_path.with_suffix(".json")
        meta = {"name": self.name, "seed": self.seed, "version": self.version, "columns": columns, "config": self.config}
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
        return sidecar


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, bool):
        return int(v)
    return v


def _jsonable(v):
    if hasattr(v, "value"):
        return v.value
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


# ---------------------------------------------------------------------------
# end-to-end link


@dataclass(frozen=True)
class LinkResult:
    bits: int
    bit_errors: int
    received_text: str
    lost: bool


def simulate_link(
    text: str,
    chan: ChannelParams,
    mode: CodingMode = CodingMode.CR3,
    params: ModulationParams = DEFAULT_PARAMS,
    equalize: bool = True,
) -> LinkResult:
    """Send one message through the full stack and the channel.

    The receiver searches the whole capture for the packet. A frame that is
    never decoded counts every payload bit as an error and yields an empty
    string.
    """
    bits = textcodec.encode_text(text)
    lead, tail = np.zeros(round(LEAD_IN * params.fs)), np.zeros(round(TAIL * params.fs))
    tx = np.concatenate([lead, phy.transmit(bits, mode, params), tail])
    rx, _ = channel.apply_channel(tx, chan)
    packets = receiver.receive(rx, params, equalize=equalize)
    if not packets or packets[0].bits.size != bits.size:
        return LinkResult(bits.size, bits.size, "", True)
    got = packets[0].bits
    return LinkResult(bits.size, int(np.count_nonzero(got != bits)), textcodec.decode_bits(got), False)


def distance_sweep(
    messages: Messages,
    distances: Sequence[float],
    trials: int,
    seed: int = 0,
    mode: CodingMode = CodingMode.CR3,
    chan: ChannelParams | None = None,
    params: ModulationParams = DEFAULT_PARAMS,
    recoverer=None,
    threshold: float = recovery.SUCCESS_THRESHOLD,
) -> ExperimentReport:
    """BER and recovered-message similarity at each distance.

    Trial ``t`` sends message ``t mod len(messages)``; ``recoverer`` (default
    identity) is applied to what the receiver decoded before scoring it.
    """
    if not distances:
        raise ValueError("distance grid is empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    chan = chan or ChannelParams(fc=params.fc, fs=params.fs, bw=params.bw)
    recover = recovery._as_callable(recoverer or recovery.IdentityRecoverer())
    rows = []
    for i, d in enumerate(distances):
        errors = bits = lost = 0
        scores = []
        for t in range(trials):
            text, purpose = messages[t % len(messages)]
            res = simulate_link(text, replace(chan, distance=float(d), seed=derive_seed(seed, i, t)), mode, params)
            errors += res.bit_errors
            bits += res.bits
            lost += res.lost
            scores.append(recovery.similarity(recover(res.received_text, purpose), text))
        scores = np.array(scores)
        rows.append(
            {
                "distance_m": float(d),
                "trials": trials,
                "bits": bits,
                "bit_errors": errors,
                "ber_measured": errors / bits,
                "frames_lost": lost,
                "mean_similarity": float(scores.mean()),
                "success_rate": float(np.mean(scores >= threshold)),
            }
        )
    config = {
        "mode": CodingMode(mode).value,
        "distances": [float(d) for d in distances],
        "trials": trials,
        "channel": asdict(chan),
        "modulation": asdict(params),
        "recoverer": type(recoverer).__name__ if recoverer is not None else "IdentityRecoverer",
        "threshold": threshold,
        "messages": len(messages),
    }
    return ExperimentReport("distance_sweep", config, rows, seed)


# ---------------------------------------------------------------------------
# coding ablation


def residual_indices(
    indices: np.ndarray, ber: float, mode: CodingMode, rng: np.random.Generator
) -> np.ndarray:
    """Character indices after coding, independent channel bit flips and decoding.

    Flips hit the channel bits, so in CR3 mode they land on Hamming codewords
    and the decoder gets a chance to correct them.
    """
    bits = textcodec.indices_to_bits(indices)
    coded = fec.code_pipeline_encode(bits, mode)
    decoded, _ = fec.code_pipeline_decode(corruption.flip_bits(coded, ber, rng), bits.size, mode)
    return textcodec.bits_to_indices(decoded)


@dataclass
class _Cell:
    cer: list = field(default_factory=list)
    sim: list = field(default_factory=list)


def ablation(
    messages: Messages,
    ber_grid: Sequence[float] = corruption.DEFAULT_BER_GRID,
    trials: int = 200,
    seed: int = 0,
    modes: Sequence[CodingMode] = (CodingMode.CR0, CodingMode.CR3),
    protect_flags: Sequence[bool] = (False, True),
    recoverers: dict | None = None,
    threshold: float = recovery.SUCCESS_THRESHOLD,
) -> ExperimentReport:
    """Residual character error and recovery similarity by BER, mode, separator flag and recoverer.

    ``ber`` is the channel bit error rate before decoding. Both separator
    settings and every recoverer see the same flips for a given trial, so
    their differences are paired.
    """
    alphabet = textcodec.DEFAULT_ALPHABET
    recoverers = recoverers or {"identity": recovery.IdentityRecoverer(), "dictionary": recovery.default_recoverer()}
    rows = []
    for i, ber in enumerate(ber_grid):
        for mi, mode in enumerate(modes):
            cells = {(p, name): _Cell() for p in protect_flags for name in recoverers}
            for t in range(trials):
                text, purpose = messages[t % len(messages)]
                orig = textcodec.text_to_indices(text, alphabet)
                rng = rng_for(seed, i, mi, t)
                decoded = residual_indices(orig, float(ber), mode, rng)
                for p in protect_flags:
                    got = corruption.restore_separators(orig, decoded, alphabet, rng_for(seed, i, mi, t, 1)) if p else decoded
                    cer = float(np.mean(got != orig))
                    received = textcodec.indices_to_text(got, alphabet)
                    for name, rec in recoverers.items():
                        c = cells[(p, name)]
                        c.cer.append(cer)
                        c.sim.append(recovery.similarity(recovery._as_callable(rec)(received, purpose), text))
            for (p, name), c in cells.items():
                cer, cer_lo, cer_hi = mean_ci(c.cer)
                sim, sim_lo, sim_hi = mean_ci(c.sim)
                rows.append(
                    {
                        "ber": float(ber),
                        "mode": CodingMode(mode).value,
                        "protect_separators": bool(p),
                        "recoverer": name,
                        "trials": trials,
                        "cer": cer,
                        "cer_ci_low": cer_lo,
                        "cer_ci_high": cer_hi,
                        "mean_similarity": sim,
                        "similarity_ci_low": sim_lo,
                        "similarity_ci_high": sim_hi,
                        "success_rate": float(np.mean(np.array(c.sim) >= threshold)),
                    }
                )
    config = {
        "ber_grid": [float(b) for b in ber_grid],
        "trials": trials,
        "modes": [CodingMode(m).value for m in modes],
        "protect_separators": [bool(p) for p in protect_flags],
        "recoverers": list(recoverers),
        "threshold": threshold,
        "messages": len(messages),
    }
    return ExperimentReport("ablation", config, rows, seed)


# ---------------------------------------------------------------------------
# drift equalization


@dataclass(frozen=True)
class DriftResult:
    drift_ppm: float
    snr_db: float
    frames: int
    bits: int
    errors_equalized: int
    errors_unequalized: int

    @property
    def ber_equalized(self) -> float:
        return self.errors_equalized / self.bits

    @property
    def ber_unequalized(self) -> float:
        return self.errors_unequalized / self.bits


def drift_experiment(
    drift_ppm: float,
    snr_db: float,
    frames: int,
    data_symbols: int = 100,
    seed: int = 0,
    params: ModulationParams = DEFAULT_PARAMS,
) -> DriftResult:
    """Pre-decoding BER of an uncoded frame under clock drift, with and without equalization.

    The frame carries ``data_symbols`` random data symbols. The receiver
    clock runs ``drift_ppm`` fast; the start is found by the real
    synchronizer from the true position, and both receivers use the
    known frame plan so only timing tracking differs.
    """
    n_bits = data_symbols * params.sf
    plan = phy.plan_frame(n_bits, CodingMode.CR0, params.sf)
    lead = round(LEAD_IN * params.fs)
    bits = total = e_eq = e_no = 0
    for f in range(frames):
        rng = rng_for(seed, f)
        payload = rng.integers(0, 2, n_bits).astype(np.uint8)
        tx = np.concatenate([np.zeros(lead), phy.frame(payload, params, plan), np.zeros(round(TAIL * params.fs))])
        rx = channel.resample_drift(tx, drift_ppm)
        power = float(np.mean(phy.frame(payload, params, plan) ** 2))
        sigma = math.sqrt(channel.noise_variance_for_snr(power, snr_db, params.fs, params.bw))
        rx = rx + rng.normal(0.0, sigma, rx.size)
        try:
            sync = receiver.synchronize(rx, lead, params)
        except receiver.SyncFailed:
            e_eq += n_bits
            e_no += n_bits
        else:
            e_eq += int(np.count_nonzero(receiver.equalize_and_demodulate(rx, sync, params, plan, True) != payload))
            e_no += int(np.count_nonzero(receiver.equalize_and_demodulate(rx, sync, params, plan, False) != payload))
        total += n_bits
    return DriftResult(drift_ppm, snr_db, frames, total, e_eq, e_no)


# ---------------------------------------------------------------------------
# calibration


def calibrate_noise_level(
    levels: Sequence[float],
    target_ber: float = 0.02,
    distance: float = 20.0,
    frames: int = 400,
    seed: int = 0,
    messages: Messages | None = None,
    log=None,
) -> tuple[float, list[tuple[float, float]]]:
    """Noise level at which the end-to-end BER at ``distance`` reaches ``target_ber``.

    Every level is probed with the same per-frame seeds, which keeps the
    measured curve close to monotone; the answer is found by interpolating
    log BER between the two levels that bracket the target. Lost frames make
    the estimate lumpy, hence the large default frame count. Returns the
    level and the measured ``(level, ber)`` curve.
    """
    messages = messages or load_messages()
    curve = []
    for lvl in sorted(levels):
        ber = distance_sweep(messages, [distance], frames, seed, chan=ChannelParams(noise_level=lvl)).rows[0]["ber_measured"]
        curve.append((float(lvl), ber))
        if log:
            log(f"noise_level={lvl:.4f} ber={ber:.5f}")
    for (l0, b0), (l1, b1) in zip(curve, curve[1:]):
        if b0 <= target_ber <= b1:
            if b0 <= 0 or b1 == b0:
                return l1 if b1 == target_ber else l0, curve
            frac = (math.log(target_ber) - math.log(b0)) / (math.log(b1) - math.log(b0))
            return l0 + frac * (l1 - l0), curve
    raise ValueError(f"target BER {target_ber} not bracketed by the probed levels")
