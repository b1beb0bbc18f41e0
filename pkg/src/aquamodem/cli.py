"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 no decodable packet, 3 I/O error.
Every randomized command takes ``--seed`` and is bit-reproducible.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import wave
from dataclasses import replace
from pathlib import Path

import numpy as np

from aquamodem import __version__, channel, corruption, experiments, phy, receiver, recovery, textcodec, wavio
from aquamodem.channel import ChannelParams
from aquamodem.fec import CodingMode
from aquamodem.phy import ModulationParams

EXIT_OK, EXIT_USAGE, EXIT_DECODE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    """``"5,10,15"`` or ``"0:0.2:0.01"`` (start:stop:step, stop included)."""
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(p) for p in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be positive")
        n = int(round((stop - start) / step))
        return [round(start + i * step, 10) for i in range(n + 1)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("modulation")
    g.add_argument("--sf", type=int, help="spreading factor (default 5)")
    g.add_argument("--bw", type=float, help="chirp bandwidth in Hz (default 2000)")
    g.add_argument("--fc", type=float, help="carrier frequency in Hz (default 11000)")
    g.add_argument("--fs", type=float, help="sample rate in Hz (default 48000)")
    p.add_argument("--config", type=Path, help="INI file with [modulation], [channel] and [run] sections")
    p.add_argument("--seed", type=int, help="master seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aquamodem", description="Chirp acoustic text modem and its evaluation harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="text -> WAV")
    p.add_argument("text")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--mode", choices=[m.value for m in CodingMode])
    p.add_argument("--distance", type=float, help="pass the frame through the simulated channel at this range (m)")
    p.add_argument("--padding", type=float, default=0.25, help="seconds of silence before and after the frame")
    _add_common(p)

    p = sub.add_parser("decode", help="WAV -> text")
    p.add_argument("wav", type=Path)
    p.add_argument("--reference", help="text that was sent, for a bit error count")
    p.add_argument("--no-equalize", action="store_true", help="disable training-symbol timing tracking")
    _add_common(p)

    p = sub.add_parser("distance-sweep", help="end-to-end BER and similarity against distance")
    p.add_argument("--distances", type=_floats, help="comma list or start:stop:step (default 5:30:5)")
    p.add_argument("--distance", type=float, help="single distance, instead of --distances")
    p.add_argument("--trials", type=int, help="frames per distance (default 100)")
    p.add_argument("--mode", choices=[m.value for m in CodingMode])
    p.add_argument("--messages", type=Path, help="purpose<TAB>text file (default: bundled corpus)")
    p.add_argument("--recoverer", choices=["identity", "dictionary"], default="identity")
    p.add_argument("--vocabulary", type=Path, help="word list for the dictionary recoverer")
    p.add_argument("--threshold", type=float, help="similarity success threshold (default 0.92)")
    p.add_argument("-o", "--out", type=Path, required=True, help="CSV report; a .json sidecar is written next to it")
    _add_common(p)

    p = sub.add_parser("ablation", help="coding, separator protection and recovery ablation")
    p.add_argument("--bers", type=_floats, help="channel BER grid (default 0:0.2:0.01)")
    p.add_argument("--trials", type=int, help="messages per grid cell (default 200)")
    p.add_argument("--modes", default="cr0,cr3")
    p.add_argument("--separators", choices=["off", "on", "both"], default="both")
    p.add_argument("--recoverers", default="identity,dictionary")
    p.add_argument("--messages", type=Path)
    p.add_argument("--vocabulary", type=Path)
    p.add_argument("--threshold", type=float)
    p.add_argument("-o", "--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("gen-corpus", help="corrupted/original message pairs as JSON lines")
    p.add_argument("--messages", type=Path)
    p.add_argument("--grid", type=_floats, help="BER grid (default 0:0.2:0.01)")
    p.add_argument("--count", type=int, default=1, help="corruptions per message and BER")
    p.add_argument("--bers-per-message", type=int, help="random subset of the grid per message")
    p.add_argument("--protect-separators", action="store_true")
    p.add_argument("-o", "--out", type=Path, required=True)
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------
# configuration


def _read_config(path: Path | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is not None:
        cfg.read_string(path.read_text(encoding="utf-8"))
    return cfg


def _modulation(args, cfg) -> ModulationParams:
    base = ModulationParams()
    sec = cfg["modulation"] if cfg.has_section("modulation") else {}
    kw = {}
    for name in ("sf", "bw", "fc", "fs"):
        value = getattr(args, name)
        if value is None and name in sec:
            value = sec[name]
        if value is not None:
            kw[name] = int(value) if name == "sf" else float(value)
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _channel(args, cfg, params: ModulationParams) -> ChannelParams:
    chan = ChannelParams.from_section(cfg["channel"]) if cfg.has_section("channel") else ChannelParams()
    return replace(chan, fc=params.fc, fs=params.fs, bw=params.bw)


def _run(args, cfg, name: str, default, cast=str):
    value = getattr(args, name, None)
    if value is None and cfg.has_section("run") and name in cfg["run"]:
        value = cast(cfg["run"][name])
    return default if value is None else value


# ---------------------------------------------------------------------------
# commands


def cmd_encode(args, cfg) -> int:
    params = _modulation(args, cfg)
    mode = CodingMode(_run(args, cfg, "mode", "cr3"))
    seed = _run(args, cfg, "seed", 0, int)
    try:
        text = textcodec.normalize_message(args.text)
    except textcodec.CodecError as exc:
        raise UsageError(f"cannot encode {args.text!r}: {exc}") from None
    pad = np.zeros(round(args.padding * params.fs))
    x = np.concatenate([pad, phy.transmit(textcodec.encode_text(text), mode, params), pad])
    normalize = True
    if args.distance is not None:
        chan = replace(_channel(args, cfg, params), distance=args.distance, seed=seed)
        x, report = channel.apply_channel(x, chan)
        print(f"channel: {report.effective_snr_db:.1f} dB in-band SNR", file=sys.stderr)
        # Keep the channel's noise-to-signal ratio; scale only to avoid clipping.
        x = x / max(1.0, float(np.max(np.abs(x))) / wavio.FULL_SCALE)
        normalize = False
    wavio.write_wav(args.out, x, int(params.fs), normalize=normalize)
    print(text)
    return EXIT_OK


def cmd_decode(args, cfg) -> int:
    params = _modulation(args, cfg)
    x, fs = wavio.read_wav(args.wav)
    if fs != int(params.fs):
        raise UsageError(f"{args.wav} is sampled at {fs} Hz, expected {int(params.fs)}")
    packets = receiver.receive(x, params, equalize=not args.no_equalize)
    if not packets:
        print("no packet found", file=sys.stderr)
        return EXIT_DECODE
    for pkt in packets:
        print(textcodec.decode_bits(pkt.bits))
        diag = {
            "offset": round(pkt.offset, 2),
            "mode": pkt.plan.mode.value,
            "payload_bits": pkt.plan.payload_bit_length,
            "corrected_codewords": pkt.corrected_codewords,
        }
        if args.reference is not None:
            ref = textcodec.encode_text(textcodec.normalize_message(args.reference))
            n = max(ref.size, pkt.bits.size)
            common = min(ref.size, pkt.bits.size)
            errors = int(np.count_nonzero(ref[:common] != pkt.bits[:common])) + (n - common)
            diag["bit_errors"] = errors
            diag["ber"] = errors / n if n else 0.0
        print(json.dumps(diag), file=sys.stderr)
    return EXIT_OK


def _recoverer(name: str, vocabulary: Path | None):
    if name == "identity":
        return recovery.IdentityRecoverer()
    if name == "dictionary":
        return recovery.DictionaryRecoverer.from_file(vocabulary) if vocabulary else recovery.default_recoverer()
    raise UsageError(f"unknown recoverer {name!r}")


def cmd_distance_sweep(args, cfg) -> int:
    params = _modulation(args, cfg)
    distances = [args.distance] if args.distance is not None else _run(args, cfg, "distances", None, _floats)
    distances = distances or [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    trials = _run(args, cfg, "trials", 100, int)
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    report = experiments.distance_sweep(
        experiments.load_messages(args.messages),
        distances,
        trials,
        seed=_run(args, cfg, "seed", 0, int),
        mode=CodingMode(_run(args, cfg, "mode", "cr3")),
        chan=_channel(args, cfg, params),
        params=params,
        recoverer=_recoverer(args.recoverer, args.vocabulary),
        threshold=_run(args, cfg, "threshold", recovery.SUCCESS_THRESHOLD, float),
    )
    report.write(args.out)
    return EXIT_OK


def cmd_ablation(args, cfg) -> int:
    trials = _run(args, cfg, "trials", 200, int)
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    try:
        modes = [CodingMode(m.strip()) for m in args.modes.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    flags = {"off": (False,), "on": (True,), "both": (False, True)}[args.separators]
    recs = {name.strip(): _recoverer(name.strip(), args.vocabulary) for name in args.recoverers.split(",")}
    report = experiments.ablation(
        experiments.load_messages(args.messages),
        args.bers or corruption.DEFAULT_BER_GRID,
        trials,
        seed=_run(args, cfg, "seed", 0, int),
        modes=modes,
        protect_flags=flags,
        recoverers=recs,
        threshold=_run(args, cfg, "threshold", recovery.SUCCESS_THRESHOLD, float),
    )
    report.write(args.out)
    return EXIT_OK


def cmd_gen_corpus(args, cfg) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    records = corruption.generate_corpus(
        experiments.load_messages(args.messages),
        args.grid or corruption.DEFAULT_BER_GRID,
        per_message=args.count,
        seed=_run(args, cfg, "seed", 0, int),
        protect_separators=args.protect_separators,
        bers_per_message=args.bers_per_message,
    )
    corruption.write_corpus(records, args.out)
    print(f"{len(records)} records", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "distance-sweep": cmd_distance_sweep,
    "ablation": cmd_ablation,
    "gen-corpus": cmd_gen_corpus,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _read_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (OSError, wave.Error, wavio.WavFormatError) as exc:
        print(f"aquamodem: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, configparser.Error) as exc:
        print(f"aquamodem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
