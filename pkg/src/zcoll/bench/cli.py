"""``zcoll-bench``: sweep message sizes for one collective and write a CSV.

Settings resolve as command line, then ``ZCOLL_*`` environment variables
(``--ranks`` ↔ ``ZCOLL_RANKS``), then the ``[bench]`` section of an INI file
given with ``--config``, then built-in defaults.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import re
import sys

from ..pipeline import OverlapMode
from ..transport import GiB
from .data import Distribution
from .experiment import COLLECTIVES, ExperimentSpec, QuantSpec, default_net, run_experiment
from .report import emit_report

ENV_PREFIX = "ZCOLL_"
log = logging.getLogger("zcoll.bench")

DEFAULTS = {
    "collective": "allreduce",
    "ranks": "4",
    "sizes": "64K:1G",
    "codec": "auto",
    "quant": "eb:1e-4",
    "bw": str(10 * GiB),
    "latency": "5e-6",
    "regime": "inter",
    "overlap": "on",
    "dist": "gaussian",
    "seed": "0",
    "out": "zcoll_bench.csv",
    "markdown": "",
    "trace": "",
    "max_batches_per_step": "4",
    "cost_model": "device",
    "huffman_mode": "shared",
    "small_batch_threshold": "4096",
    "huff_threshold": "65536",
    "min_gain_permil": "50",
    "lam": "0.25",
    "inprimitive_threshold": str(4 << 20),
}

_UNITS = {"": 1, "B": 1, "K": 1 << 10, "KB": 1 << 10, "KIB": 1 << 10, "M": 1 << 20,
          "MB": 1 << 20, "MIB": 1 << 20, "G": 1 << 30, "GB": 1 << 30, "GIB": 1 << 30}


def parse_size(text: str) -> int:
    m = re.fullmatch(r"\s*(\d+)\s*([A-Za-z]*)\s*", text)
    if not m or m.group(2).upper() not in _UNITS:
        raise ValueError(f"bad size {text!r}")
    return int(m.group(1)) * _UNITS[m.group(2).upper()]


def parse_sizes(text: str) -> tuple:
    """Comma list of sizes; ``LO:HI`` expands to the doubling sweep LO, 2·LO, ... HI."""
    out = []
    for part in text.split(","):
        if not part.strip():
            continue
        if ":" in part:
            lo, hi = (parse_size(p) for p in part.split(":", 1))
            if lo <= 0 or hi < lo:
                raise ValueError(f"bad size range {part!r}")
            while lo <= hi:
                out.append(lo)
                lo *= 2
        else:
            out.append(parse_size(part))
    if not out:
        raise ValueError("no sizes given")
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zcoll-bench", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with a [bench] section")
    p.add_argument("--collective", choices=COLLECTIVES)
    p.add_argument("--ranks", type=int)
    p.add_argument("--sizes", help="e.g. 64K,1M or 64K:1G")
    p.add_argument("--codec", choices=["auto", "raw", "fixed", "huffman"])
    p.add_argument("--quant", help="eb:REL, qsgd:LEVELS or none")
    p.add_argument("--bw", type=float, help="link bandwidth, bytes/s")
    p.add_argument("--latency", type=float, help="link latency, seconds")
    p.add_argument("--regime", choices=["inter", "intra"])
    p.add_argument("--overlap", choices=["on", "off"])
    p.add_argument("--dist", help="uniform, gaussian, geom:P or file:PATH")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--markdown", help="also write a Markdown CR table here")
    p.add_argument("--trace", help="prefix for per-size timeline CSVs")
    p.add_argument("--max-batches-per-step", type=int, dest="max_batches_per_step")
    p.add_argument("--cost-model", choices=["device", "measured"], dest="cost_model")
    p.add_argument("--huffman-mode", choices=["shared", "embedded"], dest="huffman_mode")
    p.add_argument("--small-batch-threshold", type=parse_size, dest="small_batch_threshold")
    p.add_argument("--huff-threshold", type=parse_size, dest="huff_threshold")
    p.add_argument("--min-gain-permil", type=int, dest="min_gain_permil")
    p.add_argument("--lam", type=float, help="exposed codec fraction under overlap")
    p.add_argument("--inprimitive-threshold", type=parse_size, dest="inprimitive_threshold")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    settings = dict(DEFAULTS)
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise FileNotFoundError(args.config)
        if cp.has_section("bench"):
            for k, v in cp.items("bench"):
                key = k.replace("-", "_")
                if key not in DEFAULTS:
                    raise ValueError(f"unknown config key {k!r}")
                settings[key] = v
    for key in DEFAULTS:
        env = environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            settings[key] = env
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = str(val)
    return settings


def spec_from_settings(s: dict) -> ExperimentSpec:
    net = default_net(s["regime"], float(s["bw"]), float(s["latency"]))
    return ExperimentSpec(
        collective=s["collective"], ranks=int(s["ranks"]), sizes=parse_sizes(s["sizes"]),
        codec=s["codec"], quant=QuantSpec.parse(s["quant"]), net=net,
        overlap=OverlapMode(s["overlap"]), distribution=Distribution.parse(s["dist"]),
        seed=int(s["seed"]), max_batches_per_step=int(s["max_batches_per_step"]),
        cost_model=s["cost_model"], huffman_mode=s["huffman_mode"],
        small_batch_threshold=parse_size(s["small_batch_threshold"]),
        huff_threshold=parse_size(s["huff_threshold"]),
        min_gain_permil=int(s["min_gain_permil"]), lam=float(s["lam"]),
        inprimitive_threshold=parse_size(s["inprimitive_threshold"]))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        settings = resolve(args)
        spec = spec_from_settings(settings)
    except (ValueError, FileNotFoundError) as exc:
        print(f"zcoll-bench: {exc}", file=sys.stderr)
        return 2
    rows = run_experiment(spec, trace_prefix=settings["trace"] or None)
    for r in rows:
        log.info("%s size=%d cr=%.2f speedup=%.2f mix=%s", r.collective, r.size_bytes,
                 r.cr_final, r.speedup_vs_raw, r.codec_mix)
    emit_report(rows, settings["out"], settings["markdown"] or None)
    print(f"wrote {len(rows)} rows to {settings['out']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
