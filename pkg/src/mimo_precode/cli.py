"""Command line front end: ``ber``, ``sumrate`` and ``flops`` sweeps to CSV.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .lattice import DEFAULT_DELTA
from .precoders import PowerLoading, PrecoderKind
from .simulate import (
    ConfigError,
    SweepRecord,
    SystemConfig,
    flop_survey,
    reduction_percent,
    run_ber_sweep,
    run_sumrate_sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

BER_HEADER = "ebn0_db,ber,bit_errors,bits_total,ci_halfwidth,mean_flops"
SUMRATE_HEADER = "ebn0_db,sum_rate_bits_per_hz"

# config-field -> flag, for error messages
_FLAG_FOR_FIELD = {
    "n_tx": "--layout",
    "user_rx": "--layout",
    "ebn0_grid_db": "--ebn0",
    "trials": "--trials",
    "packet_len": "--packet-len",
    "clll_delta": "--delta",
    "power_loading": "--power-loading",
    "precoder": "--kinds",
    "seed": "--seed",
}

_DEFAULTS = {
    "ber": {"ebn0": "0:2:30", "trials": 10_000},
    "sumrate": {"ebn0": "0:2:30", "trials": 1_000},
    "flops": {"ebn0": "15", "trials": 1_000},
}

_CONFIG_KEYS = {"layout", "ebn0", "trials", "packet_len", "kinds", "seed", "delta", "power_loading", "out"}


@dataclass(frozen=True)
class Variant:
    kind: PrecoderKind
    loading: PowerLoading

    @property
    def label(self) -> str:
        suffix = "-wf" if self.loading is PowerLoading.WATERFILL else ""
        return self.kind.value + suffix


@dataclass
class RunManifest:
    config: SystemConfig
    kinds: list[Variant]
    output_dir: Path
    emitted_files: list[tuple[str, str, str]] = field(default_factory=list)

    def write(self) -> Path:
        cfg = asdict(self.config)
        cfg["precoder"] = None  # one file per variant; see "kinds"
        cfg["power_loading"] = None
        payload = {
            "config": cfg,
            "kinds": [v.label for v in self.kinds],
            "emitted_files": [
                {"path": p, "kind": k, "sweep": s} for p, k, s in self.emitted_files
            ],
        }
        path = self.output_dir / "manifest.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


class CliConfigError(Exception):
    pass


def parse_layout(text: str) -> tuple[tuple[int, ...], int]:
    """``"2,2,2,2x8"`` -> ((2, 2, 2, 2), 8)."""
    try:
        users, n_tx = text.lower().split("x")
        user_rx = tuple(int(u) for u in users.split(","))
        return user_rx, int(n_tx)
    except ValueError:
        raise CliConfigError(f"--layout: expected N1,...,NKxNT, got {text!r}") from None


def parse_ebn0(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive), a comma list, or a single value."""
    text = text.strip()
    if not text:
        return ()
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 10) for i in range(max(n, 0)))
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise CliConfigError(f"--ebn0: expected start:step:stop or a list, got {text!r}") from None


def parse_kinds(text: str, loading: PowerLoading) -> list[Variant]:
    if text.strip() == "all":
        names = [k.value for k in PrecoderKind]
    else:
        names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise CliConfigError("--kinds: no precoder selected")
    variants = []
    for name in names:
        explicit_wf = name.endswith("-wf")
        try:
            kind = PrecoderKind(name[:-3] if explicit_wf else name)
        except ValueError:
            choices = ", ".join(k.value for k in PrecoderKind)
            raise CliConfigError(f"--kinds: unknown precoder {name!r} (choose from {choices}, optional -wf suffix)") from None
        if explicit_wf and not kind.svd_based:
            raise CliConfigError(f"--kinds: water-filling is only defined for bd, rbd, qrsvd-rbd, not {kind.value}")
        use_wf = explicit_wf or (loading is PowerLoading.WATERFILL and kind.svd_based)
        variant = Variant(kind, PowerLoading.WATERFILL if use_wf else PowerLoading.UNIFORM)
        if variant not in variants:
            variants.append(variant)
    return variants


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment; keys mirror the flags."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliConfigError(f"--config: cannot read {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliConfigError(f"--config: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise CliConfigError(f"--config: line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimo-precode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ber", "bit error rate versus Eb/N0, one CSV per precoder"),
        ("sumrate", "mean sum-rate versus Eb/N0, one CSV per precoder"),
        ("flops", "per-channel design cost and reductions of LR-S-GMI-MMSE"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; flags given here override it")
        p.add_argument("--layout", help="receive antennas per user and N_T, e.g. 2,2,2,2x8")
        p.add_argument("--ebn0", help="Eb/N0 grid in dB, start:step:stop")
        p.add_argument("--trials", type=int, help="channel realizations per point")
        p.add_argument("--packet-len", dest="packet_len", type=int, help="symbol vectors per packet")
        p.add_argument("--kinds", help="comma list of precoders, or 'all'")
        p.add_argument("--seed", type=int)
        p.add_argument("--delta", type=float, help="CLLL reduction parameter")
        p.add_argument("--power-loading", dest="power_loading", choices=["uniform", "wf"])
        p.add_argument("--out", help="output directory")
    return parser


def _settings(args: argparse.Namespace) -> dict:
    values = dict(_DEFAULTS[args.command])
    values.update(
        layout="2,2,2,2x8", packet_len=100, kinds="all", seed=0, delta=DEFAULT_DELTA,
        power_loading="uniform", out=".",
    )
    if args.config:
        values.update(read_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    return values


def _config_from(values: dict) -> tuple[SystemConfig, list[Variant], Path]:
    user_rx, n_tx = parse_layout(str(values["layout"]))
    try:
        loading = PowerLoading(str(values["power_loading"]))
    except ValueError:
        raise CliConfigError(f"--power-loading: expected uniform or wf, got {values['power_loading']!r}") from None
    variants = parse_kinds(str(values["kinds"]), loading)
    try:
        trials = int(values["trials"])
        packet_len = int(values["packet_len"])
        seed = int(values["seed"])
        delta = float(values["delta"])
    except ValueError as exc:
        raise CliConfigError(f"invalid numeric setting: {exc}") from None
    try:
        config = SystemConfig(
            n_tx=n_tx,
            user_rx=user_rx,
            ebn0_grid_db=parse_ebn0(str(values["ebn0"])),
            trials=trials,
            packet_len=packet_len,
            seed=seed,
            clll_delta=delta,
        )
    except ConfigError as exc:
        raise CliConfigError(f"{_FLAG_FOR_FIELD.get(exc.field, exc.field)}: {exc}") from None
    return config, variants, Path(values["out"])


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.10g}"


def write_ber_csv(path: Path, records: Sequence[SweepRecord]) -> None:
    lines = [BER_HEADER]
    for r in records:
        lines.append(",".join([
            _fmt(r.ebn0_db), _fmt(r.ber), str(r.bit_errors), str(r.bits_total),
            _fmt(r.ci_halfwidth), _fmt(r.mean_flops),
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sumrate_csv(path: Path, records: Sequence[SweepRecord]) -> None:
    lines = [SUMRATE_HEADER] + [f"{_fmt(r.ebn0_db)},{_fmt(r.sum_rate_bits_per_hz)}" for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _print_table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    print(title)
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)))


def _sweep(command: str, config: SystemConfig, variants: list[Variant], out: Path) -> int:
    manifest = RunManifest(config=config, kinds=variants, output_dir=out)
    results = {}
    status = EXIT_OK
    for variant in variants:
        cfg = replace(config, precoder=variant.kind, power_loading=variant.loading)
        if command == "ber":
            records = run_ber_sweep(cfg)
            path = out / f"ber_{variant.label}.csv"
            write_ber_csv(path, records)
        else:
            records = run_sumrate_sweep(cfg)
            path = out / f"sumrate_{variant.label}.csv"
            write_sumrate_csv(path, records)
        manifest.emitted_files.append((path.name, variant.label, command))
        results[variant.label] = records
        for r in records:
            if r.failed_trials:
                print(
                    f"error: {variant.label} at {r.ebn0_db:g} dB: {r.failed_trials} trial(s) failed, "
                    f"first failing trial index {r.first_failure}",
                    file=sys.stderr,
                )
                status = EXIT_NUMERIC
    manifest.write()
    labels = list(results)
    rows = []
    for idx, ebn0 in enumerate(config.ebn0_grid_db):
        if command == "ber":
            rows.append([f"{ebn0:g}"] + [f"{results[l][idx].ber:.3e}" for l in labels])
        else:
            rows.append([f"{ebn0:g}"] + [f"{results[l][idx].sum_rate_bits_per_hz:.3f}" for l in labels])
    title = "BER" if command == "ber" else "sum-rate [bits/Hz]"
    _print_table(title, ["Eb/N0"] + labels, rows)
    return status


def _flops(config: SystemConfig, variants: list[Variant], out: Path) -> int:
    manifest = RunManifest(config=config, kinds=variants, output_dir=out)
    kinds = []
    for v in variants:
        if v.kind not in kinds:
            kinds.append(v.kind)
    flop_lines = ["ebn0_db,kind,mean_flops"]
    red_lines = ["ebn0_db,baseline,reduction_percent"]
    rows = []
    for ebn0 in config.ebn0_grid_db:
        means = flop_survey(config, kinds, ebn0, config.trials)
        for kind, value in means.items():
            flop_lines.append(f"{_fmt(ebn0)},{kind.value},{_fmt(value)}")
            rows.append([f"{ebn0:g}", kind.value, f"{value:.1f}"])
        target = means.get(PrecoderKind.LR_SGMI_MMSE)
        if target is not None:
            for base in (PrecoderKind.RBD, PrecoderKind.BD, PrecoderKind.QRSVD_RBD):
                if base in means:
                    pct = reduction_percent(target, means[base])
                    red_lines.append(f"{_fmt(ebn0)},{base.value},{_fmt(pct)}")
                    rows.append([f"{ebn0:g}", f"reduction vs {base.value}", f"{pct:.1f}%"])
    for name, lines in (("flops.csv", flop_lines), ("reductions.csv", red_lines)):
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifest.emitted_files.append((name, "all", "flops"))
    manifest.write()
    _print_table(f"mean design flops over {config.trials} channels", ["Eb/N0", "kind", "flops"], rows)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, variants, out = _config_from(_settings(args))
        if args.command == "flops" and any(math.isinf(x) for x in config.ebn0_grid_db):
            raise CliConfigError("--ebn0: flop survey needs finite Eb/N0 values")
        if args.command == "sumrate" and any(math.isinf(x) for x in config.ebn0_grid_db):
            raise CliConfigError("--ebn0: sum-rate needs finite Eb/N0 values")
    except CliConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "flops":
        return _flops(config, variants, out)
    return _sweep(args.command, config, variants, out)


if __name__ == "__main__":
    sys.exit(main())
