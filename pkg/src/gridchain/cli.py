"""Experiment runner: single runs, threshold sweeps, a public-network
comparison point, and the end-to-end meter-to-chain demo.

Configuration comes from defaults, then an optional flat ``key=value`` file,
then command-line flags (flags win). CSV output follows the schema in
:mod:`gridchain.metrics`; progress goes to standard error.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import random
import sys
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

from .chain import Transaction
from .contract import CallKind, ContractCall, ReplayedState, replay_chain
from .meter import (
    MeterAccount,
    build_record_tx,
    decrypt_record,
    encrypt_record,
    load_meter_stream,
    simulate_meter_stream,
    unpack_record_fields,
)
from .metrics import RunStats, SweepPoint, aggregate_runs, write_sweep_csv
from .netsim import InvalidConfig, SimConfig, run_many, run_simulation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

OUTPUT_DIR_ENV = "GRIDCHAIN_OUT_DIR"

MODES = ("single", "sweep", "mainnet-compare", "e2e-demo")

# Published operating point of a three-node public-network simulation used
# as a directional comparison: ~14.05 tx/s at a ~17.5% uncle rate.
MAINNET_REFERENCE_TPS = 14.05
MAINNET_REFERENCE_UNCLE_RATE = 0.1748
MAINNET_MEAN_DELAY_S = 12.6
MAINNET_LAMBDA = 9


class ConfigFileError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    mode: str
    config: SimConfig
    sweep_lambdas: list[int]
    output_path: str | None = None
    trace: bool = False
    workers: int = 1
    meter_interval_s: int = 5
    meter_stream_file: str | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidConfig(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "sweep" and not self.sweep_lambdas:
            raise InvalidConfig("sweep mode needs a non-empty --sweep list")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")
        if self.meter_interval_s < 1:
            raise InvalidConfig("meter interval must be >= 1 second")
        self.config.validate()


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigFileError(f"invalid {what}: {text!r}") from exc


def _parse_float_list(text: str, what: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigFileError(f"invalid {what}: {text!r}") from exc


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; blank lines and '#' comments ignored."""
    values: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigFileError(f"{path}: cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigFileError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        values[key] = value.strip()
    return values


_FILE_KEYS = {
    "mode": str,
    "lambda": int,
    "sweep": "int_list",
    "nodes": int,
    "hash_shares": "float_list",
    "delay": float,
    "tx_rate": float,
    "gas_limit": int,
    "tx_gas": int,
    "duration": float,
    "runs": int,
    "seed": int,
    "out": str,
    "trace": "bool",
    "total_hashrate": float,
    "tx_size_kb": float,
    "warmup_blocks": int,
    "initial_difficulty": int,
    "workers": int,
    "meter_interval": int,
    "meter_file": str,
}


def _coerce_file_values(path: str, raw: dict[str, str]) -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in raw.items():
        if key not in _FILE_KEYS:
            raise ConfigFileError(f"{path}: unknown config key {key!r}")
        kind = _FILE_KEYS[key]
        try:
            if kind == "int_list":
                out[key] = _parse_int_list(value, key)
            elif kind == "float_list":
                out[key] = _parse_float_list(value, key)
            elif kind == "bool":
                if value.lower() not in ("0", "1", "true", "false", "yes", "no"):
                    raise ValueError(value)
                out[key] = value.lower() in ("1", "true", "yes")
            else:
                out[key] = kind(value)
        except ValueError as exc:
            raise ConfigFileError(f"{path}: invalid value for {key!r}: {value!r}") from exc
    return out


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridchain",
        description="Private proof-of-work chain simulator with a tunable "
        "difficulty threshold and an encrypted meter-record pipeline.",
    )
    parser.add_argument("--mode", choices=MODES, default=None)
    parser.add_argument("--lambda", dest="lam", type=int, default=None,
                        help="difficulty threshold in seconds")
    parser.add_argument("--sweep", type=str, default=None,
                        help="comma-separated thresholds for sweep mode")
    parser.add_argument("--nodes", type=int, default=None)
    parser.add_argument("--hash-shares", type=str, default=None,
                        help="comma-separated per-node hashrate fractions")
    parser.add_argument("--delay", type=float, default=None,
                        help="block propagation delay in seconds")
    parser.add_argument("--tx-rate", type=float, default=None,
                        help="transactions created per second")
    parser.add_argument("--gas-limit", type=int, default=None)
    parser.add_argument("--tx-gas", type=int, default=None)
    parser.add_argument("--duration", type=float, default=None,
                        help="simulated seconds per run")
    parser.add_argument("--runs", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None)
    parser.add_argument("--config", type=str, default=None,
                        help="flat key=value config file")
    parser.add_argument("--trace", action="store_true", default=None,
                        help="write per-run block event traces next to the output")
    return parser


def parse_config(argv: list[str] | None = None) -> ExperimentSpec:
    """Merge defaults, config file and flags into an ExperimentSpec."""
    args = build_arg_parser().parse_args(argv)
    file_values: dict[str, object] = {}
    if args.config is not None:
        file_values = _coerce_file_values(args.config, read_config_file(args.config))

    def pick(flag_value, file_key: str, default):
        if flag_value is not None:
            return flag_value
        if file_key in file_values:
            return file_values[file_key]
        return default

    base = SimConfig()
    config = dataclasses.replace(
        base,
        lambda_=pick(args.lam, "lambda", base.lambda_),
        num_nodes=pick(args.nodes, "nodes", base.num_nodes),
        propagation_delay=pick(args.delay, "delay", base.propagation_delay),
        tx_rate=pick(args.tx_rate, "tx_rate", base.tx_rate),
        block_gas_limit=pick(args.gas_limit, "gas_limit", base.block_gas_limit),
        mean_tx_gas=pick(args.tx_gas, "tx_gas", base.mean_tx_gas),
        sim_duration=pick(args.duration, "duration", base.sim_duration),
        num_runs=pick(args.runs, "runs", base.num_runs),
        seed=pick(args.seed, "seed", base.seed),
        total_hashrate=file_values.get("total_hashrate", base.total_hashrate),
        tx_size_kb=file_values.get("tx_size_kb", base.tx_size_kb),
        warmup_blocks=file_values.get("warmup_blocks", base.warmup_blocks),
        initial_difficulty=file_values.get("initial_difficulty", base.initial_difficulty),
    )
    shares_text = args.hash_shares
    if shares_text is not None:
        config = dataclasses.replace(
            config, hash_shares=tuple(_parse_float_list(shares_text, "hash-shares"))
        )
    elif "hash_shares" in file_values:
        config = dataclasses.replace(config, hash_shares=tuple(file_values["hash_shares"]))

    sweep_text = args.sweep
    if sweep_text is not None:
        sweep = _parse_int_list(sweep_text, "sweep")
    elif "sweep" in file_values:
        sweep = list(file_values["sweep"])
    else:
        sweep = []

    return ExperimentSpec(
        mode=pick(args.mode, "mode", "single"),
        config=config,
        sweep_lambdas=sweep,
        output_path=pick(args.out, "out", None),
        trace=bool(pick(args.trace, "trace", False)),
        workers=int(file_values.get("workers", 1)),
        meter_interval_s=int(file_values.get("meter_interval", 5)),
        meter_stream_file=file_values.get("meter_file"),
    )


def _resolve_output(spec: ExperimentSpec, default_name: str) -> Path:
    if spec.output_path is not None:
        return Path(spec.output_path)
    return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / default_name


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def sweep_points(spec: ExperimentSpec, lambdas: list[int]) -> list[SweepPoint]:
    points = []
    for lam in lambdas:
        config = dataclasses.replace(spec.config, lambda_=int(lam))
        stats = run_many(config, workers=spec.workers)
        point = aggregate_runs(stats, lambda_=int(lam))
        _progress(
            f"lambda={lam}: interval {point.mean('mean_block_interval'):.3f} s, "
            f"throughput {point.mean('throughput'):.2f} tx/s, "
            f"uncle rate {point.mean('uncle_rate') * 100:.2f}% "
            f"({point.runs} runs)"
        )
        points.append(point)
    return points


def run_sweep(spec: ExperimentSpec) -> Path:
    """One CSV row per threshold in ``spec.sweep_lambdas``."""
    out = _resolve_output(spec, "sweep.csv")
    points = sweep_points(spec, spec.sweep_lambdas)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        write_sweep_csv(points, fh)
    _progress(f"wrote {out}")
    return out


def run_single(spec: ExperimentSpec) -> Path:
    out = _resolve_output(spec, "single.csv")
    if spec.trace:
        trace_dir = out.parent
        for idx in range(spec.config.num_runs):
            trace_file = trace_dir / f"trace_run{idx}.csv"
            with open(trace_file, "w", encoding="utf-8", newline="\n") as fh:
                run_simulation(spec.config, idx, trace=fh)
        _progress(f"wrote {spec.config.num_runs} trace files to {trace_dir}")
    points = sweep_points(spec, [int(spec.config.lambda_)])
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        write_sweep_csv(points, fh)
    _progress(f"wrote {out}")
    return out


def run_mainnet_compare(spec: ExperimentSpec) -> Path:
    """Directional comparison against the public-network reference point:
    three nodes, the unmodified threshold of 9, and the published ~12.6 s
    mean propagation delay."""
    out = _resolve_output(spec, "mainnet_compare.csv")
    config = dataclasses.replace(
        spec.config,
        num_nodes=3,
        hash_shares=None,
        lambda_=MAINNET_LAMBDA,
        propagation_delay=MAINNET_MEAN_DELAY_S,
    )
    compare_spec = dataclasses.replace(spec, config=config)
    points = sweep_points(compare_spec, [MAINNET_LAMBDA])
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        write_sweep_csv(points, fh)
    point = points[0]
    print(
        "public-network reference: "
        f"{MAINNET_REFERENCE_TPS:.2f} tx/s at {MAINNET_REFERENCE_UNCLE_RATE * 100:.2f}% uncles; "
        f"simulated: {point.mean('throughput'):.2f} tx/s at "
        f"{point.mean('uncle_rate') * 100:.2f}% uncles "
        f"(interval {point.mean('mean_block_interval'):.2f} s)"
    )
    _progress(f"wrote {out}")
    return out


@dataclass
class DemoReport:
    records_sent_trusted: int
    records_sent_untrusted: int
    records_confirmed: int
    records_recovered: int
    decryption_failures: int
    records_rejected: int
    stats: RunStats
    state: ReplayedState

    def lines(self) -> list[str]:
        return [
            f"records sent (trusted senders):   {self.records_sent_trusted}",
            f"records sent (untrusted sender):  {self.records_sent_untrusted}",
            f"records confirmed on chain:       {self.records_confirmed}",
            f"records recovered by decryption:  {self.records_recovered}",
            f"decryption failures:              {self.decryption_failures}",
            f"records rejected by the registry: {self.records_rejected}",
            f"mean block interval:              {self.stats.mean_block_interval:.3f} s",
            f"throughput:                       {self.stats.throughput:.2f} tx/s",
            f"uncle rate:                       {self.stats.uncle_rate * 100:.2f}%",
        ]


def _control_tx(sender, call: ContractCall, config: SimConfig) -> Transaction:
    return Transaction(
        tx_id=0, sender=sender, gas=config.mean_tx_gas, size_kb=config.tx_size_kb,
        payload=call,
    )


def run_e2e_demo(spec: ExperimentSpec) -> DemoReport:
    """Meters to chain and back: the owner deploys the registry and trusts
    two meter accounts; all three meters (one untrusted) stream encrypted
    readings; the canonical chain is replayed and every stored record is
    decrypted and checked against what was sent."""
    config = spec.config
    rng = random.Random(config.seed ^ 0x6D657465725F726E)
    owner = MeterAccount.generate("owner", rng)
    trusted = [MeterAccount.generate(f"SM-{i:02d}", rng) for i in (1, 2)]
    rogue = MeterAccount.generate("SM-03", rng)
    meters = trusted + [rogue]

    injected: list[tuple[float, int, Transaction]] = []
    injected.append((0.5, 0, _control_tx(owner.address, ContractCall(CallKind.DEPLOY), config)))
    for k, acct in enumerate(trusted):
        call = ContractCall(CallKind.ADD_ACC, addr=acct.address)
        injected.append((1.0 + 0.25 * k, 0, _control_tx(owner.address, call, config)))

    lead_in = 10.0
    stream_seconds = max(0, int(config.sim_duration - 2 * lead_in))
    epoch0 = 1_750_000_000
    sent: dict[tuple[str, int], Decimal] = {}
    sent_trusted = 0
    sent_untrusted = 0
    encrypted_nonces: list[bytes] = []
    for m_index, acct in enumerate(meters):
        if spec.meter_stream_file is not None:
            records = load_meter_stream(spec.meter_stream_file)
            records = [dataclasses.replace(r, device_id=acct.name) for r in records]
        else:
            records = simulate_meter_stream(
                acct.name, spec.meter_interval_s, stream_seconds, rng,
                start_time=epoch0,
            )
        home_node = (m_index + 1) % config.num_nodes
        for r_index, rec in enumerate(records):
            enc = encrypt_record(rec, acct.key, rng)
            encrypted_nonces.append(enc.nonce)
            tx = build_record_tx(enc, acct.address, gas=config.mean_tx_gas)
            send_time = lead_in + r_index * spec.meter_interval_s + 0.1 * m_index
            injected.append((send_time, home_node, tx))
            sent[(rec.device_id, rec.collected_at)] = rec.energy_kwh
            if acct is rogue:
                sent_untrusted += 1
            else:
                sent_trusted += 1
    if len(set(encrypted_nonces)) != len(encrypted_nonces):
        raise AssertionError("duplicate record nonce within one run")

    result = run_simulation(config, 0, injected=injected)
    state = replay_chain(result.canonical_blocks())

    key_by_addr = {acct.address: acct.key for acct in meters}
    recovered = 0
    failures = 0
    for idx in range(1, state.total_of_reco + 1):
        reco = state.reco[idx]
        event = state.event_log[idx - 1]
        try:
            enc = unpack_record_fields(reco.id, reco.time, reco.value)
            rec = decrypt_record(enc, key_by_addr[event.addr])
        except Exception:
            failures += 1
            continue
        if sent.get((rec.device_id, rec.collected_at)) == rec.energy_kwh:
            recovered += 1
        else:
            failures += 1

    return DemoReport(
        records_sent_trusted=sent_trusted,
        records_sent_untrusted=sent_untrusted,
        records_confirmed=state.total_of_reco,
        records_recovered=recovered,
        decryption_failures=failures,
        records_rejected=state.failures_by_sender.get(rogue.address, 0),
        stats=result.stats,
        state=state,
    )


def main(argv: list[str] | None = None) -> int:
    try:
        spec = parse_config(argv)
        spec.validate()
    except (ConfigFileError, InvalidConfig, NotImplementedError) as exc:
        print(f"gridchain: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if spec.mode == "single":
            run_single(spec)
        elif spec.mode == "sweep":
            run_sweep(spec)
        elif spec.mode == "mainnet-compare":
            run_mainnet_compare(spec)
        else:
            report = run_e2e_demo(spec)
            for line in report.lines():
                print(line)
            if spec.output_path is not None:
                Path(spec.output_path).write_text(
                    "\n".join(report.lines()) + "\n", encoding="utf-8"
                )
    except (ConfigFileError, InvalidConfig) as exc:
        print(f"gridchain: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure
        print(f"gridchain: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
