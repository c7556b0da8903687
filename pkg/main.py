"""This module is used to run the code from the command line.

Subcommands synth, analyze, simulate and experiment read a json run config,
execute the pipeline prestabilize -> oracle -> synthesize -> evaluate and store
all artifacts together with a manifest in the output directory.
"""

import argparse
import json
import logging
import logging.config
import sys
from pathlib import Path

import numpy as np
import pandas as pd

import bench
import regret
from NetworkedPlant import NetworkedPlant
from NetworkedPlantStabilizationPart import TransformedPlant
from netgraph import DirectedGraph, load_graph
from REGRET_DEFAULTS import DefaultTopologyFile, ExperimentNames
from run_config import (
    ConfigError,
    RunConfig,
    SubcommandModes,
    apply_overrides,
    build_config,
    read_document,
    validate_config,
)
from slsadmm import admm_run
from sstf import FirTransferMatrix, FrequencyGrid
from synth import SynthesisConfig, SynthesisResult, synth_oracle, synth_spreg2, synth_spreg_inf
from versions import VERSION, library_versions

logger = logging.getLogger(__name__)

UsageExitCode = 2
RuntimeExitCode = 1


class RunContext:
    """Plant, graphs and stabilization of one run together with its artifact registry."""

    def __init__(self, config: RunConfig) -> None:
        """Loads the plant and prepares the output directory.

        Params:
            config: validated run configuration
        """
        self.config = config
        self.config_hash = config.config_hash()
        self.output_dir = Path(config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []
        self.grid_spec: bench.GridSpec | None = None
        self.plant = self._load_plant() if config.plant is not None else None

    def _load_plant(self) -> NetworkedPlant:
        source = self.config.plant
        if source.file is not None:
            return NetworkedPlant.from_file(source.file)
        if source.generator == "power_grid":
            self.grid_spec = bench.load_grid_spec(source.topology, source.subsystem, **source.params)
            return bench.build_power_grid(self.grid_spec)
        if source.generator == "toy":
            return bench.build_toy_plant(**source.params)
        return bench.build_random_plant(**source.params)

    @property
    def graph(self) -> DirectedGraph:
        """Learner graph, the plant graph unless a graph file is configured."""
        if self.config.graph is None:
            return self.plant.graph
        return load_graph(self.config.graph)

    @property
    def oracle_graph(self) -> DirectedGraph | None:
        """Oracle graph from file or from the oracle links of the grid."""
        if self.config.oracle_graph is None:
            return None
        if self.config.oracle_graph == "grid":
            return self.grid_spec.oracle_graph()
        return load_graph(self.config.oracle_graph)

    def synthesis_config(self, criterion: str | None = None) -> SynthesisConfig:
        """SynthesisConfig from the run settings."""
        return SynthesisConfig(
            fir_order=self.config.fir_order,
            grid=self.grid,
            criterion=criterion or self.config.criterion,
            lp_tol=self.config.lp_tol,
            sdp_tol=self.config.sdp_tol,
            solver=self.config.solver,
        )

    @property
    def grid(self) -> FrequencyGrid:
        """Evaluation and synthesis grid on [0, π]."""
        return FrequencyGrid.uniform(self.config.grid_points)

    def transformed(self) -> TransformedPlant:
        """Prestabilized transformed plant, deterministic for a fixed seed."""
        gains = self.plant.prestabilize(self.config.stabilization_pattern, self.config.seed)
        return self.plant.transformed(gains)

    def write_json(self, name: str, content: dict) -> None:
        """Json artifact carrying the config hash."""
        path = self.output_dir / name
        with path.open("w", encoding="utf-8") as file:
            json.dump({**content, "config_hash": self.config_hash}, file, indent=2)
        self.artifacts.append(name)
        logger.info("Wrote %s", path)

    def write_frame(self, name: str, frame: object) -> None:
        """Csv artifact from a DataFrame."""
        frame.to_csv(self.output_dir / name, index=False)
        self.artifacts.append(name)
        logger.info("Wrote %s", self.output_dir / name)

    def write_manifest(self) -> None:
        """Lists all artifacts of the run."""
        self.write_json(
            "manifest.json",
            {
                "version": VERSION,
                "libraries": library_versions(),
                "mode": self.config.mode,
                "artifacts": list(self.artifacts),
            },
        )


def _read_fir(path: Path) -> FirTransferMatrix:
    with Path(path).open(encoding="utf-8") as file:
        return FirTransferMatrix.from_dict(json.load(file))


def _oracle(context: RunContext, blocks: TransformedPlant) -> FirTransferMatrix:
    """Oracle from file or synthesized on the oracle graph."""
    if context.config.q_hat_file is not None:
        return _read_fir(context.config.q_hat_file)
    oracle_graph = context.oracle_graph or context.graph
    if context.config.criterion == "L1" and context.config.mode == "spreg-inf-admm":
        result, state = admm_run(blocks, None, oracle_graph, **_admm_options(context))
        context.write_frame("admm_trace_oracle.csv", state.trace)
    else:
        result = synth_oracle(
            blocks, oracle_graph, cfg=context.synthesis_config(), graph=context.graph
        )
    context.write_json("oracle.json", result.to_dict())
    context.write_json("q_hat.json", result.q.to_dict())
    return result.q


def _admm_options(context: RunContext) -> dict:
    return {
        "fir_order": context.config.fir_order,
        "rho": context.config.admm_rho,
        "max_iter": context.config.admm_max_iter,
        "adapt_rho": context.config.adapt_rho,
        "grid": context.grid,
        "workers": context.config.workers,
    }


def run_synth(context: RunContext) -> None:
    """Oracle or regret synthesis, writes result.json and the regret reports."""
    blocks = context.transformed()
    mode = context.config.mode
    if mode == "oracle":
        result = synth_oracle(
            blocks,
            context.oracle_graph or context.graph,
            cfg=context.synthesis_config(),
            graph=context.graph,
        )
        context.write_json("result.json", result.to_dict())
        context.write_json("q.json", result.q.to_dict())
        return

    q_hat = _oracle(context, blocks)
    result: SynthesisResult
    if mode == "spreg2":
        result = synth_spreg2(
            blocks, q_hat, context.graph, context.synthesis_config(), context.oracle_graph
        )
    elif mode == "spreg-inf":
        result = synth_spreg_inf(
            blocks, q_hat, context.graph, context.synthesis_config(), context.oracle_graph
        )
    else:
        result, state = admm_run(blocks, q_hat, context.graph, **_admm_options(context))
        context.write_frame("admm_trace.csv", state.trace)
    context.write_json("result.json", result.to_dict())
    context.write_json("q.json", result.q.to_dict())
    context.write_json(
        "regret.json",
        {
            "spreg2": regret.spreg2(result.q, q_hat, blocks, context.grid).to_dict(),
            "spreg_inf_bound": regret.spreg_inf_upper_bound(result.q, q_hat, blocks).to_dict(),
        },
    )


def run_analyze(context: RunContext) -> None:
    """SpReg₂ with its Ψ curve, worst case disturbance and SpReg∞ bound of a given pair."""
    blocks = context.transformed()
    q = _read_fir(context.config.q_file)
    q_hat = _read_fir(context.config.q_hat_file)
    samples = regret.psi_grid(q, q_hat, blocks, context.grid)
    report = regret.spreg2(q, q_hat, blocks, context.grid)
    worst = regret.worst_case_disturbance(
        samples, report.achieving_omega, context.config.disturbance.horizon
    )
    report.metadata.update(worst.metadata)
    report.metadata["attainment_ratio"] = regret.attainment_ratio(q, q_hat, blocks, worst)
    context.write_json(
        "analysis.json",
        {
            "spreg2": report.to_dict(),
            "spreg_inf_bound": regret.spreg_inf_upper_bound(q, q_hat, blocks).to_dict(),
        },
    )
    frame = pd.DataFrame(
        {
            "omega": [sample.omega for sample in samples],
            "lambda_max": [sample.lambda_max for sample in samples],
        }
    )
    context.write_frame("psi_curve.csv", frame)


def run_simulate(context: RunContext) -> None:
    """Closed loop simulation of a given Youla parameter."""
    settings = context.config.disturbance
    gains = context.plant.prestabilize(context.config.stabilization_pattern, context.config.seed)
    q = _read_fir(context.config.q_file)
    w = bench.make_disturbance(
        bench.DisturbanceSpec(
            settings.kind, bus=settings.bus, horizon=settings.horizon, seed=settings.seed
        ),
        context.plant.partitions.disturbance.total,
    )
    trajectory = context.plant.recover_and_simulate(q, w, gains=gains)
    context.write_frame("trajectory.csv", trajectory.to_frame())
    context.write_json(
        "simulation.json",
        {
            "average_output_norm": bench.average_output_norm(trajectory.z),
            "peak_output_norm": bench.peak_output_norm(trajectory.z),
            "energy": float(np.sum(trajectory.z**2)),
            "stabilization": gains.method,
        },
    )


def run_experiment(context: RunContext) -> None:
    """One of the power grid experiments."""
    config = context.config
    topology = config.plant.topology if config.plant is not None else DefaultTopologyFile
    settings = bench.ExperimentSettings(
        fir_order=config.fir_order,
        grid_points=config.grid_points,
        horizon=config.disturbance.horizon,
        realizations=config.realizations,
        seed=config.seed,
        admm_rho=config.admm_rho,
        admm_max_iter=config.admm_max_iter,
        adapt_rho=config.adapt_rho,
        topology=str(topology),
        solver=config.solver,
        workers=config.workers,
    )
    report = bench.run_experiment(config.experiment, settings)
    written = report.write(context.output_dir, {"config_hash": context.config_hash})
    context.artifacts.extend(path.name for path in written)


Runners = {
    "oracle": run_synth,
    "spreg2": run_synth,
    "spreg-inf": run_synth,
    "spreg-inf-admm": run_synth,
    "analyze": run_analyze,
    "simulate": run_simulate,
    "experiment": run_experiment,
}


def run(config: RunConfig) -> int:
    """Executes a validated configuration and writes its manifest.

    Params:
        config: run configuration
    Returns:
        exit status 0, failures propagate as exceptions
    """
    context = RunContext(config)
    logger.info("Running mode %s into %s", config.mode, context.output_dir)
    Runners[config.mode](context)
    context.write_manifest()
    logger.info("Run finished with %s artifacts", len(context.artifacts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline."""
    parser = argparse.ArgumentParser(
        prog="spatial-regret", description="Spatial regret controller synthesis"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (*SubcommandModes, "validate"):
        sub = subparsers.add_parser(command)
        sub.add_argument("config", nargs="?", type=Path, help="json run config")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config field, dotted keys address nested fields",
        )
        if command != "validate":
            sub.add_argument("--output-dir", type=Path, help="run directory")
    subparsers.choices["synth"].add_argument("--mode", choices=SubcommandModes["synth"])
    subparsers.choices["experiment"].add_argument(
        "--name", choices=ExperimentNames, help="experiment to run"
    )
    return parser


def _document(args: argparse.Namespace) -> dict:
    content = read_document(args.config) if args.config is not None else {}
    if args.command == "synth" and args.mode is not None:
        content["mode"] = args.mode
    if args.command in ("analyze", "simulate", "experiment"):
        content.setdefault("mode", args.command)
    if args.command == "experiment" and args.name is not None:
        content["experiment"] = args.name
    if args.output_dir is not None:
        content["output_dir"] = str(args.output_dir)
    return apply_overrides(content, args.overrides)


def _emit_error(error: Exception, details: object = None) -> None:
    print(  # noqa: T201
        json.dumps(
            {"error": {"type": type(error).__name__, "message": str(error), "details": details}},
            indent=2,
        )
    )


def _validate(args: argparse.Namespace) -> int:
    if args.config is None:
        _emit_error(ConfigError("validate needs a config file"))
        return UsageExitCode
    problems = validate_config(args.config, args.overrides)
    print(json.dumps({"ok": not problems, "errors": problems}, indent=2))  # noqa: T201
    return 0 if not problems else UsageExitCode


def main(argv: list[str] | None = None) -> int:
    """Command line entry point.

    Params:
        argv: arguments without program name, sys.argv if None
    Returns:
        0 on success, 2 for usage or config errors, 1 for runtime failures
    """
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _validate(args)
    try:
        config = build_config(_document(args))
        if config.mode not in SubcommandModes[args.command]:
            msg = f"mode {config.mode} does not belong to subcommand {args.command}"
            raise ConfigError(msg, [f"mode: expected one of {SubcommandModes[args.command]}"])
    except ConfigError as error:
        logger.error("Invalid configuration: %s", error)  # noqa: TRY400
        _emit_error(error, error.details)
        return UsageExitCode
    try:
        return run(config)
    except Exception as error:
        logger.exception("Run failed")
        _emit_error(error)
        return RuntimeExitCode


if __name__ == "__main__":
    config_file = Path("logging_config.json")
    with config_file.open(encoding="utf-8") as f_in:
        logging_config = json.load(f_in)
        logging.config.dictConfig(config=logging_config)
    logger.info("Executing spatial regret run")
    sys.exit(main())
