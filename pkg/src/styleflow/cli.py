"""Command-line pipeline: ingest -> styles -> panel -> influence -> forecast.

Every stage writes its artifacts into the output directory and can be rerun
independently off the cached artifacts of earlier stages.  A manifest
records the configuration and a content hash of every artifact; identical
config + seed reproduces identical hashes.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, datamodel, forecast, influence, styles, synth, trajectories
from .datamodel import DataError
from .forecast import DivergenceError
from .numstats import InsufficientDataError, SingularDesignError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# per-stage seed derivation: rng = default_rng([config.seed, STAGE_SEEDS[stage]])
STAGE_SEEDS = {"styles": 1, "forecast": 2, "baselines": 3, "synth": 4}


@dataclass
class RunConfig:
    """All pipeline knobs; defaults follow the reference experiment scale."""

    records: str = ""
    metadata: str = ""
    out: str = "out"
    seed: int = 0
    k_styles: int = 50
    d: int = 8
    lag_min: int = 1
    lag_max: int = 8
    alpha: float = 0.05
    lam: float = 1.0
    lr: float = 1e-2
    l2: float = 1e-8
    horizon: int = 26
    val_len: int = 26
    season: int = 52
    mode: str = "seasonal"  # or "deseason"
    hidden: int = 16
    max_epochs: int = 2000
    patience: int = 20
    smoothing_window: int = 1
    lag_correction: str = "bonferroni"
    bh: bool = False
    leave_self_out: bool = False
    cumulative_lags: bool = False
    dyn_window: int = 52
    dyn_step: int = 13
    gmm_standardize: bool = False

    def validate(self) -> None:
        if self.mode not in ("seasonal", "deseason"):
            raise ValueError(f"mode must be seasonal|deseason, got '{self.mode}'")
        if not 1 <= self.lag_min <= self.lag_max:
            raise ValueError("need 1 <= lag_min <= lag_max")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.k_styles < 1 or self.d < 1 or self.horizon < 1:
            raise ValueError("k_styles, d and horizon must be >= 1")

    def lags(self) -> range:
        return range(self.lag_min, self.lag_max + 1)


def load_config_file(path: str | Path) -> dict:
    """Flat key = value config format; '#' starts a comment."""
    text = Path(path).read_text()
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {ln}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def build_config(file_values: dict, cli_values: dict) -> RunConfig:
    """Defaults < config file < explicit CLI flags."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    merged: dict = {}
    for source in (file_values, cli_values):
        for key, value in source.items():
            if value is None:
                continue
            if key not in fields:
                raise DataError(f"unknown config key '{key}'")
            ftype = fields[key].type
            if isinstance(value, str):
                if ftype in ("int", int):
                    value = int(value)
                elif ftype in ("float", float):
                    value = float(value)
                elif ftype in ("bool", bool):
                    value = value.lower() in ("1", "true", "yes", "on")
            merged[key] = value
    config = RunConfig(**merged)
    config.validate()
    return config


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stage_seed(config: RunConfig, stage: str) -> list[int]:
    return [config.seed, STAGE_SEEDS[stage]]


# ---------------------------------------------------------------------------
# stages

def stage_ingest(config: RunConfig) -> datamodel.Corpus:
    meta = datamodel.load_city_metadata(config.metadata) if config.metadata else None
    return datamodel.load_records(config.records, metadata=meta)


def stage_styles(config: RunConfig, corpus: datamodel.Corpus) -> styles.StyleModel:
    seed = int(np.random.default_rng(_stage_seed(config, "styles")).integers(2**31))
    model = styles.fit_gmm(
        corpus, k=config.k_styles, seed=seed, standardize=config.gmm_standardize
    )
    styles.save_style_model(model, _out(config) / "style_model.json")
    return model


def stage_panel(config: RunConfig, corpus: datamodel.Corpus,
                model: styles.StyleModel) -> trajectories.TrajectoryPanel:
    posteriors = styles.assign_style_posteriors(model, corpus)
    panel = trajectories.build_panel(corpus, posteriors)
    panel = trajectories.interpolate_missing(panel)
    if config.smoothing_window > 1:
        panel = trajectories.smooth_panel(panel, config.smoothing_window)
    out = _out(config)
    trajectories.save_panel_csv(panel, out / "panel.csv")
    trajectories.save_panel_json(panel, out / "panel.json")
    if config.mode == "deseason":
        panel = trajectories.deseasonalize(panel, season=config.season)
        trajectories.save_panel_json(panel, out / "panel_deseason.json")
    return panel


def _modeling_panel(config: RunConfig) -> trajectories.TrajectoryPanel:
    out = _out(config)
    name = "panel_deseason.json" if config.mode == "deseason" else "panel.json"
    return trajectories.load_panel_json(out / name)


def _split_of(config: RunConfig, panel: trajectories.TrajectoryPanel) -> trajectories.SplitSpec:
    return trajectories.split(panel, horizon=config.horizon, val_len=config.val_len)


def stage_influence(config: RunConfig, panel: trajectories.TrajectoryPanel) -> influence.InfluenceTensor:
    sp = _split_of(config, panel)
    tensor = influence.discover_tensor(
        panel, d=config.d, lags=config.lags(), alpha=config.alpha, split=sp,
        lag_correction=config.lag_correction, bh=config.bh,
        cumulative=config.cumulative_lags,
    )
    influence.tensor_to_json(tensor, _out(config) / "tensor.json")
    world = influence.city_to_world(
        panel, d=config.d, lags=config.lags(), alpha=config.alpha, split=sp,
        leave_self_out=config.leave_self_out, lag_correction=config.lag_correction,
        cumulative=config.cumulative_lags,
    )
    doc = {
        "city_ids": world.city_ids,
        "lags": world.lags.tolist(),
        "p_values": world.p_values.tolist(),
        "skipped": world.skipped,
    }
    with open(_out(config) / "world_influence.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True)
    return tensor


def stage_rank(config: RunConfig, tensor: influence.InfluenceTensor) -> influence.InfluenceScores:
    scores = influence.influence_scores(tensor)
    out = _out(config)
    influence.scores_to_csv(scores, out / "scores.csv")
    influence.ranking_to_csv(scores, out / "rankings.csv", by="net")
    return scores


def stage_correlate(config: RunConfig, scores, tensor) -> None:
    if not config.metadata:
        return
    meta = datamodel.load_city_metadata(config.metadata)
    report = influence.correlate_metadata(scores, tensor, meta)
    (_out(config) / "correlations.json").write_text(report.to_json())


def stage_dynamics(config: RunConfig, panel: trajectories.TrajectoryPanel) -> None:
    dyn = influence.influence_dynamics(
        panel, window=config.dyn_window, step=config.dyn_step, d=config.d,
        lags=config.lags(), alpha=config.alpha, lag_correction=config.lag_correction,
    )
    influence.dynamics_to_csv(dyn, _out(config) / "dynamics.csv")


def stage_forecast(config: RunConfig, panel, tensor) -> forecast.ForecastPanel:
    sp = _split_of(config, panel)
    seed = int(np.random.default_rng(_stage_seed(config, "forecast")).integers(2**31))
    model = forecast.train_coherent(
        panel, tensor, sp, lam=config.lam, lr=config.lr, l2=config.l2, seed=seed,
        d=config.d, hidden=config.hidden, patience=config.patience,
        max_epochs=config.max_epochs,
    )
    out = _out(config)
    forecast.model_to_json(model, out / "forecast_model.json")
    fc = forecast.forecast_horizon(model, panel, sp)
    forecast.forecast_to_csv(fc, out / "forecasts.csv")
    return fc


def stage_evaluate(config: RunConfig, panel, fc: forecast.ForecastPanel) -> dict:
    sp = _split_of(config, panel)
    truth = panel.values[:, :, sp.test_start :]
    tag = config.mode
    seed = int(np.random.default_rng(_stage_seed(config, "baselines")).integers(2**31))
    reports = {"coherent": forecast.compute_metrics(fc, truth, tag=tag)}
    for method in forecast.BASELINE_METHODS:
        try:
            bl = forecast.baseline_forecast(method, panel, sp, seed=seed)
        except InsufficientDataError as exc:
            reports[method] = exc
            continue
        reports[method] = forecast.compute_metrics(bl, truth, tag=tag)
    doc: dict = {"mode": tag, "models": {}, "comparisons": {}}
    for name, rep in reports.items():
        if isinstance(rep, Exception):
            doc["models"][name] = {"error": str(rep)}
            continue
        doc["models"][name] = rep.to_dict()
        if name != "coherent":
            delta, p = forecast.compare_models(reports["coherent"], rep)
            doc["comparisons"][f"coherent_vs_{name}"] = {"delta_mae": delta, "p_value": p}
    with open(_out(config) / "metrics.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
    return doc


def stage_export_graph(config: RunConfig, tensor, scores) -> None:
    out = _out(config)
    (out / "graph.dot").write_text(influence.tensor_to_dot(tensor))
    if config.metadata:
        meta = datamodel.load_city_metadata(config.metadata)
        for level in ("country", "continent"):
            regions = influence.region_scores(scores, meta, level=level)
            influence.region_scores_to_csv(regions, out / f"regions_{level}.csv", level)


ARTIFACTS = [
    "style_model.json", "panel.csv", "panel.json", "panel_deseason.json",
    "tensor.json", "world_influence.json", "scores.csv", "rankings.csv",
    "correlations.json", "dynamics.csv", "forecast_model.json", "forecasts.csv",
    "metrics.json", "graph.dot", "regions_country.csv", "regions_continent.csv",
]


def write_manifest(config: RunConfig) -> Path:
    out = _out(config)
    manifest = {
        "version": __version__,
        "config": dataclasses.asdict(config),
        "artifacts": {
            name: _sha256(out / name) for name in ARTIFACTS if (out / name).exists()
        },
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return path


def run_pipeline(config: RunConfig) -> Path:
    """All stages in order; returns the manifest path."""
    stage = "ingest"
    try:
        corpus = stage_ingest(config)
        stage = "styles"
        model = stage_styles(config, corpus)
        stage = "panel"
        panel = stage_panel(config, corpus, model)
        stage = "influence"
        tensor = stage_influence(config, panel)
        stage = "rank"
        scores = stage_rank(config, tensor)
        stage = "correlate"
        stage_correlate(config, scores, tensor)
        stage = "dynamics"
        stage_dynamics(config, panel)
        stage = "forecast"
        fc = stage_forecast(config, panel, tensor)
        stage = "evaluate"
        stage_evaluate(config, panel, fc)
        stage = "export-graph"
        stage_export_graph(config, tensor, scores)
        stage = "manifest"
        return write_manifest(config)
    except Exception as exc:
        raise PipelineError(stage, exc) from exc


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--records", help="records CSV path")
    p.add_argument("--metadata", help="city metadata CSV path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--mode", choices=["seasonal", "deseason"])
    p.add_argument("--k-styles", type=int, dest="k_styles")
    p.add_argument("--alpha", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--val-len", type=int, dest="val_len")
    p.add_argument("--hidden", type=int)
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--smoothing-window", type=int, dest="smoothing_window")
    p.add_argument("--dyn-window", type=int, dest="dyn_window")
    p.add_argument("--dyn-step", type=int, dest="dyn_step")
    p.add_argument("--lag-correction", choices=["bonferroni", "none"], dest="lag_correction")
    p.add_argument("--bh", action="store_const", const=True, default=None)
    p.add_argument("--leave-self-out", action="store_const", const=True,
                   default=None, dest="leave_self_out")
    p.add_argument("--cumulative-lags", action="store_const", const=True,
                   default=None, dest="cumulative_lags")
    p.add_argument("--gmm-standardize", action="store_const", const=True,
                   default=None, dest="gmm_standardize")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    skip = {"config", "command", "cities", "styles", "weeks", "edges", "amplitude",
            "noise", "idio", "idio_rho", "records_per_bin"}
    cli_values = {k: v for k, v in vars(args).items() if k not in skip}
    return build_config(file_values, cli_values)


def _parse_edge(text: str) -> synth.PlantedEdge:
    parts = text.split(":")
    if len(parts) != 5:
        raise DataError(f"edge spec must be src:tgt:style:lag:strength, got '{text}'")
    return synth.PlantedEdge(
        source=int(parts[0]), target=int(parts[1]), style=int(parts[2]),
        lag=int(parts[3]), strength=float(parts[4]),
    )


def cmd_synth(args: argparse.Namespace) -> None:
    spec = synth.SyntheticSpec(
        n_cities=args.cities, n_styles=args.styles, n_weeks=args.weeks,
        edges=[_parse_edge(e) for e in args.edges or []],
        seasonal_amplitude=args.amplitude, noise_sigma=args.noise,
        idio_sigma=args.idio, idio_rho=args.idio_rho,
        records_per_bin=args.records_per_bin, seed=args.seed or 0,
    )
    paths = synth.generate_synthetic(spec, args.out or "synth_out")
    for name, path in paths.items():
        print(f"{name}: {path}")


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="styleflow", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    stage_cmds = ["run", "styles", "panel", "influence", "rank", "correlate",
                  "dynamics", "forecast", "evaluate", "export-graph"]
    for name in stage_cmds:
        p = sub.add_parser(name)
        _add_common(p)

    p_synth = sub.add_parser("synth", help="generate a planted-structure fixture")
    p_synth.add_argument("--cities", type=int, default=5)
    p_synth.add_argument("--styles", type=int, default=3)
    p_synth.add_argument("--weeks", type=int, default=160)
    p_synth.add_argument("--edges", action="append",
                         help="src:tgt:style:lag:strength (repeatable)")
    p_synth.add_argument("--amplitude", type=float, default=0.1)
    p_synth.add_argument("--noise", type=float, default=0.01)
    p_synth.add_argument("--idio", type=float, default=0.05)
    p_synth.add_argument("--idio-rho", type=float, default=0.7, dest="idio_rho")
    p_synth.add_argument("--records-per-bin", type=int, default=40, dest="records_per_bin")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out")

    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args)
            return EXIT_OK
        config = _config_from_args(args)
        if args.command == "run":
            path = run_pipeline(config)
            print(f"manifest: {path}")
            return EXIT_OK
        if args.command == "styles":
            corpus = stage_ingest(config)
            stage_styles(config, corpus)
        elif args.command == "panel":
            corpus = stage_ingest(config)
            model = styles.load_style_model(_out(config) / "style_model.json")
            stage_panel(config, corpus, model)
        elif args.command == "influence":
            stage_influence(config, _modeling_panel(config))
        elif args.command == "rank":
            tensor = influence.tensor_from_json(_out(config) / "tensor.json")
            stage_rank(config, tensor)
        elif args.command == "correlate":
            tensor = influence.tensor_from_json(_out(config) / "tensor.json")
            stage_correlate(config, influence.influence_scores(tensor), tensor)
        elif args.command == "dynamics":
            stage_dynamics(config, _modeling_panel(config))
        elif args.command == "forecast":
            panel = _modeling_panel(config)
            tensor = influence.tensor_from_json(_out(config) / "tensor.json")
            stage_forecast(config, panel, tensor)
        elif args.command == "evaluate":
            panel = _modeling_panel(config)
            sp = _split_of(config, panel)
            model = forecast.model_from_json(_out(config) / "forecast_model.json")
            fc = forecast.forecast_horizon(model, panel, sp)
            stage_evaluate(config, panel, fc)
        elif args.command == "export-graph":
            tensor = influence.tensor_from_json(_out(config) / "tensor.json")
            stage_export_graph(config, tensor, influence.influence_scores(tensor))
        return EXIT_OK
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.cause
        if isinstance(cause, (DataError, FileNotFoundError)):
            return EXIT_DATA
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularDesignError, DivergenceError, InsufficientDataError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
