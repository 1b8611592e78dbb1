"""Command-line entry point.

Usage::

    dnnsemi COMMAND [--config run.ini] [--out DIR] [--seed N] [section.key=value ...]

Configuration is an INI file with one section per module (``data``, ``loss``,
``architecture``, ``train``, ``nuisance``, ``estimand``, ``policy``, ``dgp``,
``simulation``, ``advise``, ``run``). Bare ``key=value`` overrides go to the
command's own section (``dnnsemi advise n=10000 d=20 beta=21``).

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .causal import (
    CausalDataset,
    DegenerateScoresError,
    EstimateReport,
    NuisanceEstimates,
    ate,
    decomposition,
    profit,
    profit_diff,
    tot,
)
from .losses import LossDomainError, LossKind, LossTag, mean_from_f
from .network import ArchitectureSpec, advise_architecture, forward, load as load_network, save as save_network
from .policy import ThresholdPolicyClass, evaluate_grid, select_optimal, treat_all, treat_none
from .simulation import DgpSpec, run_placebo, run_study
from .training import (
    NonFiniteLossError,
    TrainConfig,
    fit,
    fit_joint,
    fit_propensity,
    fit_regressions_by_arm,
)

log = logging.getLogger("dnnsemi")

COMMANDS = ("train", "ate", "profit", "tot", "decomp", "policy", "simulate", "placebo", "advise")

PRESETS = {
    # randomized treatment, linear outcomes, 20 covariates, architecture {20, 15, 5}
    "randomized": {
        "dgp": {"d": "20", "propensity_mode": "constant", "outcome_mode": "linear", "n": "10000"},
        "architecture": {"hidden_widths": "20,15,5"},
        "simulation": {"reps": "500", "nuisance": "trained"},
    },
    # observational design, same outcome model and network
    "observational": {
        "dgp": {"d": "20", "propensity_mode": "logistic", "outcome_mode": "linear", "n": "10000"},
        "architecture": {"hidden_widths": "20,15,5"},
        "simulation": {"reps": "300", "nuisance": "trained"},
    },
}


class ConfigError(ValueError):
    exit_code = 2


class DataError(ValueError):
    exit_code = 3


@dataclass
class LoadedData:
    dataset: CausalDataset
    covariates: list[str]


def _section(cfg: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if not cfg.has_section(name):
        cfg.add_section(name)
    return cfg[name]


def load_csv(path, outcome: str, treatment: Optional[str], covariates="all") -> LoadedData:
    """Read a comma-separated file with a header into a typed dataset.

    ``covariates`` is ``"all"`` (every column other than the outcome and
    treatment) or a list of column names. Without a treatment column the
    returned dataset carries an all-zero treatment vector.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file {path} does not exist")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if row]
    if not rows:
        raise DataError(f"{path} has a header but no rows")
    for name in [outcome] + ([treatment] if treatment else []):
        if name not in header:
            raise DataError(f"column {name!r} not found in {path}")
    if covariates == "all":
        covs = [h for h in header if h not in (outcome, treatment)]
    else:
        covs = list(covariates)
        missing = [c for c in covs if c not in header]
        if missing:
            raise DataError(f"covariate columns {missing} not found in {path}")
    if not covs:
        raise DataError("no covariate columns selected")
    pos = {h: i for i, h in enumerate(header)}
    X = np.empty((len(rows), len(covs)))
    y = np.empty(len(rows))
    t = np.zeros(len(rows))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            y[r] = float(row[pos[outcome]])
            X[r] = [float(row[pos[c]]) for c in covs]
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric value") from None
        if treatment:
            raw = row[pos[treatment]].strip()
            try:
                val = float(raw)
            except ValueError:
                val = None
            if val not in (0.0, 1.0):
                raise DataError(f"line {lineno}: treatment value {raw!r} is not 0 or 1")
            t[r] = val
    log.info("loaded %d rows from %s: outcome=%s treatment=%s covariates=%d", len(rows), path, outcome, treatment, len(covs))
    return LoadedData(CausalDataset(X, y, t), covs)


def write_csv(path, X, y, t, names: list[str], outcome="y", treatment="t") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([outcome, treatment, *names])
        for yi, ti, xi in zip(y, t, X):
            w.writerow([repr(float(yi)), int(ti), *(repr(float(v)) for v in xi)])


# -- config helpers ---------------------------------------------------------


def _get(sec, key, conv=str, default=None, required=False):
    if key not in sec or sec[key].strip() == "":
        if required:
            raise ConfigError(f"missing required key [{sec.name}] {key}")
        return default
    raw = sec[key].strip()
    try:
        if conv is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r} is not a valid {conv.__name__}") from None


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.strip("{}[]() ").replace(",", " ").split())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.strip("{}[]() ").replace(",", " ").split())


def architecture_from(cfg, input_dim: int, output_dim: int = 1) -> ArchitectureSpec:
    sec = _section(cfg, "architecture")
    widths = _get(sec, "hidden_widths", _int_list, required=True)
    rates = _get(sec, "dropout_rates", _float_list)
    clamp = _get(sec, "clamp_bound", str, "none")
    try:
        return ArchitectureSpec(
            input_dim, widths, output_dim, rates, None if clamp.lower() == "none" else float(clamp)
        )
    except ValueError as exc:
        raise ConfigError(f"[architecture] {exc}") from None


def train_config_from(cfg, seed: int) -> TrainConfig:
    sec = _section(cfg, "train")
    defaults = TrainConfig()
    try:
        return TrainConfig(
            learning_rate=_get(sec, "learning_rate", float, defaults.learning_rate),
            batch_size=_get(sec, "batch_size", int, defaults.batch_size),
            epochs=_get(sec, "epochs", int, defaults.epochs),
            optimizer=_get(sec, "optimizer", str, defaults.optimizer),
            validation_fraction=_get(sec, "validation_fraction", float, defaults.validation_fraction),
            seed=_get(sec, "seed", int, seed),
            shuffle=_get(sec, "shuffle", bool, defaults.shuffle),
        )
    except ValueError as exc:
        raise ConfigError(f"[train] {exc}") from None


def dgp_from(cfg) -> DgpSpec:
    sec = _section(cfg, "dgp")
    base = DgpSpec()
    try:
        return DgpSpec(
            d=_get(sec, "d", int, base.d),
            propensity_mode=_get(sec, "propensity_mode", str, base.propensity_mode),
            outcome_mode=_get(sec, "outcome_mode", str, base.outcome_mode),
            n=_get(sec, "n", int, base.n),
            coef_seed=_get(sec, "coef_seed", int, base.coef_seed),
            normal_scale=_get(sec, "normal_scale", str, base.normal_scale),
        )
    except ValueError as exc:
        raise ConfigError(f"[dgp] {exc}") from None


def _load_data(cfg, need_treatment=True) -> LoadedData:
    sec = _section(cfg, "data")
    path = _get(sec, "path", str, required=True)
    outcome = _get(sec, "outcome", str, "y")
    treatment = _get(sec, "treatment", str, "t" if need_treatment else None)
    covs = _get(sec, "covariates", str, "all")
    covs = "all" if covs == "all" else [c.strip() for c in covs.split(",") if c.strip()]
    return load_csv(path, outcome, treatment, covs)


def _policy_from_text(text: str, covariates: list[str]):
    """``all``, ``none`` or ``threshold:<covariate>:<value>``."""
    text = text.strip()
    if text.lower() == "all":
        return treat_all
    if text.lower() == "none":
        return treat_none
    parts = text.split(":")
    if len(parts) != 3 or parts[0] != "threshold":
        raise ConfigError(f"policy {text!r} must be all, none or threshold:<covariate>:<value>")
    return ThresholdPolicyClass(_covariate_index(parts[1], covariates), (float(parts[2]),)).policy(float(parts[2]))


def _covariate_index(name: str, covariates: list[str]) -> int:
    if name in covariates:
        return covariates.index(name)
    try:
        return int(name)
    except ValueError:
        raise ConfigError(f"unknown covariate {name!r}") from None


def _nuisance_component(value: str, kind: str):
    """A constant or a network file; ``kind`` is ``outcome`` or ``propensity``."""
    try:
        return float(value)
    except ValueError:
        pass
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"nuisance file {path} does not exist")
    net = load_network(path)
    if kind == "propensity":
        return lambda X: mean_from_f(LossKind(LossTag.LOGISTIC), forward(net, X)[:, 0])
    return lambda X: forward(net, X)[:, 0]


def _as_function(component):
    if callable(component):
        return component
    return lambda X: np.full(np.asarray(X).shape[0], float(component))


def build_nuisances(cfg, data: CausalDataset, seed: int, out_dir: Optional[Path]) -> NuisanceEstimates:
    run = _section(cfg, "run")
    sec = _section(cfg, "nuisance")
    clip_eps = _get(run, "clip_eps", float, 0.01)
    randomized = _get(run, "randomized_treatment", bool, False)
    source = _get(sec, "source", str, "fit")
    if source == "files":
        if "joint" in sec:
            net = load_network(sec["joint"])
            mu0 = lambda X: forward(net, X)[:, 0]
            mu1 = lambda X: forward(net, X)[:, 0] + forward(net, X)[:, 1]
        else:
            mu0 = _as_function(_nuisance_component(_get(sec, "mu0", str, required=True), "outcome"))
            mu1 = _as_function(_nuisance_component(_get(sec, "mu1", str, required=True), "outcome"))
        if randomized:
            return NuisanceEstimates.randomized(mu0, mu1, data.t, clip_eps)
        p = _nuisance_component(_get(sec, "propensity", str, required=True), "propensity")
        return NuisanceEstimates(mu0, mu1, p, clip_eps)
    if source != "fit":
        raise ConfigError(f"[nuisance] source must be fit or files, got {source!r}")
    tc = train_config_from(cfg, seed)
    outcome_fit = _get(sec, "outcome_fit", str, "joint")
    if outcome_fit == "joint":
        model = fit_joint(data.X, data.y, data.t, architecture_from(cfg, data.d, 2), tc)
        if out_dir is not None:
            save_network(model.net, out_dir / "outcome_joint.net")
    elif outcome_fit == "per_arm":
        model = fit_regressions_by_arm(data.X, data.y, data.t, architecture_from(cfg, data.d, 1), tc)
        if out_dir is not None:
            save_network(model.model0.net, out_dir / "outcome_mu0.net")
            save_network(model.model1.net, out_dir / "outcome_mu1.net")
    else:
        raise ConfigError(f"[nuisance] outcome_fit must be joint or per_arm, got {outcome_fit!r}")
    if randomized:
        return NuisanceEstimates.randomized(model.mu0, model.mu1, data.t, clip_eps)
    prop = fit_propensity(data.X, data.t, architecture_from(cfg, data.d, 1), tc)
    if out_dir is not None:
        save_network(prop.net, out_dir / "propensity.net")
    return NuisanceEstimates(model.mu0, model.mu1, prop.mean, clip_eps)


# -- output -----------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def write_summary(path: Path, items: dict) -> None:
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items.items()))


def _report_outputs(out: Path, reports: list[EstimateReport]) -> str:
    write_rows(out / "report.csv", [r.as_row() for r in reports])
    summary = {}
    for r in reports:
        for k, v in r.as_row().items():
            if k != "estimand_tag":
                summary[f"{r.estimand_tag}.{k}"] = v
    write_summary(out / "summary.txt", summary)
    return "\n".join(f"{k} = {_fmt(v)}" for k, v in summary.items())


# -- commands ---------------------------------------------------------------


def cmd_advise(cfg, seed, out: Path) -> str:
    sec = _section(cfg, "advise")
    n = _get(sec, "n", float, required=True)
    d = _get(sec, "d", int, required=True)
    beta = _get(sec, "beta", float, required=True)
    try:
        spec = advise_architecture(n, d, beta, _get(sec, "c_width", float, 1.0), _get(sec, "c_depth", float, 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    items = {"H": spec.hidden_widths[0], "L": spec.depth, "input_dim": d}
    write_summary(out / "summary.txt", items)
    return "\n".join(f"{k}={v}" for k, v in items.items())


def cmd_train(cfg, seed, out: Path) -> str:
    sec = _section(cfg, "train")
    target = _get(sec, "target", str, "outcome")
    tc = train_config_from(cfg, seed)
    if target == "joint":
        loaded = _load_data(cfg)
        data = loaded.dataset
        model = fit_joint(data.X, data.y, data.t, architecture_from(cfg, data.d, 2), tc)
        net, report = model.net, model.fit
    elif target == "propensity":
        loaded = _load_data(cfg)
        data = loaded.dataset
        model = fit_propensity(data.X, data.t, architecture_from(cfg, data.d, 1), tc)
        net, report = model.net, model.fit
    elif target == "outcome":
        loaded = _load_data(cfg, need_treatment=False)
        data = loaded.dataset
        lsec = _section(cfg, "loss")
        try:
            kind = LossKind.parse(_get(lsec, "kind", str, "leastsquares"), _get(lsec, "bound_M", float, 1.0))
        except ValueError as exc:
            raise ConfigError(f"[loss] {exc}") from None
        if kind.tag is LossTag.MULTINOMIAL:
            raise ConfigError("multinomial training from CSV needs one-hot outcome columns; not supported by the CLI")
        model = fit(data.X, data.y, architecture_from(cfg, data.d, kind.output_dim), kind, tc)
        net, report = model.net, model.fit
    else:
        raise ConfigError(f"[train] target must be outcome, propensity or joint, got {target!r}")
    save_network(net, out / "model.net")
    items = asdict(report)
    write_summary(out / "fit_report.txt", items)
    return "\n".join(f"{k} = {_fmt(v)}" for k, v in items.items())


def _estimation_setup(cfg, seed, out):
    loaded = _load_data(cfg)
    nuis = build_nuisances(cfg, loaded.dataset, seed, out)
    return loaded, nuis


def _level(cfg) -> float:
    return _get(_section(cfg, "run"), "level", float, 0.95)


def _margin_cost(cfg) -> tuple[float, float]:
    run = _section(cfg, "run")
    return _get(run, "margin", float, 1.0), _get(run, "cost", float, 0.0)


def cmd_ate(cfg, seed, out):
    loaded, nuis = _estimation_setup(cfg, seed, out)
    report, _ = ate(loaded.dataset, nuis, _level(cfg))
    return _report_outputs(out, [report])


def cmd_profit(cfg, seed, out):
    loaded, nuis = _estimation_setup(cfg, seed, out)
    sec = _section(cfg, "estimand")
    m, c = _margin_cost(cfg)
    reports = []
    s_new = _policy_from_text(_get(sec, "policy", str, "all"), loaded.covariates)
    rep, _ = profit(loaded.dataset, nuis, s_new, m, c, _level(cfg))
    reports.append(rep)
    base = _get(sec, "base_policy", str)
    if base:
        s_base = _policy_from_text(base, loaded.covariates)
        diff, _ = profit_diff(loaded.dataset, nuis, s_new, s_base, m, c, _level(cfg))
        reports.append(diff)
    return _report_outputs(out, reports)


def cmd_tot(cfg, seed, out):
    loaded, nuis = _estimation_setup(cfg, seed, out)
    return _report_outputs(out, [tot(loaded.dataset, nuis, _level(cfg))])


def cmd_decomp(cfg, seed, out):
    loaded, nuis = _estimation_setup(cfg, seed, out)
    dec = decomposition(loaded.dataset, nuis, _level(cfg))
    return _report_outputs(out, [dec.total, dec.covariates, dec.structure])


def cmd_policy(cfg, seed, out):
    loaded, nuis = _estimation_setup(cfg, seed, out)
    sec = _section(cfg, "policy")
    idx = _covariate_index(_get(sec, "covariate", str, required=True), loaded.covariates)
    if "thresholds" in sec:
        cls = ThresholdPolicyClass(idx, _float_list(sec["thresholds"]))
    else:
        cls = ThresholdPolicyClass.from_range(
            idx,
            _get(sec, "start", float, required=True),
            _get(sec, "stop", float, required=True),
            _get(sec, "step", float, required=True),
        )
    base = _policy_from_text(_get(sec, "base", str, "none"), loaded.covariates)
    m, c = _margin_cost(cfg)
    curve = evaluate_grid(loaded.dataset, nuis, cls, base, m, c, _level(cfg))
    write_rows(out / "policy_curve.csv", curve.rows())
    best = select_optimal(curve)
    items = {"selected_threshold": best.threshold, **{f"selected.{k}": v for k, v in best.report.as_row().items() if k != "estimand_tag"}}
    write_summary(out / "summary.txt", items)
    return "\n".join(f"{k} = {_fmt(v)}" for k, v in items.items())


def _simulation_settings(cfg):
    run = _section(cfg, "run")
    sim = _section(cfg, "simulation")
    return dict(
        reps=_get(sim, "reps", int, _get(run, "reps", int, 500)),
        workers=_get(sim, "workers", int, 1),
        clip_eps=_get(run, "clip_eps", float, 0.01),
        level=_level(cfg),
        outcome_fit=_get(sim, "outcome_fit", str, "joint"),
    )


def cmd_simulate(cfg, seed, out):
    spec = dgp_from(cfg)
    sim = _section(cfg, "simulation")
    nuisance = _get(sim, "nuisance", str, "trained")
    arch = architecture_from(cfg, spec.d, 1) if nuisance == "trained" else None
    report = run_study(spec, arch, train_config_from(cfg, seed), master_seed=seed, nuisance=nuisance, **_simulation_settings(cfg))
    report.write(out, "simulate")
    return report.summary_block()


def cmd_placebo(cfg, seed, out):
    sim = _section(cfg, "simulation")
    fraction = _get(sim, "placebo_fraction", float, 0.5)
    if "path" in _section(cfg, "data"):
        source = _load_data(cfg).dataset
    else:
        source = dgp_from(cfg)
    arch = architecture_from(cfg, source.d, 1)
    try:
        report = run_placebo(source, arch, train_config_from(cfg, seed), placebo_fraction=fraction, seed=seed, **_simulation_settings(cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report.write(out, "placebo")
    return report.summary_block()


HANDLERS = {
    "train": cmd_train,
    "ate": cmd_ate,
    "profit": cmd_profit,
    "tot": cmd_tot,
    "decomp": cmd_decomp,
    "policy": cmd_policy,
    "simulate": cmd_simulate,
    "placebo": cmd_placebo,
    "advise": cmd_advise,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dnnsemi", description="Deep-network first steps for doubly robust causal inference.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help="config overrides, [section.]key=value")
    p.add_argument("--config", type=Path)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("dnnsemi-out"))
    p.add_argument("--reps", type=int)
    p.add_argument("--randomized", action="store_true", help="use the sample treated share as the propensity")
    p.add_argument("--clip-eps", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--cost", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def assemble_config(args) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    if args.preset:
        cfg.read_dict(PRESETS[args.preset])
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file {args.config} does not exist")
        try:
            cfg.read(args.config)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {args.config}: {exc}".replace("\n", " ")) from None
    default_section = {"advise": "advise", "simulate": "simulation", "placebo": "simulation"}.get(args.command, "run")
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        section, dot, key = key.rpartition(".")
        _section(cfg, section if dot else default_section)[key] = value
    run = _section(cfg, "run")
    if args.seed is not None:
        run["seed"] = str(args.seed)
    if args.reps is not None:
        _section(cfg, "simulation")["reps"] = str(args.reps)
    if args.randomized:
        run["randomized_treatment"] = "true"
    if args.clip_eps is not None:
        run["clip_eps"] = str(args.clip_eps)
    if args.margin is not None:
        run["margin"] = str(args.margin)
    if args.cost is not None:
        run["cost"] = str(args.cost)
    return cfg


def _config_text(cfg: configparser.ConfigParser) -> str:
    return "".join(
        f"[{s}]\n" + "".join(f"{k} = {cfg[s][k]}\n" for k in sorted(cfg[s])) for s in sorted(cfg.sections())
    )


def write_manifest(out: Path, command: str, cfg, seed: int, argv: list[str]) -> None:
    text = _config_text(cfg)
    (out / "config.ini").write_text(text)
    manifest = {
        "command": command,
        "argv": argv,
        "seed": seed,
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "config_file": "config.ini",
        "versions": {"dnnsemi": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_intermixed_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = assemble_config(args)
        seed = _get(_section(cfg, "run"), "seed", int, 0)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args.command, cfg, seed, argv)
        text = HANDLERS[args.command](cfg, seed, out)
    except (ConfigError, DataError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (NonFiniteLossError, DegenerateScoresError, LossDomainError, FloatingPointError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    print(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
