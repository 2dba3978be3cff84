"""Experiment driver: train / probe / fairgen / georepair / eval-w1 /
downstream subcommands over declarative YAML configs.

Every run directory receives a frozen copy of its fully resolved config
(replicate seed pinned), a metrics.jsonl stream (schema "v1", deterministic
fields only), a timing.jsonl sidecar, checkpoints, and sample dumps with the
interpolation weight as the trailing column.  Re-running a frozen config
reproduces metrics.jsonl byte for byte.

Exit codes: 0 success, 2 config or input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np
import yaml

from . import data as dmod
from . import evalmetrics as em
from . import nets, trainer
from .nets import MlpSpec, TabularHeadSpec
from .tempering import GroupedData
from .trainer import TrainConfig, TrainDivergence

log = logging.getLogger("ptgan")


class ConfigError(Exception):
    pass


DEFAULTS = {
    "dataset": {
        "preset": None,          # ring8 | two1d | two1d_wide
        "mu2": None,             # two1d separation override
        "n_samples": 2000,
        "data_seed": 1234,
        "csv": None,
        "schema": None,          # inline schema tree
        "schema_preset": None,   # adult | law | credit
    },
    "model": {
        "critic_hidden": [256, 256, 256, 256],
        "gen_hidden": [256, 256, 256, 256],
        "activation": "relu",
        "d_z": 4,
        "gen_head": "linear",    # linear | tanh | tabular
        "gumbel_tau": 0.5,
        "continuous_activation": "linear",
    },
    "train": {
        "loss": "nd",
        "penalty": "cp",
        "lam": None,
        "r": 0.9,
        "n_b": 100,
        "iterations": 20000,
        "critic_steps": 1,
        "lr_d": 1e-4,
        "lr_g": 1e-4,
        "beta1": 0.0,
        "beta2": 0.9,
        "eps": 1e-8,
        "seed": 0,
        "checkpoint_every": None,
        "use_interpolated_z": True,
        "grad_noise_sigma": 0.0,
        "grad_var_full": False,
        "fair_batches": False,
        "fairness_lambda": None,
    },
    "eval": {
        "w1_at_checkpoints": True,
        "w1_samples": 512,
        "sample_count": 2000,
        "alphas": [1.0],
        "test_fraction": 0.9,
        "n_generate": 1000,
    },
    "probe": {
        "mu2_list": [1.5, 3.0],
        "r_pair": [1.0, 0.99],
        "sigma_list": [0.0, 0.01],
        "data_n": 2000,
    },
    "georepair": {
        "lambdas": [0.0, 0.25, 0.5, 0.75, 1.0],
    },
    "out": "runs/exp",
    "replicates": 1,
}


def _merge_strict(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"config section {path or '<root>'} must be a mapping")
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge_strict(defaults[key], value or {}, where)
        else:
            out[key] = value
    return out


def load_config(path, return_raw: bool = False):
    try:
        with open(path) as fh:
            tree = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    merged = _merge_strict(DEFAULTS, tree)
    return (merged, tree) if return_raw else merged


@dataclass
class DatasetBundle:
    kind: str                    # preset | csv
    matrix: np.ndarray           # encoded rows (full set)
    spec: dmod.MixtureSpec | None = None
    meta: dmod.TabularMeta | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def resolve_dataset(cfg: dict) -> DatasetBundle:
    ds = cfg["dataset"]
    if (ds["preset"] is None) == (ds["csv"] is None):
        raise ConfigError("dataset: set exactly one of preset or csv")
    if ds["preset"] is not None:
        name = ds["preset"]
        if name not in dmod.PRESETS:
            raise ConfigError(f"dataset.preset: unknown preset {name!r}")
        if name.startswith("two1d") and ds["mu2"] is not None:
            spec = dmod.two1d_spec(mu2=float(ds["mu2"]))
        else:
            spec = dmod.PRESETS[name]()
        rng = np.random.default_rng(ds["data_seed"])
        matrix = dmod.sample_mixture(spec, int(ds["n_samples"]), rng)
        return DatasetBundle("preset", matrix, spec=spec)

    schema = _resolve_schema(ds)
    if not os.path.exists(ds["csv"]):
        raise ConfigError(f"dataset.csv: file not found: {ds['csv']}")
    try:
        matrix, meta = dmod.load_tabular(ds["csv"], schema)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return DatasetBundle("csv", matrix, meta=meta)


def _resolve_schema(ds: dict) -> dmod.TabularSchema:
    if (ds["schema"] is None) == (ds["schema_preset"] is None):
        raise ConfigError("dataset: set exactly one of schema or schema_preset")
    if ds["schema_preset"] is not None:
        try:
            return dmod.SCHEMA_PRESETS[ds["schema_preset"]]
        except KeyError:
            raise ConfigError(
                f"dataset.schema_preset: unknown preset {ds['schema_preset']!r}"
            ) from None
    try:
        return dmod.TabularSchema.from_dict(ds["schema"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"dataset.schema: {exc}") from None


def build_train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    kwargs = dict(
        loss=t["loss"], penalty=t["penalty"], lam=t["lam"], r=t["r"],
        n_b=int(t["n_b"]), iterations=int(t["iterations"]),
        critic_steps=int(t["critic_steps"]), lr_d=float(t["lr_d"]),
        lr_g=float(t["lr_g"]), beta1=float(t["beta1"]),
        beta2=float(t["beta2"]), eps=float(t["eps"]), seed=seed,
        checkpoint_every=t["checkpoint_every"],
        use_interpolated_z=bool(t["use_interpolated_z"]),
        d_z=int(cfg["model"]["d_z"]),
        grad_noise_sigma=float(t["grad_noise_sigma"]),
        grad_var_full=bool(t["grad_var_full"]),
    )
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None


def build_models(cfg: dict, bundle: DatasetBundle, seed: int):
    m = cfg["model"]
    d_x = bundle.dim
    critic_spec = MlpSpec(d_x, list(m["critic_hidden"]), 1,
                          activation=m["activation"])
    gen_spec = MlpSpec(int(m["d_z"]), list(m["gen_hidden"]), d_x,
                       activation=m["activation"])
    head = m["gen_head"]
    if bundle.kind == "csv":
        cont = sum(w for _, kind, _, w in bundle.meta.layout
                   if kind == "continuous")
        groups = [w for _, kind, _, w in bundle.meta.layout
                  if kind == "categorical"]
        head = TabularHeadSpec(cont, groups, gumbel_tau=float(m["gumbel_tau"]),
                               continuous_activation=m["continuous_activation"])
        # Output layout: continuous block first, then the discrete groups.
    elif head not in ("linear", "tanh"):
        raise ConfigError(f"model.gen_head: {head!r} not valid for presets")
    critic = nets.init_params(critic_spec, seed=(seed, 0))
    generator = nets.init_params(gen_spec, seed=(seed, 1))
    return critic, generator, head


def _tabular_feature_order(meta: dmod.TabularMeta) -> np.ndarray:
    """Encoded-matrix reordering so continuous blocks come first, matching
    the generator's head layout."""
    cont, disc = [], []
    for name, kind, start, width in meta.layout:
        idx = list(range(start, start + width))
        (cont if kind == "continuous" else disc).extend(idx)
    return np.array(cont + disc, dtype=int)


def _head_layout_meta(meta: dmod.TabularMeta) -> dmod.TabularMeta:
    """Meta whose layout matches the reordered (continuous-first) matrix."""
    order = []
    start = 0
    for name, kind, s, w in meta.layout:
        if kind == "continuous":
            order.append((name, kind, start, w))
            start += w
    for name, kind, s, w in meta.layout:
        if kind == "categorical":
            order.append((name, kind, start, w))
            start += w
    return dmod.TabularMeta(meta.schema, meta.scale, order)


def _write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _dump_samples_csv(path, rows: np.ndarray, alphas: np.ndarray,
                      header: list[str]):
    with open(path, "w") as fh:
        fh.write(",".join(header + ["alpha"]) + "\n")
        for row, a in zip(rows, alphas):
            cells = [repr(float(v)) for v in row] + [repr(float(a))]
            fh.write(",".join(cells) + "\n")


def _freeze_config(cfg: dict, run_dir: str, seed: int):
    frozen = copy.deepcopy(cfg)
    frozen["train"]["seed"] = seed
    frozen["replicates"] = 1
    frozen["out"] = run_dir
    with open(os.path.join(run_dir, "config.yaml"), "w") as fh:
        yaml.safe_dump(frozen, fh, sort_keys=True)


def _preset_eval_fn(cfg: dict, bundle: DatasetBundle, seed: int, gen_head):
    if not cfg["eval"]["w1_at_checkpoints"] or bundle.kind != "preset":
        return None
    n_eval = int(cfg["eval"]["w1_samples"])
    reference = bundle.matrix[:n_eval]
    spec = bundle.spec
    d_z = int(cfg["model"]["d_z"])
    interpolated = bool(cfg["train"]["use_interpolated_z"])

    def eval_fn(iteration, critic, generator):
        rng = np.random.default_rng((seed, iteration, 0xE7A1))
        fake = trainer.generate_samples(generator, n_eval, 1.0, d_z, rng,
                                        gen_head, interpolated)
        w1 = em.w1_distance(fake, reference).value
        extras = {"w1": w1, "log_w1": float(np.log(max(w1, 1e-300)))}
        covered, _ = em.mode_coverage(fake, spec.centers, 4.0 * spec.sigma)
        extras["mode_coverage"] = covered
        return extras

    return eval_fn


def _grouped_rows(matrix: np.ndarray, meta: dmod.TabularMeta) -> GroupedData:
    if meta.schema.sensitive is None:
        raise ConfigError("fair training needs dataset schema with a "
                          "sensitive column")
    a_col = meta.positive_level_column(meta.schema.sensitive)
    mask = matrix[:, a_col] > 0.5
    if mask.sum() == 0 or (~mask).sum() == 0:
        raise ConfigError("fair training: a sensitive group is empty")
    return GroupedData(matrix[~mask], matrix[mask])


def run_training_replicate(cfg: dict, bundle: DatasetBundle, rep_index: int,
                           run_dir: str):
    """One seeded replicate: train, write metrics, checkpoints, samples."""
    os.makedirs(run_dir, exist_ok=True)
    seed = int(cfg["train"]["seed"]) + rep_index
    _freeze_config(cfg, run_dir, seed)
    tc = build_train_config(cfg, seed)
    critic, generator, gen_head = build_models(cfg, bundle, seed)

    train_matrix = bundle.matrix
    meta = bundle.meta
    groups = None
    data = None
    if cfg["train"]["fair_batches"]:
        if bundle.kind != "csv":
            raise ConfigError("train.fair_batches needs a csv dataset")
        order = _tabular_feature_order(meta)
        reordered = train_matrix[:, order]
        meta = _head_layout_meta(meta)
        groups = _grouped_rows(reordered, meta)
        if cfg["train"]["fairness_lambda"] is not None:
            tc = TrainConfig(**{
                **tc.__dict__,
                "fairness_lambda": float(cfg["train"]["fairness_lambda"]),
                "fair_y_col": meta.positive_level_column(meta.schema.label),
                "fair_a_col": meta.positive_level_column(meta.schema.sensitive),
            })
    elif bundle.kind == "csv":
        order = _tabular_feature_order(meta)
        data = train_matrix[:, order]
        meta = _head_layout_meta(meta)
    else:
        data = train_matrix

    eval_fn = _preset_eval_fn(cfg, bundle, seed, gen_head)
    result = trainer.train(tc, data=data, groups=groups, critic=critic,
                           generator=generator, gen_head=gen_head,
                           eval_fn=eval_fn)

    _write_jsonl(os.path.join(run_dir, "metrics.jsonl"),
                 [r.to_row() for r in result.metrics])
    _write_jsonl(os.path.join(run_dir, "timing.jsonl"),
                 [{"iteration": r.iteration, "wall_time": r.wall_time}
                  for r in result.metrics])
    nets.save_checkpoint(os.path.join(run_dir, "critic.ckpt"), result.critic,
                         extra={"role": "critic"})
    nets.save_checkpoint(os.path.join(run_dir, "generator.ckpt"),
                         result.generator, extra={"role": "generator"})

    _dump_final_samples(cfg, bundle, meta, result.generator, gen_head, seed,
                        run_dir)
    return run_dir


def _dump_final_samples(cfg, bundle, meta, generator, gen_head, seed, run_dir):
    alphas = [float(a) for a in cfg["eval"]["alphas"]]
    if 1.0 not in alphas:
        alphas.append(1.0)
    n = int(cfg["eval"]["sample_count"])
    d_z = int(cfg["model"]["d_z"])
    interpolated = bool(cfg["train"]["use_interpolated_z"])
    all_rows, all_alpha = [], []
    for a in sorted(alphas):
        rng = np.random.default_rng((seed, int(a * 10_000), 0x5A3))
        rows = trainer.generate_samples(generator, n, a, d_z, rng, gen_head,
                                        interpolated)
        all_rows.append(rows)
        all_alpha.append(np.full(n, a))
    rows = np.vstack(all_rows)
    alpha_col = np.concatenate(all_alpha)
    if bundle.kind == "preset":
        header = [f"x{i}" for i in range(rows.shape[1])]
        _dump_samples_csv(os.path.join(run_dir, "samples.csv"), rows,
                          alpha_col, header)
    else:
        cols = dmod.decode_tabular(rows, meta)
        order = [c.name for c in meta.schema.columns]
        cols["alpha"] = alpha_col
        dmod.write_csv(os.path.join(run_dir, "samples.csv"), cols,
                       order + ["alpha"])


def _fanout(cfg: dict, worker, count: int):
    """Run replicate workers across threads; each owns its directory."""
    max_workers = min(count, os.cpu_count() or 1)
    if max_workers <= 1:
        return [worker(i) for i in range(count)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as ex:
        return list(ex.map(worker, range(count)))


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    bundle = resolve_dataset(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    reps = int(cfg["replicates"])
    if reps < 1:
        raise ConfigError("replicates must be >= 1")

    def worker(i):
        return run_training_replicate(cfg, bundle, i,
                                      os.path.join(out, f"rep{i:03d}"))

    dirs = _fanout(cfg, worker, reps)
    for d in dirs:
        print(d)
    return 0


def cmd_probe(args) -> int:
    cfg = _config_from_args(args)
    kind = args.kind
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    reps = int(cfg["replicates"])
    base_seed = int(cfg["train"]["seed"])
    probe = cfg["probe"]

    if kind == "fixed-generator":
        arms = [float(m) for m in probe["mu2_list"]]
        for mu2 in arms:
            _probe_fixed_arm(cfg, mu2, cfg["train"]["r"], reps, base_seed,
                             os.path.join(out, f"fixed_mu{mu2:g}"))
        return 0
    if kind == "variance-reduction":
        mu2 = float(probe["mu2_list"][-1])
        for r in [float(v) for v in probe["r_pair"]]:
            _probe_fixed_arm(cfg, mu2, r, reps, base_seed,
                             os.path.join(out, f"var_r{r:g}"))
        return 0
    if kind == "noise-injection":
        for sigma in [float(s) for s in probe["sigma_list"]]:
            arm_cfg = copy.deepcopy(cfg)
            arm_cfg["train"]["grad_noise_sigma"] = sigma
            arm_cfg["out"] = os.path.join(out, f"noise_s{sigma:g}")
            bundle = resolve_dataset(arm_cfg)
            os.makedirs(arm_cfg["out"], exist_ok=True)

            def worker(i, _cfg=arm_cfg, _bundle=bundle):
                return run_training_replicate(
                    _cfg, _bundle, i,
                    os.path.join(_cfg["out"], f"rep{i:03d}"))

            _fanout(arm_cfg, worker, reps)
        return 0
    raise ConfigError(f"unknown probe kind: {kind!r}")


def _probe_fixed_arm(cfg, mu2, r, reps, base_seed, arm_dir):
    os.makedirs(arm_dir, exist_ok=True)
    data_rng = np.random.default_rng(cfg["dataset"]["data_seed"])
    spec = dmod.two1d_spec(mu2=mu2)
    data = dmod.sample_mixture(spec, int(cfg["probe"]["data_n"]), data_rng)
    sigma = spec.sigma

    def fake_sampler(n, rng):
        return (-mu2 + sigma * rng.standard_normal(n)).reshape(n, 1)

    def worker(i):
        seed = base_seed + i
        arm_cfg = copy.deepcopy(cfg)
        arm_cfg["train"]["r"] = r
        tc = build_train_config(arm_cfg, seed)
        tc = TrainConfig(**{**tc.__dict__, "grad_var_full": True, "r": r})
        critic = nets.init_params(
            MlpSpec(1, list(cfg["model"]["critic_hidden"]), 1,
                    activation=cfg["model"]["activation"]),
            seed=(seed, 0))
        logs = trainer.probe_fixed_generator(tc, data, critic, fake_sampler)
        rep_dir = os.path.join(arm_dir, f"rep{i:03d}")
        os.makedirs(rep_dir, exist_ok=True)
        _freeze_config(arm_cfg, rep_dir, seed)
        _write_jsonl(os.path.join(rep_dir, "metrics.jsonl"),
                     [rec.to_row() for rec in logs])
        _write_jsonl(os.path.join(rep_dir, "timing.jsonl"),
                     [{"iteration": rec.iteration, "wall_time": rec.wall_time}
                      for rec in logs])
        return rep_dir

    _fanout(cfg, worker, reps)


def _features_label_group(matrix: np.ndarray, meta: dmod.TabularMeta):
    """Covariate block (everything but sensitive and label), hard labels,
    and hard group indicators from an encoded matrix."""
    schema = meta.schema
    if schema.label is None or schema.sensitive is None:
        raise ConfigError("schema must name label and sensitive columns")
    drop = []
    for name in (schema.label, schema.sensitive):
        start, width = meta.block(name)
        drop.extend(range(start, start + width))
    keep = [j for j in range(meta.encoded_width()) if j not in drop]
    y_start, y_width = meta.block(schema.label)
    a_start, a_width = meta.block(schema.sensitive)
    y_block = matrix[:, y_start : y_start + y_width]
    a_block = matrix[:, a_start : a_start + a_width]
    y_levels = schema.column(schema.label).levels
    a_levels = schema.column(schema.sensitive).levels
    y = np.array([float(y_levels[j] == "1") for j in y_block.argmax(axis=1)])
    a = np.array([float(a_levels[j] == "1") for j in a_block.argmax(axis=1)])
    return matrix[:, keep], y, a


def cmd_fairgen(args) -> int:
    cfg, raw = load_config(args.config, return_raw=True)
    _apply_cli_overrides(cfg, args)
    if args.alphas:
        cfg["eval"]["alphas"] = [float(a) for a in args.alphas.split(",")]
    if "r" not in (raw.get("train") or {}):
        cfg["train"]["r"] = 0.2  # fair runs weight intermediate levels more
    bundle = resolve_dataset(cfg)
    if bundle.kind != "csv":
        raise ConfigError("fairgen needs a csv dataset with a schema")
    if bundle.meta.schema.label is None or bundle.meta.schema.sensitive is None:
        raise ConfigError("fairgen: schema must name label and sensitive "
                          "columns")
    cfg["train"]["fair_batches"] = True
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)

    train_rows, test_rows = dmod.split(bundle.matrix,
                                       float(cfg["eval"]["test_fraction"]),
                                       seed=cfg["dataset"]["data_seed"])
    test_c, test_y, test_a = _features_label_group(test_rows, bundle.meta)
    train_bundle = DatasetBundle("csv", train_rows, meta=bundle.meta)

    alphas = sorted(float(a) for a in cfg["eval"]["alphas"])
    reps = int(cfg["replicates"])
    n_gen = int(cfg["eval"]["n_generate"])
    rows_out = []

    def worker(i):
        run_dir = os.path.join(out, f"rep{i:03d}")
        if args.from_run:
            # Reuse a previously trained generator instead of retraining.
            ckpt = os.path.join(args.from_run, f"rep{i:03d}",
                                "generator.ckpt")
            if not os.path.exists(ckpt):
                raise ConfigError(f"fairgen: no generator checkpoint at "
                                  f"{ckpt}")
            os.makedirs(run_dir, exist_ok=True)
        else:
            run_training_replicate(cfg, train_bundle, i, run_dir)
            ckpt = os.path.join(run_dir, "generator.ckpt")
        generator = nets.load_checkpoint(ckpt)
        seed = int(cfg["train"]["seed"]) + i
        meta = _head_layout_meta(bundle.meta)
        cont = sum(w for _, kind, _, w in meta.layout if kind == "continuous")
        disc = [w for _, kind, _, w in meta.layout if kind == "categorical"]
        head = TabularHeadSpec(cont, disc,
                               gumbel_tau=float(cfg["model"]["gumbel_tau"]),
                               continuous_activation=cfg["model"]
                               ["continuous_activation"])
        local = []
        for a in alphas:
            rng = np.random.default_rng((seed, int(a * 10_000), 0xFA1))
            gen_rows = trainer.generate_samples(
                generator, n_gen, a, int(cfg["model"]["d_z"]), rng, head,
                bool(cfg["train"]["use_interpolated_z"]))
            decoded = dmod.decode_tabular(gen_rows, meta)
            csv_path = os.path.join(run_dir, f"generated_alpha{a:g}.csv")
            order = [c.name for c in meta.schema.columns]
            dmod.write_csv(csv_path, decoded, order)
            hard = dmod.encode_with_meta(decoded, meta)
            syn_c, syn_y, _ = _features_label_group(hard, meta)
            try:
                score = em.downstream_scores(syn_c, syn_y, test_c, test_y,
                                             test_a)
                local.append({"alpha": a, "rep": i, "auc": score.auc,
                              "sp": score.sp, "model": score.model})
            except ValueError as exc:
                log.warning("rep %d alpha %g: downstream skipped (%s)",
                            i, a, exc)
                local.append({"alpha": a, "rep": i, "auc": None, "sp": None,
                              "model": "logreg"})
        return local

    for chunk in _fanout(cfg, worker, reps):
        rows_out.extend(chunk)

    table_path = os.path.join(out, "fairgen_table.csv")
    with open(table_path, "w") as fh:
        fh.write("alpha,rep,model,auc,sp\n")
        for row in rows_out:
            fh.write(f"{row['alpha']},{row['rep']},{row['model']},"
                     f"{'' if row['auc'] is None else row['auc']},"
                     f"{'' if row['sp'] is None else row['sp']}\n")
    valid = [(r["auc"], r["sp"]) for r in rows_out if r["auc"] is not None]
    frontier = em.pareto_frontier(valid) if valid else []
    with open(os.path.join(out, "frontier.csv"), "w") as fh:
        fh.write("auc,sp\n")
        for auc_v, sp_v in frontier:
            fh.write(f"{auc_v},{sp_v}\n")
    print(table_path)
    return 0


def cmd_georepair(args) -> int:
    cfg = _config_from_args(args)
    ds = cfg["dataset"]
    if ds["csv"] is None:
        raise ConfigError("georepair needs dataset.csv")
    schema = _resolve_schema(ds)
    if schema.sensitive is None:
        raise ConfigError("georepair: schema must name a sensitive column")
    raw = dmod.read_columns(ds["csv"], schema)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)

    sens = schema.column(schema.sensitive)
    if sens.kind != "categorical" or len(sens.levels) != 2:
        raise ConfigError("georepair: sensitive column must be a binary "
                          "categorical")
    positive = "1" if "1" in sens.levels else sens.levels[-1]
    a = np.array([float(v == positive) for v in raw[schema.sensitive]])
    cont_names = [c.name for c in schema.columns if c.kind == "continuous"]
    if not cont_names:
        log.warning("georepair: no continuous columns, nothing to repair")

    results = []
    order = [c.name for c in schema.columns]
    for lam in [float(v) for v in cfg["georepair"]["lambdas"]]:
        repaired = dict(raw)
        for name in cont_names:
            col = np.asarray(raw[name], dtype=np.float64)
            repaired[name] = em.geo_repair(col, a, lam)
        path = os.path.join(out, f"repaired_lambda{lam:g}.csv")
        dmod.write_csv(path, repaired, order)
        score = _georepair_downstream(repaired, schema, cfg)
        results.append((lam, score))

    with open(os.path.join(out, "georepair_table.csv"), "w") as fh:
        fh.write("lambda,model,auc,sp\n")
        for lam, score in results:
            if score is None:
                fh.write(f"{lam},logreg,,\n")
            else:
                fh.write(f"{lam},{score.model},{score.auc},{score.sp}\n")
    print(os.path.join(out, "georepair_table.csv"))
    return 0


def _georepair_downstream(columns: dict, schema: dmod.TabularSchema,
                          cfg: dict):
    if schema.label is None:
        return None
    matrix, meta = dmod.encode_tabular(columns, schema)
    train_rows, test_rows = dmod.split(matrix,
                                       float(cfg["eval"]["test_fraction"]),
                                       seed=cfg["dataset"]["data_seed"])
    try:
        tr_c, tr_y, _ = _features_label_group(train_rows, meta)
        te_c, te_y, te_a = _features_label_group(test_rows, meta)
        return em.downstream_scores(tr_c, tr_y, te_c, te_y, te_a)
    except (ValueError, ConfigError) as exc:
        log.warning("georepair downstream skipped: %s", exc)
        return None


def _load_plain_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError:
        raise ConfigError(f"file not found: {path}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_eval_w1(args) -> int:
    a = _load_plain_csv(args.samples)
    b = _load_plain_csv(args.reference)
    res = em.w1_distance(a, b)
    print(json.dumps({"w1": res.value, "method": res.method}))
    return 0


def cmd_downstream(args) -> int:
    cfg = _config_from_args(args)
    ds = cfg["dataset"]
    if ds["csv"] is None:
        raise ConfigError("downstream needs dataset.csv")
    schema = _resolve_schema(ds)
    matrix, meta = dmod.load_tabular(ds["csv"], schema)
    train_rows, test_rows = dmod.split(matrix,
                                       float(cfg["eval"]["test_fraction"]),
                                       seed=ds["data_seed"])
    tr_c, tr_y, _ = _features_label_group(train_rows, meta)
    te_c, te_y, te_a = _features_label_group(test_rows, meta)
    score = em.downstream_scores(tr_c, tr_y, te_c, te_y, te_a)
    print(json.dumps({"auc": score.auc, "sp": score.sp, "model": score.model}))
    return 0


def _apply_cli_overrides(cfg: dict, args):
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "seed", None) is not None:
        cfg["train"]["seed"] = int(args.seed)
    if getattr(args, "replicates", None) is not None:
        cfg["replicates"] = int(args.replicates)


def _config_from_args(args) -> dict:
    cfg = load_config(args.config)
    _apply_cli_overrides(cfg, args)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptgan",
        description="Parallelly tempered GAN training laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replicates", type=int, default=None)

    p_train = sub.add_parser("train", help="run training replicates")
    common(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_probe = sub.add_parser("probe", help="gradient-variance probes")
    common(p_probe)
    p_probe.add_argument("--kind", required=True,
                         choices=["fixed-generator", "variance-reduction",
                                  "noise-injection"])
    p_probe.set_defaults(fn=cmd_probe)

    p_fair = sub.add_parser("fairgen", help="fairness-level generation sweep")
    common(p_fair)
    p_fair.add_argument("--alphas", default=None,
                        help="comma-separated interpolation weights")
    p_fair.add_argument("--from-run", default=None, dest="from_run",
                        help="reuse generator checkpoints from this output "
                             "directory instead of retraining")
    p_fair.set_defaults(fn=cmd_fairgen)

    p_geo = sub.add_parser("georepair", help="quantile repair baseline")
    common(p_geo)
    p_geo.set_defaults(fn=cmd_georepair)

    p_w1 = sub.add_parser("eval-w1", help="W1 between two sample CSVs")
    p_w1.add_argument("--samples", required=True)
    p_w1.add_argument("--reference", required=True)
    p_w1.set_defaults(fn=cmd_eval_w1)

    p_down = sub.add_parser("downstream", help="logistic AUC/SP on a csv")
    common(p_down)
    p_down.set_defaults(fn=cmd_downstream)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"input/output error: {exc}", file=sys.stderr)
        return 2
    except TrainDivergence as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
