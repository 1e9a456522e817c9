"""Experiment assembly: config parsing, seeded builds, multi-round runs.

Config files are flat `key = value` lines with `#` comments.  Keys are
dotted paths (`train.lr`, `attack.kind`); every key has a default, unknown
or repeated keys are rejected with their line number.  The same dotted
keys double as CLI override names, so one parser serves both.

Everything downstream is derived from the single top-level seed: shard
contents, signing keys, minibatch order, attack choices.  Two runs with
the same config produce identical tables except for wall-clock durations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import adversary, crypto, datasets, models, protocol, reporting
from .adversary import AttackConfig, AttackPlan
from .datasets import Dataset
from .models import Model, TrainingConfig
from .protocol import ClientActor, ProtocolError, Server
from .reporting import MetricsTable

__all__ = [
    "ConfigError",
    "ModelSpec",
    "DataSpec",
    "TrainSpec",
    "CryptoSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_entries",
    "Simulation",
    "build_simulation",
    "run_experiment",
]

SOURCE_SYNTHETIC = "synthetic"
SOURCE_IDX = "idx"


class ConfigError(ValueError):
    """A config file or override set could not be interpreted."""


# --------------------------------------------------------------------------- #
# config schema
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ModelSpec:
    kind: str = models.KIND_LOGREG
    hidden: int = 16
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.kind not in (models.KIND_LOGREG, models.KIND_MLP):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.hidden < 1:
            raise ConfigError("model.hidden must be positive")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class DataSpec:
    source: str = SOURCE_SYNTHETIC
    features: int = 2
    classes: int = 2
    separation: float = 6.0
    per_client: int = 100
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    subset: int = 1000

    def __post_init__(self) -> None:
        if self.source not in (SOURCE_SYNTHETIC, SOURCE_IDX):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.features < 1 or self.classes < 1:
            raise ConfigError("data.features and data.classes must be positive")
        if self.separation < 0:
            raise ConfigError("data.separation must be non-negative")
        if self.per_client < 1:
            raise ConfigError("data.per_client must be positive")
        if self.subset < 1:
            raise ConfigError("data.subset must be positive")
        if self.source == SOURCE_IDX and (self.idx_images is None or self.idx_labels is None):
            raise ConfigError("idx source needs data.idx_images and data.idx_labels")


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float = 0.1
    epochs: int = 5
    batch_size: int | str = models.FULL_BATCH

    def __post_init__(self) -> None:
        # mirror TrainingConfig's constraints so errors surface at parse time
        TrainingConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=0,
        )


@dataclass(frozen=True)
class CryptoSpec:
    key_bits: int = 2048

    def __post_init__(self) -> None:
        if self.key_bits not in (1024, 2048):
            raise ConfigError("crypto.key_bits must be 1024 or 2048")


@dataclass(frozen=True)
class ExperimentConfig:
    rounds: int = 5
    clients: int = 4
    seed: int = 0
    security: bool = True
    encrypt: bool = False
    model: ModelSpec = field(default_factory=ModelSpec)
    data: DataSpec = field(default_factory=DataSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    crypto: CryptoSpec = field(default_factory=CryptoSpec)
    attack: AttackConfig = field(default_factory=AttackConfig)

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.clients < 1:
            raise ConfigError("clients must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


# --------------------------------------------------------------------------- #
# parsing
# --------------------------------------------------------------------------- #


def _to_int(key: str, raw: str) -> int:
    try:
        return int(raw, 10)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _to_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _to_switch(key: str, raw: str) -> bool:
    if raw == "on":
        return True
    if raw == "off":
        return False
    raise ConfigError(f"{key}: expected on or off, got {raw!r}")


def _to_batch(key: str, raw: str) -> int | str:
    return raw if raw == models.FULL_BATCH else _to_int(key, raw)


def _to_str(key: str, raw: str) -> str:
    return raw


_CONVERTERS = {
    "rounds": _to_int,
    "clients": _to_int,
    "seed": _to_int,
    "security": _to_switch,
    "encrypt": _to_switch,
    "model.kind": _to_str,
    "model.hidden": _to_int,
    "model.activation": _to_str,
    "data.source": _to_str,
    "data.features": _to_int,
    "data.classes": _to_int,
    "data.separation": _to_float,
    "data.per_client": _to_int,
    "data.idx_images": _to_str,
    "data.idx_labels": _to_str,
    "data.subset": _to_int,
    "train.lr": _to_float,
    "train.epochs": _to_int,
    "train.batch": _to_batch,
    "crypto.key_bits": _to_int,
    "attack.kind": _to_str,
    "attack.fraction": _to_float,
    "attack.strength": _to_float,
    "attack.seed": _to_int,
}


def parse_entries(entries: dict[str, str]) -> ExperimentConfig:
    """Build a validated config from dotted-key strings.

    attack.seed defaults to the top-level seed when not given, so a whole
    experiment reseeds from one knob.
    """
    values: dict[str, object] = {}
    for key, raw in entries.items():
        converter = _CONVERTERS.get(key)
        if converter is None:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = converter(key, raw)

    def pick(prefix: str, cls, **renames):
        kwargs = {}
        for key, value in values.items():
            if not key.startswith(prefix + "."):
                continue
            name = key[len(prefix) + 1 :]
            kwargs[renames.get(name, name)] = value
        return cls(**kwargs)

    seed = int(values.get("seed", 0))
    attack_kwargs = {
        k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("attack.")
    }
    attack_kwargs.setdefault("seed", seed)
    try:
        return ExperimentConfig(
            rounds=values.get("rounds", 5),
            clients=values.get("clients", 4),
            seed=seed,
            security=values.get("security", True),
            encrypt=values.get("encrypt", False),
            model=pick("model", ModelSpec),
            data=pick("data", DataSpec),
            train=pick("train", TrainSpec, lr="learning_rate", batch="batch_size", epochs="epochs"),
            crypto=pick("crypto", CryptoSpec),
            attack=AttackConfig(**attack_kwargs),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        # component validators raise plain ValueError; keep one error type
        # at this boundary so callers handle a single class
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, overrides: Optional[dict[str, str]] = None) -> ExperimentConfig:
    """Parse `key = value` lines; later CLI overrides win over file values."""
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not key or not raw:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        entries[key] = raw
    if overrides:
        entries.update(overrides)
    return parse_entries(entries)


# --------------------------------------------------------------------------- #
# simulation assembly
# --------------------------------------------------------------------------- #


@dataclass
class Simulation:
    config: ExperimentConfig
    server: Server
    clients: list[ClientActor]
    plan: Optional[AttackPlan]
    holdout: Dataset


def _architecture(config: ExperimentConfig, num_features: int, num_classes: int) -> Model:
    if config.model.kind == models.KIND_LOGREG:
        return models.logistic_regression(num_features, num_classes)
    return models.mlp(
        num_features,
        num_classes,
        config.model.hidden,
        activation=config.model.activation,
        seed=crypto.derive_seed(config.seed, "init"),
    )


def _load_data(config: ExperimentConfig) -> tuple[list[Dataset], Dataset]:
    """Per-client shards plus a held-out evaluation split (~20% extra)."""
    data = config.data
    if data.source == SOURCE_SYNTHETIC:
        shards = datasets.generate_synthetic(
            num_clients=config.clients,
            per_client=data.per_client,
            num_features=data.features,
            num_classes=data.classes,
            separation=data.separation,
            seed=crypto.derive_seed(config.seed, "data"),
        )
        holdout = datasets.generate_holdout(
            size=max(1, (config.clients * data.per_client) // 5),
            num_features=data.features,
            num_classes=data.classes,
            separation=data.separation,
            seed=crypto.derive_seed(config.seed, "data"),
        )
        return shards, holdout

    pool = datasets.load_idx(
        data.idx_images, data.idx_labels, subset=data.subset, seed=crypto.derive_seed(config.seed, "data")
    )
    # last fifth held out, remainder dealt round-robin across clients
    cut = max(config.clients, (pool.size * 4) // 5)
    if cut >= pool.size:
        raise ConfigError("data.subset too small to carve a holdout split")
    shards = []
    for i in range(config.clients):
        rows = range(i, cut, config.clients)
        shards.append(
            Dataset(
                features=pool.features[list(rows)],
                labels=pool.labels[list(rows)],
                num_classes=pool.num_classes,
            )
        )
    holdout = Dataset(
        features=pool.features[cut:], labels=pool.labels[cut:], num_classes=pool.num_classes
    )
    return shards, holdout


def build_simulation(config: ExperimentConfig) -> Simulation:
    shards, holdout = _load_data(config)
    num_features = shards[0].num_features
    num_classes = shards[0].num_classes
    architecture = _architecture(config, num_features, num_classes)
    train_cfg = TrainingConfig(
        learning_rate=config.train.learning_rate,
        epochs=config.train.epochs,
        batch_size=config.train.batch_size,
        seed=config.seed,
    )

    attack = config.attack
    client_ids = [f"client-{i}" for i in range(config.clients)]
    compromised: frozenset[str] = frozenset()
    if attack.active and attack.kind in (
        adversary.ATTACK_MODEL_POISON,
        adversary.ATTACK_DATA_POISON,
        adversary.ATTACK_TAMPER,
    ):
        compromised = adversary.choose_compromised(client_ids, attack.fraction, attack.seed)

    server = Server.create(
        architecture,
        key_seed=crypto.derive_seed(config.seed, "server-key"),
        key_bits=config.crypto.key_bits,
        security=config.security,
    )
    clients: list[ClientActor] = []
    for i, cid in enumerate(client_ids):
        shard = shards[i]
        if attack.kind == adversary.ATTACK_DATA_POISON and cid in compromised:
            shard = adversary.flip_labels(shard, 1.0, crypto.derive_seed(attack.seed, cid))
        client = ClientActor.create(
            cid,
            shard,
            architecture,
            train_cfg,
            key_seed=crypto.derive_seed(config.seed, "client-key", i),
            key_bits=config.crypto.key_bits,
            encrypt=config.encrypt,
        )
        if attack.kind == adversary.ATTACK_MODEL_POISON and cid in compromised:
            client.compromise = adversary.make_poison(
                attack.strength, crypto.derive_seed(attack.seed, cid)
            )
        server.register(client)
        clients.append(client)

    plan: Optional[AttackPlan] = None
    if attack.kind == adversary.ATTACK_TAMPER:
        plan = AttackPlan(kind=attack.kind, seed=attack.seed, compromised=compromised)
    elif attack.kind == adversary.ATTACK_SYBIL:
        count = adversary._round_half_up(attack.fraction * config.clients)
        sybils = adversary.spawn_sybils(
            count,
            architecture,
            train_cfg,
            num_features=num_features,
            num_classes=num_classes,
            separation=config.data.separation,
            seed=attack.seed,
            key_bits=config.crypto.key_bits,
        )
        plan = AttackPlan(kind=attack.kind, seed=attack.seed, sybils=sybils)
    elif attack.kind == adversary.ATTACK_REPLAY:
        per_round = max(1, adversary._round_half_up(attack.fraction * config.clients))
        plan = AttackPlan(kind=attack.kind, seed=attack.seed, replays_per_round=per_round)

    return Simulation(config=config, server=server, clients=clients, plan=plan, holdout=holdout)


def run_experiment(config: ExperimentConfig, out_path: Optional[str] = None) -> MetricsTable:
    """Build and run the full experiment; optionally write the CSV table.

    A server-side abort stops the run early; whatever rounds completed are
    kept and the table (and CSV) carry the abort reason.
    """
    sim = build_simulation(config)
    table = MetricsTable(client_count=config.clients)
    for _ in range(config.rounds):
        try:
            report = protocol.run_round(
                sim.server, sim.clients, plan=sim.plan, eval_data=sim.holdout
            )
        except ProtocolError as exc:
            table.aborted = str(exc)
            break
        table.reports.append(report)
    if out_path is not None and table.reports:
        reporting.emit_csv(table, out_path)
    return table
