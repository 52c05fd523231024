"""Experiment configuration: defaults, file loading, validation.

All header/field lengths are configured and consumed in BITS throughout the
package. Defaults reproduce the reference parameter tables; a config file
only overrides them. Config objects are frozen after load and safe to share
across workers.
"""

from dataclasses import dataclass, fields, replace

PROTOCOLS = ("SITP", "UDP", "TCP")

# Transport header length defaults per protocol, in bits.
TH_LEN_DEFAULT = {"SITP": 64, "UDP": 64, "TCP": 224}


class ConfigError(ValueError):
    """Raised on parse failure or invariant violation, naming the key."""


@dataclass(frozen=True)
class StackConfig:
    """Protocol-stack geometry and channel/modulation selection."""

    sync_len_bits: int = 11
    sync_tolerance: int = 3
    ph_len_bits: int = 64
    dh_len_bits: int = 112
    crc_width_bits: int = 32
    nh_len_bits: int = 320
    th_len_bits: int = 64
    checksum_width_bits: int = 16
    ah_len_bits: int = 24
    payload_len_bits: int = 256
    modulation_order: int = 16
    protocol: str = "SITP"
    max_retransmissions: int = 5
    rng_seed: int = 1


@dataclass(frozen=True)
class BurstSchedule:
    """Piecewise SNR timeline: gamma_high outside [t1, t2), gamma_low inside.

    t1/t2 are packet indices; total_packets is the group length T.
    """

    gamma_high_db: float = 15.0
    gamma_low_db: float = 7.0
    t1: int = 0
    t2: int = 528
    total_packets: int = 4224

    @property
    def fade_len(self):
        return self.t2 - self.t1


@dataclass(frozen=True)
class LatencyParams:
    """Single-packet latency experiment parameters (durations in ms)."""

    loss_rate: float = 0.3
    trials: int = 40000
    tcp_max_retx: int = 5
    tcp_rtt_mean_ms: float = 50.0
    tcp_rtt_jitter_ms: float = 10.0
    tcp_rtt_min_ms: float = 10.0
    oneway_mean_ms: float = 25.0
    oneway_jitter_ms: float = 7.07
    oneway_min_ms: float = 10.0


@dataclass(frozen=True)
class SimulationConfig:
    stack: StackConfig
    burst: BurstSchedule
    latency: LatencyParams


_SECTIONS = (("stack", StackConfig), ("burst", BurstSchedule),
             ("latency", LatencyParams))

# key -> (section name, python type), built from the dataclass definitions.
_KEY_TABLE = {}
for _sec, _cls in _SECTIONS:
    for _f in fields(_cls):
        if _f.name in _KEY_TABLE:
            raise AssertionError(f"duplicate config key {_f.name}")
        _KEY_TABLE[_f.name] = (_sec, _f.type if isinstance(_f.type, type)
                               else {"int": int, "float": float, "str": str}[_f.type])


def _parse_value(key, raw):
    section, typ = _KEY_TABLE[key]
    raw = raw.strip()
    try:
        if typ is int:
            return section, int(raw, 0)
        if typ is float:
            return section, float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None
    return section, raw


def parse_config_text(text):
    """Parse `key = value` lines with # comments into {section: {key: value}}."""
    out = {"stack": {}, "burst": {}, "latency": {}}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_TABLE:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, value = _parse_value(key, raw)
        out[section][key] = value
    return out


def _positive(name, value):
    if value <= 0:
        raise ConfigError(f"{name}: must be positive, got {value}")


def validate_stack(cfg):
    for name in ("sync_len_bits", "ph_len_bits", "dh_len_bits", "crc_width_bits",
                 "nh_len_bits", "th_len_bits", "checksum_width_bits",
                 "ah_len_bits", "payload_len_bits"):
        _positive(name, getattr(cfg, name))
    if cfg.sync_tolerance < 0:
        raise ConfigError(f"sync_tolerance: must be >= 0, got {cfg.sync_tolerance}")
    if cfg.sync_tolerance >= cfg.sync_len_bits:
        raise ConfigError(
            f"sync_tolerance: must be < sync_len_bits ({cfg.sync_len_bits}), "
            f"got {cfg.sync_tolerance}")
    if cfg.modulation_order not in (4, 16, 64):
        raise ConfigError(
            f"modulation_order: square Gray-mapped QAM requires one of 4/16/64, "
            f"got {cfg.modulation_order}")
    if cfg.protocol not in PROTOCOLS:
        raise ConfigError(f"protocol: expected one of {PROTOCOLS}, got {cfg.protocol!r}")
    if cfg.max_retransmissions < 0:
        raise ConfigError(
            f"max_retransmissions: must be >= 0, got {cfg.max_retransmissions}")
    return cfg


def validate_burst(sched):
    if not 0 <= sched.t1 <= sched.t2 <= sched.total_packets:
        raise ConfigError(
            f"burst schedule: need 0 <= t1 <= t2 <= total_packets, got "
            f"t1={sched.t1} t2={sched.t2} total_packets={sched.total_packets}")
    if sched.gamma_low_db > sched.gamma_high_db:
        raise ConfigError(
            f"gamma_low_db: must be <= gamma_high_db ({sched.gamma_high_db}), "
            f"got {sched.gamma_low_db}")
    return sched


def validate_latency(params):
    if not 0.0 <= params.loss_rate < 1.0:
        raise ConfigError(f"loss_rate: must be in [0, 1), got {params.loss_rate}")
    if params.trials < 1:
        raise ConfigError(f"trials: must be >= 1, got {params.trials}")
    if params.tcp_max_retx < 0:
        raise ConfigError(f"tcp_max_retx: must be >= 0, got {params.tcp_max_retx}")
    for name in ("tcp_rtt_mean_ms", "tcp_rtt_jitter_ms", "tcp_rtt_min_ms",
                 "oneway_mean_ms", "oneway_jitter_ms", "oneway_min_ms"):
        _positive(name, getattr(params, name))
    if params.tcp_rtt_min_ms > params.tcp_rtt_mean_ms:
        raise ConfigError("tcp_rtt_min_ms: must be <= tcp_rtt_mean_ms")
    if params.oneway_min_ms > params.oneway_mean_ms:
        raise ConfigError("oneway_min_ms: must be <= oneway_mean_ms")
    return params


def build_config(sections):
    """Construct and validate the config triple from parsed sections."""
    stack_kv = dict(sections.get("stack", {}))
    protocol = stack_kv.get("protocol", StackConfig.protocol)
    if isinstance(protocol, str):
        protocol = protocol.upper()
        stack_kv["protocol"] = protocol
    # th_len_bits tracks the protocol unless set explicitly.
    if "th_len_bits" not in stack_kv and protocol in TH_LEN_DEFAULT:
        stack_kv["th_len_bits"] = TH_LEN_DEFAULT[protocol]
    try:
        stack = StackConfig(**stack_kv)
        burst = BurstSchedule(**sections.get("burst", {}))
        latency = LatencyParams(**sections.get("latency", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return SimulationConfig(validate_stack(stack), validate_burst(burst),
                            validate_latency(latency))


def load_config(path=None, overrides=()):
    """Load a config file (optional) and apply `key=value` override strings.

    An absent path or empty file yields the full defaults. Overrides are
    applied after the file, matching the CLI's --set semantics.
    """
    if path is None:
        sections = {"stack": {}, "burst": {}, "latency": {}}
    else:
        with open(path, "r", encoding="utf-8") as fh:
            sections = parse_config_text(fh.read())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _KEY_TABLE:
            raise ConfigError(f"override: unknown key {key!r}")
        section, value = _parse_value(key, raw)
        sections[section][key] = value
    return build_config(sections)


def dump_config(cfg):
    """Serialize a SimulationConfig to the key = value text format."""
    lines = []
    for section, attr in (("stack", cfg.stack), ("burst", cfg.burst),
                          ("latency", cfg.latency)):
        lines.append(f"# {section}")
        for f in fields(attr):
            lines.append(f"{f.name} = {getattr(attr, f.name)}")
        lines.append("")
    return "\n".join(lines)


def with_stack(cfg, **changes):
    """Copy of cfg with StackConfig fields replaced and revalidated."""
    if "protocol" in changes and "th_len_bits" not in changes:
        changes.setdefault("th_len_bits", TH_LEN_DEFAULT[changes["protocol"]])
    return replace(cfg, stack=validate_stack(replace(cfg.stack, **changes)))
