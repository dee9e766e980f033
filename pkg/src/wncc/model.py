"""Scenario description, random channel generation and derived matched-filter gains.

Every other module reads the types defined here.  All records are immutable
after construction and safe to share across workers; channel generation is a
pure function of (topology, config, seed).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Topology",
    "NetworkConfig",
    "ChannelSet",
    "GainTensors",
    "PowerAllocation",
    "TimeAllocation",
    "ConfigError",
    "load_config",
    "read_kv_file",
    "generate_channels",
    "effective_gains",
    "export_channels_csv",
]

# Plants with association weight below this are treated as detached from a BS.
ASSOC_EPS = 1e-9


class ConfigError(ValueError):
    """Raised when a scenario file is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class Topology:
    """Node counts and 2-D placement of base stations and plants (meters)."""

    num_bs: int
    num_plants: int
    num_antennas: int
    bs_positions: np.ndarray      # (M, 2)
    plant_positions: np.ndarray   # (K, 2)

    def __post_init__(self):
        if self.num_bs < 1:
            raise ConfigError("num_bs must be >= 1")
        if self.num_plants < 1:
            raise ConfigError("num_plants must be >= 1")
        if self.num_antennas < 1:
            raise ConfigError("num_antennas must be >= 1")
        bs = np.asarray(self.bs_positions, dtype=float).reshape(self.num_bs, 2)
        pl = np.asarray(self.plant_positions, dtype=float).reshape(self.num_plants, 2)
        object.__setattr__(self, "bs_positions", bs)
        object.__setattr__(self, "plant_positions", pl)
        if self.num_antennas < self.num_plants:
            warnings.warn(
                "num_antennas < num_plants: the matched-filter interference model "
                "assumes many more antennas than plants",
                stacklevel=2,
            )

    def distances(self) -> np.ndarray:
        """BS-to-plant distance matrix, shape (M, K)."""
        diff = self.bs_positions[:, None, :] - self.plant_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class NetworkConfig:
    """All scenario constants: radio, payload, compute and reliability targets.

    Per-plant quantities are length-K arrays, per-BS quantities length-M.
    ``noise_power_w`` is derived as 10**((noise_psd_dbm_per_hz - 30)/10) * bandwidth_hz.
    """

    bandwidth_hz: float
    noise_psd_dbm_per_hz: float
    pathloss_ref_db: float
    pathloss_ref_dist_m: float
    pathloss_exp: float
    uplink_power_cap_w: np.ndarray      # (K,)
    downlink_power_budget_w: np.ndarray  # (M,)
    bits_uplink: np.ndarray             # (K,)
    bits_compute: np.ndarray            # (K,)
    bits_downlink: np.ndarray           # (K,)
    cycles_per_bit: np.ndarray          # (K,)
    cpu_freq_hz: np.ndarray             # (M,)
    outage_threshold: float = 1e-3
    rng_seed: int = 1
    reciprocal_channels: bool = True
    defaulted_keys: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("uplink_power_cap_w", "downlink_power_budget_w", "bits_uplink",
                     "bits_compute", "bits_downlink", "cycles_per_bit", "cpu_freq_hz"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
            if not np.all(arr > 0):
                raise ConfigError(f"{name} must be strictly positive")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be strictly positive")
        if self.pathloss_ref_dist_m <= 0:
            raise ConfigError("pathloss_ref_dist_m must be strictly positive")
        if not 0 < self.outage_threshold < 0.5:
            raise ConfigError("outage_threshold must lie in (0, 0.5)")

    @property
    def noise_power_w(self) -> float:
        return 10.0 ** ((self.noise_psd_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz

    @property
    def pathloss_ref(self) -> float:
        """Reference path gain (linear) at the reference distance."""
        return 10.0 ** (self.pathloss_ref_db / 10.0)

    def pathgain(self, dist_m: np.ndarray) -> np.ndarray:
        """Per-antenna average channel power at distance ``dist_m``.

        Distances below the reference distance clamp to it so the gain never
        exceeds the reference value.
        """
        d = np.maximum(np.asarray(dist_m, dtype=float), self.pathloss_ref_dist_m)
        return self.pathloss_ref * (d / self.pathloss_ref_dist_m) ** (-self.pathloss_exp)


@dataclass(frozen=True)
class ChannelSet:
    """Complex channel vectors between every BS and plant.

    ``uplink[m, k]`` is the N-vector seen by BS m from plant k; amplitude
    includes path loss.  With reciprocal channels ``downlink is uplink``.
    """

    uplink: np.ndarray    # (M, K, N) complex
    downlink: np.ndarray  # (M, K, N) complex

    def __post_init__(self):
        if not (np.all(np.isfinite(self.uplink.view(float)))
                and np.all(np.isfinite(self.downlink.view(float)))):
            raise ValueError("channel entries must be finite")


@dataclass(frozen=True)
class GainTensors:
    """Matched-filter power gains.

    ``uplink_gain[m, l, k]``: gain of plant l's signal under the receive beam
    pointed at plant k.  ``downlink_gain[m, l, k]``: gain at plant k's receiver
    of the stream precoded for plant l.  Diagonals (l == k) equal the squared
    channel norms.
    """

    uplink_gain: np.ndarray    # (M, K, K)
    downlink_gain: np.ndarray  # (M, K, K)

    def channel_norms_sq(self) -> np.ndarray:
        """Squared channel norms per (m, k), taken from the uplink diagonal."""
        return np.einsum("mkk->mk", self.uplink_gain)


@dataclass(frozen=True)
class PowerAllocation:
    """Uplink per-plant and downlink per-stream transmit powers (watts)."""

    up: np.ndarray    # (M, K)
    down: np.ndarray  # (M, K)

    def check(self, config: NetworkConfig, assoc: np.ndarray, tol: float = 1e-9) -> None:
        if np.any(self.up < -tol) or np.any(self.down < -tol):
            raise ValueError("powers must be nonnegative")
        cap = assoc * self.up - config.uplink_power_cap_w[None, :]
        if np.any(cap > tol * np.maximum(1.0, config.uplink_power_cap_w)):
            raise ValueError("uplink power cap violated")
        tot = (assoc * self.down).sum(axis=1) - config.downlink_power_budget_w
        if np.any(tot > tol * np.maximum(1.0, config.downlink_power_budget_w)):
            raise ValueError("downlink power budget violated")


@dataclass(frozen=True)
class TimeAllocation:
    """Slot durations (seconds) and the period T.

    Under the staggered protocol the 2M+1 slots sum to the period; under the
    three-slot fdma protocol the period is max(up) + compute + max(down).
    """

    up_slots: np.ndarray   # (M,)
    compute_slot: float
    down_slots: np.ndarray  # (M,)
    period: float
    protocol: str = "tdma"

    def __post_init__(self):
        if (np.any(self.up_slots <= 0) or self.compute_slot <= 0
                or np.any(self.down_slots <= 0) or self.period <= 0):
            raise ValueError("all slot durations and the period must be positive")
        if self.protocol == "tdma":
            total = float(self.up_slots.sum() + self.compute_slot + self.down_slots.sum())
        else:
            total = float(self.up_slots.max() + self.compute_slot + self.down_slots.max())
        if abs(total - self.period) > 1e-9 * max(self.period, 1e-12):
            raise ValueError(
                f"slot durations sum to {total!r} but period is {self.period!r}")


# ---------------------------------------------------------------------------
# scenario file parsing
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "outage_threshold": 1e-3,
    "pathloss_exp": 3.0,
    "pathloss_ref_dist_m": 1.0,
    "rng_seed": 1,
    "reciprocal_channels": 1,
    "plant_positions_mode": "uniform",
    "area_min_m": 0.0,
    "area_max_m": 100.0,
}

_MANDATORY = (
    "num_bs", "num_plants", "num_antennas", "bs_positions_m",
    "bandwidth_hz", "noise_psd_dbm_per_hz", "pathloss_ref_db",
    "uplink_power_cap_w", "downlink_power_budget_w",
    "bits_uplink", "bits_compute", "bits_downlink",
    "cycles_per_bit", "cpu_freq_hz",
)


def read_kv_file(path) -> dict:
    """Parse a flat ``key = value`` scenario file into a string dict.

    Lines starting with ``#`` and blank lines are ignored; inline comments
    after ``#`` are stripped.
    """
    entries = {}
    try:
        text = open(path, "r", encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def _parse_floats(key: str, value: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in value.split(",") if v.strip() != ""])
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as numbers") from exc


def _parse_points(key: str, value: str) -> np.ndarray:
    pts = []
    for part in value.split(";"):
        part = part.strip()
        if not part:
            continue
        coords = _parse_floats(key, part)
        if coords.size != 2:
            raise ConfigError(f"{key}: point {part!r} must have exactly 2 coordinates")
        pts.append(coords)
    if not pts:
        raise ConfigError(f"{key}: no points given")
    return np.array(pts)


def _broadcast(key: str, value: str, n: int) -> np.ndarray:
    arr = _parse_floats(key, value)
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise ConfigError(f"{key}: expected 1 or {n} values, got {arr.size}")
    return arr


def load_config(path, overrides: dict | None = None) -> tuple[Topology, NetworkConfig]:
    """Load and validate a scenario file.

    ``overrides`` replaces raw entries before validation (used by sweeps).
    Missing optional keys take documented defaults and are recorded in
    ``NetworkConfig.defaulted_keys``.  Errors name the offending field.
    """
    entries = read_kv_file(path)
    if overrides:
        entries.update({k: str(v) for k, v in overrides.items()})

    missing = [k for k in _MANDATORY if k not in entries]
    if missing:
        raise ConfigError(f"missing mandatory keys: {', '.join(missing)}")

    defaulted = tuple(k for k in _DEFAULTS if k not in entries)
    get = lambda k: entries.get(k, str(_DEFAULTS[k]) if k in _DEFAULTS else None)

    def get_float(key):
        try:
            return float(get(key))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot parse {entries.get(key)!r}") from exc

    def get_int(key):
        val = get_float(key)
        if val != int(val):
            raise ConfigError(f"{key}: expected an integer, got {val!r}")
        return int(val)

    M = get_int("num_bs")
    K = get_int("num_plants")
    N = get_int("num_antennas")
    if M < 1:
        raise ConfigError("num_bs must be >= 1")
    if K < 1:
        raise ConfigError("num_plants must be >= 1")

    bs_pos = _parse_points("bs_positions_m", entries["bs_positions_m"])
    if bs_pos.shape[0] != M:
        raise ConfigError(f"bs_positions_m: expected {M} points, got {bs_pos.shape[0]}")

    mode = get("plant_positions_mode")
    if mode == "fixed":
        if "plant_positions_m" not in entries:
            raise ConfigError("plant_positions_m required when plant_positions_mode=fixed")
        plant_pos = _parse_points("plant_positions_m", entries["plant_positions_m"])
        if plant_pos.shape[0] != K:
            raise ConfigError(
                f"plant_positions_m: expected {K} points, got {plant_pos.shape[0]}")
    elif mode == "uniform":
        lo, hi = get_float("area_min_m"), get_float("area_max_m")
        if hi <= lo:
            raise ConfigError("area_max_m must exceed area_min_m")
        rng = np.random.default_rng(np.random.SeedSequence([int(get_float("rng_seed")), 0x706F73]))
        plant_pos = rng.uniform(lo, hi, size=(K, 2))
    else:
        raise ConfigError(f"plant_positions_mode: unknown mode {mode!r}")

    topology = Topology(M, K, N, bs_pos, plant_pos)
    config = NetworkConfig(
        bandwidth_hz=get_float("bandwidth_hz"),
        noise_psd_dbm_per_hz=get_float("noise_psd_dbm_per_hz"),
        pathloss_ref_db=get_float("pathloss_ref_db"),
        pathloss_ref_dist_m=get_float("pathloss_ref_dist_m"),
        pathloss_exp=get_float("pathloss_exp"),
        uplink_power_cap_w=_broadcast("uplink_power_cap_w", entries["uplink_power_cap_w"], K),
        downlink_power_budget_w=_broadcast(
            "downlink_power_budget_w", entries["downlink_power_budget_w"], M),
        bits_uplink=_broadcast("bits_uplink", entries["bits_uplink"], K),
        bits_compute=_broadcast("bits_compute", entries["bits_compute"], K),
        bits_downlink=_broadcast("bits_downlink", entries["bits_downlink"], K),
        cycles_per_bit=_broadcast("cycles_per_bit", entries["cycles_per_bit"], K),
        cpu_freq_hz=_broadcast("cpu_freq_hz", entries["cpu_freq_hz"], M),
        outage_threshold=get_float("outage_threshold"),
        rng_seed=get_int("rng_seed"),
        reciprocal_channels=bool(get_int("reciprocal_channels")),
        defaulted_keys=defaulted,
    )
    return topology, config


# ---------------------------------------------------------------------------
# channel generation and matched-filter gains
# ---------------------------------------------------------------------------

def generate_channels(topology: Topology, config: NetworkConfig,
                      seed: int | None = None) -> ChannelSet:
    """Draw i.i.d. circularly-symmetric complex Gaussian channel vectors.

    Per-entry variance follows the path-loss law at the BS-plant distance.
    Deterministic given (topology, config, seed); ``seed`` defaults to
    ``config.rng_seed``.
    """
    seed = config.rng_seed if seed is None else seed
    M, K, N = topology.num_bs, topology.num_plants, topology.num_antennas
    var = config.pathgain(topology.distances())  # (M, K)
    scale = np.sqrt(var / 2.0)[..., None]

    def draw(stream):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), stream]))
        re = rng.standard_normal((M, K, N))
        im = rng.standard_normal((M, K, N))
        return scale * (re + 1j * im)

    up = draw(0)
    down = up if config.reciprocal_channels else draw(1)
    return ChannelSet(uplink=up, downlink=down)


def effective_gains(channels: ChannelSet) -> GainTensors:
    """Matched-filter power gains from the raw channel vectors.

    Uplink: |g_ul[m,l]^H g_ul[m,k]|^2 / ||g_ul[m,k]||^2 (receive beam for k).
    Downlink: |g_dl[m,k]^H g_dl[m,l]|^2 / ||g_dl[m,l]||^2 (precoder for l).
    """
    def mf(g):
        norms = np.einsum("mkn,mkn->mk", g.conj(), g).real  # (M, K)
        bad = np.argwhere(norms <= 0)
        if bad.size:
            m, k = bad[0]
            raise ValueError(f"zero-norm channel vector at (bs={m}, plant={k})")
        inner = np.einsum("mln,mkn->mlk", g.conj(), g)  # g[m,l]^H g[m,k]
        return np.abs(inner) ** 2 / norms[:, None, :], inner, norms

    up_gain, _, _ = mf(channels.uplink)
    # Downlink [m,l,k]: stream for l measured at plant k's receiver.
    inner_dl = np.einsum("mkn,mln->mlk", channels.downlink.conj(), channels.downlink)
    norms_dl = np.einsum("mln,mln->ml", channels.downlink.conj(), channels.downlink).real
    bad = np.argwhere(norms_dl <= 0)
    if bad.size:
        m, l = bad[0]
        raise ValueError(f"zero-norm channel vector at (bs={m}, plant={l})")
    down_gain = np.abs(inner_dl) ** 2 / norms_dl[:, :, None]
    return GainTensors(uplink_gain=up_gain, downlink_gain=down_gain)


def export_channels_csv(channels: ChannelSet, path) -> None:
    """Dump channel vectors as CSV rows keyed by (bs, plant, antenna)."""
    M, K, N = channels.uplink.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bs,plant,antenna,up_re,up_im,down_re,down_im\n")
        for m in range(M):
            for k in range(K):
                for n in range(N):
                    u = channels.uplink[m, k, n]
                    d = channels.downlink[m, k, n]
                    fh.write(f"{m},{k},{n},{u.real:.17g},{u.imag:.17g},"
                             f"{d.real:.17g},{d.imag:.17g}\n")
