"""Spherical-wave PASS channels, pilot activation schedules, and measurements.

The free-space channel from a subarray's PAs to a target is a sum of
spherical wavefronts: a direct component with amplitude wavelength/(4*pi*r)
per element, and one two-hop component per scatterer whose amplitude
carries the extra scatterer-to-user leg. Pilots are collected through the
waveguide: in each slot a random subset of PAs radiates, and the guide
response combines their element phases with the in-guide propagation
phase exp(j*k*n_eff*x).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    ArrayLayout,
    Scene,
    ServiceRegion,
    SingularGeometryError,
    Structure,
    SubarrayGeometry,
    custom_layout,
    DISTANCE_GUARD,
)

SPEED_OF_LIGHT = 299_792_458.0

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class RadioConfig:
    """Carrier and waveguide parameters.

    n_eff is the effective refractive index of the dielectric guide and
    p0 the pilot power; both default to the values used throughout the
    bundled experiments.
    """

    frequency: float
    n_eff: float = 1.4
    p0: float = 1.0

    def __post_init__(self):
        if self.frequency <= 0.0:
            raise ValueError("carrier frequency must be positive")
        if self.n_eff < 1.0:
            raise ValueError("effective index below 1 is unphysical")
        if self.p0 <= 0.0:
            raise ValueError("pilot power must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength


@dataclass(frozen=True)
class PathComponent:
    """One propagation path seen by one subarray, materialized per element."""

    source: np.ndarray  # (3,) emission point of the last hop
    kind: str  # "los" | "nlos"
    vector: np.ndarray  # (N,) complex per-PA response
    scatter_user_distance: float | None = None

    def __post_init__(self):
        src = np.asarray(self.source, dtype=float).reshape(3).copy()
        src.setflags(write=False)
        object.__setattr__(self, "source", src)
        vec = np.asarray(self.vector, dtype=complex).copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        if self.kind not in ("los", "nlos"):
            raise ValueError("path kind must be 'los' or 'nlos'")


def _distances(pa_positions: np.ndarray, point: np.ndarray, guard: float) -> np.ndarray:
    delta = pa_positions - point[None, :]
    r = np.sqrt(np.sum(delta * delta, axis=1))
    if np.any(r < guard):
        raise SingularGeometryError(
            f"target within {guard:.1e} m of a PA; spherical amplitude diverges"
        )
    return r


def path_vector(
    pa_positions,
    source,
    radio: RadioConfig,
    kind: str = "los",
    user=None,
    guard: float = DISTANCE_GUARD,
) -> np.ndarray:
    """Per-element response of one path at arbitrary PA coordinates.

    Direct path: (lam/(4*pi*r_n)) * exp(-j*k*r_n). Scattered path adds the
    scatterer-to-user leg r_su as a common factor
    lam*exp(-j*k*r_su) / ((4*pi)^(3/2) * r_n * r_su), with ``source`` the
    scatterer and ``user`` the user position.
    """
    pa = np.asarray(pa_positions, dtype=float).reshape(-1, 3)
    src = np.asarray(source, dtype=float).reshape(3)
    lam = radio.wavelength
    k = radio.wavenumber
    r = _distances(pa, src, guard)
    phase = np.exp(-1j * k * r)
    if kind == "los":
        return (lam / (FOUR_PI * r)) * phase
    if kind != "nlos":
        raise ValueError("path kind must be 'los' or 'nlos'")
    if user is None:
        raise ValueError("scattered path needs the user position")
    u = np.asarray(user, dtype=float).reshape(3)
    r_su = float(np.linalg.norm(src - u))
    if r_su < guard:
        raise SingularGeometryError("scatterer coincides with the user")
    common = lam * np.exp(-1j * k * r_su) / (FOUR_PI**1.5 * r_su)
    return common * phase / r


def synthesize_paths(
    layout: ArrayLayout, scene: Scene, radio: RadioConfig
) -> list[list[PathComponent]]:
    """Materialize every (subarray, path) response for a scene.

    Returns one list per subarray, direct path first, then one scattered
    component per scatterer in scene order.
    """
    out = []
    for sub in layout.subarrays:
        pa = sub.pa_positions
        comps = [PathComponent(scene.user, "los", path_vector(pa, scene.user, radio, "los"))]
        for sc in scene.scatterers:
            vec = path_vector(pa, sc, radio, "nlos", user=scene.user)
            r_su = float(np.linalg.norm(sc - scene.user))
            comps.append(PathComponent(sc, "nlos", vec, scatter_user_distance=r_su))
        out.append(comps)
    return out


def channel_vector(paths: list[PathComponent]) -> np.ndarray:
    """Superpose one subarray's path components into its channel vector."""
    if not paths:
        raise ValueError("need at least one path component")
    total = np.zeros_like(paths[0].vector)
    for p in paths:
        total = total + p.vector
    return total


def waveguide_vector(subarray: SubarrayGeometry, radio: RadioConfig) -> np.ndarray:
    """In-guide propagation phases exp(j*k*n_eff*x_n) at the PA taps."""
    x = subarray.pa_positions[:, 0]
    return np.exp(1j * radio.wavenumber * radio.n_eff * x)


@dataclass(frozen=True)
class ActivationSchedule:
    """Per-slot PA on/off pattern.

    ``activation`` has shape (slots, M, N). Under the single-waveguide
    structure the slots are split into contiguous per-subarray blocks
    (``sw_blocks``) and a subarray is only driven inside its own block;
    multi-waveguide subarrays are driven concurrently in every slot.
    """

    structure: Structure
    slots: int
    activation: np.ndarray
    sw_blocks: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        a = np.asarray(self.activation, dtype=np.uint8).copy()
        a.setflags(write=False)
        object.__setattr__(self, "activation", a)
        if a.ndim != 3 or a.shape[0] != self.slots:
            raise ValueError("activation must be (slots, M, N)")
        if self.structure is Structure.SW and self.sw_blocks is None:
            raise ValueError("single-waveguide schedule needs its block boundaries")

    @property
    def m(self) -> int:
        return self.activation.shape[1]

    def observed_slots(self, m: int) -> np.ndarray:
        """Global slot indices in which subarray m is measured."""
        if self.structure is Structure.SW:
            start, stop = self.sw_blocks[m]
            return np.arange(start, stop)
        return np.arange(self.slots)


def make_schedule(
    layout: ArrayLayout, total_slots: int, density: float = 0.5, rng_seed=0
) -> ActivationSchedule:
    """Draw a Bernoulli(density) activation schedule for the layout.

    Slots a subarray actually observes are redrawn while all-off (an
    all-off slot measures nothing); after 100 redraws a single random PA
    is forced on, which keeps pathological densities terminating.
    """
    m, n = layout.m, layout.pas_per_subarray
    if total_slots < m:
        raise ValueError("need at least one slot per subarray")
    if not 0.0 < density <= 1.0:
        raise ValueError("activation density must be in (0, 1]")
    rng = np.random.default_rng(rng_seed)
    act = np.zeros((total_slots, m, n), dtype=np.uint8)

    def live_row():
        for _ in range(100):
            row = (rng.random(n) < density).astype(np.uint8)
            if row.any():
                return row
        row = np.zeros(n, dtype=np.uint8)
        row[rng.integers(n)] = 1
        return row

    if layout.structure is Structure.SW:
        base = total_slots // m
        blocks = []
        for k in range(m):
            start = k * base
            stop = (k + 1) * base if k < m - 1 else total_slots
            blocks.append((start, stop))
            for t in range(start, stop):
                act[t, k] = live_row()
        return ActivationSchedule(Structure.SW, total_slots, act, tuple(blocks))

    for t in range(total_slots):
        for k in range(m):
            act[t, k] = live_row()
    return ActivationSchedule(Structure.MW, total_slots, act, None)


@dataclass(frozen=True)
class MeasurementSet:
    """Stacked pilot observations and their measurement matrices.

    y[m] holds subarray m's observed slots; w[m] is the matching matrix
    whose row t is the conjugated elementwise product of that slot's
    activation mask with the waveguide vector, so y = sqrt(p0) * w @ h
    plus noise. slot_ids[m] maps rows back to global slot indices.
    """

    y: tuple[np.ndarray, ...]
    w: tuple[np.ndarray, ...]
    slot_ids: tuple[np.ndarray, ...]
    noise_variance: float
    snr_db: float | None
    mean_signal_power: float

    @property
    def m(self) -> int:
        return len(self.y)


def measurement_matrix(
    subarray: SubarrayGeometry, activation_rows: np.ndarray, radio: RadioConfig
) -> np.ndarray:
    """Rows (a_t * g)^H for the given activation rows of one subarray."""
    g = waveguide_vector(subarray, radio)
    return np.conj(activation_rows.astype(float) * g[None, :])


def measure(
    layout: ArrayLayout,
    schedule: ActivationSchedule,
    paths: list[list[PathComponent]],
    radio: RadioConfig,
    snr_db: float | None,
    rng_seed=0,
) -> MeasurementSet:
    """Collect pilots y = sqrt(p0) * w @ h + noise for every subarray.

    The per-trial noise variance is the mean clean-signal power over all
    observed slots of all subarrays divided by the linear SNR, so the
    quoted SNR is an average over the whole pilot frame. ``snr_db=None``
    (or +inf) disables noise.
    """
    if schedule.m != layout.m or schedule.activation.shape[2] != layout.pas_per_subarray:
        raise ValueError("schedule does not match the layout dimensions")
    if len(paths) != layout.m:
        raise ValueError("need one path list per subarray")
    rng = np.random.default_rng(rng_seed)
    amp = np.sqrt(radio.p0)

    clean, ws, slots = [], [], []
    for m, sub in enumerate(layout.subarrays):
        sl = schedule.observed_slots(m)
        rows = schedule.activation[sl, m, :]
        if np.any(rows.sum(axis=1) == 0):
            raise ValueError("schedule contains an all-off observed slot")
        w = measurement_matrix(sub, rows, radio)
        h = channel_vector(paths[m])
        clean.append(amp * (w @ h))
        ws.append(w)
        slots.append(sl)

    power = float(np.mean(np.concatenate([np.abs(c) ** 2 for c in clean])))
    if snr_db is None or np.isinf(snr_db):
        sigma2 = 0.0
    else:
        sigma2 = power / (10.0 ** (snr_db / 10.0))

    ys = []
    for c in clean:
        if sigma2 > 0.0:
            scale = np.sqrt(sigma2 / 2.0)
            noise = scale * (rng.standard_normal(c.size) + 1j * rng.standard_normal(c.size))
            ys.append(c + noise)
        else:
            ys.append(c)
    return MeasurementSet(tuple(ys), tuple(ws), tuple(slots), sigma2, snr_db, power)


# --- persistence -------------------------------------------------------------

MEASUREMENT_SCHEMA_VERSION = 1


def save_measurement_set(
    dirpath,
    ms: MeasurementSet,
    region: ServiceRegion,
    layout: ArrayLayout,
    schedule: ActivationSchedule,
    radio: RadioConfig,
    scene: Scene | None = None,
) -> None:
    """Write measurements.csv plus a sidecar of activation bits and config.

    Floats are serialized with shortest-round-trip repr, so a load followed
    by a save reproduces the numbers bit for bit.
    """
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"# passloc measurements v{MEASUREMENT_SCHEMA_VERSION}", "subarray,slot,re_y,im_y"]
    for m in range(ms.m):
        for sl, v in zip(ms.slot_ids[m], ms.y[m]):
            lines.append(f"{m},{int(sl)},{float(v.real)!r},{float(v.imag)!r}")
    (d / "measurements.csv").write_text("\n".join(lines) + "\n")

    bits = {
        str(m): ["".join(str(int(b)) for b in schedule.activation[t, m]) for t in ms.slot_ids[m]]
        for m in range(ms.m)
    }
    meta = {
        "version": MEASUREMENT_SCHEMA_VERSION,
        "region": region.to_dict(),
        "layout": {
            "structure": layout.structure.value,
            "n": layout.pas_per_subarray,
            "d": layout.pa_spacing,
            "reference_xy": [[float(x), float(y)] for x, y in layout.reference_xy],
        },
        "radio": {"frequency": radio.frequency, "n_eff": radio.n_eff, "p0": radio.p0},
        "schedule": {
            "slots": schedule.slots,
            "sw_blocks": list(map(list, schedule.sw_blocks)) if schedule.sw_blocks else None,
            "activation_bits": bits,
        },
        "noise": {"snr_db": ms.snr_db, "noise_variance": ms.noise_variance,
                  "mean_signal_power": ms.mean_signal_power},
        "scene": None if scene is None else {
            "user": [float(v) for v in scene.user],
            "scatterers": [[float(v) for v in row] for row in scene.scatterers],
        },
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2))


def load_measurement_set(dirpath) -> dict:
    """Rebuild everything save_measurement_set wrote.

    Returns a dict with keys region, layout, schedule, radio, measurements,
    scene (None when absent). Measurement matrices are recomputed from the
    stored activation bits and layout, which is deterministic.
    """
    d = Path(dirpath)
    meta = json.loads((d / "meta.json").read_text())
    if meta.get("version") != MEASUREMENT_SCHEMA_VERSION:
        raise ValueError(f"unsupported measurement schema: {meta.get('version')}")
    region = ServiceRegion.from_dict(meta["region"])
    lay = meta["layout"]
    layout = custom_layout(
        region, Structure(lay["structure"]), lay["reference_xy"], int(lay["n"]), float(lay["d"])
    )
    radio = RadioConfig(**meta["radio"])
    sch = meta["schedule"]
    slots = int(sch["slots"])
    act = np.zeros((slots, layout.m, layout.pas_per_subarray), dtype=np.uint8)
    blocks = tuple(tuple(b) for b in sch["sw_blocks"]) if sch["sw_blocks"] else None
    for m_str, rows in sch["activation_bits"].items():
        m = int(m_str)
        sl = np.arange(*blocks[m]) if blocks is not None else np.arange(slots)
        for t, bitstr in zip(sl, rows):
            act[t, m] = np.frombuffer(bitstr.encode(), dtype=np.uint8) - ord("0")
    schedule = ActivationSchedule(layout.structure, slots, act, blocks)

    per_sub: dict[int, list[tuple[int, complex]]] = {m: [] for m in range(layout.m)}
    body = (d / "measurements.csv").read_text().splitlines()
    for line in body:
        if not line or line.startswith("#") or line.startswith("subarray"):
            continue
        m_s, t_s, re_s, im_s = line.split(",")
        per_sub[int(m_s)].append((int(t_s), complex(float(re_s), float(im_s))))
    ys, ws, slot_ids = [], [], []
    for m in range(layout.m):
        rows = per_sub[m]
        sl = np.array([t for t, _ in rows], dtype=int)
        ys.append(np.array([v for _, v in rows], dtype=complex))
        ws.append(measurement_matrix(layout.subarrays[m], schedule.activation[sl, m, :], radio))
        slot_ids.append(sl)
    ms = MeasurementSet(
        tuple(ys),
        tuple(ws),
        tuple(slot_ids),
        float(meta["noise"]["noise_variance"]),
        meta["noise"]["snr_db"],
        float(meta["noise"]["mean_signal_power"]),
    )
    scene = None
    if meta.get("scene"):
        scene = Scene(np.array(meta["scene"]["user"]),
                      np.array(meta["scene"]["scatterers"]).reshape(-1, 3))
    return {
        "region": region,
        "layout": layout,
        "schedule": schedule,
        "radio": radio,
        "measurements": ms,
        "scene": scene,
    }
