"""Scene geometry and indoor multipath channel synthesis.

A scene is a rectangular room containing multi-antenna access points (APs)
and single-antenna backscatter devices (BDEs).  Every scalar channel entry
is a free-space line-of-sight term plus first-order specular reflections
off the active room surfaces, computed with the image-source method:

    h = (lam / 4 pi d) e^{-j 2 pi d / lam}
        + sum_m g_smc (lam / 4 pi d_m) e^{-j 2 pi d_m / lam},

where d is the direct path length and d_m the distance to the m-th mirror
image of the far endpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

REFLECTORS = ("x0", "xmax", "y0", "ymax", "z0", "zmax")

# Two points closer than this are treated as coincident (degenerate geometry).
MIN_DISTANCE = 1e-9


@dataclass
class RoomGeometry:
    """Rectangular room with optionally reflective surfaces."""

    dims: tuple[float, float, float] = (20.0, 10.0, 4.0)
    g_smc: float = 0.5
    active_reflectors: tuple[str, ...] = REFLECTORS

    def __post_init__(self) -> None:
        self.dims = tuple(float(v) for v in self.dims)
        self.active_reflectors = tuple(self.active_reflectors)
        if any(v <= 0 for v in self.dims):
            raise ValueError(f"room dimensions must be positive, got {self.dims}")
        if not 0.0 <= self.g_smc <= 1.0:
            raise ValueError(f"g_smc must lie in [0, 1], got {self.g_smc}")
        unknown = set(self.active_reflectors) - set(REFLECTORS)
        if unknown:
            raise ValueError(f"unknown reflector names: {sorted(unknown)}")
        if self.g_smc > 0 and not self.active_reflectors:
            raise ValueError("g_smc > 0 requires at least one active reflector")

    def contains(self, p, strict: bool = True) -> bool:
        p = np.asarray(p, dtype=float)
        lo = 0.0
        if strict:
            return bool(np.all(p > lo) and np.all(p < np.asarray(self.dims)))
        return bool(np.all(p >= lo) and np.all(p <= np.asarray(self.dims)))


@dataclass
class ApSpec:
    """One access point: a rows x cols antenna grid in the x-z plane.

    `rows` counts antennas along x and `cols` along z; `spacing` is the
    inter-antenna distance in meters (filled with half a wavelength by the
    enclosing Scene when left as None).
    """

    id: int
    center: tuple[float, float, float]
    rows: int = 1
    cols: int = 1
    spacing: float | None = None
    adc_bits: int = 8
    is_ref: bool = False

    def __post_init__(self) -> None:
        self.center = tuple(float(v) for v in self.center)
        if self.rows < 1 or self.cols < 1:
            raise ValueError("antenna grid must have rows >= 1 and cols >= 1")
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if self.spacing is not None and self.spacing <= 0:
            raise ValueError("antenna spacing must be positive")

    @property
    def n_antennas(self) -> int:
        return self.rows * self.cols


@dataclass
class Scene:
    """Full experiment description: room, APs, BDEs, power budget, seed."""

    room: RoomGeometry
    wavelength: float
    aps: list[ApSpec]
    bdes: list[tuple[float, float, float]]
    p_max: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if len(self.aps) < 2:
            raise ValueError("a scene needs at least two APs")
        if len(self.bdes) < 1:
            raise ValueError("a scene needs at least one BDE")
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        ids = [ap.id for ap in self.aps]
        if len(set(ids)) != len(ids):
            raise ValueError("AP ids must be unique")
        refs = [ap.id for ap in self.aps if ap.is_ref]
        if len(refs) != 1:
            raise ValueError(f"exactly one AP must have is_ref=True, got {refs}")
        for ap in self.aps:
            if ap.spacing is None:
                ap.spacing = 0.5 * self.wavelength
            if not self.room.contains(ap.center):
                raise ValueError(f"AP {ap.id} center {ap.center} outside room")
        self.bdes = [tuple(float(v) for v in p) for p in self.bdes]
        for p in self.bdes:
            if not self.room.contains(p):
                raise ValueError(f"BDE position {p} outside room")

    @property
    def ref_id(self) -> int:
        return next(ap.id for ap in self.aps if ap.is_ref)

    @property
    def ap_ids(self) -> tuple[int, ...]:
        return tuple(ap.id for ap in self.aps)

    def ap(self, ap_id: int) -> ApSpec:
        for ap in self.aps:
            if ap.id == ap_id:
                return ap
        raise KeyError(f"no AP with id {ap_id}")

    @property
    def n_bdes(self) -> int:
        return len(self.bdes)


@dataclass(frozen=True)
class Partition:
    """AP role assignment: carrier-emitter set and reader set.

    The reference AP always sits in the reader set; the two sets are
    disjoint and cover all APs of the scene they are used with.
    """

    ce_ids: tuple[int, ...]
    reader_ids: tuple[int, ...]
    ref_id: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "ce_ids", tuple(sorted(self.ce_ids)))
        object.__setattr__(self, "reader_ids", tuple(sorted(self.reader_ids)))
        if self.ref_id not in self.reader_ids:
            raise ValueError("reference AP must be in the reader set")
        if set(self.ce_ids) & set(self.reader_ids):
            raise ValueError("CE and reader sets must be disjoint")
        if not self.ce_ids:
            raise ValueError("CE set must be non-empty")

    def covers(self, ap_ids) -> bool:
        return set(self.ce_ids) | set(self.reader_ids) == set(ap_ids)


@dataclass
class ChannelSet:
    """Assembled channels for one partition.

    Antenna ordering is fixed: within each side, APs ascending by id, each
    AP's antennas in grid order.  `h_c_all`/`h_r_all` hold one row per BDE;
    the unsuffixed properties expose the first BDE for the single-device
    case.  `ref_rows` indexes the reference AP's antennas inside the reader
    ordering, and `H_DL_prime` is `H_DL` with those rows removed.
    """

    partition: Partition
    h_ap: dict[int, np.ndarray]            # ap id -> (n_bdes, M_l)
    H_DL: np.ndarray                       # (N_R, N_C)
    h_c_all: np.ndarray                    # (n_bdes, N_C)
    h_r_all: np.ndarray                    # (n_bdes, N_R)
    ref_rows: np.ndarray                   # indices into reader ordering
    ce_ant_ap: np.ndarray = field(default=None)      # (N_C,) owning AP id
    reader_ant_ap: np.ndarray = field(default=None)  # (N_R,) owning AP id

    @property
    def n_c(self) -> int:
        return self.H_DL.shape[1]

    @property
    def n_r(self) -> int:
        return self.H_DL.shape[0]

    @property
    def n_bdes(self) -> int:
        return self.h_c_all.shape[0]

    @property
    def h_c(self) -> np.ndarray:
        return self.h_c_all[0]

    @property
    def h_r(self) -> np.ndarray:
        return self.h_r_all[0]

    @property
    def h_ref(self) -> np.ndarray:
        return self.h_ap[self.partition.ref_id]

    @property
    def H_BL(self) -> np.ndarray:
        return np.outer(self.h_r, self.h_c)

    def H_BL_k(self, k: int) -> np.ndarray:
        return np.outer(self.h_r_all[k], self.h_c_all[k])

    @property
    def H_DL_prime(self) -> np.ndarray:
        keep = np.setdiff1d(np.arange(self.n_r), self.ref_rows)
        return self.H_DL[keep, :]

    @property
    def nonref_rows(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_r), self.ref_rows)


def image_points(room: RoomGeometry, p) -> list[np.ndarray]:
    """Mirror p across each active room surface, in canonical surface order."""
    p = np.asarray(p, dtype=float)
    if not room.contains(p):
        raise ValueError(f"point {p} not strictly inside room {room.dims}")
    X, Y, Z = room.dims
    mirrors = {
        "x0": np.array([-p[0], p[1], p[2]]),
        "xmax": np.array([2 * X - p[0], p[1], p[2]]),
        "y0": np.array([p[0], -p[1], p[2]]),
        "ymax": np.array([p[0], 2 * Y - p[1], p[2]]),
        "z0": np.array([p[0], p[1], -p[2]]),
        "zmax": np.array([p[0], p[1], 2 * Z - p[2]]),
    }
    return [mirrors[name] for name in REFLECTORS if name in room.active_reflectors]


def los_gain(d, wavelength: float):
    """Free-space amplitude gain (lam / 4 pi d) e^{-j 2 pi d / lam}."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path length must be positive")
    lam = wavelength
    return (lam / (4.0 * np.pi * d)) * np.exp(-2j * np.pi * d / lam)


def antenna_positions(ap: ApSpec) -> np.ndarray:
    """(M_l, 3) grid positions; x varies fastest, z slowest."""
    if ap.spacing is None:
        raise ValueError("antenna spacing unresolved; attach the AP to a Scene")
    s = ap.spacing
    cx, cy, cz = ap.center
    xs = (np.arange(ap.rows) - (ap.rows - 1) / 2.0) * s + cx
    zs = (np.arange(ap.cols) - (ap.cols - 1) / 2.0) * s + cz
    pos = np.empty((ap.rows * ap.cols, 3))
    i = 0
    for z in zs:
        for x in xs:
            pos[i] = (x, cy, z)
            i += 1
    return pos


def channel_matrix(tx_pos, rx_pos, room: RoomGeometry, wavelength: float) -> np.ndarray:
    """(n_rx, n_tx) channel: LOS plus g_smc-weighted first-order images of rx."""
    tx = np.atleast_2d(np.asarray(tx_pos, dtype=float))
    rx = np.atleast_2d(np.asarray(rx_pos, dtype=float))
    d = np.linalg.norm(rx[:, None, :] - tx[None, :, :], axis=-1)
    if np.any(d < MIN_DISTANCE):
        raise ValueError("coincident transmit/receive positions (degenerate geometry)")
    h = los_gain(d, wavelength)
    if room.g_smc > 0:
        X, Y, Z = room.dims
        for name in room.active_reflectors:
            rx_m = rx.copy()
            if name == "x0":
                rx_m[:, 0] = -rx[:, 0]
            elif name == "xmax":
                rx_m[:, 0] = 2 * X - rx[:, 0]
            elif name == "y0":
                rx_m[:, 1] = -rx[:, 1]
            elif name == "ymax":
                rx_m[:, 1] = 2 * Y - rx[:, 1]
            elif name == "z0":
                rx_m[:, 2] = -rx[:, 2]
            elif name == "zmax":
                rx_m[:, 2] = 2 * Z - rx[:, 2]
            d_m = np.linalg.norm(rx_m[:, None, :] - tx[None, :, :], axis=-1)
            if np.any(d_m < MIN_DISTANCE):
                raise ValueError("degenerate image-source geometry")
            h = h + room.g_smc * los_gain(d_m, wavelength)
    return h


class SceneChannels:
    """Per-scene propagation data with partition-independent precomputation.

    Synthesizes all per-AP BDE channels and pairwise AP-to-AP blocks once so
    that channel sets for many candidate partitions can be assembled cheaply
    (role-selection searches re-partition the same scene thousands of times).
    """

    def __init__(self, scene: Scene):
        self.scene = scene
        self.ant_pos = {ap.id: antenna_positions(ap) for ap in scene.aps}
        bde_pos = np.asarray(scene.bdes, dtype=float)
        # h_ap[l][k, :] = channel between AP_l's antennas and BDE k
        self.h_ap = {
            ap.id: channel_matrix(self.ant_pos[ap.id], bde_pos, scene.room, scene.wavelength)
            for ap in scene.aps
        }
        # blocks[(rx, tx)] = channel from AP_tx antennas to AP_rx antennas
        self.blocks: dict[tuple[int, int], np.ndarray] = {}
        for rx in scene.aps:
            for tx in scene.aps:
                if rx.id == tx.id:
                    continue
                self.blocks[(rx.id, tx.id)] = channel_matrix(
                    self.ant_pos[tx.id], self.ant_pos[rx.id], scene.room, scene.wavelength
                )

    @property
    def ap_ids(self) -> tuple[int, ...]:
        return self.scene.ap_ids

    @property
    def ref_id(self) -> int:
        return self.scene.ref_id

    def ap_gains(self) -> dict[int, float]:
        """Per-AP squared channel norm to the first BDE."""
        return {i: float(np.vdot(h[0], h[0]).real) for i, h in self.h_ap.items()}

    def assemble(self, partition: Partition, allow_partial: bool = False) -> ChannelSet:
        scene = self.scene
        used = set(partition.ce_ids) | set(partition.reader_ids)
        if not used <= set(scene.ap_ids):
            raise ValueError("partition names APs not in the scene")
        if not allow_partial and not partition.covers(scene.ap_ids):
            raise ValueError("partition does not cover the scene's APs")
        if partition.ref_id != scene.ref_id:
            raise ValueError("partition reference AP differs from the scene's")
        ce_ids = partition.ce_ids
        reader_ids = partition.reader_ids
        h_c_all = np.concatenate([self.h_ap[i] for i in ce_ids], axis=1)
        h_r_all = np.concatenate([self.h_ap[i] for i in reader_ids], axis=1)
        H_DL = np.concatenate(
            [
                np.concatenate([self.blocks[(r, c)] for c in ce_ids], axis=1)
                for r in reader_ids
            ],
            axis=0,
        )
        reader_ant_ap = np.concatenate(
            [np.full(scene.ap(i).n_antennas, i, dtype=int) for i in reader_ids]
        )
        ce_ant_ap = np.concatenate(
            [np.full(scene.ap(i).n_antennas, i, dtype=int) for i in ce_ids]
        )
        ref_rows = np.flatnonzero(reader_ant_ap == partition.ref_id)
        return ChannelSet(
            partition=partition,
            h_ap={i: self.h_ap[i] for i in scene.ap_ids},
            H_DL=H_DL,
            h_c_all=h_c_all,
            h_r_all=h_r_all,
            ref_rows=ref_rows,
            ce_ant_ap=ce_ant_ap,
            reader_ant_ap=reader_ant_ap,
        )

    def probe_channels(self, partition: Partition, points) -> np.ndarray:
        """(n_points, N_C) channels from the CE antennas to arbitrary points."""
        tx = np.concatenate([self.ant_pos[i] for i in partition.ce_ids], axis=0)
        return channel_matrix(tx, points, self.scene.room, self.scene.wavelength)


def synth_channels(scene: Scene, partition: Partition) -> ChannelSet:
    """Synthesize the full channel set of one scene/partition pair."""
    return SceneChannels(scene).assemble(partition)


def path_gain(x, h) -> float:
    """Received-to-transmitted energy ratio |h^T x|^2 / ||x||^2."""
    x = np.asarray(x)
    h = np.asarray(h)
    if h.shape != x.shape:
        raise ValueError(f"dimension mismatch: {h.shape} vs {x.shape}")
    nx2 = float(np.vdot(x, x).real)
    if nx2 <= 0:
        raise ValueError("beamforming vector must be nonzero")
    return float(np.abs(h @ x) ** 2) / nx2


@dataclass
class GridSpec:
    """Uniform horizontal probe grid at a constant height."""

    x: tuple[float, float]
    y: tuple[float, float]
    nx: int
    ny: int
    z: float


def pg_map(
    scene_channels: SceneChannels, partition: Partition, x, grid: GridSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Path-gain field over a z-constant grid; returns (xs, ys, pg[ny, nx])."""
    xv = np.asarray(x)
    if float(np.vdot(xv, xv).real) <= 0:
        raise ValueError("beamforming vector must be nonzero")
    room = scene_channels.scene.room
    xs = np.linspace(grid.x[0], grid.x[1], grid.nx)
    ys = np.linspace(grid.y[0], grid.y[1], grid.ny)
    for v, hi in (((grid.x[0], grid.x[1]), room.dims[0]), ((grid.y[0], grid.y[1]), room.dims[1])):
        if v[0] < 0 or v[1] > hi:
            raise ValueError("probe grid extends outside the room")
    if not 0 <= grid.z <= room.dims[2]:
        raise ValueError("probe grid extends outside the room")
    pts = np.array([(gx, gy, grid.z) for gy in ys for gx in xs])
    h = scene_channels.probe_channels(partition, pts)      # (n_pts, N_C)
    nx2 = float(np.vdot(xv, xv).real)
    pg = (np.abs(h @ xv) ** 2 / nx2).reshape(grid.ny, grid.nx)
    return xs, ys, pg


def default_scene(
    adc_bits: int = 8,
    ref_bits: int = 16,
    n_bdes: int = 1,
    g_smc: float = 0.5,
) -> Scene:
    """Reference indoor layout: 20 x 10 x 4 m room, ten 4 x 4 APs on the two
    long walls plus a single-antenna high-resolution reference AP in the
    middle, one BDE at (4, 4, 2)."""
    aps = []
    for i, x in enumerate((2.0, 5.0, 8.0, 11.0, 14.0)):
        aps.append(ApSpec(id=i + 1, center=(x, 1.0, 2.0), rows=4, cols=4, adc_bits=adc_bits))
    for i, x in enumerate((5.0, 8.0, 11.0, 14.0, 17.0)):
        aps.append(ApSpec(id=i + 6, center=(x, 9.0, 2.0), rows=4, cols=4, adc_bits=adc_bits))
    aps.append(ApSpec(id=11, center=(10.0, 5.0, 2.0), rows=1, cols=1, adc_bits=ref_bits, is_ref=True))
    bdes = [(4.0, 4.0, 2.0), (6.5, 6.5, 2.0), (15.0, 5.0, 2.0)][:n_bdes]
    return Scene(
        room=RoomGeometry(g_smc=g_smc),
        wavelength=0.1,
        aps=aps,
        bdes=bdes,
        p_max=1.0,
        rng_seed=0,
    )


def _scene_from_dict(cfg: dict) -> Scene:
    room_cfg = cfg.get("room", {})
    room = RoomGeometry(
        dims=tuple(room_cfg.get("dims_m", (20.0, 10.0, 4.0))),
        g_smc=float(room_cfg.get("g_smc", 0.5)),
        active_reflectors=tuple(room_cfg.get("active_reflectors", REFLECTORS)),
    )
    aps = []
    for i, ap_cfg in enumerate(cfg["aps"]):
        aps.append(
            ApSpec(
                id=int(ap_cfg.get("id", i + 1)),
                center=tuple(ap_cfg["center_m"]),
                rows=int(ap_cfg.get("rows", 1)),
                cols=int(ap_cfg.get("cols", 1)),
                spacing=ap_cfg.get("spacing_m"),
                adc_bits=int(ap_cfg.get("adc_bits", 8)),
                is_ref=bool(ap_cfg.get("is_ref", False)),
            )
        )
    bdes = [tuple(b["position_m"]) for b in cfg["bdes"]]
    return Scene(
        room=room,
        wavelength=float(cfg["wavelength_m"]),
        aps=aps,
        bdes=bdes,
        p_max=float(cfg.get("p_max", 1.0)),
        rng_seed=int(cfg.get("rng_seed", 0)),
    )


def load_scene(path) -> Scene:
    """Read a scene from a YAML or JSON config file."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        cfg = json.loads(text)
    else:
        cfg = yaml.safe_load(text)
    return _scene_from_dict(cfg)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "wavelength_m": scene.wavelength,
        "room": {
            "dims_m": list(scene.room.dims),
            "g_smc": scene.room.g_smc,
            "active_reflectors": list(scene.room.active_reflectors),
        },
        "aps": [
            {
                "id": ap.id,
                "center_m": list(ap.center),
                "rows": ap.rows,
                "cols": ap.cols,
                "spacing_m": ap.spacing,
                "adc_bits": ap.adc_bits,
                "is_ref": ap.is_ref,
            }
            for ap in scene.aps
        ],
        "bdes": [{"position_m": list(p)} for p in scene.bdes],
        "p_max": scene.p_max,
        "rng_seed": scene.rng_seed,
    }


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))
