"""
Network Generation Module - Hexagonal multi-cell layouts

Builds the AP lattice, drops users uniformly inside each hexagonal cell,
computes large-scale path losses and derives the user-centric cooperation
sets (APs within the maximal detection distance of each user).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Path-loss model constants (dB, distance in km)
PATH_LOSS_INTERCEPT_DB = -128.1
PATH_LOSS_SLOPE_DB = 37.6
MIN_DISTANCE_KM = 0.005

DEFAULT_HALF_SPACING_KM = np.sqrt(3.0) / 2.0


@dataclass(frozen=True, eq=False)
class NetworkLayout:
    """AP/user geometry, path losses and cooperation sets"""
    ap_positions: np.ndarray          # (U, 2) km
    user_positions: np.ndarray        # (N, 2) km
    path_loss_db: np.ndarray          # (N, U)
    g_lin: np.ndarray                 # (N, U)
    coop_mask: np.ndarray             # (N, U) bool, u in U_n
    coop_user_to_aps: Tuple[Tuple[int, ...], ...]
    coop_ap_to_users: Tuple[Tuple[int, ...], ...]
    d_max_km: float
    half_spacing_km: float
    serving_ap: np.ndarray = field(default=None)  # (N,) nearest AP

    @property
    def n_aps(self) -> int:
        return int(self.g_lin.shape[1])

    @property
    def n_users(self) -> int:
        return int(self.g_lin.shape[0])

    @property
    def circumradius_km(self) -> float:
        """Hexagon circumradius for the given half inter-AP spacing"""
        return 2.0 * self.half_spacing_km / np.sqrt(3.0)

    def coop_sizes(self) -> np.ndarray:
        """|U_n| for every user"""
        return self.coop_mask.sum(axis=1)

    def ap_load(self) -> np.ndarray:
        """|N_u| for every AP"""
        return self.coop_mask.sum(axis=0)

    def distances_km(self) -> np.ndarray:
        """User-to-AP distances (N, U) in km"""
        return _pairwise_distances(self.user_positions, self.ap_positions)


def hex_cell_count(tiers: int) -> int:
    """Number of cells in a hexagonal network with the given tier count"""
    return 3 * tiers * (tiers - 1) + 1


def path_loss_db(distance_km):
    """
    Large-scale attenuation in dB.

    Distances below 5 m are clamped to 5 m.

    Args:
        distance_km: Scalar or array of distances in km

    Returns:
        Path loss in dB (same shape as input)
    """
    d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_KM)
    result = PATH_LOSS_INTERCEPT_DB - PATH_LOSS_SLOPE_DB * np.log10(d)
    if np.ndim(result) == 0:
        return float(result)
    return result


def hex_lattice(tiers: int, half_spacing_km: float) -> np.ndarray:
    """
    AP positions of a flat-top hexagonal lattice.

    AP 0 sits at the origin; the remaining APs are ordered ring by ring and
    counter-clockwise within a ring starting from the positive x axis.
    """
    if tiers < 1:
        raise ValueError(f"tiers must be >= 1, got {tiers}")
    radius = 2.0 * half_spacing_km / np.sqrt(3.0)
    points = []
    for q in range(-(tiers - 1), tiers):
        for r in range(-(tiers - 1), tiers):
            if abs(q + r) > tiers - 1:
                continue
            x = 1.5 * radius * q
            y = np.sqrt(3.0) * radius * (r + q / 2.0)
            ring = max(abs(q), abs(r), abs(q + r))
            angle = np.mod(np.arctan2(y, x), 2.0 * np.pi) if ring else 0.0
            points.append((ring, round(angle, 12), x, y))
    points.sort(key=lambda item: (item[0], item[1]))
    return np.array([[x, y] for _, _, x, y in points], dtype=float)


def _inside_flat_top_hexagon(offsets: np.ndarray, radius: float) -> np.ndarray:
    x = np.abs(offsets[:, 0])
    y = np.abs(offsets[:, 1])
    apothem = np.sqrt(3.0) / 2.0 * radius
    return (y <= apothem) & (np.sqrt(3.0) * x + y <= np.sqrt(3.0) * radius)


def _drop_users(center: np.ndarray, count: int, radius: float,
                rng: np.random.Generator) -> np.ndarray:
    """Uniform drop inside one flat-top hexagon by rejection sampling"""
    apothem = np.sqrt(3.0) / 2.0 * radius
    accepted = np.empty((0, 2))
    while accepted.shape[0] < count:
        batch = max(2 * (count - accepted.shape[0]), 16)
        candidates = np.column_stack([
            rng.uniform(-radius, radius, batch),
            rng.uniform(-apothem, apothem, batch),
        ])
        accepted = np.vstack([accepted, candidates[_inside_flat_top_hexagon(candidates, radius)]])
    return center + accepted[:count]


def _pairwise_distances(users: np.ndarray, aps: np.ndarray) -> np.ndarray:
    diff = users[:, None, :] - aps[None, :, :]
    return np.sqrt(np.sum(diff ** 2, axis=-1))


def derive_coop_sets(distances_km: np.ndarray, d_max_km: float
                     ) -> Tuple[np.ndarray, Tuple[Tuple[int, ...], ...], Tuple[Tuple[int, ...], ...]]:
    """
    Derive the user-centric cooperation sets.

    Args:
        distances_km: (N, U) user-to-AP distances
        d_max_km: Maximal detection distance

    Returns:
        (coop_mask, U_n sets, N_u sets); the two set families are transposes
    """
    mask = np.asarray(distances_km) <= d_max_km
    user_to_aps = tuple(tuple(int(u) for u in np.flatnonzero(row)) for row in mask)
    ap_to_users = tuple(tuple(int(n) for n in np.flatnonzero(col)) for col in mask.T)
    return mask, user_to_aps, ap_to_users


def _assemble_layout(ap_positions, user_positions, d_max_km, half_spacing_km) -> NetworkLayout:
    distances = _pairwise_distances(user_positions, ap_positions)
    loss_db = path_loss_db(distances)
    loss_db = np.atleast_2d(loss_db)
    mask, user_to_aps, ap_to_users = derive_coop_sets(distances, d_max_km)
    layout = NetworkLayout(
        ap_positions=ap_positions,
        user_positions=user_positions,
        path_loss_db=loss_db,
        g_lin=10.0 ** (loss_db / 10.0),
        coop_mask=mask,
        coop_user_to_aps=user_to_aps,
        coop_ap_to_users=ap_to_users,
        d_max_km=float(d_max_km),
        half_spacing_km=float(half_spacing_km),
        serving_ap=np.argmin(distances, axis=1),
    )
    empty_users = int(np.sum(~mask.any(axis=1)))
    if empty_users:
        logger.warning(f"{empty_users} users have no AP within d_max={d_max_km:.3f} km")
    return layout


def build_hex_network(tiers: int, users_per_cell: int, half_spacing_km: float,
                      d_max_km: float, seed: int) -> NetworkLayout:
    """
    Build a hexagonal multi-cell network with uniform user drops.

    Args:
        tiers: Number of tiers (1 = single cell, 3 = 19 cells)
        users_per_cell: Users dropped in each cell
        half_spacing_km: Half of the inter-AP distance (r0)
        d_max_km: Maximal detection distance
        seed: RNG seed for user drops

    Returns:
        NetworkLayout with path losses and cooperation sets populated
    """
    if tiers < 1:
        raise ValueError(f"tiers must be >= 1, got {tiers}")
    if users_per_cell < 1:
        raise ValueError(f"users_per_cell must be >= 1, got {users_per_cell}")
    if half_spacing_km <= 0:
        raise ValueError(f"half_spacing_km must be positive, got {half_spacing_km}")
    if d_max_km <= 0:
        raise ValueError(f"d_max_km must be positive, got {d_max_km}")

    rng = np.random.default_rng(seed)
    ap_positions = hex_lattice(tiers, half_spacing_km)
    radius = 2.0 * half_spacing_km / np.sqrt(3.0)
    user_positions = np.vstack([
        _drop_users(center, users_per_cell, radius, rng) for center in ap_positions
    ])

    layout = _assemble_layout(ap_positions, user_positions, d_max_km, half_spacing_km)
    logger.info(f"Built network: U={layout.n_aps}, N={layout.n_users}, "
                f"mean |U_n|={layout.coop_sizes().mean():.2f}")
    return layout


def build_custom_layout(g_lin: np.ndarray, coop_mask: Optional[np.ndarray] = None,
                        d_max_km: float = np.inf,
                        half_spacing_km: float = DEFAULT_HALF_SPACING_KM) -> NetworkLayout:
    """
    Layout from an explicit linear gain matrix (no geometry).

    Positions are placeholders at the origin; every user cooperates with
    every AP unless a mask is given.
    """
    g_lin = np.atleast_2d(np.asarray(g_lin, dtype=float))
    if np.any(g_lin <= 0):
        raise ValueError("all gains must be positive")
    n_users, n_aps = g_lin.shape
    if coop_mask is None:
        coop_mask = np.ones_like(g_lin, dtype=bool)
    coop_mask = np.asarray(coop_mask, dtype=bool)
    if coop_mask.shape != g_lin.shape:
        raise ValueError(f"coop_mask shape {coop_mask.shape} != gain shape {g_lin.shape}")
    user_to_aps = tuple(tuple(int(u) for u in np.flatnonzero(row)) for row in coop_mask)
    ap_to_users = tuple(tuple(int(n) for n in np.flatnonzero(col)) for col in coop_mask.T)
    return NetworkLayout(
        ap_positions=np.zeros((n_aps, 2)),
        user_positions=np.zeros((n_users, 2)),
        path_loss_db=10.0 * np.log10(g_lin),
        g_lin=g_lin,
        coop_mask=coop_mask,
        coop_user_to_aps=user_to_aps,
        coop_ap_to_users=ap_to_users,
        d_max_km=float(d_max_km),
        half_spacing_km=float(half_spacing_km),
        serving_ap=np.argmax(g_lin, axis=1),
    )


def layout_from_arrays(ap_positions: np.ndarray, user_positions: np.ndarray,
                       path_loss: np.ndarray, d_max_km: float,
                       half_spacing_km: float) -> NetworkLayout:
    """Rebuild a layout from stored positions and path losses"""
    ap_positions = np.asarray(ap_positions, dtype=float).reshape(-1, 2)
    user_positions = np.asarray(user_positions, dtype=float).reshape(-1, 2)
    path_loss = np.asarray(path_loss, dtype=float).reshape(user_positions.shape[0], ap_positions.shape[0])
    distances = _pairwise_distances(user_positions, ap_positions)
    mask, user_to_aps, ap_to_users = derive_coop_sets(distances, d_max_km)
    return NetworkLayout(
        ap_positions=ap_positions,
        user_positions=user_positions,
        path_loss_db=path_loss,
        g_lin=10.0 ** (path_loss / 10.0),
        coop_mask=mask,
        coop_user_to_aps=user_to_aps,
        coop_ap_to_users=ap_to_users,
        d_max_km=float(d_max_km),
        half_spacing_km=float(half_spacing_km),
        serving_ap=np.argmin(distances, axis=1),
    )


def restrict_to_ap(layout: NetworkLayout, u: int) -> NetworkLayout:
    """Single-AP view of a layout (column u only)"""
    if not 0 <= u < layout.n_aps:
        raise ValueError(f"AP index {u} out of range [0, {layout.n_aps})")
    mask = layout.coop_mask[:, [u]]
    return replace(
        layout,
        ap_positions=layout.ap_positions[[u]],
        path_loss_db=layout.path_loss_db[:, [u]],
        g_lin=layout.g_lin[:, [u]],
        coop_mask=mask,
        coop_user_to_aps=tuple((0,) if m else () for m in mask[:, 0]),
        coop_ap_to_users=(layout.coop_ap_to_users[u],),
        serving_ap=np.zeros(layout.n_users, dtype=int),
    )


def expected_coop_size(d_max_km: float, half_spacing_km: float) -> float:
    """Area-ratio estimate of the mean |U_n| (ignores network edges)"""
    return np.pi * d_max_km ** 2 / (2.0 * np.sqrt(3.0) * half_spacing_km ** 2)


def expected_ap_load(d_max_km: float, half_spacing_km: float, n_users: int, n_aps: int) -> float:
    """Area-ratio estimate of |N_u|: pi D^2 N / (2 sqrt(3) r0^2 U)"""
    return expected_coop_size(d_max_km, half_spacing_km) * n_users / n_aps


def summarize_layout(layout: NetworkLayout) -> List[str]:
    """Human-readable summary lines"""
    sizes = layout.coop_sizes()
    load = layout.ap_load()
    return [
        f"APs: {layout.n_aps}",
        f"Users: {layout.n_users}",
        f"r0: {layout.half_spacing_km:.4f} km, d_max: {layout.d_max_km:.4f} km",
        f"|U_n|: mean {sizes.mean():.2f}, min {sizes.min()}, max {sizes.max()}",
        f"|N_u|: mean {load.mean():.1f}, min {load.min()}, max {load.max()}",
    ]


__all__ = [
    'NetworkLayout',
    'build_hex_network',
    'build_custom_layout',
    'layout_from_arrays',
    'path_loss_db',
    'derive_coop_sets',
    'hex_lattice',
    'hex_cell_count',
    'restrict_to_ap',
    'expected_coop_size',
    'expected_ap_load',
    'summarize_layout',
]
