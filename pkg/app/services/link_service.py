"""
Uplink MU-MIMO link: Type-I codebook, effective channel, MMSE equalization,
post-equalization SINR, achievable rate and codebook search.
"""

import itertools
from collections.abc import Sequence
from typing import Literal

import numpy as np
import structlog

from app.core import metrics
from app.core.exceptions import EmptySelectionError, LinkError, RangeError, ShapeMismatchError
from app.models import (
    ChannelRealization,
    LinkState,
    PrecoderCodebook,
    RateResult,
    SearchResult,
)

logger = structlog.get_logger(__name__)

SearchObjective = Literal["per_uav_rate", "sum_reward"]
SearchMode = Literal["greedy", "joint", "auto"]

# co-phasing factors psi_m = e^{j pi m / 2}
CO_PHASES = np.exp(1j * np.pi * np.arange(4) / 2.0)


def dft_vector(n: int, length: int, oversampling: int) -> np.ndarray:
    """Oversampled DFT beam with unit-modulus entries."""
    return np.exp(2j * np.pi * n * np.arange(length) / (oversampling * length))


def build_codebook(n_x: int, n_y: int, o_x: int, o_y: int) -> PrecoderCodebook:
    """Dual-polarized Type-I single-layer codebook.

    Entry (n_x, n_y, m) is [M; psi_m M] / sqrt(2 N_x N_y) with M the
    Kronecker product of the two oversampled DFT beams.
    """
    if min(n_x, n_y, o_x, o_y) < 1:
        raise RangeError("codebook dimensions and oversampling must be >= 1")
    scale = 1.0 / np.sqrt(2.0 * n_x * n_y)
    entries, labels = [], []
    for beam_x in range(o_x * n_x):
        c_x = dft_vector(beam_x, n_x, o_x)
        for beam_y in range(o_y * n_y):
            beam = np.kron(c_x, dft_vector(beam_y, n_y, o_y))
            for m, psi in enumerate(CO_PHASES):
                entries.append(scale * np.concatenate([beam, psi * beam]))
                labels.append((beam_x, beam_y, m))
    return PrecoderCodebook(np.array(entries), tuple(labels), n_x, n_y, o_x, o_y)


def _check_codebook(tensor: np.ndarray, codebook: PrecoderCodebook) -> None:
    if tensor.shape[-1] != codebook.length:
        raise ShapeMismatchError(
            f"channel has {tensor.shape[-1]} transmit antennas, "
            f"codebook entries have length {codebook.length}"
        )


def effective_channel(
    h: np.ndarray, link: LinkState, codebook: PrecoderCodebook, bs: int = 0
) -> np.ndarray:
    """r_x x U_sel matrix whose column u is H_u W_u sqrt(p_u).

    ``h`` holds one (subcarrier, symbol) slice as U x r_x x t_x, or the full
    grid as U x K x S x r_x x t_x (the result then has leading K x S axes).
    """
    h = np.asarray(h)
    selected = link.selected(bs)
    if selected.size == 0:
        raise EmptySelectionError("no UAV is associated with the base station")
    _check_codebook(h, codebook)
    precoders = codebook.entries[link.precoder_index[selected]]
    gains = np.sqrt(link.power[selected])
    # (U_sel, ..., r_x) columns, moved to the last axis
    columns = np.einsum("u...rt,ut->u...r", h[selected], precoders) * gains.reshape(
        (-1,) + (1,) * (h.ndim - 2)
    )
    return np.moveaxis(columns, 0, -1)


def mmse_equalizer(h_eff: np.ndarray, noise_var: float) -> np.ndarray:
    """G = (H^H H + sigma^2 I)^{-1} H^H, batched over leading axes."""
    if not noise_var > 0:
        raise LinkError("noise variance must be positive")
    h_eff = np.asarray(h_eff)
    if not np.isfinite(h_eff).all():
        raise LinkError("effective channel contains non-finite entries")
    h_herm = np.conj(np.swapaxes(h_eff, -1, -2))
    gram = h_herm @ h_eff + noise_var * np.eye(h_eff.shape[-1])
    return np.linalg.solve(gram, h_herm)


def sinr_per_uav(g: np.ndarray, h_eff: np.ndarray, noise_var: float) -> np.ndarray:
    """Post-equalization SINR of each selected UAV (linear)."""
    mixed = np.abs(g @ h_eff) ** 2
    signal = np.diagonal(mixed, axis1=-2, axis2=-1)
    interference = mixed.sum(axis=-1) - signal
    noise = noise_var * (np.abs(g) ** 2).sum(axis=-1)
    return signal / (interference + noise)


def achievable_rate(sinr: np.ndarray, subcarrier_spacing_hz: float) -> RateResult:
    """Average spectral efficiency over a K x S x U_sel SINR grid and its rate in bit/s."""
    sinr = np.asarray(sinr, dtype=float)
    if (sinr < 0).any():
        raise LinkError("SINR must be non-negative")
    num_subcarriers = sinr.shape[0]
    spectral = np.log2(1.0 + sinr).mean(axis=(0, 1))
    return RateResult(spectral, spectral * num_subcarriers * subcarrier_spacing_hz)


def grid_sinr(h_eff: np.ndarray, noise_var: float) -> np.ndarray:
    """SINR for every (subcarrier, symbol) of a K x S x r_x x U_sel effective channel."""
    return sinr_per_uav(mmse_equalizer(h_eff, noise_var), h_eff, noise_var)


def link_rates(
    realization: ChannelRealization, link: LinkState, codebook: PrecoderCodebook
) -> tuple[RateResult, np.ndarray]:
    """Rates of the selected UAVs and their mean SINR in dB."""
    h_eff = effective_channel(realization.tensor, link, codebook)
    sinr = grid_sinr(h_eff, link.noise_var)
    rates = achievable_rate(sinr, realization.subcarrier_spacing_hz)
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(sinr.mean(axis=(0, 1)))
    return rates, sinr_db


def search_objective(rates: np.ndarray, payload_bits: np.ndarray | None) -> float:
    """Scalar a search maximizes: sum rate, or minus the worst latency given payloads."""
    if payload_bits is None:
        return float(np.sum(rates))
    with np.errstate(divide="ignore"):
        latencies = np.where(rates > 0, payload_bits / np.maximum(rates, 1e-300), np.inf)
    return -float(np.max(latencies))


class PrecoderSearch:
    """Codebook search over the precoders of the selected UAVs.

    Channel-times-precoder products are computed once per search, so each
    candidate only costs the MMSE solve.
    """

    def __init__(
        self,
        realization: ChannelRealization,
        link: LinkState,
        codebook: PrecoderCodebook,
        objective: SearchObjective = "per_uav_rate",
        payload_bits: np.ndarray | None = None,
        bs: int = 0,
    ):
        self.selected = link.selected(bs)
        if self.selected.size == 0:
            raise EmptySelectionError("no UAV is associated with the base station")
        if len(codebook) == 0:
            raise LinkError("codebook is empty")
        _check_codebook(realization.tensor, codebook)
        self.link = link
        self.codebook = codebook
        self.objective = objective
        self.spacing = realization.subcarrier_spacing_hz
        self.payload_bits = (
            None
            if objective == "per_uav_rate" or payload_bits is None
            else np.asarray(payload_bits, dtype=float)
        )
        gains = np.sqrt(link.power[self.selected])
        # (U_sel, C, K, S, r_x)
        self.products = np.einsum(
            "uksrt,ct->ucksr", realization.tensor[self.selected], codebook.entries
        ) * gains[:, None, None, None, None]

    def rates(self, choice: Sequence[int]) -> np.ndarray:
        h_eff = np.stack(
            [self.products[n, c] for n, c in enumerate(choice)], axis=-1
        )
        metrics.PRECODER_CANDIDATES.inc()
        return achievable_rate(grid_sinr(h_eff, self.link.noise_var), self.spacing).rate_bps

    def score(self, rates: np.ndarray) -> float:
        return search_objective(rates, self.payload_bits)

    def initial_choice(self) -> list[int]:
        current = self.link.precoder_index[self.selected]
        return [int(c) if 0 <= c < len(self.codebook) else 0 for c in current]

    def greedy(self, max_sweeps: int) -> SearchResult:
        """Round-robin coordinate ascent to a fixed point or ``max_sweeps``.

        Per-UAV mode picks the precoder maximizing that UAV's own rate among
        candidates that keep the overall objective from dropping.
        """
        choice = self.initial_choice()
        best = self.score(self.rates(choice))
        history = [best]
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            changed = False
            for n in range(len(choice)):
                pick, pick_key = choice[n], None
                for candidate in range(len(self.codebook)):
                    trial = [*choice[:n], candidate, *choice[n + 1 :]]
                    rates = self.rates(trial)
                    value = self.score(rates)
                    if value < best:
                        continue
                    key = (rates[n], value) if self.objective == "per_uav_rate" else (value,)
                    if pick_key is None or key > pick_key:
                        pick, pick_key, pick_value = candidate, key, value
                if pick != choice[n]:
                    choice[n] = pick
                    best = pick_value
                    changed = True
            history.append(best)
            if not changed:
                break
        return SearchResult(np.array(choice), best, "greedy", sweeps, tuple(history))

    def joint(self) -> SearchResult:
        """Enumerate every precoder combination; first maximum wins."""
        best_choice, best = None, -np.inf
        for choice in itertools.product(range(len(self.codebook)), repeat=len(self.selected)):
            value = self.score(self.rates(choice))
            if best_choice is None or value > best:
                best_choice, best = choice, value
        return SearchResult(np.array(best_choice), best, "joint", 1, (best,))

    def joint_size(self) -> int:
        return len(self.codebook) ** len(self.selected)


def exhaustive_precoder_search(
    realization: ChannelRealization,
    link: LinkState,
    codebook: PrecoderCodebook,
    objective: SearchObjective = "per_uav_rate",
    mode: SearchMode = "auto",
    max_sweeps: int = 5,
    joint_limit: int = 4096,
    payload_bits: np.ndarray | None = None,
) -> SearchResult:
    """Codebook indices for the selected UAVs (ascending UAV order)."""
    search = PrecoderSearch(realization, link, codebook, objective, payload_bits)
    run_joint = mode == "joint" or (mode == "auto" and search.joint_size() <= joint_limit)
    if mode == "joint":
        return search.joint()

    greedy = search.greedy(max_sweeps)
    if not run_joint:
        return greedy
    joint = search.joint()
    logger.debug(
        "Precoder search gap",
        joint=joint.objective,
        greedy=greedy.objective,
        gap=joint.objective - greedy.objective,
    )
    return joint
