import numpy as np
import pytest

from bibc.rng import substream
from bibc.scene import ApSpec, ChannelSet, Partition, RoomGeometry, Scene


def small_scene(ref_rows=2, ref_cols=2, n_bdes=1):
    """Four 2x2 APs plus a reference AP: fast stand-in for the full layout."""
    aps = [
        ApSpec(id=1, center=(3, 1, 2), rows=2, cols=2),
        ApSpec(id=2, center=(8, 1, 2), rows=2, cols=2),
        ApSpec(id=3, center=(13, 9, 2), rows=2, cols=2),
        ApSpec(id=4, center=(17, 9, 2), rows=2, cols=2),
        ApSpec(id=5, center=(10, 5, 2), rows=ref_rows, cols=ref_cols, adc_bits=16, is_ref=True),
    ]
    bdes = [(4.0, 4.0, 1.5), (6.5, 6.5, 2.0), (15.0, 5.0, 2.0)][:n_bdes]
    return Scene(room=RoomGeometry(), wavelength=0.1, aps=aps, bdes=bdes)


def reduced_default_scene(n_bdes=1):
    """The reference layout with 2x2 arrays instead of 4x4 (same positions)."""
    aps = []
    for i, x in enumerate((2.0, 5.0, 8.0, 11.0, 14.0)):
        aps.append(ApSpec(id=i + 1, center=(x, 1.0, 2.0), rows=2, cols=2))
    for i, x in enumerate((5.0, 8.0, 11.0, 14.0, 17.0)):
        aps.append(ApSpec(id=i + 6, center=(x, 9.0, 2.0), rows=2, cols=2))
    aps.append(ApSpec(id=11, center=(10.0, 5.0, 2.0), rows=1, cols=1, adc_bits=16, is_ref=True))
    bdes = [(4.0, 4.0, 2.0), (6.5, 6.5, 2.0), (15.0, 5.0, 2.0)][:n_bdes]
    return Scene(room=RoomGeometry(), wavelength=0.1, aps=aps, bdes=bdes)


class RandomWorkspace:
    """Synthetic channel workspace with i.i.d. complex Gaussian blocks; the
    same duck type as scene.SceneChannels, for partition/beamforming tests
    that do not need physical geometry."""

    def __init__(self, seed, n_aps=6, ants=2, ref_ants=1, scale=0.05, dl_scale=0.2, n_bdes=1):
        r = substream(seed, 0xC0FFEE)
        self.ap_ids = tuple(range(1, n_aps + 1))
        self.ref_id = 1
        self.m = {i: (ref_ants if i == self.ref_id else ants) for i in self.ap_ids}
        self.h_ap = {
            i: scale * (r.standard_normal((n_bdes, self.m[i])) + 1j * r.standard_normal((n_bdes, self.m[i])))
            for i in self.ap_ids
        }
        self.blocks = {}
        for a in self.ap_ids:
            for b in self.ap_ids:
                if a == b:
                    continue
                self.blocks[(a, b)] = dl_scale * (
                    r.standard_normal((self.m[a], self.m[b]))
                    + 1j * r.standard_normal((self.m[a], self.m[b]))
                )

    def ap_gains(self):
        return {i: float(np.vdot(h[0], h[0]).real) for i, h in self.h_ap.items()}

    def assemble(self, partition: Partition, allow_partial: bool = False) -> ChannelSet:
        ce, rd = partition.ce_ids, partition.reader_ids
        h_c = np.concatenate([self.h_ap[i] for i in ce], axis=1)
        h_r = np.concatenate([self.h_ap[i] for i in rd], axis=1)
        H_DL = np.concatenate(
            [np.concatenate([self.blocks[(r_, c)] for c in ce], axis=1) for r_ in rd], axis=0
        )
        reader_ant = np.concatenate([np.full(self.m[i], i) for i in rd])
        return ChannelSet(
            partition=partition,
            h_ap=self.h_ap,
            H_DL=H_DL,
            h_c_all=h_c,
            h_r_all=h_r,
            ref_rows=np.flatnonzero(reader_ant == self.ref_id),
            ce_ant_ap=np.concatenate([np.full(self.m[i], i) for i in ce]),
            reader_ant_ap=reader_ant,
        )


@pytest.fixture
def random_workspace():
    return RandomWorkspace


def random_instance(seed, n_c=8, n_r=6, n_ref=1, scale=1.0):
    """One random (h_c, h_r, H_DL, ref_rows) instance."""
    r = substream(seed, 0xBEEF)
    h_c = scale * (r.standard_normal(n_c) + 1j * r.standard_normal(n_c))
    h_r = scale * (r.standard_normal(n_r) + 1j * r.standard_normal(n_r))
    H_DL = scale * (r.standard_normal((n_r, n_c)) + 1j * r.standard_normal((n_r, n_c)))
    return h_c, h_r, H_DL, np.arange(n_ref)
