"""Convolutional salience architectures over HCQT magnitude and phase inputs.

All variants share the same building block: batch normalization at the layer
input, a zero-padded convolution preserving the frequency and time extents,
and a ReLU, except the final 1x1 projection which ends in a sigmoid so the
output reads as a per-bin probability map.

Architectures
-------------
``early_shallow``
    One 16-filter (5x5) layer per input branch, concatenation, two 32-filter
    (70x3) layers, an 8-filter full-frequency-extent layer, 1x1 output.
``early_deep``
    As above plus two 64-filter (3x3) layers before the full-extent layer.
``late_deep``
    Branches stay separate through their own 32-filter (70x3) layer before
    concatenation; then one more 32-filter (70x3) layer, two 64-filter (3x3)
    layers, the 8-filter full-extent layer and the 1x1 output.
``late_deep_no_phase``
    ``late_deep`` with the phase branch removed; concatenation degenerates
    to identity.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import torch
import torch.nn as nn

from .grid import HcqtParams

ARCHITECTURES = ("early_shallow", "early_deep", "late_deep", "late_deep_no_phase")


class _BNConv(nn.Module):
    """BatchNorm -> zero-padded Conv2d -> activation, extent-preserving."""

    def __init__(self, in_channels, out_channels, kernel, activation="relu"):
        super().__init__()
        kf, kt = kernel
        # asymmetric same-padding for even kernel extents
        pf, pt = kf - 1, kt - 1
        self.pad = nn.ZeroPad2d((pt // 2, pt - pt // 2, pf // 2, pf - pf // 2))
        self.bn = nn.BatchNorm2d(in_channels)
        self.conv = nn.Conv2d(in_channels, out_channels, (kf, kt))
        if activation == "relu":
            self.act = nn.ReLU()
        elif activation == "sigmoid":
            self.act = nn.Sigmoid()
        else:
            raise ValueError("unknown activation %r" % activation)

    def forward(self, x):
        return self.act(self.conv(self.pad(self.bn(x))))

    def describe(self) -> str:
        kf, kt = self.conv.kernel_size
        return "conv%d@%dx%d/%s" % (self.conv.out_channels, kf, kt,
                                    self.act.__class__.__name__.lower())


class SalienceNetwork(nn.Module):
    """One of the salience architectures, built for a specific grid.

    ``forward`` maps magnitude (and, unless the architecture is phase-free,
    phase differential) tensors of shape ``[batch, harmonics, bins, frames]``
    to a salience map ``[batch, bins, frames]`` with values in (0, 1).
    """

    def __init__(self, architecture: str, params: HcqtParams = None):
        super().__init__()
        params = params or HcqtParams()
        if architecture not in ARCHITECTURES:
            raise ValueError(
                "unknown architecture %r; expected one of %s" % (architecture, ARCHITECTURES)
            )
        self.architecture = architecture
        self.uses_phase = architecture != "late_deep_no_phase"
        h, n_bins = params.n_harmonics, params.n_bins

        mag_branch = [_BNConv(h, 16, (5, 5))]
        phase_branch = [_BNConv(h, 16, (5, 5))] if self.uses_phase else []
        if architecture in ("late_deep", "late_deep_no_phase"):
            mag_branch.append(_BNConv(16, 32, (70, 3)))
            if self.uses_phase:
                phase_branch.append(_BNConv(16, 32, (70, 3)))
            merged = 64 if self.uses_phase else 32
            trunk = [_BNConv(merged, 32, (70, 3)),
                     _BNConv(32, 64, (3, 3)),
                     _BNConv(64, 64, (3, 3))]
        else:
            trunk = [_BNConv(32, 32, (70, 3)), _BNConv(32, 32, (70, 3))]
            if architecture == "early_deep":
                trunk += [_BNConv(32, 64, (3, 3)), _BNConv(64, 64, (3, 3))]
        trunk.append(_BNConv(trunk[-1].conv.out_channels, 8, (n_bins, 1)))
        trunk.append(_BNConv(8, 1, (1, 1), activation="sigmoid"))
        # salience targets are sparse; starting the output near zero avoids
        # spending hundreds of optimizer steps drifting the bias down
        nn.init.constant_(trunk[-1].conv.bias, -3.0)

        self.mag_branch = nn.ModuleList(mag_branch)
        self.phase_branch = nn.ModuleList(phase_branch)
        self.trunk = nn.ModuleList(trunk)

    def forward(self, magnitude: torch.Tensor, phase: Optional[torch.Tensor] = None) -> torch.Tensor:
        m = magnitude
        for layer in self.mag_branch:
            m = layer(m)
        if self.uses_phase:
            if phase is None:
                raise ValueError("architecture %r requires a phase input" % self.architecture)
            p = phase
            for layer in self.phase_branch:
                p = layer(p)
            x = torch.cat([m, p], dim=1)
        else:
            x = m
        for layer in self.trunk:
            x = layer(x)
        return x.squeeze(1)

    def layer_summary(self) -> List[Tuple[str, str]]:
        """(branch, layer) descriptions; in-channel counts are omitted so a
        phase-free variant lists exactly the non-phase layers of its parent."""
        out = [("magnitude", l.describe()) for l in self.mag_branch]
        out += [("phase", l.describe()) for l in self.phase_branch]
        out += [("main", l.describe()) for l in self.trunk]
        return out


def build_model(architecture: str, params: HcqtParams = None) -> SalienceNetwork:
    """Instantiate a salience network for the given grid."""
    return SalienceNetwork(architecture, params)
