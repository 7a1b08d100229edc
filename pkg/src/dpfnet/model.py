"""The full dual-branch network and its ablation variants.

``full``       PFM and MDCM fused by the gated AFM, then refined.
``mdcm_pfm``   both branches, plain average instead of the gate.
``mdcm_only``  spatial branch output goes straight to the refiner.
"""

from __future__ import annotations

import numpy as np

from .afm import AFM
from .config import Config
from .mdcm import MDCM
from .nn import Module
from .pfm import PFM
from .tensor import Tensor


class DPFNet(Module):
    def __init__(self, cfg: Config | None = None):
        cfg = cfg if cfg is not None else Config()
        self.ablation = cfg.ablation
        rng = np.random.default_rng(cfg.seed)
        # fixed construction order keeps parameter draws stable across ablations
        self.mdcm = MDCM(cfg.mdcm_width, (cfg.dilation_a, cfg.dilation_b), rng, cfg.leaky_slope)
        pfm_rng = np.random.default_rng([cfg.seed, 1])
        afm_rng = np.random.default_rng([cfg.seed, 2])
        self.pfm = PFM(cfg.pfm_width, pfm_rng, slope=cfg.leaky_slope) if cfg.ablation != "mdcm_only" else None
        self.afm = AFM(cfg.afm_width, afm_rng, cfg.rb_activation, gated=cfg.ablation == "full")
        if cfg.init == "identity":
            self.identity_init_()

    def identity_init_(self) -> None:
        """Bias the untrained net towards passing the input through.

        The MDCM fuse conv is zeroed so F_s = I_low, the gate starts at an
        even split, and the refiner starts as an exact identity.  Hidden
        layers keep their random draws.
        """
        self.mdcm.fuse.zero_()
        if self.afm.weight_conv is not None:
            self.afm.weight_conv.zero_()
        self.afm.refine.identity_()

    def branches(self, x: Tensor) -> tuple[Tensor | None, Tensor]:
        f_s = self.mdcm(x)
        f_f = self.pfm(x) if self.pfm is not None else None
        return f_f, f_s

    def __call__(self, x: Tensor) -> Tensor:
        f_f, f_s = self.branches(x)
        if self.ablation == "full":
            return self.afm(f_f, f_s)
        if self.ablation == "mdcm_pfm":
            return self.afm.refine((f_f + f_s) * 0.5)
        return self.afm.refine(f_s)


def build_model(cfg: Config) -> DPFNet:
    return DPFNet(cfg)
