"""Registry wiring detector names to their models and parameters.

A DetectorBank holds whatever trained models and rule parameters a run
has loaded and turns (method name, image, tau) into a probability map
or a label mask. The CLI and the ensemble runner both dispatch through
it so a method behaves identically everywhere.
"""

import numpy as np

from . import models, rules, spatial
from .imageio import NONSKIN, SKIN, threshold_map

BUILTIN_METHODS = ("gmm", "bayes", "spl", "cheddad", "chen", "sa1", "sa2", "sa3", "dyc")

# Methods that natively emit a probability map (usable as a spatial base).
PROBABILITY_METHODS = ("bayes", "gmm", "cheddad")

# Shipped operating points: the thresholds the vote presets expect.
DEFAULT_TAUS = {
    "bayes": 110,
    "gmm": 128,
    "spl": -2.0,
    "cheddad": 125,
    "sa1": 175,
    "sa2": 50,
    "sa3": 50,
}


class DetectorBank:
    """Loaded models plus rule parameters, exposed as detector calls."""

    def __init__(
        self,
        histogram=None,
        gmm=None,
        cheddad=None,
        lda=None,
        base_method="bayes",
        chen_bounds=None,
        dyc_params=None,
        seed_q=230,
    ):
        if base_method not in PROBABILITY_METHODS:
            raise ValueError(
                f"base method must be one of {PROBABILITY_METHODS}, got {base_method!r}"
            )
        self.histogram = histogram
        self.gmm = gmm
        self.cheddad = cheddad
        self.lda = lda
        self.base_method = base_method
        self.chen_bounds = chen_bounds or rules.ChenBounds()
        self.dyc_params = dyc_params or rules.DycParams()
        self.seed_q = seed_q

    def missing(self, method):
        """Model slots `method` needs but the bank does not hold."""
        if method not in BUILTIN_METHODS:
            raise ValueError(f"unknown method {method!r}")
        needed = []
        if method in ("bayes", "spl"):
            needed.append("histogram")
        elif method == "gmm":
            needed.append("gmm")
        elif method == "cheddad":
            needed.append("cheddad")
        elif method in ("sa1", "sa3"):
            needed.append(_BASE_SLOT[self.base_method])
        elif method == "sa2":
            needed.extend(["lda", _BASE_SLOT[self.base_method]])
        return [slot for slot in needed if getattr(self, slot) is None]

    def _require(self, method):
        missing = self.missing(method)
        if missing:
            raise ValueError(f"method {method!r} needs missing model(s): {missing}")

    def probability_map(self, method, img):
        """Per-pixel skin probabilities for a probability-native method."""
        self._require(method)
        if method == "bayes":
            return models.bayes_posterior(self.histogram, img)
        if method == "gmm":
            return models.gmm_posterior(self.gmm, img)
        if method == "cheddad":
            return rules.cheddad_detect(img, self.cheddad)
        raise ValueError(f"{method!r} does not produce a probability map")

    def base_map(self, img):
        """The spatial detectors' input map, from the configured base method."""
        return self.probability_map(self.base_method, img)

    def mask(self, method, img, tau=None):
        """Run any built-in detector to a binary label mask."""
        self._require(method)
        if tau is None:
            tau = DEFAULT_TAUS.get(method)
        if method == "chen":
            return rules.chen_detect(img, self.chen_bounds)
        if method == "dyc":
            return rules.dyc_detect(img, self.dyc_params)
        if method == "spl":
            ratio = models.spl_logratio(self.histogram, img)
            return np.where(ratio > float(tau), SKIN, NONSKIN).astype(np.uint8)
        if method in PROBABILITY_METHODS:
            return threshold_map(self.probability_map(method, img), int(tau))
        if method == "sa1":
            return spatial.sa1_detect(img, self.base_map, int(tau), seed_q=self.seed_q)
        if method == "sa2":
            return spatial.sa2_detect(
                img, self.base_map, self.lda, int(tau), seed_q=self.seed_q
            )
        if method == "sa3":
            return spatial.sa3_detect(img, self.base_map, int(tau))
        raise ValueError(f"unknown method {method!r}")


_BASE_SLOT = {"bayes": "histogram", "gmm": "gmm", "cheddad": "cheddad"}
