"""Replay of the hand-worked 1-5-1 example against its printed matrices.

The fixture CSVs in ``enn/fixtures`` hold the printed matrices, rounded to
three decimals as published. ``MANIFEST.sha256`` pins their contents.
:func:`replay` starts from the printed initial ensemble and the printed
perturbed observations and recomputes everything else.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .enrml import Decision, LambdaController, NoiseModel, PriorModel, enrml_step, lambda_init, lambda_update, mismatch_stats
from .ensemble import WeightEnsemble, covariances, ensemble_mean
from .network import NetworkArchitecture, forward_ensemble

__all__ = [
    "FixtureMissing",
    "LayoutUnresolved",
    "ARCH",
    "X_TRAIN",
    "T_TRAIN",
    "X_TEST",
    "T_TEST",
    "OBS_STD",
    "LAMBDA_1",
    "PRINTED",
    "fixture_dir",
    "load_fixture",
    "candidate_layouts",
    "resolve_layout",
    "Check",
    "ReplayReport",
    "replay",
]

Array = npt.NDArray[np.float64]

ARCH = NetworkArchitecture(1, (5, 1), "tanh")
X_TRAIN = np.array([1.0, 2.0, 4.0, 6.0, 8.0, 9.0])
T_TRAIN = np.array([3.0, 5.0, 9.0, 13.0, 17.0, 19.0])
X_TEST = np.array([3.0, 5.0, 7.0])
T_TEST = np.array([7.0, 11.0, 15.0])
OBS_STD = 0.002
LAMBDA_1 = 17717629.0

# Scalars printed alongside the matrices.
PRINTED = {
    "y_train_1": np.array([0.551, 0.997, 0.995, 0.860, 0.804, 0.794]),
    "y_test_1": np.array([1.050, 0.919, 0.824]),
    "y_train_2": np.array([1.631, 1.944, 1.687, 1.496, 1.406, 1.382]),
    "y_train_3": np.array([2.897, 3.352, 3.484, 3.513, 3.540, 3.548]),
    "loss_train_1": 10.167,
    "loss_test_1": 10.069,
    "loss_train_2": 9.409,
    "loss_test_2": 9.382,
    "loss_train_3": 7.611,
    "loss_test_3": 7.503,
    "sd_mean_1": 212611550.0,
    "sd_std_1": 61806331.0,
    "sd_mean_2": 194859641.0,
    "sd_std_2": 70358432.0,
    "sd_mean_3": 139406121.0,
    "sd_std_3": 35855126.0,
}

MATRIX_TOL = 5e-3
LOSS_TOL = 1e-3
SCALAR_RTOL = 5e-3


class FixtureMissing(FileNotFoundError):
    pass


class LayoutUnresolved(RuntimeError):
    pass


def fixture_dir() -> Path:
    return Path(str(resources.files("enn") / "fixtures"))


def _manifest(directory: Path) -> dict[str, str]:
    path = directory / "MANIFEST.sha256"
    if not path.is_file():
        raise FixtureMissing(f"missing {path}")
    out = {}
    for line in path.read_text().splitlines():
        digest, name = line.split()
        out[name] = digest
    return out


def load_fixture(name: str, directory: Path | None = None) -> Array:
    """Load ``<name>.csv`` after verifying its checksum."""
    directory = Path(directory) if directory is not None else fixture_dir()
    path = directory / f"{name}.csv"
    if not path.is_file():
        raise FixtureMissing(f"missing fixture {path}")
    raw = path.read_bytes()
    expected = _manifest(directory).get(path.name)
    if expected is None or hashlib.sha256(raw).hexdigest() != expected:
        raise ValueError(f"checksum mismatch for {path}")
    return np.loadtxt(path, delimiter=",", ndmin=2)


# -- layout resolution -------------------------------------------------------

def _canonical_labels(arch: NetworkArchitecture) -> list[tuple]:
    labels = []
    for layer, (fan_in, fan_out) in enumerate(arch.layer_shapes):
        for o in range(fan_out):
            labels += [("W", layer, o, i) for i in range(fan_in)] + [("b", layer, o)]
    return labels


def _layer_labels(layer: int, fan_in: int, fan_out: int, style: str) -> list[tuple]:
    W_dest = [("W", layer, o, i) for o in range(fan_out) for i in range(fan_in)]
    W_src = [("W", layer, o, i) for i in range(fan_in) for o in range(fan_out)]
    b = [("b", layer, o) for o in range(fan_out)]
    if style == "neuron_weights_bias":
        return [lab for o in range(fan_out) for lab in [("W", layer, o, i) for i in range(fan_in)] + [("b", layer, o)]]
    if style == "neuron_bias_weights":
        return [lab for o in range(fan_out) for lab in [("b", layer, o)] + [("W", layer, o, i) for i in range(fan_in)]]
    if style == "dest_weights_then_biases":
        return W_dest + b
    if style == "src_weights_then_biases":
        return W_src + b
    if style == "biases_then_dest_weights":
        return b + W_dest
    if style == "biases_then_src_weights":
        return b + W_src
    raise ValueError(style)


LAYER_STYLES = (
    "neuron_weights_bias",
    "neuron_bias_weights",
    "dest_weights_then_biases",
    "src_weights_then_biases",
    "biases_then_dest_weights",
    "biases_then_src_weights",
)


def candidate_layouts(arch: NetworkArchitecture) -> dict[tuple[str, str], npt.NDArray[np.intp]]:
    """Index maps from candidate flat layouts into the canonical one.

    Keys are ``(layer_order, layer_style)``; for a candidate vector ``w``,
    ``w[perm]`` is the same network in the canonical layout.
    """
    canonical = _canonical_labels(arch)
    out = {}
    for order, style in itertools.product(("input_first", "output_first"), LAYER_STYLES):
        layers = list(enumerate(arch.layer_shapes))
        if order == "output_first":
            layers = layers[::-1]
        labels = [lab for k, (fi, fo) in layers for lab in _layer_labels(k, fi, fo, style)]
        pos = {lab: n for n, lab in enumerate(labels)}
        out[(order, style)] = np.array([pos[lab] for lab in canonical])
    return out


def resolve_layout(
    m1: Array,
    g1_train: Array,
    inputs: Array = X_TRAIN,
    widths: tuple[int, ...] = (5, 1),
    activations=("tanh", "sigmoid", "relu"),
    tol: float = MATRIX_TOL,
) -> list[tuple[str, tuple[str, str], float]]:
    """Search activation x flat layout for those reproducing ``g1_train``.

    Returns ``(activation, layout, max_abs_error)`` for every distinct
    match (layouts that induce the same index map are merged).
    """
    matches = []
    for act in activations:
        arch = NetworkArchitecture(1, widths, act)
        seen: set[bytes] = set()
        for key, perm in candidate_layouts(arch).items():
            if perm.tobytes() in seen:
                continue
            seen.add(perm.tobytes())
            err = float(np.abs(forward_ensemble(arch, m1[perm], inputs) - g1_train).max())
            if err <= tol:
                matches.append((act, key, err))
    return matches


# -- replay ------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    deviation: float
    tolerance: float
    relative: bool = False

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tolerance)

    def line(self) -> str:
        kind = "rel" if self.relative else "abs"
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<24s} {kind} dev {self.deviation:.3e} (tol {self.tolerance:.0e})"


@dataclass
class ReplayReport:
    layout: list
    checks: list[Check] = field(default_factory=list)
    decisions: dict[str, str] = field(default_factory=dict)
    ensembles: dict[str, Array] = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def _abs(name: str, got, want, tol: float = MATRIX_TOL) -> Check:
    return Check(name, float(np.max(np.abs(np.asarray(got) - np.asarray(want)))), tol)


def _rel(name: str, got: float, want: float, tol: float = SCALAR_RTOL) -> Check:
    return Check(name, abs(got - want) / abs(want), tol, relative=True)


def replay(directory: Path | None = None) -> ReplayReport:
    """Recompute steps 1-3 from the printed m1, D1_obs and D2_obs.

    Raises :class:`LayoutUnresolved` if no activation/layout reproduces the
    printed initial predictions.
    """
    fx = lambda name: load_fixture(name, directory)  # noqa: E731
    m1 = fx("m1")
    g1_printed = fx("g1_train")
    layout = resolve_layout(m1, g1_printed)
    if len(layout) != 1:
        raise LayoutUnresolved(f"expected exactly one matching layout, found {layout}")
    act, key, _ = layout[0]
    if act != ARCH.hidden_activation or key != ("input_first", "neuron_weights_bias"):
        raise LayoutUnresolved(f"fixture matches {act}/{key}, not the canonical layout")

    noise = NoiseModel.uniform(OBS_STD, T_TRAIN.size)
    prior = PriorModel.standard(ARCH.n_weights)
    report = ReplayReport(layout=layout)
    add = report.checks.append
    ens = WeightEnsemble(current=m1, prior=m1)
    ctrl = LambdaController(LAMBDA_1)
    prev_stats = None

    for step in (1, 2, 3):
        g_train = forward_ensemble(ARCH, ens.current, X_TRAIN)
        g_test = forward_ensemble(ARCH, ens.current, X_TEST)
        add(_abs(f"g{step}_train", g_train, fx(f"g{step}_train")))
        add(_abs(f"g{step}_test", g_test, fx(f"g{step}_test")))
        y_train = ensemble_mean(g_train)
        if f"y_train_{step}" in PRINTED:
            add(_abs(f"y_train_{step}", y_train, PRINTED[f"y_train_{step}"]))
        if step == 1:
            add(_abs("y_test_1", ensemble_mean(g_test), PRINTED["y_test_1"]))
        add(_abs(f"loss_train_{step}", np.mean(np.abs(y_train - T_TRAIN)), PRINTED[f"loss_train_{step}"], LOSS_TOL))
        add(_abs(f"loss_test_{step}", np.mean(np.abs(ensemble_mean(g_test) - T_TEST)), PRINTED[f"loss_test_{step}"], LOSS_TOL))
        sd_mean, sd_std = mismatch_stats(g_train, T_TRAIN, noise)
        add(_rel(f"sd_mean_{step}", sd_mean, PRINTED[f"sd_mean_{step}"]))
        add(_rel(f"sd_std_{step}", sd_std, PRINTED[f"sd_std_{step}"]))
        if step == 1:
            add(_rel("lambda_1", lambda_init(sd_mean, T_TRAIN.size), LAMBDA_1))
        else:
            decision, new_lam = lambda_update(ctrl, *prev_stats, sd_mean, sd_std)
            report.decisions[f"step_{step}"] = decision.value
            ctrl = LambdaController(new_lam, ctrl.gamma, ctrl.lambda_floor)
        prev_stats = (sd_mean, sd_std)
        report.ensembles[f"m{step}"] = ens.current
        if step == 3:
            break
        cov = covariances(ens.current, g_train)
        add(_abs(f"c_md{step}", cov.c_md, fx(f"c_md{step}")))
        add(_abs(f"c_d{step}", cov.c_d_pred, fx(f"c_d{step}")))
        add(_abs(f"c_m{step}", cov.c_m, fx(f"c_m{step}")))
        # lambda_2 = lambda_1 in the worked example (accept_hold after step 2)
        new = enrml_step(ens, g_train, fx(f"d{step}_obs"), cov, prior, noise, ctrl.lam)
        add(_abs(f"m{step + 1}", new, fx(f"m{step + 1}")))
        ens = ens.with_current(new)

    report.checks.append(
        Check("decision_step_2", float(report.decisions["step_2"] != Decision.ACCEPT_HOLD.value), 0.0)
    )
    report.checks.append(
        Check("decision_step_3", float(report.decisions["step_3"] != Decision.ACCEPT_SHRINK.value), 0.0)
    )
    return report
