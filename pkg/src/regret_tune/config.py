"""Experiment configuration: one JSON document drives data generation,
identification, scenario sampling, synthesis and the Monte-Carlo study."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lti import TransferFunction, closed_loop, tf_from_dict, tf_to_dict
from .scenario import required_scenarios
from .synthesis import DEFAULT_BOX, DEFAULT_TOL, FEASIBILITY_TOL, ControllerBasis

__all__ = ["ExperimentConfig", "load_config", "make_basis"]


def make_basis(spec: dict) -> ControllerBasis:
    """Build the controller basis from its config description.

    kinds: "gain" (a single static gain), "fir_integrator" (taps delayed
    FIR numerators over a discrete integrator), "custom" (explicit
    transfer functions).
    """
    kind = spec.get("kind")
    if kind == "gain":
        return ControllerBasis(elements=(TransferFunction([1.0]),))
    if kind == "fir_integrator":
        taps = int(spec["taps"])
        if taps < 1:
            raise ValueError("fir_integrator basis needs at least one tap")
        els = tuple(
            TransferFunction(np.r_[np.zeros(k), 1.0], [1.0, -1.0])
            for k in range(taps)
        )
        return ControllerBasis(elements=els)
    if kind == "custom":
        return ControllerBasis(
            elements=tuple(tf_from_dict(e) for e in spec["elements"])
        )
    raise ValueError(f"unknown basis kind {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of an experiment JSON document.

    ``reference_model`` is either an explicit transfer function or a
    controller to close the loop with over the true system; ``noise``
    carries exactly one of variance / snr_linear / snr_db.
    """

    true_system: TransferFunction
    reference_kind: str
    reference_tf: TransferFunction | None
    reference_controller: TransferFunction | None
    basis_spec: dict
    rho_b: np.ndarray
    n: int
    N: int
    noise: dict
    alpha: float
    scale_by_n: bool
    epsilon: float
    eta: float
    m_override: int | None
    tol: float
    feasibility_tol: float
    box: list
    runs: int
    master_seed: int
    metrics: tuple[str, ...]
    n_values: tuple[int, ...]
    baseline_gains: tuple[float, ...]
    truncation: int

    def __post_init__(self):
        keys = [k for k in ("variance", "snr_linear", "snr_db") if k in self.noise]
        if len(keys) != 1:
            raise ValueError(
                "noise spec must contain exactly one of variance/snr_linear/snr_db"
            )
        if self.noise[keys[0]] is None or self.noise[keys[0]] < 0:
            raise ValueError("noise level must be nonnegative")
        for name in ("n", "N", "runs", "truncation"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.m_override is not None and self.m_override < 1:
            raise ValueError("m_override must be positive")

    # -- derived objects ------------------------------------------------

    def reference_model(self) -> TransferFunction:
        if self.reference_kind == "tf":
            return self.reference_tf
        return closed_loop(self.true_system, self.reference_controller)

    def controller_basis(self) -> ControllerBasis:
        return make_basis(self.basis_spec)

    def scenario_count(self) -> int:
        if self.m_override is not None:
            return self.m_override
        return required_scenarios(self.epsilon, self.eta, self.controller_basis().p)

    def scenario_bound(self) -> int:
        return required_scenarios(self.epsilon, self.eta, self.controller_basis().p)

    def noise_std(self, clean_output: np.ndarray | None = None) -> float:
        """Output-noise standard deviation; SNR specs need the noise-free
        output to measure its power."""
        if "variance" in self.noise:
            return float(np.sqrt(self.noise["variance"]))
        snr = (
            float(self.noise["snr_linear"])
            if "snr_linear" in self.noise
            else 10.0 ** (float(self.noise["snr_db"]) / 10.0)
        )
        if snr <= 0:
            raise ValueError("SNR must be positive")
        if clean_output is None:
            raise ValueError("SNR-based noise needs the noise-free output")
        power = float(np.mean(np.square(clean_output)))
        return float(np.sqrt(power / snr))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        ref: dict = {"kind": self.reference_kind}
        if self.reference_kind == "tf":
            ref["tf"] = tf_to_dict(self.reference_tf)
        else:
            ref["controller"] = tf_to_dict(self.reference_controller)
        return {
            "true_system": tf_to_dict(self.true_system),
            "reference_model": ref,
            "basis": self.basis_spec,
            "rho_b": [float(x) for x in self.rho_b],
            "identification": {"n": self.n, "N": self.N, "noise": dict(self.noise)},
            "set": {"alpha": self.alpha, "scale_by_n": self.scale_by_n},
            "scenario": {
                "epsilon": self.epsilon,
                "eta": self.eta,
                "m_override": self.m_override,
            },
            "solver": {
                "tol": self.tol,
                "feasibility_tol": self.feasibility_tol,
                "box": self.box,
            },
            "study": {
                "runs": self.runs,
                "master_seed": self.master_seed,
                "metrics": list(self.metrics),
                "n_values": list(self.n_values),
                "baseline_gains": list(self.baseline_gains),
            },
            "truncation": self.truncation,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        ref = obj["reference_model"]
        kind = ref["kind"]
        if kind not in ("tf", "closed_loop"):
            raise ValueError(f"unknown reference model kind {kind!r}")
        ident = obj["identification"]
        uset = obj.get("set", {})
        scen = obj.get("scenario", {})
        solver = obj.get("solver", {})
        study = obj.get("study", {})
        return cls(
            true_system=tf_from_dict(obj["true_system"]),
            reference_kind=kind,
            reference_tf=tf_from_dict(ref["tf"]) if kind == "tf" else None,
            reference_controller=(
                tf_from_dict(ref["controller"]) if kind == "closed_loop" else None
            ),
            basis_spec=obj["basis"],
            rho_b=np.asarray(obj["rho_b"], dtype=float),
            n=int(ident["n"]),
            N=int(ident["N"]),
            noise=dict(ident["noise"]),
            alpha=float(uset.get("alpha", 0.01)),
            scale_by_n=bool(uset.get("scale_by_n", False)),
            epsilon=float(scen.get("epsilon", 0.01)),
            eta=float(scen.get("eta", 0.05)),
            m_override=(
                None if scen.get("m_override") is None else int(scen["m_override"])
            ),
            tol=float(solver.get("tol", DEFAULT_TOL)),
            feasibility_tol=float(solver.get("feasibility_tol", FEASIBILITY_TOL)),
            box=solver.get("box", list(DEFAULT_BOX)),
            runs=int(study.get("runs", 20)),
            master_seed=int(study.get("master_seed", 0)),
            metrics=tuple(study.get("metrics", ["f_w", "f_c"])),
            n_values=tuple(int(x) for x in study.get("n_values", [ident["N"]])),
            baseline_gains=tuple(float(x) for x in study.get("baseline_gains", [])),
            truncation=int(obj.get("truncation", 2000)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))
