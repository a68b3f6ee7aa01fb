"""Controlled direct effect with and without effect moderation."""

from __future__ import annotations

from rwr import RngStream
from rwr.estimators import MED_METHODS
from rwr.montecarlo import MediationParams, mediation_spec, simulate_mediation_dataset


def main() -> None:
    spec = mediation_spec(0.5)
    for moderated in (False, True):
        params = MediationParams(moderated=moderated)
        data = simulate_mediation_dataset(params, 200_000, RngStream(11))
        print(f"moderated={moderated}  true CDE(1,0.5) = {params.cde(1, 0.5):.3f}")
        for name, est in MED_METHODS.items():
            print(f"  {name:<14}{est(data, spec).cde:8.3f}")


if __name__ == "__main__":
    main()
