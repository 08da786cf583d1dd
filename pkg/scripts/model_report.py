"""Parameter counts for the default model, the DCCRN baseline and the ablation variants.

    python3 scripts/model_report.py [--breakdown]
"""

from __future__ import annotations

import argparse

from sdccrn.model import ModelSpec, build_model, parameter_breakdown, parameter_count

VARIANTS = {
    "sdccrn": ModelSpec(),
    "sdccrn-no-codec": ModelSpec(codec=False),
    "sdccrn-fixed-compression": ModelSpec(compression="fixed"),
    "sdccrn-no-codec-fixed-compression": ModelSpec(codec=False, compression="fixed"),
    "sdccrn-no-compression": ModelSpec(compression="none"),
    "dccrn-baseline": ModelSpec.dccrn_baseline(),
    "tiny": ModelSpec.tiny(),
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--breakdown", action="store_true", help="also list parameters per top-level module")
    args = ap.parse_args()
    print("variant,parameters")
    for name, spec in VARIANTS.items():
        model = build_model(spec)
        print(f"{name},{parameter_count(model)}")
        if args.breakdown:
            for module, n in parameter_breakdown(model).items():
                print(f"  {module},{n}")


if __name__ == "__main__":
    main()
