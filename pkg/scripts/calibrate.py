"""Calibration sweeps behind the frozen acceptance constants.

Runs the quasi-static 2x2 waterfalls (uniform and shaped, both receive
correlations) at 500-block-error precision and the fixed-SNR mixed-layer
point, then prints the BLER=0.1 crossings and gains. Not part of the
package or test suite; writes CSVs under /tmp/calib/.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mimopas.sim import ScenarioConfig, run_mixed_layers, run_sweep  # noqa: E402

OUT = Path("/tmp/calib")
OUT.mkdir(exist_ok=True)

NU = 0.2286502833389789

COMMON = dict(m_bits=2, mt=2, mr=2, detector="sd", clip=1000.0, coherence=0,
              snr_start=9.0, snr_stop=13.0, snr_step=1.0,
              max_frames=6000, target_block_errors=500, batch_frames=50,
              seed=101, timing=False)


def crossing(records, level=0.1):
    pts = [(r.snr_db, r.bler) for r in records]
    for (x0, b0), (x1, b1) in zip(pts, pts[1:]):
        if b0 > level >= b1:
            l0, l1 = math.log10(b0), math.log10(max(b1, 1e-6))
            return x0 + (x1 - x0) * (math.log10(level) - l0) / (l1 - l0)
    return None


def main():
    gains = {}
    for beta in (0.0, 0.3874):
        tag = "b0" if beta == 0 else "bm"
        uniform = run_sweep(ScenarioConfig(
            scenario="uniform", beta_rx=beta,
            output=str(OUT / f"uniform_{tag}.csv"), **COMMON))
        shaped = run_sweep(ScenarioConfig(
            scenario="ps", nu=NU, beta_rx=beta,
            output=str(OUT / f"ps_{tag}.csv"), **COMMON))
        cu, cp = crossing(uniform), crossing(shaped)
        gains[beta] = cu - cp
        print(f"beta_rx={beta}: uniform crosses 0.1 at {cu:.3f} dB, "
              f"shaped at {cp:.3f} dB, gain {cu - cp:+.3f} dB")
    print(f"gain trend with correlation: {gains[0.3874] - gains[0.0]:+.3f} dB")

    mixed = dict(COMMON)
    mixed.update(snr_start=14.0, snr_stop=14.0, max_frames=1600,
                 target_block_errors=1600, seed=11)
    records = run_mixed_layers(ScenarioConfig(scenario="mixed", nu=NU,
                                              mixed_uses=128, **mixed))
    for r in records:
        print(f"{r.scenario}: layer ber {r.layer_ber} ci {r.layer_ci}")


if __name__ == "__main__":
    main()
