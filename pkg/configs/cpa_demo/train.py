"""Stand-in for a training run: scores hparams.json deterministically.

Writes ablate_metrics.json with a Pearson-like score and an MSE.
"""

import json
import math
import sys

h = json.load(open("hparams.json"))
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

pearson = 0.9129
toggles = {
    "use_latent_composition": 0.0275,
    "use_encoder": 0.0510,
    "use_adversary": 0.0200,
    "use_gradient_penalty": 0.0010,
    "use_pert_embedding": 0.0640,
    "use_cov_embedding": 0.0120,
    "use_dose_scaler": 0.0040,
    "use_time_scaler": 0.0020,
}
for key, loss in toggles.items():
    if not h[key]:
        pearson -= loss
pearson -= 0.006 * abs(math.log2(h["latent_dim"] / 128))
pearson -= 0.003 * abs(math.log2(h["encoder_width"] / 256))
pearson -= 0.004 * abs(math.log2(h["adversary_weight"]))
if h["recon_loss"] != "gauss":
    pearson -= 0.008

mse = 0.0303 + 0.2 * (0.9129 - pearson)
json.dump({"pearson": round(pearson, 6), "mse": round(mse, 6), "seed": seed}, open("ablate_metrics.json", "w"))
