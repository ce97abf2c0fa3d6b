"""A small end-to-end run: phantoms, training, scoring.

Trains the equivariant network for a few epochs on a handful of small
phantoms at acceleration 4 and compares it to the zero-filled input on
held-out samples. Runs in a few seconds.

    python demos/02_train_and_score.py
"""

from equicine.phantom import make_sample
from equicine.train import TrainConfig, evaluate, train
from equicine.unroll import build_model, variant_config

R = 4.0
train_set = [make_sample(s, T=4, H=32, W=32, n_coils=4, R=R) for s in range(6)]
test_set = [make_sample(100 + s, T=4, H=32, W=32, n_coils=4, R=R) for s in range(3)]

model = build_model(variant_config("dun-sre", K=2, channels=2), seed=0)
_, curve = train(model, train_set, TrainConfig(epochs=8, lr=5e-3, train_R=(R,)),
                 log=lambda rec: print(f"epoch {rec['epoch']:2d}  loss {rec['loss']:.5f}"))

report = evaluate(model, test_set, [R], variant="dun-sre")
print()
for row in report.summary():
    print(f"{row['variant']:>12}  PSNR {row['psnr_db_mean']:6.2f} dB  SSIM {row['ssim_mean']:.3f}  "
          f"HFEN {row['hfen_mean']:.3f}")
