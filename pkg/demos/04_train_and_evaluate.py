"""Train small surrogates, then score them on a finer grid than they saw.

Widths here are tiny so the script finishes in a few minutes on one core;
the reference-size runs go through ``psno train`` instead.
"""
import dataclasses

from psno.datagen import SamplingConfig, build_dataset, generate_split
from psno.evaluation import SweepConfig, evaluate_superres, regime_sweep
from psno.training import TrainConfig, train

SMALL = {
    "deeponet": dict(branch_widths=(32,), trunk_widths=(32, 32), basis=16),
    "fno": dict(width=16, layers=2, modes=8, projection_widths=(32,)),
    "lnode-adaptive": dict(encoder_widths=(32,), latent_dim=8, dynamics_widths=(32,),
                           decoder_widths=(32,)),
}
tc = TrainConfig(epochs=20, batch_size=16, allow_any_size=True)

models = {}
for mix, fraction in (("mix0", 0.0), ("mix20", 0.2)):
    splits = build_dataset(SamplingConfig(n_train=160, n_val=40, n_test=20,
                                          unstable_fraction=fraction, seed=9))
    models[mix] = {}
    for kind, widths in SMALL.items():
        model, report = train(kind, splits, tc, widths)
        models[mix][kind] = [model]
        print(f"{mix} {kind:15s} val loss {report.val_loss[0]:.3f} -> "
              f"{report.best_val_loss:.3f} (epoch {report.best_epoch})")

# zero-shot super-resolution: the same test systems at a 2000x finer step
fine = generate_split(dataclasses.replace(splits.test.config, dt=5e-5), "test")
fine.stats = splits.train.stats
print(evaluate_superres(models["mix20"], splits.test, fine, n_boot=2000).table())

# regime generalization: sweep Pm1 across the stability threshold
sweep = regime_sweep(models["mix0"], models["mix20"], SweepConfig(points=21))
print(f"instability threshold {sweep.threshold:.4f} p.u.")
for kind in SMALL:
    print(f"{kind:15s} unstable-region MASE  mix0 {sweep.mean_unstable_mase(kind, 'mix0'):.3f}"
          f"  mix20 {sweep.mean_unstable_mase(kind, 'mix20'):.3f}")
