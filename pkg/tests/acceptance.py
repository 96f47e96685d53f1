## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## Long-running directional experiments on the desk-scale corpus. Not collected by pytest, run it by hand:
##     python tests/acceptance.py
## EASYST_ACCEPTANCE_DIR picks the output directory, EASYST_SEEDS the seeds (space separated), EASYST_CONFIG an optional settings file.

## built-in libraries
import glob
import os
import logging
import time

## third-party libraries
import numpy as np

## custom modules
from easyst import EasyST

from easyst.util.config_util import resolve_settings

##-------------------start-of-setup_preconditions()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def setup_preconditions():

    run_dir = os.getenv('EASYST_ACCEPTANCE_DIR', os.path.join('tests', f'acceptance-{time.strftime("%Y%m%d-%H%M%S")}'))
    seeds = [int(seed) for seed in os.getenv('EASYST_SEEDS', '1 2 3').split()]
    config_path = os.getenv('EASYST_CONFIG')

    assert not os.path.exists(run_dir), f"{run_dir} already exists, pick another EASYST_ACCEPTANCE_DIR"
    assert len(seeds) > 0, "EASYST_SEEDS must name at least one seed"

    os.makedirs(run_dir)

    return run_dir, seeds, config_path

def system_dir(seed_dir:str, index:int) -> str:

    ## ablation writes <index>-<scheme>-a<alpha>-l<lambda> per system
    matches = glob.glob(os.path.join(seed_dir, f"{index}-*"))

    assert len(matches) == 1, f"expected one system directory for index {index} in {seed_dir}"

    return os.path.join(matches[0], "checkpoints")

def non_increasing(values:list[float]) -> bool:
    return all(later <= earlier for earlier, later in zip(values, values[1:]))

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

def main():

    run_dir, seeds, config_path = setup_preconditions()

    checks = []
    bleu_by_system = {}
    mt_accuracies = []
    criticality_pairs = []
    correlation_direction = []
    top_layer_pairs = []

    for seed in seeds:

        print(f"------------------------------------------------Seed {seed}------------------------------------------------")

        settings = resolve_settings(config_path, {"seed": seed})
        seed_dir = os.path.join(run_dir, f"seed-{seed}")

        EasyST.set_log_directory(run_dir, settings)

        corpus = EasyST.generate_corpus(settings)

        print("------------------------------------------------Pretraining------------------------------------------------")

        asr_run = EasyST.pretrain("asr", settings, corpus, os.path.join(seed_dir, "pretrain-asr"))
        mt_run = EasyST.pretrain("mt", settings, corpus, os.path.join(seed_dir, "pretrain-mt"))

        mt_accuracies.append(mt_run.history[-1]["dev_accuracy"])
        print(f"MT dev accuracy: {mt_accuracies[-1]:.4f}")

        print("------------------------------------------------Ablation ladder------------------------------------------------")

        rows = EasyST.ablation(settings, corpus, run_dir, [seed], include_st=True, asr_checkpoint=asr_run.checkpoint, mt_checkpoint=mt_run.checkpoint)

        for row in rows:
            bleu_by_system.setdefault(row.system, []).extend(row.st_bleu)
            print(f"{row.system}: ST BLEU {row.st_bleu[-1]:.2f}" + (f", MT BLEU {row.mt_bleu[-1]:.2f}" if row.mt_bleu else ""))

        print("------------------------------------------------Criticality------------------------------------------------")

        top = f"decoder.{settings['n_decoder_layers'] - 1}"
        st_model = EasyST.load_averaged([system_dir(seed_dir, 0)], settings["average_last"])

        curves = EasyST.criticality(st_model, asr_run.checkpoint, mt_run.checkpoint, corpus["dev"], settings, ["decoder.0", top])
        EasyST.report(curves, seed_dir)

        criticality_pairs.append((abs(curves[0].bleu_delta[-1]), abs(curves[1].bleu_delta[-1])))
        print(f"|delta| at full rollback: decoder.0 {criticality_pairs[-1][0]:.2f}, {top} {criticality_pairs[-1][1]:.2f}")

        print("------------------------------------------------Correlation------------------------------------------------")

        models = {"jt": EasyST.load_model([system_dir(seed_dir, 1)], settings["average_last"]),
                  "jt-proposed": EasyST.load_model([system_dir(seed_dir, 4)], settings["average_last"])}

        jt_profile, proposed_profile = EasyST.correlation(models, corpus["dev"], settings["analysis_max_samples"])
        EasyST.report([jt_profile, proposed_profile], seed_dir)

        correlation_direction.append(non_increasing(proposed_profile.layer_coefficients))
        top_layer_pairs.append((jt_profile.layer_coefficients[-1], proposed_profile.layer_coefficients[-1]))

        print(f"jt: {[round(r, 3) for r in jt_profile.layer_coefficients]}")
        print(f"jt-proposed: {[round(r, 3) for r in proposed_profile.layer_coefficients]}")

    print("------------------------------------------------Noise ablation------------------------------------------------")

    gaps = {}

    for label, changes in (("noisy", {}), ("clean", {"feature_noise": 0.0, "min_frames_per_token": 2, "max_frames_per_token": 2})):

        settings = resolve_settings(config_path, {"seed": seeds[0], **changes})
        corpus = EasyST.generate_corpus(settings)
        noise_dir = os.path.join(run_dir, f"noise-{label}")

        asr = EasyST.pretrain("asr", settings, corpus, os.path.join(noise_dir, "pretrain-asr")).checkpoint
        mt = EasyST.pretrain("mt", settings, corpus, os.path.join(noise_dir, "pretrain-mt")).checkpoint

        run = EasyST.train(settings, corpus, asr, mt, os.path.join(noise_dir, "jt-proposed"))
        model = EasyST.load_model([os.path.join(noise_dir, "jt-proposed", "checkpoints")], settings["average_last"])

        st_bleu, _, _ = EasyST.evaluate(model, corpus["test"], "st", settings["beam_size"], settings["eval_max_samples"])
        mt_bleu, _, _ = EasyST.evaluate(model, corpus["test"], "mt", settings["beam_size"], settings["eval_max_samples"])

        gaps[label] = mt_bleu - st_bleu
        print(f"{label}: ST {st_bleu:.2f}, MT {mt_bleu:.2f}, gap {gaps[label]:.2f}, {run.steps} updates")

    print("------------------------------------------------Summary------------------------------------------------")

    means = {system: float(np.mean(scores)) for system, scores in bleu_by_system.items()}
    ladder = ["ST", "JT", "JT-S-MT", "JT-S-MT + CAR", "JT-S-MT + CAR + KD"]

    checks.append(("ablation ordering", non_increasing([-means[system] for system in ladder])))
    checks.append(("proposed gains at least 0.5 BLEU over JT", means["JT-S-MT + CAR + KD"] - means["JT"] >= 0.5))
    checks.append(("MT pretraining dev accuracy above 0.9", min(mt_accuracies) > 0.9))
    checks.append(("top decoder layer more critical than bottom", all(top_delta > bottom_delta for bottom_delta, top_delta in criticality_pairs)))
    checks.append(("correlation non-increasing with depth in most seeds", sum(correlation_direction) * 3 >= 2 * len(seeds)))
    checks.append(("top layer correlation of proposed at least that of JT", all(proposed >= jt for jt, proposed in top_layer_pairs)))
    checks.append(("clean speech narrows the ST/MT gap", gaps["clean"] < gaps["noisy"]))

    for system in ladder:
        print(f"{system}: mean ST BLEU {means[system]:.2f}")

    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}")


    return 0 if all(passed for _, passed in checks) else 1

##-------------------start-of-main()---------------------------------------------------------------------------------------------------------------------------------------------------------------------------

if(__name__ == "__main__"):

    logging.basicConfig(level=logging.DEBUG,
                        filename='acceptance.log',
                        filemode='w',
                        format='[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')

    console = logging.StreamHandler()
    console.setLevel(logging.INFO)
    formatter = logging.Formatter('[%(asctime)s] [%(levelname)s] [%(filename)s] %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    console.setFormatter(formatter)
    logging.getLogger('').addHandler(console)

    raise SystemExit(main())
