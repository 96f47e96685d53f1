## Copyright (C) 2024 Kaden Bilyeu (Bikatr7) (https://github.com/Bikatr7), Alejandro Mata (https://github.com/alemalvarez)
## Use of this source code is governed by an GNU Lesser General Public License v2.1
## license that can be found in the LICENSE file.

## special token ids, shared by the source and the target vocabulary
PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3

NUM_SPECIAL_TOKENS = 4

## additive attention bias for masked positions, exp() of it underflows to exactly 0.0 in float64
MASK_BIAS = -1e9

## checkpoint file layout
CHECKPOINT_MAGIC = b"BMTC"
CHECKPOINT_VERSION = 1
CHECKPOINT_SUFFIX = ".bmtc"

## joint fine-tuning schemes, lower case is the cli spelling
ALLOWED_SCHEMES = [
    "st",
    "jt",
    "jt-s-asr",
    "jt-s-mt",
    "jt-proposed"
]

## single-task pretraining layouts
PRETRAINING_TASKS = [
    "asr",
    "mt"
]

SCHEME_DISPLAY_NAMES = {
    "st": "ST",
    "jt": "JT",
    "jt-s-asr": "JT-S-ASR",
    "jt-s-mt": "JT-S-MT",
    "jt-proposed": "JT-Proposed",
    "asr": "ASR",
    "mt": "MT"
}

## which paths a layout builds, and whether the text path runs through the upper speech layers
SCHEME_LAYOUTS = {
    "asr": {"speech": True, "text": False, "share_encoder": False},
    "mt": {"speech": False, "text": True, "share_encoder": False},
    "st": {"speech": True, "text": False, "share_encoder": False},
    "jt": {"speech": True, "text": True, "share_encoder": False},
    "jt-s-asr": {"speech": True, "text": True, "share_encoder": True},
    "jt-s-mt": {"speech": True, "text": True, "share_encoder": True},
    "jt-proposed": {"speech": True, "text": True, "share_encoder": True}
}

## initialization as prefix rules: (model prefix, source checkpoint, source prefix)
_SPEECH_FROM_ASR = [
    ("speech_frontend", "asr", "speech_frontend"),
    ("speech_encoder", "asr", "speech_encoder"),
]

_DECODER_FROM_MT = [
    ("decoder", "mt", "decoder"),
    ("output_projection", "mt", "output_projection"),
]

SCHEME_INIT_RULES = {
    "st": _SPEECH_FROM_ASR + [("shared_encoder", "asr", "shared_encoder")] + _DECODER_FROM_MT,
    "jt": _SPEECH_FROM_ASR + [("shared_encoder", "asr", "shared_encoder"), ("text_embedding", "mt", "text_embedding"), ("text_encoder", "mt", "text_encoder")] + _DECODER_FROM_MT,
    "jt-s-asr": _SPEECH_FROM_ASR + [("shared_encoder", "asr", "shared_encoder"), ("text_embedding", "mt", "text_embedding")] + _DECODER_FROM_MT,
    "jt-s-mt": _SPEECH_FROM_ASR + [("shared_encoder", "mt", "text_encoder"), ("text_embedding", "mt", "text_embedding")] + _DECODER_FROM_MT,
    "jt-proposed": _SPEECH_FROM_ASR + [("shared_encoder", "mt", "text_encoder"), ("text_embedding", "mt", "text_embedding")] + _DECODER_FROM_MT,
}

## the ablation ladder, (row label, scheme, alpha, lambda)
ABLATION_LADDER = [
    ("JT", "jt", 1.0, 0.0),
    ("JT-S-MT", "jt-s-mt", 1.0, 0.0),
    ("JT-S-MT + CAR", "jt-proposed", 1.0, 0.02),
    ("JT-S-MT + CAR + KD", "jt-proposed", 0.8, 0.02)
]

ABLATION_ST_ROW = ("ST", "st", 1.0, 0.0)

METRICS_COLUMNS = ["step", "epoch", "task", "nll_st", "kd", "car", "nll_mt", "total", "lr"]

CRITICALITY_COLUMNS = ["selector", "ratio", "bleu", "bleu_delta"]

CORRELATION_COLUMNS = ["layer", "r_mean", "r_min_component", "r_max_component", "n_points"]

## desk-scale defaults, every key a run may set
DEFAULT_EXPERIMENT_SETTINGS = {
    ## corpus
    "src_vocab_size": 40,
    "tgt_vocab_size": 44,
    "min_len": 5,
    "max_len": 20,
    "min_frames_per_token": 2,
    "max_frames_per_token": 4,
    "feature_noise": 0.1,
    "feature_dim": 16,
    "train_size": 8000,
    "dev_size": 500,
    "test_size": 500,
    "text_only_size": 8000,

    ## model
    "d_model": 64,
    "n_heads": 4,
    "d_ffn": 128,
    "n_speech_lower_layers": 2,
    "n_shared_encoder_layers": 2,
    "n_decoder_layers": 2,
    "dropout": 0.1,
    "max_positions": 256,

    ## training
    "scheme": "jt-proposed",
    "alpha": 0.8,
    "lambda": 0.02,
    "label_smoothing": 0.1,
    "lr": 5e-3,
    "adam_beta1": 0.9,
    "adam_beta2": 0.98,
    "adam_eps": 1e-8,
    "warmup_steps": 200,
    "epochs": 40,
    "pretrain_epochs": 20,
    "accumulation": 4,
    "keep_last": 10,
    "max_tokens_speech": 2000,
    "max_tokens_text": 800,

    ## evaluation
    "beam_size": 5,
    "average_last": 10,
    "eval_max_samples": 0,

    ## analysis
    "ratios": "0,0.25,0.5,0.75,1.0",
    "workers": 0,
    "analysis_max_samples": 200,

    "seed": 1
}
