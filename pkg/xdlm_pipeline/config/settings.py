# config/settings.py
"""
Configuration settings for the translation diffusion pipeline
"""


class Config:
    # Special tokens, in id order (they occupy ids 0..3)
    PAD_TOKEN = "<pad>"
    BOS_TOKEN = "<s>"
    EOS_TOKEN = "</s>"
    MASK_TOKEN = "<mask>"
    SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, MASK_TOKEN)
    END_OF_WORD = "</w>"

    # Directory structure below --output-dir
    DIR_STRUCTURE = {
        'checkpoints': 'checkpoints',
        'reports': 'reports',
        'data': 'data',
    }
    SNAPSHOT_FILE = "resolved_config.env"
    LOSS_TRACE_FILE = "loss_trace.csv"

    # Seed offsets from the single --seed
    SEED_OFFSETS = {
        'data': 0,
        'model': 1,
        'batches': 2,
        'decode': 3,
    }

    # Numerical constants
    EPS_FLOOR = 1e-9
    ORACLE_MAX_VOCAB = 8
    ORACLE_MAX_LENGTH = 4

    # Logging configuration
    LOG_FILE_NAME = "xdlm.log"
    LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
    LOG_LEVEL = 'INFO'

    TOY_PROFILE = {
        'model_layers_enc': 2,
        'model_layers_dec': 2,
        'model_hidden': 64,
        'model_heads': 4,
        'model_ffn': 256,
        'model_max_len': 64,
        'diffusion_steps': 20,
        'schedule_kind': 'linear_mask',
        'noise_kind': 'absorbing',
        'bpe_merges': 1000,
        'train_lr': 5e-4,
        'train_finetune_lr': 5e-4,
        'train_warmup_steps': 500,
        'train_weight_decay': 0.0005,
        'train_dropout': 0.1,
        'train_max_tokens': 2048,
        'train_max_len': 64,
        'train_length_weight': 0.1,
        'train_mask_ratio': 0.15,
        'train_tdlm_loss_scope': 'noised',
        'train_steps': 2000,
        'train_checkpoint_interval': 500,
        'decode_iterations': 20,
        'decode_length_beam': 1,
        'decode_routing': 'topk',
        'decode_sample_x0': False,
        'decode_temperature': 1.0,
        'seed': 1,
    }

    PAPER_PROFILE = {
        **TOY_PROFILE,
        'model_layers_enc': 6,
        'model_layers_dec': 6,
        'model_hidden': 512,
        'model_heads': 8,
        'model_ffn': 2048,
        'model_max_len': 256,
        'diffusion_steps': 50,
        'train_lr': 5e-4,
        'train_finetune_lr': 5e-5,
        'train_warmup_steps': 30000,
        'train_dropout': 0.2,
        'train_max_tokens': 4096,
        'train_max_len': 256,
        'train_steps': 300000,
        'train_checkpoint_interval': 5000,
    }

    PROFILES = {
        'toy': TOY_PROFILE,
        'paper': PAPER_PROFILE,
    }
