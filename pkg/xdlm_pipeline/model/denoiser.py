# model/denoiser.py
"""
Encoder-decoder denoiser with token, position, language and time-step
embeddings. The decoder attends bidirectionally (no causal mask), and a
length head classifies |Y| from mean-pooled encoder states.
"""
import logging
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F
from torch import nn

from xdlm_pipeline.exceptions import ConfigurationError, ShapeError


@dataclass
class ModelConfig:
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    hidden: int = 64
    n_heads: int = 4
    max_len: int = 64
    n_timesteps: int = 21
    dropout: float = 0.1
    vocab_size: int = 16
    n_langs: int = 2
    ffn: int = 0

    def __post_init__(self):
        if not self.ffn:
            self.ffn = 4 * self.hidden

    def validate(self):
        checks = [
            (self.hidden % self.n_heads == 0, f"hidden ({self.hidden}) divisible by n_heads ({self.n_heads})"),
            (self.max_len >= 1, f"max_len >= 1 (got {self.max_len})"),
            (0.0 <= self.dropout < 1.0, f"dropout in [0, 1) (got {self.dropout})"),
            (self.n_layers_enc >= 1 and self.n_layers_dec >= 1, "at least one encoder and one decoder layer"),
            (self.n_timesteps >= 1, f"n_timesteps >= 1 (got {self.n_timesteps})"),
            (self.vocab_size >= 1, f"vocab_size >= 1 (got {self.vocab_size})"),
            (self.n_langs >= 1, f"n_langs >= 1 (got {self.n_langs})"),
        ]
        for ok, invariant in checks:
            if not ok:
                raise ConfigurationError(f"Invalid model config: requires {invariant}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})


@dataclass
class ModelInput:
    """Batched (B, length) tensors; padding masks are True at pad positions."""
    encoder_ids: torch.Tensor
    encoder_langs: torch.Tensor
    encoder_positions: torch.Tensor
    encoder_padding: torch.Tensor
    decoder_ids: torch.Tensor
    decoder_langs: torch.Tensor
    decoder_positions: torch.Tensor
    decoder_padding: torch.Tensor
    timestep: torch.Tensor

    def validate(self, config):
        for side in ("encoder", "decoder"):
            shapes = {getattr(self, f"{side}_{name}").shape for name in ("ids", "langs", "positions", "padding")}
            if len(shapes) != 1:
                raise ShapeError(f"{side} arrays have different shapes: {sorted(shapes)}")
            positions = getattr(self, f"{side}_positions")
            if positions.numel() and int(positions.max()) >= config.max_len:
                raise ShapeError(f"{side} position {int(positions.max())} >= max_len {config.max_len}")
        if self.timestep.numel() and int(self.timestep.max()) >= config.n_timesteps:
            raise ShapeError(f"timestep {int(self.timestep.max())} >= n_timesteps {config.n_timesteps}")
        if self.timestep.shape != self.decoder_ids.shape[:1]:
            raise ShapeError(f"timestep shape {tuple(self.timestep.shape)} does not match batch size")

    def to(self, device):
        return ModelInput(**{f.name: getattr(self, f.name).to(device) for f in fields(self)})


@dataclass
class ModelOutput:
    logits: torch.Tensor          # (B, decoder length, vocab_size)
    length_logits: torch.Tensor   # (B, max_len); column j scores length j + 1


class DenoiserModel(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        hidden = config.hidden
        self.token_emb = nn.Embedding(config.vocab_size, hidden)
        self.position_emb = nn.Embedding(config.max_len, hidden)
        self.lang_emb = nn.Embedding(config.n_langs, hidden)
        self.time_emb = nn.Embedding(config.n_timesteps, hidden)
        self.embed_dropout = nn.Dropout(config.dropout)

        def layer_kwargs():
            return dict(
                d_model=hidden, nhead=config.n_heads, dim_feedforward=config.ffn,
                dropout=config.dropout, activation="gelu", batch_first=True, norm_first=True,
            )

        self.encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(**layer_kwargs()), config.n_layers_enc,
            norm=nn.LayerNorm(hidden), enable_nested_tensor=False,
        )
        self.decoder = nn.TransformerDecoder(
            nn.TransformerDecoderLayer(**layer_kwargs()), config.n_layers_dec,
            norm=nn.LayerNorm(hidden),
        )
        self.output_bias = nn.Parameter(torch.zeros(config.vocab_size))
        self.length_head = nn.Linear(hidden, config.max_len)

    def encode(self, batch):
        x = (self.token_emb(batch.encoder_ids) + self.position_emb(batch.encoder_positions)
             + self.lang_emb(batch.encoder_langs))
        return self.encoder(self.embed_dropout(x), src_key_padding_mask=batch.encoder_padding)

    def length_logits(self, memory, padding):
        keep = (~padding).unsqueeze(-1).to(memory.dtype)
        pooled = (memory * keep).sum(dim=1) / keep.sum(dim=1).clamp(min=1.0)
        return self.length_head(pooled)

    def decode(self, batch, memory):
        y = (self.token_emb(batch.decoder_ids) + self.position_emb(batch.decoder_positions)
             + self.lang_emb(batch.decoder_langs) + self.time_emb(batch.timestep).unsqueeze(1))
        h = self.decoder(
            self.embed_dropout(y), memory,
            tgt_key_padding_mask=batch.decoder_padding,
            memory_key_padding_mask=batch.encoder_padding,
        )
        return F.linear(h, self.token_emb.weight, self.output_bias)

    def forward(self, batch, train_mode=False):
        self.train(train_mode)
        batch.validate(self.config)
        memory = self.encode(batch)
        return ModelOutput(self.decode(batch, memory), self.length_logits(memory, batch.encoder_padding))


def count_parameters_formula(config):
    """Closed-form parameter count of DenoiserModel for a config."""
    H, F_, V, L = config.hidden, config.ffn, config.vocab_size, config.max_len
    embeddings = (V + L + config.n_langs + config.n_timesteps) * H
    encoder_layer = 4 * H * H + 2 * H * F_ + F_ + 9 * H
    decoder_layer = 8 * H * H + 2 * H * F_ + F_ + 15 * H
    final_norms = 4 * H
    heads = V + H * L + L
    return (embeddings + config.n_layers_enc * encoder_layer + config.n_layers_dec * decoder_layer
            + final_norms + heads)


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())


def build_model(config, init_seed, dtype=torch.float32):
    """
    Build a denoiser with every weight matrix drawn from U(-1/sqrt(hidden), 1/sqrt(hidden))
    using a generator seeded by init_seed; biases zero, layer-norm gains one.
    """
    config.validate()
    model = DenoiserModel(config)
    generator = torch.Generator().manual_seed(init_seed)
    bound = config.hidden ** -0.5
    with torch.no_grad():
        for name, param in model.named_parameters():
            if param.dim() > 1:
                param.copy_(torch.empty(param.shape).uniform_(-bound, bound, generator=generator))
            elif "norm" in name and name.endswith("weight"):
                param.fill_(1.0)
            else:
                param.zero_()
    model = model.to(dtype)
    logging.info(f"Built denoiser with {count_parameters(model)} parameters "
                 f"({config.n_layers_enc}+{config.n_layers_dec} layers, hidden {config.hidden})")
    return model


def forward(model, batch, train_mode=False):
    return model(batch, train_mode=train_mode)


def token_cross_entropy(logits, targets, positions):
    """Mean cross-entropy over selected positions; 0 when nothing is selected."""
    if not bool(positions.any()):
        return logits.sum() * 0.0
    return F.cross_entropy(logits[positions], targets[positions])


def compute_loss(model, batch, x0_targets, loss_positions, true_length, length_weight, train_mode=True):
    """
    Weighted sum of the token loss and the length loss.
    Returns (loss, token_loss, length_loss) as tensors.
    """
    if loss_positions.shape != batch.decoder_ids.shape:
        raise ShapeError(f"loss_positions shape {tuple(loss_positions.shape)} != decoder shape "
                         f"{tuple(batch.decoder_ids.shape)}")
    output = model(batch, train_mode=train_mode)
    token_loss = token_cross_entropy(output.logits, x0_targets, loss_positions)
    if true_length is None:
        length_loss = output.length_logits.sum() * 0.0
    else:
        if int(true_length.max()) > model.config.max_len or int(true_length.min()) < 1:
            raise ShapeError(f"true lengths must lie in [1, {model.config.max_len}]")
        length_loss = F.cross_entropy(output.length_logits, true_length - 1)
    return token_loss + length_weight * length_loss, token_loss, length_loss


def loss_and_gradients(model, batch, x0_targets, loss_positions, true_length, length_weight, train_mode=True):
    """Loss value plus a {parameter name: gradient} map."""
    model.zero_grad(set_to_none=True)
    loss, _, _ = compute_loss(model, batch, x0_targets, loss_positions, true_length, length_weight, train_mode)
    loss.backward()
    gradients = {
        name: param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
        for name, param in model.named_parameters()
    }
    return loss.detach(), gradients
