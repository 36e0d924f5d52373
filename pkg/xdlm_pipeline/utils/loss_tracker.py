# utils/loss_tracker.py
"""Per-step loss trace kept as a DataFrame and mirrored to CSV."""

import logging

import pandas as pd

COLUMNS = ["step", "token_loss", "length_loss", "lr"]


class LossTracker:
    """Append-only loss trace; rows are flushed to CSV every `flush_every` steps."""

    def __init__(self, trace_path=None, flush_every=50):
        self.trace_path = trace_path
        self.flush_every = flush_every
        self._pending = []
        self.tracking_df = pd.DataFrame(columns=COLUMNS)

    def log_step(self, step, token_loss, length_loss, lr):
        self._pending.append([int(step), float(token_loss), float(length_loss), float(lr)])
        if len(self._pending) >= self.flush_every:
            self.save_tracking_df()

    @property
    def frame(self):
        self._merge_pending()
        return self.tracking_df

    def _merge_pending(self):
        if self._pending:
            new_rows = pd.DataFrame(self._pending, columns=COLUMNS)
            self.tracking_df = new_rows if self.tracking_df.empty else pd.concat(
                [self.tracking_df, new_rows], ignore_index=True
            )
            self._pending = []

    def save_tracking_df(self):
        self._merge_pending()
        if not self.trace_path:
            return
        try:
            self.tracking_df.to_csv(self.trace_path, index=False)
        except Exception as e:
            logging.error(f"Error saving loss trace {self.trace_path}: {e}")

    def median_loss(self, first_step, last_step):
        """Median token loss over steps in [first_step, last_step]."""
        frame = self.frame
        window = frame[(frame["step"] >= first_step) & (frame["step"] <= last_step)]
        return float(window["token_loss"].median())
