"""Compression accounting for a run."""

from __future__ import annotations

from dataclasses import dataclass, field


def compression_ratio(n_tokens: int, budget: int) -> float:
    """Input tokens per budgeted output token."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return n_tokens / budget


def format_ratio(ratio: float) -> str:
    return f"{ratio:.2f}"


@dataclass(frozen=True)
class ScaleEntry:
    scale_id: int
    n_tokens: int
    n_regions: int
    budget: int
    kept: int
    merged: int

    @property
    def ratio(self) -> float:
        return compression_ratio(self.n_tokens, self.budget)

    @property
    def emitted(self) -> int:
        return self.kept + self.merged


@dataclass
class RunReport:
    scales: list[ScaleEntry]
    timing_ms: dict[str, float] = field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return sum(s.n_tokens for s in self.scales)

    @property
    def budget_total(self) -> int:
        return sum(s.budget for s in self.scales)

    @property
    def emitted_total(self) -> int:
        return sum(s.emitted for s in self.scales)

    @property
    def ratio(self) -> float:
        return compression_ratio(self.n_total, self.budget_total)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "scales": [
                {
                    "scale_id": s.scale_id,
                    "n_tokens": s.n_tokens,
                    "n_regions": s.n_regions,
                    "budget": s.budget,
                    "kept": s.kept,
                    "merged": s.merged,
                    "ratio": format_ratio(s.ratio),
                }
                for s in self.scales
            ],
            "totals": {
                "n_tokens": self.n_total,
                "budget": self.budget_total,
                "emitted": self.emitted_total,
                "ratio": format_ratio(self.ratio),
            },
        }
        if timing:
            out["timing_ms"] = {k: round(v, 3) for k, v in self.timing_ms.items()}
        return out

    def format_text(self) -> str:
        head = f"{'scale':>5} {'tokens':>8} {'regions':>7} {'budget':>7} {'kept':>7} {'merged':>6} {'ratio':>8}"
        lines = [head]
        for s in self.scales:
            lines.append(
                f"{s.scale_id:>5} {s.n_tokens:>8} {s.n_regions:>7} {s.budget:>7} "
                f"{s.kept:>7} {s.merged:>6} {format_ratio(s.ratio):>8}"
            )
        lines.append(
            f"{'total':>5} {self.n_total:>8} {sum(s.n_regions for s in self.scales):>7} "
            f"{self.budget_total:>7} {sum(s.kept for s in self.scales):>7} "
            f"{sum(s.merged for s in self.scales):>6} {format_ratio(self.ratio):>8}"
        )
        if self.timing_ms:
            lines.append("timing (ms): " + ", ".join(
                f"{k}={v:.1f}" for k, v in self.timing_ms.items()))
        return "\n".join(lines)
