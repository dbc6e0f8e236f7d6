"""
Report Generator for the Monte Carlo experiment
Writes raw and summary tables, the JSON summary and per-user SINR charts
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from harness import ExperimentReport  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed SVG element ids so charts are byte-stable across runs.
SVG_RC = {"svg.hashsalt": "hetnet-sim"}

PLOT_SCRIPT = '''"""
Redraw the per-user SINR charts from summary.csv
"""

import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def draw(summary, out_dir):
    for family, frame in summary.groupby("objective", sort=False):
        before = frame[frame["phase"] == "before"].sort_values("user")
        after = frame[frame["phase"] == "after"]
        for alpha, cell in after.groupby("alpha", sort=True):
            means = cell.groupby("user")["mean_sinr_linear"].mean()
            fig, ax = plt.subplots(figsize=(8, 4))
            users = before["user"].to_numpy()
            ax.bar(users - 0.2, [10 * math.log10(v) for v in before["mean_sinr_linear"]], 0.4,
                   label="before")
            ax.bar(users + 0.2, [10 * math.log10(means[u]) for u in users], 0.4,
                   label=f"after, alpha={alpha:g}")
            ax.set_xlabel("user")
            ax.set_ylabel("mean SINR (dB)")
            ax.set_title(family)
            ax.legend()
            fig.savefig(Path(out_dir) / f"replot_{family}_alpha{alpha:g}.svg")
            plt.close(fig)


if __name__ == "__main__":
    here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    draw(pd.read_csv(here / "summary.csv"), here)
'''


class ReportGenerator:
    def __init__(self, report: ExperimentReport):
        """Bind the generator to one finished experiment"""
        self.report = report

    def write_outputs(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        """Write every artifact into out_dir; returns name -> path"""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = {}
        try:
            written["raw"] = self._write_csv(self.report.raw, out / "raw.csv")
            summary = self.report.per_user_means()
            written["summary"] = self._write_csv(summary, out / "summary.csv")
            written["summary_json"] = self._write_summary_json(out / "summary.json")
            written["plot_script"] = out / "plot_summary.py"
            written["plot_script"].write_text(PLOT_SCRIPT)
            for path in self._write_charts(summary, out):
                written[path.stem] = path
        except OSError as e:
            logger.error(f"Error writing experiment outputs to {out}: {e}")
            raise
        logger.info(f"Wrote {len(written)} experiment artifacts to {out}")
        return written

    @staticmethod
    def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
        frame.to_csv(path, index=False, lineterminator="\n")
        return path

    def _write_summary_json(self, path: Path) -> Path:
        summary = {"config": self.report.config.to_dict(), **self.report.summary()}
        with open(path, "w") as f:
            json.dump(summary, f, indent=2)
        return path

    def _write_charts(self, summary: pd.DataFrame, out: Path) -> List[Path]:
        paths = []
        for family in summary["objective"].unique():
            frame = summary[summary["objective"] == family]
            before = frame[frame["phase"] == "before"].sort_values("user")
            users = before["user"].to_numpy()
            before_db = before["mean_sinr_db"].to_numpy()

            fig, ax = plt.subplots(figsize=(8, 4))
            colors = ["tab:red" if op else "tab:blue" for op in before["is_op"]]
            ax.bar(users, before_db, color=colors)
            ax.set_xlabel("user")
            ax.set_ylabel("mean SINR (dB)")
            ax.set_title(f"{family}: before prioritization")
            paths.append(self._save(fig, out / f"sinr_{family}_before.svg"))

            after = frame[frame["phase"] == "after"]
            for alpha in sorted(after["alpha"].unique()):
                # Averaged over states, each state weighted by its instance count.
                cell = after[after["alpha"] == alpha]
                pooled = (cell["mean_sinr_linear"] * cell["instances"]).groupby(cell["user"]).sum() \
                    / cell.groupby("user")["instances"].sum()
                after_db = [10.0 * math.log10(pooled[u]) for u in users]

                fig, ax = plt.subplots(figsize=(8, 4))
                ax.bar(users - 0.2, before_db, 0.4, label="before")
                ax.bar(users + 0.2, after_db, 0.4, label=f"after, alpha={alpha:g}")
                ax.set_xlabel("user")
                ax.set_ylabel("mean SINR (dB)")
                ax.set_title(f"{family}: alpha = {alpha:g}")
                ax.legend()
                paths.append(self._save(fig, out / f"sinr_{family}_after_alpha{alpha:g}.svg"))
        return paths

    @staticmethod
    def _save(fig, path: Path) -> Path:
        fig.tight_layout()
        with plt.rc_context(SVG_RC):
            fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path


def write_outputs(report: ExperimentReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write every artifact of a finished experiment into out_dir"""
    return ReportGenerator(report).write_outputs(out_dir)
