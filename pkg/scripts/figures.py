#!/usr/bin/env python3
"""Write the threshold-curve CSVs (figures 3, 4 and 5) into a directory."""

import argparse
from pathlib import Path

from diqpq import cli


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir", nargs="?", default="figures")
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--plot", action="store_true", help="also render PNGs (needs matplotlib)")
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for fig in (3, 4, 5):
        header, rows = cli.figure_rows(fig, args.points)
        path = out / f"figure{fig}.csv"
        path.write_text(cli.render_csv(header, rows), newline="\n")
        print(path)
        if args.plot and fig != 3:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt

            curves = {}
            for r in rows:
                curves.setdefault((r[header.index("psi1")], r[header.index("psi2")]), []).append(r)
            fig_, ax = plt.subplots()
            for (p1, p2), rs in curves.items():
                ax.plot([r[header.index("theta")] for r in rs], [r[header.index("threshold")] for r in rs],
                        label=f"psi=({p1:.3f}, {p2:.3f})")
            ax.set_xlabel("theta")
            ax.set_ylabel("CHSH threshold")
            ax.legend()
            fig_.savefig(out / f"figure{fig}.png", dpi=120)
            plt.close(fig_)


if __name__ == "__main__":
    main()
