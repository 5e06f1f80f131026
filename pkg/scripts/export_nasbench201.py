#!/usr/bin/env python3
"""Export the public tabular NAS benchmark into this project's CSV schema.

Documentation-only: requires the external `nats_bench` package and its data
file, neither of which ships with this repository. The resulting CSV can be
fed to `tnsupernet search --task tabular --benchmark <csv> --supernet <json>`
together with the cell supernet from `tnsupernet.tabular.nasbench201_supernet`.

Usage:
    python scripts/export_nasbench201.py --api-file NATS-tss-v1_0-3ffb9-simple \
        --dataset cifar10 --out nasbench201_cifar10.csv

Rows are written in lexicographic index order. Column i_t is the 1-based
choice on edge t, where edges follow the architecture-string convention
(1<-0), (2<-0), (2<-1), (3<-0), (3<-1), (3<-2) and choices follow
tnsupernet.tabular.NASBENCH201_OPS. `val` is the validation accuracy and
`test` the test accuracy, both divided by 100.
"""
import argparse
import csv
import itertools


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--api-file", required=True, help="NATS-Bench topology file")
    ap.add_argument("--dataset", default="cifar10", choices=("cifar10", "cifar100", "ImageNet16-120"))
    ap.add_argument("--hp", default="200", help="training epochs record to export")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    try:
        from nats_bench import create
    except ImportError:
        raise SystemExit(
            "this export script needs the external nats_bench package; "
            "see its documentation for the data download"
        )
    from tnsupernet.tabular import NASBENCH201_OPS

    api = create(args.api_file, "tss", fast_mode=True, verbose=False)
    edges = ("1<-0", "2<-0", "2<-1", "3<-0", "3<-1", "3<-2")

    def arch_string(picks):
        ops = [NASBENCH201_OPS[p - 1] for p in picks]
        return "|{}~0|+|{}~0|{}~1|+|{}~0|{}~1|{}~2|".format(*ops)

    with open(args.out, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"i_{i}" for i in range(1, 7)] + ["val", "test"])
        for picks in itertools.product(range(1, 6), repeat=6):
            index = api.query_index_by_arch(arch_string(picks))
            info = api.get_more_info(index, args.dataset, hp=args.hp, is_random=False)
            val = info.get("valid-accuracy")
            test = info.get("test-accuracy")
            writer.writerow(list(picks) + [val / 100.0, test / 100.0])
    print(f"wrote {5**6} rows to {args.out} ({len(edges)} edges)")


if __name__ == "__main__":
    main()
