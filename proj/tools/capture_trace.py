# Copyright 2026 The peakmem Authors
# SPDX-License-Identifier: Apache-2.0
"""Captures a CPU profiler trace of a small training loop for `peakmem estimate`.

Prints the measured peak reserved bytes when a CUDA device is present.
"""

import argparse

import torch
import torch.nn as nn
from torch.profiler import ProfilerActivity, profile, schedule


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--steps", type=int, default=3)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--hidden", type=int, default=512)
    parser.add_argument("--zero-grad", choices=["start_of_iteration", "before_backward"],
                        default="start_of_iteration")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args()

    torch.manual_seed(0)
    device = torch.device(args.device)
    model = nn.Sequential(nn.Linear(256, args.hidden), nn.ReLU(), nn.Linear(args.hidden, 10)).to(device)
    opt = torch.optim.Adam(model.parameters())
    data = torch.utils.data.TensorDataset(torch.randn(args.batch * (args.steps + 2), 256),
                                          torch.randint(0, 10, (args.batch * (args.steps + 2),)))
    loader = torch.utils.data.DataLoader(data, batch_size=args.batch)

    # One warmup step keeps optimizer-state creation out of the recorded window.
    with profile(activities=[ProfilerActivity.CPU], profile_memory=True, with_stack=True,
                 schedule=schedule(wait=0, warmup=1, active=args.steps, repeat=1),
                 on_trace_ready=lambda p: p.export_chrome_trace(args.out)) as prof:
        for i, (x, y) in enumerate(loader):
            if i == args.steps + 1:
                break
            x, y = x.to(device), y.to(device)
            if args.zero_grad == "start_of_iteration":
                opt.zero_grad()
            loss = nn.functional.cross_entropy(model(x), y)
            if args.zero_grad == "before_backward":
                opt.zero_grad()
            loss.backward()
            opt.step()
            prof.step()

    if device.type == "cuda":
        print(f"measured_peak_reserved_bytes={torch.cuda.max_memory_reserved(device)}")


if __name__ == "__main__":
    main()
