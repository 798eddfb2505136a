"""Small end-to-end CLI run shared by the CLI and acceptance tests."""
from pathlib import Path

from morphnmt.cli import main

DIMS = ["--hidden", "16", "--src-embed", "8", "--char-embed", "8", "--attention", "8", "--morph-dim", "8",
        "--readout", "16"]


def run(*argv) -> int:
    return main([str(a) for a in argv])


def run_pipeline(workdir, n_train=60, epochs=2):
    """Every subcommand once, in pipeline order.  Returns the workdir as a Path."""
    w = Path(workdir)
    wd = ["--workdir", w]
    steps = [
        ["gen-synth", *wd, "--n-train", n_train, "--n-dev", 10, "--n-test", 10, "--seed", 3],
        ["learn-bpe", *wd, "--merges", 30],
        ["build-vocab", *wd],
        ["segment", *wd],
        ["build-affixes", *wd, "--min-count", 2],
        ["pretrain-embeddings", *wd, "--epochs", 2, "--dim", 8, "--lm-hidden", 8, "--batch-size", 20],
        ["train", *wd, "--variant", "mo", "--epochs", epochs, "--batch-size", 16, *DIMS],
        ["translate", *wd, "--beam", 2, "--output", w / "test.hyp"],
        ["evaluate", "--hyp", w / "test.hyp", "--ref", w / "test.tgt"],
        ["train", *wd, "--variant", "baseline", "--epochs", epochs, "--batch-size", 16, *DIMS,
         "--output", w / "baseline.ckpt", "--report", w / "baseline.csv"],
        ["translate", *wd, "--beam", 2, "--checkpoint", w / "baseline.ckpt", "--output", w / "baseline.hyp"],
        ["bootstrap", "--sys-a", w / "test.hyp", "--sys-b", w / "baseline.hyp", "--ref", w / "test.tgt",
         "--samples", 100, "--output", w / "bootstrap.json"],
        ["export-attention", *wd, "--line", 0, "--output-prefix", w / "attention"],
        ["compare-variants", *wd, "--seeds", "1", "--allow-few-seeds", "--epochs", 1, "--batch-size", 16,
         "--lm-epochs", 1, "--merges", 30, "--min-count", 2, "--beam", 2, "--samples", 100, *DIMS,
         "--output-dir", w / "compare"],
    ]
    for argv in steps:
        code = run(*argv)
        if code != 0:
            raise AssertionError(f"{argv[0]} exited with {code}")
    return w


def artifact_bytes(workdir) -> dict[str, bytes]:
    w = Path(workdir)
    return {str(p.relative_to(w)): p.read_bytes() for p in sorted(w.rglob("*")) if p.is_file()}
