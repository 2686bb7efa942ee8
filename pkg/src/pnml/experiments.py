"""Experiment orchestration: config-driven runs that reproduce the
evaluation designs at desk scale and emit CSV/JSON results.

Per-sample results are flushed to a JSONL journal as they complete, so an
interrupted run resumes by sample_id and finishes with byte-identical
outputs. All per-sample jobs are seeded from (base seed, sample_id, label),
so worker count never changes the results.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dio
from .attack import AttackSpec, fgsm_batch
from .config import ClassConfig, ExperimentConfig
from .engine import HypothesisClassSpec, pnml_predict, twice_universal
from .metrics import (SampleRecord, build_histogram, d_kl, d_lrt, log_loss,
                      max_prob_score, ratio_score, summarize, threshold_report)
from .nn import ModelParams, forward
from .training import accuracy, erm_fit, sgd_train

_SAMPLE_MIX = 0xD1B54A32D192ED03  # odd; decouples per-sample seed streams


def sample_seed(base_seed: int, sample_id: int) -> int:
    return (base_seed ^ ((sample_id + 1) * _SAMPLE_MIX)) & 0xFFFFFFFFFFFFFFFF


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_histogram_csv(path, hist) -> None:
    rows = [
        [hist.bin_edges[i], hist.bin_edges[i + 1], int(hist.counts[i]),
         hist.smoothed_pmf[i]]
        for i in range(len(hist.counts))
    ]
    write_csv(path, ["bin_lo", "bin_hi", "count", "pmf"], rows)


# ---------------------------------------------------------------------------
# dataset resolution

def load_data(cfg: ExperimentConfig) -> tuple[dio.Dataset, dio.Dataset]:
    ds = cfg.dataset
    if ds.kind == "mnist":
        train = dio.load_mnist("train", limit=ds.train_size)
        test = dio.load_mnist("test")
    elif ds.kind == "digits":
        train, test = dio.load_digits_dataset(seed=cfg.seed)
        if ds.train_size is not None:
            train = train.subset(np.arange(min(ds.train_size, train.num_samples)))
    elif ds.kind == "blobs":
        train = dio.synth_blobs(ds.blob_train_per_class, ds.blob_classes,
                                ds.blob_dim, ds.blob_separation, cfg.seed)
        test = dio.synth_blobs(ds.blob_test_per_class, ds.blob_classes,
                               ds.blob_dim, ds.blob_separation, cfg.seed + 1)
    else:
        raise ValueError(f"unknown dataset kind {ds.kind}")
    return train, test


def arch_for(cfg: ExperimentConfig, train: dio.Dataset) -> list[int]:
    return [train.features.shape[1], *cfg.arch_hidden, train.num_classes]


def train_erm(cfg: ExperimentConfig, train: dio.Dataset,
              name: str = "erm") -> ModelParams:
    """Train the initial model, caching the checkpoint under out_dir."""
    path = cfg.out_dir / f"{name}.json"
    if path.exists():
        return dio.load_checkpoint(path)
    params = erm_fit(train, arch_for(cfg, train), cfg.train)
    dio.save_checkpoint(params, path)
    return params


# ---------------------------------------------------------------------------
# per-sample evaluation with journaling and a worker pool

_WORKER: dict = {}


def _init_worker(erm, trainset, class_list, base_seed):
    _WORKER["erm"] = erm
    _WORKER["trainset"] = trainset
    _WORKER["classes"] = class_list
    _WORKER["base_seed"] = base_seed


def _spec_for(cc: ClassConfig, seed: int) -> HypothesisClassSpec:
    return HypothesisClassSpec(cc.freeze(), replace(cc.fine_tune, seed=seed))


def _eval_one(job):
    sample_id, x, y = job
    erm = _WORKER["erm"]
    trainset = _WORKER["trainset"]
    x = np.asarray(x)
    erm_q = forward(erm, x)
    rec = {
        "sample_id": int(sample_id),
        "true_label": None if y is None else int(y),
        "erm_q": erm_q.tolist(),
        "classes": {},
    }
    seed = sample_seed(_WORKER["base_seed"], sample_id)
    for cc in _WORKER["classes"]:
        if cc.trainable_layers == 0 or cc.fine_tune.epochs == 0:
            # the ERM class: no fine-tuning is possible, q collapses to the ERM
            res_p = erm_q.copy()
            q, C, gamma = res_p.copy(), 1.0, 0.0
        else:
            res = pnml_predict(erm, trainset, x, _spec_for(cc, seed))
            res_p, q, C, gamma = (res.genie_probs, res.q_pnml,
                                  res.normalization_C, res.regret_gamma)
        entry = {
            "genie_probs": np.asarray(res_p).tolist(),
            "q": np.asarray(q).tolist(),
            "C": float(C),
            "regret": float(gamma),
        }
        if y is not None:
            gp = float(res_p[y])
            entry["genie_prob"] = gp
            entry["genie_loss"] = -math.log10(max(gp, 1e-300))
        rec["classes"][cc.name] = entry
    return rec


def evaluate_samples(erm: ModelParams, trainset: dio.Dataset, X: np.ndarray,
                     labels, classes: list[ClassConfig], base_seed: int,
                     journal: Path, workers: int = 1,
                     stop_after: int | None = None) -> list[dict]:
    """Evaluate pNML for every sample; journal each result as it lands.

    `labels` may be None (unlabeled OOD probes). Returns records sorted by
    sample_id. `stop_after` aborts early after that many fresh evaluations
    (used to exercise resumption)."""
    done: dict[int, dict] = {}
    if journal.exists():
        with open(journal, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                done.setdefault(rec["sample_id"], rec)

    jobs = []
    for i in range(X.shape[0]):
        if i in done:
            continue
        y = None if labels is None else int(labels[i])
        jobs.append((i, X[i], y))

    journal.parent.mkdir(parents=True, exist_ok=True)
    fresh = 0
    with open(journal, "a", encoding="utf-8") as jf:
        def _commit(rec):
            jf.write(json.dumps(rec) + "\n")
            jf.flush()
            done[rec["sample_id"]] = rec

        if workers <= 1 or len(jobs) <= 1:
            _init_worker(erm, trainset, classes, base_seed)
            for job in jobs:
                _commit(_eval_one(job))
                fresh += 1
                if stop_after is not None and fresh >= stop_after:
                    raise InterruptedError("stopped for resumption test")
        else:
            with ProcessPoolExecutor(
                max_workers=workers, initializer=_init_worker,
                initargs=(erm, trainset, classes, base_seed),
            ) as pool:
                for rec in pool.map(_eval_one, jobs, chunksize=1):
                    _commit(rec)
                    fresh += 1
                    if stop_after is not None and fresh >= stop_after:
                        raise InterruptedError("stopped for resumption test")

    return [done[i] for i in sorted(done)]


def records_to_samples(records: list[dict], class_name: str) -> list[SampleRecord]:
    out = []
    for rec in records:
        if rec["true_label"] is None:
            continue
        c = rec["classes"][class_name]
        out.append(SampleRecord(
            sample_id=rec["sample_id"],
            true_label=rec["true_label"],
            erm_q=np.asarray(rec["erm_q"]),
            pnml_q=np.asarray(c["q"]),
            regret=c["regret"],
            genie_loss=c["genie_loss"],
        ))
    return out


# ---------------------------------------------------------------------------
# experiment entry points

_PER_SAMPLE_HEADER = [
    "sample_id", "true_label", "erm_pred", "pnml_pred", "erm_loss",
    "pnml_loss", "genie_loss", "regret", "erm_correct", "pnml_correct",
]


def _per_sample_rows(records: list[dict], class_name: str) -> list[list]:
    rows = []
    for rec in records:
        c = rec["classes"][class_name]
        erm_q = np.asarray(rec["erm_q"])
        q = np.asarray(c["q"])
        y = rec["true_label"]
        rows.append([
            rec["sample_id"], y, int(np.argmax(erm_q)), int(np.argmax(q)),
            log_loss(erm_q, y), log_loss(q, y), c["genie_loss"], c["regret"],
            int(np.argmax(erm_q)) == y, int(np.argmax(q)) == y,
        ])
    return rows


def run_pnml_eval(cfg: ExperimentConfig, workers: int = 1,
                  limit: int | None = None, run_name: str = "pnml",
                  stop_after: int | None = None) -> dict:
    """ERM vs pNML vs genie on the test subset: per-sample CSV, summary,
    regret histograms split by correctness, and the threshold report."""
    train, test = load_data(cfg)
    erm = train_erm(cfg, train)
    out = cfg.out_dir / run_name
    n = min(limit if limit is not None else cfg.dataset.test_size,
            test.num_samples)
    cc = cfg.classes[0]
    records = evaluate_samples(
        erm, train, test.features[:n], test.labels[:n], [cc], cfg.seed,
        out / "records.jsonl", workers=workers, stop_after=stop_after)

    write_csv(out / "results.csv", _PER_SAMPLE_HEADER,
              _per_sample_rows(records, cc.name))

    samples = records_to_samples(records, cc.name)
    summary = summarize(samples)
    (out / "summary.json").write_text(json.dumps(summary, indent=2),
                                      encoding="utf-8")

    gmax = math.log10(train.num_classes)
    for key, flag in (("correct", True), ("incorrect", False)):
        scores = [r.regret for r in samples if r.pnml_correct is flag]
        if scores:
            hist = build_histogram(scores, 0.0, gmax, cfg.histogram_bins,
                                   cfg.histogram_eps)
            write_histogram_csv(out / f"regret_hist_{key}.csv", hist)

    rows = threshold_report(samples, cfg.thresholds + [math.inf])
    write_csv(out / "threshold_report.csv",
              ["threshold", "retained_fraction", "num_retained", "empty",
               "erm_accuracy", "pnml_accuracy", "erm_mean_loss",
               "pnml_mean_loss"],
              [[r["threshold"], r["retained_fraction"], r["num_retained"],
                r["empty"], r["erm_accuracy"], r["pnml_accuracy"],
                r["erm_mean_loss"], r["pnml_mean_loss"]] for r in rows])
    return summary


def run_random_labels(cfg: ExperimentConfig, workers: int = 1,
                      limit: int | None = None) -> list[dict]:
    """Label-noise sweep: retrain to (ideally) perfect train accuracy per
    noise level, then evaluate pNML on the clean test subset."""
    train, test = load_data(cfg)
    out = cfg.out_dir / "random_labels"
    n = min(limit if limit is not None else cfg.dataset.test_size,
            test.num_samples)
    cc = cfg.classes[0]
    rows = []
    for pi, p in enumerate(cfg.label_noise_ps):
        noisy = dio.randomize_labels(train, p, sample_seed(cfg.seed, 7000 + pi))
        ckpt = out / f"erm_p{pi}.json"
        if ckpt.exists():
            erm = dio.load_checkpoint(ckpt)
        else:
            erm = erm_fit(noisy, arch_for(cfg, train), cfg.train)
            extra = 0
            chunk = max(1, cfg.train.epochs // 4)
            while (accuracy(erm, noisy) < 1.0
                   and extra < cfg.random_label_max_extra_epochs):
                take = min(chunk, cfg.random_label_max_extra_epochs - extra)
                more = replace(cfg.train, epochs=take,
                               seed=sample_seed(cfg.seed, 8000 + pi * 100 + extra))
                erm = sgd_train(erm, noisy, more)
                extra += take
            dio.save_checkpoint(erm, ckpt)
        train_acc = accuracy(erm, noisy)
        capped = train_acc < 1.0

        records = evaluate_samples(
            erm, noisy, test.features[:n], test.labels[:n], [cc], cfg.seed,
            out / f"records_p{pi}.jsonl", workers=workers)
        s = summarize(records_to_samples(records, cc.name))
        rows.append({
            "p": p, "train_accuracy": train_acc, "capped": capped,
            "erm_accuracy": s["erm_accuracy"], "pnml_accuracy": s["pnml_accuracy"],
            "erm_loss_mean": s["erm_loss_mean"],
            "pnml_loss_mean": s["pnml_loss_mean"],
            "regret_mean": s["regret_mean"],
        })
        if capped:
            print(f"warning: p={p} reached the epoch cap at train "
                  f"accuracy {train_acc:.3f}")
    write_csv(out / "random_labels.csv",
              ["p", "train_accuracy", "capped", "erm_accuracy",
               "pnml_accuracy", "erm_loss_mean", "pnml_loss_mean",
               "regret_mean"],
              [[r["p"], r["train_accuracy"], r["capped"], r["erm_accuracy"],
                r["pnml_accuracy"], r["erm_loss_mean"], r["pnml_loss_mean"],
                r["regret_mean"]] for r in rows])
    return rows


def _score_triplet(records: list[dict], class_name: str):
    regret = [r["classes"][class_name]["regret"] for r in records]
    maxp = [max_prob_score(np.asarray(r["erm_q"])) for r in records]
    ratio = [ratio_score(np.asarray(r["erm_q"])) for r in records]
    return {"regret": regret, "max_prob": maxp, "ratio": ratio}


def separation_table(in_scores: dict, out_scores: dict, gmax: float,
                     bins: int, eps: float) -> list[dict]:
    """D_KL / D_LRT per scoring method between in- and out-distribution
    score histograms (natural-log units)."""
    ranges = {"regret": (0.0, gmax), "max_prob": (0.0, 1.0),
              "ratio": (0.0, 1.0)}
    rows = []
    for method, (lo, hi) in ranges.items():
        h_in = build_histogram(in_scores[method], lo, hi, bins, eps)
        h_out = build_histogram(out_scores[method], lo, hi, bins, eps)
        lam, dist = d_lrt(h_in, h_out)
        rows.append({"method": method, "d_kl": d_kl(h_in, h_out),
                     "d_lrt": dist, "lambda_star": lam,
                     "hist_in": h_in, "hist_out": h_out})
    return rows


def run_ood_eval(cfg: ExperimentConfig, workers: int = 1,
                 limit: int | None = None) -> list[dict]:
    """Score separation between the in-distribution test subset and uniform
    Gaussian-noise probes for regret / max-prob / probability-ratio."""
    train, test = load_data(cfg)
    erm = train_erm(cfg, train)
    out = cfg.out_dir / "ood"
    n = min(limit if limit is not None else cfg.dataset.test_size,
            test.num_samples)
    cc = cfg.classes[0]
    in_records = evaluate_samples(
        erm, train, test.features[:n], test.labels[:n], [cc], cfg.seed,
        out / "records_in.jsonl", workers=workers)
    noise = dio.gaussian_noise_inputs(cfg.noise_inputs,
                                      train.features.shape[1],
                                      sample_seed(cfg.seed, 5000))
    out_records = evaluate_samples(
        erm, train, noise, None, [cc], cfg.seed + 1,
        out / "records_noise.jsonl", workers=workers)

    in_scores = _score_triplet(in_records, cc.name)
    out_scores = _score_triplet(out_records, cc.name)
    gmax = math.log10(train.num_classes)
    rows = separation_table(in_scores, out_scores, gmax,
                            cfg.histogram_bins, cfg.histogram_eps)
    for r in rows:
        write_histogram_csv(out / f"hist_in_{r['method']}.csv", r["hist_in"])
        write_histogram_csv(out / f"hist_out_{r['method']}.csv", r["hist_out"])
    write_csv(out / "ood_metrics.csv",
              ["method", "d_kl_nats", "d_lrt_nats", "lambda_star"],
              [[r["method"], r["d_kl"], r["d_lrt"], r["lambda_star"]]
               for r in rows])
    scores_rows = []
    for tag, recs, sc in (("in", in_records, in_scores),
                          ("noise", out_records, out_scores)):
        for i, rec in enumerate(recs):
            scores_rows.append([tag, rec["sample_id"], sc["regret"][i],
                                sc["max_prob"][i], sc["ratio"][i]])
    write_csv(out / "ood_scores.csv",
              ["set", "sample_id", "regret", "max_prob", "ratio"], scores_rows)
    return [{k: r[k] for k in ("method", "d_kl", "d_lrt", "lambda_star")}
            for r in rows]


def run_adv_eval(cfg: ExperimentConfig, workers: int = 1,
                 limit: int | None = None) -> list[dict]:
    """FGSM sweep in the black-box setting: a separate source model crafts
    the perturbations; pNML is evaluated per attack strength."""
    train, test = load_data(cfg)
    erm = train_erm(cfg, train)
    out = cfg.out_dir / "adv"
    n = min(limit if limit is not None else cfg.dataset.test_size,
            test.num_samples)
    cc = cfg.classes[0]

    src_path = out / "source.json"
    if src_path.exists():
        source = dio.load_checkpoint(src_path)
    else:
        src_arch = [train.features.shape[1], *cfg.source_hidden,
                    train.num_classes]
        src_hyper = replace(cfg.train, seed=cfg.seed + cfg.source_seed_offset)
        source = erm_fit(train, src_arch, src_hyper)
        dio.save_checkpoint(source, src_path)

    X, y = test.features[:n], test.labels[:n]
    rows = []
    clean_regret = None
    gmax = math.log10(train.num_classes)
    for ei, eps in enumerate(cfg.epsilons):
        spec = AttackSpec(epsilon=eps, source_model=source)
        X_adv = X if eps == 0.0 else fgsm_batch(spec, X, y)
        records = evaluate_samples(
            erm, train, X_adv, y, [cc], cfg.seed,
            out / f"records_eps{ei}.jsonl", workers=workers)
        samples = records_to_samples(records, cc.name)
        s = summarize(samples)
        regrets = [r.regret for r in samples]
        row = {"epsilon": eps, **{k: s[k] for k in (
            "erm_accuracy", "pnml_accuracy", "erm_loss_mean",
            "pnml_loss_mean", "genie_loss_mean", "regret_mean")}}
        if eps == 0.0:
            clean_regret = regrets
            row["d_kl_vs_clean"] = 0.0
            row["d_lrt_vs_clean"] = 0.0
        else:
            h_clean = build_histogram(clean_regret, 0.0, gmax,
                                      cfg.histogram_bins, cfg.histogram_eps)
            h_adv = build_histogram(regrets, 0.0, gmax,
                                    cfg.histogram_bins, cfg.histogram_eps)
            row["d_kl_vs_clean"] = d_kl(h_clean, h_adv)
            row["d_lrt_vs_clean"] = d_lrt(h_clean, h_adv)[1]
        rows.append(row)
        write_csv(out / f"results_eps{ei}.csv", _PER_SAMPLE_HEADER,
                  _per_sample_rows(records, cc.name))
    write_csv(out / "adv.csv",
              ["epsilon", "erm_accuracy", "pnml_accuracy", "erm_loss_mean",
               "pnml_loss_mean", "genie_loss_mean", "regret_mean",
               "d_kl_vs_clean", "d_lrt_vs_clean"],
              [[r["epsilon"], r["erm_accuracy"], r["pnml_accuracy"],
                r["erm_loss_mean"], r["pnml_loss_mean"], r["genie_loss_mean"],
                r["regret_mean"], r["d_kl_vs_clean"], r["d_lrt_vs_clean"]]
               for r in rows])
    return rows


def run_twice_universal(cfg: ExperimentConfig, workers: int = 1,
                        limit: int | None = None) -> dict:
    """Evaluate every hypothesis class per sample and combine them with the
    per-label max rule; per-class and combined accuracy/loss."""
    train, test = load_data(cfg)
    erm = train_erm(cfg, train)
    out = cfg.out_dir / "twice_universal"
    n = min(limit if limit is not None else cfg.dataset.test_size,
            test.num_samples)
    records = evaluate_samples(
        erm, train, test.features[:n], test.labels[:n], cfg.classes, cfg.seed,
        out / "records.jsonl", workers=workers)

    names = [cc.name for cc in cfg.classes]
    K = len(names)
    per_sample_rows = []
    class_losses = {name: [] for name in names}
    class_correct = {name: [] for name in names}
    tu_losses, tu_correct = [], []
    for rec in records:
        y = rec["true_label"]
        qs = [np.asarray(rec["classes"][name]["q"]) for name in names]
        q_tu, c_tu = twice_universal(qs)
        row = [rec["sample_id"], y]
        for name, q in zip(names, qs):
            l = log_loss(q, y)
            class_losses[name].append(l)
            class_correct[name].append(int(np.argmax(q)) == y)
            row.append(l)
        tu_l = log_loss(q_tu, y)
        tu_losses.append(tu_l)
        tu_correct.append(int(np.argmax(q_tu)) == y)
        row += [tu_l, c_tu]
        per_sample_rows.append(row)

    write_csv(out / "results.csv",
              ["sample_id", "true_label",
               *[f"loss_{name}" for name in names], "loss_tu", "C_tu"],
              per_sample_rows)
    summary_rows = []
    for name in names:
        summary_rows.append([name, float(np.mean(class_correct[name])),
                             float(np.mean(class_losses[name]))])
    summary_rows.append(["twice_universal", float(np.mean(tu_correct)),
                         float(np.mean(tu_losses))])
    write_csv(out / "summary.csv", ["model", "accuracy", "mean_loss"],
              summary_rows)
    return {
        "classes": {name: {"accuracy": float(np.mean(class_correct[name])),
                           "mean_loss": float(np.mean(class_losses[name]))}
                    for name in names},
        "twice_universal": {"accuracy": float(np.mean(tu_correct)),
                            "mean_loss": float(np.mean(tu_losses)),
                            "K": K},
    }
