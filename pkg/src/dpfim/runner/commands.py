"""The pipeline commands: prepare, train, attack, evaluate, report, sweep.

Each command reads and writes a run directory:

    splits/        members.jsonl nonmembers.jsonl eval.jsonl pretrain.jsonl
    checkpoints/   base.ckpt baseline.ckpt dp.ckpt *_state.ckpt (resumable)
    logs/          steps_pretrain.csv steps_baseline.csv steps_dp.csv
    attack_<t>/    attack_records[ _<strategy>].csv roc[ _<strategy>].csv
    metrics_<t>.csv
    report/        loss_epsilon.svg roc.svg summary.txt
    manifest.json
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from pathlib import Path

import numpy as np

from .. import accountant as acct_mod
from ..accountant import AccountantState, epsilon_report, steps_until_budget
from ..checkpoint import load_model, load_train_state, save_model, save_train_state
from ..corpus import (
    build_splits,
    corpus_fingerprint,
    ingest_corpus,
    inject_duplicates,
    read_examples,
    write_examples,
)
from ..dp_optimizer import (
    DpConfig,
    OptimizerState,
    PretrainState,
    TrainState,
    baseline_train_steps,
    dp_steps_per_epoch,
    dp_train_steps,
    minibatch_steps_per_epoch,
    pretrain_steps,
)
from ..errors import BudgetExhaustedError, ConfigError, MissingInputError
from ..kernels import BACKEND
from ..metrics import aggregate, chrf_pp, lm_score
from ..mia import build_attack_records, score_records
from ..model import base_keys, generate_completions, init_model
from ..seeding import KNOWN_STREAMS, stream_key
from .config import ExperimentConfig
from .manifest import load_manifest, update_manifest
from .svg import Series, line_chart, roc_chart

log = logging.getLogger(__name__)

SPLIT_FILES = ("members", "nonmembers", "eval", "pretrain")
STEP_COLUMNS = ("step", "realized_batch", "mean_preclip_norm", "frac_clipped", "loss", "epsilon")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fnum(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def _run_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output.dir)


def _split_path(out: Path, name: str) -> Path:
    return out / "splits" / f"{name}.jsonl"


def _require_splits(out: Path) -> dict[str, list]:
    splits = {}
    for name in SPLIT_FILES:
        path = _split_path(out, name)
        if not path.is_file():
            raise MissingInputError(f"missing split file {path}; run `dpfim prepare` first")
        splits[name] = read_examples(path)
    return splits


# ---------------------------------------------------------------- prepare


def cmd_prepare(cfg: ExperimentConfig) -> Path:
    out = _run_dir(cfg)
    c = cfg.corpus
    docs = ingest_corpus(c.root, set(c.extensions), c.max_bytes)
    if not docs:
        raise ConfigError(f"no usable documents under {c.root!r} with extensions {c.extensions}")
    split = build_splits(
        docs, cfg.seed, c.member_frac, c.nonmember_frac, c.eval_frac,
        min_middle=c.min_middle, max_len=cfg.model.context_len,
    )
    from ..seeding import rng_for  # local to keep module imports light

    members, canary_ids = inject_duplicates(
        split.members, c.duplicate_copies, c.duplicate_fraction, rng_for(cfg.seed, "duplicates")
    )
    (out / "splits").mkdir(parents=True, exist_ok=True)
    write_examples(_split_path(out, "members"), members)
    write_examples(_split_path(out, "nonmembers"), split.nonmembers)
    write_examples(_split_path(out, "eval"), split.eval)
    write_examples(_split_path(out, "pretrain"), split.pretrain)
    fingerprint = corpus_fingerprint(docs)
    update_manifest(
        out,
        {
            "config": cfg.as_dict(),
            "kernel_backend": BACKEND,
            "seeds": {
                "master": cfg.seed,
                "streams": {name: stream_key(name) for name in KNOWN_STREAMS},
            },
            "corpus": {
                "n_documents": len(docs),
                "fingerprint": fingerprint,
                "sizes": {
                    "members_unique": len(split.members),
                    "members_with_duplicates": len(members),
                    "nonmembers": len(split.nonmembers),
                    "eval": len(split.eval),
                    "pretrain": len(split.pretrain),
                },
                "canary_ids": canary_ids,
                "duplicate_copies": c.duplicate_copies,
                "files": {name: str(_split_path(out, name)) for name in SPLIT_FILES},
            },
        },
    )
    log.info(
        "prepared %d docs -> members=%d (+%d canary copies) nonmembers=%d eval=%d pretrain=%d",
        len(docs), len(split.members), len(members) - len(split.members),
        len(split.nonmembers), len(split.eval), len(split.pretrain),
    )
    return out


# ------------------------------------------------------------------ train


def _append_rows(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not path.exists()
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(STEP_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.step, r.realized_batch, _fnum(r.mean_preclip_norm),
                    _fnum(r.frac_clipped), _fnum(r.loss), _fnum(r.epsilon),
                ]
            )


def _ensure_base(cfg: ExperimentConfig, out: Path, splits) -> Path:
    """Pre-train the base model on the public slice unless cached."""
    base_path = out / "checkpoints" / "base.ckpt"
    if base_path.is_file():
        return base_path
    params = init_model(cfg.model_config(), cfg.lora_config(), cfg.seed)
    examples = splits["pretrain"]
    pcfg = cfg.pretrain_config()
    state = PretrainState(
        params=params,
        opt=OptimizerState.zeros(sum(params.base[k].size for k in base_keys(params.cfg))),
    )
    if examples and cfg.pretrain.epochs > 0:
        total = cfg.pretrain.epochs * minibatch_steps_per_epoch(len(examples), pcfg.lot_size)
        log.info("pre-training base model: %d steps on %d examples", total, len(examples))
        pretrain_steps(state, examples, pcfg, cfg.seed, total, min_middle=cfg.corpus.min_middle)
        _append_rows(out / "logs" / "steps_pretrain.csv", state.rows)
    else:
        log.warning("pretrain slice empty or epochs=0; base model stays at random init")
    save_model(base_path, state.params, kind="base", meta={"step": state.step, "backend": BACKEND})
    update_manifest(
        out,
        {
            "pretrain": {
                "steps": state.step,
                "examples": len(examples),
                "final_loss": state.rows[-1].loss if state.rows else None,
                "checkpoint": str(base_path),
                "checkpoint_sha256": _sha256(base_path),
            }
        },
    )
    return base_path


def _resolve_delta(cfg: ExperimentConfig, n_members: int) -> float:
    return cfg.dp.delta if cfg.dp.delta > 0 else 1.0 / n_members


def cmd_train(cfg: ExperimentConfig, mode: str, resume: bool = False) -> Path:
    if mode not in ("baseline", "dp"):
        raise ConfigError(f"train mode must be baseline or dp, got {mode!r}")
    out = _run_dir(cfg)
    splits = _require_splits(out)
    members = splits["members"]
    base_path = _ensure_base(cfg, out, splits)

    state_path = out / "checkpoints" / f"{mode}_state.ckpt"
    final_path = out / "checkpoints" / f"{mode}.ckpt"
    log_path = out / "logs" / f"steps_{mode}.csv"
    dcfg = cfg.finetune_dp_config()

    if resume and state_path.is_file():
        state, _ = load_train_state(state_path)
        log.info("resuming %s training at step %d", mode, state.step)
    else:
        params, _ = load_model(base_path)
        state = TrainState(params=params, opt=OptimizerState.zeros(params.trainable_dim))
        for stale in (state_path, final_path, log_path):
            if stale.exists():
                stale.unlink()

    n = len(members)
    if mode == "dp":
        spe = dp_steps_per_epoch(n, dcfg.lot_size)
        q = dcfg.sampling_rate(n)
        delta = _resolve_delta(cfg, n)
        epsilon_max = cfg.dp.epsilon_max if cfg.dp.epsilon_max > 0 else None
        accountant = AccountantState(q=q, sigma=dcfg.noise_multiplier).accumulate(state.step)
        if epsilon_max is not None and state.step == 0:
            allowed = steps_until_budget(q, dcfg.noise_multiplier, delta, epsilon_max, accountant.orders)
            if allowed == 0:
                raise BudgetExhaustedError(
                    f"epsilon_max={epsilon_max} is below the cost of a single step "
                    f"(q={q:.4g}, sigma={dcfg.noise_multiplier}, delta={delta:.3g})"
                )
    else:
        spe = minibatch_steps_per_epoch(n, dcfg.lot_size)
        delta = epsilon_max = accountant = None

    total = cfg.train.epochs * spe
    if cfg.train.max_steps > 0:
        total = min(total, cfg.train.max_steps)
    chunk_size = cfg.train.checkpoint_every if cfg.train.checkpoint_every > 0 else total

    stopped = False
    while state.step < total and not stopped:
        n_steps = min(chunk_size, total - state.step)
        if mode == "dp":
            accountant, stopped = dp_train_steps(
                state, members, dcfg, accountant, cfg.seed, n_steps,
                epsilon_max=epsilon_max, delta=delta,
            )
        else:
            baseline_train_steps(state, members, dcfg, cfg.seed, n_steps)
        _append_rows(log_path, state.rows)
        state.rows = []
        save_train_state(state_path, mode, state, meta={"backend": BACKEND})

    save_model(
        final_path, state.params, kind=mode,
        meta={
            "step": state.step,
            "backend": BACKEND,
            "base_checkpoint_sha256": _sha256(base_path),
            "accountant": accountant.to_dict() if accountant is not None else None,
        },
    )

    rows = _read_step_log(log_path)
    examples_seen = int(sum(r["realized_batch"] for r in rows))
    info = {
        "mode": mode,
        "steps": state.step,
        "planned_steps": total,
        "stopped_by_budget": stopped,
        "examples_seen": examples_seen,
        "final_loss": rows[-1]["loss"] if rows else None,
        "checkpoint": str(final_path),
        "checkpoint_sha256": _sha256(final_path),
        "step_log": str(log_path),
    }
    if mode == "dp":
        eps_resolved = accountant.epsilon(delta)
        info.update(
            {
                "q": q,
                "delta": delta,
                "epsilon_max": epsilon_max,
                "epsilon": eps_resolved[0],
                "epsilon_best_order": eps_resolved[1],
                "epsilon_at_1e-5": accountant.epsilon(1e-5)[0],
                "epsilon_at_1_over_n": accountant.epsilon(1.0 / n)[0],
                "accountant": accountant.to_dict(),
                "epsilon_report": epsilon_report(accountant, delta),
            }
        )
    manifest = load_manifest(out)
    train_section = manifest.get("train", {})
    train_section[mode] = info
    updates = {"train": train_section}
    if mode == "dp":
        updates["paper_budget_report"] = _paper_budget_section()
    update_manifest(out, updates)
    log.info("%s training done: %d steps, checkpoint %s", mode, state.step, final_path)
    return final_path


def _paper_budget_section() -> dict:
    rows = acct_mod.paper_budget_interpretations()
    closest = min(rows, key=lambda r: abs(r["epsilon"] - 30.0))
    return {
        "sigma": acct_mod.PAPER_SIGMA,
        "lot_size": acct_mod.PAPER_LOT,
        "steps": acct_mod.PAPER_INSTANCES_SEEN // acct_mod.PAPER_LOT,
        "interpretations": rows,
        "closest_to_eps_30": {
            "population": closest["population"],
            "delta_label": closest["delta_label"],
            "epsilon": closest["epsilon"],
        },
    }


def _read_step_log(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "step": int(rec["step"]),
                    "realized_batch": int(rec["realized_batch"]),
                    "mean_preclip_norm": float(rec["mean_preclip_norm"]) if rec["mean_preclip_norm"] else None,
                    "frac_clipped": float(rec["frac_clipped"]) if rec["frac_clipped"] else None,
                    "loss": float(rec["loss"]) if rec["loss"] else None,
                    "epsilon": float(rec["epsilon"]) if rec["epsilon"] else None,
                }
            )
    return rows


# ----------------------------------------------------------------- attack


def _resolve_checkpoint(out: Path, name: str) -> Path:
    path = Path(name)
    if path.suffix == ".ckpt" and path.is_file():
        return path
    candidate = out / "checkpoints" / f"{name}.ckpt"
    if candidate.is_file():
        return candidate
    raise MissingInputError(f"checkpoint not found: {name} (looked at {candidate})")


def cmd_attack(cfg: ExperimentConfig, target: str, reference: str = "base") -> dict:
    out = _run_dir(cfg)
    splits = _require_splits(out)
    target_path = _resolve_checkpoint(out, target)
    reference_path = _resolve_checkpoint(out, reference)
    target_params, _ = load_model(target_path)
    reference_params, _ = load_model(reference_path)
    label = target_path.stem

    records, dropped = build_attack_records(
        target_params, reference_params, splits["members"], splits["nonmembers"],
        cfg.seed, cfg.attack.loss_batch,
    )
    attack_dir = out / f"attack_{label}"
    attack_dir.mkdir(parents=True, exist_ok=True)

    results = {}
    for strategy in cfg.attack.strategies:
        res = score_records(records, strategy, dropped)
        _write_records_csv(attack_dir / f"attack_records_{strategy}.csv", res.records)
        _write_roc_csv(attack_dir / f"roc_{strategy}.csv", res.curve)
        if res.canary_curve is not None:
            _write_roc_csv(attack_dir / f"roc_canary_{strategy}.csv", res.canary_curve)
        results[strategy] = res

    # the adversary's best capability is "the attack"
    primary = max(results, key=lambda s: results[s].curve.auc)
    _write_records_csv(attack_dir / "attack_records.csv", results[primary].records)
    _write_roc_csv(attack_dir / "roc.csv", results[primary].curve)

    n_member = sum(1 for r in records if r.is_member)
    section = {
        "target": str(target_path),
        "target_sha256": _sha256(target_path),
        "reference": str(reference_path),
        "reference_sha256": _sha256(reference_path),
        "n_member": n_member,
        "n_nonmember": len(records) - n_member,
        "n_dropped": dropped,
        "primary_strategy": primary,
        "strategies": {
            s: {
                "auc": res.curve.auc,
                "canary_auc": res.canary_curve.auc if res.canary_curve else None,
                "records_csv": str(attack_dir / f"attack_records_{s}.csv"),
                "roc_csv": str(attack_dir / f"roc_{s}.csv"),
            }
            for s, res in results.items()
        },
    }
    manifest = load_manifest(out)
    attack_section = manifest.get("attack", {})
    attack_section[label] = section
    update_manifest(out, {"attack": attack_section})
    for s, res in results.items():
        log.info("attack on %s [%s]: AUC=%.4f", label, s, res.curve.auc)
    return section


def _write_records_csv(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "is_member", "is_canary", "target_loss", "reference_loss", "score"])
        for r in records:
            writer.writerow(
                [
                    r.example_id, int(r.is_member), int(r.is_canary),
                    _fnum(r.target_loss), _fnum(r.reference_loss), _fnum(r.score),
                ]
            )


def _write_roc_csv(path: Path, curve) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for x, y in zip(curve.fpr, curve.tpr):
            writer.writerow([_fnum(x), _fnum(y)])


# --------------------------------------------------------------- evaluate


def cmd_evaluate(cfg: ExperimentConfig, checkpoint: str) -> dict:
    out = _run_dir(cfg)
    splits = _require_splits(out)
    eval_examples = splits["eval"]
    if not eval_examples:
        raise ConfigError("eval split is empty")
    ckpt_path = _resolve_checkpoint(out, checkpoint)
    params, _ = load_model(ckpt_path)
    label = ckpt_path.stem

    scored = [ex for ex in eval_examples if ex.middle_text]
    n_excluded = len(eval_examples) - len(scored)
    pairs = [(ex.prefix_text, ex.suffix_text) for ex in scored]
    completions = generate_completions(params, pairs, cfg.evaluate.max_new, clamp=True)

    thresholds = cfg.lm_thresholds()
    m = cfg.metrics
    rows = []
    for ex, hyp in zip(scored, completions):
        rows.append(
            (
                ex.id,
                chrf_pp(hyp, ex.middle_text, m.char_n, m.word_n, m.beta),
                lm_score(hyp, ex.middle_text, thresholds),
            )
        )
    chrf_rep = aggregate([r[1] for r in rows])
    lm_rep = aggregate([r[2] for r in rows])

    csv_path = out / f"metrics_{label}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "chrf_pp", "lm_score"])
        for ex_id, c, l in rows:
            writer.writerow([ex_id, _fnum(c), _fnum(l)])
        writer.writerow(["__mean__", _fnum(chrf_rep.mean), _fnum(lm_rep.mean)])
        writer.writerow(["__stderr__", _fnum(chrf_rep.stderr), _fnum(lm_rep.stderr)])
        writer.writerow(["__n__", chrf_rep.n, lm_rep.n])

    section = {
        "checkpoint": str(ckpt_path),
        "checkpoint_sha256": _sha256(ckpt_path),
        "n": chrf_rep.n,
        "n_excluded_empty_reference": n_excluded,
        "max_new": cfg.evaluate.max_new,
        "chrf_pp": {"mean": chrf_rep.mean, "stderr": chrf_rep.stderr},
        "lm_score": {"mean": lm_rep.mean, "stderr": lm_rep.stderr},
        "csv": str(csv_path),
    }
    manifest = load_manifest(out)
    eval_section = manifest.get("evaluate", {})
    eval_section[label] = section
    update_manifest(out, {"evaluate": eval_section})
    log.info(
        "evaluate %s: chrf_pp %.3f +/- %.3f, lm_score %.3f +/- %.3f (n=%d)",
        label, chrf_rep.mean, chrf_rep.stderr, lm_rep.mean, lm_rep.stderr, chrf_rep.n,
    )
    return section


# ----------------------------------------------------------------- report


def cmd_report(cfg: ExperimentConfig) -> Path:
    out = _run_dir(cfg)
    manifest = load_manifest(out)
    if not manifest:
        raise MissingInputError(f"no manifest in {out}; nothing to report")
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    gaps: list[str] = []

    # loss / epsilon vs examples seen
    series = []
    notes = []
    for mode, color in (("baseline", "#1f77b4"), ("dp", "#d62728")):
        rows = _read_step_log(out / "logs" / f"steps_{mode}.csv")
        if not rows:
            gaps.append(f"missing step log for {mode}")
            continue
        xs = np.cumsum([r["realized_batch"] for r in rows]).tolist()
        series.append(
            Series(
                label=f"{mode} loss",
                xs=xs,
                ys=[r["loss"] if r["loss"] is not None else math.nan for r in rows],
                color=color,
            )
        )
        if mode == "dp":
            eps = [r["epsilon"] if r["epsilon"] is not None else math.nan for r in rows]
            if any(e is not None and math.isfinite(e) for e in eps):
                series.append(
                    Series(label="dp epsilon", xs=xs, ys=eps, color="#2ca02c", axis="right", dash="5 3")
                )
            else:
                notes.append("epsilon axis omitted (no accountant values)")
    if not any(s.axis == "right" for s in series):
        notes.append("epsilon axis omitted: no private run logged")
    if series:
        (report_dir / "loss_epsilon.svg").write_text(
            line_chart(
                series,
                title="training loss and privacy budget vs examples seen",
                xlabel="examples seen",
                ylabel="loss",
                ylabel_right="epsilon",
                notes=notes,
            ),
            encoding="utf-8",
        )
    else:
        gaps.append("no step logs; loss plot skipped")

    # ROC curves (primary strategy per attacked checkpoint)
    curves = []
    for label, section in sorted(manifest.get("attack", {}).items()):
        strategy = section["primary_strategy"]
        roc_path = out / f"attack_{label}" / "roc.csv"
        if not roc_path.is_file():
            gaps.append(f"missing {roc_path}")
            continue
        fpr, tpr = [], []
        with open(roc_path, encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                fpr.append(float(rec["fpr"]))
                tpr.append(float(rec["tpr"]))
        auc = section["strategies"][strategy]["auc"]
        curves.append((f"{label} ({strategy}) AUC={auc:.3f}", fpr, tpr))
    if curves:
        (report_dir / "roc.svg").write_text(
            roc_chart(curves, title="membership inference ROC"), encoding="utf-8"
        )
    else:
        gaps.append("no attack outputs; ROC plot skipped")

    summary = _summary_text(manifest, gaps)
    (report_dir / "summary.txt").write_text(summary, encoding="utf-8")
    log.info("report written to %s (%d gaps)", report_dir, len(gaps))
    return report_dir


def _summary_text(manifest: dict, gaps: list[str]) -> str:
    lines = ["run summary", "===========", ""]
    corpus = manifest.get("corpus")
    if corpus:
        sizes = corpus["sizes"]
        lines.append(
            f"corpus: {corpus['n_documents']} docs, fingerprint {corpus['fingerprint'][:16]}..."
        )
        lines.append(
            f"splits: members={sizes['members_unique']} "
            f"(+dups -> {sizes['members_with_duplicates']}), nonmembers={sizes['nonmembers']}, "
            f"eval={sizes['eval']}, pretrain={sizes['pretrain']}"
        )
        lines.append("")
    train = manifest.get("train", {})
    for mode, info in sorted(train.items()):
        msg = f"train[{mode}]: steps={info['steps']} examples_seen={info['examples_seen']}"
        if info.get("final_loss") is not None:
            msg += f" final_loss={info['final_loss']:.4f}"
        if mode == "dp":
            msg += f" epsilon={info['epsilon']:.4g} (delta={info['delta']:.3g})"
            if info.get("stopped_by_budget"):
                msg += " [stopped by budget]"
        lines.append(msg)
    if train:
        lines.append("")
    attack = manifest.get("attack", {})
    if attack:
        lines.append("membership inference (AUC):")
        for label, section in sorted(attack.items()):
            for s, info in sorted(section["strategies"].items()):
                mark = " *" if s == section["primary_strategy"] else ""
                canary = (
                    f" canary={info['canary_auc']:.4f}" if info.get("canary_auc") is not None else ""
                )
                lines.append(f"  {label:>10} {s:>11}: {info['auc']:.4f}{canary}{mark}")
        lines.append("  (* = primary strategy, the adversary's best)")
        lines.append("")
    evaluate = manifest.get("evaluate", {})
    if evaluate:
        lines.append(f"utility on eval split ({next(iter(evaluate.values()))['n']} examples):")
        lines.append(f"  {'checkpoint':>10} {'chrf_pp':>18} {'lm_score':>18}")
        for label, info in sorted(evaluate.items()):
            lines.append(
                f"  {label:>10} {info['chrf_pp']['mean']:>10.3f} +/- {info['chrf_pp']['stderr']:<5.3f}"
                f" {info['lm_score']['mean']:>10.3f} +/- {info['lm_score']['stderr']:<5.3f}"
            )
        lines.append("")
    budget = manifest.get("paper_budget_report")
    if budget:
        lines.append(
            f"published configuration (sigma={budget['sigma']}, lot={budget['lot_size']}, "
            f"steps={budget['steps']}) under each (q, delta) reading:"
        )
        for row in budget["interpretations"]:
            lines.append(
                f"  population={row['population']:>3} delta={row['delta_label']:>6}: "
                f"epsilon={row['epsilon']:.3f} (alpha*={row['best_order']})"
            )
        c = budget["closest_to_eps_30"]
        lines.append(
            f"  closest to the published eps~30: population={c['population']}, "
            f"delta={c['delta_label']} (epsilon={c['epsilon']:.3f})"
        )
        lines.append("")
    if gaps:
        lines.append("gaps (missing inputs, report is partial):")
        lines.extend(f"  - {g}" for g in gaps)
        lines.append("")
    return "\n".join(lines)


# ------------------------------------------------------------------ sweep


def cmd_sweep(cfg: ExperimentConfig) -> list[Path]:
    """Cross-product of LoRA ranks and epsilon budgets, one run dir per cell."""
    out = _run_dir(cfg)
    cells = []
    for rank in cfg.sweep.ranks:
        for eps in cfg.sweep.epsilon_budgets:
            sub = _config_from_dict(cfg.as_dict())
            sub.lora.rank = rank
            sub.dp.epsilon_max = float(eps)
            sub.output.dir = str(out / f"sweep_r{rank}_eps{eps:g}")
            sub.validate()
            log.info("sweep cell: rank=%d epsilon_max=%g -> %s", rank, eps, sub.output.dir)
            cmd_prepare(sub)
            cmd_train(sub, "baseline")
            cmd_train(sub, "dp")
            cmd_attack(sub, "baseline")
            cmd_attack(sub, "dp")
            for ckpt in ("base", "baseline", "dp"):
                cmd_evaluate(sub, ckpt)
            cmd_report(sub)
            cells.append(Path(sub.output.dir))
    return cells


def _config_from_dict(data: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    from .config import _merge_section  # noqa: PLC0415

    errors: list[str] = []
    _merge_section(cfg, data, "", errors)
    if errors:
        raise ConfigError("internal config copy failed:\n  " + "\n  ".join(errors))
    return cfg
