"""Stage orchestration over a checksummed artifact tree.

Every stage reads tensors its upstream stages wrote, validates they
exist (naming the stage to run first when missing), and writes its own
outputs deterministically: two runs with the same config produce
byte-identical artifacts at any thread count.  Timing reports go to a
separate ``reports/`` directory, which is the only non-deterministic
output.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pnmf import attacks as atk
from pnmf import classifier as cls
from pnmf import defense as dfs
from pnmf import denoiser as dn
from pnmf import diffusion as df
from pnmf import featstats as fs
from pnmf import ingest
from pnmf import metrics as mx
from pnmf import neuralkit as nk
from pnmf import nnmf
from pnmf import tensorstore as ts
from pnmf.errors import BadConfig, DependencyError
from pnmf.rng import derive_key

STAGES = (
    "ingest",
    "nnmf",
    "rank",
    "train-classifier",
    "gen-diffusion",
    "train-denoiser",
    "purify-eval",
    "attack",
    "report",
)

SPLITS = ("train", "val", "test")


@dataclass
class PipelineConfig:
    global_seed: int = 0
    threads: int = 1
    data_dir: str | None = None
    work_dir: str = "work"
    ingest_mode: str = "synthetic"  # synthetic | folders | coco
    image_side: int = 64
    synthetic: dict = field(default_factory=dict)
    coco: dict = field(default_factory=dict)
    nnmf_rank: int = 15
    nnmf_iters: int = 300
    nnmf_tol: float = 1e-6
    project_iters: int = 2000
    selection_M: int = 15
    selection_p_max: float = 0.05
    classifier_arch: str = "conv"
    classifier_lr: float = 1e-3
    classifier_batch: int = 32
    classifier_epochs: int = 60
    diffusion_T: int = 50
    diffusion_beta_1: float = 1e-4
    diffusion_beta_T: float = 0.02
    pairs_per_sample: int = 12
    val_pairs_per_sample: int = 4
    denoiser_hidden: int = 96
    denoiser_embed_dim: int = 16
    denoiser_head: str = "noise_scaled"
    denoiser_lr: float = 1e-3
    denoiser_batch: int = 32
    denoiser_epochs: int = 300
    defense_t_pur: int = 10
    defense_K: int = 8
    attack_epsilon: float = 0.10
    attack_apgd_iters: int = 100
    attack_apgd_restarts: int = 1
    attack_square_queries: int = 5000
    attack_eot_K: int = 8
    attack_mode: str = "both"  # baseline | defended | both
    attack_clamp_lo: float = -1.0
    attack_clamp_hi: float = 1.0
    seeds: dict = field(default_factory=dict)

    def validate(self):
        if self.ingest_mode not in ("synthetic", "folders", "coco"):
            raise BadConfig(f"unknown ingest mode {self.ingest_mode!r}")
        if self.attack_mode not in ("baseline", "defended", "both"):
            raise BadConfig(f"unknown attack mode {self.attack_mode!r}")
        if self.ingest_mode in ("folders", "coco") and not self.data_dir:
            raise BadConfig(f"ingest mode {self.ingest_mode!r} needs data_dir")
        if not 1 <= self.selection_M <= self.nnmf_rank:
            raise BadConfig("selection M must lie in [1, rank]")
        if self.threads < 1:
            raise BadConfig("threads must be >= 1")
        if not 1 <= self.defense_t_pur <= self.diffusion_T:
            raise BadConfig("t_pur must lie in [1, T]")

    def seed_for(self, stage: str) -> int:
        if stage in self.seeds:
            return int(self.seeds[stage])
        return derive_key(self.global_seed, "stage", stage) % (2**31)

    @classmethod
    def from_json(cls_, path) -> "PipelineConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in cls_.__dataclass_fields__.values()}
        unknown = set(raw) - known
        if unknown:
            raise BadConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = cls_(**raw)
        cfg.validate()
        return cfg


# logical artifact name -> (relative path, producing stage)
ARTIFACTS = {
    "V_train": ("data/V_train.pnmf", "ingest"),
    "V_val": ("data/V_val.pnmf", "ingest"),
    "V_test": ("data/V_test.pnmf", "ingest"),
    "labels_train": ("data/labels_train.pnmf", "ingest"),
    "labels_val": ("data/labels_val.pnmf", "ingest"),
    "labels_test": ("data/labels_test.pnmf", "ingest"),
    "counts": ("data/counts.json", "ingest"),
    "W": ("nnmf/W.pnmf", "nnmf"),
    "H_train": ("nnmf/H_train.pnmf", "nnmf"),
    "X_train": ("nnmf/X_train.pnmf", "nnmf"),
    "X_val": ("nnmf/X_val.pnmf", "nnmf"),
    "X_test": ("nnmf/X_test.pnmf", "nnmf"),
    "iter_log": ("nnmf/iter_log.csv", "nnmf"),
    "ranking": ("rank/ranking.csv", "rank"),
    "selection": ("rank/selection.json", "rank"),
    "clf_arch": ("classifier/arch.json", "train-classifier"),
    "clf_weights": ("classifier/weights.pnmf", "train-classifier"),
    "clf_train_log": ("classifier/train_log.csv", "train-classifier"),
    "schedule": ("diffusion/schedule.json", "gen-diffusion"),
    "schedule_tensor": ("diffusion/schedule.pnmf", "gen-diffusion"),
    "pairs_x0": ("diffusion/pairs_x0.pnmf", "gen-diffusion"),
    "pairs_xt": ("diffusion/pairs_xt.pnmf", "gen-diffusion"),
    "pairs_t": ("diffusion/pairs_t.pnmf", "gen-diffusion"),
    "val_pairs_x0": ("diffusion/val_pairs_x0.pnmf", "gen-diffusion"),
    "val_pairs_xt": ("diffusion/val_pairs_xt.pnmf", "gen-diffusion"),
    "val_pairs_t": ("diffusion/val_pairs_t.pnmf", "gen-diffusion"),
    "den_arch": ("denoiser/arch.json", "train-denoiser"),
    "den_weights": ("denoiser/weights.pnmf", "train-denoiser"),
    "den_meta": ("denoiser/meta.json", "train-denoiser"),
    "den_train_log": ("denoiser/train_log.csv", "train-denoiser"),
    "per_t_error": ("denoiser/per_t_error.csv", "train-denoiser"),
    "clean_probs": ("defense/clean_probs.pnmf", "purify-eval"),
    "defended_probs": ("defense/defended_probs.pnmf", "purify-eval"),
    "defense_compare": ("defense/compare.csv", "purify-eval"),
    "eval_bundle": ("defense/bundle/bundle.manifest.json", "purify-eval"),
    "attack_report_baseline": ("attacks/report_baseline.json", "attack"),
    "attack_report_defended": ("attacks/report_defended.json", "attack"),
    "X_adv_baseline": ("attacks/X_adv_baseline.pnmf", "attack"),
    "X_adv_defended": ("attacks/X_adv_defended.pnmf", "attack"),
    "robust_probs_baseline": ("attacks/robust_probs_baseline.pnmf", "attack"),
    "robust_probs_defended": ("attacks/robust_probs_defended.pnmf", "attack"),
    "metric_table_csv": ("report/metric_table.csv", "report"),
    "metric_table_json": ("report/metric_table.json", "report"),
}


@dataclass
class StageReport:
    stage: str
    seconds: float
    inputs: dict
    outputs: dict
    status: str = "ok"


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.work = Path(cfg.work_dir)

    # ---- artifact helpers -------------------------------------------------

    def path(self, name: str) -> Path:
        rel, _ = ARTIFACTS[name]
        return self.work / rel

    def require(self, *names):
        for name in names:
            rel, producer = ARTIFACTS[name]
            if not (self.work / rel).exists():
                raise DependencyError(rel, producer)

    def _write_matrix(self, name: str, m, role: str, stage: str):
        seed = self.cfg.seed_for(stage)
        return ts.write_tensor(
            m, name=name, role=role, created_by=f"{stage}:seed={seed}", path=self.path(name)
        )

    def _read_matrix(self, name: str):
        m, manifest = ts.read_tensor(self.path(name))
        return m

    def _labels(self, split: str) -> np.ndarray:
        return self._read_matrix(f"labels_{split}").ravel().astype(int)

    # ---- schedule / model reconstruction ----------------------------------

    def _schedule(self) -> df.DiffusionSchedule:
        with open(self.path("schedule")) as fh:
            meta = json.load(fh)
        return df.build_schedule(meta["T"], meta["beta_1"], meta["beta_T"])

    def _selection(self) -> fs.SelectionResult:
        return fs.load_selection_json(self.path("selection"))

    def _classifier(self) -> cls.ClassifierBundle:
        weights = self._read_matrix("clf_weights").ravel()
        net = nk.load_architecture(self.path("clf_arch"), weights)
        return cls.ClassifierBundle(net=net, selected_indices=self._selection().selected)

    def _denoiser(self) -> dn.DenoiserBundle:
        weights = self._read_matrix("den_weights").ravel()
        net = nk.load_architecture(self.path("den_arch"), weights)
        with open(self.path("den_meta")) as fh:
            meta = json.load(fh)
        return dn.DenoiserBundle(
            net=net, embed_dim=meta["embed_dim"],
            schedule_ref=meta["schedule_ref"], head=meta["head"],
        )

    def _selected(self, split: str) -> np.ndarray:
        X = self._read_matrix(f"X_{split}").astype(np.float64)
        return cls.select_features(X, self._selection().selected)

    # ---- stages ------------------------------------------------------------

    def run_stage(self, name: str) -> StageReport:
        if name not in STAGES:
            raise BadConfig(f"unknown stage {name!r}")
        started = time.perf_counter()
        impl = getattr(self, "_stage_" + name.replace("-", "_"))
        outputs = impl()
        seconds = time.perf_counter() - started
        report = StageReport(
            stage=name,
            seconds=seconds,
            inputs={},
            outputs={k: str(v) for k, v in outputs.items()},
        )
        report_path = self.work / "reports" / f"{name}.json"
        report_path.parent.mkdir(parents=True, exist_ok=True)
        with open(report_path, "w") as fh:
            json.dump(asdict(report), fh, indent=2)
            fh.write("\n")
        return report

    def run_all(self):
        return [self.run_stage(name) for name in STAGES]

    def _stage_ingest(self):
        cfg = self.cfg
        stage_seed = cfg.seed_for("ingest")
        if cfg.ingest_mode == "synthetic":
            spec = ingest.SyntheticSpec(**{"seed": stage_seed, **cfg.synthetic})
            splits = ingest.generate_synthetic(spec, threads=cfg.threads)
            skipped: list = []
        else:
            if cfg.ingest_mode == "coco":
                sorted_dir = self.work / "coco_sorted"
                for split in SPLITS:
                    entry = cfg.coco.get(split)
                    if entry is None:
                        raise BadConfig(f"coco config missing split {split!r}")
                    ingest.reorganize_coco(
                        entry["annotation_file"], entry["image_dir"], sorted_dir,
                        split=split, category_map=cfg.coco.get("category_map"),
                    )
                base = sorted_dir
            else:
                base = Path(cfg.data_dir)
            splits = {}
            skipped = []
            for split in SPLITS:
                ds, skip = ingest.load_split(base / split, cfg.image_side, split=split)
                splits[split] = ds
                skipped.extend(skip)
        outputs = {}
        counts = {}
        for split, ds in splits.items():
            outputs[f"V_{split}"] = self._write_matrix(
                f"V_{split}", ds.images, f"V_{split}", "ingest"
            ).checksum
            outputs[f"labels_{split}"] = self._write_matrix(
                f"labels_{split}", ds.labels.reshape(1, -1).astype(np.float32),
                "labels", "ingest",
            ).checksum
            counts[split] = {
                "normal": int(np.sum(ds.labels == 0)),
                "tumor": int(np.sum(ds.labels == 1)),
            }
        with open(self.path("counts"), "w") as fh:
            json.dump({"counts": counts, "skipped": skipped}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return outputs

    def _stage_nnmf(self):
        cfg = self.cfg
        self.require("V_train", "V_val", "V_test")
        V_train = self._read_matrix("V_train").astype(np.float64)
        model = nnmf.fit(
            V_train, rank=cfg.nnmf_rank, iters=cfg.nnmf_iters,
            seed=cfg.seed_for("nnmf"), tol=cfg.nnmf_tol,
        )
        outputs = {
            "W": self._write_matrix("W", model.W, "W", "nnmf").checksum,
            "H_train": self._write_matrix("H_train", model.H_train, "H", "nnmf").checksum,
        }
        H = {"train": model.H_train}
        for split in ("val", "test"):
            V = self._read_matrix(f"V_{split}").astype(np.float64)
            H[split] = nnmf.project(model.W, V, iters=cfg.project_iters)
        for split in SPLITS:
            X = nnmf.l2_normalize(H[split])
            outputs[f"X_{split}"] = self._write_matrix(
                f"X_{split}", X, f"X_{split}", "nnmf"
            ).checksum
        write_csv(
            self.path("iter_log"), ["iteration", "objective"],
            [(i, f"{obj:.10g}") for i, obj in enumerate(model.iter_log)],
        )
        return outputs

    def _stage_rank(self):
        cfg = self.cfg
        self.require("X_train", "labels_train")
        features = nnmf.FeatureSet(
            X=self._read_matrix("X_train").astype(np.float64),
            labels=self._labels("train"),
            split="train",
            normalized=True,
        )
        result = fs.rank_and_select(features, M=cfg.selection_M, p_max=cfg.selection_p_max)
        fs.write_ranking_csv(result, self.path("ranking"))
        fs.write_selection_json(result, self.path("selection"))
        return {"selection": result.selected}

    def _stage_train_classifier(self):
        cfg = self.cfg
        self.require("X_train", "X_val", "labels_train", "labels_val", "selection")
        selection = self._selection()
        tc = nk.TrainConfig(
            learning_rate=cfg.classifier_lr, batch_size=cfg.classifier_batch,
            epochs=cfg.classifier_epochs, seed=cfg.seed_for("train-classifier"),
        )
        bundle, log = cls.train_classifier(
            self._read_matrix("X_train").astype(np.float64), self._labels("train"),
            self._read_matrix("X_val").astype(np.float64), self._labels("val"),
            selection, tc, arch=cfg.classifier_arch,
        )
        nk.save_architecture(bundle.net, self.path("clf_arch"))
        out = self._write_matrix(
            "clf_weights", bundle.net.weights.reshape(1, -1), "weights", "train-classifier"
        )
        write_csv(
            self.path("clf_train_log"),
            ["epoch", "train_accuracy", "val_accuracy"],
            [
                (i, f"{tr:.6f}", f"{va:.6f}")
                for i, (tr, va) in enumerate(zip(log.epoch_train_metric, log.epoch_val_metric))
            ],
        )
        return {"clf_weights": out.checksum, "best_epoch": log.best_epoch}

    def _stage_gen_diffusion(self):
        cfg = self.cfg
        self.require("X_train", "X_val", "selection")
        schedule = df.build_schedule(cfg.diffusion_T, cfg.diffusion_beta_1, cfg.diffusion_beta_T)
        self.path("schedule").parent.mkdir(parents=True, exist_ok=True)
        with open(self.path("schedule"), "w") as fh:
            json.dump(
                {
                    "T": cfg.diffusion_T,
                    "beta_1": cfg.diffusion_beta_1,
                    "beta_T": cfg.diffusion_beta_T,
                    "checksum": schedule.checksum(),
                },
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
        sched_rows = np.stack([schedule.beta, schedule.alpha, schedule.alpha_bar])
        outputs = {
            "schedule": self._write_matrix(
                "schedule_tensor", sched_rows, "schedule", "gen-diffusion"
            ).checksum
        }
        seed = cfg.seed_for("gen-diffusion")
        for prefix, split, pps in (
            ("pairs", "train", cfg.pairs_per_sample),
            ("val_pairs", "val", cfg.val_pairs_per_sample),
        ):
            X = self._selected(split)
            pairs = df.generate_pairs(X, schedule, pps, seed=derive_key(seed, split))
            outputs[f"{prefix}_x0"] = self._write_matrix(
                f"{prefix}_x0", pairs.x0, "pairs_x0", "gen-diffusion"
            ).checksum
            outputs[f"{prefix}_xt"] = self._write_matrix(
                f"{prefix}_xt", pairs.xt, "pairs_xt", "gen-diffusion"
            ).checksum
            outputs[f"{prefix}_t"] = self._write_matrix(
                f"{prefix}_t", pairs.t.reshape(1, -1).astype(np.float32),
                "pairs_t", "gen-diffusion",
            ).checksum
        return outputs

    def _read_pairs(self, prefix: str, schedule) -> df.PairSet:
        x0 = self._read_matrix(f"{prefix}_x0").astype(np.float64)
        xt = self._read_matrix(f"{prefix}_xt").astype(np.float64)
        t = self._read_matrix(f"{prefix}_t").ravel().astype(np.int64)
        return df.PairSet(
            x0=x0, xt=xt, t=t, sample_index=np.arange(t.size),
            schedule_checksum=schedule.checksum(),
        )

    def _stage_train_denoiser(self):
        cfg = self.cfg
        self.require(
            "schedule", "pairs_x0", "pairs_xt", "pairs_t",
            "val_pairs_x0", "val_pairs_xt", "val_pairs_t",
        )
        schedule = self._schedule()
        pairs = self._read_pairs("pairs", schedule)
        val_pairs = self._read_pairs("val_pairs", schedule)
        tc = nk.TrainConfig(
            learning_rate=cfg.denoiser_lr, batch_size=cfg.denoiser_batch,
            epochs=cfg.denoiser_epochs, seed=cfg.seed_for("train-denoiser"),
        )
        bundle = dn.train_denoiser(
            pairs, val_pairs, tc, schedule,
            embed_dim=cfg.denoiser_embed_dim, hidden=cfg.denoiser_hidden,
            head=cfg.denoiser_head,
        )
        nk.save_architecture(bundle.net, self.path("den_arch"))
        out = self._write_matrix(
            "den_weights", bundle.net.weights.reshape(1, -1), "weights", "train-denoiser"
        )
        with open(self.path("den_meta"), "w") as fh:
            json.dump(
                {
                    "embed_dim": bundle.embed_dim,
                    "schedule_ref": bundle.schedule_ref,
                    "head": bundle.head,
                },
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
        log = bundle.train_log
        write_csv(
            self.path("den_train_log"), ["epoch", "train_mse", "val_mse"],
            [
                (i, f"{tr:.10g}", f"{va:.10g}")
                for i, (tr, va) in enumerate(zip(log.epoch_train_metric, log.epoch_val_metric))
            ],
        )
        ts_, noisy, den_err = dn.per_timestep_errors(bundle, val_pairs, schedule)
        write_csv(
            self.path("per_t_error"), ["t", "noisy_error", "denoised_error"],
            [
                (int(t), f"{ne:.10g}", f"{de:.10g}")
                for t, ne, de in zip(ts_, noisy, den_err)
            ],
        )
        return {"den_weights": out.checksum, "best_epoch": log.best_epoch}

    def _stage_purify_eval(self):
        cfg = self.cfg
        self.require("X_test", "labels_test", "selection", "clf_arch", "clf_weights",
                     "den_arch", "den_weights", "den_meta", "schedule")
        schedule = self._schedule()
        clf = self._classifier()
        den = self._denoiser()
        X_test = self._selected("test")
        labels = self._labels("test")
        dcfg = dfs.DefenseConfig(
            t_pur=cfg.defense_t_pur, K=cfg.defense_K, seed_base=cfg.seed_for("purify-eval")
        )
        clean_probs = cls.predict_proba(clf, X_test)
        defended_probs = dfs.predict_defended(
            X_test, dcfg, den, schedule, clf, threads=cfg.threads
        )
        outputs = {
            "clean_probs": self._write_matrix(
                "clean_probs", clean_probs, "probs", "purify-eval"
            ).checksum,
            "defended_probs": self._write_matrix(
                "defended_probs", defended_probs, "probs", "purify-eval"
            ).checksum,
        }
        clean_acc = float(np.mean(np.argmax(clean_probs, 1) == labels))
        def_acc = float(np.mean(np.argmax(defended_probs, 1) == labels))
        write_csv(
            self.path("defense_compare"),
            ["model", "accuracy"],
            [("clean", f"{clean_acc:.6f}"), ("defended", f"{def_acc:.6f}"),
             ("drop", f"{clean_acc - def_acc:.6f}")],
        )
        for tag, probs in (("clean", clean_probs), ("defended", defended_probs)):
            c = cls.confusion(labels, np.argmax(probs, 1))
            with open(self.work / "defense" / f"confusion_{tag}.json", "w") as fh:
                json.dump(c, fh, indent=2, sort_keys=True)
                fh.write("\n")
        dfs.export_eval_bundle(
            X_test, labels, defended_probs, clean_probs,
            self.work / "defense" / "bundle", clf, den, schedule, dcfg,
        )
        return outputs

    def _stage_attack(self):
        cfg = self.cfg
        self.require("X_test", "labels_test", "selection", "clf_arch", "clf_weights")
        schedule_needed = cfg.attack_mode in ("defended", "both")
        if schedule_needed:
            self.require("den_arch", "den_weights", "den_meta", "schedule")
        clf = self._classifier()
        X_test = self._selected("test")
        labels = self._labels("test")
        acfg = atk.AttackConfig(
            epsilon=cfg.attack_epsilon,
            apgd_iters=cfg.attack_apgd_iters,
            apgd_restarts=cfg.attack_apgd_restarts,
            square_queries=cfg.attack_square_queries,
            clamp_lo=cfg.attack_clamp_lo,
            clamp_hi=cfg.attack_clamp_hi,
            eot_K=cfg.attack_eot_K,
            seed=cfg.seed_for("attack"),
        )
        outputs = {}
        runs = []
        if cfg.attack_mode in ("baseline", "both"):
            runs.append(("baseline", atk.BaselineTarget(clf),
                         lambda X: cls.predict_proba(clf, X)))
        if schedule_needed:
            schedule = self._schedule()
            den = self._denoiser()
            dcfg = dfs.DefenseConfig(
                t_pur=cfg.defense_t_pur, K=cfg.defense_K,
                seed_base=cfg.seed_for("purify-eval"),
            )
            target = atk.DefendedTarget(
                clf, den, schedule, t_pur=cfg.defense_t_pur,
                K=cfg.attack_eot_K, seed=acfg.seed,
            )
            runs.append(
                ("defended", target,
                 lambda X: dfs.predict_defended(X, dcfg, den, schedule, clf,
                                                threads=cfg.threads))
            )
        for tag, target, eval_fn in runs:
            report, X_final, robust_probs = atk.run_ensemble(
                target, eval_fn, X_test, labels, acfg
            )
            outputs[f"X_adv_{tag}"] = self._write_matrix(
                f"X_adv_{tag}", X_final, "X_adv", "attack"
            ).checksum
            outputs[f"robust_probs_{tag}"] = self._write_matrix(
                f"robust_probs_{tag}", robust_probs, "probs", "attack"
            ).checksum
            payload = {
                "clean_accuracy": report.clean_accuracy,
                "per_attack_accuracy": report.per_attack_accuracy,
                "robust_accuracy": report.robust_accuracy,
                "config": report.config,
                "per_sample": report.per_sample,
            }
            with open(self.path(f"attack_report_{tag}"), "w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            write_csv(
                self.work / "attacks" / f"per_sample_{tag}.csv",
                ["index", "clean_correct", "survived_apgd", "survived_square", "survived_all"],
                [
                    (r["index"], int(r["clean_correct"]), int(r["survived_apgd"]),
                     int(r["survived_square"]), int(r["survived_all"]))
                    for r in report.per_sample
                ],
            )
            timing_path = self.work / "reports" / f"attack_timings_{tag}.json"
            timing_path.parent.mkdir(parents=True, exist_ok=True)
            with open(timing_path, "w") as fh:
                json.dump(report.timings, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return outputs

    def _stage_report(self):
        cfg = self.cfg
        self.require("clean_probs", "defended_probs", "labels_test")
        labels = self._labels("test")
        runs = {}
        for tag, name in (("Clean_Baseline", "clean_probs"), ("Clean_Defended", "defended_probs")):
            probs = self._read_matrix(name).astype(np.float64)
            runs[tag] = (probs[:, 1], np.argmax(probs, 1), labels)
        pairs = []
        if cfg.attack_mode in ("baseline", "both"):
            pairs.append(("Robust_Baseline", "robust_probs_baseline"))
        if cfg.attack_mode in ("defended", "both"):
            pairs.append(("Robust_Defended", "robust_probs_defended"))
        for tag, name in pairs:
            self.require(name)
            probs = self._read_matrix(name).astype(np.float64)
            runs[tag] = (probs[:, 1], np.argmax(probs, 1), labels)
        table = mx.assemble_table(runs)
        table.to_csv(self.path("metric_table_csv"))
        table.to_json(self.path("metric_table_json"))
        return {"rows": list(table.rows)}
