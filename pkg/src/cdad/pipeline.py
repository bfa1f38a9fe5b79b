"""Pipeline stages: prepare data, build the multi-graph, train, detect,
evaluate. Each stage reads upstream artifacts from the run directory and
writes its own, together with the resolved config and content hashes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import detector, graphbuild, ingest, metrics, mgda, synth
from .config import RunConfig, file_hash, save_config
from .ingest import NETWORK, PHYSICAL, DomainSeries, WindowedDataset
from .model import CrossDomainModel, ModelConfig, load_model, save_model


class MissingArtifactError(FileNotFoundError):
    pass


def _require(path, what: str):
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing upstream artifact: {what} ({path})")
    return path


@dataclass
class PreparedData:
    train: dict[str, WindowedDataset]
    val: dict[str, WindowedDataset]
    test: dict[str, WindowedDataset]
    norm_train: dict[str, DomainSeries]
    stats: dict[str, ingest.NormStats]
    test_timestamps: np.ndarray
    test_truth: np.ndarray


# ----------------------------------------------------------------- stages


def stage_synth(cfg: RunConfig, synth_cfg: synth.SynthConfig) -> dict[str, str]:
    out = synth.generate(synth_cfg)
    paths = synth.write_csvs(out, cfg.out_dir)
    save_config(cfg, os.path.join(cfg.out_dir, "config.resolved"))
    return paths


def stage_extract(cfg: RunConfig) -> dict[str, str]:
    """Network CSV logs -> per-node feature series npz (train and test)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    node_map = ingest.load_node_map(_require(cfg.node_map, "node map"))
    num_nodes = max(node_map.values()) + 1
    paths = {}
    for split, net_path, phys_path in (
        ("train", cfg.network_train, cfg.physical_train),
        ("test", cfg.network_test, cfg.physical_test),
    ):
        table = ingest.load_physical(_require(phys_path, f"{split} physical table"))
        log = ingest.load_network(_require(net_path, f"{split} network log"))
        series, skipped = ingest.extract_network_features(
            log, node_map, table.span, num_nodes, labels=table.labels
        )
        out_path = os.path.join(cfg.out_dir, f"net_{split}.npz")
        np.savez(out_path, data=series.data, labels=series.labels, skipped=skipped,
                 t0=table.span[0])
        paths[split] = out_path
    save_config(cfg, os.path.join(cfg.out_dir, "config.resolved"))
    return paths


def _load_net_series(path) -> tuple[DomainSeries, int]:
    z = np.load(path)
    return DomainSeries(NETWORK, z["data"], z["labels"]), int(z["t0"])


def load_series(cfg: RunConfig) -> dict:
    """All four raw series (physical/network x train/test) for later stages."""
    phys_train = ingest.load_physical(_require(cfg.physical_train, "train physical table"))
    phys_test = ingest.load_physical(_require(cfg.physical_test, "test physical table"))
    net_train, _ = _load_net_series(_require(os.path.join(cfg.out_dir, "net_train.npz"),
                                             "extracted train network features"))
    net_test, _ = _load_net_series(_require(os.path.join(cfg.out_dir, "net_test.npz"),
                                            "extracted test network features"))
    return {
        ("physical", "train"): ingest.physical_series(phys_train),
        ("physical", "test"): ingest.physical_series(phys_test),
        ("network", "train"): net_train,
        ("network", "test"): net_test,
        "test_t0": phys_test.span[0],
    }


def prepare(cfg: RunConfig, series: dict | None = None) -> PreparedData:
    """Normalize against the training span, window, and split train/val."""
    series = series or load_series(cfg)
    domains = cfg.domain_list()
    train, val, test, norm_train, stats = {}, {}, {}, {}, {}
    test_timestamps = None
    test_truth = None
    for d in domains:
        tr, te = series[(d, "train")], series[(d, "test")]
        st = ingest.fit_normalizer(tr)
        tr_n = ingest.apply_normalizer(tr, st)
        te_n = ingest.apply_normalizer(te, st)
        stats[d] = st
        norm_train[d] = tr_n
        ds = ingest.make_windows(tr_n, cfg.window)
        train[d], val[d] = ingest.split_train_validation(ds, cfg.val_fraction)
        test[d] = ingest.make_windows(te_n, cfg.window, t0=series["test_t0"])
        test_timestamps = test[d].target_timestamps
        test_truth = test[d].target_labels
    return PreparedData(train, val, test, norm_train, stats, test_timestamps, test_truth)


def stage_graph(cfg: RunConfig, prepared: PreparedData | None = None) -> graphbuild.MultiGraph:
    prepared = prepared or prepare(cfg)
    graphs, embeddings = {}, {}
    for d in cfg.domain_list():
        g, emb = graphbuild.build_domain_graph(prepared.norm_train[d], cfg.topk)
        graphs[d] = g
        embeddings[d] = emb
    mg = graphbuild.assemble_multigraph(graphs, embeddings)
    os.makedirs(cfg.out_dir, exist_ok=True)
    edge_path = os.path.join(cfg.out_dir, "edges.csv")
    graphbuild.save_edge_lists(edge_path, mg)
    with open(os.path.join(cfg.out_dir, "graph.json"), "w") as f:
        json.dump(
            {"num_nodes": mg.num_nodes, "domains": cfg.domain_list(),
             "edges_hash": file_hash(edge_path), "config": cfg.fingerprint()},
            f, indent=2,
        )
    save_config(cfg, os.path.join(cfg.out_dir, "config.resolved"))
    return mg


def load_graph(cfg: RunConfig, num_nodes: int) -> dict[str, np.ndarray]:
    edge_path = _require(os.path.join(cfg.out_dir, "edges.csv"), "edge lists")
    graphs = graphbuild.load_edge_lists(edge_path, num_nodes)
    return {d: g.adjacency for d, g in graphs.items()}


def _adjacencies(cfg, prepared, mg: graphbuild.MultiGraph | None):
    num_nodes = next(iter(prepared.train.values())).inputs.shape[1]
    if mg is not None:
        adj = {d: mg.graphs[d].adjacency for d in cfg.domain_list()}
    else:
        adj = load_graph(cfg, num_nodes)
        adj = {d: adj[d] for d in cfg.domain_list()}
    union = np.zeros((num_nodes, num_nodes))
    for a in adj.values():
        union = np.maximum(union, a)
    return adj, union


def stage_train(
    cfg: RunConfig,
    prepared: PreparedData | None = None,
    mg: graphbuild.MultiGraph | None = None,
) -> tuple[CrossDomainModel, mgda.TrainResult]:
    prepared = prepared or prepare(cfg)
    adjacencies, union = _adjacencies(cfg, prepared, mg)
    domains = cfg.domain_list()
    num_nodes = next(iter(prepared.train.values())).inputs.shape[1]
    channels = {d: prepared.train[d].inputs.shape[2] for d in domains}
    model = CrossDomainModel(
        ModelConfig(
            num_nodes=num_nodes,
            window=cfg.window,
            embed_dim=cfg.embed_dim,
            depth=cfg.depth,
            dropout=cfg.dropout,
            attention=cfg.attention,
            head_hidden=cfg.head_hidden,
            channels=channels,
            seed=cfg.seed,
        )
    )
    tcfg = mgda.TrainConfig(
        lr_physical=cfg.lr1,
        lr_network=cfg.lr2,
        lr_shared=cfg.lr3,
        momentum=cfg.momentum,
        batch_size=cfg.batch_size,
        max_epochs=cfg.epochs,
        patience=cfg.patience,
        static_weights=cfg.static_weight_pair(),
    )
    result = mgda.train(model, prepared.train, prepared.val, adjacencies, union, tcfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    edge_path = os.path.join(cfg.out_dir, "edges.csv")
    meta = {
        "topk": cfg.topk,
        "config": cfg.fingerprint(),
        "graph_hash": file_hash(edge_path) if os.path.exists(edge_path) else "",
    }
    save_model(os.path.join(cfg.out_dir, "checkpoint.txt"), model, meta)
    mgda.write_trace(os.path.join(cfg.out_dir, "trace.csv"), result.trace)
    save_config(cfg, os.path.join(cfg.out_dir, "config.resolved"))
    return model, result


def stage_detect(
    cfg: RunConfig,
    prepared: PreparedData | None = None,
    model: CrossDomainModel | None = None,
    mg: graphbuild.MultiGraph | None = None,
):
    prepared = prepared or prepare(cfg)
    if model is None:
        model, _ = load_model(_require(os.path.join(cfg.out_dir, "checkpoint.txt"), "checkpoint"))
    adjacencies, union = _adjacencies(cfg, prepared, mg)
    domains = cfg.domain_list()

    val_preds = mgda.predict(model, prepared.val, adjacencies, union)
    val_scores, stats = {}, {}
    for d in domains:
        errors = np.abs(val_preds[d] - prepared.val[d].targets)
        stats[d] = detector.robust_error_stats(errors)
        val_scores[d] = detector.score(val_preds[d], prepared.val[d].targets, stats[d], d)
    thresholds = detector.calibrate(val_scores)

    test_preds = mgda.predict(model, prepared.test, adjacencies, union)
    test_scores = {
        d: detector.score(test_preds[d], prepared.test[d].targets, stats[d], d) for d in domains
    }
    result = detector.detect(
        test_scores, thresholds, truth=prepared.test_truth, fused=cfg.fused_score
    )
    detector.write_scores_csv(
        os.path.join(cfg.out_dir, "scores.csv"),
        prepared.test_timestamps, test_scores, thresholds, result,
    )
    with open(os.path.join(cfg.out_dir, "scores.meta.json"), "w") as f:
        json.dump({"config": cfg.fingerprint()}, f)
    return test_scores, thresholds, result


def stage_eval(cfg: RunConfig, run_id: str = "run") -> metrics.MetricReport:
    scores_path = _require(os.path.join(cfg.out_dir, "scores.csv"), "score CSV")
    meta_path = os.path.join(cfg.out_dir, "scores.meta.json")
    if os.path.exists(meta_path):
        with open(meta_path) as f:
            recorded = json.load(f).get("config")
        if recorded and recorded != cfg.fingerprint():
            raise ValueError(
                f"score artifact was produced by config {recorded}, "
                f"current config is {cfg.fingerprint()}"
            )
    pred, truth = [], []
    with open(scores_path) as f:
        header = f.readline()
        for line in f:
            cells = line.strip().split(",")
            pred.append(int(cells[5]))
            truth.append(int(cells[6]))
    report = metrics.compute_metrics(
        metrics.confusion(pred, truth), run_id=run_id, fingerprint=cfg.fingerprint()
    )
    with open(os.path.join(cfg.out_dir, "report.csv"), "w") as f:
        f.write(metrics.emit_report([report], mode="csv"))
    save_config(cfg, os.path.join(cfg.out_dir, "config.resolved"))
    return report


def run_pipeline(cfg: RunConfig, run_id: str = "run") -> metrics.MetricReport:
    """extract -> graph -> train -> detect -> eval in one process."""
    stage_extract(cfg)
    prepared = prepare(cfg)
    mg = stage_graph(cfg, prepared)
    model, _ = stage_train(cfg, prepared, mg)
    stage_detect(cfg, prepared, model, mg)
    return stage_eval(cfg, run_id=run_id)
