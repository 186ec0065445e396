"""teacher 预训练、双重聚焦蒸馏与 student 微调。

流程（严格顺序）：
1. pretrain_teacher：源码图 CSG 上做交叉熵监督训练
2. distill：teacher 冻结，student（字节码 CFG）对齐 teacher 的图向量（全局）与对齐节点的状态（局部）
3. finetune：丢弃 teacher，student + 分类头在 CFG 上做交叉熵训练

关键逻辑：
- 批损失 = 批内各样本损失的平均
- 对齐字典为空的样本局部损失记 0，并计入 skipped_local
- teacher 输出在蒸馏期间不变，只前向一次并缓存
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from exdos.config.train_config import TrainConfig
from exdos.nn import autodiff as ad
from exdos.nn.autodiff import Tensor
from exdos.nn.checkpoint import params_digest
from exdos.nn.dagn import DagnConfig, DagnParams, GraphEmbedding, encode, head_logits, init_params, predict
from exdos.nn.optim import Adam
from exdos.services.alignment_service import AlignmentDictionary, build_dictionary, filter_dictionary
from exdos.services.ast_document import ingest_ast
from exdos.services.cfg_builder_service import build_cfg
from exdos.services.contract_graph import ContractGraph
from exdos.services.csg_builder_service import build_contract_csg
from exdos.services.dataset_service import ManifestEntry
from exdos.services.evm_disasm_service import BasicBlock, disassemble
from exdos.services.featurizer_service import FEATURE_DIM, NodeFeatures, featurize_bytecode, featurize_source
from exdos.services.opcode_table import OpcodeTable
from exdos.services.pattern_engine_service import (
    PatternAnnotation,
    match_bytecode_patterns,
    match_source_patterns,
    resolve_pattern_mask,
)
from exdos.utils.errors import ShapeError, TrainingError


logger = logging.getLogger(__name__)

DISTILL_GROUPS = {
    "both": ("encoder", "pooling"),
    "gnn_only": ("encoder",),
    "agp_only": ("pooling",),
    "off": (),
}


@dataclass(frozen=True)
class GraphInput:
    graph: ContractGraph
    features: NodeFeatures

    def __post_init__(self) -> None:
        if self.features.rows != self.graph.node_count:
            raise ShapeError("graph input (feature rows vs nodes)", (self.features.rows,), (self.graph.node_count,))


@dataclass(frozen=True)
class PairedSample:
    contract_id: str
    vulnerability: str
    label: int
    bytecode: GraphInput
    source: GraphInput | None = None
    alignment: AlignmentDictionary = field(default_factory=lambda: AlignmentDictionary(contract_id=""))
    source_patterns: tuple[PatternAnnotation, ...] = ()
    bytecode_patterns: tuple[PatternAnnotation, ...] = ()

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise TrainingError(f"label must be 0 or 1, got {self.label}")
        if self.alignment.pairs:
            if self.source is None:
                raise TrainingError(f"{self.contract_id}: alignment pairs without a source graph")
            n_src = self.source.graph.node_count
            n_byt = self.bytecode.graph.node_count
            for pair in self.alignment.pairs:
                if not (0 <= pair.source_node < n_src and 0 <= pair.bytecode_node < n_byt):
                    raise TrainingError(f"{self.contract_id}: alignment pair {pair} is out of range")

    @property
    def onehot(self) -> np.ndarray:
        y = np.zeros((1, 2))
        y[0, self.label] = 1.0
        return y


def bytecode_input(
    bytecode_hex: str,
    *,
    contract_id: str = "",
    table: OpcodeTable | None = None,
) -> tuple[GraphInput, list[BasicBlock]]:
    blocks = disassemble(bytecode_hex, table=table)
    graph = build_cfg(blocks, contract_id=contract_id)
    return GraphInput(graph, featurize_bytecode(blocks, graph)), blocks


def build_paired_sample(
    entry: ManifestEntry,
    config: TrainConfig,
    *,
    table: OpcodeTable | None = None,
) -> PairedSample:
    """manifest 条目 -> PairedSample：两侧建图、提特征、匹配该漏洞的子模式并按掩码过滤对齐字典。"""

    cid = entry.contract_id
    byt, blocks = bytecode_input(entry.read_bytecode(), contract_id=cid, table=table)
    byt_ann = [
        a
        for a in match_bytecode_patterns(byt.graph, blocks, radius=config.pattern_radius, contract_id=cid)
        if a.vulnerability == entry.vulnerability
    ]

    source: GraphInput | None = None
    src_ann: list[PatternAnnotation] = []
    dictionary = AlignmentDictionary(contract_id=cid)
    if entry.ast_path is not None:
        doc = ingest_ast(entry.read_ast())
        csg = build_contract_csg(doc)
        source = GraphInput(csg, featurize_source(csg, doc))
        src_ann = [
            a for a in match_source_patterns(csg, doc, contract_id=cid) if a.vulnerability == entry.vulnerability
        ]
        mask = resolve_pattern_mask(config.pattern_mask, entry.vulnerability)
        dictionary = filter_dictionary(build_dictionary(src_ann, byt_ann, contract_id=cid), mask)

    return PairedSample(
        contract_id=cid,
        vulnerability=entry.vulnerability,
        label=entry.target,
        bytecode=byt,
        source=source,
        alignment=dictionary,
        source_patterns=tuple(src_ann),
        bytecode_patterns=tuple(byt_ann),
    )


# ---------------------------------------------------------------------------
# 损失
# ---------------------------------------------------------------------------


def global_loss(teacher_emb: GraphEmbedding, student_emb: GraphEmbedding) -> Tensor:
    """||g_s - g_f||²，不做归一化。"""

    return ad.squared_l2_diff(teacher_emb.graph_vector, student_emb.graph_vector)


def local_loss(teacher_emb: GraphEmbedding, student_emb: GraphEmbedding, dictionary: AlignmentDictionary) -> Tensor:
    """对齐节点对的平均平方距离；空字典返回常数 0。"""

    if dictionary.is_empty:
        return Tensor(0.0)
    teacher_rows = ad.index_rows(teacher_emb.node_states, dictionary.source_indices())
    student_rows = ad.index_rows(student_emb.node_states, dictionary.bytecode_indices())
    return ad.scale(ad.squared_l2_diff(teacher_rows, student_rows), 1.0 / len(dictionary))


def distill_loss(
    teacher_emb: GraphEmbedding,
    student_emb: GraphEmbedding,
    dictionary: AlignmentDictionary,
    *,
    loss_mix: str = "both",
) -> Tensor:
    """L_Dist = L_Global + L_Local（不加权）；loss_mix 可只保留其中一项。"""

    if loss_mix == "global_only":
        return global_loss(teacher_emb, student_emb)
    if loss_mix == "local_only":
        return local_loss(teacher_emb, student_emb, dictionary)
    if loss_mix == "both":
        return ad.add(global_loss(teacher_emb, student_emb), local_loss(teacher_emb, student_emb, dictionary))
    raise TrainingError(f"loss_mix {loss_mix!r} has no distillation loss")


def supervised_loss(graph_input: GraphInput, params: DagnParams, onehot: np.ndarray) -> Tensor:
    emb = encode(graph_input.graph, graph_input.features, params)
    return ad.cross_entropy_with_softmax(head_logits(emb.graph_vector, params), onehot)


# ---------------------------------------------------------------------------
# 训练循环
# ---------------------------------------------------------------------------


@dataclass
class TrainingHistory:
    phase: str
    epoch_losses: list[float] = field(default_factory=list)
    skipped_local: int = 0
    trainable: list[str] = field(default_factory=list)
    teacher_digest: str | None = None

    @property
    def final_loss(self) -> float | None:
        return self.epoch_losses[-1] if self.epoch_losses else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "phase": self.phase,
            "epochs": len(self.epoch_losses),
            "epoch_losses": [round(x, 10) for x in self.epoch_losses],
            "skipped_local": self.skipped_local,
            "trainable": list(self.trainable),
            "teacher_digest": self.teacher_digest,
        }


def model_config(config: TrainConfig) -> DagnConfig:
    return DagnConfig(
        d_in=FEATURE_DIM,
        hidden_dim=config.hidden_dim,
        num_layers=config.num_layers,
        relation_dim=config.relation_dim,
        head_hidden=config.head_hidden,
        pooling=config.pooling_variant,
    )


def _run_epochs(
    *,
    phase: str,
    samples: Sequence[PairedSample],
    params: DagnParams,
    groups: Sequence[str],
    config: TrainConfig,
    epochs: int,
    seed: int,
    sample_loss: Callable[[PairedSample], Tensor],
) -> TrainingHistory:
    optimizer = Adam(params, lr=config.learning_rate, groups=groups)
    history = TrainingHistory(phase=phase, trainable=optimizer.trainable)
    rng = np.random.default_rng(seed)
    order = np.arange(len(samples))
    for epoch in range(epochs):
        rng.shuffle(order)
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            losses = [sample_loss(s) for s in batch]
            batch_loss = losses[0]
            for loss in losses[1:]:
                batch_loss = ad.add(batch_loss, loss)
            batch_loss = ad.scale(batch_loss, 1.0 / len(batch))
            if batch_loss.requires_grad:
                batch_loss.backward()
                optimizer.step()
            total += batch_loss.item() * len(batch)
            count += len(batch)
        history.epoch_losses.append(total / max(count, 1))
        logger.debug("epoch finished | phase=%s | epoch=%s | loss=%.6f", phase, epoch, history.epoch_losses[-1])
    logger.info(
        "training phase finished | phase=%s | epochs=%s | samples=%s | final_loss=%s",
        phase,
        epochs,
        len(samples),
        history.final_loss,
    )
    return history


def pretrain_teacher(
    samples: Sequence[PairedSample],
    config: TrainConfig,
    *,
    init: DagnParams | None = None,
) -> tuple[DagnParams, TrainingHistory]:
    if not samples:
        raise TrainingError("cannot pretrain the teacher on an empty training set")
    missing = [s.contract_id for s in samples if s.source is None]
    if missing:
        raise TrainingError(f"teacher pretraining needs source graphs; missing for {missing[:5]}")
    teacher = init.clone() if init is not None else init_params(model_config(config), seed=config.seed)

    def loss(sample: PairedSample) -> Tensor:
        assert sample.source is not None
        return supervised_loss(sample.source, teacher, sample.onehot)

    history = _run_epochs(
        phase="teacher",
        samples=samples,
        params=teacher,
        groups=("encoder", "pooling", "head"),
        config=config,
        epochs=config.teacher_epochs,
        seed=config.seed,
        sample_loss=loss,
    )
    return teacher, history


def init_student(config: TrainConfig) -> DagnParams:
    return init_params(model_config(config), seed=config.seed + 1)


def distill(
    teacher: DagnParams,
    student_init: DagnParams,
    samples: Sequence[PairedSample],
    config: TrainConfig,
) -> tuple[DagnParams, TrainingHistory]:
    """teacher 冻结（前后 digest 一致），按 distill_target 选择 student 的可训练参数组。"""

    if teacher.config.hidden_dim != student_init.config.hidden_dim:
        raise ShapeError(
            "distill (teacher vs student hidden dim)",
            (teacher.config.hidden_dim,),
            (student_init.config.hidden_dim,),
        )
    student = student_init.clone()
    groups = DISTILL_GROUPS[config.distill_target]
    if not config.distillation_enabled or not groups:
        logger.info("distillation skipped | target=%s | loss_mix=%s", config.distill_target, config.loss_mix)
        return student, TrainingHistory(phase="distill")
    if not samples:
        raise TrainingError("cannot distill on an empty training set")
    missing = [s.contract_id for s in samples if s.source is None]
    if missing:
        raise TrainingError(f"distillation needs source graphs; missing for {missing[:5]}")

    digest_before = params_digest(teacher)
    with ad.no_grad():
        cached = {s.contract_id: encode(s.source.graph, s.source.features, teacher) for s in samples if s.source}
    skipped = 0

    def loss(sample: PairedSample) -> Tensor:
        nonlocal skipped
        if sample.alignment.is_empty and config.loss_mix != "global_only":
            skipped += 1
        student_emb = encode(sample.bytecode.graph, sample.bytecode.features, student)
        return distill_loss(cached[sample.contract_id], student_emb, sample.alignment, loss_mix=config.loss_mix)

    history = _run_epochs(
        phase="distill",
        samples=samples,
        params=student,
        groups=groups,
        config=config,
        epochs=config.distill_epochs,
        seed=config.seed + 2,
        sample_loss=loss,
    )
    history.skipped_local = skipped
    digest_after = params_digest(teacher)
    if digest_after != digest_before:
        raise TrainingError("teacher parameters changed during distillation")
    history.teacher_digest = digest_after
    if skipped:
        logger.warning("local loss skipped for empty alignment | sample_epochs=%s", skipped)
    return student, history


def finetune(
    student: DagnParams,
    samples: Sequence[PairedSample],
    config: TrainConfig,
) -> tuple[DagnParams, TrainingHistory]:
    """只用字节码 CFG；student 全部参数组 + 分类头参与训练。"""

    if not samples:
        raise TrainingError("cannot finetune on an empty training set")
    model = student.clone()

    def loss(sample: PairedSample) -> Tensor:
        return supervised_loss(sample.bytecode, model, sample.onehot)

    history = _run_epochs(
        phase="finetune",
        samples=samples,
        params=model,
        groups=("encoder", "pooling", "head"),
        config=config,
        epochs=config.finetune_epochs,
        seed=config.seed + 3,
        sample_loss=loss,
    )
    return model, history


# ---------------------------------------------------------------------------
# 推理
# ---------------------------------------------------------------------------


def vulnerable_probability(graph_input: GraphInput, params: DagnParams) -> float:
    with ad.no_grad():
        emb = encode(graph_input.graph, graph_input.features, params)
        probs = predict(emb.graph_vector, params)
    return float(probs.data[0, 1])


def aggregate_scores(scores: Sequence[float]) -> float:
    """多个图（例如多个函数）的得分取最大值作为合约得分。"""

    if len(scores) == 0:
        raise TrainingError("no scores to aggregate")
    return float(max(scores))


def evaluate_model(
    params: DagnParams,
    samples: Sequence[PairedSample],
    *,
    modality: str = "bytecode",
) -> tuple[np.ndarray, np.ndarray]:
    """返回 (vulnerable 概率, 预测标签)。"""

    scores = []
    for sample in samples:
        graph_input = sample.bytecode if modality == "bytecode" else sample.source
        if graph_input is None:
            raise TrainingError(f"{sample.contract_id}: no {modality} graph")
        scores.append(vulnerable_probability(graph_input, params))
    arr = np.asarray(scores, dtype=np.float64)
    return arr, (arr >= 0.5).astype(np.int64)
