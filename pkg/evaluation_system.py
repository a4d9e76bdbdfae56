import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
from sklearn.metrics import accuracy_score, confusion_matrix
from sklearn.preprocessing import StandardScaler

from engine import autodiff as ad
from engine.augment import AugmentConfig, evaluation_views, worker_threads
from engine.datagen import alias_class
from engine.errors import ConfigError, EvaluationError, ProbeError, ShapeMismatchError
from engine.loss import cross_affinity_batch
from engine.rng import Rng

RETRIEVAL_KS = (1, 5, 10, 20)
DIRECTIONS = ("video_to_audio", "audio_to_video")
PROBE_MODALITIES = ("audio", "video", "concat")


@dataclass
class RetrievalResult:
    direction: str
    recalls: dict  # k -> R@k
    num_queries: int

    def to_rows(self):
        return [{"direction": self.direction, "k": k, "recall": r} for k, r in sorted(self.recalls.items())]


@dataclass
class ProbeConfig:
    epochs: int = 100
    lr: float = 0.1
    batch_size: int = 64
    seed: int = 0
    standardize: bool = True

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("probe exige epochs >= 1, batch_size >= 1 e lr > 0")
        return self


@dataclass
class ProbeResult:
    modality: str
    accuracy: float
    num_classes: int
    confusion: Optional[np.ndarray] = field(default=None, repr=False)

    def to_row(self):
        return {"modality": self.modality, "accuracy": self.accuracy, "num_classes": self.num_classes}


@dataclass
class AffinityReport:
    """Uma linha por (classe, velocidade): λ médio [vídeo orig, áudio acelerado] e [vídeo orig, áudio orig]"""
    table: pd.DataFrame

    COLUMNS = ("class", "speed", "alias", "mean_lambda_sped", "mean_lambda_orig")

    def aliased_mask(self):
        return (self.table["speed"] > 1) & (self.table["alias"] >= 0)

    def aliased_medians(self):
        """(mediana dos pares com alias, mediana dos demais) de mean_lambda_sped"""
        mask = self.aliased_mask()
        sped = self.table["mean_lambda_sped"]
        aliased = float(sped[mask].median()) if mask.any() else float("nan")
        others = float(sped[~mask].median()) if (~mask).any() else float("nan")
        return aliased, others


# ---------------------------------------------------------------------------
# Extração de embeddings
# ---------------------------------------------------------------------------

def extract_embeddings(model, dataset, augment_config=None, chunk_size=256, threads=None):
    """y e z das vistas de velocidade 1 (offset 0) de cada clipe, na ordem do dataset"""
    augment_config = augment_config or AugmentConfig()
    threads = worker_threads() if threads is None else threads
    chunks = [dataset.clips[start: start + chunk_size]
              for start in range(0, len(dataset), chunk_size)]

    def embed(clips):
        batch = model.embed([evaluation_views(clip, augment_config) for clip in clips])
        return {name: getattr(batch, name).data[:, 0, :] for name in ("Y_a", "Y_v", "Z_a", "Z_v")}

    if threads <= 1:
        parts = [embed(c) for c in chunks]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(embed, chunks))
    if not parts:
        raise EvaluationError("dataset vazio: nada para embutir")
    return {name: np.concatenate([p[name] for p in parts]) for name in parts[0]}


# ---------------------------------------------------------------------------
# Recuperação cruzada
# ---------------------------------------------------------------------------

def _unit_rows(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def retrieval_ranks(queries, gallery):
    """Posição (0-based) do item correto; empates vão para o menor índice da galeria"""
    queries = np.asarray(queries, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if queries.ndim != 2 or queries.shape != gallery.shape:
        raise ShapeMismatchError("retrieval", queries.shape, gallery.shape)
    if len(queries) == 0:
        raise EvaluationError("conjunto de teste vazio")
    sims = _unit_rows(queries) @ _unit_rows(gallery).T
    true = np.diag(sims)[:, None]
    index = np.arange(len(gallery))
    ahead = (sims > true).sum(axis=1)
    tied_before = ((sims == true) & (index[None, :] < index[:, None])).sum(axis=1)
    return ahead + tied_before


def recall_at_k(queries, gallery, ks=RETRIEVAL_KS):
    ranks = retrieval_ranks(queries, gallery)
    return {int(k): float(np.mean(ranks < k)) for k in ks}


def retrieval(model, test_dataset, ks=RETRIEVAL_KS, augment_config=None, embeddings=None):
    """R@k nas duas direções usando z das vistas de velocidade 1"""
    if len(test_dataset) == 0:
        raise EvaluationError("conjunto de teste vazio")
    if embeddings is None:
        embeddings = extract_embeddings(model, test_dataset, augment_config)
    z_a, z_v = embeddings["Z_a"], embeddings["Z_v"]
    return [
        RetrievalResult("video_to_audio", recall_at_k(z_v, z_a, ks), len(z_v)),
        RetrievalResult("audio_to_video", recall_at_k(z_a, z_v, ks), len(z_a)),
    ]


# ---------------------------------------------------------------------------
# Probe linear
# ---------------------------------------------------------------------------

def _probe_loss(weights, bias, features, labels):
    logits = ad.add(ad.matmul(features, ad.transpose(weights)), bias)
    log_prob = ad.log(ad.softmax(logits, axis=1))
    picked = ad.slice(log_prob, (np.arange(len(labels)), labels))
    return ad.scale(ad.mean(picked), -1.0)


def train_probe(train_features, train_labels, test_features, test_labels, num_classes, config=None):
    """Regressão logística multinomial por SGD em minibatches; retorna (acurácia, confusão)"""
    config = (config or ProbeConfig()).validate()
    train_labels = np.asarray(train_labels, dtype=int)
    test_labels = np.asarray(test_labels, dtype=int)
    missing = sorted(set(range(num_classes)) - set(train_labels.tolist()))
    if missing:
        raise ProbeError(f"classe {missing[0]} ausente do split de treino")

    train_x = np.asarray(train_features, dtype=np.float64)
    test_x = np.asarray(test_features, dtype=np.float64)
    if config.standardize:
        scaler = StandardScaler().fit(train_x)
        train_x, test_x = scaler.transform(train_x), scaler.transform(test_x)

    weights = np.zeros((num_classes, train_x.shape[1]))
    bias = np.zeros(num_classes)
    for epoch in range(config.epochs):
        order = Rng.derive(config.seed, "probe", epoch).permutation(len(train_x))
        for start in range(0, len(order), config.batch_size):
            idx = order[start: start + config.batch_size]
            tape = ad.Tape()
            w, b = tape.leaf(weights), tape.leaf(bias)
            loss = _probe_loss(w, b, ad.constant(train_x[idx]), train_labels[idx])
            grads = ad.backward(tape, loss)
            weights = weights - config.lr * grads[w.node_id]
            bias = bias - config.lr * grads[b.node_id]

    predicted = np.argmax(test_x @ weights.T + bias, axis=1)
    accuracy = float(accuracy_score(test_labels, predicted))
    confusion = confusion_matrix(test_labels, predicted, labels=list(range(num_classes)))
    return accuracy, confusion


def linear_probe(model, train_dataset, test_dataset, probe_config=None, augment_config=None,
                 modalities=PROBE_MODALITIES):
    """Probe sobre y congelado por modalidade (áudio, vídeo e concatenação)"""
    train_emb = extract_embeddings(model, train_dataset, augment_config)
    test_emb = extract_embeddings(model, test_dataset, augment_config)
    num_classes = train_dataset.spec.num_classes

    def features(emb, modality):
        if modality == "audio":
            return emb["Y_a"]
        if modality == "video":
            return emb["Y_v"]
        return np.concatenate([emb["Y_a"], emb["Y_v"]], axis=1)

    results = []
    for modality in modalities:
        accuracy, confusion = train_probe(
            features(train_emb, modality), train_dataset.labels(),
            features(test_emb, modality), test_dataset.labels(),
            num_classes, probe_config,
        )
        results.append(ProbeResult(modality, accuracy, num_classes, confusion))
    return results


# ---------------------------------------------------------------------------
# Relatório de afinidade
# ---------------------------------------------------------------------------

def affinity_report(model, dataset, speeds, augment_config=None):
    """λ médio por classe com áudio forçado na velocidade s e vídeo na velocidade 1"""
    augment_config = augment_config or AugmentConfig()
    for s in speeds:
        if not 1 <= s <= augment_config.max_speed:
            raise ConfigError(
                f"velocidade {s} fora do intervalo treinado [1, {augment_config.max_speed}]"
            )
    if len(dataset) == 0:
        raise EvaluationError("dataset vazio")

    params = model.constants()
    labels = np.array(dataset.labels())
    frames = []
    for s in speeds:
        views = [evaluation_views(clip, augment_config, audio_speed=s, video_speed=1)
                 for clip in dataset.clips]
        batch = model.embed(views)
        lam = cross_affinity_batch(batch.Y_a, batch.Y_v, model.mapping, params).data
        frames.append(pd.DataFrame({
            "class": labels,
            "speed": s,
            "mean_lambda_sped": lam[:, 1, 0],
            "mean_lambda_orig": lam[:, 0, 0],
        }))

    table = (pd.concat(frames)
             .groupby(["class", "speed"], as_index=False)
             .mean()
             .sort_values(["class", "speed"])
             .reset_index(drop=True))
    aliases = [alias_class(int(c), int(s), dataset.spec) for c, s in zip(table["class"], table["speed"])]
    table.insert(2, "alias", [-1 if a is None else a for a in aliases])
    return AffinityReport(table[list(AffinityReport.COLUMNS)])


# ---------------------------------------------------------------------------
# Orquestração, CSVs e relatórios visuais
# ---------------------------------------------------------------------------

class SvaclrEvaluationSystem:
    """
    Avaliação de um modelo pré-treinado: recuperação cruzada, probe linear e afinidade
    """

    def __init__(self, model, augment_config=None, probe_config=None,
                 output_dir="evaluation_results", verbose=True):
        self.model = model
        self.augment_config = augment_config or AugmentConfig()
        self.probe_config = probe_config or ProbeConfig()
        self.output_dir = Path(output_dir)
        self.verbose = verbose

    def _log(self, message):
        if self.verbose:
            print(message)

    def evaluate_retrieval(self, test_dataset, ks=RETRIEVAL_KS):
        self._log("=== RECUPERAÇÃO ÁUDIO-VÍDEO ===")
        results = retrieval(self.model, test_dataset, ks, self.augment_config)
        for result in results:
            recalls = "  ".join(f"R@{k}={r:.3f}" for k, r in sorted(result.recalls.items()))
            self._log(f"📊 {result.direction} ({result.num_queries} consultas): {recalls}")
        return results

    def evaluate_probe(self, train_dataset, test_dataset):
        self._log("=== PROBE LINEAR ===")
        results = linear_probe(self.model, train_dataset, test_dataset,
                               self.probe_config, self.augment_config)
        for result in results:
            self._log(f"📊 {result.modality}: acurácia {result.accuracy:.3f} "
                      f"({result.num_classes} classes)")
        return results

    def evaluate_affinity(self, dataset, speeds=None):
        self._log("=== AFINIDADE CRUZADA ===")
        speeds = list(speeds) if speeds is not None else self.augment_config.speeds
        report = affinity_report(self.model, dataset, speeds, self.augment_config)
        aliased, others = report.aliased_medians()
        self._log(f"📊 mediana λ[v orig, a acelerado]: com alias {aliased:.4f} | demais {others:.4f}")
        return report

    def _write_csv(self, frame, name):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        frame.to_csv(path, index=False)
        self._log(f"💾 {name} salvo em: {path}")
        return path

    def save_retrieval(self, results, name="retrieval.csv"):
        rows = [row for result in results for row in result.to_rows()]
        return self._write_csv(pd.DataFrame(rows, columns=["direction", "k", "recall"]), name)

    def save_probe(self, results, name="probe.csv"):
        rows = [result.to_row() for result in results]
        return self._write_csv(pd.DataFrame(rows, columns=["modality", "accuracy", "num_classes"]), name)

    def save_affinity(self, report, name="affinity.csv"):
        return self._write_csv(report.table, name)

    def generate_evaluation_report(self, retrieval_results=None, probe_results=None, output_path=None):
        """Curvas R@k por direção, acurácias do probe e matriz de confusão (concat)"""
        if not retrieval_results and not probe_results:
            print("Nenhuma métrica disponível para gerar relatório")
            return None

        fig, axes = plt.subplots(1, 3, figsize=(18, 5))
        fig.suptitle("Relatório de Avaliação SvaCLR", fontsize=16, fontweight="bold")

        ax1 = axes[0]
        for result in retrieval_results or []:
            ks = sorted(result.recalls)
            ax1.plot(ks, [result.recalls[k] for k in ks], marker="o", label=result.direction)
        ax1.set_title("Recuperação R@k")
        ax1.set_xlabel("k")
        ax1.set_ylabel("Recall")
        ax1.set_ylim(0, 1.05)
        if retrieval_results:
            ax1.legend()

        ax2 = axes[1]
        if probe_results:
            names = [r.modality for r in probe_results]
            values = [r.accuracy for r in probe_results]
            bars = ax2.bar(names, values, color=["#2E86AB", "#A23B72", "#F18F01"][:len(names)])
            for bar, value in zip(bars, values):
                ax2.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.01,
                         f"{value:.3f}", ha="center", va="bottom")
            ax2.axhline(1.0 / probe_results[0].num_classes, color="gray", linestyle="--", label="acaso")
            ax2.legend()
        ax2.set_title("Acurácia do probe linear")
        ax2.set_ylim(0, 1.05)

        ax3 = axes[2]
        with_confusion = [r for r in probe_results or [] if r.confusion is not None]
        if with_confusion:
            sns.heatmap(with_confusion[-1].confusion, annot=True, fmt="d", cmap="Blues", ax=ax3)
            ax3.set_title(f"Matriz de confusão ({with_confusion[-1].modality})")
            ax3.set_xlabel("Predito")
            ax3.set_ylabel("Real")

        plt.tight_layout()
        output_path = Path(output_path or self.output_dir / "evaluation_report.png")
        output_path.parent.mkdir(parents=True, exist_ok=True)
        plt.savefig(output_path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        self._log(f"Relatório salvo em: {output_path}")
        return output_path

    def generate_affinity_report(self, report, output_path=None):
        pivot = report.table.pivot(index="class", columns="speed", values="mean_lambda_sped")
        fig, ax = plt.subplots(figsize=(8, 6))
        sns.heatmap(pivot, annot=True, fmt=".3f", cmap="viridis", ax=ax)
        ax.set_title("λ médio [vídeo original, áudio acelerado]")
        ax.set_xlabel("Velocidade do áudio")
        ax.set_ylabel("Classe")
        output_path = Path(output_path or self.output_dir / "affinity_report.png")
        output_path.parent.mkdir(parents=True, exist_ok=True)
        plt.savefig(output_path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        self._log(f"Relatório salvo em: {output_path}")
        return output_path


def generate_training_report(metrics, output_path):
    """Loss, taxa de aprendizado e λ médio por par de vistas a partir do metrics.jsonl"""
    if not metrics:
        print("Nenhuma métrica de treino para o relatório")
        return None
    frame = pd.DataFrame(metrics)
    fig, axes = plt.subplots(1, 3, figsize=(18, 5))
    fig.suptitle("Pré-treino SvaCLR", fontsize=16, fontweight="bold")

    axes[0].plot(frame["step"], frame["loss"], color="#2E86AB")
    axes[0].set_title("Loss por passo")
    axes[0].set_xlabel("Passo")

    axes[1].plot(frame["step"], frame["lr"], color="#F18F01")
    axes[1].set_title("Taxa de aprendizado")
    axes[1].set_xlabel("Passo")

    lambdas = [np.array(m) for m in frame["mean_lambda"] if m is not None]
    if lambdas:
        sns.heatmap(np.mean(lambdas, axis=0), annot=True, fmt=".3f", cmap="Blues", ax=axes[2],
                    xticklabels=["vídeo orig", "vídeo acel."],
                    yticklabels=["áudio orig", "áudio acel."])
        axes[2].set_title("λ médio no treino")
    else:
        axes[2].axis("off")

    plt.tight_layout()
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    print(f"Relatório salvo em: {output_path}")
    return output_path


def main():
    from database.checkpoint_store import read_checkpoint
    from database.dataset_store import read_dataset

    parser = argparse.ArgumentParser(description="Avaliação SvaCLR de um checkpoint")
    parser.add_argument("--checkpoint", required=True, help="Arquivo .svck")
    parser.add_argument("--data", default="data", help="Diretório com train.svac e test.svac")
    parser.add_argument("--out", default="evaluation_results", help="Diretório de saída")
    parser.add_argument("--generate-report", action="store_true", help="Gerar relatório visual")
    args = parser.parse_args()

    model = read_checkpoint(args.checkpoint)
    train = read_dataset(Path(args.data) / "train.svac")
    test = read_dataset(Path(args.data) / "test.svac")
    evaluator = SvaclrEvaluationSystem(model, output_dir=args.out)
    retrieval_results = evaluator.evaluate_retrieval(test)
    probe_results = evaluator.evaluate_probe(train, test)
    evaluator.save_retrieval(retrieval_results)
    evaluator.save_probe(probe_results)
    if args.generate_report:
        evaluator.generate_evaluation_report(retrieval_results, probe_results)


if __name__ == "__main__":
    main()
