#!/usr/bin/env python3
"""
Demonstração da ablação do co-aumento de velocidade

Treina as três variantes (InfoNCE sem aumento, InfoNCE com velocidade e
SoftInfoNCE) sobre o mesmo corpus sintético com várias seeds e compara a
mediana do R@1 vídeo→áudio e da acurácia do probe linear no split de teste,
com o intervalo [mín, máx] entre seeds. Opcionalmente:
1. Escada de velocidades (S = 2, 4, 6) para o InfoNCE com velocidade
2. Estudo do mapeamento l(.) da afinidade (identidade, linear, não linear)
3. Verificação do deslocamento semântico via relatório de afinidade
"""

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from database.dataset_store import read_dataset
from engine.augment import worker_threads
from engine.config import load_config, save_resolved_config
from engine.datagen import generate_dataset
from engine.errors import SvaclrError
from engine.training import pretrain
from evaluation_system import affinity_report, linear_probe, retrieval

# (variante, S, mapeamento); None mantém o mapeamento do arquivo de configuração
ABLATION_ROWS = [
    ("infonce_noaug", 4, None),
    ("infonce_speed", 4, None),
    ("soft_infonce", 4, None),
]
SPEED_LADDER_ROWS = [
    ("infonce_noaug", 1, None),
    ("infonce_speed", 2, None),
    ("infonce_speed", 4, None),
    ("infonce_speed", 6, None),
    ("soft_infonce", 4, None),
]
MAPPING_STUDY_ROWS = [
    ("soft_infonce", 4, "identity"),
    ("soft_infonce", 4, "linear"),
    ("soft_infonce", 4, "nonlinear"),
]
SUMMARY_KEYS = ["variant", "max_speed", "mapping"]
MEDIAN_COLUMNS = ["final_loss", "r1_video_to_audio", "r1_audio_to_video", "probe_accuracy"]
SPREAD_COLUMNS = ["r1_video_to_audio", "probe_accuracy"]


def print_header(title):
    """Imprime um cabeçalho formatado"""
    print("\n" + "=" * 60)
    print(title.center(60))
    print("=" * 60)


def print_section(title):
    """Imprime uma seção formatada"""
    print(f"\n{'-' * 40}")
    print(f"📋 {title}")
    print(f"{'-' * 40}")


def load_corpus(args, config):
    """Usa train/test de --data se existirem; senão gera em memória"""
    data_dir = Path(args.data) if args.data else None
    if data_dir and (data_dir / "train.svac").exists() and (data_dir / "test.svac").exists():
        print(f"✅ Corpus lido de {data_dir}")
        return (read_dataset(data_dir / "train.svac", base_spec=config.dataset),
                read_dataset(data_dir / "test.svac", base_spec=config.dataset))
    print("Gerando corpus sintético em memória...")
    threads = worker_threads()
    return (generate_dataset(config.dataset, "train", threads=threads, verbose=True),
            generate_dataset(config.dataset, "test", threads=threads, verbose=True))


def run_configuration(args, train, test, variant, max_speed, seed, mapping=None):
    """Treina uma linha da tabela para uma seed; mede R@1 nas duas direções e o probe sobre y concatenado"""
    config = load_config(args.config, seed=seed, variant=variant,
                         max_speed=max(max_speed, 1))
    if mapping is not None:
        config.loss.mapping = mapping
    if args.epochs is not None:
        config.train.epochs = args.epochs
        config.train.warmup_epochs = min(config.train.warmup_epochs, args.epochs - 1)
    model, metrics = pretrain(train, config.train, verbose=False)
    by_direction = {r.direction: r for r in retrieval(model, test, augment_config=config.augment)}
    probe = linear_probe(model, train, test, augment_config=config.augment, modalities=("concat",))[0]
    row = {
        "variant": variant,
        "max_speed": max_speed,
        "mapping": config.loss.mapping,
        "seed": seed,
        "final_loss": metrics[-1].loss,
        "r1_video_to_audio": by_direction["video_to_audio"].recalls[1],
        "r1_audio_to_video": by_direction["audio_to_video"].recalls[1],
        "probe_accuracy": probe.accuracy,
    }
    print(f"  • {variant} S={max_speed} l={row['mapping']} seed={seed}: loss {row['final_loss']:.4f}, "
          f"R@1 v→a {row['r1_video_to_audio']:.3f}, a→v {row['r1_audio_to_video']:.3f}, "
          f"probe {row['probe_accuracy']:.3f}")
    return row, model, config


def run_ladder(args, train, test, rows, keep_models=False):
    records = []
    models = []
    for variant, max_speed, mapping in rows:
        print_section(f"{variant} (S={max_speed}{f', l={mapping}' if mapping else ''})")
        for seed in range(args.seeds):
            row, model, config = run_configuration(args, train, test, variant, max_speed, seed, mapping)
            records.append(row)
            if keep_models and variant == "soft_infonce":
                models.append((seed, model, config))
    return pd.DataFrame(records), models


def summarize(frame):
    """Mediana por linha e intervalo [mín, máx] entre seeds de R@1 v→a e do probe"""
    grouped = frame.groupby(SUMMARY_KEYS, sort=False)
    summary = grouped[MEDIAN_COLUMNS].median()
    spread = grouped[SPREAD_COLUMNS].agg(["min", "max"])
    spread.columns = [f"{column}_{stat}" for column, stat in spread.columns]
    summary = summary.join(spread)
    summary["seeds"] = grouped.size()
    summary = summary.reset_index()

    print_section("MEDIANAS POR LINHA [mín, máx]")
    for _, row in summary.iterrows():
        print(f"📊 {row['variant']:<14} S={int(row['max_speed'])} l={row['mapping']:<9}: "
              f"R@1 v→a {row['r1_video_to_audio']:.3f} "
              f"[{row['r1_video_to_audio_min']:.3f}, {row['r1_video_to_audio_max']:.3f}] | "
              f"a→v {row['r1_audio_to_video']:.3f} | "
              f"probe {row['probe_accuracy']:.3f} "
              f"[{row['probe_accuracy_min']:.3f}, {row['probe_accuracy_max']:.3f}]")
    return summary


def check_ablation_order(summary):
    """infonce_speed > infonce_noaug e soft_infonce >= infonce_speed (mediana R@1 v→a, S=4)"""
    r1 = {(r["variant"], int(r["max_speed"])): r["r1_video_to_audio"] for _, r in summary.iterrows()}
    noaug = r1.get(("infonce_noaug", 4), r1.get(("infonce_noaug", 1)))
    speed = r1[("infonce_speed", 4)]
    soft = r1[("soft_infonce", 4)]
    speed_helps = speed > noaug
    soft_helps = soft >= speed
    print(f"{'✅' if speed_helps else '❌'} velocidade > sem aumento: {speed:.3f} vs {noaug:.3f}")
    print(f"{'✅' if soft_helps else '❌'} SoftInfoNCE >= velocidade: {soft:.3f} vs {speed:.3f}")
    return speed_helps and soft_helps


def check_semantic_shift(models, test):
    """λ[v orig, a acelerado] menor nos pares (classe, s) com alias, em >= 4 de 5 seeds"""
    print_section("DESLOCAMENTO SEMÂNTICO")
    hits = 0
    reports = []
    for seed, model, config in models:
        report = affinity_report(model, test, config.augment.speeds, config.augment)
        aliased, others = report.aliased_medians()
        lower = aliased < others
        hits += lower
        reports.append(report.table.assign(seed=seed))
        print(f"{'✅' if lower else '⚠️'} seed {seed}: com alias {aliased:.4f} | demais {others:.4f}")
    needed = max(1, len(models) - 1)
    passed = hits >= needed
    print(f"{'✅' if passed else '❌'} {hits}/{len(models)} seeds com λ menor nos pares com alias")
    return passed, pd.concat(reports) if reports else pd.DataFrame()


def report_mapping_study(summary):
    """Ordena os mapeamentos pela mediana do R@1 v→a"""
    print_section("ESTUDO DO MAPEAMENTO")
    ranked = summary.sort_values("r1_video_to_audio", ascending=False, kind="stable")
    for position, (_, row) in enumerate(ranked.iterrows(), start=1):
        print(f"{position}. {row['mapping']:<9} R@1 v→a {row['r1_video_to_audio']:.3f} | "
              f"probe {row['probe_accuracy']:.3f}")
    return list(ranked["mapping"])


def plot_ladder(summary, output_path, title):
    labels = [f"{v}\nS={int(s)}\nl={m}" if v == "soft_infonce" else f"{v}\nS={int(s)}"
              for v, s, m in zip(summary["variant"], summary["max_speed"], summary["mapping"])]
    median = summary["r1_video_to_audio"]
    fig, ax = plt.subplots(figsize=(10, 5))
    sns.barplot(x=labels, y=median, color="#2E86AB", ax=ax)
    ax.errorbar(range(len(labels)), median,
                yerr=[median - summary["r1_video_to_audio_min"], summary["r1_video_to_audio_max"] - median],
                fmt="none", ecolor="black", capsize=4)
    ax.set_title(title)
    ax.set_ylabel("Mediana R@1 (vídeo→áudio)")
    ax.set_ylim(0, 1.05)
    plt.tight_layout()
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    print(f"Gráfico salvo em: {output_path}")


def parse_arguments(argv=None):
    parser = argparse.ArgumentParser(description="Ablação do co-aumento de velocidade")
    parser.add_argument("--config", type=str, default=None, help="Arquivo JSON de configuração")
    parser.add_argument("--data", type=str, default="data", help="Diretório com train/test.svac")
    parser.add_argument("--out", type=str, default="ablation_results", help="Diretório de saída")
    parser.add_argument("--seeds", type=int, default=5, help="Número de seeds por linha")
    parser.add_argument("--epochs", type=int, default=None, help="Sobrepõe train.epochs")
    rows = parser.add_mutually_exclusive_group()
    rows.add_argument("--speed-ladder", action="store_true", help="Escada S = 2, 4, 6")
    rows.add_argument("--mapping-study", action="store_true",
                      help="SoftInfoNCE S=4 com mapeamento identidade, linear e não linear")
    parser.add_argument("--skip-affinity", action="store_true",
                        help="Não verifica o deslocamento semântico")
    return parser.parse_args(argv)


def select_rows(args):
    """(linhas, nome dos arquivos, título do gráfico)"""
    if args.speed_ladder:
        return SPEED_LADDER_ROWS, "speed_ladder", "Escada de velocidades"
    if args.mapping_study:
        return MAPPING_STUDY_ROWS, "mapping_study", "Mapeamento da afinidade (SoftInfoNCE, S=4)"
    return ABLATION_ROWS, "ablation", "Ablação (S=4)"


def main(argv=None):
    """Função principal da demonstração"""
    args = parse_arguments(argv)
    print_header("SVACLR - ABLAÇÃO DO CO-AUMENTO DE VELOCIDADE")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        base = load_config(args.config)
        save_resolved_config(base, out_dir)
        train, test = load_corpus(args, base)

        rows, name, title = select_rows(args)
        frame, models = run_ladder(args, train, test, rows,
                                   keep_models=not args.skip_affinity)
        frame.to_csv(out_dir / f"{name}_runs.csv", index=False)
        summary = summarize(frame)
        summary.to_csv(out_dir / f"{name}_summary.csv", index=False)
        plot_ladder(summary, out_dir / f"{name}.png", title)

        if args.mapping_study:
            report_mapping_study(summary)
            ok = True
        else:
            ok = check_ablation_order(summary)
        if models:
            shift_ok, tables = check_semantic_shift(models, test)
            tables.to_csv(out_dir / "affinity_by_seed.csv", index=False)
            ok = ok and shift_ok
    except SvaclrError as e:
        print(f"❌ Erro durante demonstração: {e}")
        return 1

    print(f"\n{'✅ Demonstração concluída!' if ok else '⚠️ Demonstração concluída com ordens não atendidas'}")
    print(f"Resultados em: {out_dir}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
