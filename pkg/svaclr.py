#!/usr/bin/env python3
"""
SvaCLR: pré-treino contrastivo áudio-vídeo com co-aumento de velocidade

Subcomandos:
    generate   gera train.svac / test.svac sintéticos
    pretrain   treina e grava checkpoint_final.svck + metrics.jsonl
    eval       recuperação (retrieval.csv) e probe linear (probe.csv)
    probe      apenas o probe linear
    affinity   relatório de afinidade por classe e velocidade (affinity.csv)
    gradcheck  diferenças finitas contra a fita de autodiff

Códigos de saída: 2 configuração, 3 E/S e formato de dataset,
4 loss não finita, 5 checkpoint.
"""

import argparse
import sys
from pathlib import Path

from database.checkpoint_store import read_checkpoint, write_checkpoint
from database.dataset_store import read_dataset, write_dataset
from engine.augment import worker_threads
from engine.config import load_config, save_resolved_config
from engine.datagen import SPLITS, generate_dataset
from engine.errors import (
    CheckpointFormatError,
    ConfigError,
    DatasetFormatError,
    EvaluationError,
    NonFiniteLossError,
    ProbeError,
    SvaclrError,
)
from engine.loss import gradient_check_suite
from engine.training import VARIANTS, pretrain, read_metrics
from evaluation_system import SvaclrEvaluationSystem, generate_training_report

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NON_FINITE = 4
EXIT_CHECKPOINT = 5

GRADCHECK_TOLERANCE = 1e-6
FINAL_CHECKPOINT = "checkpoint_final.svck"


def parse_arguments(argv=None):
    """Parse command line arguments"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="Arquivo JSON de configuração")
    common.add_argument("--seed", type=int, default=None, help="Seed da execução")
    common.add_argument("--variant", choices=VARIANTS, default=None, help="Variante de treino")
    common.add_argument("--max-speed", type=int, default=None, help="Maior velocidade S")
    common.add_argument("--min-speed", type=int, default=None, help="Menor velocidade")
    common.add_argument("--out", type=str, default=None, help="Diretório de saída")
    common.add_argument("--data", type=str, default="data",
                        help="Diretório com train.svac e test.svac")
    common.add_argument("--checkpoint", type=str, default=None,
                        help="Checkpoint .svck (padrão: <out>/checkpoint_final.svck)")
    common.add_argument("--generate-report", action="store_true",
                        help="Gera relatório visual (PNG)")

    parser = argparse.ArgumentParser(description="SvaCLR: contraste áudio-vídeo com co-aumento de velocidade")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("generate", parents=[common], help="Gera o corpus sintético")
    commands.add_parser("pretrain", parents=[common], help="Pré-treina o modelo")
    commands.add_parser("eval", parents=[common], help="Recuperação + probe linear")
    commands.add_parser("probe", parents=[common], help="Probe linear")
    affinity = commands.add_parser("affinity", parents=[common], help="Relatório de afinidade")
    affinity.add_argument("--speeds", type=int, nargs="+", default=None,
                          help="Velocidades do áudio (padrão: todas em [min, max])")
    gradcheck = commands.add_parser("gradcheck", parents=[common], help="Verificação de gradientes")
    gradcheck.add_argument("--instances", type=int, default=20, help="Instâncias sorteadas")
    return parser.parse_args(argv)


def _load(args):
    return load_config(
        args.config,
        seed=args.seed,
        variant=args.variant,
        max_speed=args.max_speed,
        min_speed=args.min_speed,
        out=args.out,
    )


def _read_split(args, config, split):
    return read_dataset(Path(args.data) / f"{split}.svac", split=split, base_spec=config.dataset)


def _read_model(args, config):
    path = Path(args.checkpoint) if args.checkpoint else Path(config.output_dir) / FINAL_CHECKPOINT
    model = read_checkpoint(path)
    print(f"✅ Checkpoint carregado: {path} ({model.parameter_count()} parâmetros)")
    return model


def _evaluator(config, model):
    return SvaclrEvaluationSystem(model, augment_config=config.augment, output_dir=config.output_dir)


def cmd_generate(args):
    config = _load(args)
    config.dataset.validate(max_speed=config.augment.max_speed)
    out_dir = Path(config.output_dir)
    print(f"\nGerando corpus sintético em {out_dir} "
          f"({config.dataset.num_classes} classes, seed {config.dataset.seed})")
    threads = worker_threads()
    for split in SPLITS:
        dataset = generate_dataset(config.dataset, split, threads=threads, verbose=True)
        path = write_dataset(dataset, out_dir / f"{split}.svac")
        print(f"💾 {split}: {len(dataset)} clipes em {path}")
    save_resolved_config(config, out_dir)
    return 0


def cmd_pretrain(args):
    config = _load(args)
    train = _read_split(args, config, "train")
    out_dir = Path(config.output_dir)
    save_resolved_config(config, out_dir)
    metrics_path = out_dir / "metrics.jsonl"
    model, metrics = pretrain(train, config.train, metrics_path=metrics_path, checkpoint_dir=out_dir)
    checkpoint = write_checkpoint(model, out_dir / FINAL_CHECKPOINT)

    print("\nResumo do pré-treino:")
    print("=" * 50)
    print(f"Variante: {config.train.variant}")
    print(f"Passos: {len(metrics)}")
    print(f"Loss final: {metrics[-1].loss:.4f}")
    print(f"Checkpoint: {checkpoint}")
    print(f"Métricas: {metrics_path}")
    if args.generate_report:
        generate_training_report(read_metrics(metrics_path), out_dir / "training_report.png")
    return 0


def cmd_eval(args):
    config = _load(args)
    model = _read_model(args, config)
    train = _read_split(args, config, "train")
    test = _read_split(args, config, "test")
    evaluator = _evaluator(config, model)
    retrieval_results = evaluator.evaluate_retrieval(test)
    probe_results = evaluator.evaluate_probe(train, test)
    evaluator.save_retrieval(retrieval_results)
    evaluator.save_probe(probe_results)
    save_resolved_config(config, config.output_dir)
    if args.generate_report:
        evaluator.generate_evaluation_report(retrieval_results, probe_results)
    return 0


def cmd_probe(args):
    config = _load(args)
    model = _read_model(args, config)
    evaluator = _evaluator(config, model)
    probe_results = evaluator.evaluate_probe(_read_split(args, config, "train"),
                                             _read_split(args, config, "test"))
    evaluator.save_probe(probe_results)
    save_resolved_config(config, config.output_dir)
    if args.generate_report:
        evaluator.generate_evaluation_report(probe_results=probe_results)
    return 0


def cmd_affinity(args):
    config = _load(args)
    speeds = args.speeds or config.augment.speeds
    over = [s for s in speeds if s > config.augment.max_speed or s < 1]
    if over:
        raise ConfigError(f"velocidade {over[0]} fora de [1, {config.augment.max_speed}]")
    model = _read_model(args, config)
    evaluator = _evaluator(config, model)
    report = evaluator.evaluate_affinity(_read_split(args, config, "test"), speeds)
    evaluator.save_affinity(report)
    save_resolved_config(config, config.output_dir)
    if args.generate_report:
        evaluator.generate_affinity_report(report)
    return 0


def cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else 0
    print(f"\nVerificação de gradientes (seed {seed}, {args.instances} instâncias)")
    print("=" * 50)
    errors = gradient_check_suite(seed=seed, instances=args.instances)
    failed = 0
    for name, error in errors.items():
        ok = error < GRADCHECK_TOLERANCE
        failed += not ok
        print(f"{'✅' if ok else '❌'} {name}: erro relativo máximo {error:.3e}")
    return 1 if failed else 0


COMMANDS = {
    "generate": cmd_generate,
    "pretrain": cmd_pretrain,
    "eval": cmd_eval,
    "probe": cmd_probe,
    "affinity": cmd_affinity,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    args = parse_arguments(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"\n❌ Erro de configuração: {e}")
        return EXIT_CONFIG
    except (DatasetFormatError, ProbeError, EvaluationError, OSError) as e:
        print(f"\n❌ Erro de dados/E-S: {e}")
        return EXIT_IO
    except NonFiniteLossError as e:
        print(f"\n❌ Treino abortado: {e}")
        return EXIT_NON_FINITE
    except CheckpointFormatError as e:
        print(f"\n❌ Checkpoint inválido: {e}")
        return EXIT_CHECKPOINT
    except SvaclrError as e:
        print(f"\n❌ Erro: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
