/**
 * Sidecar entry point.
 *
 * Usage: main.js --metrics m1,m2 [--mode echo|loopback|neural]
 *                [--const N] [--model-config PATH]
 *
 * Modes: loopback (default) computes the engine's reference metrics in
 * process; echo answers every request with a constant; neural routes to
 * providers from --model-config, loading each model lazily.
 */

import { METRIC_NAMES, MetricName, scoreMetric } from './metrics.js';
import { NeuralRegistry } from './neural.js';
import { readRfv1 } from './rfv1.js';
import { serve } from './protocol.js';

interface Args {
  metrics: MetricName[];
  mode: 'echo' | 'loopback' | 'neural';
  constant: number;
  modelConfig?: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { metrics: [], mode: 'loopback', constant: 0 };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`missing value for ${flag}`);
      return v;
    };
    switch (flag) {
      case '--metrics': {
        for (const name of value().split(',')) {
          if (!METRIC_NAMES.includes(name as MetricName)) {
            throw new Error(`unknown metric ${JSON.stringify(name)}`);
          }
          args.metrics.push(name as MetricName);
        }
        break;
      }
      case '--mode': {
        const mode = value();
        if (mode !== 'echo' && mode !== 'loopback' && mode !== 'neural') {
          throw new Error(`unknown mode ${JSON.stringify(mode)}`);
        }
        args.mode = mode;
        break;
      }
      case '--const':
        args.constant = Number(value());
        break;
      case '--model-config':
        args.modelConfig = value();
        break;
      default:
        throw new Error(`unknown flag ${JSON.stringify(flag)}`);
    }
  }
  if (args.metrics.length === 0) {
    throw new Error('--metrics is required (comma-separated metric names)');
  }
  if (args.mode === 'neural' && !args.modelConfig) {
    throw new Error('--mode neural requires --model-config');
  }
  return args;
}

function main(): void {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (err) {
    console.error(`sidecar: ${err instanceof Error ? err.message : err}`);
    process.exit(2);
  }

  const neural = args.modelConfig ? new NeuralRegistry(args.modelConfig) : null;
  serve(args.metrics, (metric, rfv1Path) => {
    if (args.mode === 'echo') return args.constant;
    if (args.mode === 'neural') return neural!.score(metric, rfv1Path);
    return scoreMetric(metric, readRfv1(rfv1Path));
  });
  console.error(`sidecar serving ${args.metrics.join(',')} in ${args.mode} mode`);
}

main();
