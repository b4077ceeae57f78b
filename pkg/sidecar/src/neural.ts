/**
 * Neural scorer providers, loaded lazily per metric from a model config.
 *
 * The config is a JSON file mapping metric name -> provider module path.
 * A provider module default-exports `(rfv1Path: string) => Promise<number>`.
 * Nothing is loaded until the first request for that metric arrives, so a
 * clarity-only sidecar never touches embedding weights.
 */

import { readFileSync } from 'node:fs';
import { pathToFileURL } from 'node:url';

import { MetricName } from './metrics.js';

type Provider = (rfv1Path: string) => Promise<number>;

export class NeuralRegistry {
  private providers = new Map<MetricName, Provider>();
  private modulePaths: Record<string, string>;

  constructor(modelConfigPath: string) {
    this.modulePaths = JSON.parse(readFileSync(modelConfigPath, 'utf-8'));
  }

  async score(metric: MetricName, rfv1Path: string): Promise<number> {
    let provider = this.providers.get(metric);
    if (!provider) {
      const modulePath = this.modulePaths[metric];
      if (!modulePath) {
        throw new Error(
          `no neural provider configured for ${metric}; ` +
            'add it to the model config or use --mode loopback',
        );
      }
      const loaded = await import(pathToFileURL(modulePath).href);
      if (typeof loaded.default !== 'function') {
        throw new Error(`provider module ${modulePath} has no default export function`);
      }
      provider = loaded.default as Provider;
      this.providers.set(metric, provider);
    }
    const value = await provider(rfv1Path);
    if (typeof value !== 'number' || !Number.isFinite(value)) {
      throw new Error(`provider for ${metric} returned a non-finite score`);
    }
    return value;
  }
}
